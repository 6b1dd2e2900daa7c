use std::fmt::Write as _;

use serde::Serialize;

use crate::args::Format;

/// One value in the flat `scheme, macro_size, role, metric, value` layout.
#[derive(Debug, Clone)]
pub struct Record {
    pub scheme: String,
    pub macro_size: Option<usize>,
    pub role: String,
    pub metric: &'static str,
    pub value: f64,
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

pub fn csv(records: &[Record]) -> String {
    let mut s = String::from("scheme,macro_size,role,metric,value\n");
    for r in records {
        let ms = r.macro_size.map(|m| m.to_string()).unwrap_or_default();
        writeln!(s, "{},{},{},{},{}", r.scheme, ms, r.role, r.metric, fmt_value(r.value)).unwrap();
    }
    s
}

pub fn table(records: &[Record]) -> String {
    let rows: Vec<[String; 5]> = records
        .iter()
        .map(|r| {
            [
                r.scheme.clone(),
                r.macro_size.map(|m| m.to_string()).unwrap_or_else(|| "-".into()),
                r.role.clone(),
                r.metric.to_string(),
                if r.value.is_finite() { format!("{:.6}", r.value) } else { fmt_value(r.value) },
            ]
        })
        .collect();
    let head = ["scheme", "macro", "role", "metric", "value"];
    let mut w = head.map(str::len);
    for row in &rows {
        for (w, c) in w.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, cells: [&str; 5]| {
        let parts: Vec<String> = cells.iter().zip(w).map(|(c, w)| format!("{c:<w$}")).collect();
        writeln!(s, "{}", parts.join("  ").trim_end()).unwrap();
    };
    line(&mut s, head);
    for row in &rows {
        line(&mut s, [&row[0], &row[1], &row[2], &row[3], &row[4]]);
    }
    s
}

/// Renders `records` for table/csv and `json` for json.
pub fn render(format: Format, records: &[Record], json: &impl Serialize) -> String {
    match format {
        Format::Table => table(records),
        Format::Csv => csv(records),
        Format::Json => serde_json::to_string_pretty(json).expect("reports serialize") + "\n",
    }
}
