use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use mxscale::gemm::max_ulp_divergence;
use mxscale::tensorio::{load_quant, load_tensor, load_tensor_with, save_quant, save_tensor, LoadOptions, SectionSizes};
use mxscale::{
    ablation_sweep, build_error_lut, dequantize_tensor, flush_to_zero_rate, generate_tensor, matmul_quantized,
    matmul_reference, mean_qsnr, qsnr_matmul, qsnr_tensor, quantize_tensor, roofline_overhead, CandidateSet,
    GeneratorSpec, QsnrReport, SchemeConfig, SweepConfig, Tensor, TileConfig,
};

use crate::args::*;
use crate::output::{render, Record};

/// A flag combination that cannot be run.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Usage(pub String);

/// `--verify` found a mismatch.
#[derive(Debug, thiserror::Error)]
#[error("quantized product diverges from the oracle by {0} ulp")]
pub struct VerifyFailed(pub u64);

fn macro_of(cfg: &SchemeConfig) -> Option<usize> {
    cfg.variant.is_mbs().then_some(cfg.macro_size)
}

fn rec(cfg: &SchemeConfig, role: &str, metric: &'static str, value: f64) -> Record {
    Record { scheme: cfg.label(), macro_size: macro_of(cfg), role: role.into(), metric, value }
}

fn emit(out: &mut impl Write, text: String) -> Result<()> {
    out.write_all(text.as_bytes()).context("writing report")
}

fn validated(cfg: SchemeConfig) -> Result<SchemeConfig> {
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn gen(a: &GenArgs, format: Format, out: &mut impl Write) -> Result<()> {
    let spec = GeneratorSpec::new(a.dist.distribution(), a.shape.0, a.shape.1, a.seed);
    spec.validate().map_err(|e| Usage(e.to_string()))?;
    let t = generate_tensor(&spec)?;
    save_tensor(&a.out, &t)?;
    #[derive(Serialize)]
    struct Gen<'a> {
        path: &'a Path,
        shape: [usize; 2],
        seed: u64,
        abs_max: f32,
    }
    let j = Gen { path: &a.out, shape: [t.rows(), t.cols()], seed: a.seed, abs_max: t.abs_max() };
    let records = [Record {
        scheme: "-".into(),
        macro_size: None,
        role: "tensor".into(),
        metric: "abs_max",
        value: t.abs_max() as f64,
    }];
    emit(out, render(format, &records, &j))
}

pub fn quantize(a: &QuantizeArgs, format: Format, out: &mut impl Write) -> Result<()> {
    let cfg = validated(a.scheme_args.config(a.scheme))?;
    let t = load_tensor_with(&a.input, LoadOptions { allow_non_finite: a.allow_non_finite })?;
    let q = quantize_tensor(&t, &cfg)?;
    save_quant(&a.out, &q)?;
    let sizes = SectionSizes::of(&q);
    let report = qsnr_tensor(&t, &dequantize_tensor(&q)?)?;
    #[derive(Serialize)]
    struct Quant {
        scheme: String,
        macro_size: Option<usize>,
        bytes: usize,
        bits_per_element: f64,
        #[serde(flatten)]
        report: QsnrReport,
    }
    let bpe = sizes.bits_per_element(t.len());
    let records = vec![
        rec(&cfg, "tensor", "bytes", sizes.total() as f64),
        rec(&cfg, "tensor", "bits_per_element", bpe),
        rec(&cfg, "tensor", "qsnr_db", report.qsnr_db),
    ];
    let j = Quant { scheme: cfg.label(), macro_size: macro_of(&cfg), bytes: sizes.total(), bits_per_element: bpe, report };
    emit(out, render(format, &records, &j))
}

pub fn dequantize(a: &DequantizeArgs, format: Format, out: &mut impl Write) -> Result<()> {
    let q = load_quant(&a.input)?;
    let t = dequantize_tensor(&q)?;
    save_tensor(&a.out, &t)?;
    #[derive(Serialize)]
    struct Deq<'a> {
        path: &'a Path,
        variant: String,
        shape: [usize; 2],
    }
    let records = [Record {
        scheme: q.variant().to_string(),
        macro_size: q.macro_size().filter(|_| q.variant().is_mbs()),
        role: "tensor".into(),
        metric: "elements",
        value: t.len() as f64,
    }];
    let j = Deq { path: &a.out, variant: q.variant().to_string(), shape: [t.rows(), t.cols()] };
    emit(out, render(format, &records, &j))
}

#[derive(Serialize)]
struct SchemeReport {
    scheme: String,
    macro_size: Option<usize>,
    #[serde(flatten)]
    report: QsnrReport,
}

pub fn qsnr(a: &QsnrArgs, format: Format, out: &mut impl Write) -> Result<()> {
    let reference = a.reference.as_ref().map(load_tensor).transpose()?;
    if a.n == 0 {
        return Err(Usage("--n must be at least 1".into()).into());
    }
    let spec = GeneratorSpec::new(a.dist.distribution(), a.shape.0, a.shape.1, a.seed);
    let mut records = Vec::new();
    let mut reports = Vec::new();
    for &v in &a.scheme {
        let cfg = validated(a.scheme_args.config(v))?;
        let report = match &reference {
            Some(t) => {
                let q = quantize_tensor(t, &cfg)?;
                let mut r = qsnr_tensor(t, &dequantize_tensor(&q)?)?;
                r.flush_to_zero_rate = Some(flush_to_zero_rate(t, &q)?);
                r
            }
            None => mean_qsnr(&spec, a.n, &cfg)?,
        };
        records.push(rec(&cfg, "tensor", "qsnr_db", report.qsnr_db));
        records.push(rec(&cfg, "tensor", "mse", report.mse));
        if let Some(f) = report.flush_to_zero_rate {
            records.push(rec(&cfg, "tensor", "flush_to_zero_rate", f));
        }
        reports.push(SchemeReport { scheme: cfg.label(), macro_size: macro_of(&cfg), report });
    }
    emit(out, render(format, &records, &reports))
}

pub fn sweep(a: &SweepArgs, format: Format, out: &mut impl Write) -> Result<()> {
    let base = SchemeArgs { macro_size: 128, mbs_mode: a.mbs_mode, block_size: None };
    let schemes = a.schemes.iter().map(|&v| base.config(v)).collect();
    let cfg = SweepConfig {
        activation: GeneratorSpec::activation_like(a.shape.0, a.shape.1, a.seed),
        weight: GeneratorSpec::weight_like(a.weight_rows, a.shape.1, a.seed.wrapping_add(1 << 32)),
        macro_sizes: a.macro_sizes.clone(),
        schemes,
        n: a.n,
    };
    let result = ablation_sweep(&cfg).map_err(|e| match e {
        mxscale::Error::Config(m) => anyhow::Error::new(Usage(m)),
        e => e.into(),
    })?;
    let mut records = Vec::new();
    for r in &result.rows {
        let base = Record {
            scheme: r.scheme.clone(),
            macro_size: Some(r.macro_size),
            role: r.role.to_string(),
            metric: "qsnr_db",
            value: r.mean_qsnr_db,
        };
        records.push(base.clone());
        if let Some(f) = r.mean_flush_to_zero {
            records.push(Record { metric: "flush_to_zero_rate", value: f, ..base });
        }
    }
    emit(out, render(format, &records, &result))
}

fn operand(path: &Option<std::path::PathBuf>, make: impl FnOnce() -> mxscale::Result<Tensor>) -> Result<Tensor> {
    Ok(match path {
        Some(p) => load_tensor(p)?,
        None => make()?,
    })
}

pub fn gemm(a: &GemmArgs, format: Format, out: &mut impl Write) -> Result<()> {
    let tile = TileConfig::new(a.tile.tm, a.tile.tn, a.tile.tk).map_err(|e| Usage(e.to_string()))?;
    let ca = validated(a.scheme_args.config(a.scheme_a))?;
    let cb = validated(a.scheme_args.config(a.scheme_b))?;
    let x = operand(&a.a, || generate_tensor(&GeneratorSpec::activation_like(a.m, a.k, a.seed)))?;
    let w = operand(&a.b, || generate_tensor(&GeneratorSpec::weight_like(a.n, a.k, a.seed.wrapping_add(1 << 32))))?;
    let xq = quantize_tensor(&x, &ca)?;
    let wq = quantize_tensor(&w, &cb)?;
    let y = matmul_quantized(&xq, &wq, &tile)?;
    let report = qsnr_matmul(&x, &w, &xq, &wq)?;
    if let Some(p) = &a.out {
        save_tensor(p, &y)?;
    }
    let divergence = if a.verify {
        let oracle = matmul_reference(&dequantize_tensor(&xq)?, &dequantize_tensor(&wq)?)?;
        Some(max_ulp_divergence(&y, &oracle)?)
    } else {
        None
    };

    let label = format!("{}x{}", ca.label(), cb.label());
    let r = |metric, value| Record { scheme: label.clone(), macro_size: Some(a.scheme_args.macro_size), role: "output".into(), metric, value };
    let mut records = vec![r("qsnr_db", report.qsnr_db)];
    if let Some(d) = divergence {
        records.push(r("max_ulp_divergence", d as f64));
    }
    #[derive(Serialize)]
    struct Gemm {
        scheme_a: String,
        scheme_b: String,
        shape: [usize; 3],
        #[serde(flatten)]
        report: QsnrReport,
        #[serde(skip_serializing_if = "Option::is_none")]
        max_ulp_divergence: Option<u64>,
    }
    let j = Gemm {
        scheme_a: ca.label(),
        scheme_b: cb.label(),
        shape: [x.rows(), w.rows(), x.cols()],
        report,
        max_ulp_divergence: divergence,
    };
    let mut text = render(format, &records, &j);
    if let (Format::Table, Some(d)) = (format, divergence) {
        text += &format!("max divergence: {d}\n");
    }
    emit(out, text)?;
    match divergence {
        Some(d) if d > 0 => Err(VerifyFailed(d).into()),
        _ => Ok(()),
    }
}

pub fn roofline(a: &RooflineArgs, format: Format, out: &mut impl Write) -> Result<()> {
    let tile = TileConfig::new(a.tile.tm, a.tile.tn, a.tile.tk).map_err(|e| Usage(e.to_string()))?;
    let r = roofline_overhead(&tile, a.sigma_bytes, a.out_bytes).map_err(|e| Usage(e.to_string()))?;
    let rec = |metric, value| Record { scheme: "mbs".into(), macro_size: Some(a.tile.tk), role: "epilogue".into(), metric, value };
    let records = [rec("compute_ratio", r.compute_ratio), rec("traffic_ratio", r.traffic_ratio)];
    let text = match format {
        Format::Table => format!(
            "tile {}x{}x{}\ncompute overhead: {}%\ntraffic overhead: {}%\n",
            a.tile.tm,
            a.tile.tn,
            a.tile.tk,
            r.compute_ratio * 100.0,
            r.traffic_ratio * 100.0
        ),
        f => render(f, &records, &r),
    };
    emit(out, text)
}

pub fn lut_dump(a: &LutDumpArgs, out: &mut impl Write) -> Result<()> {
    let lut = build_error_lut(&CandidateSet::uniform16())?;
    let text = serde_json::to_string_pretty(&lut.to_json())? + "\n";
    match &a.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => emit(out, text),
    }
}
