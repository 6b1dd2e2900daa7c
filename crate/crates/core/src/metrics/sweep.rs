use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use super::generate::{generate_tensor, GeneratorSpec};
use super::{flush_to_zero_rate, qsnr_matmul, qsnr_tensor, ser_db, QsnrReport};
use crate::error::{Error, Result};
use crate::quantize::{dequantize_tensor, quantize_tensor, SchemeConfig};

/// Mean of per-tensor QSNR (in dB) over `n` tensors seeded `seed + i`.
/// Tensors are evaluated in parallel and reduced in index order.
pub fn mean_qsnr(spec: &GeneratorSpec, n: usize, cfg: &SchemeConfig) -> Result<QsnrReport> {
    if n == 0 {
        return Err(Error::Config("need at least one tensor".into()));
    }
    let reports: Vec<QsnrReport> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let t = generate_tensor(&spec.with_seed(spec.seed.wrapping_add(i)))?;
            let q = quantize_tensor(&t, cfg)?;
            let mut r = qsnr_tensor(&t, &dequantize_tensor(&q)?)?;
            r.flush_to_zero_rate = Some(flush_to_zero_rate(&t, &q)?);
            Ok(r)
        })
        .collect::<Result<_>>()?;
    Ok(average(&reports))
}

fn average(reports: &[QsnrReport]) -> QsnrReport {
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&QsnrReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let flush = reports
        .iter()
        .map(|r| r.flush_to_zero_rate)
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.iter().sum::<f64>() / n);
    QsnrReport {
        qsnr_db: mean(&|r| r.qsnr_db),
        mse: mean(&|r| r.mse),
        signal_power: mean(&|r| r.signal_power),
        n_tensors: reports.len(),
        flush_to_zero_rate: flush,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Activation,
    Weight,
    /// Product of an activation and a weight tensor.
    Output,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Activation => "activation",
            Role::Weight => "weight",
            Role::Output => "output",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Activation operand; `rows x cols`.
    pub activation: GeneratorSpec,
    /// Weight operand; must share `cols` with the activation.
    pub weight: GeneratorSpec,
    pub macro_sizes: Vec<usize>,
    pub schemes: Vec<SchemeConfig>,
    /// Tensors averaged per point.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub scheme: String,
    pub macro_size: usize,
    pub role: Role,
    #[serde(serialize_with = "ser_db")]
    pub mean_qsnr_db: f64,
    pub mean_flush_to_zero: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn find(&self, scheme: &str, macro_size: usize, role: Role) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.macro_size == macro_size && r.role == role)
    }
}

fn mean_output_qsnr(cfg: &SweepConfig, scheme: &SchemeConfig) -> Result<f64> {
    let dbs: Vec<f64> = (0..cfg.n as u64)
        .into_par_iter()
        .map(|i| {
            let a = generate_tensor(&cfg.activation.with_seed(cfg.activation.seed.wrapping_add(i)))?;
            let w = generate_tensor(&cfg.weight.with_seed(cfg.weight.seed.wrapping_add(i)))?;
            let aq = quantize_tensor(&a, scheme)?;
            let wq = quantize_tensor(&w, scheme)?;
            Ok(qsnr_matmul(&a, &w, &aq, &wq)?.qsnr_db)
        })
        .collect::<Result<_>>()?;
    Ok(dbs.iter().sum::<f64>() / dbs.len() as f64)
}

/// Cross product of schemes and macro sizes, one row per role.
pub fn ablation_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.n == 0 {
        return Err(Error::Config("need at least one tensor per point".into()));
    }
    if cfg.activation.cols != cfg.weight.cols {
        return Err(Error::Shape("activation and weight must share the inner dimension".into()));
    }
    if let Some(bad) = cfg.macro_sizes.iter().find(|&&m| m == 0 || m % 16 != 0) {
        return Err(Error::Config(format!("macro size {bad} is not a positive multiple of 16")));
    }
    let mut out = SweepResult::default();
    for scheme in &cfg.schemes {
        for &ms in &cfg.macro_sizes {
            let sc = SchemeConfig { macro_size: ms, ..scheme.clone() };
            sc.validate()?;
            let label = sc.label();
            let act = mean_qsnr(&cfg.activation, cfg.n, &sc)?;
            let w = mean_qsnr(&cfg.weight, cfg.n, &sc)?;
            let o = mean_output_qsnr(cfg, &sc)?;
            for (role, db, flush) in [
                (Role::Activation, act.qsnr_db, act.flush_to_zero_rate),
                (Role::Weight, w.qsnr_db, w.flush_to_zero_rate),
                (Role::Output, o, None),
            ] {
                out.rows.push(SweepRow {
                    scheme: label.clone(),
                    macro_size: ms,
                    role,
                    mean_qsnr_db: db,
                    mean_flush_to_zero: flush,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Distribution;
    use crate::quantize::MbsMode;

    #[test]
    fn single_tensor_mean_is_tensor_qsnr() {
        let spec = GeneratorSpec::weight_like(4, 64, 9);
        let cfg = SchemeConfig::mx16_oas();
        let m = mean_qsnr(&spec, 1, &cfg).unwrap();
        let t = generate_tensor(&spec).unwrap();
        let direct = qsnr_tensor(&t, &dequantize_tensor(&quantize_tensor(&t, &cfg).unwrap()).unwrap()).unwrap();
        assert_eq!(m.qsnr_db, direct.qsnr_db);
        assert_eq!(m.n_tensors, 1);
        assert!(mean_qsnr(&spec, 0, &cfg).is_err());
    }

    #[test]
    fn sweep_shape() {
        let cfg = SweepConfig {
            activation: GeneratorSpec::activation_like(4, 512, 1),
            weight: GeneratorSpec::weight_like(4, 512, 2),
            macro_sizes: vec![32, 64, 128, 256, 512],
            schemes: vec![SchemeConfig::mx16_oas(), SchemeConfig::mbs_dynamic(128, MbsMode::Exact)],
            n: 2,
        };
        let r = ablation_sweep(&cfg).unwrap();
        assert_eq!(r.rows.len(), 2 * 5 * 3);
        for role in [Role::Activation, Role::Weight, Role::Output] {
            let n = r.rows.iter().filter(|x| x.scheme == "mbs-d" && x.role == role).count();
            assert_eq!(n, 5);
        }
        assert!(r.find("mbs-d", 256, Role::Output).is_some());
    }

    #[test]
    fn sweep_rejects_bad_macro_size() {
        let cfg = SweepConfig {
            activation: GeneratorSpec::new(Distribution::Gaussian, 2, 64, 1),
            weight: GeneratorSpec::new(Distribution::Gaussian, 2, 64, 1),
            macro_sizes: vec![24],
            schemes: vec![SchemeConfig::mbs_static(128)],
            n: 1,
        };
        assert!(ablation_sweep(&cfg).is_err());
    }
}
