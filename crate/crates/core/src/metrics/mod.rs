//! Fidelity metrics, synthetic tensors and the macro-size sweep.

mod generate;
mod sweep;

pub use generate::{generate_tensor, Distribution, GeneratorSpec};
pub use sweep::{ablation_sweep, mean_qsnr, Role, SweepConfig, SweepResult, SweepRow};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::gemm::{matmul_quantized, matmul_reference, TileConfig};
use crate::quantize::{BlockScales, QuantizedTensor};
use crate::tensor::Tensor;

/// Signal-to-quantization-noise statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QsnrReport {
    /// `10 log10(signal_power / mse)`; `+inf` when the noise is zero.
    #[serde(serialize_with = "ser_db")]
    pub qsnr_db: f64,
    /// Squared Frobenius norm of the error (mean over tensors when averaged).
    pub mse: f64,
    /// Squared Frobenius norm of the reference.
    pub signal_power: f64,
    pub n_tensors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flush_to_zero_rate: Option<f64>,
}

/// Infinite dB values serialize as the string `"inf"`.
pub fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

pub(crate) fn db(signal: f64, noise: f64) -> f64 {
    if noise == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal / noise).log10()
    }
}

/// Tensor QSNR with both norms accumulated in f64, row-major.
pub fn qsnr_tensor(reference: &Tensor, q: &Tensor) -> Result<QsnrReport> {
    if reference.shape() != q.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", reference.shape(), q.shape())));
    }
    let (mut signal, mut noise) = (0.0f64, 0.0f64);
    for (&x, &y) in reference.data().iter().zip(q.data()) {
        let x = x as f64;
        let e = x - y as f64;
        signal += x * x;
        noise += e * e;
    }
    if signal == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let n = reference.len() as f64;
    Ok(QsnrReport {
        qsnr_db: db(signal, noise),
        mse: noise / n,
        signal_power: signal / n,
        n_tensors: 1,
        flush_to_zero_rate: None,
    })
}

/// QSNR of the quantized product against the high-precision product.
pub fn qsnr_matmul(a: &Tensor, b: &Tensor, aq: &QuantizedTensor, bq: &QuantizedTensor) -> Result<QsnrReport> {
    if aq.shape() != a.shape() || bq.shape() != b.shape() {
        return Err(Error::Shape("quantized operands do not match their references".into()));
    }
    let reference = matmul_reference(a, b)?;
    let quantized = matmul_quantized(aq, bq, &TileConfig::default())?;
    qsnr_tensor(&reference, &quantized)
}

/// Number of nonzero reference elements whose code is zero, and the number
/// of nonzero reference elements.
pub fn flush_to_zero_count(reference: &Tensor, q: &QuantizedTensor) -> Result<(usize, usize)> {
    if reference.shape() != q.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", reference.shape(), q.shape())));
    }
    let cols = reference.cols();
    let (mut flushed, mut nonzero) = (0, 0);
    for (i, &x) in reference.data().iter().enumerate() {
        if x != 0.0 {
            nonzero += 1;
            if q.code(i / cols, i % cols).is_zero() {
                flushed += 1;
            }
        }
    }
    Ok((flushed, nonzero))
}

/// Fraction of nonzero reference elements quantized to zero.
pub fn flush_to_zero_rate(reference: &Tensor, q: &QuantizedTensor) -> Result<f64> {
    let (f, n) = flush_to_zero_count(reference, q)?;
    Ok(if n == 0 { 0.0 } else { f as f64 / n as f64 })
}

/// Exponent statistics of the E8M0 block scales of one tensor. Blocks whose
/// codes are all zero carry a placeholder scale and are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleSpanStats {
    pub max_exponent: i32,
    pub min_exponent: i32,
    /// Blocks whose scale is within a factor 2^15 of the tensor maximum.
    pub frac_within_2_15: f64,
    /// Rows whose scales span at most 16 consecutive exponents, so that a
    /// 4-bit exponent field relative to the row maximum covers them.
    pub frac_rows_fit_e4: f64,
}

pub const E4_EXPONENT_SPAN: i32 = 15;

pub fn scale_exponent_span(q: &QuantizedTensor) -> Result<ScaleSpanStats> {
    let BlockScales::E8M0(scales) = q.scales() else {
        return Err(Error::Incompatible("scale statistics need E8M0 block scales".into()));
    };
    let bpr = q.blocks_per_row();
    let bs = q.block_size();
    let live = |r: usize, b: usize| (0..bs).any(|c| !q.code(r, b * bs + c).is_zero());
    let mut row_spans = Vec::with_capacity(q.rows());
    let mut exps = Vec::new();
    for r in 0..q.rows() {
        let row: Vec<i32> = (0..bpr).filter(|&b| live(r, b)).map(|b| scales[r * bpr + b].exponent()).collect();
        if let (Some(lo), Some(hi)) = (row.iter().min(), row.iter().max()) {
            row_spans.push(hi - lo);
        }
        exps.extend(row);
    }
    let (Some(&max), Some(&min)) = (exps.iter().max(), exps.iter().min()) else {
        return Ok(ScaleSpanStats { max_exponent: 0, min_exponent: 0, frac_within_2_15: 1.0, frac_rows_fit_e4: 1.0 });
    };
    let within = exps.iter().filter(|&&e| max - e <= E4_EXPONENT_SPAN).count();
    let fit = row_spans.iter().filter(|&&s| s <= E4_EXPONENT_SPAN).count();
    Ok(ScaleSpanStats {
        max_exponent: max,
        min_exponent: min,
        frac_within_2_15: within as f64 / exps.len() as f64,
        frac_rows_fit_e4: fit as f64 / row_spans.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantize::{quantize_tensor, SchemeConfig};

    fn t(data: Vec<f32>, cols: usize) -> Tensor {
        Tensor::new(data.len() / cols, cols, data).unwrap()
    }

    #[test]
    fn qsnr_examples() {
        let a = t((1..=32).map(|i| i as f32 * 0.1).collect(), 16);
        assert_eq!(qsnr_tensor(&a, &a).unwrap().qsnr_db, f64::INFINITY);
        assert_eq!(qsnr_tensor(&a, &a.map(|_| 0.0)).unwrap().qsnr_db, 0.0);
        let half = qsnr_tensor(&a, &a.map(|x| x / 2.0)).unwrap().qsnr_db;
        assert!((half - 6.0206).abs() < 1e-4);
        assert!((half - 10.0 * 4f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn qsnr_errors() {
        let a = t(vec![1.0; 16], 16);
        assert!(matches!(qsnr_tensor(&a, &t(vec![1.0; 32], 16)), Err(Error::Shape(_))));
        let z = t(vec![0.0; 16], 16);
        assert!(matches!(qsnr_tensor(&z, &z), Err(Error::ZeroSignal)));
    }

    #[test]
    fn inf_serializes_as_string() {
        let a = t(vec![1.0; 16], 16);
        let r = qsnr_tensor(&a, &a).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"qsnr_db\":\"inf\""), "{s}");
    }

    #[test]
    fn flush_examples() {
        let mut data = vec![6.0f32; 16];
        data[1] = 0.1;
        let a = t(data, 16);
        let q = quantize_tensor(&a, &SchemeConfig::mx16()).unwrap();
        assert_eq!(flush_to_zero_count(&a, &q).unwrap(), (1, 16));
        let b = t(vec![6.0, 0.1], 2);
        let qb = crate::quantize::QuantizedTensor::from_parts(
            crate::quantize::Variant::Mx16, 1, 2, 2, None,
            vec![0x07], BlockScales::E8M0(vec![crate::formats::E8M0Scale::ONE]), None, None,
        ).unwrap();
        assert_eq!(flush_to_zero_rate(&b, &qb).unwrap(), 0.5);
        let exact = t([6.0, 3.0, 0.5, -1.0].repeat(4), 16);
        let q = quantize_tensor(&exact, &SchemeConfig::mx16()).unwrap();
        assert_eq!(flush_to_zero_rate(&exact, &q).unwrap(), 0.0);
    }

    #[test]
    fn span_examples() {
        let c = t(vec![1.5; 64], 32);
        let q = quantize_tensor(&c, &SchemeConfig::mx16()).unwrap();
        let s = scale_exponent_span(&q).unwrap();
        assert_eq!(s.max_exponent, s.min_exponent);
        assert_eq!((s.frac_within_2_15, s.frac_rows_fit_e4), (1.0, 1.0));

        let mut data = vec![6.0f32; 16];
        data.extend(vec![6.0 * 2f32.powi(20); 16]);
        let q = quantize_tensor(&t(data, 32), &SchemeConfig::mx16()).unwrap();
        let s = scale_exponent_span(&q).unwrap();
        assert_eq!(s.max_exponent - s.min_exponent, 20);
        assert_eq!(s.frac_within_2_15, 0.5);
        assert_eq!(s.frac_rows_fit_e4, 0.0);

        let nv = quantize_tensor(&c, &SchemeConfig::nvfp4()).unwrap();
        assert!(scale_exponent_span(&nv).is_err());
    }
}
