//! Functional tiled GEMM `C = A * B^T` over quantized operands.
//!
//! Each output element accumulates k-chunks in ascending order. Inside a
//! chunk, 4-bit codes are multiplied as small integers, every block partial
//! is scaled by the two power-of-two block scales, and the chunk sum is then
//! multiplied by `sigma_A * sigma_B`, the inverse MBS factors of the two
//! macro blocks it covers. Chunks are split at every macro boundary of
//! either operand so that `sigma` is constant over each.
//!
//! All products are exact in f64, so as long as the accumulated sum is
//! exactly representable (true unless block-scale exponents inside one row
//! span roughly 2^13 or more) the result matches [`matmul_reference`] on the
//! dequantized operands bit for bit.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quantize::QuantizedTensor;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileConfig {
    pub t_m: usize,
    pub t_n: usize,
    pub t_k: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self { t_m: 128, t_n: 128, t_k: 128 }
    }
}

impl TileConfig {
    pub fn new(t_m: usize, t_n: usize, t_k: usize) -> Result<Self> {
        let cfg = Self { t_m, t_n, t_k };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_m == 0 || self.t_n == 0 || self.t_k == 0 {
            return Err(Error::Config(format!("tile dims must be positive, got {self:?}")));
        }
        Ok(())
    }
}

/// `A * B^T` accumulated in f64 over ascending k, rounded once to f32.
pub fn matmul_reference(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "inner dimensions differ: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    let (m, n) = (a.rows(), b.rows());
    let data: Vec<f32> = (0..m)
        .into_par_iter()
        .flat_map_iter(|i| {
            let ar = a.row(i);
            (0..n).map(move |j| {
                let mut acc = 0.0f64;
                for (&x, &y) in ar.iter().zip(b.row(j)) {
                    acc += x as f64 * y as f64;
                }
                acc as f32
            })
        })
        .collect();
    Tensor::new(m, n, data)
}

/// Operand unpacked for the inner loop.
struct Operand {
    cols: usize,
    block: usize,
    /// Twice the decoded element value.
    doubled: Vec<i8>,
    scales: Vec<f64>,
    /// `(macro_size, per-macro sigma)` for MBS operands.
    sigma: Option<(usize, Vec<f64>)>,
    tensor_scale: f64,
}

impl Operand {
    fn new(q: &QuantizedTensor) -> Result<Self> {
        let (rows, cols) = q.shape();
        let mut doubled = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                doubled.push(q.code(r, c).doubled() as i8);
            }
        }
        let scales = (0..q.scales().len()).map(|i| q.scales().value(i)).collect::<Result<_>>()?;
        let sigma = match (q.macro_size(), q.mbs_mantissas()) {
            (Some(ms), Some(m)) => Some((ms, m.iter().map(|m| m.sigma()).collect())),
            _ => None,
        };
        Ok(Self {
            cols,
            block: q.block_size(),
            doubled,
            scales,
            sigma,
            tensor_scale: q.tensor_scale().unwrap_or(1.0),
        })
    }

    #[inline]
    fn scale(&self, row: usize, k: usize) -> f64 {
        self.scales[row * (self.cols / self.block) + k / self.block]
    }

    #[inline]
    fn sigma(&self, row: usize, k: usize) -> f64 {
        match &self.sigma {
            Some((ms, s)) => s[row * self.cols.div_ceil(*ms) + k / ms],
            None => 1.0,
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// K-chunk boundaries: every multiple of `t_k` and of each MBS macro size.
fn chunk_bounds(k: usize, t_k: usize, a: &Operand, b: &Operand) -> Vec<usize> {
    let mut cuts: Vec<usize> = (0..k).step_by(t_k).collect();
    for op in [a, b] {
        if let Some((ms, _)) = op.sigma {
            cuts.extend((0..k).step_by(ms));
        }
    }
    cuts.push(k);
    cuts.sort_unstable();
    cuts.dedup();
    cuts
}

/// Quantized `A * B^T` with per-chunk MBS epilogue scaling. Mixed schemes
/// are allowed, e.g. MBS-S activations against MBS-D weights.
pub fn matmul_quantized(aq: &QuantizedTensor, bq: &QuantizedTensor, cfg: &TileConfig) -> Result<Tensor> {
    cfg.validate()?;
    if aq.cols() != bq.cols() {
        return Err(Error::Shape(format!("inner dimensions differ: {} vs {}", aq.cols(), bq.cols())));
    }
    let a = Operand::new(aq)?;
    let b = Operand::new(bq)?;
    let unit = gcd(a.block, b.block);
    if cfg.t_k % unit != 0 {
        return Err(Error::Incompatible(format!(
            "t_k = {} does not align with block sizes {} and {}",
            cfg.t_k, a.block, b.block
        )));
    }
    let k = a.cols;
    let bounds = chunk_bounds(k, cfg.t_k, &a, &b);
    let (m, n) = (aq.rows(), bq.rows());
    let ts = a.tensor_scale * b.tensor_scale;

    let element = |i: usize, j: usize| -> f32 {
        let ar = &a.doubled[i * k..(i + 1) * k];
        let br = &b.doubled[j * k..(j + 1) * k];
        let mut acc = 0.0f64;
        for w in bounds.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mut partial = 0.0f64;
            let mut s = lo;
            while s < hi {
                let e = (s + unit).min(hi);
                let dot: i32 = ar[s..e].iter().zip(&br[s..e]).map(|(&x, &y)| x as i32 * y as i32).sum();
                if dot != 0 {
                    partial += dot as f64 * 0.25 * a.scale(i, s) * b.scale(j, s);
                }
                s = e;
            }
            acc += a.sigma(i, lo) * b.sigma(j, lo) * partial;
        }
        (acc * ts) as f32
    };

    let row_tiles: Vec<Vec<f32>> = (0..m.div_ceil(cfg.t_m))
        .into_par_iter()
        .map(|ti| {
            let rows = ti * cfg.t_m..((ti + 1) * cfg.t_m).min(m);
            let mut tile = vec![0.0f32; rows.len() * n];
            for tj in 0..n.div_ceil(cfg.t_n) {
                for (li, i) in rows.clone().enumerate() {
                    for j in tj * cfg.t_n..((tj + 1) * cfg.t_n).min(n) {
                        tile[li * n + j] = element(i, j);
                    }
                }
            }
            tile
        })
        .collect();
    Tensor::new(m, n, row_tiles.concat())
}

/// Largest distance in units in the last place between matching elements.
pub fn max_ulp_divergence(x: &Tensor, y: &Tensor) -> Result<u64> {
    if x.shape() != y.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", x.shape(), y.shape())));
    }
    fn ordered(v: f32) -> i64 {
        let b = v.to_bits() as i32;
        (if b < 0 { i32::MIN - b } else { b }) as i64
    }
    Ok(x.data()
        .iter()
        .zip(y.data())
        .map(|(&p, &q)| {
            if p.is_nan() || q.is_nan() {
                u64::MAX
            } else {
                (ordered(p) - ordered(q)).unsigned_abs()
            }
        })
        .max()
        .unwrap_or(0))
}

/// Extra epilogue work relative to the tile's tensor-core work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverheadReport {
    /// Epilogue multiplies over FP4 multiply-accumulates.
    pub compute_ratio: f64,
    /// Sigma vector bytes over output tile bytes.
    pub traffic_ratio: f64,
}

/// Roofline overhead of the MBS epilogue for one output tile: two multiplies
/// per output element against `t_m * t_n * t_k` MACs, and `t_m + t_n` sigma
/// values loaded against the output tile.
pub fn roofline_overhead(cfg: &TileConfig, sigma_bytes: usize, out_bytes: usize) -> Result<OverheadReport> {
    cfg.validate()?;
    if sigma_bytes == 0 || out_bytes == 0 {
        return Err(Error::Config("byte widths must be positive".into()));
    }
    let (tm, tn, tk) = (cfg.t_m as f64, cfg.t_n as f64, cfg.t_k as f64);
    let report = OverheadReport {
        compute_ratio: (2.0 * tm * tn) / (tm * tn * tk),
        traffic_ratio: ((tm + tn) * sigma_bytes as f64) / (tm * tn * out_bytes as f64),
    };
    if report.compute_ratio > 1.0 || report.traffic_ratio > 1.0 {
        return Err(Error::Config(format!("tile {cfg:?} too small for the overhead model")));
    }
    Ok(report)
}
