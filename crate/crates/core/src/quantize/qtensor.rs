use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::formats::e8m0::pow2;
use crate::formats::{encode_e4m3, floor_log2, E4M3Value, E8M0Scale, Fp4Code, Mantissa8, E2M1_MAX, E4M3_MAX};
use crate::tensor::Tensor;

use super::lut::{build_error_lut, lut_select, ErrorLut};
use super::mbs::{argmin, check_finite, macro_sse, mbs_static_mantissa};
use super::scale::{dequant_value, encode_scaled, quant_multiplier, sub_block_scale};
use super::{MbsMode, SchemeConfig, Variant};

/// Per-block scales: E8M0 for the MX family, E4M3 for NVFP4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockScales {
    E8M0(Vec<E8M0Scale>),
    E4M3(Vec<E4M3Value>),
}

impl BlockScales {
    pub fn len(&self) -> usize {
        match self {
            BlockScales::E8M0(s) => s.len(),
            BlockScales::E4M3(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            BlockScales::E8M0(s) => s.iter().map(|x| x.bits()).collect(),
            BlockScales::E4M3(s) => s.iter().map(|x| x.bits()).collect(),
        }
    }

    /// Dequantization multiplier of block `i`.
    pub fn value(&self, i: usize) -> Result<f64> {
        match self {
            BlockScales::E8M0(s) => Ok(s[i].to_f64()),
            BlockScales::E4M3(s) => {
                let v = s[i];
                if v.is_nan() {
                    Err(Error::CorruptScale { block: i, code: v.bits() })
                } else {
                    Ok(v.to_f32() as f64)
                }
            }
        }
    }
}

/// Packed 4-bit codes plus everything needed to reconstruct them.
///
/// Codes are row-major, two per byte, with the even column in the low nibble.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    variant: Variant,
    rows: usize,
    cols: usize,
    block_size: usize,
    macro_size: Option<usize>,
    codes: Vec<u8>,
    scales: BlockScales,
    mbs: Option<Vec<Mantissa8>>,
    tensor_scale: Option<f64>,
}

impl QuantizedTensor {
    /// Assembles a tensor from raw parts, checking every length and the
    /// variant/section consistency.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        variant: Variant,
        rows: usize,
        cols: usize,
        block_size: usize,
        macro_size: Option<usize>,
        codes: Vec<u8>,
        scales: BlockScales,
        mbs: Option<Vec<Mantissa8>>,
        tensor_scale: Option<f64>,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::Incompatible(m));
        if block_size == 0 || block_size % 2 != 0 || cols % block_size != 0 {
            return bad(format!("{cols} columns do not split into blocks of {block_size}"));
        }
        let n = rows * cols;
        if codes.len() != n / 2 {
            return bad(format!("expected {} code bytes, got {}", n / 2, codes.len()));
        }
        if scales.len() != n / block_size {
            return bad(format!("expected {} block scales, got {}", n / block_size, scales.len()));
        }
        let nv = variant == Variant::Nvfp4;
        if nv != matches!(scales, BlockScales::E4M3(_)) {
            return bad(format!("scale format does not match variant {variant}"));
        }
        if variant.is_mbs() {
            let Some(ms) = macro_size.filter(|&m| m > 0 && m % block_size == 0) else {
                return bad("MBS variants need a macro size that is a multiple of the block size".into());
            };
            let per_row = cols.div_ceil(ms);
            match &mbs {
                Some(v) if v.len() == rows * per_row => {}
                _ => return bad(format!("expected {} macro mantissas", rows * per_row)),
            }
        } else if mbs.is_some() {
            return bad(format!("variant {variant} carries no macro mantissas"));
        }
        match (variant, tensor_scale) {
            (Variant::Nvfp4, Some(s)) if s.is_finite() && s > 0.0 => {}
            (Variant::Nvfp4, _) => return bad("nvfp4 needs a positive tensor scale".into()),
            (_, Some(_)) => return bad(format!("variant {variant} has no tensor scale")),
            _ => {}
        }
        Ok(Self { variant, rows, cols, block_size, macro_size, codes, scales, mbs, tensor_scale })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn macro_size(&self) -> Option<usize> {
        self.macro_size
    }

    pub fn packed_codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn scales(&self) -> &BlockScales {
        &self.scales
    }

    pub fn mbs_mantissas(&self) -> Option<&[Mantissa8]> {
        self.mbs.as_deref()
    }

    pub fn tensor_scale(&self) -> Option<f64> {
        self.tensor_scale
    }

    pub fn blocks_per_row(&self) -> usize {
        self.cols / self.block_size
    }

    pub fn macros_per_row(&self) -> usize {
        match (self.macro_size, &self.mbs) {
            (Some(m), Some(_)) => self.cols.div_ceil(m),
            _ => 0,
        }
    }

    pub fn code(&self, row: usize, col: usize) -> Fp4Code {
        let e = row * self.cols + col;
        let byte = self.codes[e / 2];
        Fp4Code::from_bits(if e % 2 == 0 { byte } else { byte >> 4 })
    }

    /// Dequantization multiplier of the block containing `(row, col)`.
    pub fn block_scale(&self, row: usize, col: usize) -> Result<f64> {
        self.scales.value(row * self.blocks_per_row() + col / self.block_size)
    }

    /// Macro mantissa covering `(row, col)`; identity for non-MBS tensors.
    pub fn mantissa(&self, row: usize, col: usize) -> Mantissa8 {
        match (&self.mbs, self.macro_size) {
            (Some(v), Some(m)) => v[row * self.cols.div_ceil(m) + col / m],
            _ => Mantissa8::IDENTITY,
        }
    }
}

struct RowOut {
    codes: Vec<u8>,
    scales: Vec<E8M0Scale>,
    mbs: Vec<Mantissa8>,
}

fn pack(codes: &mut [u8], col: usize, c: Fp4Code) {
    if col % 2 == 0 {
        codes[col / 2] = c.bits();
    } else {
        codes[col / 2] |= c.bits() << 4;
    }
}

fn quantize_row(row: &[f32], cfg: &SchemeConfig, lut: Option<&ErrorLut>) -> Result<RowOut> {
    let rule = cfg.scale_rule();
    let bs = cfg.block_size;
    let segment = if cfg.variant.is_mbs() { cfg.macro_size } else { row.len().max(1) };
    let mut out = RowOut {
        codes: vec![0u8; row.len() / 2],
        scales: Vec::with_capacity(row.len() / bs),
        mbs: Vec::new(),
    };
    let mut col = 0;
    for seg in row.chunks(segment) {
        let m = match cfg.variant {
            Variant::MbsStatic => mbs_static_mantissa(check_finite(seg)?)?,
            Variant::MbsDynamic => match (cfg.mbs_mode, lut) {
                (MbsMode::Lut, Some(lut)) => lut_select(seg, bs, lut),
                _ => {
                    let extra = if cfg.augment_static {
                        Some(mbs_static_mantissa(check_finite(seg)?)?)
                    } else {
                        None
                    };
                    let cands = cfg.candidates.as_slice().iter().copied().chain(extra);
                    argmin(cands, |m| macro_sse(seg, bs, m))?
                }
            },
            _ => Mantissa8::IDENTITY,
        };
        if cfg.variant.is_mbs() {
            out.mbs.push(m);
        }
        let f = m.factor();
        for sub in seg.chunks(bs) {
            let d = sub_block_scale(sub, rule, f);
            out.scales.push(d);
            let sf = quant_multiplier(d);
            for &x in sub {
                pack(&mut out.codes, col, encode_scaled(x * f, sf));
                col += 1;
            }
        }
    }
    Ok(out)
}

fn check_shape(t: &Tensor, block_size: usize) -> Result<()> {
    if t.cols() % block_size != 0 {
        return Err(Error::Shape(format!(
            "row length {} is not a multiple of the block size {block_size}",
            t.cols()
        )));
    }
    Ok(())
}

/// Quantizes `t` under `cfg`. Rows are processed independently and in
/// parallel; the output does not depend on the thread count.
pub fn quantize_tensor(t: &Tensor, cfg: &SchemeConfig) -> Result<QuantizedTensor> {
    cfg.validate()?;
    if cfg.variant == Variant::Nvfp4 {
        return quantize_nvfp4(t);
    }
    check_shape(t, cfg.block_size)?;
    t.check_finite()?;
    let lut = match (cfg.variant, cfg.mbs_mode) {
        (Variant::MbsDynamic, MbsMode::Lut) => Some(build_error_lut(&cfg.candidates)?),
        _ => None,
    };
    let rows: Vec<RowOut> = (0..t.rows())
        .into_par_iter()
        .map(|r| quantize_row(t.row(r), cfg, lut.as_ref()))
        .collect::<Result<_>>()?;
    let mut codes = Vec::with_capacity(t.len() / 2);
    let mut scales = Vec::with_capacity(t.len() / cfg.block_size);
    let mut mbs = Vec::new();
    for r in rows {
        codes.extend(r.codes);
        scales.extend(r.scales);
        mbs.extend(r.mbs);
    }
    let is_mbs = cfg.variant.is_mbs();
    QuantizedTensor::from_parts(
        cfg.variant,
        t.rows(),
        t.cols(),
        cfg.block_size,
        is_mbs.then_some(cfg.macro_size),
        codes,
        BlockScales::E8M0(scales),
        is_mbs.then_some(mbs),
        None,
    )
}

/// Per-tensor NVFP4 scale: the smallest power of two not below
/// `amax / (448 * 6)`, so every block scale fits E4M3.
pub fn nvfp4_tensor_scale(amax: f32) -> f64 {
    if amax == 0.0 {
        return 1.0;
    }
    let target = amax as f64 / (E4M3_MAX as f64 * E2M1_MAX as f64);
    let e = floor_log2(target);
    if pow2(e) < target {
        pow2(e + 1)
    } else {
        pow2(e)
    }
}

/// NVFP4: 1x16 blocks with E4M3 scales under a per-tensor scale.
pub fn quantize_nvfp4(t: &Tensor) -> Result<QuantizedTensor> {
    const BS: usize = 16;
    check_shape(t, BS)?;
    t.check_finite()?;
    let ts = nvfp4_tensor_scale(t.abs_max());
    let rows: Vec<(Vec<u8>, Vec<E4M3Value>)> = (0..t.rows())
        .into_par_iter()
        .map(|r| {
            let row = t.row(r);
            let mut codes = vec![0u8; row.len() / 2];
            let mut scales = Vec::with_capacity(row.len() / BS);
            for (b, sub) in row.chunks(BS).enumerate() {
                let amax = sub.iter().fold(0.0f32, |m, x| m.max(x.abs()));
                let sc = encode_e4m3((amax as f64 / (E2M1_MAX as f64 * ts)) as f32)?;
                scales.push(sc);
                let d = sc.to_f32() as f64 * ts;
                if d == 0.0 {
                    continue;
                }
                for (i, &x) in sub.iter().enumerate() {
                    pack(&mut codes, b * BS + i, encode_scaled((x as f64 / d) as f32, 1.0));
                }
            }
            Ok((codes, scales))
        })
        .collect::<Result<_>>()?;
    let (codes, scales): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    QuantizedTensor::from_parts(
        Variant::Nvfp4,
        t.rows(),
        t.cols(),
        BS,
        None,
        codes.concat(),
        BlockScales::E4M3(scales.concat()),
        None,
        Some(ts),
    )
}

/// `decode(code) * D * sigma (* tensor_scale)` for every element.
pub fn dequantize_tensor(q: &QuantizedTensor) -> Result<Tensor> {
    let ts = q.tensor_scale.unwrap_or(1.0);
    let (rows, cols) = q.shape();
    let data: Vec<Vec<f32>> = (0..rows)
        .into_par_iter()
        .map(|r| {
            let mut out = Vec::with_capacity(cols);
            for b in 0..q.blocks_per_row() {
                let c0 = b * q.block_size;
                let d = q.block_scale(r, c0)? * ts;
                for c in c0..c0 + q.block_size {
                    out.push(dequant_value(q.code(r, c), d, q.mantissa(r, c).sigma()));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Tensor::new(rows, cols, data.concat())
}
