use crate::error::{Error, Result};
use crate::formats::{extract_mantissa8, extract_mantissa8_f64, Mantissa8, E2M1_MAX};

use super::scale::{dequant_value, encode_scaled, quant_multiplier, sub_block_scale, ScaleRule};
use super::CandidateSet;

const MACRO_RULE: ScaleRule = ScaleRule::Mx { oas: true };

/// Static MBS mantissa: the top eight fraction bits of `6 / amax` in single
/// precision. A zero macro maximum yields the identity.
pub fn mbs_static_mantissa(amax: f32) -> Result<Mantissa8> {
    if !amax.is_finite() || amax < 0.0 {
        return Err(Error::NotPositive(amax as f64));
    }
    if amax == 0.0 {
        return Ok(Mantissa8::IDENTITY);
    }
    let ratio = E2M1_MAX / amax;
    if ratio.is_finite() {
        extract_mantissa8(ratio)
    } else {
        Ok(extract_mantissa8_f64(E2M1_MAX as f64 / amax as f64))
    }
}

/// Absolute SSE of a macro block quantized with factor `m` and OAS block
/// scales, measured on the dequantized values a consumer would see.
pub fn macro_sse(xs: &[f32], block_size: usize, m: Mantissa8) -> f64 {
    let f = m.factor();
    let sigma = m.sigma();
    let mut sse = 0.0f64;
    for sub in xs.chunks(block_size) {
        let d = sub_block_scale(sub, MACRO_RULE, f);
        let sf = quant_multiplier(d);
        let dv = d.to_f64();
        for &x in sub {
            let y = dequant_value(encode_scaled(x * f, sf), dv, sigma);
            let e = y as f64 - x as f64;
            sse += e * e;
        }
    }
    sse
}

pub(crate) fn check_finite(xs: &[f32]) -> Result<f32> {
    let mut m = 0.0f32;
    for (index, &x) in xs.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFinite { index, value: x });
        }
        m = m.max(x.abs());
    }
    Ok(m)
}

/// Candidate minimizing the macro-block SSE; ties go to the smaller mantissa.
pub fn mbs_dynamic_exact(xs: &[f32], candidates: &CandidateSet) -> Result<Mantissa8> {
    mbs_dynamic_exact_blocks(xs, 16, candidates)
}

pub(crate) fn mbs_dynamic_exact_blocks(
    xs: &[f32],
    block_size: usize,
    candidates: &CandidateSet,
) -> Result<Mantissa8> {
    check_finite(xs)?;
    argmin(candidates.as_slice().iter().copied(), |m| macro_sse(xs, block_size, m))
}

pub(crate) fn argmin(
    cands: impl IntoIterator<Item = Mantissa8>,
    mut cost: impl FnMut(Mantissa8) -> f64,
) -> Result<Mantissa8> {
    let mut best: Option<(f64, Mantissa8)> = None;
    for m in cands {
        let c = cost(m);
        best = match best {
            Some((bc, bm)) if bc < c || (bc == c && bm <= m) => Some((bc, bm)),
            _ => Some((c, m)),
        };
    }
    best.map(|(_, m)| m).ok_or_else(|| Error::Config("empty candidate set".into()))
}
