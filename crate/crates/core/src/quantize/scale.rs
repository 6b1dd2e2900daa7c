use crate::error::{Error, Result};
use crate::formats::e8m0::pow2;
use crate::formats::{
    decode_e2m1, floor_log2, quantize_magnitude, E8M0Scale, Fp4Code, Mantissa8, E2M1_MAX,
    E8M0_MAX_EXP, E8M0_MIN_EXP,
};

/// Scaled block maxima at or below this value get their scale doubled by OAS.
pub(crate) const OAS_THRESHOLD: f64 = 3.5;

/// How a block's shared power-of-two scale is derived from its maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleRule {
    /// `D = 2^(floor(log2 amax) - 2)`; maps amax into `[4, 8)`.
    Ocp,
    /// `SF = floor_pow2(6 / amax)`; maps amax into `(3, 6]`, or `(3.5, 7]`
    /// with overflow-aware doubling.
    Mx { oas: bool },
}

/// Dequantization scale for the OCP rule. Zero maxima give `D = 1`.
pub fn ocp_scale_for_max(amax: f32) -> E8M0Scale {
    if amax == 0.0 {
        return E8M0Scale::ONE;
    }
    E8M0Scale::saturating_from_exponent(floor_log2(amax as f64) - 2)
}

/// Dequantization scale `D = 1/SF` for the 6/amax rule, with optional
/// overflow-aware doubling of `SF`. Zero maxima give `D = 1`.
pub fn mx_scale_for_max(amax: f32, oas: bool) -> E8M0Scale {
    if amax == 0.0 {
        return E8M0Scale::ONE;
    }
    let amax = amax as f64;
    // Exact: no f32 amax puts 6/amax within an f64 rounding of a power of two.
    let mut k = floor_log2(6.0 / amax).clamp(E8M0_MIN_EXP, E8M0_MAX_EXP);
    if oas && k < E8M0_MAX_EXP && amax * pow2(k) <= OAS_THRESHOLD {
        k += 1;
    }
    E8M0Scale::saturating_from_exponent(-k)
}

fn abs_max(block: &[f32]) -> Result<f32> {
    let mut m = 0.0f32;
    for (index, &x) in block.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFinite { index, value: x });
        }
        m = m.max(x.abs());
    }
    Ok(m)
}

/// OCP MXFP4 scale for one block.
pub fn block_scale_ocp(block: &[f32]) -> Result<E8M0Scale> {
    Ok(ocp_scale_for_max(abs_max(block)?))
}

/// Block-16 scale, optionally overflow-aware.
pub fn block_scale_16(block: &[f32], oas: bool) -> Result<E8M0Scale> {
    Ok(mx_scale_for_max(abs_max(block)?, oas))
}

/// Encodes `x * factor * sf` element by element with saturation.
///
/// `sf` is the quantization multiplier (the reciprocal of the stored scale).
pub fn quantize_block(block: &[f32], sf: f32, factor: Mantissa8) -> Result<Vec<Fp4Code>> {
    if !(sf.is_finite() && sf > 0.0) {
        return Err(Error::NotPositive(sf as f64));
    }
    let f = factor.factor();
    block
        .iter()
        .enumerate()
        .map(|(index, &x)| {
            if !x.is_finite() {
                return Err(Error::NonFinite { index, value: x });
            }
            Ok(encode_scaled(x * f, sf))
        })
        .collect()
}

/// Scale of a sub-block after multiplying every element by `factor`.
#[inline]
pub(crate) fn sub_block_scale(xs: &[f32], rule: ScaleRule, factor: f32) -> E8M0Scale {
    let amax = xs.iter().fold(0.0f32, |m, &x| m.max((x * factor).abs()));
    match rule {
        ScaleRule::Ocp => ocp_scale_for_max(amax),
        ScaleRule::Mx { oas } => mx_scale_for_max(amax, oas),
    }
}

/// The quantization multiplier `SF = 1/D` as an f32. Always exact: E8M0
/// exponents stay inside the single-precision range.
#[inline]
pub(crate) fn quant_multiplier(d: E8M0Scale) -> f32 {
    pow2(-d.exponent()) as f32
}

/// Saturating encode of an already factor-scaled element.
#[inline]
pub(crate) fn encode_scaled(u: f32, sf: f32) -> Fp4Code {
    let v = u * sf;
    let idx = if v.abs() >= E2M1_MAX { 7 } else { quantize_magnitude(v.abs()) };
    Fp4Code::from_parts(v.is_sign_negative(), idx)
}

/// `decode(code) * d * sigma`. With `sigma` at half precision the product
/// has at most 13 significant bits and is exact in f32.
#[inline]
pub(crate) fn dequant_value(code: Fp4Code, d: f64, sigma: f64) -> f32 {
    (decode_e2m1(code) as f64 * d * sigma) as f32
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scaled_max(amax: f32, d: E8M0Scale) -> f64 {
        amax as f64 / d.to_f64()
    }

    #[test]
    fn ocp_examples() {
        // 7.6 stays at 7.6 and saturates to 6: 21% error
        let d = ocp_scale_for_max(7.6);
        assert_eq!(d.to_f64(), 1.0);
        let c = encode_scaled(7.6, quant_multiplier(d));
        let rel = ((c.to_f32() - 7.6) / 7.6).abs();
        assert!((rel - 0.2105).abs() < 1e-3);
        // exact powers of two land on the closed end of [4, 8)
        assert_eq!(ocp_scale_for_max(8.0).to_f64(), 2.0);
        assert_eq!(scaled_max(8.0, ocp_scale_for_max(8.0)), 4.0);
        assert_eq!(ocp_scale_for_max(6.0).to_f64(), 1.0);
    }

    #[test]
    fn mx16_examples() {
        assert_eq!(mx_scale_for_max(5.9, false).to_f64(), 1.0);
        assert_eq!(mx_scale_for_max(5.9, true).to_f64(), 1.0);
        assert_eq!(mx_scale_for_max(3.4, false).to_f64(), 1.0);
        let d = mx_scale_for_max(3.4, true);
        assert_eq!(d.to_f64(), 0.5);
        assert!((scaled_max(3.4, d) - 6.8).abs() < 1e-6);
        assert_eq!(mx_scale_for_max(6.0, false).to_f64(), 1.0);
        // boundary: exactly 3.5 after scaling doubles
        assert_eq!(mx_scale_for_max(3.5, true).to_f64(), 0.5);
        assert_eq!(mx_scale_for_max(3.5000002, true).to_f64(), 1.0);
    }

    #[test]
    fn zero_block_scale_is_one() {
        assert_eq!(block_scale_ocp(&[0.0; 32]).unwrap(), E8M0Scale::ONE);
        assert_eq!(block_scale_16(&[0.0; 16], true).unwrap(), E8M0Scale::ONE);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(block_scale_16(&[1.0, f32::NAN], false).is_err());
        assert!(quantize_block(&[f32::INFINITY], 1.0, Mantissa8(0)).is_err());
        assert!(quantize_block(&[1.0], 0.0, Mantissa8(0)).is_err());
    }

    #[test]
    fn oas_rescues_small_element() {
        // SF = 2 with OAS: 0.2 -> 0.4 -> 0.5, dequant 0.25
        let codes = quantize_block(&[3.4, 0.2], 2.0, Mantissa8(0)).unwrap();
        assert_eq!(codes[1].to_f32() / 2.0, 0.25);
        // SF = 1 without: 0.2 flushes
        let codes = quantize_block(&[3.4, 0.2], 1.0, Mantissa8(0)).unwrap();
        assert!(codes[1].is_zero());
        let codes = quantize_block(&[6.6], 1.0, Mantissa8(0)).unwrap();
        assert_eq!(codes[0].to_f32(), 6.0);
    }

    #[test]
    fn extreme_maxima_clamp() {
        let tiny = f32::from_bits(1);
        assert_eq!(mx_scale_for_max(tiny, true).exponent(), -127);
        assert_eq!(ocp_scale_for_max(tiny).exponent(), -127);
        assert_eq!(mx_scale_for_max(f32::MAX, true).exponent(), 126);
    }

    proptest! {
        #[test]
        fn ranges_hold(m in 1.0f32..2.0, e in -100i32..100) {
            let amax = m * 2f32.powi(e);
            let s = scaled_max(amax, ocp_scale_for_max(amax));
            prop_assert!((4.0..8.0).contains(&s));
            let s = scaled_max(amax, mx_scale_for_max(amax, false));
            prop_assert!(s > 3.0 && s <= 6.0);
            let s = scaled_max(amax, mx_scale_for_max(amax, true));
            prop_assert!(s > 3.5 && s <= 7.0);
        }
    }
}
