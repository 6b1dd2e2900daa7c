use crate::error::{Error, Result};

pub const E8M0_MIN_EXP: i32 = -127;
pub const E8M0_MAX_EXP: i32 = 127;
const BIAS: i32 = 127;
const NAN_CODE: u8 = 0xFF;

/// Power-of-two scale stored as a biased 8-bit exponent. Code 255 is reserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct E8M0Scale(u8);

impl Default for E8M0Scale {
    fn default() -> Self {
        E8M0Scale::ONE
    }
}

impl E8M0Scale {
    pub const ONE: E8M0Scale = E8M0Scale(BIAS as u8);

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits != NAN_CODE).then_some(E8M0Scale(bits))
    }

    /// `2^exp`, or `None` outside `[-127, 127]`.
    pub fn from_exponent(exp: i32) -> Option<Self> {
        (E8M0_MIN_EXP..=E8M0_MAX_EXP)
            .contains(&exp)
            .then(|| E8M0Scale((exp + BIAS) as u8))
    }

    /// `2^exp` with the exponent clamped into range.
    pub fn saturating_from_exponent(exp: i32) -> Self {
        E8M0Scale((exp.clamp(E8M0_MIN_EXP, E8M0_MAX_EXP) + BIAS) as u8)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn exponent(self) -> i32 {
        self.0 as i32 - BIAS
    }

    pub fn to_f64(self) -> f64 {
        pow2(self.exponent())
    }

    /// Exact: f32 shares the bias, and code 0 lands on the subnormal 2^-127.
    pub fn to_f32(self) -> f32 {
        if self.0 == 0 {
            f32::from_bits(0x0040_0000)
        } else {
            f32::from_bits((self.0 as u32) << 23)
        }
    }
}

/// Result of rounding a value down to an E8M0 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct E8M0Floor {
    pub scale: E8M0Scale,
    /// Set when the exact floor exponent fell outside the representable range.
    pub clamped: bool,
}

/// Largest power of two not exceeding `x`.
pub fn e8m0_floor(x: f64) -> Result<E8M0Floor> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::NotPositive(x));
    }
    let e = floor_log2(x);
    Ok(E8M0Floor {
        scale: E8M0Scale::saturating_from_exponent(e),
        clamped: !(E8M0_MIN_EXP..=E8M0_MAX_EXP).contains(&e),
    })
}

/// Exact `floor(log2 x)` for positive finite `x`, subnormals included.
pub fn floor_log2(x: f64) -> i32 {
    debug_assert!(x > 0.0 && x.is_finite());
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7FF) as i32;
    if biased == 0 {
        let frac = bits & ((1u64 << 52) - 1);
        (63 - frac.leading_zeros() as i32) - 1074
    } else {
        biased - 1023
    }
}

/// Exact `2^e` for any exponent an f64 can hold.
pub(crate) fn pow2(e: i32) -> f64 {
    if e >= -1022 {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (e + 1074))
    }
}
