use crate::error::{Error, Result};

pub const E4M3_MAX: f32 = 448.0;
const MAX_FINITE_CODE: u8 = 0x7E;

/// OCP FP8 E4M3 (the "FN" variant): bias 7, no infinities, NaN at S.1111.111.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct E4M3Value(u8);

impl E4M3Value {
    pub const fn from_bits(bits: u8) -> Self {
        E4M3Value(bits)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn is_nan(self) -> bool {
        self.0 & 0x7F == 0x7F
    }

    pub fn to_f32(self) -> f32 {
        decode_e4m3(self)
    }
}

fn magnitude(code: u8) -> f32 {
    let exp = ((code >> 3) & 0x0F) as i32;
    let man = (code & 0x07) as f32;
    if exp == 0 {
        man / 8.0 * 2f32.powi(-6)
    } else {
        (1.0 + man / 8.0) * 2f32.powi(exp - 7)
    }
}

pub fn decode_e4m3(c: E4M3Value) -> f32 {
    if c.is_nan() {
        return f32::NAN;
    }
    let m = magnitude(c.0 & 0x7F);
    if c.0 & 0x80 != 0 {
        -m
    } else {
        m
    }
}

/// Round-to-nearest-even onto E4M3, clamping magnitudes above 448.
/// The sign bit is kept, so `-0.0` encodes to `0x80`.
pub fn encode_e4m3(v: f32) -> Result<E4M3Value> {
    if !v.is_finite() {
        return Err(Error::NonFinite { index: 0, value: v });
    }
    let sign = if v.is_sign_negative() { 0x80 } else { 0 };
    let a = v.abs();
    // Largest code whose magnitude does not exceed `a`.
    let (mut lo, mut hi) = (0u8, MAX_FINITE_CODE);
    if a >= E4M3_MAX {
        return Ok(E4M3Value(sign | MAX_FINITE_CODE));
    }
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if magnitude(mid) <= a {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let below = lo;
    let above = below + 1;
    let halfway = (magnitude(below) + magnitude(above)) / 2.0;
    let code = if a < halfway {
        below
    } else if a > halfway {
        above
    } else if below % 2 == 0 {
        below
    } else {
        above
    };
    Ok(E4M3Value(sign | code))
}
