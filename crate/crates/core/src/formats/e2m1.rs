use crate::error::{Error, Result};

/// Magnitudes representable by E2M1, indexed by the low three code bits.
pub const E2M1_GRID: [f32; 8] = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0];

pub const E2M1_MAX: f32 = 6.0;

// Midpoints between consecutive grid magnitudes.
const MIDPOINTS: [f32; 7] = [0.25, 0.75, 1.25, 1.75, 2.5, 3.5, 5.0];

/// A 4-bit E2M1 code: bit 3 is the sign, bits 2..0 index [`E2M1_GRID`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Fp4Code(u8);

impl Fp4Code {
    pub const ZERO: Fp4Code = Fp4Code(0);

    /// Builds a code from its low four bits; higher bits are ignored.
    pub const fn from_bits(bits: u8) -> Self {
        Fp4Code(bits & 0x0F)
    }

    /// Negative zero is folded onto the positive zero code.
    pub const fn from_parts(negative: bool, index: u8) -> Self {
        let index = index & 0x07;
        if negative && index != 0 {
            Fp4Code(0x08 | index)
        } else {
            Fp4Code(index)
        }
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn is_negative(self) -> bool {
        self.0 & 0x08 != 0
    }

    pub const fn magnitude_index(self) -> u8 {
        self.0 & 0x07
    }

    pub const fn is_zero(self) -> bool {
        self.magnitude_index() == 0
    }

    pub fn to_f32(self) -> f32 {
        decode_e2m1(self)
    }

    /// Twice the decoded value as a small integer; every grid value times two
    /// is integral, which lets dot products of codes run in integer arithmetic.
    pub const fn doubled(self) -> i32 {
        const DOUBLED: [i32; 8] = [0, 1, 2, 3, 4, 6, 8, 12];
        let m = DOUBLED[self.magnitude_index() as usize];
        if self.is_negative() {
            -m
        } else {
            m
        }
    }
}

/// Nearest grid index for a non-negative magnitude, ties to the even index,
/// saturating at the top of the grid.
#[inline]
pub(crate) fn quantize_magnitude(a: f32) -> u8 {
    let mut idx = 0u8;
    for (i, &m) in MIDPOINTS.iter().enumerate() {
        if a > m {
            idx = i as u8 + 1;
        } else {
            if a == m && i % 2 == 1 {
                idx = i as u8 + 1;
            }
            break;
        }
    }
    idx
}

/// Encodes `v` onto the E2M1 grid.
///
/// Values above 6.0 in magnitude clamp to 6.0 when `saturate` is set and are
/// an error otherwise. Anything that rounds to zero, including `-0.0`,
/// produces the positive zero code.
pub fn encode_e2m1(v: f32, saturate: bool) -> Result<Fp4Code> {
    if !v.is_finite() {
        return Err(Error::NonFinite { index: 0, value: v });
    }
    let a = v.abs();
    if a > E2M1_MAX && !saturate {
        return Err(Error::Overflow(v));
    }
    Ok(Fp4Code::from_parts(v.is_sign_negative(), quantize_magnitude(a)))
}

pub fn decode_e2m1(c: Fp4Code) -> f32 {
    let m = E2M1_GRID[c.magnitude_index() as usize];
    if c.is_negative() {
        -m
    } else {
        m
    }
}
