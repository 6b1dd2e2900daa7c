use crate::error::{Error, Result};

const F32_MANTISSA_TOP8: u32 = 0x007F_8000;

/// Top eight fraction bits of a scale: the factor is `1 + m8/256`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Mantissa8(pub u8);

impl Mantissa8 {
    pub const IDENTITY: Mantissa8 = Mantissa8(0);

    pub const fn bits(self) -> u8 {
        self.0
    }

    /// `1 + m8/256`, exact in f32.
    pub fn factor(self) -> f32 {
        1.0 + self.0 as f32 / 256.0
    }

    /// Inverse factor at half precision, the value the GEMM epilogue applies.
    pub fn sigma(self) -> f64 {
        half::f16::from_f64(256.0 / (256.0 + self.0 as f64)).to_f64()
    }
}

/// `(bits(sf) & 0x007F8000) >> 15` for a positive finite single-precision
/// scale. Subnormal inputs are renormalized first so the field is always the
/// leading fraction bits of the significand.
pub fn extract_mantissa8(sf: f32) -> Result<Mantissa8> {
    if !(sf.is_finite() && sf > 0.0) {
        return Err(Error::NotPositive(sf as f64));
    }
    let sf = if sf.is_normal() { sf } else { sf * 2f32.powi(64) };
    Ok(Mantissa8(((sf.to_bits() & F32_MANTISSA_TOP8) >> 15) as u8))
}

/// Same field taken from a double, for ratios that overflow single precision.
pub(crate) fn extract_mantissa8_f64(sf: f64) -> Mantissa8 {
    debug_assert!(sf.is_normal() && sf > 0.0);
    Mantissa8(((sf.to_bits() >> 44) & 0xFF) as u8)
}
