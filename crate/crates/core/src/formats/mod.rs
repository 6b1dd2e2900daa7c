//! Scalar codecs for the element and scale formats.
//!
//! All codecs are pure functions over single values. Rounding is
//! round-to-nearest with ties to the even code everywhere.

mod e2m1;
mod e4m3;
pub(crate) mod e8m0;
mod mantissa;

pub use e2m1::{decode_e2m1, encode_e2m1, Fp4Code, E2M1_GRID, E2M1_MAX};
pub use e4m3::{decode_e4m3, encode_e4m3, E4M3Value, E4M3_MAX};
pub use e8m0::{e8m0_floor, floor_log2, E8M0Floor, E8M0Scale, E8M0_MAX_EXP, E8M0_MIN_EXP};
pub use mantissa::{extract_mantissa8, Mantissa8};

pub(crate) use e2m1::quantize_magnitude;
pub(crate) use mantissa::extract_mantissa8_f64;
