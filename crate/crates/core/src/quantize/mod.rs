//! Block and macro-block quantization schemes.
//!
//! Every scheme splits each row into 1xN blocks that share a power-of-two
//! (E8M0) or E4M3 scale. The MBS schemes additionally group consecutive blocks
//! into macro blocks carrying one [`Mantissa8`] factor each.
//!
//! Scales are persisted as the *dequantization* multiplier `D`, so an element
//! reconstructs as `decode(code) * D * sigma` where `sigma` is the inverse MBS
//! factor (1 for non-MBS schemes).

mod lut;
mod mbs;
mod qtensor;
mod scale;

pub use lut::{build_error_lut, mbs_dynamic_lut, ErrorLut, Regime, LUT_BINS, LUT_SLOTS};
pub use mbs::{macro_sse, mbs_dynamic_exact, mbs_static_mantissa};
pub use qtensor::{dequantize_tensor, quantize_nvfp4, quantize_tensor, BlockScales, QuantizedTensor};
pub use scale::{
    block_scale_16, block_scale_ocp, mx_scale_for_max, ocp_scale_for_max, quantize_block, ScaleRule,
};


use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::Mantissa8;

pub const DEFAULT_MACRO_SIZE: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// OCP MXFP4: 1x32 blocks, `D = 2^(floor(log2 amax) - 2)`.
    #[serde(rename = "ocp32")]
    Ocp32,
    /// 1x16 blocks with `SF = floor_pow2(6 / amax)`.
    #[serde(rename = "mx16")]
    Mx16,
    /// [`Variant::Mx16`] plus overflow-aware doubling.
    #[serde(rename = "mx16-oas")]
    Mx16Oas,
    /// Macro-block scaling, mantissa bit-extracted from the macro maximum.
    #[serde(rename = "mbs-s")]
    MbsStatic,
    /// Macro-block scaling, mantissa chosen by SSE search.
    #[serde(rename = "mbs-d")]
    MbsDynamic,
    /// 1x16 blocks with E4M3 scales and a per-tensor scale.
    #[serde(rename = "nvfp4")]
    Nvfp4,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Ocp32,
        Variant::Mx16,
        Variant::Mx16Oas,
        Variant::MbsStatic,
        Variant::MbsDynamic,
        Variant::Nvfp4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ocp32 => "ocp32",
            Variant::Mx16 => "mx16",
            Variant::Mx16Oas => "mx16-oas",
            Variant::MbsStatic => "mbs-s",
            Variant::MbsDynamic => "mbs-d",
            Variant::Nvfp4 => "nvfp4",
        }
    }

    pub fn is_mbs(self) -> bool {
        matches!(self, Variant::MbsStatic | Variant::MbsDynamic)
    }

    pub fn default_block_size(self) -> usize {
        match self {
            Variant::Ocp32 => 32,
            _ => 16,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MbsMode {
    /// Full quantize/dequantize SSE for every candidate.
    #[default]
    Exact,
    /// Weighted squared-relative-error lookup table.
    Lut,
}

impl FromStr for MbsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(MbsMode::Exact),
            "lut" => Ok(MbsMode::Lut),
            _ => Err(Error::Config(format!("unknown MBS mode '{s}'"))),
        }
    }
}

/// Ordered, deduplicated mantissas searched by MBS-Dynamic. Always contains
/// the identity factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CandidateSet {
    mantissas: Vec<Mantissa8>,
}

impl CandidateSet {
    pub fn new(mantissas: impl IntoIterator<Item = Mantissa8>) -> Result<Self> {
        let mut out: Vec<Mantissa8> = Vec::new();
        for m in mantissas {
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("empty candidate set".into()));
        }
        if !out.contains(&Mantissa8::IDENTITY) {
            return Err(Error::Config("candidate set must contain the identity mantissa".into()));
        }
        Ok(Self { mantissas: out })
    }

    /// The sixteen evenly spaced mantissas `j * 16`, `j = 0..15`.
    pub fn uniform16() -> Self {
        Self { mantissas: (0..16).map(|j| Mantissa8(j * 16)).collect() }
    }

    /// A copy with `m` appended when not already present.
    pub fn with(&self, m: Mantissa8) -> Self {
        let mut mantissas = self.mantissas.clone();
        if !mantissas.contains(&m) {
            mantissas.push(m);
        }
        Self { mantissas }
    }

    pub fn as_slice(&self) -> &[Mantissa8] {
        &self.mantissas
    }

    pub fn len(&self) -> usize {
        self.mantissas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mantissas.is_empty()
    }
}

impl Default for CandidateSet {
    fn default() -> Self {
        Self::uniform16()
    }
}

/// Selects a scheme and its granularity.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub variant: Variant,
    pub block_size: usize,
    /// Elements per macro block; only read by the MBS variants.
    pub macro_size: usize,
    pub mbs_mode: MbsMode,
    pub candidates: CandidateSet,
    /// Exact-mode MBS-D also tries each macro block's static mantissa.
    pub augment_static: bool,
}

impl SchemeConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            block_size: variant.default_block_size(),
            macro_size: DEFAULT_MACRO_SIZE,
            mbs_mode: MbsMode::Exact,
            candidates: CandidateSet::uniform16(),
            augment_static: true,
        }
    }

    pub fn ocp32() -> Self {
        Self::new(Variant::Ocp32)
    }

    pub fn mx16() -> Self {
        Self::new(Variant::Mx16)
    }

    pub fn mx16_oas() -> Self {
        Self::new(Variant::Mx16Oas)
    }

    pub fn mbs_static(macro_size: usize) -> Self {
        Self { macro_size, ..Self::new(Variant::MbsStatic) }
    }

    pub fn mbs_dynamic(macro_size: usize, mode: MbsMode) -> Self {
        Self { macro_size, mbs_mode: mode, ..Self::new(Variant::MbsDynamic) }
    }

    pub fn nvfp4() -> Self {
        Self::new(Variant::Nvfp4)
    }

    pub fn with_block_size(mut self, block_size: usize) -> Self {
        self.block_size = block_size;
        self
    }

    pub fn with_augment_static(mut self, on: bool) -> Self {
        self.augment_static = on;
        self
    }

    pub fn with_candidates(mut self, candidates: CandidateSet) -> Self {
        self.candidates = candidates;
        self
    }

    /// Scheme name, with a `-lut` suffix for table-driven MBS-D.
    pub fn label(&self) -> String {
        match (self.variant, self.mbs_mode) {
            (Variant::MbsDynamic, MbsMode::Lut) => "mbs-d-lut".into(),
            (v, _) => v.name().into(),
        }
    }

    pub(crate) fn scale_rule(&self) -> ScaleRule {
        match self.variant {
            Variant::Ocp32 => ScaleRule::Ocp,
            Variant::Mx16 => ScaleRule::Mx { oas: false },
            _ => ScaleRule::Mx { oas: true },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 || self.block_size % 2 != 0 {
            return Err(Error::Config(format!("block size {} must be even and nonzero", self.block_size)));
        }
        if self.variant == Variant::Nvfp4 && self.block_size != 16 {
            return Err(Error::Config("nvfp4 uses 1x16 blocks".into()));
        }
        if self.variant.is_mbs() {
            if self.macro_size == 0 || self.macro_size % self.block_size != 0 {
                return Err(Error::Config(format!(
                    "macro size {} must be a positive multiple of block size {}",
                    self.macro_size, self.block_size
                )));
            }
            if self.variant == Variant::MbsDynamic
                && self.mbs_mode == MbsMode::Lut
                && self.candidates.len() != LUT_SLOTS
            {
                return Err(Error::Config(format!(
                    "lut mode needs exactly {LUT_SLOTS} candidates, got {}",
                    self.candidates.len()
                )));
            }
        }
        Ok(())
    }
}
