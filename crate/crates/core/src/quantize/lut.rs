//! Memoized squared-relative-error table for MBS-Dynamic.
//!
//! Two regimes (scaled value below or above one), sixteen candidate slots and
//! 64 uniform bins per regime: 2048 half-precision entries in total.

use half::f16;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::formats::{decode_e2m1, Mantissa8};

use super::mbs::{argmin, check_finite};
use super::scale::{encode_scaled, quant_multiplier, sub_block_scale, ScaleRule};
use super::CandidateSet;

pub const LUT_SLOTS: usize = 16;
pub const LUT_BINS: usize = 64;
const NORMAL_LO: f64 = 1.0;
const NORMAL_HI: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `v` in `[0, 1)`.
    Subnormal,
    /// `v` in `[1, 8)`; larger values share the last bin.
    Normal,
}

impl Regime {
    fn index(self) -> usize {
        match self {
            Regime::Subnormal => 0,
            Regime::Normal => 1,
        }
    }

    /// Lower and upper edge of the regime's binned interval.
    pub fn span(self) -> (f64, f64) {
        match self {
            Regime::Subnormal => (0.0, NORMAL_LO),
            Regime::Normal => (NORMAL_LO, NORMAL_HI),
        }
    }

    pub fn bin_center(self, bin: usize) -> f64 {
        let (lo, hi) = self.span();
        lo + (bin as f64 + 0.5) * (hi - lo) / LUT_BINS as f64
    }
}

/// Bin holding the scaled magnitude `v`.
pub fn bin_of(v: f32) -> (Regime, usize) {
    let v = v.abs() as f64;
    let regime = if v < NORMAL_LO { Regime::Subnormal } else { Regime::Normal };
    let (lo, hi) = regime.span();
    let bin = ((v - lo) * LUT_BINS as f64 / (hi - lo)).floor() as usize;
    (regime, bin.min(LUT_BINS - 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorLut {
    candidates: CandidateSet,
    entries: Vec<f16>,
}

impl ErrorLut {
    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[f16] {
        &self.entries
    }

    fn offset(regime: Regime, slot: usize, bin: usize) -> usize {
        (regime.index() * LUT_SLOTS + slot) * LUT_BINS + bin
    }

    pub fn entry(&self, regime: Regime, slot: usize, bin: usize) -> f32 {
        self.entries[Self::offset(regime, slot, bin)].to_f32()
    }

    /// Squared relative error predicted for scaled value `v` under `slot`.
    #[inline]
    pub fn lookup(&self, slot: usize, v: f32) -> f32 {
        let (regime, bin) = bin_of(v);
        self.entry(regime, slot, bin)
    }
}

/// Squared relative error of quantizing `u` on the saturating E2M1 grid.
fn grid_error_sq(u: f64) -> f64 {
    let q = decode_e2m1(encode_scaled(u as f32, 1.0)) as f64;
    ((q - u) / u).powi(2)
}

pub fn build_error_lut(candidates: &CandidateSet) -> Result<ErrorLut> {
    if candidates.len() != LUT_SLOTS {
        return Err(Error::Config(format!(
            "error table needs exactly {LUT_SLOTS} candidates, got {}",
            candidates.len()
        )));
    }
    let mut entries = vec![f16::ZERO; 2 * LUT_SLOTS * LUT_BINS];
    for regime in [Regime::Subnormal, Regime::Normal] {
        for (slot, m) in candidates.as_slice().iter().enumerate() {
            let f = m.factor() as f64;
            for bin in 0..LUT_BINS {
                let u = regime.bin_center(bin) * f;
                entries[ErrorLut::offset(regime, slot, bin)] = f16::from_f64(grid_error_sq(u));
            }
        }
    }
    Ok(ErrorLut { candidates: candidates.clone(), entries })
}

/// Table-driven MBS-Dynamic: per candidate, sums `x^2 * T[v, m]` with
/// `v = |x| * SF` and `SF` the OAS block scale of the factor-scaled block.
pub fn mbs_dynamic_lut(xs: &[f32], lut: &ErrorLut, candidates: &CandidateSet) -> Result<Mantissa8> {
    if candidates != lut.candidates() {
        return Err(Error::Incompatible("table was built for a different candidate set".into()));
    }
    check_finite(xs)?;
    Ok(lut_select(xs, 16, lut))
}

pub(crate) fn lut_select(xs: &[f32], block_size: usize, lut: &ErrorLut) -> Mantissa8 {
    let cands = lut.candidates().as_slice();
    let slot_of = |m: Mantissa8| cands.iter().position(|&c| c == m).unwrap_or(0);
    argmin(cands.iter().copied(), |m| {
        let slot = slot_of(m);
        let f = m.factor();
        let mut cost = 0.0f64;
        for sub in xs.chunks(block_size) {
            let sf = quant_multiplier(sub_block_scale(sub, ScaleRule::Mx { oas: true }, f));
            for &x in sub {
                if x != 0.0 {
                    let w = x as f64 * x as f64;
                    cost += w * lut.lookup(slot, x.abs() * sf) as f64;
                }
            }
        }
        cost
    })
    .expect("table candidate sets are never empty")
}

#[derive(Serialize)]
struct LutDump {
    slots: usize,
    bins: usize,
    candidates: Vec<u8>,
    subnormal_span: (f64, f64),
    normal_span: (f64, f64),
    /// `[regime][slot][bin]`
    entries: Vec<Vec<Vec<f32>>>,
}

impl ErrorLut {
    /// Nested JSON view for inspection.
    pub fn to_json(&self) -> serde_json::Value {
        let entries = [Regime::Subnormal, Regime::Normal]
            .iter()
            .map(|&r| {
                (0..LUT_SLOTS)
                    .map(|s| (0..LUT_BINS).map(|b| self.entry(r, s, b)).collect())
                    .collect()
            })
            .collect();
        let dump = LutDump {
            slots: LUT_SLOTS,
            bins: LUT_BINS,
            candidates: self.candidates.as_slice().iter().map(|m| m.0).collect(),
            subnormal_span: Regime::Subnormal.span(),
            normal_span: Regime::Normal.span(),
            entries,
        };
        serde_json::to_value(dump).expect("table serializes")
    }
}
