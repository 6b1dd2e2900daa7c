//! Little-endian binary containers for plain and quantized tensors.
//!
//! Both start with a 4-byte magic, a `u32` header length and a JSON header.
//! Plain tensors (`MXT1`) follow with row-major `f32` data. Quantized tensors
//! (`MXQ1`) follow with packed codes, one byte per block scale, optionally
//! one byte per macro mantissa and optionally an `f64` tensor scale.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{E4M3Value, E8M0Scale, Mantissa8};
use crate::quantize::{BlockScales, QuantizedTensor, Variant};
use crate::tensor::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"MXT1";
pub const QUANT_MAGIC: &[u8; 4] = b"MXQ1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Accept NaN and infinite entries instead of rejecting the file.
    pub allow_non_finite: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorHeader {
    dtype: String,
    shape: [usize; 2],
    layout: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct QuantHeader {
    variant: Variant,
    shape: [usize; 2],
    block_size: usize,
    macro_size: Option<usize>,
    has_mbs: bool,
    has_tensor_scale: bool,
}

/// Byte length of each section of a serialized quantized tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SectionSizes {
    pub codes: usize,
    pub scales: usize,
    pub mbs: usize,
    pub tensor_scale: usize,
}

impl SectionSizes {
    pub fn of(q: &QuantizedTensor) -> Self {
        Self {
            codes: q.packed_codes().len(),
            scales: q.scales().len(),
            mbs: q.mbs_mantissas().map_or(0, |m| m.len()),
            tensor_scale: if q.tensor_scale().is_some() { 8 } else { 0 },
        }
    }

    pub fn total(&self) -> usize {
        self.codes + self.scales + self.mbs + self.tensor_scale
    }

    /// Storage cost per element of the per-element and per-block sections.
    pub fn bits_per_element(&self, elements: usize) -> f64 {
        ((self.codes + self.scales) * 8) as f64 / elements as f64
    }
}

fn frame(magic: &[u8; 4], header: &impl Serialize, body_len: usize) -> Vec<u8> {
    let h = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + h.len() + body_len);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(h.len() as u32).to_le_bytes());
    out.extend_from_slice(&h);
    out
}

/// Splits a container into its parsed header and body.
fn unframe<'a, H: for<'de> Deserialize<'de>>(path: &Path, magic: &[u8; 4], bytes: &'a [u8]) -> Result<(H, &'a [u8])> {
    if bytes.len() < 8 {
        return Err(Error::format(path, "file shorter than the fixed preamble"));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(
            path,
            format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&bytes[..4]), std::str::from_utf8(magic).unwrap()),
        ));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let rest = &bytes[8..];
    if rest.len() < hlen {
        return Err(Error::format(path, "truncated header"));
    }
    let header = serde_json::from_slice(&rest[..hlen]).map_err(|e| Error::format(path, format!("malformed header: {e}")))?;
    Ok((header, &rest[hlen..]))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let header = TensorHeader { dtype: "f32".into(), shape: [t.rows(), t.cols()], layout: "row-major".into() };
    let mut out = frame(TENSOR_MAGIC, &header, t.len() * 4);
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses an `MXT1` buffer; `path` only labels errors.
pub fn decode_tensor(path: &Path, bytes: &[u8], opts: LoadOptions) -> Result<Tensor> {
    let (h, body): (TensorHeader, _) = unframe(path, TENSOR_MAGIC, bytes)?;
    if h.dtype != "f32" {
        return Err(Error::format(path, format!("unsupported dtype {:?}", h.dtype)));
    }
    if h.layout != "row-major" {
        return Err(Error::format(path, format!("unsupported layout {:?}", h.layout)));
    }
    let [rows, cols] = h.shape;
    let want = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(path, "shape overflows"))?;
    if body.len() != want {
        return Err(Error::format(path, format!("payload is {} bytes, shape needs {want}", body.len())));
    }
    let data: Vec<f32> = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let t = Tensor::new(rows, cols, data)?;
    if !opts.allow_non_finite {
        t.check_finite()?;
    }
    Ok(t)
}

pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    write_atomic(path.as_ref(), &encode_tensor(t))
}

/// Loads a tensor, rejecting NaN and infinite entries.
pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    load_tensor_with(path, LoadOptions::default())
}

pub fn load_tensor_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Tensor> {
    let path = path.as_ref();
    decode_tensor(path, &read(path)?, opts)
}

pub fn encode_quant(q: &QuantizedTensor) -> Vec<u8> {
    let header = QuantHeader {
        variant: q.variant(),
        shape: [q.rows(), q.cols()],
        block_size: q.block_size(),
        macro_size: q.macro_size(),
        has_mbs: q.mbs_mantissas().is_some(),
        has_tensor_scale: q.tensor_scale().is_some(),
    };
    let sizes = SectionSizes::of(q);
    let mut out = frame(QUANT_MAGIC, &header, sizes.total());
    out.extend_from_slice(q.packed_codes());
    out.extend_from_slice(&q.scales().to_bytes());
    if let Some(m) = q.mbs_mantissas() {
        out.extend(m.iter().map(|x| x.bits()));
    }
    if let Some(s) = q.tensor_scale() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Parses an `MXQ1` buffer; `path` only labels errors.
pub fn decode_quant(path: &Path, bytes: &[u8]) -> Result<QuantizedTensor> {
    let (h, body): (QuantHeader, _) = unframe(path, QUANT_MAGIC, bytes)?;
    let [rows, cols] = h.shape;
    let bad = |m: String| Error::format(path, m);
    if h.block_size == 0 || cols % h.block_size != 0 {
        return Err(bad(format!("{cols} columns do not split into blocks of {}", h.block_size)));
    }
    let n = rows.checked_mul(cols).ok_or_else(|| bad("shape overflows".into()))?;
    let n_codes = n.div_ceil(2);
    let n_scales = n / h.block_size;
    let n_mbs = match (h.has_mbs, h.macro_size) {
        (false, _) => 0,
        (true, Some(m)) if m > 0 => rows * cols.div_ceil(m),
        (true, _) => return Err(bad("mantissa section without a macro size".into())),
    };
    let n_ts = if h.has_tensor_scale { 8 } else { 0 };
    let want = n_codes + n_scales + n_mbs + n_ts;
    if body.len() != want {
        return Err(bad(format!("body is {} bytes, header implies {want}", body.len())));
    }
    let (codes, rest) = body.split_at(n_codes);
    let (scale_bytes, rest) = rest.split_at(n_scales);
    let (mbs_bytes, ts_bytes) = rest.split_at(n_mbs);

    let scales = if h.variant == Variant::Nvfp4 {
        BlockScales::E4M3(scale_bytes.iter().map(|&b| E4M3Value::from_bits(b)).collect())
    } else {
        let s = scale_bytes
            .iter()
            .enumerate()
            .map(|(i, &b)| E8M0Scale::from_bits(b).ok_or(Error::CorruptScale { block: i, code: b }))
            .collect::<Result<Vec<_>>>()?;
        BlockScales::E8M0(s)
    };
    let mbs = h.has_mbs.then(|| mbs_bytes.iter().map(|&b| Mantissa8(b)).collect());
    let ts = h.has_tensor_scale.then(|| f64::from_le_bytes(ts_bytes.try_into().unwrap()));
    QuantizedTensor::from_parts(h.variant, rows, cols, h.block_size, h.macro_size, codes.to_vec(), scales, mbs, ts)
}

pub fn save_quant(path: impl AsRef<Path>, q: &QuantizedTensor) -> Result<()> {
    write_atomic(path.as_ref(), &encode_quant(q))
}

pub fn load_quant(path: impl AsRef<Path>) -> Result<QuantizedTensor> {
    let path = path.as_ref();
    decode_quant(path, &read(path)?)
}
