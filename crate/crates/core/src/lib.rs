//! Microscaling FP4 quantization.
//!
//! This crate implements block-scaled 4-bit (E2M1) quantization in the MX
//! family together with two refinements on top of power-of-two block scales:
//!
//! - **Overflow-aware scaling (OAS)**: doubles a 1x16 block scale whenever the
//!   scaled block maximum lands at or below 3.5, trading a bounded saturation
//!   at 6.0 for twice the downward dynamic range.
//! - **Macro-block scaling (MBS)**: an 8-bit mantissa factor shared by a 1x128
//!   macro block, applied before block quantization and divided back out in
//!   the GEMM epilogue. The factor is either bit-extracted from the macro
//!   maximum (static) or chosen by an SSE search over candidates (dynamic).
//!
//! Alongside the quantizers the crate carries the tooling needed to check
//! them: QSNR and flush-to-zero metrics, a functional tiled GEMM over
//! quantized operands with a high-precision oracle, a roofline overhead
//! calculator and a small binary container format.
//!
//! ```
//! use mxscale::{quantize_tensor, dequantize_tensor, qsnr_tensor, SchemeConfig, Tensor};
//!
//! let t = Tensor::new(1, 32, (0..32).map(|i| (i as f32 - 16.0) * 0.37).collect()).unwrap();
//! let q = quantize_tensor(&t, &SchemeConfig::mx16_oas()).unwrap();
//! let r = dequantize_tensor(&q).unwrap();
//! assert!(qsnr_tensor(&t, &r).unwrap().qsnr_db > 10.0);
//! ```

pub mod error;
pub mod formats;
pub mod gemm;
pub mod metrics;
pub mod quantize;
pub mod tensor;
pub mod tensorio;

pub use error::{Error, Result};
pub use formats::{E4M3Value, E8M0Scale, Fp4Code, Mantissa8};
pub use gemm::{matmul_quantized, matmul_reference, roofline_overhead, OverheadReport, TileConfig};
pub use metrics::{
    ablation_sweep, flush_to_zero_rate, generate_tensor, mean_qsnr, qsnr_matmul, qsnr_tensor,
    scale_exponent_span, Distribution, GeneratorSpec, QsnrReport, Role, ScaleSpanStats,
    SweepConfig, SweepResult, SweepRow,
};
pub use quantize::{
    build_error_lut, dequantize_tensor, mbs_dynamic_exact, mbs_dynamic_lut, mbs_static_mantissa,
    quantize_nvfp4, quantize_tensor, BlockScales, CandidateSet, ErrorLut, MbsMode,
    QuantizedTensor, SchemeConfig, Variant,
};
pub use tensor::Tensor;
