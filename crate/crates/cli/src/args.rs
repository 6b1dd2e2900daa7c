use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mxscale::{Distribution, MbsMode, SchemeConfig, Variant};

#[derive(Debug, Parser)]
#[command(name = "mxscale", version, about = "Block-scaled FP4 quantization experiments")]
pub struct Cli {
    /// Output format for reports.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic tensor.
    Gen(GenArgs),
    /// Quantize a tensor file.
    Quantize(QuantizeArgs),
    /// Reconstruct a tensor from a quantized file.
    Dequantize(DequantizeArgs),
    /// QSNR and flush-to-zero rate of one or more schemes.
    Qsnr(QsnrArgs),
    /// Macro-size ablation over activations, weights and their product.
    Sweep(SweepArgs),
    /// Quantized matrix product `A * B^T`.
    Gemm(GemmArgs),
    /// Epilogue overhead of macro-block scaling for a tile shape.
    Roofline(RooflineArgs),
    /// Dump the MBS-D error table as JSON.
    LutDump(LutDumpArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistKind {
    Gaussian,
    Lognormal,
    StudentT,
    Outliers,
}

#[derive(Debug, Clone, Args)]
pub struct DistArgs {
    #[arg(long, value_enum, default_value_t = DistKind::StudentT)]
    pub dist: DistKind,
    /// Degrees of freedom for student-t.
    #[arg(long, default_value_t = 4.0)]
    pub dof: f64,
    #[arg(long, default_value_t = 0.01)]
    pub outlier_rate: f64,
    #[arg(long, default_value_t = 100.0)]
    pub outlier_magnitude: f64,
}

impl DistArgs {
    pub fn distribution(&self) -> Distribution {
        match self.dist {
            DistKind::Gaussian => Distribution::Gaussian,
            DistKind::Lognormal => Distribution::LogNormal,
            DistKind::StudentT => Distribution::StudentT { dof: self.dof },
            DistKind::Outliers => {
                Distribution::GaussianWithOutliers { rate: self.outlier_rate, magnitude: self.outlier_magnitude }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape(pub usize, pub usize);

pub fn parse_shape(s: &str) -> Result<Shape, String> {
    let (r, c) = s.split_once(['x', 'X', ',']).ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok(Shape(p(r)?, p(c)?))
}

#[derive(Debug, Clone, Args)]
pub struct SchemeArgs {
    /// Elements per MBS macro block.
    #[arg(long, default_value_t = 128)]
    pub macro_size: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mbs_mode: ModeArg,
    /// Override the scheme's block size.
    #[arg(long)]
    pub block_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Lut,
}

impl SchemeArgs {
    pub fn config(&self, variant: Variant) -> SchemeConfig {
        let mut cfg = SchemeConfig::new(variant);
        cfg.macro_size = self.macro_size;
        cfg.mbs_mode = match self.mbs_mode {
            ModeArg::Exact => MbsMode::Exact,
            ModeArg::Lut => MbsMode::Lut,
        };
        if let Some(b) = self.block_size {
            cfg.block_size = b;
        }
        cfg
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub dist: DistArgs,
    #[arg(long, value_parser = parse_shape, default_value = "256x1024")]
    pub shape: Shape,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[arg(long)]
    pub scheme: Variant,
    #[command(flatten)]
    pub scheme_args: SchemeArgs,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Accept NaN and infinite entries in the input container.
    #[arg(long)]
    pub allow_non_finite: bool,
}

#[derive(Debug, Args)]
pub struct DequantizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QsnrArgs {
    /// Reference tensor; without it seeded synthetic tensors are used.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Comma-separated schemes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub scheme: Vec<Variant>,
    #[command(flatten)]
    pub scheme_args: SchemeArgs,
    #[command(flatten)]
    pub dist: DistArgs,
    #[arg(long, value_parser = parse_shape, default_value = "256x1024")]
    pub shape: Shape,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Synthetic tensors to average over.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "mbs-s,mbs-d")]
    pub schemes: Vec<Variant>,
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256,512")]
    pub macro_sizes: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mbs_mode: ModeArg,
    /// Activation shape; weights use the same number of columns.
    #[arg(long, value_parser = parse_shape, default_value = "128x1024")]
    pub shape: Shape,
    #[arg(long, default_value_t = 128)]
    pub weight_rows: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct GemmArgs {
    /// Left operand (`M x K`); generated when absent.
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// Right operand (`N x K`); generated when absent.
    #[arg(long)]
    pub b: Option<PathBuf>,
    #[arg(long, default_value = "mbs-s")]
    pub scheme_a: Variant,
    #[arg(long, default_value = "mbs-d")]
    pub scheme_b: Variant,
    #[command(flatten)]
    pub scheme_args: SchemeArgs,
    #[arg(long, default_value_t = 64)]
    pub m: usize,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 512)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub tile: TileArgs,
    /// Compare against the dequantize-then-multiply oracle.
    #[arg(long)]
    pub verify: bool,
    /// Write the product tensor here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TileArgs {
    #[arg(long, default_value_t = 128)]
    pub tm: usize,
    #[arg(long, default_value_t = 128)]
    pub tn: usize,
    #[arg(long, default_value_t = 128)]
    pub tk: usize,
}

#[derive(Debug, Args)]
pub struct RooflineArgs {
    #[command(flatten)]
    pub tile: TileArgs,
    /// Bytes per stored sigma value.
    #[arg(long, default_value_t = 2)]
    pub sigma_bytes: usize,
    /// Bytes per output element.
    #[arg(long, default_value_t = 4)]
    pub out_bytes: usize,
}

#[derive(Debug, Args)]
pub struct LutDumpArgs {
    /// Destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
