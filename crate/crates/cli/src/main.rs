mod args;
mod commands;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::{Usage, VerifyFailed};

fn run(cli: &Cli, out: &mut impl Write) -> anyhow::Result<()> {
    let f = cli.format;
    match &cli.command {
        Command::Gen(a) => commands::gen(a, f, out),
        Command::Quantize(a) => commands::quantize(a, f, out),
        Command::Dequantize(a) => commands::dequantize(a, f, out),
        Command::Qsnr(a) => commands::qsnr(a, f, out),
        Command::Sweep(a) => commands::sweep(a, f, out),
        Command::Gemm(a) => commands::gemm(a, f, out),
        Command::Roofline(a) => commands::roofline(a, f, out),
        Command::LutDump(a) => commands::lut_dump(a, out),
    }
}

/// 1 for bad invocations, 2 for everything that failed on data.
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.is::<Usage>() {
        1
    } else if e.is::<VerifyFailed>() {
        2
    } else {
        match e.downcast_ref::<mxscale::Error>() {
            Some(mxscale::Error::Config(_)) => 1,
            _ => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(&cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
