use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod analyze;
mod compress;
mod report;
mod simulate;
mod train;

#[derive(Parser)]
#[command(
    name = "ssvq",
    version,
    about = "Vector-quantize weight matrices, fine-tune toy models, and simulate decode hardware"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Vq,
    Ssvq,
}

#[derive(Subcommand)]
enum Command {
    /// Compress every matrix of a weights file into a .ssvq container.
    Compress(compress::Args),
    /// Write random Gaussian matrices in the weights-file format.
    SynthWeights(compress::SynthArgs),
    /// Pretrain a toy classifier, then fine-tune it with VQ or SSVQ.
    Train(train::Args),
    /// Report how strongly the largest member gradients steer each codeword.
    AnalyzeGrads(analyze::Args),
    /// Estimate int8 vs SSVQ cycles on the accelerator model.
    Simulate(simulate::Args),
    /// Aggregate training summaries into a CSV table.
    Report(report::Args),
}

fn write_output(path: &PathBuf, contents: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents).map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SSVQ_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compress(a) => compress::run(a),
        Command::SynthWeights(a) => compress::synth(a),
        Command::Train(a) => train::run(a),
        Command::AnalyzeGrads(a) => analyze::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
