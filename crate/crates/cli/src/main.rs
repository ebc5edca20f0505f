mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use phaseless::bench::Experiment;

#[derive(Parser)]
#[command(name = "phaseless", version, about = "Fourier phase retrieval: simulate, recover, enumerate ambiguities, benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct Common {
    /// Flat `key = value` configuration file
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override the configured seed
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads for parallel trials and restarts
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override a single configuration key
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args)]
struct RecoverArgs {
    #[command(flatten)]
    common: Common,
    /// er, gs, hio, gla, gd, sdp-masked, sdp-stft, sdp-minphase, stft-ls, kolmogorov or gespar
    #[arg(long)]
    method: Option<String>,
    /// Sparsity level for gespar
    #[arg(long)]
    sparsity: Option<usize>,
    /// Measurement directory, or path stem of the .json/.csv pair
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Ground-truth signal; adds the recovery error to the report
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
}

impl RecoverArgs {
    fn into_common(self) -> Common {
        let mut c = self.common;
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                c.set.push(format!("{k}={v}"));
            }
        };
        set("method", self.method);
        set("sparsity", self.sparsity.map(|s| s.to_string()));
        set("input", self.input.map(|p| p.display().to_string()));
        set("truth", self.truth.map(|p| p.display().to_string()));
        c
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a signal and write it with its measurements
    Simulate(Common),
    /// Run a recovery method on stored measurements
    Recover(RecoverArgs),
    /// Enumerate every signal consistent with classical measurements
    Ambiguities(Common),
    /// Reproduce one of the benchmark experiments
    Bench {
        #[arg(value_parser = parse_experiment)]
        experiment: Experiment,
        #[command(flatten)]
        common: Common,
        /// Paper-scale problem sizes instead of the desk-scale defaults
        #[arg(long)]
        full_scale: bool,
    },
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    s.parse().map_err(|e: phaseless::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(c) => commands::simulate(&c),
        Command::Recover(r) => commands::recover(&r.into_common()),
        Command::Ambiguities(c) => commands::ambiguities(&c),
        Command::Bench { experiment, common, full_scale } => commands::bench(experiment, &common, full_scale),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("phaseless: {}", e.message);
            ExitCode::from(e.kind.code())
        }
    }
}
