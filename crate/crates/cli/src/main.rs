mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "dint", version, about = "Direct intrinsic image decomposition")]
struct Cli {
    /// Overrides `train.seed` and the verification seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more detail (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network from the configured manifest.
    Train(TrainArgs),
    /// Decompose one image, or every image of a manifest.
    Decompose(DecomposeArgs),
    /// Score predicted albedo/shading PNGs against a manifest.
    Eval(EvalArgs),
    /// Derive a dataset: MIT-style shading or Sintel-style resynthesis.
    Synth(SynthArgs),
    /// Run the gradient, oracle and property suites.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, requires_all = ["out_albedo", "out_shading"], conflicts_with = "manifest")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out_albedo: Option<PathBuf>,
    #[arg(long)]
    pub out_shading: Option<PathBuf>,
    /// Decompose every image listed here into `--out-dir`.
    #[arg(long, requires = "out_dir")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Holds `<id>_albedo.png` and `<id>_shading.png` per sample.
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SynthMode {
    GenMitShading,
    ResynthSintel,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub mode: SynthMode,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Run only these suites (repeatable).
    #[arg(long = "suite")]
    pub suites: Vec<String>,
    /// Test hook: scale the analytic gradient of a layer (`prelu`) or a
    /// parameter prefix (`s2.conv3`) by FACTOR, e.g. `prelu=1.01`.
    #[arg(long, value_name = "TARGET[=FACTOR]")]
    pub corrupt_gradient: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let g = commands::Globals {
        seed: cli.seed,
        config: cli.config,
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(&g, &a),
        Command::Decompose(a) => commands::decompose(&g, &a),
        Command::Eval(a) => commands::eval(&g, &a),
        Command::Synth(a) => commands::synth(&g, &a),
        Command::Verify(a) => commands::verify(&g, &a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
