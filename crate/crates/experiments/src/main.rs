use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dlnlab_experiments::config::ExperimentKind;
use dlnlab_experiments::output::{emit_plots, write_outputs};
use dlnlab_experiments::{presets, resolve_config, run, ExpError, ExpResult};
use serde_json::json;

#[derive(Parser)]
#[command(name = "dlnlab", version, about = "BP vs PC learning dynamics in deep linear networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One-step target alignment (single point, depth, width, conditioning or batch sweeps).
    Align(RunArgs),
    /// Whole training runs with best-lr selection and trajectories.
    Train(RunArgs),
    /// Parameter sweeps: conditioning, batch size or learning rate.
    Sweep(RunArgs),
    /// Nonlinear autoencoder training.
    Autoencoder(RunArgs),
    /// Residual versus plain network alignment.
    Resnet(RunArgs),
    /// Write per-panel plot data from a finished run directory.
    EmitPlots {
        #[arg(long)]
        out: PathBuf,
    },
    /// List preset names.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Seed override: `3`, `0,1,5` or `0..10`.
    #[arg(long)]
    seeds: Option<String>,
    /// Directory holding the MNIST IDX files (falls back to DLNLAB_DATA_DIR).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Use full scale instead of desk scale for presets.
    #[arg(long)]
    full: bool,
}

fn accepts(command: &str, kind: ExperimentKind) -> bool {
    use ExperimentKind::*;
    match command {
        "align" => kind.is_one_step(),
        "sweep" => matches!(kind, ConditioningSweep | BatchSizeSweep | LrSweep | OneStepAlignment),
        "train" => kind == WholeTraining,
        "autoencoder" => kind == Autoencoder,
        "resnet" => kind == ResnetAlignment,
        _ => false,
    }
}

fn execute(command: &str, args: RunArgs) -> ExpResult<serde_json::Value> {
    let cfg = resolve_config(args.config.as_deref(), args.preset.as_deref(), args.full, args.seeds.as_deref())?;
    if !accepts(command, cfg.kind) {
        return Err(ExpError::Usage(format!("`{command}` cannot run an experiment of kind {:?}", cfg.kind)));
    }
    let data_dir = args.data_dir.or_else(|| std::env::var_os("DLNLAB_DATA_DIR").map(PathBuf::from));
    let start = Instant::now();
    let result = run(&cfg, data_dir.as_deref())?;
    let line = std::env::args().collect::<Vec<_>>().join(" ");
    let files = write_outputs(&args.out, &result, start.elapsed(), &line)?;
    Ok(json!({
        "name": cfg.name,
        "out": args.out.display().to_string(),
        "files": files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    }))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = ExpError::Usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(2);
        }
    };
    let outcome = match cli.command {
        Command::Align(a) => execute("align", a),
        Command::Train(a) => execute("train", a),
        Command::Sweep(a) => execute("sweep", a),
        Command::Autoencoder(a) => execute("autoencoder", a),
        Command::Resnet(a) => execute("resnet", a),
        Command::EmitPlots { out } => emit_plots(&out).map(|files| {
            json!({ "files": files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>() })
        }),
        Command::Presets => Ok(json!({ "presets": presets::PRESETS })),
    };
    match outcome {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
