use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use osrlab_cli::{run_pipeline, run_stage, validate_config, CliError, Stage, StageStatus};

#[derive(Parser)]
#[command(name = "osrlab", about = "Config-driven open-set recognition pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Pipeline configuration file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Split the base dataset into KK/UU folds and materialize the aux set
    Split(StageArgs),
    /// Train the closed-set backbone on the KK training fold
    TrainBackbone(StageArgs),
    /// Score the auxiliary dataset with the trained backbone
    ScoreAux(StageArgs),
    /// Sweep thresholds and fit the AUROC-vs-T cubic (or pin a fixed T)
    FitThreshold(StageArgs),
    /// Mine the known-unknown trainer set at the selected threshold
    Mine(StageArgs),
    /// Train the confidence subnetwork on FC1 features
    TrainCs(StageArgs),
    /// Estimate the confidence cut-off and assemble the recognizer
    Assemble(StageArgs),
    /// Evaluate AUROC, accuracy, entropy and MMD diagnostics
    Evaluate(StageArgs),
    /// Aggregate per-seed metrics into the final report
    Report(StageArgs),
    /// Run all nine stages in order
    Pipeline(StageArgs),
    /// Parse and validate a configuration file
    Validate(StageArgs),
}

fn load(args: &StageArgs) -> Result<osrlab_cli::PipelineConfig, CliError> {
    let mut cfg = validate_config(&args.config)?;
    if let Some(out) = &args.out {
        cfg.run.out_dir = out.clone();
    }
    Ok(cfg)
}

fn stage_command(args: &StageArgs, stage: Stage) -> Result<(), CliError> {
    let cfg = load(args)?;
    let run = run_stage(&cfg, stage)?;
    match run.status {
        StageStatus::Ran => println!("{}: done", stage.name()),
        StageStatus::Skipped => println!("{}: up to date (inputs unchanged)", stage.name()),
    }
    Ok(())
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Split(a) => stage_command(a, Stage::Split),
        Command::TrainBackbone(a) => stage_command(a, Stage::TrainBackbone),
        Command::ScoreAux(a) => stage_command(a, Stage::ScoreAux),
        Command::FitThreshold(a) => stage_command(a, Stage::FitThreshold),
        Command::Mine(a) => stage_command(a, Stage::Mine),
        Command::TrainCs(a) => stage_command(a, Stage::TrainCs),
        Command::Assemble(a) => stage_command(a, Stage::Assemble),
        Command::Evaluate(a) => stage_command(a, Stage::Evaluate),
        Command::Report(a) => stage_command(a, Stage::Report),
        Command::Pipeline(a) => {
            let cfg = load(a)?;
            for run in run_pipeline(&cfg)? {
                match run.status {
                    StageStatus::Ran => println!("{}: done", run.stage.name()),
                    StageStatus::Skipped => println!("{}: up to date", run.stage.name()),
                }
            }
            println!("pipeline complete; report in {}", cfg.run.out_dir.join("report").display());
            Ok(())
        }
        Command::Validate(a) => {
            let cfg = load(a)?;
            println!("config ok: {} seeds, out_dir {}", cfg.run.seeds.len(), cfg.run.out_dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
