use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hyperbench::pipeline::{
    cmd_classify, cmd_evaluate, cmd_features, cmd_generate, cmd_pretrain, cmd_report, cmd_split, replay, PipelineConfig, PipelineError, RunManifest,
    StageArgs, StageRecord,
};

/// Hyperspectral benchmark pipeline: synthetic scenes, spatially disjoint
/// splits, patch features, masked-autoencoder pretraining and baselines.
#[derive(Parser)]
#[command(name = "hyperbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON pipeline configuration. Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Scene stem (`<stem>.json` header, `<stem>.bin` cube).
    #[arg(long, global = true)]
    scene: Option<PathBuf>,

    #[arg(long, global = true)]
    ground_truth: Option<PathBuf>,

    /// Evaluate a single split file.
    #[arg(long, global = true)]
    split_file: Option<PathBuf>,

    /// knn, ae+knn, mae+knn, rf, ae+rf or mae+rf (pretrain: mae or ae).
    #[arg(long, global = true)]
    model: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic scene and ground truth.
    Generate,
    /// Group polygons and solve for spatially disjoint splits.
    Split,
    /// Extract 400-dimensional patch features.
    Features,
    /// Pretrain the masked autoencoder and the autoencoder baseline.
    Pretrain,
    /// Train KNN and RF heads and predict the test pixels.
    Classify,
    /// Score predictions against the test pixels of each split.
    Evaluate,
    /// Average OA and macro-F1 over splits.
    Report,
    /// Rerun a recorded run and check its outputs are byte-identical.
    Replay {
        /// Path to a manifest.json.
        manifest: PathBuf,
    },
}

fn config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(scene) = &cli.scene {
        cfg.scene = Some(scene.clone());
    }
    if let Some(gt) = &cli.ground_truth {
        cfg.ground_truth = Some(gt.clone());
    }
    Ok(cfg)
}

fn print_record(rec: &StageRecord) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{:?}: {} output(s) in {:.2}s", rec.stage, rec.outputs.len(), rec.seconds);
    for path in rec.outputs.keys() {
        let _ = writeln!(out, "  {path}");
    }
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let args = StageArgs { model: cli.model.clone(), split_file: cli.split_file.clone() };
    if let Command::Replay { manifest } = &cli.command {
        let recorded = RunManifest::read(manifest)?;
        let out = cli.out.clone().unwrap_or_else(|| recorded.config.out.clone());
        let replayed = replay(&recorded, &out)?;
        println!("replayed {} stage(s) into {}; all outputs identical", replayed.stages.len(), out.display());
        return Ok(());
    }
    let cfg = config(cli)?;
    let rec = match cli.command {
        Command::Generate => cmd_generate(&cfg),
        Command::Split => cmd_split(&cfg),
        Command::Features => cmd_features(&cfg),
        Command::Pretrain => cmd_pretrain(&cfg, &args),
        Command::Classify => cmd_classify(&cfg, &args),
        Command::Evaluate => cmd_evaluate(&cfg, &args),
        Command::Report => cmd_report(&cfg),
        Command::Replay { .. } => unreachable!(),
    }?;
    print_record(&rec);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
