use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use psiconn::pipeline::{self, PipelineConfig};
use psiconn::Error;

/// Phase-slope-index connectome pipeline.
#[derive(Parser)]
#[command(name = "psiconn", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Master seed (required); fixes every random choice downstream.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Pipeline configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Fixed GA seed for every band.
    #[arg(long, global = true)]
    ga_seed: Option<u64>,

    /// Cross-validation folds for fitness and evaluation.
    #[arg(long, global = true)]
    folds: Option<usize>,

    /// Trees per committee.
    #[arg(long, global = true)]
    trees: Option<usize>,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic record and its ground truth.
    Synth,
    /// Cut the record into labelled epochs.
    Epoch,
    /// Per-epoch phase slope index; prints the mean matrix of each band.
    Psi,
    /// Build per-band feature tables.
    Features,
    /// GA feature selection per band.
    Select,
    /// Cross-validate the selected features and pick the best band.
    Evaluate,
    /// Graphs and graph metrics of the best band.
    Graph {
        /// One bundle and edge list per phase label.
        #[arg(long)]
        per_class: bool,
    },
    /// Friedman and Wilcoxon tests.
    Stats,
    /// Collect the tables and artifact checksums.
    Report,
    /// Every stage in order.
    Run {
        #[arg(long)]
        per_class: bool,
    },
    /// Print the resolved configuration.
    Config,
}

fn resolve(global: &GlobalArgs) -> psiconn::Result<PipelineConfig> {
    let mut cfg = match &global.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.output_dir = out.clone();
    }
    if global.ga_seed.is_some() {
        cfg.ga_seed = global.ga_seed;
    }
    if let Some(f) = global.folds {
        cfg.cv.folds = f;
        cfg.ga.cv_folds = f;
    }
    if let Some(t) = global.trees {
        cfg.cv.committee.n_trees = t;
        cfg.ga.committee.n_trees = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> psiconn::Result<()> {
    let mut cfg = resolve(&cli.global).map_err(|e| e.in_stage("config", cli.global.config.clone().unwrap_or_default()))?;
    let stage = match cli.command {
        Command::Synth => "synth",
        Command::Epoch => "epoch",
        Command::Psi => "psi",
        Command::Features => "features",
        Command::Select => "select",
        Command::Evaluate => "evaluate",
        Command::Graph { per_class } => {
            cfg.graph.per_class |= per_class;
            "graph"
        }
        Command::Stats => "stats",
        Command::Report => "report",
        Command::Run { per_class } => {
            cfg.graph.per_class |= per_class;
            let report = pipeline::run(&cfg)?;
            println!("best band: {}", report.best_band);
            for row in &report.band_summary {
                println!("{}\t{}\t{:.2}\t{:.4}", row.band, row.n_fcs, row.cv_accuracy_pct, row.kappa);
            }
            println!("{}", cfg.output_dir.join("report/report.json").display());
            return Ok(());
        }
        Command::Config => {
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            return Ok(());
        }
    };
    let written = pipeline::run_stage(&cfg, stage)?;
    if stage == "psi" {
        for band in &cfg.bands {
            let path = cfg.output_dir.join(format!("psi/{}_mean.csv", band.slug()));
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e }.in_stage("psi", &path))?;
            println!("# {}", band.name);
            print!("{text}");
        }
    } else {
        for p in written {
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.global.seed.is_none() {
        Cli::command()
            .error(ErrorKind::MissingRequiredArgument, "the `--seed <SEED>` flag is required")
            .exit();
    }
    if let Some(w) = cli.global.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                Error::Stage { stage, .. } => eprintln!("error in stage `{stage}`: {e}"),
                _ => eprintln!("error: {e}"),
            }
            ExitCode::FAILURE
        }
    }
}
