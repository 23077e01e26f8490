mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Settings;
use error::{CliError, CliResult};

/// Hybrid deep features for scene image classification.
///
/// Shared settings can come from a flat JSON file (`--config`); any flag
/// given on the command line overrides the file's value.
#[derive(Parser)]
#[command(name = "hdf", version)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Flat JSON config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Object-centric backbone weights (HDFW)
    #[arg(long, global = true)]
    object_weights: Option<PathBuf>,
    /// Scene-centric backbone weights (HDFW)
    #[arg(long, global = true)]
    scene_weights: Option<PathBuf>,
    /// Aggregation: max, mean, min or concat
    #[arg(long, global = true)]
    pool: Option<String>,
    /// hdf, op, ow, sp or sw
    #[arg(long, global = true)]
    feature_type: Option<String>,
    /// Dataset root with one subdirectory per class
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Split protocol: mit67, scene15, event8 or custom
    #[arg(long, global = true)]
    protocol: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file or directory, depending on the command
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output on stderr (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Write the 20 part images and their masks for one image
    Slice {
        image: PathBuf,
    },
    /// Extract one feature vector per dataset image into an HDFC cache
    Extract,
    /// Train a one-vs-rest model on an HDFC cache
    Train {
        #[arg(long)]
        features: PathBuf,
        /// Fixed cost; grid-searched over 1..=100 when omitted
        #[arg(long)]
        cost: Option<u32>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Accuracy of a model on an HDFC cache
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
    },
    /// Full protocol: extract, tune, train and test every feature configuration
    Experiment {
        #[arg(long)]
        train_per_class: Option<usize>,
        /// A count or "rest"
        #[arg(long)]
        test_per_class: Option<String>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
        /// JSON split listing to use instead of a generated split
        #[arg(long)]
        split_file: Option<PathBuf>,
        /// Descriptor cache directory (default: <out>/cache)
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        no_cache: bool,
    },
    /// Check weight files and print their network summary
    ValidateWeights {
        paths: Vec<PathBuf>,
    },
    /// Time the fast convolution against the nested-loop baseline
    Bench {
        #[arg(long, default_value_t = 64)]
        in_channels: usize,
        #[arg(long, default_value_t = 64)]
        out_channels: usize,
        #[arg(long, default_value_t = 224)]
        size: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Write random weights (compact stub or full VGG16 trunk)
    GenWeights {
        /// object or scene
        #[arg(long)]
        kind: String,
        /// compact or vgg16
        #[arg(long, default_value = "compact")]
        arch: String,
    },
    /// Write a synthetic class-per-directory PPM dataset
    Synth {
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 30)]
        per_class: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
    },
}

fn settings(shared: &Shared, command: &Command) -> CliResult<Settings> {
    let base = match &shared.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    let mut flags = Settings {
        object_weights: shared.object_weights.clone(),
        scene_weights: shared.scene_weights.clone(),
        pool: shared.pool.clone(),
        feature_type: shared.feature_type.clone(),
        dataset: shared.dataset.clone(),
        protocol: shared.protocol.clone(),
        seed: shared.seed,
        out: shared.out.clone(),
        threads: shared.threads,
        ..Default::default()
    };
    match command {
        Command::Train { folds, .. } => flags.folds = *folds,
        Command::Experiment { train_per_class, test_per_class, repetitions, folds, split_file, cache_dir, .. } => {
            flags.train_per_class = *train_per_class;
            flags.test_per_class = test_per_class.clone().map(|t| match t.parse::<u64>() {
                Ok(n) => serde_json::Value::from(n),
                Err(_) => serde_json::Value::from(t),
            });
            flags.repetitions = *repetitions;
            flags.folds = *folds;
            flags.split_file = split_file.clone();
            flags.cache_dir = cache_dir.clone();
        }
        _ => {}
    }
    Ok(base.overlay(flags))
}

fn run(cli: Cli) -> CliResult<()> {
    let s = settings(&cli.shared, &cli.command)?;
    if let (Some(n), false) = (s.threads()?, matches!(cli.command, Command::Bench { .. })) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.into()))?;
    }
    match cli.command {
        Command::Slice { image } => commands::slice(&s, &image),
        Command::Extract => commands::extract(&s),
        Command::Train { features, cost, .. } => commands::train(&s, &features, cost),
        Command::Eval { model, features } => commands::eval(&s, &model, &features),
        Command::Experiment { no_cache, .. } => commands::experiment(&s, no_cache),
        Command::ValidateWeights { paths } => commands::validate_weights(&s, &paths),
        Command::Bench { in_channels, out_channels, size, repeats } => {
            commands::bench(&s, in_channels, out_channels, size, repeats)
        }
        Command::GenWeights { kind, arch } => commands::gen_weights(&s, &kind, &arch),
        Command::Synth { classes, per_class, size } => commands::synth(&s, classes, per_class, size),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.shared.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("hdf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(CliError::Internal(anyhow::anyhow!("panic")).exit_code() as u8),
    }
}
