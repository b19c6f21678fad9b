use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "hfrisk", version, about = "Heart-failure risk from ECG and long-term HRV")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    BoostedAft,
    MlpDeephit,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with ECG records and 24 h beat series.
    Synth {
        #[arg(long, default_value_t = 200)]
        subjects: usize,
        /// Log-time shift per 8 bpm of resting heart rate.
        #[arg(long, default_value_t = 0.8)]
        rest_hr_effect: f64,
    },
    /// Build the feature table for a cohort.
    Extract {
        #[arg(long)]
        cohort: PathBuf,
        /// Directory of `<subject_id>.csv` ECG files.
        #[arg(long)]
        ecg_dir: PathBuf,
        /// Directory of `<subject_id>.csv` beat-series files.
        #[arg(long)]
        rr_dir: Option<PathBuf>,
    },
    /// Fit a survival model on a feature table.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum)]
        model: Model,
        /// Leave out the sampled HRV columns.
        #[arg(long)]
        ecg_only: bool,
    },
    /// Survival curves and 5-year risk for every row.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
    },
    /// Survival and classification metrics on a labelled table.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
    },
    /// Strip-sampling correlation study, optionally with the model comparison.
    HrvStudy {
        /// Study settings (TOML); defaults when absent.
        #[arg(long)]
        study: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HFRISK_LOG", "warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
