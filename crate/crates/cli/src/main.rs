mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit status 1: the invocation itself was wrong.
const EXIT_USAGE: u8 = 1;
/// Exit status 2: inputs were read but are unusable.
const EXIT_DATA: u8 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(crowdtest::Error),
}

impl From<crowdtest::Error> for CliError {
    fn from(e: crowdtest::Error) -> Self {
        CliError::Data(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "crowdtest", version, about = "Real-vs-simulated crowd comparison pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Pipeline config file (TOML, one section per stage).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for this stage; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a raw detector track file into a metre-scaled, gap-repaired dataset.
    Ingest(commands::IngestArgs),
    /// Draw fixed-length clips whose population lies in a range.
    ExtractClips(commands::ExtractArgs),
    /// Route, entry-time and speed distributions of a clip plus a scenario file.
    Calibrate(commands::CalibrateArgs),
    /// Run a social-force scenario and write its tracks.
    Simulate(commands::SimulateArgs),
    /// Upsample a clip to the display rate and add heading flicks.
    AddNoise(commands::NoiseArgs),
    /// Per-frame polarization and nearest-neighbour distance.
    Metrics(commands::MetricsArgs),
    /// Mean descriptors of several clips ordered by crowd size.
    Sweep(commands::SweepArgs),
    /// Render one clip as a PNG sequence.
    Render(commands::RenderArgs),
    /// Compose six real/simulated pairs into a participant bundle and answer key.
    TrialBuild(commands::TrialBuildArgs),
    /// Score answer sheets against a key and report the statistics.
    TrialScore(commands::TrialScoreArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::ExtractClips(a) => commands::extract_clips(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::AddNoise(a) => commands::add_noise(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Render(a) => commands::render(a),
        Command::TrialBuild(a) => commands::trial_build(a),
        Command::TrialScore(a) => commands::trial_score(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
