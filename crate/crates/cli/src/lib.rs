//! Command-line front end: hypervolume and Pareto utilities, training,
//! evaluation, the three-way scalarization comparison and the gradient
//! check report.

mod commands;
mod manifest;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use hvgan_core::moo::Orientation;
use thiserror::Error;

pub use commands::{
    cmd_compare, cmd_eval, cmd_gradcheck, cmd_hv, cmd_pareto, cmd_synth, cmd_train, format_sig, CompareRow,
    MODE_DIRS, RESULTS_FILE, RESULTS_HEADER, SHARED_CHECKPOINT_FILE,
};
pub use manifest::{FileEntry, RunManifest, CONFIG_COPY_FILE, MANIFEST_FILE};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] hvgan_core::error::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("gradient check failed for: {}", .0.join(", "))]
    GradcheckFailed(Vec<String>),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for validation and precondition failures, 2 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_io() => 2,
            CliError::Io { .. } => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Orient {
    Min,
    Max,
}

impl From<Orient> for Orientation {
    fn from(o: Orient) -> Self {
        match o {
            Orient::Min => Orientation::Minimize,
            Orient::Max => Orientation::Maximize,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hvgan", version, about = "Hypervolume scalarization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact hypervolume of a points file, optionally with a Monte-Carlo estimate.
    Hv {
        points: PathBuf,
        /// Reference point, comma separated.
        #[arg(long = "ref", value_delimiter = ',', allow_hyphen_values = true, required = true)]
        reference: Vec<f64>,
        #[arg(long, value_enum, default_value = "min")]
        orient: Orient,
        /// Monte-Carlo sample count.
        #[arg(long)]
        mc: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Prints the nondominated rows of a points file in input order.
    Pareto {
        points: PathBuf,
        #[arg(long, value_enum, default_value = "min")]
        orient: Orient,
    },
    /// Pretraining plus one adversarial run under the configured mode.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Prints `psnr,ssim,gmsd` for a test image against a reference.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Baseline, hypervolume and normalized hypervolume runs from one
    /// shared pretrained checkpoint.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Finite-difference report for every autodiff primitive.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
    /// Writes the seeded synthetic training corpus as PGM files.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Runs one parsed command, writing its report to `out`. Progress and
/// provenance lines go to stderr.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Hv {
            points,
            reference,
            orient,
            mc,
            seed,
        } => cmd_hv(&points, &reference, orient.into(), mc.map(|n| (n, seed)), out),
        Command::Pareto { points, orient } => cmd_pareto(&points, orient.into(), out),
        Command::Train { config } => cmd_train(&config, out),
        Command::Eval { reference, test } => cmd_eval(&reference, &test, out),
        Command::Compare { config } => cmd_compare(&config, out),
        Command::Gradcheck { seed, trials } => cmd_gradcheck(seed, trials, out),
        Command::Synth { out: dir, count, size, seed } => cmd_synth(&dir, count, size, seed, out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
