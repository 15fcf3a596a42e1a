//! `cfmlp` — train, check, tune, and serve per-user recommenders from the
//! command line.
//!
//! Every run is pinned by one `--seed`: per-user, per-trial, and per-epoch
//! randomness are all derived from it, so identical invocations produce
//! byte-identical model files and tables. Logs go to stderr, data tables
//! to stdout; `--quiet` silences the logs without touching the tables.
//!
//! Exit codes are stable: 0 success, 1 configuration or I/O failure,
//! 2 gradient-verification failure.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::fmt;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "cfmlp",
    version,
    about = "Per-user neural recommenders over item features",
    max_term_width = 100
)]
struct Cli {
    /// Key-value configuration file; relative paths inside it are resolved
    /// against its own directory
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Base random seed; every stochastic choice in the run derives from it
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,

    /// Cap the number of worker threads used for parallel sections
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Suppress progress logs on stderr; stdout tables are unaffected
    #[arg(long, global = true)]
    quiet: bool,

    /// Backpropagate hidden layers with the logistic derivative a*(1-a)
    /// regardless of the configured activation; with tanh or relu hidden
    /// units this mode fails gradient checks by design
    #[arg(long, global = true)]
    paper_literal_backprop: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per user and write `<user_id>.model` files
    Train {
        /// Train only these users (repeatable; default: every user)
        #[arg(long, value_name = "ID")]
        user: Vec<String>,
        /// After a user fails, keep training the rest (the exit code is
        /// still 1)
        #[arg(long)]
        keep_going: bool,
    },
    /// Compare analytic gradients against central finite differences
    Gradcheck,
    /// Search the configured hyperparameter space on a holdout split
    Tune {
        /// Sample cells at random instead of sweeping the whole grid
        #[arg(long)]
        random: bool,
        /// Number of random-search trials
        #[arg(long, value_name = "N")]
        trials: Option<usize>,
        /// Tune on this user's examples (default: the first user)
        #[arg(long, value_name = "ID")]
        user: Option<String>,
    },
    /// Score candidate items with a trained user model
    Recommend {
        /// User whose model file to load
        #[arg(long, value_name = "ID")]
        user: String,
        /// Candidate items file (`item_id,f1,...,fn`)
        #[arg(long, value_name = "PATH")]
        candidates: PathBuf,
        /// Override the decision threshold scores are compared against
        #[arg(long, value_name = "T")]
        threshold: Option<f64>,
    },
    /// Train on a per-user holdout split and report accuracy and cost for
    /// the network, a single-layer variant, and the factor baseline
    Eval,
}

/// Command failures, each carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad or missing configuration: exit 1.
    Config(String),
    /// Filesystem trouble: exit 1.
    Io(String),
    /// An error surfaced by the library: exit 1, except gradient-check
    /// failures which exit 2.
    Core(cfmlp::error::Error),
    /// A standalone gradient check exceeded its tolerance: exit 2.
    GradCheck { epsilon: f64, tolerance: f64 },
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) | CliError::Io(msg) => f.write_str(msg),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::GradCheck { epsilon, tolerance } => write!(
                f,
                "gradient check failed: epsilon {epsilon:e} exceeds tolerance {tolerance:e}"
            ),
        }
    }
}

impl From<cfmlp::error::Error> for CliError {
    fn from(e: cfmlp::error::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::GradCheck { .. } => 2,
            CliError::Core(cfmlp::error::Error::GradCheckFailed { .. }) => 2,
            _ => 1,
        }
    }
}

fn main() {
    let cli = Cli::try_parse().unwrap_or_else(|e| {
        use clap::error::ErrorKind;
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            print!("{e}");
            std::process::exit(0);
        }
        eprint!("{e}");
        std::process::exit(1);
    });

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            std::process::exit(1);
        }
        // A failure here means a pool already exists, which only limits the
        // cap, not correctness; results are ordered deterministically either
        // way.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }

    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = config::RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    cfg.train.paper_literal_backprop = cli.paper_literal_backprop;

    let ctx = commands::Ctx {
        cfg,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Train { user, keep_going } => commands::train(&ctx, &user, keep_going),
        Command::Gradcheck => commands::gradcheck(&ctx),
        Command::Tune {
            random,
            trials,
            user,
        } => commands::tune(&ctx, random, trials, user.as_deref()),
        Command::Recommend {
            user,
            candidates,
            threshold,
        } => commands::recommend(&ctx, &user, &candidates, threshold),
        Command::Eval => commands::eval(&ctx),
    }
}
