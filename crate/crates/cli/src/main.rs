//! Command-line frontend: hashing, collision attacks, bank management,
//! baseline evaluation, threshold calibration, and transfer reporting.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 the attack ran but did
//! not collide, 3 threshold calibration failed to reach the precision
//! target.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "perchash",
    version,
    about = "Perceptual image hashes and gradient-based collision attacks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print an image's hash as lowercase hex.
    Hash(HashArgs),
    /// Perturb a source image until its hash collides with a target's.
    Attack(Box<AttackArgs>),
    /// Build or query hash banks.
    Bank(BankCmd),
    /// Baseline accuracy and incidental collision rates.
    Eval(EvalCmd),
    /// Calibrate a precision-targeted match threshold.
    Calibrate(CalibrateArgs),
    /// Aggregate saved attack artifacts into a transfer matrix.
    Transfer(TransferArgs),
}

#[derive(Args)]
struct HashArgs {
    /// Image file (PNG or binary PPM).
    image: String,
    /// Hash algorithm: ahash, dhash, or phash.
    #[arg(long)]
    algo: String,
    /// Hash length in bits: 64, 144, or 256.
    #[arg(long)]
    bits: usize,
}

#[derive(Args)]
struct AttackArgs {
    /// Source image to perturb.
    #[arg(long)]
    source: Option<String>,
    /// Target image whose hash should be matched.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    bits: Option<String>,
    /// Objective: hinge (default), hash-l2, or interior.
    #[arg(long)]
    objective: Option<String>,
    /// Interior split points, comma separated (p1, p2, p3).
    #[arg(long)]
    splits: Option<String>,
    /// Learning rate in 8-bit intensity levels (default 5.0).
    #[arg(long)]
    lr: Option<String>,
    /// Content (perturbation) weight (default 0.001).
    #[arg(long)]
    c: Option<String>,
    /// Hinge margin in (0, 0.5) (default 0.45).
    #[arg(long)]
    delta: Option<String>,
    /// Sigmoid temperature (default 50).
    #[arg(long)]
    tau: Option<String>,
    /// Success Hamming distance (default 0 = exact collision).
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Where to write the adversarial image (16-bit PNG).
    #[arg(long)]
    out: Option<String>,
    /// Where to write the JSON report.
    #[arg(long)]
    report: Option<String>,
    /// Optional per-iteration trace CSV (iter,loss,hamming).
    #[arg(long)]
    trace: Option<String>,
    /// Solve the p1 split exactly instead of running Adam (requires
    /// --objective interior --splits p1).
    #[arg(long)]
    stage_exact: bool,
    /// Max-abs grid residual for --stage-exact (default 1e-9).
    #[arg(long)]
    stage_tol: Option<String>,
    /// key=value file supplying defaults for any flag above.
    #[arg(long)]
    config: Option<String>,
}

#[derive(Args)]
struct BankCmd {
    #[command(subcommand)]
    action: BankAction,
}

#[derive(Subcommand)]
enum BankAction {
    /// Hash every image in a directory into a bank file.
    Build {
        /// Directory of corpus images.
        #[arg(long)]
        dir: String,
        #[arg(long)]
        algo: String,
        #[arg(long)]
        bits: usize,
        /// Output bank file.
        #[arg(long)]
        out: String,
    },
    /// Query a bank with an image and print the top-k neighbors.
    Query {
        #[arg(long)]
        bank: String,
        #[arg(long)]
        image: String,
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
}

#[derive(Args)]
struct EvalCmd {
    #[command(subcommand)]
    action: EvalAction,
}

#[derive(Subcommand)]
enum EvalAction {
    /// Augmented nearest-neighbor top-k accuracy.
    Baselines {
        #[arg(long)]
        bank: String,
        /// Corpus directory matching the bank ids.
        #[arg(long)]
        dir: String,
        /// Comma-separated k values.
        #[arg(long, default_value = "1,5,10")]
        ks: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated augmentation labels; defaults to the standard
        /// suite (gauss:0.02, brightness, contrast, rescale:0.9, boxblur3).
        #[arg(long)]
        augs: Option<String>,
        #[arg(long)]
        out: String,
    },
    /// Incidental collision rate of one or more banks.
    Collisions {
        /// Bank files (repeatable).
        #[arg(long, required = true)]
        bank: Vec<String>,
        #[arg(long)]
        out: String,
    },
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    bank: String,
    #[arg(long)]
    dir: String,
    /// Precision target in (0, 1].
    #[arg(long, default_value_t = 0.99)]
    precision: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    augs: Option<String>,
    /// Calibration CSV to write (algo,bits,precision,threshold).
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct TransferArgs {
    /// Directory of attack report JSON files.
    #[arg(long)]
    reports: String,
    /// Eval hash specs, e.g. ahash:256,dhash:256,phash:256.
    #[arg(long)]
    eval_specs: String,
    /// Calibration CSV mapping each eval spec to its threshold.
    #[arg(long)]
    thresholds: String,
    #[arg(long)]
    out: String,
}

/// Non-usage failure states with dedicated exit codes.
pub enum CmdFailure {
    /// Bad flags, unreadable inputs, invalid formats.
    Usage(String),
    /// The attack ran to completion without colliding.
    NoCollision,
    /// No threshold reaches the precision target.
    Uncalibratable,
}

impl CmdFailure {
    fn exit_code(&self) -> u8 {
        match self {
            CmdFailure::Usage(_) => 1,
            CmdFailure::NoCollision => 2,
            CmdFailure::Uncalibratable => 3,
        }
    }
}

/// Die quietly on a closed pipe (`perchash ... | head`) instead of
/// panicking on the write error.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let usage_ok = matches!(
                err.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            );
            let _ = err.print();
            return if usage_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };

    let outcome = match cli.command {
        Command::Hash(args) => commands::cmd_hash(&args),
        Command::Attack(args) => commands::cmd_attack(&args),
        Command::Bank(cmd) => match cmd.action {
            BankAction::Build {
                dir,
                algo,
                bits,
                out,
            } => commands::cmd_bank_build(&dir, &algo, bits, &out),
            BankAction::Query { bank, image, k } => commands::cmd_bank_query(&bank, &image, k),
        },
        Command::Eval(cmd) => match cmd.action {
            EvalAction::Baselines {
                bank,
                dir,
                ks,
                seed,
                augs,
                out,
            } => commands::cmd_eval_baselines(&bank, &dir, &ks, seed, augs.as_deref(), &out),
            EvalAction::Collisions { bank, out } => commands::cmd_eval_collisions(&bank, &out),
        },
        Command::Calibrate(args) => commands::cmd_calibrate(&args),
        Command::Transfer(args) => commands::cmd_transfer(&args),
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                CmdFailure::Usage(msg) => eprintln!("error: {msg}"),
                CmdFailure::NoCollision => eprintln!("attack finished without a collision"),
                CmdFailure::Uncalibratable => {
                    eprintln!("no threshold reaches the precision target")
                }
            }
            ExitCode::from(failure.exit_code())
        }
    }
}
