use clap::{Args, Parser, Subcommand};
use marginlab::config::{CommandKind, ExperimentConfig, VerifySection};
use marginlab::{run, Error};
use std::path::PathBuf;
use std::process::ExitCode;

/// Shortcut-learning experiment runner: data generation, training,
/// margin solving, theory checks, and grid sweeps driven by one JSON
/// config.
#[derive(Parser)]
#[command(name = "marginlab", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel sweep workers (overrides MARGINLAB_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides both the data seed and the training seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample the train/test splits and write them as CSV.
    Gen(CommonArgs),
    /// Run full-batch gradient descent and record grouped metrics.
    Train(CommonArgs),
    /// Solve the hard-margin problem (optionally side-constrained).
    Maxmargin(CommonArgs),
    /// Run one named analysis check and report pass/fail evidence.
    Verify {
        /// Check name; overrides the config's verify.check when given.
        check: Option<String>,
        #[command(flatten)]
        args: CommonArgs,
    },
    /// Run a grid of train or maxmargin cells and aggregate a CSV.
    Sweep(CommonArgs),
}

impl Cmd {
    fn kind(&self) -> CommandKind {
        match self {
            Cmd::Gen(_) => CommandKind::Gen,
            Cmd::Train(_) => CommandKind::Train,
            Cmd::Maxmargin(_) => CommandKind::Maxmargin,
            Cmd::Verify { .. } => CommandKind::Verify,
            Cmd::Sweep(_) => CommandKind::Sweep,
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Cmd::Gen(a) | Cmd::Train(a) | Cmd::Maxmargin(a) | Cmd::Sweep(a) => a,
            Cmd::Verify { args, .. } => args,
        }
    }
}

fn workers_from_env() -> Option<usize> {
    let raw = std::env::var("MARGINLAB_WORKERS").ok()?;
    raw.parse().ok().filter(|&w| w > 0)
}

fn run_cli(cli: &Cli) -> Result<PathBuf, Error> {
    let args = cli.cmd.args();
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    let kind = cli.cmd.kind();
    if cfg.command != kind {
        return Err(Error::Config(format!(
            "config declares command \"{}\" but the {kind} subcommand was invoked",
            cfg.command
        )));
    }
    if let Cmd::Verify { check: Some(name), .. } = &cli.cmd {
        match &mut cfg.verify {
            Some(v) => v.check = name.clone(),
            None => {
                cfg.verify = Some(VerifySection {
                    check: name.clone(),
                    params: serde_json::Value::Null,
                })
            }
        }
    }
    if let Some(seed) = args.seed {
        cfg.dgp.seed = seed;
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    let workers = args.workers.or_else(workers_from_env).unwrap_or(1);
    if workers == 0 {
        return Err(Error::Config("workers must be positive".into()));
    }
    run::execute(&cfg, args.out.as_deref(), workers)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_cli(&cli) {
        Ok(out_dir) => {
            println!("wrote {}", out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
