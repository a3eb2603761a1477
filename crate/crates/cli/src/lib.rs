//! The `qpcocycle` command-line tool.
//!
//! Each subcommand reads one JSON experiment configuration, writes CSV and
//! JSON outputs into `--out`, and records a `run.json` with the config hash,
//! seed, version, wall time and a manifest of written files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

pub use error::CliError;
use output::{Meta, OutputFile, Writer, TOOL, VERSION};

#[derive(Debug, Parser)]
#[command(name = "qpcocycle", version, about = "Lyapunov exponents of random quasi-periodic cocycles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Top exponent by Monte Carlo.
    Top,
    /// Full spectrum by QR and by exterior powers.
    Spectrum,
    /// Top exponent along a path of probability vectors.
    Sweep,
    /// Contraction coefficients and certificate.
    Contraction,
    /// Holomorphic extension in complex weights.
    Analytic,
    /// Reduction along invariant sections.
    Reduce,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Top => "top",
            Command::Spectrum => "spectrum",
            Command::Sweep => "sweep",
            Command::Contraction => "contraction",
            Command::Analytic => "analytic",
            Command::Reduce => "reduce",
        }
    }
}

/// Outcome of a successful run.
#[derive(Debug)]
pub struct RunRecord {
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputFile>,
}

/// Runs one command. On failure the config hash is returned alongside the
/// error when the configuration was read successfully.
pub fn run(cli: &Cli) -> Result<RunRecord, (CliError, Option<String>)> {
    let start = Instant::now();
    let path = cli.config.as_ref().ok_or_else(|| (CliError::Config("--config is required".into()), None))?;
    let resolved = config::load(path, cli.seed).map_err(|e| (e, None))?;
    let hash = resolved.hash.clone();
    let fail = |e: CliError| (e, Some(hash.clone()));
    let meta = Meta {
        tool: TOOL,
        version: VERSION,
        command: cli.command.name().to_string(),
        config_hash: resolved.hash.clone(),
        seed: resolved.seed,
    };
    let mut writer = Writer::new(&cli.out, meta).map_err(fail)?;
    let job = |w: &mut Writer| match cli.command {
        Command::Top => commands::top(&resolved, w),
        Command::Spectrum => commands::spectrum(&resolved, w),
        Command::Sweep => commands::sweep(&resolved, w),
        Command::Contraction => commands::contraction(&resolved, w),
        Command::Analytic => commands::analytic(&resolved, w),
        Command::Reduce => commands::reduce(&resolved, w),
    };
    match cli.workers {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| fail(CliError::Config(format!("cannot start {k} workers: {e}"))))?;
            pool.install(|| job(&mut writer))
        }
        None => job(&mut writer),
    }
    .map_err(fail)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let outputs = writer.finish(wall_time_s).map_err(fail)?;
    Ok(RunRecord { command: cli.command.name(), config_hash: resolved.hash, seed: resolved.seed, wall_time_s, outputs })
}

/// Parses arguments, runs, prints a JSON error body on failure and returns
/// the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err = CliError::Config(e.to_string().trim().to_string());
            eprintln!("{}", err.body(None, None));
            return err.code();
        }
    };
    match run(&cli) {
        Ok(record) => {
            println!(
                "{} ok: {} files in {} ({:.2} s)",
                record.command,
                record.outputs.len(),
                cli.out.display(),
                record.wall_time_s
            );
            0
        }
        Err((e, hash)) => {
            eprintln!("{}", e.body(Some(cli.command.name()), hash.as_deref()));
            e.code()
        }
    }
}
