//! `tbloc` command-line driver.

mod commands;
mod config;
mod error;
mod output;
mod plot;
mod system;

use clap::{Parser, Subcommand};
use commands::Context;
use config::{Beta, Mu, RunConfig};
use error::{CliError, CliResult};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "tbloc", version, about = "Tight-binding site energies and locality experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Inverse temperature in 1/eV, or "inf".
    #[arg(long, global = true)]
    beta: Option<Beta>,
    /// Chemical potential in eV, or "midgap".
    #[arg(long, global = true)]
    mu: Option<Mu>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Initial contour nodes per loop.
    #[arg(long, global = true)]
    nodes: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Band structure along a k-path, optionally after a lattice-constant search.
    Bands,
    /// Site energies by both routes, forces and the contour used.
    Sites,
    /// Decay datasets of site-energy and force derivatives with exponential fits.
    Locality,
    /// Defect embedding: finite-rank split, Woodbury check and gap states.
    Defect,
    /// Resolvent decay against the Combes–Thomas form.
    CtAudit,
    /// Invariant suite; runs a built-in toy suite without --config.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::Sites => "sites",
            Command::Locality => "locality",
            Command::Defect => "defect",
            Command::CtAudit => "ct-audit",
            Command::Verify => "verify",
        }
    }
}

fn context(cli: &Cli) -> CliResult<Context> {
    let mut run = match (&cli.config, cli.command) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Command::Verify) => RunConfig::parse(commands::verify::DEFAULT_SUITE)?,
        (None, _) => return Err(CliError::Config("--config is required".into())),
    };
    if let Some(b) = cli.beta {
        run.thermo.beta = b;
    }
    if let Some(m) = cli.mu {
        run.thermo.mu = m;
    }
    if let Some(s) = cli.seed {
        run.seed = s;
    }
    if let Some(n) = cli.nodes {
        run.contour.nodes = n;
    }
    if let Some(o) = &cli.out {
        run.out = Some(o.clone());
    }
    let out = run.out.clone().unwrap_or_else(|| PathBuf::from("out").join(cli.command.name()));
    Ok(Context { run, out, command: cli.command.name() })
}

fn execute(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let ctx = context(cli)?;
    let files = match cli.command {
        Command::Bands => commands::bands::run(&ctx),
        Command::Sites => commands::sites::run(&ctx),
        Command::Locality => commands::locality::run(&ctx),
        Command::Defect => commands::defect::run(&ctx),
        Command::CtAudit => commands::ct::run(&ctx),
        Command::Verify => commands::verify::run(&ctx),
    }?;
    println!("wrote {} files and manifest.json to {}", files.len(), ctx.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
