use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fluxlab::config::RunConfig;
use fluxlab::run::{run, verify, Command};
use fluxlab::Error;

#[derive(Parser)]
#[command(name = "fluxlab", version, about = "Channel laboratory for 2D magnetic Schrödinger operators with radial flux")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Eigenvalues up to the window edge (or `spectrum.upper`).
    Spectrum(Common),
    /// Window projection metadata.
    Project(Common),
    /// Interior and exterior tunnelling sums with their decay fits.
    Tunnel(Common),
    /// Weight hypotheses and the twisted coercivity check.
    ValidateWeights(Common),
    /// Window-projected propagation, observables and bound checks.
    Evolve(Common),
    /// Localization scan around the mobility edge of a linear flux.
    Mobility(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML with dotted keys).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Re-check the written artifacts and fail if an invariant is broken.
    #[arg(long)]
    verify: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Verify(_) => 3,
        _ => 1,
    }
}

fn execute(cmd: Command, c: Common) -> fluxlab::Result<()> {
    let cfg = RunConfig::from_path(&c.config)?;
    if c.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(c.threads)
            .build_global()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    }
    let out = c
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("fluxlab-out"));
    let res = run(cmd, &cfg, &out)?;
    for w in &res.manifest.warnings {
        eprintln!("warning: {w}");
    }
    for (k, v) in &res.manifest.verdicts {
        println!("{k}: {}", if *v { "pass" } else { "FAIL" });
    }
    println!("{cmd}: wrote {} artifacts to {} in {:.2} s", res.manifest.artifacts.len(), out.display(), res.wall_seconds);
    if c.verify {
        let rep = verify(cmd, &out)?;
        let failed: Vec<_> = rep.checks.iter().filter(|k| !k.pass).map(|k| format!("{} {}", k.name, k.detail)).collect();
        if !failed.is_empty() {
            return Err(Error::Verify(failed.join("; ")));
        }
        println!("verify: {} checks passed", rep.checks.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Cmd::Spectrum(c) => (Command::Spectrum, c),
        Cmd::Project(c) => (Command::Project, c),
        Cmd::Tunnel(c) => (Command::Tunnel, c),
        Cmd::ValidateWeights(c) => (Command::ValidateWeights, c),
        Cmd::Evolve(c) => (Command::Evolve, c),
        Cmd::Mobility(c) => (Command::Mobility, c),
    };
    match execute(cmd, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
