use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use conic_scatter::config::RunConfig;
use conic_scatter::output::Output;
use conic_scatter::verify::Suite;
use conic_scatter::{commands, exit};

#[derive(Parser)]
#[command(name = "conic-scatter", version, about = "Two-space scattering on asymptotically conic manifolds", after_help = exit::help_text())]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides outputs.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to CONIC_SCATTER_THREADS, then all cores.
    #[arg(long, global = true, env = "CONIC_SCATTER_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the operators and export them as sparse triplets.
    Assemble,
    /// Bound states, window eigenpairs and the Mourre estimate.
    Spectrum,
    /// Propagate the configured wave packet and write its trajectory.
    Evolve,
    /// Wave operator on the configured packet by Cook's method and by the stationary formula.
    Waveop,
    /// Scattering matrix over the energy list.
    Smatrix,
    /// Generalized eigenfunctions and their amplitude tables.
    Eigenfunction,
    /// Run the acceptance criteria.
    Verify {
        #[arg(long, value_enum, default_value = "fast")]
        suite: Suite,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { 0 });
        }
    };
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p),
        None => RunConfig::parse(""),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit::for_config(&e));
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(exit::USAGE);
        }
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let dir = cli.out.clone().unwrap_or_else(|| cfg.outputs.dir.clone());
    let mut out = match Output::new(&dir, &cfg.hash()) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit::for_error(&e));
        }
    };
    let result = match cli.command {
        Command::Assemble => commands::assemble(&cfg, &mut out),
        Command::Spectrum => commands::spectrum(&cfg, &mut out),
        Command::Evolve => commands::evolve(&cfg, &mut out),
        Command::Waveop => commands::waveop(&cfg, &mut out),
        Command::Smatrix => commands::smatrix(&cfg, &mut out),
        Command::Eigenfunction => commands::eigenfunction(&cfg, &mut out),
        Command::Verify { suite } => match commands::verify(&cfg, suite, &mut out) {
            Ok(v) if v.iter().all(|v| v.passed) => Ok(()),
            Ok(_) => return ExitCode::from(exit::VERIFY_FAILED),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::for_error(&e))
        }
    }
}
