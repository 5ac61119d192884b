use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ergodelab_cli::{defaults_toml, execute, parse_config, write_artifacts, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "ergodelab", version, about = "Mean-ergodic experiments on semigroups of operators")]
struct Cli {
    /// Run-config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `[task] tol`.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Reserved; every task is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the default config and exit.
    #[arg(long)]
    print_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// T(t)f at the times of `[task] t`.
    Apply,
    /// Cesàro means along the doubling schedule.
    Cesaro,
    /// Abel means along the halving λ grid.
    Abel,
    /// Ergodic projection estimate with the projection laws.
    Project,
    /// Invariant measure and its invariance residuals.
    Invariant,
    /// Periodic evolution system and time averages.
    Evolve,
    /// Mellin table and dilated-span fits.
    Wiener,
    /// Translation counterexample with oscillating Cesàro means.
    Counterexample {
        #[arg(long)]
        max_n: Option<u32>,
    },
    /// Invariant suites.
    Check {
        #[arg(long)]
        suite: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Apply => "apply",
            Command::Cesaro => "cesaro",
            Command::Abel => "abel",
            Command::Project => "project",
            Command::Invariant => "invariant",
            Command::Evolve => "evolve",
            Command::Wiener => "wiener",
            Command::Counterexample { .. } => "counterexample",
            Command::Check { .. } => "check",
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("ERGODELAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("ERGODELAB_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_defaults {
        print!("{}", defaults_toml());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (try --help)");
        return ExitCode::from(2);
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let mut cfg = match &cli.config {
        Some(p) => match parse_config(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => RunConfig::default(),
    };
    let _ = cli.seed;
    if let Some(tol) = cli.tol {
        cfg.task.tol = tol;
    }
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.display().to_string();
    }
    match &command {
        Command::Counterexample { max_n: Some(n) } => cfg.task.max_n = *n,
        Command::Check { suite: Some(s) } => cfg.task.suite = s.clone(),
        _ => {}
    }

    let task = command.name();
    let outcome = match execute(&cfg, task) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let paths = match write_artifacts(&outcome, &PathBuf::from(&cfg.output.dir)) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: writing reports: {e}");
            return ExitCode::from(1);
        }
    };
    println!("{task}: {}", outcome.label);
    for p in paths {
        println!("wrote {}", p.display());
    }
    if outcome.pass {
        ExitCode::SUCCESS
    } else {
        match &cfg.task.expect {
            Some(x) => eprintln!("{task}: outcome '{}' differs from expected '{x}'", outcome.label),
            None => eprintln!("{task}: check failed"),
        }
        ExitCode::from(1)
    }
}
