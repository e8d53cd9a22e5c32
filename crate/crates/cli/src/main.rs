//! `krlx` batch front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 rejected configuration,
//! 3 numerical failure (the failing check is named on stderr).

mod commands;
mod config;

use clap::{CommandFactory, Parser, ValueEnum};
use commands::{Failure, Sink};
use config::SimConfig;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Solve the Poisson–Emden fixed point; write U∞, M∞ and the history.
    Equilibrium,
    /// Lowest Witten eigenvalues and the derived rate constants.
    Gap,
    /// Short-time exponents, decay on the zero-mass subspace, conjugation.
    SemigroupVerify,
    /// Nonlinear run with decay and conservation reports.
    Run,
    /// Picard iteration of the Duhamel formulation.
    Picard,
    /// Quadrature sweep and plot-ready slices of every stored field.
    Report,
}

impl Command {
    fn per_coupling(self) -> bool {
        self != Command::Report
    }
}

#[derive(Debug, Parser)]
#[command(name = "krlx", version, about = "Vlasov–Poisson–Fokker–Planck numerics")]
struct Cli {
    command: Command,
    /// Configuration file (sectioned key = value).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides [output] dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep entries processed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Seed for random probes (overrides [initial] seed).
    #[arg(long)]
    seed: Option<u64>,
}

fn load(cli: &Cli) -> Result<(SimConfig, Vec<String>), config::ConfigError> {
    let mut cfg = SimConfig::load(&cli.config)?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.initial.seed = seed;
    }
    if cli.jobs == 0 {
        return Err(config::ConfigError("--jobs must be at least 1".into()));
    }
    let warnings = cfg.resolve()?;
    Ok((cfg, warnings))
}

fn execute(cmd: Command, sink: &Sink) -> Result<Vec<String>, Failure> {
    match cmd {
        Command::Equilibrium => commands::equilibrium(sink),
        Command::Gap => commands::gap(sink),
        Command::SemigroupVerify => commands::semigroup_verify(sink),
        Command::Run => commands::run(sink),
        Command::Picard => commands::picard(sink),
        Command::Report => commands::report(sink),
    }
}

/// Run every sweep entry, `jobs` at a time. Results come back in sweep order.
fn sweep(cmd: Command, cfg: &SimConfig, jobs: usize) -> Vec<(f64, Result<Vec<String>, Failure>)> {
    let couplings = if cmd.per_coupling() { cfg.couplings() } else { vec![cfg.coupling.eps0] };
    let nested = couplings.len() > 1;
    let sink = |eps0: f64| Sink {
        dir: if nested { cfg.output.dir.join(format!("eps0_{eps0}")) } else { cfg.output.dir.clone() },
        cfg,
        eps0,
    };
    let results: Vec<Mutex<Option<Result<Vec<String>, Failure>>>> = couplings.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.min(couplings.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= couplings.len() {
                    break;
                }
                *results[k].lock().unwrap() = Some(execute(cmd, &sink(couplings[k])));
            });
        }
    });
    couplings.into_iter().zip(results).map(|(e, r)| (e, r.into_inner().unwrap().unwrap())).collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(1);
        }
    };
    let (cfg, warnings) = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    for w in warnings {
        eprintln!("warning: {w}");
    }
    krlx::exec::init_threads(None);

    let results = sweep(cli.command, &cfg, cli.jobs);
    let tagged = results.len() > 1;
    let mut code = ExitCode::SUCCESS;
    for (eps0, r) in results {
        match r {
            Ok(lines) => {
                for l in lines {
                    if tagged {
                        println!("[eps0={eps0}] {l}");
                    } else {
                        println!("{l}");
                    }
                }
            }
            Err(f) => {
                eprintln!("eps0 = {eps0}: {f}");
                code = ExitCode::from(3);
            }
        }
    }
    code
}
