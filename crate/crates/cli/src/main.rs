//! `addis`: simulation grids, interactive streams, study replay and oracle
//! verification.

use std::fs;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use addis_graph::oracles::{run_suite, Suite, VerifyOptions};
use addis_graph::replay::{replay_study, ReplayOptions, Study};
use addis_graph::sim::{run_grid, GridSpec};
use addis_graph::stream::StreamSession;
use addis_graph::{par, Engine, EngineConfig, GammaSpec, Procedure};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "addis", version, about = "Online multiple testing with ADDIS-Graphs")]
struct Cli {
    /// Worker threads for simulations (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation grid and write CSV.
    Simulate {
        /// Grid file (TOML).
        #[arg(long)]
        grid: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of trials per grid point.
        #[arg(long)]
        trials: Option<usize>,
        /// Output file; stdout if omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Check the budget condition on every trajectory; fails on violation.
        #[arg(long)]
        check: bool,
    },
    /// Line protocol on stdin/stdout.
    Stream {
        #[arg(long, default_value_t = 0.2)]
        alpha: f64,
        #[arg(long, default_value = "basel")]
        gamma: String,
        #[arg(long, default_value = "graph-conf rule=renormalized")]
        procedure: String,
        /// Default τ for registrations without tau=.
        #[arg(long, default_value_t = 0.8)]
        tau: f64,
        /// Default λ for registrations without lambda=.
        #[arg(long, default_value_t = 0.16)]
        lambda: f64,
        /// Continue from a snapshot (engine flags are then taken from it).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Write a snapshot when the input ends.
        #[arg(long)]
        save: Option<PathBuf>,
        /// Print levels with full precision.
        #[arg(long)]
        full_precision: bool,
    },
    /// Replay a recorded study and report rejections and remaining level.
    Replay {
        study: PathBuf,
        #[arg(long)]
        procedure: Option<String>,
        /// Geometric γ_i = q^i (1−q)/q; ignored if --gamma is given.
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        gamma: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        full_precision: bool,
    },
    /// Run oracle suites; exit status 1 if any fails.
    Verify {
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        /// Horizon (suite default if omitted).
        #[arg(long)]
        n: Option<usize>,
        /// Number of random instances.
        #[arg(long)]
        seeds: Option<usize>,
        /// Monte Carlo draws for alpha-c.
        #[arg(long, default_value_t = 1_000_000)]
        draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Budget,
    Closure,
    Improvement,
    AlphaC,
    All,
}

impl SuiteArg {
    fn suites(self) -> Vec<Suite> {
        match self {
            SuiteArg::Budget => vec![Suite::Budget],
            SuiteArg::Closure => vec![Suite::Closure],
            SuiteArg::Improvement => vec![Suite::Improvement],
            SuiteArg::AlphaC => vec![Suite::AlphaC],
            SuiteArg::All => Suite::ALL.to_vec(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        par::set_threads(t).map_err(anyhow::Error::msg)?;
    }
    match cli.command {
        Command::Simulate { grid, seed, trials, out, check } => {
            let mut spec = GridSpec::load(&grid)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(t) = trials {
                spec.trials = t;
            }
            let res = run_grid(&spec, check)?;
            let csv = res.to_csv();
            match out {
                Some(path) => fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{csv}"),
            }
            let failures: usize = res.rows.iter().filter_map(|r| r.condition).map(|c| c.failures).sum();
            if failures > 0 {
                eprintln!("budget condition violated on {failures} trajectories");
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Stream { alpha, gamma, procedure, tau, lambda, resume, save, full_precision } => {
            let engine = match resume {
                Some(path) => Engine::load_snapshot(&path)?,
                None => {
                    let gamma: GammaSpec = gamma.parse()?;
                    let procedure: Procedure = procedure.parse()?;
                    Engine::new(EngineConfig::new(alpha, gamma, procedure))?
                }
            };
            let mut session = StreamSession::new(engine, tau, lambda).with_full_precision(full_precision);
            let stdin = io::stdin();
            session.run(stdin.lock(), BufWriter::new(io::stdout().lock()))?;
            if let Some(path) = save {
                session.engine().save_snapshot(&path)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { study, procedure, q, gamma, alpha, tau, lambda, full_precision } => {
            let study = Study::load(&study)?;
            let gamma = match (gamma, q) {
                (Some(g), _) => Some(g.parse::<GammaSpec>()?),
                (None, Some(q)) => Some(GammaSpec::geometric(q)?),
                (None, None) => None,
            };
            let opts = ReplayOptions {
                procedure: procedure.map(|p| p.parse()).transpose()?,
                gamma,
                alpha,
                tau,
                lambda,
            };
            let report = replay_study(&study, &opts)?;
            print!("{}", report.render(if full_precision { None } else { Some(6) }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suite, n, seeds, draws, seed } => {
            if draws == 0 {
                bail!("--draws must be positive");
            }
            let opts = VerifyOptions { n, seeds, draws, seed };
            let mut ok = true;
            for s in suite.suites() {
                let rep = run_suite(s, &opts)?;
                println!("{rep}");
                ok &= rep.passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
