use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gac::config::load_config;
use gac::run::{default_out_dir, evaluate_saved, train_to_dir};
use gac::verify::{run_suite, SUITES};
use gac::{GacError, Result};

#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "gac", version, about = "Guide actor-critic training and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent; writes config, log, actor and critic into the output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to runs/<env>-seed<seed>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved actor without exploration.
    Eval {
        #[arg(long)]
        actor: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check the numerics against brute-force references.
    Verify {
        /// One of gauss, critic-grad, gauss-newton, dual, guide, dpg-limit, naf, lqr; all when omitted.
        #[arg(long)]
        suite: Option<String>,
    },
    /// Draw test return against step from a training log as SVG.
    Plot {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out.unwrap_or_else(|| default_out_dir(&cfg));
            let outcome = train_to_dir(&cfg, &dir)?;
            if let Some(last) = outcome.rows.last() {
                println!("step {} test return {:.3} ± {:.3}", last.step, last.test_return_mean, last.test_return_stderr);
            }
            println!("wrote {}", dir.display());
        }
        Command::Eval { actor, env, episodes, seed } => {
            let ev = evaluate_saved(&actor, &env, episodes, seed)?;
            for (i, r) in ev.returns.iter().enumerate() {
                println!("episode {i}: {r:.6}");
            }
            println!("mean {:.6} stderr {:.6}", ev.mean, ev.stderr);
        }
        Command::Verify { suite } => {
            let names: Vec<String> = match suite {
                Some(s) => vec![s],
                None => SUITES.iter().map(|s| s.to_string()).collect(),
            };
            let mut failed = Vec::new();
            for name in &names {
                let report = run_suite(name)?;
                for c in &report.checks {
                    println!("{} {:<14} {:<44} {:.3e} (tol {:.1e})", if c.passed() { "PASS" } else { "FAIL" }, report.suite, c.name, c.measured, c.tolerance);
                }
                if !report.passed() {
                    failed.push(name.clone());
                }
            }
            if !failed.is_empty() {
                return Err(GacError::Verification(failed.join(", ")));
            }
        }
        Command::Plot { log, out } => {
            let rows = gac::log::load_log(&log)?;
            std::fs::write(&out, gac::plot::render_svg(&rows)).map_err(|e| GacError::Io { path: out.clone(), source: e })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
