use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod error;
mod run;

#[derive(Parser)]
#[command(name = "umtslab", version, about = "Audited experiments on unfair metrical task systems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every experiment of a config and write CSV/JSON reports.
    Run {
        config: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Omit the timestamp so that reports are byte-stable.
        #[arg(long)]
        deterministic: bool,
        #[arg(long, default_value = "umtslab-out")]
        out: PathBuf,
    },
    /// Re-check the lemmas recorded in a combined-run trace.
    Verify { trace: PathBuf },
}

fn seed_override() -> Result<Option<u64>, String> {
    match std::env::var("UMTSLAB_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("UMTSLAB_SEED must be an unsigned integer, got {s:?}")),
        Err(_) => Ok(None),
    }
}

fn run(config: PathBuf, jobs: Option<usize>, deterministic: bool, out: PathBuf) -> ExitCode {
    let cfg = match std::fs::read_to_string(&config)
        .map_err(|e| error::CliError::Config(format!("{}: {e}", config.display())))
        .and_then(|t| config::parse(&t))
    {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let seeds = match seed_override() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run::execute(&cfg, &out, deterministic, seeds)) {
        Ok(o) => {
            let failed = o.rows.iter().filter(|r| !r.pass).count();
            println!(
                "{} runs, {} failed; reports in {}",
                o.rows.len(),
                failed,
                out.display()
            );
            if o.passed {
                ExitCode::SUCCESS
            } else {
                for r in o.rows.iter().filter(|r| !r.pass).take(10) {
                    eprintln!("FAIL {} {} seed {}", r.experiment, r.adversary, r.seed);
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn verify(trace: PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(&trace) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", trace.display());
            return ExitCode::from(2);
        }
    };
    match umtslab::combiner::verify_trace(&text) {
        Ok(v) => match v.first_violation {
            None => {
                println!("ok: {} steps, all lemmas hold", v.steps);
                ExitCode::SUCCESS
            }
            Some((lemma, step)) => {
                println!("violation: lemma {lemma} at step {step}");
                ExitCode::from(1)
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Run {
            config,
            jobs,
            deterministic,
            out,
        } => run(config, jobs, deterministic, out),
        Cmd::Verify { trace } => verify(trace),
    }
}
