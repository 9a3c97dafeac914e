use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use submapg_harness::bench::{bench, BENCH_HEADER};
use submapg_harness::config::ExperimentConfig;
use submapg_harness::run::{opt_dump, resolve_out, run, OPT_HEADER};
use submapg_harness::verify::{run_suite, Scale, Suite, REPORT_HEADER};

#[derive(Parser)]
#[command(name = "submapg", version, about = "Multi-agent submodular policy gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run only this seed, overriding the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: config `out`, then $SUBMAPG_OUT, then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for seeds run in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train or evaluate a method and write per-seed CSV logs and summaries.
    Run { config: PathBuf },
    /// Run a verification suite: properties, stagewise, regret or all.
    Verify {
        suite: Suite,
        /// Reduced problem sizes.
        #[arg(long)]
        quick: bool,
    },
    /// Time the core components for 1 to 4 agents.
    Bench { config: PathBuf },
    /// Print the brute-force optimum of every round.
    Opt { config: PathBuf },
}

fn load(path: &Path, cli: &Cli) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config = ExperimentConfig::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    Ok(config)
}

fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Run { config } => {
            let config = load(config, cli)?;
            let out = resolve_out(cli.out.as_deref(), &config);
            let artifacts = run(&config, &out, cli.jobs)?;
            for log in &artifacts.logs {
                println!("{}", log.display());
            }
            print!("{}", fs::read_to_string(out.join("summary.txt"))?);
            Ok(true)
        }
        Command::Verify { suite, quick } => {
            let scale = if *quick { Scale::Quick } else { Scale::Full };
            let checks = run_suite(*suite, cli.seed.unwrap_or(0), scale)?;
            println!("{REPORT_HEADER}");
            for c in &checks {
                println!("{c}");
            }
            Ok(checks.iter().all(|c| c.passed()))
        }
        Command::Bench { config } => {
            let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
            if text.trim().is_empty() {
                bail!("usage: submapg bench <config>; {} is empty", config.display());
            }
            let config = load(config, cli)?;
            println!("{BENCH_HEADER}");
            for t in bench(&config, 4)? {
                println!("{t}");
            }
            Ok(true)
        }
        Command::Opt { config } => {
            let config = load(config, cli)?;
            println!("{OPT_HEADER}");
            for &seed in &config.seeds {
                for row in opt_dump(&config, seed)? {
                    println!("{row}");
                }
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
