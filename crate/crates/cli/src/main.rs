use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use fe2_core::config::load_config;
use fe2_core::scenario::{
    check_tangents_command, compare_command, dns_command, fe2_command, sweep_rve_command,
    CommandSummary,
};
use fe2_core::verification;

#[derive(Parser, Debug)]
#[command(name = "fe2", version, about = "Dynamic FE² homogenization of layered bars")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for the per-Gauss-point micro solves (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Two-scale simulation.
    Fe2(RunArgs),
    /// Single-scale reference simulation.
    Dns(RunArgs),
    /// Both simulations and the error between them.
    Compare(RunArgs),
    /// Finite-difference audit of the tangent moduli at one step.
    CheckTangents(RunArgs),
    /// Unit-cell type, cell count and constraint study.
    SweepRve(RunArgs),
    /// Built-in oracle checks (quick subset).
    Verify {
        #[arg(long, default_value = "out/verify")]
        out: PathBuf,
    },
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<Option<CommandSummary>> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let (args, f): (&RunArgs, fn(_, _) -> _) = match &cli.command {
        Command::Fe2(a) => (a, fe2_command),
        Command::Dns(a) => (a, dns_command),
        Command::Compare(a) => (a, compare_command),
        Command::CheckTangents(a) => (a, check_tangents_command),
        Command::SweepRve(a) => (a, sweep_rve_command),
        Command::Verify { out } => {
            let reports = verification::run_quick();
            verification::write_report(out, &reports)?;
            for r in &reports {
                println!("{}", r.line());
            }
            let failed = reports.iter().filter(|r| !r.pass).count();
            if failed > 0 {
                anyhow::bail!("{failed} oracle checks failed");
            }
            return Ok(None);
        }
    };
    let cfg = load_config(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    log::info!("configuration:\n{}", cfg.to_toml());
    let summary = f(&cfg, &args.out)?;
    Ok(Some(summary))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(Some(summary)) => {
            print!("{}", summary.text);
            match summary.failure {
                Some(f) => {
                    eprintln!("run stopped at step {}: {}", f.step, f.message);
                    ExitCode::from(2)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
