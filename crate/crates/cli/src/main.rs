use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dmgda_core::runner::{self, CliOptions, RunnerError};

/// Decentralized momentum GDA experiments.
#[derive(Parser)]
#[command(name = "dmgda", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single run: metrics.csv and summary.json.
    Run(Common),
    /// Horizon sweep with repeats: sweep.csv and rate.json.
    Sweep(Common),
    /// Instrumented run plus problem certificates: report.json and report.txt.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Output directory (overrides run.out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to DMGDA_THREADS, then 1.
    #[arg(long)]
    threads: Option<usize>,
    /// Record metrics every k iterations.
    #[arg(long)]
    cadence: Option<usize>,
}

fn execute(cli: Cli) -> Result<(), RunnerError> {
    let (kind, common) = match cli.command {
        Command::Run(c) => ("run", c),
        Command::Sweep(c) => ("sweep", c),
        Command::Verify(c) => ("verify", c),
    };
    let config = runner::load_config(&common.config)?;
    let opts = CliOptions {
        out: common.out,
        threads: common.threads,
        cadence: common.cadence,
    };
    match kind {
        "run" => {
            let art = runner::cmd_run(&config, &opts)?;
            if let Some(s) = art.summary {
                println!(
                    "T = {}: mean stationarity {:.6e} (t=0: {:.6e}), final residual {:.6e}, {} gradient calls",
                    s.horizon, s.mean_stationarity, s.stationarity_t0, s.final_residual, s.grad_calls_total
                );
            }
        }
        "sweep" => {
            let res = runner::cmd_sweep(&config, &opts)?;
            for (t, (m, se)) in res.horizons.iter().zip(res.mean.iter().zip(&res.stderr)) {
                println!("T = {t}: mean stationarity {m:.6e} +- {se:.2e}");
            }
            println!("slope {:.4}, r2 {:.4}", res.fit.slope, res.fit.r2);
        }
        _ => {
            let report = runner::cmd_verify(&config, &opts);
            match &report {
                Ok(r) => print!("{}", r.to_text()),
                Err(RunnerError::VerificationFailed(_)) => {
                    let dir = opts.out.clone().or(config.run.out_dir.clone()).unwrap_or_else(|| "out".into());
                    if let Ok(text) = std::fs::read_to_string(dir.join("report.txt")) {
                        print!("{text}");
                    }
                }
                Err(_) => {}
            }
            report?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
