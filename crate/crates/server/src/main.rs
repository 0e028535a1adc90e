use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hearth_core::executive::{run_headless, Executive, ExecutiveConfig, RunOptions};
use hearth_core::sim::Scenario;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "hearth", version, about = "Household fetch runs over an online scene graph")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario to completion without any UI.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        ticks_max: Option<u64>,
        /// Drop scripted cues and on-query gestures.
        #[arg(long)]
        no_cues: bool,
        /// Write the run report (JSON) here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the event log (one JSON event per line) here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Serve a scenario over HTTP. The run starts paused.
    Serve {
        scenario: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Ticks per wall second; 0 runs as fast as possible.
        #[arg(long, default_value_t = 10.0)]
        rate: f64,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Cmd::Run {
            scenario,
            seed,
            ticks_max,
            no_cues,
            report,
            log,
        } => run(&scenario, RunOptions { seed, ticks_max, no_cues }, report.as_deref(), log.as_deref()),
        Cmd::Serve { scenario, port, rate } => serve(&scenario, port, rate).map(|()| true),
    }
}

fn run(path: &Path, options: RunOptions, report_path: Option<&Path>, log_path: Option<&Path>) -> Result<bool> {
    let scenario = Scenario::load(path)?;
    let run = run_headless(&scenario, &options)?;
    let report = serde_json::to_string_pretty(&run.report)?;
    if let Some(p) = log_path {
        std::fs::write(p, run.executive.log_jsonl()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = report_path {
        std::fs::write(p, &report).with_context(|| format!("writing {}", p.display()))?;
    }
    println!("{report}");
    Ok(run.report.success)
}

fn serve(path: &Path, port: u16, rate: f64) -> Result<()> {
    anyhow::ensure!(rate.is_finite() && rate >= 0.0, "--rate must be a non-negative number");
    let scenario = Scenario::load(path)?;
    let executive = Executive::new(scenario.build()?, ExecutiveConfig::default())?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let handle = hearth_server::spawn(executive, rate);
        let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        tracing::info!(%addr, "serving");
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, hearth_server::router(handle))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
