use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use armtwin_core::batch::Execution;
use armtwin_core::session::replay;
use armtwin_gateway::bench::bench_ik;
use armtwin_gateway::config::GatewayConfig;
use armtwin_gateway::protocol::ServerMessage;
use armtwin_gateway::server::{self, Pacing, ServeOptions};
use armtwin_gateway::task::{run_task, Marker, TaskKind, TaskSpec};
use armtwin_gateway::trace::read_trace;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "armtwin", version, about = "Robot-arm teleoperation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the live operator server.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// tick once per received hand sample instead of on the clock
        #[arg(long)]
        lockstep: bool,
    },
    /// Replay a hand trace and write the session log.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// overrides the IK seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Measure IK round-trip accuracy and solve time.
    BenchIk {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// run the batch on one thread
        #[arg(long)]
        sequential: bool,
    },
    /// Run a scripted cube task against a trace.
    Task {
        #[arg(long)]
        name: TaskKind,
        #[arg(long)]
        from: Marker,
        /// destination marker; defaults to `from` for rotate
        #[arg(long)]
        to: Option<Marker>,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<GatewayConfig> {
    match path {
        Some(p) => GatewayConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(GatewayConfig::default()),
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Serve {
            config,
            port,
            host,
            lockstep,
        } => {
            let cfg = load_config(config.as_deref())?;
            let chain = Arc::new(cfg.load_chain()?);
            let opts = ServeOptions {
                pacing: if lockstep { Pacing::Input } else { Pacing::Clock },
                log_path: cfg.log_path.clone(),
                ..ServeOptions::default()
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let handle = server::start(chain, cfg.session, (host.as_str(), port), opts).await?;
                println!("listening on ws://{}", handle.local_addr());
                tokio::signal::ctrl_c().await?;
                handle.shutdown().await;
                anyhow::Ok(())
            })?;
        }
        Command::Replay {
            trace,
            out,
            seed,
            config,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.session.ik.rng_seed = s;
            }
            let chain = Arc::new(cfg.load_chain()?);
            let items = read_trace(&trace)?;
            let log = replay(chain, &cfg.session, &items)?;
            std::fs::write(&out, log.to_ndjson()).with_context(|| format!("writing {}", out.display()))?;
            let anomalies = log.frames.iter().filter(|f| f.anomaly).count();
            println!(
                "{} frames, {} anomalies, {} trailing events -> {}",
                log.frames.len(),
                anomalies,
                log.trailing_events.len(),
                out.display()
            );
        }
        Command::BenchIk {
            n,
            seed,
            config,
            sequential,
        } => {
            let cfg = load_config(config.as_deref())?;
            let chain = cfg.load_chain()?;
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::default()
            };
            let report = bench_ik(&chain, &cfg.session.ik, n, seed, exec)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.within_budget {
                bail!(
                    "p99 solve time {:.3} ms exceeds the {:.3} ms frame budget",
                    report.p99_ms,
                    report.budget_ms
                );
            }
        }
        Command::Task {
            name,
            from,
            to,
            trace,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let to = match (name, to) {
                (_, Some(t)) => t,
                (TaskKind::Rotate, None) => from,
                (TaskKind::Translate, None) => bail!("translate needs --to"),
            };
            let chain = Arc::new(cfg.load_chain()?);
            let items = read_trace(&trace)?;
            let started = Instant::now();
            let spec = TaskSpec { kind: name, from, to };
            let report = run_task(chain, &cfg.session, &cfg.task, &spec, &items)?;
            let wall = started.elapsed();
            println!("{}", ServerMessage::TaskResult(report.clone()).encode());
            eprintln!("evaluated in {:.2} s", wall.as_secs_f64());
            if !report.success {
                bail!(
                    "task failed: {}",
                    report.reason.as_deref().unwrap_or("unknown reason")
                );
            }
        }
    }
    Ok(())
}
