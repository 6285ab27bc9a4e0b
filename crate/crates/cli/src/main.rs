//! `dancept`: batch experiments, offline scoring and the live training server.

mod serve;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use dancept_core::figures::{builtin_figure, FigureKind, Tempo};
use dancept_core::service::{replay, LoggedEvent};
use dancept_core::session::{run_cohort, run_fig5, run_stability_map, run_stoptest, score_offline};
use dancept_core::{run_session, Mode, SessionConfig};

#[derive(Parser)]
#[command(
    name = "dancept",
    version,
    about = "Progressive-teaching dance robot simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulated training session and archive it.
    Simulate {
        /// Session config (TOML or JSON). Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        practices: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// CPS against practice for fixed error levels and learning gains.
    Fig5 {
        #[arg(long)]
        out: PathBuf,
    },
    /// Freeze the partner mid-walk and report stall, force and recovery.
    Stoptest {
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep partner stiffness and damping and record the closed-loop poles.
    StabilityMap {
        /// Stiffness range `lo:hi:n` in N/m.
        #[arg(long, value_parser = parse_range)]
        kh: (f64, f64, usize),
        /// Damping range `lo:hi:n` in N·s/m.
        #[arg(long, value_parser = parse_range)]
        dh: (f64, f64, usize),
        /// Loop delay in seconds.
        #[arg(long, default_value_t = 0.01)]
        delay: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired PT and constant sessions over a seeded cohort.
    Cohort {
        #[arg(long)]
        n: usize,
        /// Learning gains assigned to learners in turn.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2")]
        gains: Vec<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a recorded velocity trajectory and print the report as JSON.
    Score {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        figure: FigureKind,
        /// Practice count of the figure before this attempt.
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 90.0)]
        tempo: f64,
    },
    /// Re-run a logged live session offline and archive it.
    Replay {
        /// Session directory written by `serve`.
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve one live trainee at a time over WebSocket at `/ws`.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Simulation ticks per second.
        #[arg(long, default_value_t = 60, value_parser = clap::value_parser!(u32).range(1..=60))]
        tick_hz: u32,
        /// Where finished sessions are archived.
        #[arg(long, default_value = "sessions")]
        out: PathBuf,
    },
}

fn parse_range(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err(format!("expected lo:hi:n, got `{s}`"));
    };
    let lo: f64 = lo
        .parse()
        .map_err(|e| format!("bad lower bound `{lo}`: {e}"))?;
    let hi: f64 = hi
        .parse()
        .map_err(|e| format!("bad upper bound `{hi}`: {e}"))?;
    let n: usize = n.parse().map_err(|e| format!("bad count `{n}`: {e}"))?;
    Ok((lo, hi, n))
}

fn load_config(path: Option<&Path>) -> Result<SessionConfig> {
    match path {
        Some(p) => {
            SessionConfig::from_path(p).with_context(|| format!("loading config {}", p.display()))
        }
        None => Ok(SessionConfig::default()),
    }
}

pub fn read_events(path: &Path) -> Result<Vec<LoggedEvent>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            mode,
            practices,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(p) = practices {
                cfg.practices = p;
            }
            let record = run_session(&cfg)?;
            record.write_archive(&out)?;
            let s = &record.summary;
            println!(
                "{} figures, final CPS {:.2}, accuracy {}",
                record.figures.len(),
                s.final_cps,
                s.accuracy.map_or("n/a".to_string(), |a| format!("{a:.4}"))
            );
        }
        Command::Fig5 { out } => {
            for run in run_fig5(&out)? {
                let (at, peak) = run.peak();
                println!(
                    "{}: peak {peak:.2} at practice {at}, final {:.2}",
                    run.label,
                    run.final_cps()
                );
            }
        }
        Command::Stoptest { out } => {
            let (_, metrics) = run_stoptest(&out)?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
        }
        Command::StabilityMap { kh, dh, delay, out } => {
            let grid = run_stability_map(&out, kh, dh, delay)?;
            let total = grid.kh_axis.len() * grid.dh_axis.len();
            match grid.min_threshold() {
                Some(k) => println!(
                    "{} of {total} points unstable, threshold K_h {k:.1} N/m",
                    grid.unstable_count()
                ),
                None => println!("all {total} points stable"),
            }
        }
        Command::Cohort {
            n,
            gains,
            config,
            out,
        } => {
            let base = load_config(config.as_deref())?;
            let report = run_cohort(n, &gains, &base, Some(&out))?;
            for l in &report.learners {
                println!(
                    "learner {}: final CPS pt {:.2} constant {:.2}, TV pt {:.2} constant {:.2}",
                    l.learner, l.final_cps_pt, l.final_cps_constant, l.tv_pt, l.tv_constant
                );
            }
        }
        Command::Score {
            trajectory,
            figure,
            n,
            tempo,
        } => {
            let file = fs::File::open(&trajectory)
                .with_context(|| format!("opening {}", trajectory.display()))?;
            let cfg = SessionConfig::default();
            let report = score_offline(
                file,
                &builtin_figure(figure),
                n,
                Tempo::new(tempo)?,
                &cfg.zones,
                &cfg.score,
            )?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Replay { session, out } => {
            let cfg = SessionConfig::from_path(&session.join("initial_config.json"))?;
            let events = read_events(&session.join("events.jsonl"))?;
            let record = replay(&cfg, &events)?;
            record.write_archive(&out)?;
            println!(
                "{} figures, final CPS {:.2}",
                record.figures.len(),
                record.summary.final_cps
            );
        }
        Command::Serve {
            port,
            host,
            mode,
            config,
            tick_hz,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => load_config(Some(&p))?,
                None => dancept_core::service::live_config(Mode::Pt),
            };
            if let Some(m) = mode {
                cfg.mode = m;
            }
            cfg.validate()?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve::serve(serve::ServeOptions {
                host,
                port,
                cfg,
                tick_hz,
                out,
            }))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
