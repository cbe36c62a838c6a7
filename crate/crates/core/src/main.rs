use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use blast_sim::ids::Mechanism;
use blast_sim::simctl::{emit_reports, load_scenario, run, verify_run_dir, write_batch, write_summary_csv, ConfigError, Strategy};

#[derive(Parser)]
#[command(name = "blast-sim", version, about = "Deterministic spectrum-market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        /// Preset name (`scenario1`, `scenario2`) or path to a JSON config.
        #[arg(long)]
        scenario: String,
        /// ds, fp or sp; a comma list runs each and writes a comparison summary.
        #[arg(long)]
        mechanism: Option<String>,
        #[arg(long)]
        ticks: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Run this many consecutive seeds starting at --seed.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        brain_endpoint: Option<String>,
        /// Override every agent's strategy: heuristic or pipeline.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Re-scan a run directory's commit-phase world snapshots for plaintext bids.
    VerifyPrivacy {
        #[arg(long)]
        run: PathBuf,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

#[allow(clippy::too_many_arguments)]
fn run_command(
    scenario: &str,
    mechanism: Option<String>,
    ticks: Option<u64>,
    seed: Option<u64>,
    out: PathBuf,
    seeds: Option<u64>,
    brain_endpoint: Option<String>,
    strategy: Option<String>,
) -> Result<(), Failure> {
    let mut base = load_scenario(scenario)?;
    if let Some(t) = ticks {
        base.num_ticks = t;
    }
    if let Some(s) = seed {
        base.seed = s;
    }
    if let Some(url) = brain_endpoint {
        base.brain.endpoint = Some(url);
    }
    if let Some(s) = strategy {
        let s = match s.as_str() {
            "heuristic" => Strategy::Heuristic,
            "pipeline" => Strategy::Pipeline,
            other => return Err(Failure::Validation(format!("strategy: unknown value `{other}`"))),
        };
        base = base.with_strategy(s);
    }
    let mechanisms: Vec<Mechanism> = match mechanism {
        Some(list) => list
            .split(',')
            .map(|m| m.trim().parse::<Mechanism>().map_err(|e| Failure::Validation(format!("mechanism: {e}"))))
            .collect::<Result<_, _>>()?,
        None => vec![base.mechanism],
    };
    base.validate()?;

    let multi = mechanisms.len() > 1;
    let mut comparison = Vec::new();
    for mech in &mechanisms {
        let mut cfg = base.clone();
        cfg.mechanism = *mech;
        let dir = if multi { out.join(mech.code()) } else { out.clone() };
        match seeds {
            Some(k) if k > 1 => {
                let mut summaries = Vec::new();
                for s in cfg.seed..cfg.seed + k {
                    let artifacts = run(&cfg, s).map_err(|e| Failure::Runtime(e.to_string()))?;
                    emit_reports(&artifacts, &dir.join(format!("seed-{s}"))).map_err(io)?;
                    summaries.push(artifacts.summary);
                }
                let batch = write_batch(&dir, &summaries).map_err(io)?;
                println!(
                    "{} over {k} seeds: surplus {:.2} ± {:.2}, efficiency {:.4}",
                    mech.label(),
                    batch.surplus.mean,
                    batch.surplus.stddev,
                    batch.efficiency.mean
                );
                comparison.extend(summaries.first().cloned());
            }
            _ => {
                let artifacts = run(&cfg, cfg.seed).map_err(|e| Failure::Runtime(e.to_string()))?;
                emit_reports(&artifacts, &dir).map_err(io)?;
                let s = &artifacts.summary;
                println!(
                    "{}: {} trades, {:.2} USD/MHz, surplus {:.2}, efficiency {:.4}, gini {:.4}, hhi {:.4}",
                    mech.label(),
                    s.trades,
                    s.avg_usd_per_mhz,
                    s.surplus,
                    s.efficiency,
                    s.gini,
                    s.hhi
                );
                comparison.push(artifacts.summary);
            }
        }
    }
    if multi {
        write_summary_csv(&out.join("summary.csv"), &comparison).map_err(io)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, mechanism, ticks, seed, out, seeds, brain_endpoint, strategy } => {
            run_command(&scenario, mechanism, ticks, seed, out, seeds, brain_endpoint, strategy)
        }
        Command::VerifyPrivacy { run } => match verify_run_dir(&run) {
            Ok(report) => {
                println!("scanned {} snapshots, {} bids: {} findings", report.snapshots_scanned, report.bids_checked, report.findings.len());
                for f in &report.findings {
                    println!("tick {} {} {}: `{}` in {}", f.tick, f.auction, f.bidder, f.needle, f.key);
                }
                if report.is_clean() {
                    Ok(())
                } else {
                    Err(Failure::Runtime("plaintext bids found in world state".into()))
                }
            }
            Err(e) => Err(io(e)),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
