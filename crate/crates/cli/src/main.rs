use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use evfleet::config::{GenSpec, ScenarioConfig};
use evfleet::scenario::{export_synthetic, fit_dataset, run_many, run_scenario};

#[derive(Parser)]
#[command(name = "evfleet", version, about = "Electric ride-hailing fleet simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long, env = "EVFLEET_OUT_DIR", default_value = "out")]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the horizon, in days.
        #[arg(long)]
        horizon_days: Option<f64>,
        /// Cross-check vehicle and station state after every event.
        #[arg(long = "assert")]
        check_invariants: bool,
    },
    /// Fit the distance correction factor on a trip CSV.
    Fit {
        csv: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic Poisson trip dataset as CSV.
    Gen {
        spec: PathBuf,
        /// Destination file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a scenario config, then print it with defaults filled in.
    Validate { config: PathBuf },
    /// Run a scenario under consecutive seeds in parallel and print one CSV row per seed.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 4)]
        threads: usize,
    },
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Run {
            config,
            out: dir,
            seed,
            horizon_days,
            check_invariants,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = horizon_days {
                cfg.horizon_minutes = d * 1440.0;
            }
            cfg.check_invariants |= check_invariants;
            cfg.validate()?;
            let manifest = run_scenario(&cfg, &dir).with_context(|| format!("running {}", config.display()))?;
            let summary = std::fs::read_to_string(dir.join("summary.json"))?;
            writeln!(out, "{summary}")?;
            writeln!(
                out,
                "wrote {} artifacts to {} in {:.2}s",
                manifest.artifacts.len(),
                dir.display(),
                manifest.runtime_seconds
            )?;
        }
        Command::Fit {
            csv,
            train_fraction,
            seed,
        } => {
            let (report, fit) =
                fit_dataset(&csv, train_fraction, seed).with_context(|| format!("fitting {}", csv.display()))?;
            let json = serde_json::json!({ "load_report": report, "regression": fit });
            writeln!(out, "{}", serde_json::to_string_pretty(&json)?)?;
        }
        Command::Gen { spec, out: dest } => {
            let spec = GenSpec::load(&spec).with_context(|| format!("loading {}", spec.display()))?;
            let rows = match dest {
                Some(p) => {
                    let rows = export_synthetic(&spec, BufWriter::new(File::create(&p)?))?;
                    writeln!(out, "wrote {rows} trips to {}", p.display())?;
                    rows
                }
                None => export_synthetic(&spec, &mut out)?,
            };
            if rows == 0 {
                bail!("generator produced no trips");
            }
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            write!(out, "{}", cfg.to_toml_string())?;
        }
        Command::Sweep { config, seeds, threads } => {
            let base = load_config(&config)?;
            let configs: Vec<ScenarioConfig> = (0..seeds)
                .map(|i| ScenarioConfig {
                    seed: base.seed + i,
                    ..base.clone()
                })
                .collect();
            writeln!(
                out,
                "seed,arrivals,completed,service_level,avg_pickup_time_min,time_avg_soc,charger_trips"
            )?;
            let mut failed = 0;
            for (cfg, result) in configs.iter().zip(run_many(&configs, threads)) {
                match result {
                    Ok(r) => {
                        let s = r.summary;
                        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
                        writeln!(
                            out,
                            "{},{},{},{},{},{},{}",
                            cfg.seed,
                            s.arrivals,
                            s.completed,
                            opt(s.service_level),
                            opt(s.avg_pickup_time_min),
                            opt(s.time_avg_soc),
                            s.charger_trips
                        )?;
                    }
                    Err(e) => {
                        failed += 1;
                        eprintln!("seed {}: {e}", cfg.seed);
                    }
                }
            }
            if failed > 0 {
                bail!("{failed} of {seeds} runs failed");
            }
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
