use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use civr_cli::commands::{self, RunError};
use civr_cli::config::{self, RunConfig};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "civr", version, about = "Complex-trajectory semiclassical wavepacket propagation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config, or a manifest.json from an earlier run. Defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set civr.a=0.5` or `--set run.times=[1.0]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(short, long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Propagator, wavefunction and contribution-map CSVs for every time.
    Propagate(Common),
    /// Fidelity of the CIVR wavefunction against the split-operator oracle.
    Compare(Common),
    /// Fidelity against the oracle over a range of smoothing widths.
    ScanWidth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a_min: Option<f64>,
        #[arg(long)]
        a_max: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Full time series of single trajectories.
    Trajectories {
        #[command(flatten)]
        common: Common,
        /// Companion point `q1,p1`; repeatable. Defaults to the central trajectory.
        #[arg(long = "launch", value_name = "Q1,P1", value_parser = parse_pair)]
        launches: Vec<(f64, f64)>,
    },
    /// Lowest eigenvalues by imaginary-time relaxation.
    Eigen(Common),
    /// Print the default configuration.
    DefaultConfig,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected Q1,P1")?;
    let a = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((a, b))
}

fn load(common: &Common, extra: Vec<String>) -> Result<RunConfig, RunError> {
    let mut overrides = common.overrides.clone();
    overrides.extend(extra);
    let cfg = match &common.config {
        Some(path) => config::load(path, &overrides)?.0,
        None => config::parse("", &overrides)?,
    };
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), RunError> {
    let (common, extra) = match &cli.command {
        Command::DefaultConfig => {
            let text = toml::to_string(&RunConfig::default()).expect("default config serialises");
            print!("{text}");
            return Ok(());
        }
        Command::ScanWidth { common, a_min, a_max, steps } => {
            let mut extra = Vec::new();
            a_min.map(|v| extra.push(format!("civr.scan.a_min={v:?}")));
            a_max.map(|v| extra.push(format!("civr.scan.a_max={v:?}")));
            steps.map(|v| extra.push(format!("civr.scan.steps={v}")));
            (common, extra)
        }
        Command::Propagate(c) | Command::Compare(c) | Command::Eigen(c) => (c, Vec::new()),
        Command::Trajectories { common, .. } => (common, Vec::new()),
    };
    let cfg = load(common, extra)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers)
        .build()
        .map_err(|e| RunError::Io(std::io::Error::other(e)))?;
    let workers = pool.current_num_threads();
    let out = &common.out;
    let start = Instant::now();
    pool.install(|| -> Result<(), RunError> {
        match &cli.command {
            Command::Propagate(_) => {
                for s in commands::propagate(&cfg, out)? {
                    println!(
                        "T={}: accepted {}/{} trajectories, {} invalid, norm {:.6}",
                        s.t, s.accepted_trajectories, s.ensemble.trajectories, s.ensemble.invalid, s.norm
                    );
                }
            }
            Command::Compare(_) => {
                for e in commands::compare(&cfg, out)? {
                    println!(
                        "T={}: fidelity {:.6}, norm {:.6}, accepted fraction {:.4}",
                        e.t, e.fidelity, e.norm, e.accepted_fraction
                    );
                }
            }
            Command::ScanWidth { .. } => {
                for r in commands::scan_width(&cfg, out)? {
                    let mark = if r.best { "  <- best" } else { "" };
                    println!("T={} a={:.4}: fidelity {:.6}, norm {:.6}{mark}", r.t, r.a, r.fidelity, r.norm);
                }
            }
            Command::Trajectories { launches, .. } => {
                for p in commands::trajectories(&cfg, launches, out)? {
                    println!("{}", p.display());
                }
            }
            Command::Eigen(_) => {
                for (n, e) in commands::eigen(&cfg, out)?.iter().enumerate() {
                    println!("E{n} = {e:.6}");
                }
            }
            Command::DefaultConfig => unreachable!(),
        }
        Ok(())
    })?;
    if out.is_dir() {
        let timing = json!({ "wall_seconds": start.elapsed().as_secs_f64(), "workers": workers });
        std::fs::write(out.join("timing.json"), format!("{timing:#}\n"))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
