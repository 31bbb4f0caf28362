mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qrng_lab::entropy::RobustnessParameter;
use qrng_lab::{Error, OutcomeMode};

use commands::CurveKind;
use config::{EventFormat, RunConfig, SourceKind};

/// Beam-splitter QRNG model: analytical curves, optimum search, event
/// simulation and Toeplitz extraction.
#[derive(Parser, Debug)]
#[command(name = "qrng-lab", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Restrict to one source.
    #[arg(long, global = true, value_enum)]
    source: Option<SourceKind>,
    /// Restrict to one outcome mode (discard or keep).
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<OutcomeMode>,
    #[arg(long, global = true)]
    lambda_min: Option<f64>,
    #[arg(long, global = true)]
    lambda_max: Option<f64>,
    /// Number of sweep points (default: 200 per decade).
    #[arg(long, global = true)]
    points: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write curve data as CSV.
    Curves {
        #[arg(value_enum)]
        which: CurveKind,
        /// Comma-separated coincidence windows in seconds (rawbit).
        #[arg(long, value_delimiter = ',')]
        tau_cw: Option<Vec<f64>>,
        /// Emission rate for waiting-time and count curves.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        m_max: Option<usize>,
    },
    /// Find the min-entropy-rate optimum of each source and mode.
    Optimum,
    /// Simulate detector clicks and compare with the analytical model.
    Simulate {
        #[arg(long)]
        lambda: Option<f64>,
        /// Simulated time in seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        jitter: bool,
        #[arg(long, value_enum)]
        events: Option<EventFormat>,
    },
    /// Hash a recorded event file into output bits.
    Extract {
        /// Event file written by `simulate` (.bin or .csv).
        #[arg(long)]
        input: PathBuf,
        /// Min-entropy per outcome in bits.
        #[arg(long)]
        h_min: Option<f64>,
        #[arg(long)]
        block_len: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        /// Run the monobit, runs and serial tests on the output.
        #[arg(long)]
        battery: bool,
    },
    /// Sweep T1, tau_dead, eta_qe and p_a and report the sps advantage.
    Robustness {
        /// One of t1, tau_dead, eta_qe, p_a.
        #[arg(long, value_parser = parse_parameter)]
        parameter: Option<RobustnessParameter>,
    },
}

fn parse_mode(s: &str) -> Result<OutcomeMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_parameter(s: &str) -> Result<RobustnessParameter, String> {
    RobustnessParameter::ALL
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| format!("unknown parameter `{s}` (expected t1, tau_dead, eta_qe or p_a)"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Io(_) => 2,
        Error::InsufficientData { .. } => 4,
        _ => 3,
    }
}

fn build_config(common: &Common, command: &Command) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.source {
        cfg.source = Some(s);
        cfg.simulation.source = s;
    }
    cfg.mode = common.mode.or(cfg.mode);
    cfg.sweep.lambda_min = common.lambda_min.or(cfg.sweep.lambda_min);
    cfg.sweep.lambda_max = common.lambda_max.or(cfg.sweep.lambda_max);
    cfg.sweep.points = common.points.or(cfg.sweep.points);
    if let Some(seed) = common.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    match command {
        Command::Curves {
            tau_cw,
            lambda,
            m_max,
            ..
        } => {
            if let Some(cw) = tau_cw {
                cfg.sweep.tau_cw = cw.clone();
            }
            cfg.grid.lambda = lambda.unwrap_or(cfg.grid.lambda);
            cfg.grid.m_max = m_max.unwrap_or(cfg.grid.m_max);
        }
        Command::Simulate {
            lambda,
            duration,
            jitter,
            events,
        } => {
            cfg.simulation.lambda = lambda.unwrap_or(cfg.simulation.lambda);
            cfg.simulation.duration = duration.unwrap_or(cfg.simulation.duration);
            cfg.simulation.jitter |= jitter;
            cfg.simulation.events = events.unwrap_or(cfg.simulation.events);
        }
        Command::Extract {
            h_min,
            block_len,
            eps,
            ..
        } => {
            cfg.extraction.h_min = h_min.or(cfg.extraction.h_min);
            cfg.extraction.block_len = block_len.unwrap_or(cfg.extraction.block_len);
            cfg.extraction.security_eps = eps.unwrap_or(cfg.extraction.security_eps);
        }
        Command::Optimum | Command::Robustness { .. } => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = build_config(&cli.common, &cli.command)?;
    match cli.command {
        Command::Curves { which, .. } => {
            for path in commands::curves(&cfg, which)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Optimum => {
            let report = commands::optimum(&cfg)?;
            let path = cfg.out.join("optimum.json");
            let text =
                serde_json::to_string_pretty(&report).map_err(|e| Error::Numeric(e.to_string()))?;
            std::fs::create_dir_all(&cfg.out).map_err(|e| Error::Io(e.to_string()))?;
            std::fs::write(&path, format!("{text}\n")).map_err(|e| Error::Io(e.to_string()))?;
            println!("{text}");
        }
        Command::Simulate { .. } => {
            let out = commands::simulate(&cfg)?;
            let t = &out.tallies;
            println!(
                "{} photons, clicks a/b {}/{}, coincidences {}, permutations {}/{} ({:.2} s)",
                t.photons_emitted,
                t.clicks[0],
                t.clicks[1],
                t.coincidences,
                t.permutations,
                t.permutation_candidates,
                out.seconds
            );
            for (mode, rows) in &out.comparison {
                println!("{} mode: quantity, analytical, empirical, z", mode.name());
                for r in rows {
                    println!(
                        "  {:<16} {:>14.6e} {:>14.6e} {:>+8.2}",
                        r.quantity, r.analytical, r.empirical, r.z
                    );
                }
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Extract { input, battery, .. } => {
            let out = commands::extract(&cfg, &input, battery)?;
            let m = &out.metadata;
            println!(
                "h_min {:.6} bits/outcome, n {}, m {}, m/n {:.6}, {} blocks, {} output bits, {:.1} Mbit/s",
                m.h_min,
                m.n,
                m.m,
                m.m_over_n,
                m.blocks,
                m.output_bits,
                m.output_bits as f64 / out.seconds.max(1e-9) / 1e6
            );
            if let Some(b) = out.battery {
                println!(
                    "battery p-values: monobit {:.4}, runs {:.4}, serial {:.4}/{:.4} -> {}",
                    b.monobit,
                    b.runs,
                    b.serial_1,
                    b.serial_2,
                    if b.passes(0.01) { "pass" } else { "fail" }
                );
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Robustness { parameter } => {
            let (rows, path) = commands::robustness(&cfg, parameter)?;
            for r in &rows {
                println!(
                    "{:<8} {:>11.4e}  discard {:+.4}  keep {:+.4}",
                    r.parameter.name(),
                    r.value,
                    r.advantage_discard,
                    r.advantage_keep
                );
            }
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("QRNG_LAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
