use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use qrng_lab::detection::rate_bundle;
use qrng_lab::entropy::{
    advantage_report, entropy_rate_curve, entropy_report, find_optimum, robustness_point,
    OptimumPoint, RobustnessParameter, RobustnessRow,
};
use qrng_lab::extract::{extract_stream, statistical_battery, ExtractorConfig};
use qrng_lab::simulate::{
    comparison_table, estimate_statistics, outcomes_from_records, read_binary_events,
    simulate_into, BinaryEventWriter, ClickClass, ClickRecord, CsvEventWriter, NullSink, SimConfig,
    Tallies,
};
use qrng_lab::transitions::transition_matrix;
use qrng_lab::waiting_time::{GridFunction, WaitingTimeGrid};
use qrng_lab::{Detector, Error, LightSource, Outcome, OutcomeMode, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{EventFormat, RunConfig, SourceKind};

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| io_err(path, e))?,
    ))
}

/// Writes a numeric CSV with nine significant digits per value.
fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = create(path)?;
    let mut body = String::with_capacity(rows.len() * 64);
    body.push_str(header);
    body.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
        body.push_str(&cells.join(","));
        body.push('\n');
    }
    out.write_all(body.as_bytes())
        .map_err(|e| io_err(path, e))?;
    out.flush().map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| io_err(path, e))?;
    out.flush().map_err(|e| io_err(path, e))
}

fn source_at(cfg: &RunConfig, kind: SourceKind, lambda: f64) -> Result<LightSource<f64>> {
    cfg.family(kind).at(lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CurveKind {
    Rawbit,
    Transitions,
    Entropy,
    EntropyRate,
    Waiting,
    Pm,
}

pub fn curves(cfg: &RunConfig, which: CurveKind) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    match which {
        CurveKind::Rawbit => {
            if cfg.sweep.tau_cw.is_empty() {
                return Err(Error::Config("no coincidence windows given".into()));
            }
            for kind in cfg.sources() {
                let lambdas = cfg.lambdas(kind)?;
                let mut rows = Vec::new();
                for &cw in &cfg.sweep.tau_cw {
                    let chain = qrng_lab::DetectorChain {
                        tau_cw: cw,
                        ..cfg.chain
                    };
                    chain.validate().map_err(|e| Error::Config(e.to_string()))?;
                    let part: Vec<Vec<f64>> = lambdas
                        .par_iter()
                        .map(|&l| {
                            let b = rate_bundle(&source_at(cfg, kind, l)?, &chain)?;
                            Ok(vec![
                                cw,
                                l,
                                b.lambda_click_a,
                                b.lambda_bit_a,
                                b.lambda_bit_total,
                                b.lambda_coinc,
                            ])
                        })
                        .collect::<Result<_>>()?;
                    rows.extend(part);
                }
                let path = cfg.out.join(format!("rawbit_{}.csv", kind.name()));
                write_csv(
                    &path,
                    "tau_cw,lambda,lambda_click_a,lambda_bit_a,lambda_bit_total,lambda_coinc",
                    &rows,
                )?;
                written.push(path);
            }
        }
        CurveKind::Transitions => {
            for kind in cfg.sources() {
                let lambdas = cfg.lambdas(kind)?;
                for mode in cfg.modes() {
                    let rows: Vec<Vec<f64>> = lambdas
                        .par_iter()
                        .map(|&l| {
                            let m = transition_matrix(&source_at(cfg, kind, l)?, &cfg.chain, mode)?;
                            let mut row =
                                vec![l, m.p(Outcome::B, Outcome::A), m.p(Outcome::A, Outcome::A)];
                            if mode == OutcomeMode::KeepCoincidences {
                                row.extend([
                                    m.p(Outcome::AB, Outcome::A),
                                    m.p(Outcome::A, Outcome::AB),
                                    m.p(Outcome::AB, Outcome::AB),
                                ]);
                            }
                            Ok(row)
                        })
                        .collect::<Result<_>>()?;
                    let header = match mode {
                        OutcomeMode::DiscardCoincidences => "lambda,p_b_given_a,p_a_given_a",
                        OutcomeMode::KeepCoincidences => {
                            "lambda,p_b_given_a,p_a_given_a,p_ab_given_a,p_a_given_ab,p_ab_given_ab"
                        }
                    };
                    let path =
                        cfg.out
                            .join(format!("transitions_{}_{}.csv", kind.name(), mode.name()));
                    write_csv(&path, header, &rows)?;
                    written.push(path);
                }
            }
        }
        CurveKind::Entropy | CurveKind::EntropyRate => {
            let stem = if which == CurveKind::Entropy {
                "entropy"
            } else {
                "entropy_rate"
            };
            for kind in cfg.sources() {
                let lambdas = cfg.lambdas(kind)?;
                for mode in cfg.modes() {
                    let reports =
                        entropy_rate_curve(&cfg.family(kind), &cfg.chain, mode, &lambdas)?;
                    let rows: Vec<Vec<f64>> = reports
                        .iter()
                        .map(|r| {
                            vec![
                                r.lambda,
                                r.outcome_rate,
                                r.h_shannon_cond,
                                r.h_min_cond,
                                r.h_shannon_rate,
                                r.h_min_rate,
                            ]
                        })
                        .collect();
                    let path = cfg
                        .out
                        .join(format!("{stem}_{}_{}.csv", kind.name(), mode.name()));
                    write_csv(
                        &path,
                        "lambda,outcome_rate,h_sh_cond,h_min_cond,h_sh_rate,h_min_rate",
                        &rows,
                    )?;
                    written.push(path);
                }
            }
        }
        CurveKind::Waiting | CurveKind::Pm => {
            let eta = cfg.grid.eta.unwrap_or(cfg.chain.eta_qe);
            for kind in cfg.sources() {
                let src = source_at(cfg, kind, cfg.grid.lambda)?;
                let grid = WaitingTimeGrid::build(&src, eta, cfg.grid.m_max, cfg.grid_spec())?;
                let functions: Vec<(GridFunction, String)> = if which == CurveKind::Waiting {
                    std::iter::once((GridFunction::K, "K".to_string()))
                        .chain((1..=grid.m_max()).map(|m| (GridFunction::L(m), format!("L{m}"))))
                        .collect()
                } else {
                    (0..=grid.m_max())
                        .map(|m| (GridFunction::P(m), format!("P{m}")))
                        .collect()
                };
                for (f, label) in functions {
                    let path = cfg.out.join(format!("waiting_{}_{label}.csv", kind.name()));
                    let mut out = create(&path)?;
                    grid.write_csv(f, &mut out)
                        .and_then(|_| out.flush())
                        .map_err(|e| io_err(&path, e))?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimumEntry {
    pub source: &'static str,
    pub mode: OutcomeMode,
    pub lambda_star: f64,
    pub k_star: Option<f64>,
    pub h_min_rate_star: f64,
    /// Min-entropy per outcome at the optimum, the extractor's sizing input.
    pub h_min_per_outcome: f64,
    pub multimodal: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdvantageSummary {
    pub discard_pct: f64,
    pub keep_pct: f64,
    pub laser_keep_gain_pct: f64,
    pub sps_keep_gain_pct: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimumReport {
    pub points: Vec<OptimumEntry>,
    pub advantage: Option<AdvantageSummary>,
}

fn entry(
    cfg: &RunConfig,
    kind: SourceKind,
    mode: OutcomeMode,
    p: OptimumPoint<f64>,
) -> Result<OptimumEntry> {
    let h = entropy_report(&source_at(cfg, kind, p.lambda_star)?, &cfg.chain, mode)?.h_min_cond;
    Ok(OptimumEntry {
        source: kind.name(),
        mode,
        lambda_star: p.lambda_star,
        k_star: p.k_star,
        h_min_rate_star: p.h_min_rate_star,
        h_min_per_outcome: h,
        multimodal: p.multimodal,
    })
}

pub fn optimum(cfg: &RunConfig) -> Result<OptimumReport> {
    if cfg.source.is_none() && cfg.mode.is_none() {
        let r = advantage_report(&cfg.chain, cfg.gamma)?;
        let mut points = Vec::new();
        for cmp in [r.discard, r.keep] {
            points.push(entry(cfg, SourceKind::Laser, cmp.mode, cmp.laser)?);
            points.push(entry(cfg, SourceKind::Sps, cmp.mode, cmp.sps)?);
        }
        let advantage = AdvantageSummary {
            discard_pct: 100.0 * r.discard.advantage,
            keep_pct: 100.0 * r.keep.advantage,
            laser_keep_gain_pct: 100.0 * r.laser_keep_gain,
            sps_keep_gain_pct: 100.0 * r.sps_keep_gain,
        };
        return Ok(OptimumReport {
            points,
            advantage: Some(advantage),
        });
    }
    let mut points = Vec::new();
    for mode in cfg.modes() {
        for kind in cfg.sources() {
            let p = find_optimum(&cfg.family(kind), &cfg.chain, mode)?;
            points.push(entry(cfg, kind, mode, p)?);
        }
    }
    Ok(OptimumReport {
        points,
        advantage: None,
    })
}

pub struct SimulationOutput {
    pub tallies: Tallies,
    pub comparison: Vec<(OutcomeMode, Vec<qrng_lab::simulate::ComparisonRow>)>,
    pub files: Vec<PathBuf>,
    pub seconds: f64,
}

pub fn simulate(cfg: &RunConfig) -> Result<SimulationOutput> {
    let s = &cfg.simulation;
    let source = source_at(cfg, s.source, s.lambda)?;
    let sim = SimConfig {
        source,
        chain: cfg.chain,
        mode: cfg.mode.unwrap_or(OutcomeMode::KeepCoincidences),
        duration: s.duration,
        seed: s.seed,
        jitter_enabled: s.jitter,
    };
    let start = Instant::now();
    let mut files = Vec::new();
    let tallies = match s.events {
        EventFormat::Binary => {
            let path = cfg.out.join("events.bin");
            let mut sink = BinaryEventWriter(create(&path)?);
            let t = simulate_into(&sim, &mut sink)?;
            sink.0.flush().map_err(|e| io_err(&path, e))?;
            files.push(path);
            t
        }
        EventFormat::Csv => {
            let path = cfg.out.join("events.csv");
            let mut sink = CsvEventWriter::new(create(&path)?);
            let t = simulate_into(&sim, &mut sink)?;
            sink.finish()
                .and_then(|mut w| w.flush())
                .map_err(|e| io_err(&path, e))?;
            files.push(path);
            t
        }
        EventFormat::None => simulate_into(&sim, &mut NullSink)?,
    };
    let seconds = start.elapsed().as_secs_f64();
    let path = cfg.out.join("tallies.json");
    write_json(&path, &tallies)?;
    files.push(path);

    let mut comparison = Vec::new();
    for mode in cfg.modes() {
        let stats = estimate_statistics(&tallies, mode)?;
        let rows = comparison_table(&source, &cfg.chain, &stats)?;
        let path = cfg.out.join(format!("comparison_{}.csv", mode.name()));
        let mut out = create(&path)?;
        let mut body = String::from("quantity,analytical,empirical,std_error,z\n");
        for r in &rows {
            body.push_str(&format!(
                "{},{:.8e},{:.8e},{:.8e},{:.8e}\n",
                r.quantity, r.analytical, r.empirical, r.std_error, r.z
            ));
        }
        out.write_all(body.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| io_err(&path, e))?;
        files.push(path);
        comparison.push((mode, rows));
    }
    Ok(SimulationOutput {
        tallies,
        comparison,
        files,
        seconds,
    })
}

fn read_csv_events(path: &Path) -> Result<Vec<ClickRecord>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if i == 0 || line.is_empty() {
            continue;
        }
        let bad = || {
            Error::Config(format!(
                "{}:{}: malformed event `{line}`",
                path.display(),
                i + 1
            ))
        };
        let mut parts = line.split(',');
        let t = parts
            .next()
            .and_then(|v| v.parse::<u64>().ok())
            .ok_or_else(bad)? as f64
            * 1e-12;
        let detector = match parts.next() {
            Some("a") => Detector::A,
            Some("b") => Detector::B,
            _ => return Err(bad()),
        };
        let class = match parts.next() {
            Some("single") => ClickClass::Single,
            Some("coincidence") => ClickClass::CoincidenceMember,
            _ => return Err(bad()),
        };
        records.push(ClickRecord {
            time: t,
            true_time: t,
            detector,
            class,
        });
    }
    Ok(records)
}

pub fn read_events(path: &Path) -> Result<Vec<ClickRecord>> {
    if path.extension().is_some_and(|e| e == "csv") {
        read_csv_events(path)
    } else {
        read_binary_events(File::open(path).map_err(|e| io_err(path, e))?)
    }
}

pub struct ExtractionOutput {
    pub metadata: qrng_lab::extract::ExtractionMetadata,
    pub battery: Option<qrng_lab::extract::BatteryResult>,
    pub files: Vec<PathBuf>,
    pub seconds: f64,
}

pub fn extract(cfg: &RunConfig, input: &Path, battery: bool) -> Result<ExtractionOutput> {
    let h = cfg.extraction.h_min.ok_or_else(|| {
        Error::Config(
            "no min-entropy per outcome given; run `qrng-lab optimum` and pass its h_min_per_outcome via --h-min".into(),
        )
    })?;
    let mode = cfg.mode.unwrap_or(OutcomeMode::KeepCoincidences);
    let outcomes = outcomes_from_records(&read_events(input)?);
    let ext = ExtractorConfig::seeded(
        mode,
        h,
        cfg.extraction.block_len,
        cfg.extraction.security_eps,
        cfg.extraction.seed,
    )?;
    let start = Instant::now();
    let (bits, metadata) = extract_stream(&outcomes, &ext)?;
    let seconds = start.elapsed().as_secs_f64();
    if metadata.blocks == 0 {
        return Err(Error::InsufficientData {
            got: outcomes.len() as u64,
            need: cfg.extraction.block_len as u64,
        });
    }
    let bin = cfg.out.join("extracted.bin");
    let mut out = create(&bin)?;
    out.write_all(&bits.to_bytes_msb())
        .and_then(|_| out.flush())
        .map_err(|e| io_err(&bin, e))?;
    let meta_path = cfg.out.join("extracted.json");
    write_json(&meta_path, &metadata)?;
    let battery = if battery {
        Some(statistical_battery(&bits)?)
    } else {
        None
    };
    Ok(ExtractionOutput {
        metadata,
        battery,
        files: vec![bin, meta_path],
        seconds,
    })
}

pub fn robustness(
    cfg: &RunConfig,
    only: Option<RobustnessParameter>,
) -> Result<(Vec<RobustnessRow<f64>>, PathBuf)> {
    let params: Vec<RobustnessParameter> = match only {
        Some(p) => vec![p],
        None => RobustnessParameter::ALL.to_vec(),
    };
    let jobs: Vec<(RobustnessParameter, f64)> = params
        .iter()
        .flat_map(|&p| p.default_values().into_iter().map(move |v| (p, v)))
        .collect();
    let rows: Vec<RobustnessRow<f64>> = jobs
        .par_iter()
        .map(|&(p, v)| robustness_point(&cfg.chain, cfg.gamma, p, v))
        .collect::<Result<_>>()?;
    let path = cfg.out.join("robustness.csv");
    let mut body = String::from("parameter,value,advantage_discard,advantage_keep\n");
    for r in &rows {
        body.push_str(&format!(
            "{},{:.8e},{:.8e},{:.8e}\n",
            r.parameter.name(),
            r.value,
            r.advantage_discard,
            r.advantage_keep
        ));
    }
    let mut out = create(&path)?;
    out.write_all(body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| io_err(&path, e))?;
    Ok((rows, path))
}
