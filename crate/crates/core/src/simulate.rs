//! Event-driven Monte Carlo of the whole detection chain.
//!
//! Photons are emitted as a renewal process, survive the quantum efficiency,
//! are routed by the splitter, optionally jittered, and dropped while the
//! target detector is dead (non-paralyzable). Clicks are then classified in
//! recorded-time order: two clicks on opposite detectors within `τ_cw` form a
//! coincidence.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::detection::{rate_bundle, Detector, DetectorChain, RateBundle};
use crate::error::{domain, Error, Result};
use crate::source::LightSource;
use crate::transitions::{transition_matrix_with, Outcome, OutcomeMode, TransitionModel};

/// Generator used for every stream; recorded in run metadata.
pub const RNG_ALGORITHM: &str =
    "ChaCha12 (rand_chacha), seeded from a u64 via seed_from_u64, stream id via set_stream";

/// Minimum number of outcomes for [`estimate_statistics`].
pub const MIN_OUTCOMES: u64 = 1000;

/// Deterministic generator for `(seed, stream)`; distinct streams never overlap.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub source: LightSource<f64>,
    pub chain: DetectorChain<f64>,
    pub mode: OutcomeMode,
    /// Simulated time, seconds.
    pub duration: f64,
    pub seed: u64,
    pub jitter_enabled: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.chain.validate()?;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(domain(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        Ok(())
    }
}

/// Time from one emission to the next.
#[derive(Debug, Clone, Copy)]
pub enum InterarrivalSampler {
    Laser(Exp<f64>),
    /// Pump to the excited state, then decay.
    TwoLevel(Exp<f64>, Exp<f64>),
}

impl InterarrivalSampler {
    pub fn new(source: &LightSource<f64>) -> Result<Self> {
        source.validate()?;
        let exp = |r: f64| Exp::new(r).map_err(|e| domain(e.to_string()));
        Ok(match *source {
            LightSource::Laser { lambda } => Self::Laser(exp(lambda)?),
            LightSource::SinglePhoton { k, gamma } => Self::TwoLevel(exp(k)?, exp(gamma)?),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Laser(e) => e.sample(rng),
            Self::TwoLevel(pump, decay) => pump.sample(rng) + decay.sample(rng),
        }
    }
}

/// One draw of the emission interarrival time.
pub fn sample_interarrival<R: Rng + ?Sized>(source: &LightSource<f64>, rng: &mut R) -> Result<f64> {
    Ok(InterarrivalSampler::new(source)?.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClickClass {
    Single,
    CoincidenceMember,
}

/// A detector click. `time` is the recorded (possibly jittered) timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickRecord {
    pub time: f64,
    pub true_time: f64,
    pub detector: Detector,
    pub class: ClickClass,
}

/// Counters accumulated while streaming.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Tallies {
    pub duration: f64,
    pub photons_emitted: u64,
    pub clicks: [u64; 2],
    pub singles: [u64; 2],
    pub coincidences: u64,
    /// Consecutive opposite-detector clicks outside the window whose recorded order is reversed.
    pub permutations: u64,
    /// Opposite-detector neighbours (in true order) separated by more than the window.
    pub permutation_candidates: u64,
    pub outcomes: [u64; 3],
    /// `transitions_keep[y][x]`: outcome `x` directly after `y`.
    pub transitions_keep: [[u64; 3]; 3],
    /// As above with coincidences removed from the sequence.
    pub transitions_discard: [[u64; 2]; 2],
}

impl Tallies {
    /// Tallies of an already classified record sequence in recorded-time order.
    pub fn from_records(records: &[ClickRecord], duration: f64) -> Self {
        let mut t = Tallies {
            duration,
            ..Default::default()
        };
        let mut seq = OutcomeSequence::default();
        let mut i = 0;
        while i < records.len() {
            let r = records[i];
            t.clicks[r.detector.index()] += 1;
            match r.class {
                ClickClass::Single => {
                    t.singles[r.detector.index()] += 1;
                    seq.push(&mut t, r.detector.into());
                    i += 1;
                }
                ClickClass::CoincidenceMember => {
                    if let Some(n) = records
                        .get(i + 1)
                        .filter(|n| n.class == ClickClass::CoincidenceMember)
                    {
                        t.clicks[n.detector.index()] += 1;
                        i += 1;
                    }
                    t.coincidences += 1;
                    seq.push(&mut t, Outcome::AB);
                    i += 1;
                }
            }
        }
        t
    }

    pub fn outcome_count(&self, mode: OutcomeMode) -> u64 {
        match mode {
            OutcomeMode::DiscardCoincidences => self.outcomes[0] + self.outcomes[1],
            OutcomeMode::KeepCoincidences => self.outcomes.iter().sum(),
        }
    }
}

#[derive(Debug, Default)]
struct OutcomeSequence {
    last_keep: Option<Outcome>,
    last_discard: Option<Outcome>,
}

impl OutcomeSequence {
    fn push(&mut self, t: &mut Tallies, o: Outcome) {
        t.outcomes[o.index()] += 1;
        if let Some(y) = self.last_keep {
            t.transitions_keep[y.index()][o.index()] += 1;
        }
        self.last_keep = Some(o);
        if o != Outcome::AB {
            if let Some(y) = self.last_discard {
                t.transitions_discard[y.index()][o.index()] += 1;
            }
            self.last_discard = Some(o);
        }
    }
}

/// Destination of classified clicks.
pub trait EventSink {
    fn record(&mut self, rec: &ClickRecord) -> std::io::Result<()>;
}

/// Keeps nothing; only the tallies survive.
pub struct NullSink;

impl EventSink for NullSink {
    fn record(&mut self, _: &ClickRecord) -> std::io::Result<()> {
        Ok(())
    }
}

impl EventSink for Vec<ClickRecord> {
    fn record(&mut self, rec: &ClickRecord) -> std::io::Result<()> {
        self.push(*rec);
        Ok(())
    }
}

pub const BINARY_RECORD_LEN: usize = 10;

fn time_ps(t: f64) -> u64 {
    (t * 1e12).round().max(0.0) as u64
}

fn class_code(c: ClickClass) -> u8 {
    match c {
        ClickClass::Single => 0,
        ClickClass::CoincidenceMember => 1,
    }
}

/// Little-endian records: u64 timestamp (ps), u8 detector (0 = a, 1 = b), u8 class
/// (0 = single, 1 = coincidence member).
pub struct BinaryEventWriter<W: Write>(pub W);

impl<W: Write> EventSink for BinaryEventWriter<W> {
    fn record(&mut self, rec: &ClickRecord) -> std::io::Result<()> {
        let mut buf = [0u8; BINARY_RECORD_LEN];
        buf[..8].copy_from_slice(&time_ps(rec.time).to_le_bytes());
        buf[8] = rec.detector.index() as u8;
        buf[9] = class_code(rec.class);
        self.0.write_all(&buf)
    }
}

/// `time_ps,detector,class` rows after a header line.
pub struct CsvEventWriter<W: Write> {
    out: W,
    header_written: bool,
}

impl<W: Write> CsvEventWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            header_written: false,
        }
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        if !self.header_written {
            writeln!(self.out, "time_ps,detector,class")?;
        }
        Ok(self.out)
    }
}

impl<W: Write> EventSink for CsvEventWriter<W> {
    fn record(&mut self, rec: &ClickRecord) -> std::io::Result<()> {
        if !self.header_written {
            writeln!(self.out, "time_ps,detector,class")?;
            self.header_written = true;
        }
        let det = match rec.detector {
            Detector::A => "a",
            Detector::B => "b",
        };
        let class = match rec.class {
            ClickClass::Single => "single",
            ClickClass::CoincidenceMember => "coincidence",
        };
        writeln!(self.out, "{},{det},{class}", time_ps(rec.time))
    }
}

/// Reads records written by [`BinaryEventWriter`]. True times are not stored
/// and are set equal to the recorded ones.
pub fn read_binary_events<R: Read>(mut input: R) -> Result<Vec<ClickRecord>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() % BINARY_RECORD_LEN != 0 {
        return Err(Error::Config(format!(
            "event file length {} is not a multiple of {BINARY_RECORD_LEN}",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(BINARY_RECORD_LEN)
        .map(|c| {
            let t = u64::from_le_bytes(c[..8].try_into().unwrap()) as f64 * 1e-12;
            let detector = match c[8] {
                0 => Detector::A,
                1 => Detector::B,
                d => return Err(Error::Config(format!("bad detector code {d}"))),
            };
            let class = match c[9] {
                0 => ClickClass::Single,
                1 => ClickClass::CoincidenceMember,
                k => return Err(Error::Config(format!("bad class code {k}"))),
            };
            Ok(ClickRecord {
                time: t,
                true_time: t,
                detector,
                class,
            })
        })
        .collect()
}

/// Outcome symbols of a classified record sequence (pairs of coincidence
/// members become one `ab`).
pub fn outcomes_from_records(records: &[ClickRecord]) -> Vec<Outcome> {
    let mut out = Vec::with_capacity(records.len());
    let mut i = 0;
    while i < records.len() {
        match records[i].class {
            ClickClass::Single => out.push(records[i].detector.into()),
            ClickClass::CoincidenceMember => {
                out.push(Outcome::AB);
                if records
                    .get(i + 1)
                    .is_some_and(|n| n.class == ClickClass::CoincidenceMember)
                {
                    i += 1;
                }
            }
        }
        i += 1;
    }
    out
}

/// Pairs clicks in recorded order and forwards them to the sink.
struct Classifier<'a, S: EventSink> {
    tau_cw: f64,
    pending: Option<ClickRecord>,
    sink: &'a mut S,
    seq: OutcomeSequence,
}

impl<S: EventSink> Classifier<'_, S> {
    fn push(&mut self, t: &mut Tallies, c: ClickRecord) -> std::io::Result<()> {
        t.clicks[c.detector.index()] += 1;
        match self.pending.take() {
            Some(p) if p.detector != c.detector && c.time - p.time <= self.tau_cw => {
                let mark = |r: ClickRecord| ClickRecord {
                    class: ClickClass::CoincidenceMember,
                    ..r
                };
                self.sink.record(&mark(p))?;
                self.sink.record(&mark(c))?;
                t.coincidences += 1;
                self.seq.push(t, Outcome::AB);
            }
            Some(p) => {
                self.emit_single(t, p)?;
                self.pending = Some(c);
            }
            None => self.pending = Some(c),
        }
        Ok(())
    }

    fn emit_single(&mut self, t: &mut Tallies, p: ClickRecord) -> std::io::Result<()> {
        t.singles[p.detector.index()] += 1;
        self.sink.record(&p)?;
        self.seq.push(t, p.detector.into());
        Ok(())
    }

    fn finish(&mut self, t: &mut Tallies) -> std::io::Result<()> {
        if let Some(p) = self.pending.take() {
            self.emit_single(t, p)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ByTime(ClickRecord);

impl Eq for ByTime {}

impl PartialOrd for ByTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ByTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .time
            .total_cmp(&other.0.time)
            .then(self.0.true_time.total_cmp(&other.0.true_time))
    }
}

/// Runs the simulation, streaming classified clicks into `sink`.
pub fn simulate_into<S: EventSink>(config: &SimConfig, sink: &mut S) -> Result<Tallies> {
    config.validate()?;
    let chain = config.chain;
    let mut rng = rng_for(config.seed, 0);
    let interarrival = InterarrivalSampler::new(&config.source)?;
    let jitter = Normal::new(0.0, chain.sigma_jitt / std::f64::consts::SQRT_2)
        .map_err(|e| domain(e.to_string()))?;
    let margin = 12.0 * chain.sigma_jitt;
    let (to_a, detected) = (chain.eta_qe * chain.p_a, chain.eta_qe);

    let mut tallies = Tallies {
        duration: config.duration,
        ..Default::default()
    };
    let mut classifier = Classifier {
        tau_cw: chain.tau_cw,
        pending: None,
        sink,
        seq: OutcomeSequence::default(),
    };
    let mut heap: BinaryHeap<Reverse<ByTime>> = BinaryHeap::new();
    let mut dead_until = [f64::NEG_INFINITY; 2];
    let mut last: Option<ClickRecord> = None;
    let mut t = 0.0;

    loop {
        t += interarrival.sample(&mut rng);
        if t >= config.duration {
            break;
        }
        tallies.photons_emitted += 1;
        let u: f64 = rng.random();
        let det = if u < to_a {
            Detector::A
        } else if u < detected {
            Detector::B
        } else {
            continue;
        };
        if t < dead_until[det.index()] {
            continue;
        }
        dead_until[det.index()] = t + chain.tau_dead;
        let recorded = if config.jitter_enabled {
            t + jitter.sample(&mut rng)
        } else {
            t
        };
        let click = ClickRecord {
            time: recorded,
            true_time: t,
            detector: det,
            class: ClickClass::Single,
        };

        if let Some(prev) = last.filter(|p| p.detector != det) {
            if t - prev.true_time > chain.tau_cw {
                tallies.permutation_candidates += 1;
                if click.time < prev.time {
                    tallies.permutations += 1;
                }
            }
        }
        last = Some(click);

        if config.jitter_enabled {
            heap.push(Reverse(ByTime(click)));
            while let Some(Reverse(ByTime(c))) = heap.peek().copied() {
                if c.time >= t - margin {
                    break;
                }
                heap.pop();
                classifier.push(&mut tallies, c)?;
            }
        } else {
            classifier.push(&mut tallies, click)?;
        }
    }
    while let Some(Reverse(ByTime(c))) = heap.pop() {
        classifier.push(&mut tallies, c)?;
    }
    classifier.finish(&mut tallies)?;
    Ok(tallies)
}

/// Time-ordered records plus tallies.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub records: Vec<ClickRecord>,
    pub tallies: Tallies,
}

pub fn simulate_stream(config: &SimConfig) -> Result<EventStream> {
    let mut records = Vec::new();
    let tallies = simulate_into(config, &mut records)?;
    Ok(EventStream { records, tallies })
}

/// Empirical rates and transition model with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalStats {
    pub mode: OutcomeMode,
    pub rates: RateBundle<f64>,
    pub rate_errors: RateBundle<f64>,
    pub model: TransitionModel<f64>,
    /// Binomial standard errors of `model.p_x_given_y`.
    pub model_errors: Vec<Vec<f64>>,
    pub row_counts: Vec<u64>,
    pub outcomes: u64,
    pub duration: f64,
}

pub fn estimate_statistics(tallies: &Tallies, mode: OutcomeMode) -> Result<EmpiricalStats> {
    let outcomes = tallies.outcome_count(mode);
    if outcomes < MIN_OUTCOMES {
        return Err(Error::InsufficientData {
            got: outcomes,
            need: MIN_OUTCOMES,
        });
    }
    let t = tallies.duration;
    let rate = |n: u64| n as f64 / t;
    let err = |n: u64| (n as f64).sqrt() / t;
    let binom = |k: u64, n: u64| {
        if n == 0 {
            return (0.0, 0.0);
        }
        let p = k as f64 / n as f64;
        (p, (p * (1.0 - p) / n as f64).sqrt())
    };
    let (pca, pca_err) = binom(tallies.coincidences, tallies.clicks[1]);
    let (pcb, pcb_err) = binom(tallies.coincidences, tallies.clicks[0]);
    let rates = RateBundle {
        lambda_click_a: rate(tallies.clicks[0]),
        lambda_click_b: rate(tallies.clicks[1]),
        lambda_bit_a: rate(tallies.singles[0]),
        lambda_bit_b: rate(tallies.singles[1]),
        lambda_coinc: rate(tallies.coincidences),
        lambda_bit_total: rate(tallies.singles[0] + tallies.singles[1]),
        p_coinc_a: pca,
        p_coinc_b: pcb,
    };
    let rate_errors = RateBundle {
        lambda_click_a: err(tallies.clicks[0]),
        lambda_click_b: err(tallies.clicks[1]),
        lambda_bit_a: err(tallies.singles[0]),
        lambda_bit_b: err(tallies.singles[1]),
        lambda_coinc: err(tallies.coincidences),
        lambda_bit_total: err(tallies.singles[0] + tallies.singles[1]),
        p_coinc_a: pca_err,
        p_coinc_b: pcb_err,
    };

    let n = mode.len();
    let counts: Vec<Vec<u64>> = (0..n)
        .map(|y| match mode {
            OutcomeMode::DiscardCoincidences => tallies.transitions_discard[y].to_vec(),
            OutcomeMode::KeepCoincidences => tallies.transitions_keep[y].to_vec(),
        })
        .collect();
    let row_counts: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
    if let Some(&min) = row_counts.iter().min().filter(|m| **m == 0) {
        return Err(Error::InsufficientData { got: min, need: 1 });
    }
    let mut p = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    for (row, &ny) in counts.iter().zip(&row_counts) {
        let (pr, er): (Vec<f64>, Vec<f64>) = row.iter().map(|&k| binom(k, ny)).unzip();
        p.push(pr);
        e.push(er);
    }
    let p_y: Vec<f64> = tallies.outcomes[..n]
        .iter()
        .map(|&k| k as f64 / outcomes as f64)
        .collect();
    let model = TransitionModel::from_parts(mode, p_y, p)?;
    Ok(EmpiricalStats {
        mode,
        rates,
        rate_errors,
        model,
        model_errors: e,
        row_counts,
        outcomes,
        duration: t,
    })
}

/// One analytical-versus-empirical line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub quantity: String,
    pub analytical: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub z: f64,
}

impl ComparisonRow {
    fn new(quantity: impl Into<String>, analytical: f64, empirical: f64, std_error: f64) -> Self {
        let diff = empirical - analytical;
        let z = if std_error > 0.0 {
            diff / std_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        };
        Self {
            quantity: quantity.into(),
            analytical,
            empirical,
            std_error,
            z,
        }
    }

    pub fn abs_gap(&self) -> f64 {
        (self.empirical - self.analytical).abs()
    }

    pub fn is_probability(&self) -> bool {
        self.quantity.starts_with("p(")
    }
}

/// Side-by-side table of rates and transition probabilities. Standard errors
/// are those expected under the analytical model: Poisson counting for rates
/// and binomial sampling of each transition row.
pub fn comparison_table(
    source: &LightSource<f64>,
    chain: &DetectorChain<f64>,
    stats: &EmpiricalStats,
) -> Result<Vec<ComparisonRow>> {
    let ana = rate_bundle(source, chain)?;
    let model = transition_matrix_with(source, chain, stats.mode, &ana)?;
    let t = stats.duration;
    let rate_row = |name: &str, a: f64, e: f64| ComparisonRow::new(name, a, e, (a / t).sqrt());
    let emp = &stats.rates;
    let mut rows = vec![
        rate_row("lambda_click_a", ana.lambda_click_a, emp.lambda_click_a),
        rate_row("lambda_click_b", ana.lambda_click_b, emp.lambda_click_b),
        rate_row("lambda_bit_a", ana.lambda_bit_a, emp.lambda_bit_a),
        rate_row("lambda_bit_b", ana.lambda_bit_b, emp.lambda_bit_b),
        rate_row("lambda_coinc", ana.lambda_coinc, emp.lambda_coinc),
    ];
    for &y in stats.mode.alphabet() {
        let n = stats.row_counts[y.index()] as f64;
        for &x in stats.mode.alphabet() {
            let p = model.p(x, y);
            rows.push(ComparisonRow::new(
                format!("p({}|{})", x.label(), y.label()),
                p,
                stats.model.p(x, y),
                (p * (1.0 - p) / n).sqrt(),
            ));
        }
    }
    Ok(rows)
}
