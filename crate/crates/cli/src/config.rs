use std::path::{Path, PathBuf};

use qrng_lab::extract::{DEFAULT_BLOCK_LEN, DEFAULT_SECURITY_EPS};
use qrng_lab::source::DEFAULT_GAMMA;
use qrng_lab::waiting_time::DEFAULT_M_MAX;
use qrng_lab::{DetectorChain, Error, GridSpec, OutcomeMode, SourceFamily};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Laser,
    Sps,
}

impl SourceKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Laser => "laser",
            Self::Sps => "sps",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EventFormat {
    Binary,
    Csv,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub dt: f64,
    pub t_max: f64,
    pub max_points: usize,
    pub m_max: usize,
    /// Emission rate used for waiting-time and count curves.
    pub lambda: f64,
    /// Overall detection efficiency applied to the photon stream; defaults to `eta_qe`.
    pub eta: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        let spec = GridSpec::<f64>::default();
        Self {
            dt: spec.dt,
            t_max: spec.t_max,
            max_points: spec.max_points,
            m_max: DEFAULT_M_MAX,
            lambda: 5e7,
            eta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    /// Total number of points; when absent, `points_per_decade` is used.
    pub points: Option<usize>,
    pub points_per_decade: usize,
    /// Coincidence windows for the raw-bit family, seconds.
    pub tau_cw: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambda_min: None,
            lambda_max: None,
            points: None,
            points_per_decade: 200,
            tau_cw: vec![2e-9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub source: SourceKind,
    pub lambda: f64,
    pub duration: f64,
    pub seed: u64,
    pub jitter: bool,
    pub events: EventFormat,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            source: SourceKind::Sps,
            lambda: 5e7,
            duration: 1.0,
            seed: 42,
            jitter: false,
            events: EventFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    /// Certified min-entropy per outcome, bits.
    pub h_min: Option<f64>,
    pub block_len: usize,
    pub security_eps: f64,
    pub seed: u64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            h_min: None,
            block_len: DEFAULT_BLOCK_LEN,
            security_eps: DEFAULT_SECURITY_EPS,
            seed: 1,
        }
    }
}

/// Complete run configuration. Every field has a default, so `{}` is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Restricts curves and optimum to one source; both when absent.
    pub source: Option<SourceKind>,
    /// Emitter recovery rate `Γ = 1/T1`, 1/s.
    pub gamma: f64,
    pub chain: DetectorChain<f64>,
    /// Restricts curves and optimum to one mode; both when absent.
    pub mode: Option<OutcomeMode>,
    pub grid: GridConfig,
    pub sweep: SweepConfig,
    pub simulation: SimulationConfig,
    pub extraction: ExtractionConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: None,
            gamma: DEFAULT_GAMMA,
            chain: DetectorChain::default(),
            mode: None,
            grid: GridConfig::default(),
            sweep: SweepConfig::default(),
            simulation: SimulationConfig::default(),
            extraction: ExtractionConfig::default(),
            out: PathBuf::from("qrng-out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.chain
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.sweep.points == Some(0) || self.sweep.points_per_decade == 0 {
            return Err(Error::Config(
                "empty sweep: the number of points must be positive".into(),
            ));
        }
        if let (Some(lo), Some(hi)) = (self.sweep.lambda_min, self.sweep.lambda_max) {
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::Config(format!("empty sweep range [{lo}, {hi}]")));
            }
        }
        if !(self.simulation.duration > 0.0 && self.simulation.duration.is_finite()) {
            return Err(Error::Config(format!(
                "duration must be positive, got {}",
                self.simulation.duration
            )));
        }
        if self.extraction.block_len == 0 {
            return Err(Error::Config("block_len must be positive".into()));
        }
        Ok(())
    }

    pub fn sources(&self) -> Vec<SourceKind> {
        match self.source {
            Some(s) => vec![s],
            None => vec![SourceKind::Laser, SourceKind::Sps],
        }
    }

    pub fn modes(&self) -> Vec<OutcomeMode> {
        match self.mode {
            Some(m) => vec![m],
            None => vec![
                OutcomeMode::DiscardCoincidences,
                OutcomeMode::KeepCoincidences,
            ],
        }
    }

    pub fn family(&self, kind: SourceKind) -> SourceFamily<f64> {
        match kind {
            SourceKind::Laser => SourceFamily::Laser,
            SourceKind::Sps => SourceFamily::SinglePhoton { gamma: self.gamma },
        }
    }

    pub fn grid_spec(&self) -> GridSpec<f64> {
        GridSpec {
            dt: self.grid.dt,
            t_max: self.grid.t_max,
            max_points: self.grid.max_points,
        }
    }

    /// Log-spaced emission rates for one source, clipped to its valid range.
    pub fn lambdas(&self, kind: SourceKind) -> Result<Vec<f64>, Error> {
        let (dlo, dhi) = self.family(kind).lambda_range();
        let lo = self.sweep.lambda_min.unwrap_or(dlo);
        let mut hi = self.sweep.lambda_max.unwrap_or(dhi);
        if kind == SourceKind::Sps {
            hi = hi.min(dhi);
        }
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::Config(format!(
                "empty sweep range [{lo:e}, {hi:e}] for the {} source",
                kind.name()
            )));
        }
        let points = self.sweep.points.unwrap_or_else(|| {
            ((hi / lo).log10() * self.sweep.points_per_decade as f64)
                .ceil()
                .max(2.0) as usize
        });
        Ok(qrng_lab::real::log_space(lo, hi, points))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.chain.tau_dead, 50e-9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"chain": {"eta": 0.5}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"colour": 1}"#).is_err());
    }

    #[test]
    fn sps_sweep_stays_below_saturation() {
        let c = RunConfig {
            sweep: SweepConfig {
                lambda_max: Some(1e9),
                ..Default::default()
            },
            ..Default::default()
        };
        let l = c.lambdas(SourceKind::Sps).unwrap();
        assert!(*l.last().unwrap() < c.gamma);
    }
}
