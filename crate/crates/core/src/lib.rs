//! Beam-splitter quantum random number generator model.
//!
//! A light source (attenuated laser or two-level single-photon emitter) feeds a
//! 50/50-ish beam splitter and two dead-time limited detectors. The crate
//! computes waiting-time distributions, click and coincidence rates, outcome
//! transition matrices and entropy rates, and checks them against an
//! event-level simulator. Raw outcomes can be hashed into output bits with a
//! seeded Toeplitz extractor.
//!
//! The analytical modules are generic over the scalar type; `f64` aliases are
//! exported below. Times are in seconds and rates in 1/s.
//!
//! ```
//! use qrng_lab::{DetectorChainF64, LightSourceF64};
//! use qrng_lab::detection::rate_bundle;
//!
//! let chain = DetectorChainF64::default();
//! let laser = LightSourceF64::laser(1e7).unwrap();
//! let rates = rate_bundle(&laser, &chain).unwrap();
//! assert!(rates.lambda_bit_total < 1e7);
//! ```

pub mod detection;
pub mod entropy;
pub mod error;
pub mod extract;
pub mod real;
pub mod simulate;
pub mod source;
pub mod transitions;
pub mod waiting_time;

pub use detection::{Detector, DetectorChain, RateBundle};
pub use entropy::{EntropyReport, OptimumPoint, SourceFamily};
pub use error::{Error, Result};
pub use real::Real;
pub use source::LightSource;
pub use transitions::{Outcome, OutcomeMode, TransitionModel};
pub use waiting_time::{GridSpec, WaitingTimeGrid};

pub type LightSourceF64 = LightSource<f64>;
pub type DetectorChainF64 = DetectorChain<f64>;
pub type RateBundleF64 = RateBundle<f64>;
pub type TransitionModelF64 = TransitionModel<f64>;
pub type WaitingTimeGridF64 = WaitingTimeGrid<f64>;
pub type EntropyReportF64 = EntropyReport<f64>;
pub type SourceFamilyF64 = SourceFamily<f64>;

pub type LightSourceF32 = LightSource<f32>;
pub type DetectorChainF32 = DetectorChain<f32>;
pub type TransitionModelF32 = TransitionModel<f32>;
