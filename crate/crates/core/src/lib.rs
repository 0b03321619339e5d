//! Heavy hitters in the local model of differential privacy.
//!
//! Three protocols share one client interface: every client holds a single
//! universe element and talks to the aggregator only through a
//! [`LocalRandomizer`] invoked by the [`LrOracle`].
//!
//! - [`jl`]: random `+-1/sqrt(m)` projection, decoded by inner products.
//! - [`sketch`]: sparse-recovery measurements decoded by greedy pursuit.
//! - [`bucket`]: parity hashes and a GF(2) solve per trial.
//!
//! [`harness`] generates data, runs the protocols with communication
//! metering and hosts the naive baseline and the lower-bound experiment.
//!
//! Universe elements are 0-based throughout.

pub mod bucket;
pub mod domain;
pub mod error;
pub mod gf2;
pub mod harness;
pub mod hashing;
pub mod jl;
pub mod oracle;
pub mod privacy;
pub mod rng;
pub mod selftest;
pub mod sketch;
pub mod stats;

pub use bucket::{bucket_hh, bucket_params, condition_check, BucketConfig, BucketParams, ConditionCheck, K1Rule};
pub use domain::{accuracy_deficit, build_histogram, heavy_hitter, AccuracyParams, ClientRecord, HeavyHitterResult, Histogram, UniverseIndex};
pub use error::{Error, Result};
pub use gf2::{BitMatrix, Gf2Solution};
pub use harness::{generate, lower_bound_experiment, naive_baseline, run_protocol, DataGenSpec, DataKind, Mechanism, MechanismConfig, TranscriptSummary};
pub use jl::{jl_hh, Gamma, JlConfig, ProjectionSpec};
pub use oracle::LrOracle;
pub use privacy::{calibrate, LocalRandomizer, Neighboring, NoiseMode, NoisePlan, PrivacyBudget};
pub use sketch::{glps_hh, GreedyPursuit, MeasurementSpec, RecoveryDecoder, SketchConfig};
