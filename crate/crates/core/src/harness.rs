//! Simulation of the local model: data generators, the protocol runner with
//! communication metering, the naive baseline and the lower-bound
//! experiment.
//!
//! Mechanisms only ever see clients through [`LrOracle`], which hands a
//! [`LocalRandomizer`] one record at a time. Nothing in that interface gives a
//! randomizer access to a second client's record.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::bucket::{bucket_hh, bucket_params, BucketConfig, K1Rule};
use crate::domain::{build_histogram, check_beta, check_universe, heavy_hitter, ClientRecord, HeavyHitterResult, UniverseIndex};
use crate::error::{invalid, Error, Result};
use crate::jl::{argmax, jl_run, Gamma, JlConfig};
use crate::oracle::LrOracle;
use crate::privacy::{respond_linear_into, IdentityQueries, LocalRandomizer, Neighboring, NoiseMode, NoisePlan, PrivacyBudget};
use crate::rng::{derive_seed, open_unit, stream, StreamRng, StreamTag};
use crate::sketch::{glps_hh, GreedyPursuit, SketchConfig};
use crate::stats::median;

#[derive(Debug, Clone, PartialEq)]
pub enum DataKind {
    /// `hh_count` copies of `hh_index`; the rest uniform over the other
    /// `N - 1` elements.
    Planted { hh_index: u64, hh_count: usize },
    /// Element `i` drawn with probability proportional to `(i+1)^-a`.
    Zipf { exponent: f64 },
    /// Each record a fair coin over `{0, 1}`; needs `N = 2`.
    UniformBits,
    /// Exactly `counts[j]` copies of element `j`.
    Custom { counts: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataGenSpec {
    pub kind: DataKind,
    pub n: usize,
    pub universe: u64,
    pub seed: u64,
}

/// Records with owners `0..n`, deterministic under `spec.seed`.
pub fn generate(spec: &DataGenSpec) -> Result<Vec<ClientRecord>> {
    check_universe(spec.universe)?;
    if spec.n == 0 {
        return Err(invalid("need at least one record"));
    }
    let mut rng = stream(spec.seed, StreamTag::DataGen, 0);
    let elements: Vec<u64> = match &spec.kind {
        DataKind::Planted { hh_index, hh_count } => {
            if *hh_index >= spec.universe {
                return Err(Error::OutOfRange { element: *hh_index, universe: spec.universe });
            }
            if *hh_count > spec.n {
                return Err(invalid(format!("planted count {hh_count} exceeds n = {}", spec.n)));
            }
            let mut v = vec![*hh_index; *hh_count];
            v.extend((*hh_count..spec.n).map(|_| {
                let j = rng.gen_range(0..spec.universe - 1);
                if j >= *hh_index {
                    j + 1
                } else {
                    j
                }
            }));
            v
        }
        DataKind::Zipf { exponent } => {
            if !exponent.is_finite() || *exponent < 0.0 {
                return Err(invalid(format!("Zipf exponent must be finite and non-negative, got {exponent}")));
            }
            if spec.universe > crate::domain::DENSE_LIMIT {
                return Err(invalid("Zipf data is limited to dense universes"));
            }
            let mut cdf: Vec<f64> = Vec::with_capacity(spec.universe as usize);
            let mut acc = 0.0;
            for i in 1..=spec.universe {
                acc += (i as f64).powf(-exponent);
                cdf.push(acc);
            }
            (0..spec.n)
                .map(|_| {
                    let u = open_unit(&mut rng) * acc;
                    cdf.partition_point(|&c| c < u).min(spec.universe as usize - 1) as u64
                })
                .collect()
        }
        DataKind::UniformBits => {
            if spec.universe != 2 {
                return Err(invalid(format!("uniform bits need N = 2, got {}", spec.universe)));
            }
            (0..spec.n).map(|_| rng.gen::<bool>() as u64).collect()
        }
        DataKind::Custom { counts } => {
            if counts.len() as u64 != spec.universe {
                return Err(Error::DimensionMismatch { expected: spec.universe as usize, found: counts.len() });
            }
            if counts.iter().sum::<u64>() != spec.n as u64 {
                return Err(invalid(format!("custom counts sum to {}, expected n = {}", counts.iter().sum::<u64>(), spec.n)));
            }
            counts.iter().enumerate().flat_map(|(j, &c)| std::iter::repeat_n(j as u64, c as usize)).collect()
        }
    };
    Ok(elements.into_iter().enumerate().map(|(i, e)| ClientRecord::new(i, e)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    Jl,
    Glps,
    Bucket,
    Naive,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [Mechanism::Jl, Mechanism::Glps, Mechanism::Bucket, Mechanism::Naive];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Jl => "jl",
            Mechanism::Glps => "glps",
            Mechanism::Bucket => "bucket",
            Mechanism::Naive => "naive",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown mechanism '{s}' (expected jl, glps, bucket or naive)")))
    }
}

/// Knobs for every mechanism; each one reads only its own fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanismConfig {
    pub gamma: Gamma,
    pub sparsity: Option<usize>,
    pub repeats: usize,
    pub density: f64,
    pub k1_rule: K1Rule,
    pub neighboring: Neighboring,
    pub noise: NoiseMode,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        let sketch = SketchConfig::default();
        Self {
            gamma: Gamma::default(),
            sparsity: sketch.sparsity,
            repeats: sketch.repeats,
            density: sketch.density,
            k1_rule: K1Rule::default(),
            neighboring: Neighboring::default(),
            noise: NoiseMode::default(),
        }
    }
}

impl MechanismConfig {
    pub fn jl(&self) -> JlConfig {
        JlConfig { gamma: self.gamma, neighboring: self.neighboring, noise: self.noise }
    }

    pub fn sketch(&self) -> SketchConfig {
        SketchConfig { repeats: self.repeats, sparsity: self.sparsity, density: self.density, neighboring: self.neighboring, noise: self.noise }
    }

    pub fn bucket(&self) -> BucketConfig {
        BucketConfig { k1_rule: self.k1_rule, neighboring: self.neighboring, noise: self.noise }
    }
}

/// Message size and query count each client incurs, known before any
/// client is contacted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Metering {
    pub per_client_message_reals: usize,
    pub total_client_queries: usize,
}

pub fn metering(mechanism: Mechanism, n: usize, universe: u64, budget: &PrivacyBudget, beta: f64, config: &MechanismConfig) -> Result<Metering> {
    check_universe(universe)?;
    check_beta(beta)?;
    let reals = match mechanism {
        Mechanism::Jl => crate::jl::choose_m(universe, beta, config.gamma.value(n))?,
        Mechanism::Glps => {
            let plan = config.sketch().plan(n.max(1), universe, budget, beta)?;
            config.repeats * plan.m
        }
        Mechanism::Bucket => bucket_params(universe, budget, beta, config.k1_rule, config.neighboring)?.message_len(),
        Mechanism::Naive => usize::try_from(universe).map_err(|_| invalid("universe too large for the naive baseline"))?,
    };
    Ok(Metering { per_client_message_reals: reals, total_client_queries: reals })
}

/// Outcome of one protocol run. Equality ignores `wall_time`.
#[derive(Debug, Clone)]
pub struct TranscriptSummary {
    pub mechanism: Mechanism,
    pub result: Result<HeavyHitterResult>,
    pub true_hh: Option<UniverseIndex>,
    pub per_client_message_reals: usize,
    pub total_client_queries: usize,
    pub master_seed: u64,
    pub wall_time: Duration,
}

impl PartialEq for TranscriptSummary {
    fn eq(&self, other: &Self) -> bool {
        self.mechanism == other.mechanism
            && self.result == other.result
            && self.true_hh == other.true_hh
            && self.per_client_message_reals == other.per_client_message_reals
            && self.total_client_queries == other.total_client_queries
            && self.master_seed == other.master_seed
    }
}

/// Runs `mechanism` end to end. Parameter errors are returned directly;
/// failures of the mechanism itself (e.g. no candidate) land in
/// `result`.
pub fn run_protocol(
    mechanism: Mechanism,
    records: &[ClientRecord],
    universe: u64,
    budget: &PrivacyBudget,
    beta: f64,
    config: &MechanismConfig,
    master_seed: u64,
) -> Result<TranscriptSummary> {
    let hist = build_histogram(records, universe)?;
    let meter = metering(mechanism, records.len(), universe, budget, beta, config)?;
    let start = Instant::now();
    let result = match mechanism {
        Mechanism::Jl => jl_run(records, universe, budget, beta, &config.jl(), master_seed)
            .map(|(_, d)| HeavyHitterResult::new(d.best, Some(d.counts[d.best.0 as usize]))),
        Mechanism::Glps => glps_hh(records, universe, budget, beta, &GreedyPursuit, &config.sketch(), master_seed),
        Mechanism::Bucket => bucket_hh(records, universe, budget, beta, &config.bucket(), master_seed),
        Mechanism::Naive => naive_baseline(records, universe, budget.epsilon(), config.neighboring, config.noise, master_seed)
            .map(|o| HeavyHitterResult::new(o.best, Some(o.counts[o.best.0 as usize]))),
    };
    let wall_time = start.elapsed();
    let result = match result {
        Ok(r) if hist.n() > 0 => r.with_truth(&hist),
        other => other,
    };
    if let Err(e @ (Error::InvalidParameter(_) | Error::OutOfRange { .. } | Error::DimensionMismatch { .. })) = &result {
        return Err(e.clone());
    }
    Ok(TranscriptSummary {
        mechanism,
        result,
        true_hh: heavy_hitter(&hist).ok().map(|(i, _)| i),
        per_client_message_reals: meter.per_client_message_reals,
        total_client_queries: meter.total_client_queries,
        master_seed,
        wall_time,
    })
}

/// Each client sends its one-hot histogram plus `Lap(1/epsilon)` per entry.
#[derive(Debug, Clone)]
pub struct NaiveRandomizer {
    queries: IdentityQueries,
    plan: NoisePlan,
}

impl NaiveRandomizer {
    pub fn new(universe: u64, epsilon: f64, neighboring: Neighboring, noise: NoiseMode) -> Result<Self> {
        check_universe(universe)?;
        let len = usize::try_from(universe).map_err(|_| invalid("universe too large for the naive baseline"))?;
        let plan = noise.apply(NoisePlan::l1_vector(len, neighboring.sensitivity_factor(), epsilon)?);
        Ok(Self { queries: IdentityQueries { universe }, plan })
    }
}

impl LocalRandomizer for NaiveRandomizer {
    fn name(&self) -> &'static str {
        "naive"
    }

    fn plan(&self) -> &NoisePlan {
        &self.plan
    }

    fn stream_tag(&self) -> StreamTag {
        StreamTag::NaiveClient
    }

    fn respond_into(&self, record: &ClientRecord, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        respond_linear_into(record, &self.queries, &self.plan, rng, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveOutcome {
    pub best: UniverseIndex,
    pub counts: Vec<f64>,
}

pub fn naive_baseline(records: &[ClientRecord], universe: u64, epsilon: f64, neighboring: Neighboring, noise: NoiseMode, seed: u64) -> Result<NaiveOutcome> {
    let randomizer = NaiveRandomizer::new(universe, epsilon, neighboring, noise)?;
    let counts = LrOracle::new(records, seed).aggregate(&randomizer)?;
    Ok(NaiveOutcome { best: UniverseIndex(argmax(&counts) as u64), counts })
}

/// Estimated count of element 1 on `records` over `N = 2`.
pub fn estimate_count_of_one(mechanism: Mechanism, records: &[ClientRecord], budget: &PrivacyBudget, beta: f64, config: &MechanismConfig, seed: u64) -> Result<f64> {
    match mechanism {
        Mechanism::Jl => jl_run(records, 2, budget, beta, &config.jl(), seed).map(|(_, d)| d.counts[1]),
        Mechanism::Naive => naive_baseline(records, 2, budget.epsilon(), config.neighboring, config.noise, seed).map(|o| o.counts[1]),
        other => Err(Error::NoFrequencyEstimate(other.name())),
    }
}

/// Median over `runs` of `|estimated - true|` for the count of element 1 on
/// fresh uniform-bit databases of size `n`.
pub fn lower_bound_experiment(
    mechanism: Mechanism,
    n: usize,
    runs: usize,
    budget: &PrivacyBudget,
    beta: f64,
    config: &MechanismConfig,
    master_seed: u64,
) -> Result<f64> {
    if runs == 0 {
        return Err(invalid("need at least one run"));
    }
    let errors = (0..runs)
        .map(|r| {
            let seed = derive_seed(master_seed, StreamTag::RunSeed, r as u64);
            let records = generate(&DataGenSpec { kind: DataKind::UniformBits, n, universe: 2, seed })?;
            let truth = records.iter().filter(|r| r.element.get() == 1).count() as f64;
            Ok((estimate_count_of_one(mechanism, &records, budget, beta, config, seed)? - truth).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(median(&errors).expect("runs > 0"))
}
