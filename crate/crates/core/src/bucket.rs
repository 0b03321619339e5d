//! The bucket mechanism: group testing with parity hashes.
//!
//! Each of `k2` trials draws `k1` parity hashes `H`. Every client reports the
//! noisy parities `H b(x) + z` for all trials at once. Per trial the
//! aggregator thresholds the summed parities at `n/2`, giving the signature
//! of the majority bucket, and solves `H x = b` over GF(2) for the unique
//! element with that signature. The final answer is the most frequent
//! decoded candidate.

use crate::domain::{check_beta, check_universe, ClientRecord, HeavyHitterResult, Histogram, UniverseIndex};
use crate::error::{invalid, Error, Result};
use crate::gf2::{from_bits, BitMatrix, Gf2Solution};
use crate::hashing::{bit_length, ceil_log2, eval_hash, sample_hash_matrix};
use crate::jl::ceil_guarded;
use crate::oracle::{plurality, LrOracle};
use crate::privacy::{calibrate, respond_linear_into, LocalRandomizer, Neighboring, NoiseMode, NoisePlan, PrivacyBudget, QueryColumns};
use crate::rng::{stream, StreamRng, StreamTag};

/// How many hashes each trial uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum K1Rule {
    /// `ceil(log2(12 N))`.
    #[default]
    TwelveN,
    /// `ceil(log2(3 N / beta))`, which makes the heavy hitter's signature
    /// unique with probability `1 - beta/3`.
    UniqueSignature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketParams {
    /// Hashes per trial.
    pub k1: usize,
    /// Trials.
    pub k2: usize,
    /// Bits per universe element, `ceil(log2 N)`.
    pub d: u32,
    /// Calibrated for `T = k1 k2` queries of sensitivity 1.
    pub plan: NoisePlan,
}

impl BucketParams {
    pub fn noise_scale(&self) -> f64 {
        self.plan.scale
    }

    pub fn message_len(&self) -> usize {
        self.k1 * self.k2
    }
}

pub fn bucket_params(universe: u64, budget: &PrivacyBudget, beta: f64, rule: K1Rule, neighboring: Neighboring) -> Result<BucketParams> {
    check_universe(universe)?;
    check_beta(beta)?;
    let d = bit_length(universe);
    if d > 64 {
        return Err(invalid("universes wider than 64 bits are not supported"));
    }
    let k1 = match rule {
        K1Rule::TwelveN => ceil_log2(universe.checked_mul(12).ok_or_else(|| invalid("universe too large"))?) as usize,
        K1Rule::UniqueSignature => ceil_guarded((3.0 * universe as f64 / beta).log2()) as usize,
    };
    let k2 = (ceil_guarded(8.0 * (1.0 / beta).log2()) as usize).max(1);
    let plan = calibrate(budget, k1 * k2, neighboring.sensitivity_factor())?;
    Ok(BucketParams { k1, k2, d, plan })
}

/// All trials' parity queries stacked: `k1 k2` rows, trial-major.
#[derive(Debug, Clone)]
pub struct TrialStack<'a> {
    trials: &'a [BitMatrix],
    universe: u64,
}

impl<'a> TrialStack<'a> {
    pub fn new(trials: &'a [BitMatrix], universe: u64) -> Self {
        Self { trials, universe }
    }
}

impl QueryColumns for TrialStack<'_> {
    fn num_queries(&self) -> usize {
        self.trials.iter().map(BitMatrix::rows).sum()
    }

    fn universe(&self) -> u64 {
        self.universe
    }

    fn write_column(&self, element: u64, out: &mut [f64]) {
        let mut k = 0;
        for h in self.trials {
            for row in 0..h.rows() {
                out[k] = if eval_hash(h.row_word(row), element) { 1.0 } else { 0.0 };
                k += 1;
            }
        }
    }
}

/// One trial's report for one client: `H b(x) + z`, length `k1`.
pub fn client_respond(record: &ClientRecord, h: &BitMatrix, params: &BucketParams, rng: &mut StreamRng) -> Result<Vec<f64>> {
    let x = record.element.get();
    if params.d < 64 && x >> params.d != 0 {
        return Err(Error::OutOfRange { element: x, universe: 1 << params.d });
    }
    Ok((0..h.rows())
        .map(|k| if eval_hash(h.row_word(k), x) { 1.0 } else { 0.0 } + params.plan.draw(rng))
        .collect())
}

/// Client side for a whole run: the concatenation of every trial's report.
#[derive(Debug, Clone)]
pub struct BucketRandomizer<'a> {
    stack: TrialStack<'a>,
    plan: NoisePlan,
}

impl<'a> BucketRandomizer<'a> {
    pub fn new(trials: &'a [BitMatrix], universe: u64, params: &BucketParams, noise: NoiseMode) -> Result<Self> {
        let stack = TrialStack::new(trials, universe);
        if stack.num_queries() != params.message_len() {
            return Err(Error::DimensionMismatch { expected: params.message_len(), found: stack.num_queries() });
        }
        Ok(Self { stack, plan: noise.apply(params.plan) })
    }
}

impl LocalRandomizer for BucketRandomizer<'_> {
    fn name(&self) -> &'static str {
        "bucket"
    }

    fn plan(&self) -> &NoisePlan {
        &self.plan
    }

    fn stream_tag(&self) -> StreamTag {
        StreamTag::BucketClient
    }

    fn respond_into(&self, record: &ClientRecord, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        respond_linear_into(record, &self.stack, &self.plan, rng, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialReason {
    Decoded,
    Infeasible,
    Underdetermined,
    /// The unique solution encodes an element `>= N`.
    OutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub candidate: Option<UniverseIndex>,
    pub reason: TrialReason,
}

impl TrialOutcome {
    fn none(reason: TrialReason) -> Self {
        Self { candidate: None, reason }
    }
}

/// Majority-bucket signature `b_k = [u_k > n/2]`.
pub fn threshold_bits(u: &[f64], n: usize) -> Vec<bool> {
    let half = n as f64 / 2.0;
    u.iter().map(|&x| x > half).collect()
}

pub fn trial_decode(u: &[f64], n: usize, h: &BitMatrix, universe: u64) -> Result<TrialOutcome> {
    if u.len() != h.rows() {
        return Err(Error::DimensionMismatch { expected: h.rows(), found: u.len() });
    }
    decode_signature(&threshold_bits(u, n), h, universe)
}

/// Solves `H x = b` and maps the outcome onto the universe.
pub fn decode_signature(b: &[bool], h: &BitMatrix, universe: u64) -> Result<TrialOutcome> {
    Ok(match h.solve(b)? {
        Gf2Solution::Infeasible => TrialOutcome::none(TrialReason::Infeasible),
        Gf2Solution::Underdetermined { .. } => TrialOutcome::none(TrialReason::Underdetermined),
        Gf2Solution::Unique(bits) => match from_bits(&bits) {
            Some(x) if x < universe => TrialOutcome { candidate: Some(UniverseIndex(x)), reason: TrialReason::Decoded },
            _ => TrialOutcome::none(TrialReason::OutOfRange),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BucketConfig {
    pub k1_rule: K1Rule,
    pub neighboring: Neighboring,
    pub noise: NoiseMode,
}

/// Everything a run produced, for inspection by tests and the harness.
#[derive(Debug, Clone)]
pub struct BucketRun {
    pub params: BucketParams,
    pub trials: Vec<BitMatrix>,
    /// Summed reports per trial, each of length `k1`.
    pub sums: Vec<Vec<f64>>,
    pub outcomes: Vec<TrialOutcome>,
}

impl BucketRun {
    pub fn winner(&self) -> Option<(UniverseIndex, usize)> {
        let votes: Vec<Option<UniverseIndex>> = self.outcomes.iter().map(|o| o.candidate).collect();
        plurality(&votes)
    }
}

/// Hash matrix of trial `t`; public, chosen by the aggregator.
pub fn trial_matrix(params: &BucketParams, master_seed: u64, t: usize) -> Result<BitMatrix> {
    sample_hash_matrix(params.d, params.k1, &mut stream(master_seed, StreamTag::BucketHash, t as u64))
}

pub fn run_trials(records: &[ClientRecord], universe: u64, budget: &PrivacyBudget, beta: f64, config: &BucketConfig, master_seed: u64) -> Result<BucketRun> {
    if records.is_empty() {
        return Err(Error::EmptyResponses);
    }
    let params = bucket_params(universe, budget, beta, config.k1_rule, config.neighboring)?;
    let trials = (0..params.k2).map(|t| trial_matrix(&params, master_seed, t)).collect::<Result<Vec<_>>>()?;
    let randomizer = BucketRandomizer::new(&trials, universe, &params, config.noise)?;
    let total = LrOracle::new(records, master_seed).aggregate(&randomizer)?;
    let sums: Vec<Vec<f64>> = total.chunks_exact(params.k1).map(<[f64]>::to_vec).collect();
    let outcomes = sums
        .iter()
        .zip(&trials)
        .map(|(u, h)| trial_decode(u, records.len(), h, universe))
        .collect::<Result<Vec<_>>>()?;
    Ok(BucketRun { params, trials, sums, outcomes })
}

/// Plurality over the decoded trial candidates; `NoCandidate` if every
/// trial came back empty.
pub fn bucket_hh(records: &[ClientRecord], universe: u64, budget: &PrivacyBudget, beta: f64, config: &BucketConfig, master_seed: u64) -> Result<HeavyHitterResult> {
    let run = run_trials(records, universe, budget, beta, config, master_seed)?;
    let (winner, _) = run.winner().ok_or(Error::NoCandidate)?;
    Ok(HeavyHitterResult::new(winner, None))
}

/// Both sides of the exact-recovery condition
/// `v1 >= 8 sqrt(2 c k1) + b sqrt(6n) ln(24 k1)`, where `c` sums the squared
/// counts of all but the largest element and `b` is the calibrated scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionCheck {
    pub satisfied: bool,
    pub lhs: f64,
    pub rhs: f64,
}

pub fn condition_check(h: &Histogram, params: &BucketParams, budget: &PrivacyBudget, neighboring: Neighboring) -> Result<ConditionCheck> {
    let sorted = h.sorted_counts();
    let v1 = sorted.first().copied().unwrap_or(0) as f64;
    let c: f64 = sorted.iter().skip(1).map(|&v| (v as f64).powi(2)).sum();
    let k1 = params.k1 as f64;
    let b = calibrate(budget, params.k1 * params.k2, neighboring.sensitivity_factor())?.scale;
    let rhs = 8.0 * (2.0 * c * k1).sqrt() + b * (6.0 * h.n() as f64).sqrt() * (24.0 * k1).ln();
    Ok(ConditionCheck { satisfied: v1 >= rhs, lhs: v1, rhs })
}
