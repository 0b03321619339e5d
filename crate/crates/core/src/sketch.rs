//! Heavy hitters through noisy sparse recovery.
//!
//! Clients report `Phi e_x + z` for a `{-1, 0, 1}` measurement matrix `Phi`;
//! the aggregator sums the reports and runs a sparse-recovery decoder on the
//! result. Independent repeats are combined by plurality vote.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::domain::{check_beta, check_universe, ClientRecord, HeavyHitterResult, UniverseIndex};
use crate::error::{invalid, Error, Result};
use crate::jl::{ceil_guarded, dot};
use crate::oracle::{plurality, LrOracle};
use crate::privacy::{calibrate, respond_linear_into, LocalRandomizer, Neighboring, NoiseMode, NoisePlan, PrivacyBudget, QueryColumns};
use crate::rng::{derive_seed, open_unit, stream, StreamRng, StreamTag};

const CACHE_LIMIT: usize = 1 << 23;
const RIDGE: f64 = 1e-9;

/// `s = (epsilon sqrt(n / ln(1/delta)) / ln(1/beta))^(2/3)`, rounded, at least 1.
pub fn choose_sparsity(n: usize, budget: &PrivacyBudget, beta: f64) -> Result<usize> {
    check_beta(beta)?;
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let base = budget.epsilon() * (n as f64 / budget.ln_inv_delta()).sqrt() / (1.0 / beta).ln();
    Ok((base.powf(2.0 / 3.0).round() as usize).max(1))
}

/// `m = ceil(s log2(N/s))` with `s` capped at `N/2` so that `m >= s`.
pub fn measurements_for(universe: u64, sparsity: usize) -> Result<(usize, usize)> {
    check_universe(universe)?;
    if sparsity == 0 {
        return Err(invalid("sparsity must be at least 1"));
    }
    let s = sparsity.min((universe / 2) as usize);
    let m = ceil_guarded(s as f64 * (universe as f64 / s as f64).log2()) as usize;
    Ok((m.max(s), s))
}

/// The measurement matrix `Phi`, generated column by column from a seed.
#[derive(Debug, Clone)]
pub struct MeasurementSpec {
    m: usize,
    universe: u64,
    sparsity: usize,
    seed: u64,
    density: f64,
    cache: Option<Vec<f64>>,
}

impl MeasurementSpec {
    /// Dense `+-1` matrix with `m = ceil(s log2(N/s))` rows.
    pub fn for_sparsity(universe: u64, sparsity: usize, seed: u64) -> Result<Self> {
        let (m, s) = measurements_for(universe, sparsity)?;
        Self::new(m, universe, s, seed, 1.0)
    }

    /// Explicit row count. Each entry is non-zero with probability `density`
    /// and then a uniform sign.
    pub fn new(m: usize, universe: u64, sparsity: usize, seed: u64, density: f64) -> Result<Self> {
        check_universe(universe)?;
        if m == 0 {
            return Err(invalid("measurement matrix needs at least one row"));
        }
        if !(density > 0.0 && density <= 1.0) {
            return Err(invalid(format!("density must lie in (0, 1], got {density}")));
        }
        let mut spec = Self { m, universe, sparsity, seed, density, cache: None };
        if (universe as u128) * (m as u128) <= CACHE_LIMIT as u128 {
            let mut flat = vec![0.0; m * universe as usize];
            for (i, col) in flat.chunks_exact_mut(m).enumerate() {
                spec.generate_column(i as u64, col);
            }
            spec.cache = Some(flat);
        }
        Ok(spec)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn universe(&self) -> u64 {
        self.universe
    }

    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn generate_column(&self, index: u64, out: &mut [f64]) {
        let mut rng = stream(self.seed, StreamTag::SketchColumn, index);
        if self.density >= 1.0 {
            for chunk in out.chunks_mut(64) {
                let word = rng.next_u64();
                for (j, x) in chunk.iter_mut().enumerate() {
                    *x = if (word >> j) & 1 == 1 { 1.0 } else { -1.0 };
                }
            }
        } else {
            for x in out.iter_mut() {
                let keep = open_unit(&mut rng) < self.density;
                let sign = rng.next_u32() & 1 == 1;
                *x = match (keep, sign) {
                    (false, _) => 0.0,
                    (true, true) => 1.0,
                    (true, false) => -1.0,
                };
            }
        }
    }
}

impl QueryColumns for MeasurementSpec {
    fn num_queries(&self) -> usize {
        self.m
    }

    fn universe(&self) -> u64 {
        self.universe
    }

    fn write_column(&self, element: u64, out: &mut [f64]) {
        match &self.cache {
            Some(flat) => {
                let start = element as usize * self.m;
                out.copy_from_slice(&flat[start..start + self.m]);
            }
            None => self.generate_column(element, out),
        }
    }
}

/// Sparse vector estimate, entries sorted by index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseEstimate {
    pub entries: Vec<(UniverseIndex, f64)>,
}

impl SparseEstimate {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: UniverseIndex) -> f64 {
        self.entries.iter().find(|(i, _)| *i == index).map_or(0.0, |(_, v)| *v)
    }

    /// Index of the largest estimated value; lowest index on ties.
    pub fn argmax(&self) -> Option<(UniverseIndex, f64)> {
        self.entries.iter().copied().fold(None, |best, (i, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((i, v)),
        })
    }
}

/// Recovers an approximately `s`-sparse vector from `c = Phi v + z`.
/// Implementations must be deterministic in their inputs.
pub trait RecoveryDecoder: Sync {
    fn recover(&self, c: &[f64], spec: &MeasurementSpec, s: usize) -> Result<SparseEstimate>;
}

/// Orthogonal greedy pursuit with a ridge-regularised least-squares refit.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyPursuit;

impl RecoveryDecoder for GreedyPursuit {
    fn recover(&self, c: &[f64], spec: &MeasurementSpec, s: usize) -> Result<SparseEstimate> {
        recover_greedy(c, spec, s)
    }
}

/// Greedy pursuit: repeatedly add the column most correlated with the
/// residual, refit on the support, and stop after `s` columns or once the
/// residual stops shrinking.
pub fn recover_greedy(c: &[f64], spec: &MeasurementSpec, s: usize) -> Result<SparseEstimate> {
    if c.len() != spec.m {
        return Err(Error::DimensionMismatch { expected: spec.m, found: c.len() });
    }
    if s > spec.m {
        return Err(invalid(format!("sparsity {s} exceeds the {} measurements", spec.m)));
    }
    let n_cols = spec.universe as usize;
    let owned;
    let columns: &[f64] = match &spec.cache {
        Some(flat) => flat,
        None => {
            let mut flat = vec![0.0; spec.m * n_cols];
            for (i, col) in flat.chunks_exact_mut(spec.m).enumerate() {
                spec.generate_column(i as u64, col);
            }
            owned = flat;
            &owned
        }
    };
    let col = |j: usize| &columns[j * spec.m..(j + 1) * spec.m];
    let norms: Vec<f64> = (0..n_cols).map(|j| dot(col(j), col(j)).sqrt()).collect();

    let mut residual = c.to_vec();
    let mut res_norm = dot(&residual, &residual).sqrt();
    let mut support: Vec<usize> = Vec::new();
    let mut coeffs: Vec<f64> = Vec::new();

    while support.len() < s && res_norm > 0.0 {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n_cols {
            if norms[j] == 0.0 || support.contains(&j) {
                continue;
            }
            let score = dot(col(j), &residual).abs() / norms[j];
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((j, score));
            }
        }
        let Some((j, score)) = best else { break };
        if score == 0.0 {
            break;
        }
        support.push(j);
        let fit = least_squares(&support, &col, c, spec.m);
        let new_residual: Vec<f64> = (0..spec.m)
            .map(|r| c[r] - support.iter().zip(&fit).map(|(&k, w)| col(k)[r] * w).sum::<f64>())
            .collect();
        let new_norm = dot(&new_residual, &new_residual).sqrt();
        if new_norm >= res_norm {
            support.pop();
            break;
        }
        residual = new_residual;
        res_norm = new_norm;
        coeffs = fit;
    }

    let mut entries: Vec<(UniverseIndex, f64)> =
        support.into_iter().zip(coeffs).map(|(j, v)| (UniverseIndex(j as u64), v)).collect();
    entries.sort_by_key(|(i, _)| *i);
    Ok(SparseEstimate { entries })
}

/// `argmin ||c - Phi_S w||` through ridge-regularised normal equations.
fn least_squares<'c>(support: &[usize], col: &impl Fn(usize) -> &'c [f64], c: &[f64], m: usize) -> Vec<f64> {
    let k = support.len();
    let a = DMatrix::from_fn(m, k, |r, j| col(support[j])[r]);
    let mut gram = a.transpose() * &a;
    let ridge = RIDGE * gram.trace() / k as f64;
    for i in 0..k {
        gram[(i, i)] += ridge;
    }
    let rhs = a.transpose() * DVector::from_column_slice(c);
    match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs).iter().copied().collect(),
        None => gram.lu().solve(&rhs).map_or_else(|| vec![0.0; k], |x| x.iter().copied().collect()),
    }
}

/// Client side: `m` queries of sensitivity 1, Laplace scale
/// `sqrt(8 m ln(1/delta)) / epsilon`.
#[derive(Debug, Clone)]
pub struct SketchRandomizer<'a> {
    spec: &'a MeasurementSpec,
    plan: NoisePlan,
}

impl<'a> SketchRandomizer<'a> {
    pub fn new(spec: &'a MeasurementSpec, budget: &PrivacyBudget, neighboring: Neighboring, noise: NoiseMode) -> Result<Self> {
        let plan = noise.apply(calibrate(budget, spec.m, neighboring.sensitivity_factor())?);
        Ok(Self { spec, plan })
    }
}

impl LocalRandomizer for SketchRandomizer<'_> {
    fn name(&self) -> &'static str {
        "glps"
    }

    fn plan(&self) -> &NoisePlan {
        &self.plan
    }

    fn stream_tag(&self) -> StreamTag {
        StreamTag::SketchClient
    }

    fn respond_into(&self, record: &ClientRecord, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        respond_linear_into(record, self.spec, &self.plan, rng, out)
    }
}

pub fn client_respond(record: &ClientRecord, spec: &MeasurementSpec, budget: &PrivacyBudget, rng: &mut StreamRng) -> Result<Vec<f64>> {
    SketchRandomizer::new(spec, budget, Neighboring::AddRemove, NoiseMode::Calibrated)?.respond(record, rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchConfig {
    /// Independent repeats, each run with budget `(epsilon/R, delta/R)`.
    pub repeats: usize,
    /// Fixed sparsity instead of [`choose_sparsity`].
    pub sparsity: Option<usize>,
    pub density: f64,
    pub neighboring: Neighboring,
    pub noise: NoiseMode,
}

impl Default for SketchConfig {
    fn default() -> Self {
        Self { repeats: 1, sparsity: None, density: 1.0, neighboring: Neighboring::AddRemove, noise: NoiseMode::Calibrated }
    }
}

/// Per-repeat parameters, fixed before any client is contacted.
#[derive(Debug, Clone)]
pub struct SketchPlan {
    pub repeat_budget: PrivacyBudget,
    pub sparsity: usize,
    pub m: usize,
}

impl SketchConfig {
    pub fn plan(&self, n: usize, universe: u64, budget: &PrivacyBudget, beta: f64) -> Result<SketchPlan> {
        if self.repeats == 0 || self.repeats.is_multiple_of(2) {
            return Err(invalid(format!("repeats must be a positive odd number, got {}", self.repeats)));
        }
        let repeat_budget = budget.split(self.repeats)?;
        let s = match self.sparsity {
            Some(s) => s,
            None => choose_sparsity(n, &repeat_budget, beta)?,
        };
        let (m, s) = measurements_for(universe, s)?;
        Ok(SketchPlan { repeat_budget, sparsity: s, m })
    }
}

/// One repeat's outcome.
#[derive(Debug, Clone)]
pub struct RepeatOutcome {
    pub vote: Option<UniverseIndex>,
    pub estimate: SparseEstimate,
}

/// Runs one repeat through the oracle: build `Phi`, collect the summed
/// reports, decode, and vote for the argmax.
pub fn run_repeat(
    records: &[ClientRecord],
    universe: u64,
    plan: &SketchPlan,
    config: &SketchConfig,
    decoder: &dyn RecoveryDecoder,
    repeat_seed: u64,
) -> Result<RepeatOutcome> {
    let spec = MeasurementSpec::new(plan.m, universe, plan.sparsity, repeat_seed, config.density)?;
    let randomizer = SketchRandomizer::new(&spec, &plan.repeat_budget, config.neighboring, config.noise)?;
    let sum = LrOracle::new(records, repeat_seed).aggregate(&randomizer)?;
    let estimate = decoder.recover(&sum, &spec, plan.sparsity)?;
    Ok(RepeatOutcome { vote: estimate.argmax().map(|(i, _)| i), estimate })
}

/// Full pipeline with `config.repeats` independent repeats and a plurality
/// vote over their argmax indices.
pub fn glps_hh(
    records: &[ClientRecord],
    universe: u64,
    budget: &PrivacyBudget,
    beta: f64,
    decoder: &dyn RecoveryDecoder,
    config: &SketchConfig,
    master_seed: u64,
) -> Result<HeavyHitterResult> {
    let plan = config.plan(records.len().max(1), universe, budget, beta)?;
    let outcomes = (0..config.repeats)
        .map(|r| run_repeat(records, universe, &plan, config, decoder, derive_seed(master_seed, StreamTag::SketchRepeat, r as u64)))
        .collect::<Result<Vec<_>>>()?;
    let votes: Vec<Option<UniverseIndex>> = outcomes.iter().map(|o| o.vote).collect();
    let (winner, _) = plurality(&votes).ok_or(Error::NoCandidate)?;
    let values: Vec<f64> = outcomes.iter().filter(|o| o.vote == Some(winner)).map(|o| o.estimate.get(winner)).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(HeavyHitterResult::new(winner, Some(mean)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamTag;
    use rand::Rng;

    fn budget(eps: f64, delta: f64) -> PrivacyBudget {
        PrivacyBudget::new(eps, delta).unwrap()
    }

    fn measure(spec: &MeasurementSpec, v: &[(u64, f64)]) -> Vec<f64> {
        let mut c = vec![0.0; spec.m()];
        for &(j, h) in v {
            for (x, p) in c.iter_mut().zip(spec.column(j)) {
                *x += h * p;
            }
        }
        c
    }

    #[test]
    fn choose_sparsity_examples() {
        let e = std::f64::consts::E;
        let b = budget(1.0, 1.0 / e);
        assert_eq!(choose_sparsity(1_000_000, &b, 1.0 / e).unwrap(), 100);
        let b = budget(8.0, 1.0 / e);
        assert_eq!(choose_sparsity(1_000_000, &b, 1.0 / e).unwrap(), 400);
        let b = budget(0.1, 1e-9);
        assert_eq!(choose_sparsity(2, &b, 0.01).unwrap(), 1);
    }

    #[test]
    fn measurement_count() {
        assert_eq!(measurements_for(64, 3).unwrap(), (14, 3));
        assert_eq!(measurements_for(256, 5).unwrap(), (29, 5));
        assert_eq!(measurements_for(8, 16).unwrap(), (4, 4));
        let spec = MeasurementSpec::for_sparsity(1024, 4, 0).unwrap();
        assert_eq!(spec.m(), 32);
    }

    #[test]
    fn columns_use_ternary_alphabet() {
        let dense = MeasurementSpec::new(40, 16, 2, 5, 1.0).unwrap();
        assert!((0..16).all(|j| dense.column(j).iter().all(|&x| x == 1.0 || x == -1.0)));
        let sparse = MeasurementSpec::new(400, 4, 2, 5, 0.5).unwrap();
        let col = sparse.column(1);
        let zeros = col.iter().filter(|&&x| x == 0.0).count();
        assert!(col.iter().all(|&x| x == 1.0 || x == -1.0 || x == 0.0));
        assert!((150..250).contains(&zeros), "{zeros}");
        assert_eq!(col, MeasurementSpec::new(400, 4, 2, 5, 0.5).unwrap().column(1));
    }

    #[test]
    fn noise_off_returns_column() {
        let spec = MeasurementSpec::new(3, 8, 1, 2, 1.0).unwrap();
        let r = SketchRandomizer::new(&spec, &budget(1.0, 0.1), Neighboring::AddRemove, NoiseMode::Off).unwrap();
        let out = r.respond(&ClientRecord::new(0, 6), &mut stream(0, StreamTag::Test, 0)).unwrap();
        assert_eq!(out, spec.column(6));
    }

    #[test]
    fn scale_matches_closed_form() {
        let spec = MeasurementSpec::new(2, 8, 1, 2, 1.0).unwrap();
        let r = SketchRandomizer::new(&spec, &budget(1.0, (-1.0f64).exp()), Neighboring::AddRemove, NoiseMode::Calibrated).unwrap();
        assert_eq!(r.plan().scale, 4.0);
    }

    #[test]
    fn response_is_deterministic() {
        let spec = MeasurementSpec::new(10, 8, 1, 2, 1.0).unwrap();
        let b = budget(1.0, 0.01);
        let rec = ClientRecord::new(3, 5);
        let a = client_respond(&rec, &spec, &b, &mut stream(4, StreamTag::SketchClient, 3)).unwrap();
        assert_eq!(a, client_respond(&rec, &spec, &b, &mut stream(4, StreamTag::SketchClient, 3)).unwrap());
    }

    #[test]
    fn single_spike_is_recovered() {
        let spec = MeasurementSpec::new(20, 64, 1, 7, 1.0).unwrap();
        let c = measure(&spec, &[(33, 7.0)]);
        let est = recover_greedy(&c, &spec, 1).unwrap();
        assert_eq!(est.entries.len(), 1);
        assert_eq!(est.entries[0].0, UniverseIndex(33));
        assert!((est.entries[0].1 - 7.0).abs() < 1e-6);
    }

    #[test]
    fn zero_measurements_give_empty_estimate() {
        let spec = MeasurementSpec::new(20, 64, 3, 7, 1.0).unwrap();
        assert!(recover_greedy(&[0.0; 20], &spec, 3).unwrap().is_empty());
        assert!(recover_greedy(&[0.0; 20], &spec, 21).is_err());
        assert!(recover_greedy(&[0.0; 19], &spec, 3).is_err());
    }

    #[test]
    fn three_sparse_support_recovery() {
        let m = 4 * measurements_for(64, 3).unwrap().0;
        assert_eq!(m, 56);
        let mut rng = stream(100, StreamTag::Test, 0);
        let mut exact = 0;
        for seed in 0..100 {
            let spec = MeasurementSpec::new(m, 64, 3, seed, 1.0).unwrap();
            let mut support: Vec<u64> = Vec::new();
            while support.len() < 3 {
                let j = rng.gen_range(0..64);
                if !support.contains(&j) {
                    support.push(j);
                }
            }
            support.sort_unstable();
            let v: Vec<(u64, f64)> = support.iter().map(|&j| (j, rng.gen_range(1..100) as f64)).collect();
            let est = recover_greedy(&measure(&spec, &v), &spec, 3).unwrap();
            let found: Vec<u64> = est.entries.iter().map(|(i, _)| i.0).collect();
            if found == support {
                exact += 1;
            }
        }
        assert!(exact >= 95, "{exact}/100");
    }

    #[test]
    fn dominant_column_is_chosen_first() {
        let spec = MeasurementSpec::new(30, 32, 2, 3, 1.0).unwrap();
        let c = measure(&spec, &[(4, 3.0), (21, 10.0)]);
        let est = recover_greedy(&c, &spec, 2).unwrap();
        assert_eq!(est.argmax().unwrap().0, UniverseIndex(21));
    }

    #[test]
    fn noise_off_pipeline_finds_planted_element() {
        let recs: Vec<ClientRecord> = (0..40).map(|i| ClientRecord::new(i, 11)).collect();
        let config = SketchConfig { noise: NoiseMode::Off, ..Default::default() };
        let r = glps_hh(&recs, 64, &budget(1.0, 1e-5), 0.1, &GreedyPursuit, &config, 9).unwrap();
        assert_eq!(r.index, UniverseIndex(11));
        assert!((r.reported_count.unwrap() - 40.0).abs() < 1e-6);
    }

    #[test]
    fn noise_off_pipeline_prefers_larger_count() {
        let mut recs: Vec<ClientRecord> = (0..10).map(|i| ClientRecord::new(i, 3)).collect();
        recs.extend((10..13).map(|i| ClientRecord::new(i, 40)));
        let config = SketchConfig { noise: NoiseMode::Off, sparsity: Some(2), ..Default::default() };
        let r = glps_hh(&recs, 64, &budget(1.0, 1e-5), 0.1, &GreedyPursuit, &config, 2).unwrap();
        assert_eq!(r.index, UniverseIndex(3));
    }

    #[test]
    fn pipeline_linearity() {
        let recs: Vec<ClientRecord> = (0..50).map(|i| ClientRecord::new(i, (i * i % 16) as u64)).collect();
        let spec = MeasurementSpec::new(12, 16, 2, 1, 1.0).unwrap();
        let r = SketchRandomizer::new(&spec, &budget(1.0, 0.1), Neighboring::AddRemove, NoiseMode::Off).unwrap();
        let sum = LrOracle::new(&recs, 0).aggregate(&r).unwrap();
        let v: Vec<(u64, f64)> = recs.iter().map(|r| (r.element.0, 1.0)).collect();
        assert_eq!(sum, measure(&spec, &v));
    }

    #[test]
    fn repeats_must_be_odd() {
        let recs = [ClientRecord::new(0, 1)];
        for repeats in [0, 2] {
            let config = SketchConfig { repeats, ..Default::default() };
            assert!(glps_hh(&recs, 8, &budget(1.0, 0.1), 0.1, &GreedyPursuit, &config, 0).is_err());
        }
    }

    struct Empty;
    impl RecoveryDecoder for Empty {
        fn recover(&self, _: &[f64], _: &MeasurementSpec, _: usize) -> Result<SparseEstimate> {
            Ok(SparseEstimate::default())
        }
    }

    #[test]
    fn all_empty_repeats_fail_explicitly() {
        let recs = [ClientRecord::new(0, 1)];
        let config = SketchConfig { repeats: 3, ..Default::default() };
        assert_eq!(glps_hh(&recs, 8, &budget(1.0, 0.1), 0.1, &Empty, &config, 0), Err(Error::NoCandidate));
    }
}
