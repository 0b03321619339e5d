//! Heavy hitters through a random `+-1/sqrt(m)` projection.
//!
//! Each client sends `A e_x + z` for its element `x`; the aggregator sums the
//! reports into `c` and estimates every count as `<A e_p, c>`.

use crate::domain::{check_beta, check_universe, ClientRecord, HeavyHitterResult, UniverseIndex};
use crate::error::{invalid, Error, Result};
use crate::privacy::{calibrate, respond_linear_into, LocalRandomizer, Neighboring, NoiseMode, NoisePlan, PrivacyBudget, QueryColumns};
use crate::oracle::LrOracle;
use crate::rng::{derive_seed, stream, StreamRng, StreamTag};

/// Columns are cached when `m * N` stays below this many entries.
const CACHE_LIMIT: usize = 1 << 23;

/// Largest projection dimension we are willing to build.
pub const MAX_DIMENSION: usize = 1 << 28;

/// `ceil(x)` that ignores floating-point excess below one part in 10^12, so
/// that e.g. `40.000000000000007` rounds to 40.
pub(crate) fn ceil_guarded(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Distortion parameter of the projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Fixed(f64),
    /// `gamma = 1/n^2`; only feasible for tiny `n`.
    InverseSquareN,
}

impl Default for Gamma {
    fn default() -> Self {
        Gamma::Fixed(0.25)
    }
}

impl Gamma {
    pub fn value(self, n: usize) -> f64 {
        match self {
            Gamma::Fixed(g) => g,
            Gamma::InverseSquareN => 1.0 / (n as f64 * n as f64),
        }
    }
}

/// `m = ceil(log2(N+1) ln(2/beta) / gamma^2)`.
pub fn choose_m(universe: u64, beta: f64, gamma: f64) -> Result<usize> {
    check_universe(universe)?;
    check_beta(beta)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let m = ceil_guarded(((universe + 1) as f64).log2() * (2.0 / beta).ln() / (gamma * gamma));
    if m > MAX_DIMENSION as f64 {
        return Err(invalid(format!("projection dimension {m} exceeds {MAX_DIMENSION}")));
    }
    Ok(m as usize)
}

#[derive(Debug, Clone)]
enum Columns {
    /// Column `i` regenerated from `(seed, i)` on demand.
    Implicit,
    /// Column-major `m x N` entries, either injected or a cache of the
    /// implicit columns.
    Stored(Vec<f64>),
}

/// The `m x N` projection `A`.
#[derive(Debug, Clone)]
pub struct ProjectionSpec {
    m: usize,
    universe: u64,
    seed: u64,
    columns: Columns,
}

impl ProjectionSpec {
    /// Seeded projection with entries `+-1/sqrt(m)`.
    pub fn implicit(m: usize, universe: u64, seed: u64) -> Result<Self> {
        check_universe(universe)?;
        if m == 0 || m > MAX_DIMENSION {
            return Err(invalid(format!("projection dimension must be in 1..={MAX_DIMENSION}, got {m}")));
        }
        let mut spec = Self { m, universe, seed, columns: Columns::Implicit };
        if (universe as u128) * (m as u128) <= CACHE_LIMIT as u128 {
            let mut cache = vec![0.0; m * universe as usize];
            for (i, col) in cache.chunks_exact_mut(m).enumerate() {
                spec.generate_column(i as u64, col);
            }
            spec.columns = Columns::Stored(cache);
        }
        Ok(spec)
    }

    /// Dimension chosen by [`choose_m`].
    pub fn for_distortion(universe: u64, beta: f64, gamma: f64, seed: u64) -> Result<Self> {
        Self::implicit(choose_m(universe, beta, gamma)?, universe, seed)
    }

    /// Test-injected matrix given as `N` columns of length `m`.
    pub fn explicit(columns: &[Vec<f64>]) -> Result<Self> {
        let universe = columns.len() as u64;
        check_universe(universe)?;
        let m = columns[0].len();
        if m == 0 {
            return Err(invalid("projection needs at least one row"));
        }
        let mut flat = Vec::with_capacity(m * columns.len());
        for c in columns {
            if c.len() != m {
                return Err(Error::DimensionMismatch { expected: m, found: c.len() });
            }
            flat.extend_from_slice(c);
        }
        Ok(Self { m, universe, seed: 0, columns: Columns::Stored(flat) })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn universe(&self) -> u64 {
        self.universe
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn generate_column(&self, index: u64, out: &mut [f64]) {
        let entry = 1.0 / (self.m as f64).sqrt();
        let mut rng = stream(self.seed, StreamTag::JlColumn, index);
        for chunk in out.chunks_mut(64) {
            let word = rand::RngCore::next_u64(&mut rng);
            for (j, x) in chunk.iter_mut().enumerate() {
                *x = if (word >> j) & 1 == 1 { entry } else { -entry };
            }
        }
    }

    /// `<A e_p, c>` for every `p`.
    fn correlate_all(&self, c: &[f64]) -> Vec<f64> {
        match &self.columns {
            Columns::Stored(flat) => flat.chunks_exact(self.m).map(|col| dot(col, c)).collect(),
            Columns::Implicit => {
                let mut col = vec![0.0; self.m];
                (0..self.universe)
                    .map(|p| {
                        self.generate_column(p, &mut col);
                        dot(&col, c)
                    })
                    .collect()
            }
        }
    }
}

impl QueryColumns for ProjectionSpec {
    fn num_queries(&self) -> usize {
        self.m
    }

    fn universe(&self) -> u64 {
        self.universe
    }

    fn write_column(&self, element: u64, out: &mut [f64]) {
        match &self.columns {
            Columns::Stored(flat) => {
                let start = element as usize * self.m;
                out.copy_from_slice(&flat[start..start + self.m]);
            }
            Columns::Implicit => self.generate_column(element, out),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One client's report `q = A v^i + z^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct JlResponse {
    pub q: Vec<f64>,
}

/// Client side: `m` linear queries of sensitivity `1/sqrt(m)`, so the
/// Laplace scale works out to `sqrt(8 ln(1/delta)) / epsilon`.
#[derive(Debug, Clone)]
pub struct JlRandomizer<'a> {
    spec: &'a ProjectionSpec,
    plan: NoisePlan,
}

impl<'a> JlRandomizer<'a> {
    pub fn new(spec: &'a ProjectionSpec, budget: &PrivacyBudget, neighboring: Neighboring, noise: NoiseMode) -> Result<Self> {
        let sensitivity = neighboring.sensitivity_factor() / (spec.m as f64).sqrt();
        let plan = noise.apply(calibrate(budget, spec.m, sensitivity)?);
        Ok(Self { spec, plan })
    }
}

impl LocalRandomizer for JlRandomizer<'_> {
    fn name(&self) -> &'static str {
        "jl"
    }

    fn plan(&self) -> &NoisePlan {
        &self.plan
    }

    fn stream_tag(&self) -> StreamTag {
        StreamTag::JlClient
    }

    fn respond_into(&self, record: &ClientRecord, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        respond_linear_into(record, self.spec, &self.plan, rng, out)
    }
}

pub fn client_respond(record: &ClientRecord, spec: &ProjectionSpec, budget: &PrivacyBudget, rng: &mut StreamRng) -> Result<JlResponse> {
    let r = JlRandomizer::new(spec, budget, Neighboring::AddRemove, NoiseMode::Calibrated)?;
    Ok(JlResponse { q: r.respond(record, rng)? })
}

/// Aggregator output: estimated counts and their argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct JlDecode {
    pub best: UniverseIndex,
    pub counts: Vec<f64>,
}

/// Decodes from the summed reports `c = sum_i q^i`.
pub fn decode_sum(sum: &[f64], spec: &ProjectionSpec) -> Result<JlDecode> {
    if sum.len() != spec.m {
        return Err(Error::DimensionMismatch { expected: spec.m, found: sum.len() });
    }
    let counts = spec.correlate_all(sum);
    Ok(JlDecode { best: UniverseIndex(argmax(&counts) as u64), counts })
}

/// Sums the reports once, then correlates against each `A e_p`.
pub fn aggregate_decode(responses: &[JlResponse], spec: &ProjectionSpec) -> Result<JlDecode> {
    if responses.is_empty() {
        return Err(Error::EmptyResponses);
    }
    let mut sum = vec![0.0; spec.m];
    for r in responses {
        if r.q.len() != spec.m {
            return Err(Error::DimensionMismatch { expected: spec.m, found: r.q.len() });
        }
        for (s, x) in sum.iter_mut().zip(&r.q) {
            *s += x;
        }
    }
    decode_sum(&sum, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JlConfig {
    pub gamma: Gamma,
    pub neighboring: Neighboring,
    pub noise: NoiseMode,
}

/// Projection used by a run under `master_seed`.
pub fn run_projection(n: usize, universe: u64, beta: f64, gamma: Gamma, master_seed: u64) -> Result<ProjectionSpec> {
    ProjectionSpec::for_distortion(universe, beta, gamma.value(n), derive_seed(master_seed, StreamTag::Matrix, 0))
}

/// Full pipeline: every client reports once through the oracle, the
/// aggregator decodes the summed reports.
pub fn jl_run(records: &[ClientRecord], universe: u64, budget: &PrivacyBudget, beta: f64, config: &JlConfig, master_seed: u64) -> Result<(ProjectionSpec, JlDecode)> {
    if records.is_empty() {
        return Err(Error::EmptyResponses);
    }
    let spec = run_projection(records.len(), universe, beta, config.gamma, master_seed)?;
    let randomizer = JlRandomizer::new(&spec, budget, config.neighboring, config.noise)?;
    let sum = LrOracle::new(records, master_seed).aggregate(&randomizer)?;
    let decode = decode_sum(&sum, &spec)?;
    Ok((spec, decode))
}

pub fn jl_hh(records: &[ClientRecord], universe: u64, budget: &PrivacyBudget, beta: f64, config: &JlConfig, master_seed: u64) -> Result<HeavyHitterResult> {
    let (_, decode) = jl_run(records, universe, budget, beta, config, master_seed)?;
    Ok(HeavyHitterResult::new(decode.best, Some(decode.counts[decode.best.0 as usize])))
}

pub fn estimate_frequency(counts: &[f64], index: UniverseIndex) -> Result<f64> {
    counts
        .get(index.0 as usize)
        .copied()
        .ok_or(Error::OutOfRange { element: index.0, universe: counts.len() as u64 })
}

/// Index of the largest value, lowest index on ties. NaN never wins.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_histogram, heavy_hitter};

    fn budget(eps: f64, delta: f64) -> PrivacyBudget {
        PrivacyBudget::new(eps, delta).unwrap()
    }

    #[test]
    fn choose_m_examples() {
        let beta = 2.0 / std::f64::consts::E;
        assert_eq!(choose_m(1023, beta, 0.5).unwrap(), 40);
        assert_eq!(choose_m(1023, beta, 0.25).unwrap(), 160);
        assert!(choose_m(1023, beta, 1.0).is_err());
        assert!(choose_m(1023, beta, 0.0).is_err());
        for &g in &[0.5, 0.3, 0.2] {
            let a = choose_m(1023, beta, g).unwrap();
            let b = choose_m(1023, beta, g / 2.0).unwrap();
            assert!((b as i64 - 4 * a as i64).abs() <= 4, "{a} {b}");
        }
    }

    #[test]
    fn paper_gamma_is_rejected_when_huge() {
        let g = Gamma::InverseSquareN.value(1000);
        assert!(choose_m(256, 0.1, g).is_err());
        assert_eq!(Gamma::InverseSquareN.value(2), 0.25);
    }

    #[test]
    fn implicit_columns_are_reproducible_signs() {
        let a = ProjectionSpec::implicit(70, 5, 9).unwrap();
        let b = ProjectionSpec::implicit(70, 5, 9).unwrap();
        let entry = 1.0 / 70f64.sqrt();
        for i in 0..5 {
            let col = a.column(i);
            assert_eq!(col, b.column(i));
            assert!(col.iter().all(|&x| x == entry || x == -entry));
            // Cached columns equal freshly generated ones.
            let mut fresh = vec![0.0; 70];
            a.generate_column(i, &mut fresh);
            assert_eq!(col, fresh);
        }
        assert_ne!(a.column(0), ProjectionSpec::implicit(70, 5, 10).unwrap().column(0));
    }

    #[test]
    fn noise_off_returns_column() {
        let h = 0.5;
        let spec = ProjectionSpec::explicit(&[vec![h, -h, h, h], vec![-h, -h, h, -h]]).unwrap();
        let r = JlRandomizer::new(&spec, &budget(1.0, 0.1), Neighboring::AddRemove, NoiseMode::Off).unwrap();
        let out = r.respond(&ClientRecord::new(0, 0), &mut stream(1, StreamTag::Test, 0)).unwrap();
        assert_eq!(out, vec![h, -h, h, h]);
    }

    #[test]
    fn response_is_seed_deterministic() {
        let spec = ProjectionSpec::implicit(32, 100, 3).unwrap();
        let b = budget(1.0, 1e-5);
        let rec = ClientRecord::new(4, 42);
        let a = client_respond(&rec, &spec, &b, &mut stream(8, StreamTag::JlClient, 4)).unwrap();
        let c = client_respond(&rec, &spec, &b, &mut stream(8, StreamTag::JlClient, 4)).unwrap();
        assert_eq!(a, c);
        assert_eq!(a.q.len(), 32);
    }

    #[test]
    fn noise_scale_matches_closed_form() {
        let spec = ProjectionSpec::implicit(16, 10, 0).unwrap();
        let r = JlRandomizer::new(&spec, &budget(1.0, (-8.0f64).exp()), Neighboring::AddRemove, NoiseMode::Calibrated).unwrap();
        assert_eq!(r.plan().scale, 8.0);
        let r2 = JlRandomizer::new(&spec, &budget(1.0, (-8.0f64).exp()), Neighboring::Replacement, NoiseMode::Calibrated).unwrap();
        assert_eq!(r2.plan().scale, 16.0);
    }

    #[test]
    fn identity_projection_decodes_exactly() {
        let cols: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let spec = ProjectionSpec::explicit(&cols).unwrap();
        let recs = [ClientRecord::new(0, 0), ClientRecord::new(1, 1), ClientRecord::new(2, 1)];
        let r = JlRandomizer::new(&spec, &budget(1.0, 0.1), Neighboring::AddRemove, NoiseMode::Off).unwrap();
        let responses: Vec<JlResponse> = recs
            .iter()
            .map(|rec| JlResponse { q: r.respond(rec, &mut stream(0, StreamTag::JlClient, rec.owner as u64)).unwrap() })
            .collect();
        let d = aggregate_decode(&responses, &spec).unwrap();
        assert_eq!(d.counts, vec![1.0, 2.0, 0.0]);
        assert_eq!(d.best, UniverseIndex(1));
        assert_eq!(estimate_frequency(&d.counts, UniverseIndex(1)).unwrap(), 2.0);
        assert!(estimate_frequency(&d.counts, UniverseIndex(3)).is_err());
    }

    #[test]
    fn decode_rejects_empty_and_ragged() {
        let spec = ProjectionSpec::implicit(4, 3, 0).unwrap();
        assert_eq!(aggregate_decode(&[], &spec), Err(Error::EmptyResponses));
        assert!(aggregate_decode(&[JlResponse { q: vec![0.0; 3] }], &spec).is_err());
    }

    #[test]
    fn noise_off_decode_is_linear() {
        // counts[p] = <A e_p, A v> exactly when the noise is off.
        let spec = ProjectionSpec::implicit(50, 8, 1).unwrap();
        let elements = [3u64, 3, 5, 0, 3, 7];
        let recs: Vec<ClientRecord> = elements.iter().enumerate().map(|(i, &e)| ClientRecord::new(i, e)).collect();
        let r = JlRandomizer::new(&spec, &budget(1.0, 0.1), Neighboring::AddRemove, NoiseMode::Off).unwrap();
        let responses: Vec<JlResponse> =
            recs.iter().map(|rec| JlResponse { q: r.respond(rec, &mut stream(0, StreamTag::JlClient, 0)).unwrap() }).collect();
        let d = aggregate_decode(&responses, &spec).unwrap();
        let mut av = vec![0.0; 50];
        for &e in &elements {
            for (a, x) in av.iter_mut().zip(spec.column(e)) {
                *a += x;
            }
        }
        for p in 0..8 {
            assert!((d.counts[p] - dot(&spec.column(p as u64), &av)).abs() < 1e-12);
        }
    }

    #[test]
    fn planted_element_wins_without_noise() {
        let beta = 0.1;
        let m = choose_m(64, beta, 0.1).unwrap();
        let mut failures = 0;
        for seed in 0..20 {
            let spec = ProjectionSpec::implicit(m, 64, seed).unwrap();
            let mut elements = vec![17u64; 50];
            elements.extend((0..10).map(|i| (i * 7 + seed) % 64));
            let recs: Vec<ClientRecord> = elements.iter().enumerate().map(|(i, &e)| ClientRecord::new(i, e)).collect();
            let r = JlRandomizer::new(&spec, &budget(1.0, 0.1), Neighboring::AddRemove, NoiseMode::Off).unwrap();
            let responses: Vec<JlResponse> =
                recs.iter().map(|rec| JlResponse { q: r.respond(rec, &mut stream(0, StreamTag::JlClient, 0)).unwrap() }).collect();
            let truth = heavy_hitter(&build_histogram(&recs, 64).unwrap()).unwrap().0;
            if aggregate_decode(&responses, &spec).unwrap().best != truth {
                failures += 1;
            }
        }
        assert!(failures as f64 <= beta * 20.0, "{failures} failures");
    }

    #[test]
    fn single_client_noise_off_recovers_element() {
        let beta = 0.1;
        let m = choose_m(128, beta, 0.25).unwrap();
        let trials = 100;
        let mut hits = 0;
        for seed in 0..trials {
            let spec = ProjectionSpec::implicit(m, 128, seed).unwrap();
            let rec = ClientRecord::new(0, seed % 128);
            let r = JlRandomizer::new(&spec, &budget(1.0, 0.1), Neighboring::AddRemove, NoiseMode::Off).unwrap();
            let q = r.respond(&rec, &mut stream(0, StreamTag::JlClient, 0)).unwrap();
            if decode_sum(&q, &spec).unwrap().best == rec.element {
                hits += 1;
            }
        }
        assert!(hits as f64 >= (1.0 - beta) * trials as f64, "{hits}/{trials}");
    }

    #[test]
    fn argmax_tie_breaks_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[f64::NAN, 0.0]), 1);
    }
}
