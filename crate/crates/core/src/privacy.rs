//! Laplace noise, composition-based calibration and the local-randomizer
//! contract.
//!
//! Logarithms are natural except for bit-length quantities, which callers
//! compute in base 2 and round up before they reach this module.

use rand::distributions::Distribution;
use rand::RngCore;

use crate::domain::{check_beta, ClientRecord};
use crate::error::{invalid, Error, Result};
use crate::rng::{open_unit, StreamRng, StreamTag};

/// `(epsilon, delta)` for one client's entire transcript.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `ln(1/delta)`.
    pub fn ln_inv_delta(&self) -> f64 {
        -self.delta.ln()
    }

    /// Even split across `parts` sequential sub-mechanisms (simple composition).
    pub fn split(&self, parts: usize) -> Result<Self> {
        if parts == 0 {
            return Err(invalid("cannot split a budget into zero parts"));
        }
        Self::new(self.epsilon / parts as f64, self.delta / parts as f64)
    }
}

/// Which pairs of databases count as neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Neighboring {
    /// `||v - v'||_1 <= 1`: one record added or removed.
    #[default]
    AddRemove,
    /// One record replaced by another; sensitivities double.
    Replacement,
}

impl Neighboring {
    pub fn sensitivity_factor(self) -> f64 {
        match self {
            Neighboring::AddRemove => 1.0,
            Neighboring::Replacement => 2.0,
        }
    }
}

/// Laplace scale for one client answering `queries_per_client` queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePlan {
    pub queries_per_client: usize,
    pub sensitivity: f64,
    pub scale: f64,
    private: bool,
}

impl NoisePlan {
    /// Same plan with the noise switched off. The result is not private and
    /// exists for deterministic pipeline tests.
    pub fn without_noise(self) -> Self {
        Self { scale: 0.0, private: false, ..self }
    }

    /// Plan for a single vector-valued query with L1 sensitivity
    /// `sensitivity`, answered with `Lap(sensitivity/epsilon)` per coordinate.
    pub fn l1_vector(len: usize, sensitivity: f64, epsilon: f64) -> Result<Self> {
        if len == 0 || !(sensitivity > 0.0) || !(epsilon > 0.0) {
            return Err(invalid("vector plan needs len >= 1, sensitivity > 0, epsilon > 0"));
        }
        Ok(Self { queries_per_client: len, sensitivity, scale: sensitivity / epsilon, private: true })
    }

    pub fn is_private(&self) -> bool {
        self.private
    }

    /// One noise draw under this plan (exactly zero when noise is off).
    #[inline]
    pub fn draw<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            laplace_from_uniform(open_unit(rng), self.scale)
        }
    }
}

/// Per-query Laplace scale so that `queries` answers of sensitivity
/// `sensitivity` compose to `budget`:
/// `sensitivity * sqrt(8 T ln(1/delta)) / epsilon`.
pub fn calibrate(budget: &PrivacyBudget, queries: usize, sensitivity: f64) -> Result<NoisePlan> {
    if queries == 0 {
        return Err(invalid("a client must answer at least one query"));
    }
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(invalid(format!("sensitivity must be positive, got {sensitivity}")));
    }
    let scale = sensitivity * (8.0 * queries as f64 * budget.ln_inv_delta()).sqrt() / budget.epsilon();
    Ok(NoisePlan { queries_per_client: queries, sensitivity, scale, private: true })
}

/// Centered Laplace distribution with scale `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Laplace {
    scale: f64,
}

impl Laplace {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid(format!("Laplace scale must be positive, got {scale}")));
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn cdf(&self, x: f64) -> f64 {
        laplace_cdf(x, self.scale)
    }
}

impl Distribution<f64> for Laplace {
    fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        laplace_from_uniform(open_unit(rng), self.scale)
    }
}

/// Inverse CDF of `Lap(scale)` at `u` in (0, 1).
#[inline]
pub fn laplace_from_uniform(u: f64, scale: f64) -> f64 {
    let centered = u - 0.5;
    if centered == 0.0 {
        return 0.0;
    }
    -scale * centered.signum() * (1.0 - 2.0 * centered.abs()).ln()
}

pub fn laplace_cdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / scale).exp()
    } else {
        1.0 - 0.5 * (-x / scale).exp()
    }
}

pub fn laplace_sample<R: RngCore + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    let lap = Laplace::new(scale)?;
    Ok(laplace_from_uniform(open_unit(rng), lap.scale))
}

/// `T_beta = b sqrt(6n) ln(2/beta)`: the sum of `n` i.i.d. `Lap(b)` draws
/// lies in `[-T_beta, T_beta]` with probability at least `1 - beta`.
pub fn laplace_sum_tail(n: u64, scale: f64, beta: f64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    Laplace::new(scale)?;
    check_beta(beta)?;
    Ok(scale * (6.0 * n as f64).sqrt() * (2.0 / beta).ln())
}

/// A bank of linear queries over the universe, read column-wise: the
/// answers of all queries on a single element.
pub trait QueryColumns: Sync {
    fn num_queries(&self) -> usize;

    fn universe(&self) -> u64;

    /// Writes the answers of every query on `element` into `out`.
    fn write_column(&self, element: u64, out: &mut [f64]);

    fn column(&self, element: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.num_queries()];
        self.write_column(element, &mut out);
        out
    }
}

/// Answers every query on one record, adding an independent `Lap(plan.scale)`
/// draw to each answer. Sees nothing but the record and its own stream.
pub fn respond_linear_into<Q: QueryColumns + ?Sized>(
    record: &ClientRecord,
    queries: &Q,
    plan: &NoisePlan,
    rng: &mut StreamRng,
    out: &mut [f64],
) -> Result<()> {
    if queries.num_queries() != plan.queries_per_client {
        return Err(Error::DimensionMismatch {
            expected: plan.queries_per_client,
            found: queries.num_queries(),
        });
    }
    if out.len() != plan.queries_per_client {
        return Err(Error::DimensionMismatch { expected: plan.queries_per_client, found: out.len() });
    }
    let element = record.element.get();
    if element >= queries.universe() {
        return Err(Error::OutOfRange { element, universe: queries.universe() });
    }
    queries.write_column(element, out);
    for x in out.iter_mut() {
        *x += plan.draw(rng);
    }
    Ok(())
}

pub fn respond_linear<Q: QueryColumns + ?Sized>(
    record: &ClientRecord,
    queries: &Q,
    plan: &NoisePlan,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; plan.queries_per_client];
    respond_linear_into(record, queries, plan, rng, &mut out)?;
    Ok(out)
}

/// The only channel through which a mechanism touches private data.
///
/// An implementation receives exactly one record and that client's own
/// random stream. There is no way to reach another client's record or any
/// aggregate state through this signature.
pub trait LocalRandomizer: Sync {
    fn name(&self) -> &'static str;

    /// The calibrated noise plan; its `queries_per_client` is the number of
    /// reals each client sends.
    fn plan(&self) -> &NoisePlan;

    /// Stream namespace for the per-client randomness.
    fn stream_tag(&self) -> StreamTag;

    fn message_len(&self) -> usize {
        self.plan().queries_per_client
    }

    fn respond_into(&self, record: &ClientRecord, rng: &mut StreamRng, out: &mut [f64]) -> Result<()>;

    fn respond(&self, record: &ClientRecord, rng: &mut StreamRng) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.message_len()];
        self.respond_into(record, rng, &mut out)?;
        Ok(out)
    }
}

/// Whether the noise mechanisms are live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    #[default]
    Calibrated,
    /// Not private: every noise draw is exactly zero.
    Off,
}

impl NoiseMode {
    pub fn apply(self, plan: NoisePlan) -> NoisePlan {
        match self {
            NoiseMode::Calibrated => plan,
            NoiseMode::Off => plan.without_noise(),
        }
    }
}

/// Exact histogram queries `e_j` for all `j`; a client's column is its own
/// one-hot histogram.
#[derive(Debug, Clone, Copy)]
pub struct IdentityQueries {
    pub universe: u64,
}

impl QueryColumns for IdentityQueries {
    fn num_queries(&self) -> usize {
        self.universe as usize
    }

    fn universe(&self) -> u64 {
        self.universe
    }

    fn write_column(&self, element: u64, out: &mut [f64]) {
        out.fill(0.0);
        out[element as usize] = 1.0;
    }
}
