//! Property suites shared by the `selftest` command and the test suites.
//!
//! Each suite returns a [`SuiteReport`]; none of them panic. The GF(2)
//! suite takes the solver as a parameter so a deliberately broken solver can
//! be plugged in to check that the suite notices.

use rand::Rng;

use crate::bucket::{bucket_params, K1Rule};
use crate::error::Result;
use crate::gf2::{from_bits, to_bits, BitMatrix, Gf2Solution};
use crate::hashing::eval_hash;
use crate::jl::JlRandomizer;
use crate::privacy::{calibrate, laplace_cdf, laplace_sample, laplace_sum_tail, LocalRandomizer, Neighboring, NoiseMode, PrivacyBudget};
use crate::rng::{stream, StreamTag};
use crate::stats::{binomial_sigma, ks_statistic};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        Self { name, checks: 0, failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// `suite=<name> status=<pass|fail> checks=<n> failures=<k>`
    pub fn summary_line(&self) -> String {
        format!(
            "suite={} status={} checks={} failures={}",
            self.name,
            if self.passed() { "pass" } else { "fail" },
            self.checks,
            self.failures.len()
        )
    }
}

pub type Gf2Solver = fn(&BitMatrix, &[bool]) -> Result<Gf2Solution>;

pub fn reference_solver(h: &BitMatrix, b: &[bool]) -> Result<Gf2Solution> {
    h.solve(b)
}

/// Test fixture: the real solver with the lowest bit of every unique
/// solution flipped.
pub fn faulty_solver(h: &BitMatrix, b: &[bool]) -> Result<Gf2Solution> {
    Ok(match h.solve(b)? {
        Gf2Solution::Unique(mut x) => {
            if let Some(bit) = x.first_mut() {
                *bit = !*bit;
            }
            Gf2Solution::Unique(x)
        }
        other => other,
    })
}

/// Classifies `H x = b` by trying every `x`.
pub fn brute_force(h: &BitMatrix, b: &[bool]) -> Gf2Solution {
    let cols = h.cols();
    let solutions: Vec<u64> = (0..1u64 << cols).filter(|&x| h.mul_vec(&to_bits(x, cols)).map(|y| y == b).unwrap_or(false)).collect();
    match solutions.len() {
        0 => Gf2Solution::Infeasible,
        1 => Gf2Solution::Unique(to_bits(solutions[0], cols)),
        k => Gf2Solution::Underdetermined { rank: cols - k.trailing_zeros() as usize },
    }
}

/// Random systems with at most 8 rows and 4 columns, half of them built to be
/// consistent.
pub fn random_system(rng: &mut impl Rng) -> (BitMatrix, Vec<bool>) {
    let rows = rng.gen_range(1..=8usize);
    let cols = rng.gen_range(1..=4usize);
    let words: Vec<u64> = (0..rows).map(|_| rng.gen_range(0..1u64 << cols)).collect();
    let h = BitMatrix::from_row_words(cols, &words);
    let b = if rng.gen::<bool>() {
        h.mul_vec(&to_bits(rng.gen_range(0..1u64 << cols), cols)).expect("matching width")
    } else {
        (0..rows).map(|_| rng.gen()).collect()
    };
    (h, b)
}

pub fn gf2_suite(solver: Gf2Solver, systems: usize, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("gf2");
    let mut rng = stream(seed, StreamTag::Test, 0x6f2);
    let mut seen = [false; 3];
    for i in 0..systems {
        let (h, b) = random_system(&mut rng);
        let expected = brute_force(&h, &b);
        seen[match expected {
            Gf2Solution::Unique(_) => 0,
            Gf2Solution::Infeasible => 1,
            Gf2Solution::Underdetermined { .. } => 2,
        }] = true;
        match solver(&h, &b) {
            Ok(got) => report.check(got == expected, || format!("system {i}: {h:?} b={b:?} expected {expected:?}, got {got:?}")),
            Err(e) => report.check(false, || format!("system {i}: solver error {e}")),
        }
    }
    report.check(seen.iter().all(|&s| s), || format!("outcome classes exercised (unique, infeasible, underdetermined): {seen:?}"));
    report
}

/// Exact counts of `(h_r(x), h_r(y))` over all nonzero `r` in `{0,1}^d`,
/// indexed `[h(x)][h(y)]`.
pub fn pairwise_table(d: u32, x: u64, y: u64) -> [[u64; 2]; 2] {
    let mut t = [[0u64; 2]; 2];
    for r in 1..1u64 << d {
        t[eval_hash(r, x) as usize][eval_hash(r, y) as usize] += 1;
    }
    t
}

pub fn hashing_suite() -> SuiteReport {
    let mut report = SuiteReport::new("hashing");
    // Two distinct nonzero x, y: r orthogonal to both spans a line, so only
    // one nonzero r sends both to 0 and every other outcome gets two.
    let expected = [[1, 2], [2, 2]];
    for (x, y) in [(1, 2), (1, 7), (3, 5), (4, 6), (2, 7)] {
        let t = pairwise_table(3, x, y);
        report.check(t == expected, || format!("pairwise table at ({x},{y}): {t:?}"));
    }
    for d in 1..=10u32 {
        for x in [1u64, (1 << d) - 1, 1 << (d - 1)] {
            let ones = (1..1u64 << d).filter(|&r| eval_hash(r, x)).count() as u64;
            report.check(ones == 1 << (d - 1), || format!("marginal at d={d}, x={x}: {ones} of {}", (1u64 << d) - 1));
        }
    }
    report
}

pub fn calibration_suite() -> SuiteReport {
    let mut report = SuiteReport::new("calibration");
    let e1 = (-1.0f64).exp();
    let b = PrivacyBudget::new(1.0, e1).expect("valid budget");
    report.check(calibrate(&b, 2, 1.0).map(|p| p.scale) == Ok(4.0), || "calibrate(1, 1/e, 2, 1) != 4".into());
    let b2 = PrivacyBudget::new(2.0, e1).expect("valid budget");
    report.check(calibrate(&b2, 8, 1.0).map(|p| p.scale) == Ok(4.0), || "calibrate(2, 1/e, 8, 1) != 4".into());
    for (eps, delta) in [(1.0, 1e-5), (0.5, 1e-6), (4.0, 0.01)] {
        let budget = PrivacyBudget::new(eps, delta).expect("valid budget");
        let closed = (8.0 * budget.ln_inv_delta()).sqrt() / eps;
        for m in [4usize, 16, 64, 256, 1024] {
            let spec = crate::jl::ProjectionSpec::implicit(m, 4, 1).expect("valid spec");
            let scale = JlRandomizer::new(&spec, &budget, Neighboring::AddRemove, NoiseMode::Calibrated).map(|r| r.plan().scale);
            report.check(scale == Ok(closed), || format!("jl scale at m={m}, eps={eps}: {scale:?} vs {closed}"));
        }
        for m in [1usize, 7, 100] {
            let closed = (8.0 * m as f64 * budget.ln_inv_delta()).sqrt() / eps;
            let scale = calibrate(&budget, m, 1.0).map(|p| p.scale);
            report.check(scale == Ok(closed), || format!("sketch scale at m={m}: {scale:?} vs {closed}"));
        }
        for universe in [8u64, 64, 1000] {
            let beta = 1.0 / 256.0;
            let p = bucket_params(universe, &budget, beta, K1Rule::TwelveN, Neighboring::AddRemove).expect("valid params");
            // k2 = 8 log2(1/beta) exactly at beta = 2^-8.
            let k1 = crate::hashing::ceil_log2(12 * universe) as f64;
            let closed = 8.0 * (k1 * 8.0 * budget.ln_inv_delta()).sqrt() / eps;
            report.check(p.noise_scale() == closed, || format!("bucket scale at N={universe}: {} vs {closed}", p.noise_scale()));
        }
    }
    report
}

pub fn laplace_suite(seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("laplace");
    let mut rng = stream(seed, StreamTag::Test, 0x1a9);
    for scale in [1.0, 2.5] {
        let samples: Vec<f64> = (0..100_000).map(|_| laplace_sample(scale, &mut rng).expect("positive scale")).collect();
        let ks = ks_statistic(&samples, |x| laplace_cdf(x, scale));
        report.check(ks < 0.01, || format!("KS at scale {scale}: {ks}"));
    }
    let trials = 2000;
    for n in [10u64, 100, 1000] {
        for scale in [0.5, 1.0, 4.0] {
            for beta in [0.05, 0.2] {
                let t = laplace_sum_tail(n, scale, beta).expect("valid tail parameters");
                let violations = (0..trials)
                    .filter(|_| (0..n).map(|_| laplace_sample(scale, &mut rng).expect("positive scale")).sum::<f64>().abs() > t)
                    .count();
                let rate = violations as f64 / trials as f64;
                let limit = beta + 3.0 * binomial_sigma(beta, trials);
                report.check(rate <= limit, || format!("tail at n={n}, b={scale}, beta={beta}: {rate} > {limit}"));
            }
        }
    }
    report
}

/// Every suite with the reference solver.
pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    run_with_solver(reference_solver, seed)
}

pub fn run_with_solver(solver: Gf2Solver, seed: u64) -> Vec<SuiteReport> {
    vec![gf2_suite(solver, 200, seed), hashing_suite(), calibration_suite(), laplace_suite(seed)]
}

/// Decodes a brute-force solution into an integer, for diagnostics.
pub fn solution_value(s: &Gf2Solution) -> Option<u64> {
    match s {
        Gf2Solution::Unique(bits) => from_bits(bits),
        _ => None,
    }
}
