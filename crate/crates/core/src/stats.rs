//! Small numeric helpers for experiments: norms, medians, power-law fits
//! and goodness-of-fit statistics.

pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||v - v_s||_2` where `v_s` keeps the `s` largest-magnitude entries.
pub fn tail_l2(v: &[f64], s: usize) -> f64 {
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    mags.iter().skip(s).map(|x| x * x).sum::<f64>().sqrt()
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

/// Least-squares exponent `p` of `y ~ C x^p` on log-log axes. `None` when a
/// point is non-positive or fewer than two distinct `x` are given.
pub fn power_law_exponent(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// One-sample Kolmogorov-Smirnov statistic against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Standard error of a binomial proportion.
pub fn binomial_sigma(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamTag};
    use rand::Rng;

    #[test]
    fn median_cases() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn power_law_recovers_exponent() {
        let xs = [250.0, 1000.0, 4000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.5)).collect();
        assert!((power_law_exponent(&xs, &ys).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(power_law_exponent(&xs, &[1.0, 0.0, 2.0]), None);
        assert_eq!(power_law_exponent(&[1.0], &[1.0]), None);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(ks_statistic(&samples, |x| x.clamp(0.0, 1.0)) <= 0.5 / n as f64 + 1e-12);
    }

    #[test]
    fn sparse_truncation_bound() {
        // ||v - v_s||_2 <= ||v||_1 / sqrt(s) for non-negative v.
        let mut rng = stream(12, StreamTag::Test, 0);
        for _ in 0..100 {
            let len = rng.gen_range(1..200);
            let v: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..100.0f64).powi(2)).collect();
            let s = rng.gen_range(1..=len);
            assert!(tail_l2(&v, s) <= l1_norm(&v) / (s as f64).sqrt() + 1e-9);
        }
        assert_eq!(tail_l2(&[5.0, -7.0, 1.0], 1), (26.0f64).sqrt());
        assert_eq!(l2_norm(&[3.0, 4.0]), 5.0);
    }
}
