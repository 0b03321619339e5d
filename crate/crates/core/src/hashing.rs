//! Pairwise-independent parity hashes `h_r(x) = <r, b(x)> mod 2` with `r`
//! uniform over the non-zero strings of `{0,1}^d`.

use rand::RngCore;

use crate::error::{invalid, Result};
use crate::gf2::BitMatrix;

/// `ceil(log2(x))` for `x >= 1`, computed exactly.
pub fn ceil_log2(x: u64) -> u32 {
    assert!(x >= 1, "ceil_log2 of zero");
    64 - (x - 1).leading_zeros()
}

/// Bit length `d = ceil(log2 N)` used to encode universe elements.
pub fn bit_length(universe: u64) -> u32 {
    ceil_log2(universe).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HashRow {
    r: u64,
    d: u32,
}

impl HashRow {
    pub fn new(r: u64, d: u32) -> Result<Self> {
        if d == 0 || d > 64 {
            return Err(invalid(format!("hash width must be in 1..=64, got {d}")));
        }
        if d < 64 && r >> d != 0 {
            return Err(invalid(format!("hash row {r:#b} wider than {d} bits")));
        }
        if r == 0 {
            return Err(invalid("the all-zero string is not a member of the hash family"));
        }
        Ok(Self { r, d })
    }

    pub fn bits(&self) -> u64 {
        self.r
    }

    pub fn width(&self) -> u32 {
        self.d
    }

    #[inline]
    pub fn eval(&self, x: u64) -> bool {
        eval_hash(self.r, x)
    }

    /// Uniform over `{0,1}^d \ {0}` by rejection.
    pub fn sample<R: RngCore + ?Sized>(d: u32, rng: &mut R) -> Result<Self> {
        if d == 0 || d > 64 {
            return Err(invalid(format!("hash width must be in 1..=64, got {d}")));
        }
        let mask = if d == 64 { u64::MAX } else { (1u64 << d) - 1 };
        loop {
            let r = rng.next_u64() & mask;
            if r != 0 {
                return Ok(Self { r, d });
            }
        }
    }
}

/// `<r, b(x)> mod 2`.
#[inline]
pub fn eval_hash(r: u64, x: u64) -> bool {
    (r & x).count_ones() & 1 == 1
}

/// `k1` i.i.d. rows drawn uniformly from the non-zero strings of width `d`.
/// Rows are drawn with replacement.
pub fn sample_hash_matrix<R: RngCore + ?Sized>(d: u32, k1: usize, rng: &mut R) -> Result<BitMatrix> {
    if k1 == 0 {
        return Err(invalid("a hash matrix needs at least one row"));
    }
    let rows = (0..k1).map(|_| HashRow::sample(d, rng).map(|h| h.r)).collect::<Result<Vec<_>>>()?;
    Ok(BitMatrix::from_row_words(d as usize, &rows))
}

/// Parities of every row of `h` on `x`: `H b(x) mod 2`.
pub fn hash_signature(h: &BitMatrix, x: u64) -> impl Iterator<Item = bool> + '_ {
    (0..h.rows()).map(move |k| eval_hash(h.row_word(k), x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamTag};

    /// Parity of `r AND x` by explicit bit loop, independent of popcount.
    fn parity_oracle(r: u64, x: u64, d: u32) -> u8 {
        (0..d).map(|j| ((r >> j) & 1) * ((x >> j) & 1)).sum::<u64>() as u8 % 2
    }

    #[test]
    fn eval_examples() {
        assert!(!eval_hash(0b101, 0b111));
        assert!((0..64).all(|r| !eval_hash(r, 0)));
        assert!(eval_hash(0b001, 5));
        for r in 1..16 {
            for x in 0..16 {
                assert_eq!(eval_hash(r, x) as u8, parity_oracle(r, x, 4));
            }
        }
    }

    #[test]
    fn bit_lengths() {
        assert_eq!(bit_length(2), 1);
        assert_eq!(bit_length(8), 3);
        assert_eq!(bit_length(9), 4);
        assert_eq!(ceil_log2(96), 7);
        assert_eq!(ceil_log2(12 * 64), 10);
        assert_eq!(ceil_log2(1), 0);
    }

    #[test]
    fn hash_row_rejects_zero_and_wide() {
        assert!(HashRow::new(0, 3).is_err());
        assert!(HashRow::new(0b1000, 3).is_err());
        assert!(HashRow::new(1, 0).is_err());
        assert!(HashRow::new(u64::MAX, 64).is_ok());
    }

    #[test]
    fn width_one_has_single_row_value() {
        let mut rng = stream(3, StreamTag::Test, 0);
        let h = sample_hash_matrix(1, 50, &mut rng).unwrap();
        assert!((0..50).all(|k| h.row_word(k) == 1));
    }

    #[test]
    fn sampling_is_uniform_over_nonzero_strings() {
        let mut rng = stream(4, StreamTag::Test, 0);
        let n = 100_000;
        let h = sample_hash_matrix(3, n, &mut rng).unwrap();
        let mut freq = [0usize; 8];
        for k in 0..n {
            freq[h.row_word(k) as usize] += 1;
        }
        assert_eq!(freq[0], 0);
        for f in &freq[1..] {
            assert!((*f as f64 / n as f64 - 1.0 / 7.0).abs() < 0.01, "{freq:?}");
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let a = sample_hash_matrix(10, 20, &mut stream(5, StreamTag::Test, 0)).unwrap();
        let b = sample_hash_matrix(10, 20, &mut stream(5, StreamTag::Test, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_marginals_by_enumeration() {
        for d in 1..=10u32 {
            let size = 1u64 << d;
            for x in 1..size {
                let ones = (1..size).filter(|&r| eval_hash(r, x)).count() as u64;
                // Pr[h = 1] = 2^{d-1} / (2^d - 1); compare as integer counts.
                assert_eq!(ones, size / 2, "d={d} x={x}");
            }
        }
    }

    #[test]
    fn exact_pairwise_table_at_width_three() {
        for x in 1..8u64 {
            for y in 1..8u64 {
                if x == y {
                    continue;
                }
                let mut table = [[0u32; 2]; 2];
                for r in 1..8u64 {
                    table[parity_oracle(r, x, 3) as usize][parity_oracle(r, y, 3) as usize] += 1;
                }
                assert_eq!(table, [[1, 2], [2, 2]], "x={x} y={y}");
                for row in table {
                    for c in row {
                        assert!((c as f64 / 7.0 - 0.25).abs() <= 2.0 / 7.0);
                    }
                }
            }
        }
    }

    /// Tail bound for sums of pairwise-independent bounded variables
    /// `Pr[|X - mu| > t] <= C_2 (2c / t^2)`, checked by Monte Carlo over
    /// random hash rows with weighted indicators `X_i = c_i h_r(i)`.
    #[test]
    fn pairwise_tail_bound_holds() {
        let d = 6u32;
        let weights: Vec<f64> = (0..64u64).map(|i| 1.0 + (i % 7) as f64).collect();
        let c: f64 = weights.iter().map(|w| w * w).sum();
        let p = (1u64 << (d - 1)) as f64 / ((1u64 << d) - 1) as f64;
        let mu: f64 = weights.iter().enumerate().skip(1).map(|(_, w)| w * p).sum();
        let k = 2.0f64;
        let c2_formula = 2.0 * (std::f64::consts::PI * k).sqrt() * (k / 2.0 - 1.0 / (6.0 * k)).exp();
        let c2 = c2_formula.min(1.0004);

        let mut rng = stream(6, StreamTag::Test, 0);
        let trials = 10_000;
        let sums: Vec<f64> = (0..trials)
            .map(|_| {
                let row = HashRow::sample(d, &mut rng).unwrap();
                weights.iter().enumerate().filter(|(i, _)| row.eval(*i as u64)).map(|(_, w)| w).sum()
            })
            .collect();
        for t in [5.0, 10.0, 20.0, 40.0, 60.0, 80.0] {
            let tail = sums.iter().filter(|&&x| (x - mu).abs() > t).count() as f64 / trials as f64;
            let bound = c2 * 2.0 * c / (t * t);
            assert!(tail <= bound, "t={t} tail={tail} bound={bound}");
        }
    }
}
