//! Dense bit matrices over GF(2) and Gaussian elimination.
//!
//! Column `j` of a matrix multiplies bit `j` (least significant first) of the
//! unknown vector.

use std::fmt;

use crate::error::{Error, Result};

const WORD: usize = 64;

#[derive(Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(WORD).max(1);
        Self { rows, cols, words_per_row, bits: vec![0; rows * words_per_row] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    /// Builds a matrix with at most 64 columns from packed row words.
    pub fn from_row_words(cols: usize, rows: &[u64]) -> Self {
        assert!(cols <= WORD, "from_row_words supports at most 64 columns");
        let mask = if cols == WORD { u64::MAX } else { (1u64 << cols) - 1 };
        let mut m = Self::zeros(rows.len(), cols);
        for (i, &w) in rows.iter().enumerate() {
            m.bits[i * m.words_per_row] = w & mask;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: row.len() });
            }
            for (j, &b) in row.iter().enumerate() {
                m.set(i, j, b);
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.rows && col < self.cols);
        self.bits[row * self.words_per_row + col / WORD] >> (col % WORD) & 1 == 1
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        assert!(row < self.rows && col < self.cols, "bit ({row}, {col}) out of bounds");
        let w = &mut self.bits[row * self.words_per_row + col / WORD];
        let mask = 1u64 << (col % WORD);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    #[inline]
    pub fn row_words(&self, row: usize) -> &[u64] {
        &self.bits[row * self.words_per_row..(row + 1) * self.words_per_row]
    }

    /// Row `row` packed into a single word (matrices with at most 64 columns).
    #[inline]
    pub fn row_word(&self, row: usize) -> u64 {
        self.bits[row * self.words_per_row]
    }

    /// `H x (mod 2)`.
    pub fn mul_vec(&self, x: &[bool]) -> Result<Vec<bool>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, found: x.len() });
        }
        let packed = pack(x, self.words_per_row);
        Ok((0..self.rows)
            .map(|r| {
                self.row_words(r).iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum::<u32>() & 1 == 1
            })
            .collect())
    }

    pub fn rank(&self) -> usize {
        let mut work = self.clone();
        work.eliminate(self.cols)
    }

    /// Solves `H x = b (mod 2)`.
    pub fn solve(&self, b: &[bool]) -> Result<Gf2Solution> {
        if b.len() != self.rows {
            return Err(Error::DimensionMismatch { expected: self.rows, found: b.len() });
        }
        // Augmented copy with the right-hand side stored in column `cols`.
        let mut aug = Self::zeros(self.rows, self.cols + 1);
        for r in 0..self.rows {
            let dst = r * aug.words_per_row;
            aug.bits[dst..dst + self.words_per_row].copy_from_slice(self.row_words(r));
            if b[r] {
                aug.set(r, self.cols, true);
            }
        }
        let rank = aug.eliminate(self.cols);
        // After reduction rows [rank..) have zero coefficients.
        if (rank..aug.rows).any(|r| aug.get(r, self.cols)) {
            return Ok(Gf2Solution::Infeasible);
        }
        if rank < self.cols {
            return Ok(Gf2Solution::Underdetermined { rank });
        }
        // Full column rank and reduced: row j holds the pivot of column j.
        Ok(Gf2Solution::Unique((0..self.cols).map(|j| aug.get(j, self.cols)).collect()))
    }

    /// Reduced row echelon form on the first `pivot_cols` columns, pivoting
    /// on the first row with the bit set. Returns the rank.
    fn eliminate(&mut self, pivot_cols: usize) -> usize {
        let wpr = self.words_per_row;
        let mut rank = 0;
        for col in 0..pivot_cols {
            if rank == self.rows {
                break;
            }
            let Some(pivot) = (rank..self.rows).find(|&r| self.get(r, col)) else {
                continue;
            };
            if pivot != rank {
                for w in 0..wpr {
                    self.bits.swap(pivot * wpr + w, rank * wpr + w);
                }
            }
            for r in 0..self.rows {
                if r != rank && self.get(r, col) {
                    for w in 0..wpr {
                        let src = self.bits[rank * wpr + w];
                        self.bits[r * wpr + w] ^= src;
                    }
                }
            }
            rank += 1;
        }
        rank
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: String = (0..self.cols).map(|c| if self.get(r, c) { '1' } else { '0' }).collect();
            writeln!(f, "  {row}")?;
        }
        write!(f, "]")
    }
}

fn pack(x: &[bool], words: usize) -> Vec<u64> {
    let mut out = vec![0u64; words];
    for (j, &bit) in x.iter().enumerate() {
        if bit {
            out[j / WORD] |= 1 << (j % WORD);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Gf2Solution {
    Unique(Vec<bool>),
    Infeasible,
    Underdetermined { rank: usize },
}

/// Little-endian bit expansion `b(x)` of length `bits`.
pub fn to_bits(x: u64, bits: usize) -> Vec<bool> {
    (0..bits).map(|j| j < 64 && (x >> j) & 1 == 1).collect()
}

/// Inverse of [`to_bits`]; `None` if a set bit does not fit in 64 bits.
pub fn from_bits(bits: &[bool]) -> Option<u64> {
    let mut x = 0u64;
    for (j, &b) in bits.iter().enumerate() {
        if b {
            if j >= 64 {
                return None;
            }
            x |= 1 << j;
        }
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamTag};
    use proptest::prelude::*;
    use rand::Rng;

    fn m(rows: &[&[u8]]) -> BitMatrix {
        BitMatrix::from_rows(&rows.iter().map(|r| r.iter().map(|&b| b == 1).collect()).collect::<Vec<_>>()).unwrap()
    }

    fn bits(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&b| b == 1).collect()
    }

    /// Every x in {0,1}^cols with H x = b, found by enumeration.
    fn brute_force(h: &BitMatrix, b: &[bool]) -> Vec<Vec<bool>> {
        (0..1u64 << h.cols())
            .map(|x| to_bits(x, h.cols()))
            .filter(|x| {
                (0..h.rows()).all(|r| {
                    let dot = (0..h.cols()).filter(|&c| h.get(r, c) && x[c]).count() % 2 == 1;
                    dot == b[r]
                })
            })
            .collect()
    }

    #[test]
    fn solve_examples() {
        assert_eq!(BitMatrix::identity(3).solve(&bits(&[1, 0, 1])).unwrap(), Gf2Solution::Unique(bits(&[1, 0, 1])));
        let h = m(&[&[1, 1], &[0, 1], &[1, 0]]);
        assert_eq!(brute_force(&h, &bits(&[1, 1, 0])), vec![bits(&[0, 1])]);
        assert_eq!(h.solve(&bits(&[1, 1, 0])).unwrap(), Gf2Solution::Unique(bits(&[0, 1])));
        assert_eq!(m(&[&[1, 0], &[1, 0]]).solve(&bits(&[0, 1])).unwrap(), Gf2Solution::Infeasible);
        let h = m(&[&[1, 1]]);
        assert_eq!(brute_force(&h, &bits(&[0])).len(), 2);
        assert_eq!(h.solve(&bits(&[0])).unwrap(), Gf2Solution::Underdetermined { rank: 1 });
    }

    #[test]
    fn solve_rejects_bad_rhs() {
        let err = BitMatrix::identity(3).solve(&bits(&[1, 0])).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 3, found: 2 });
    }

    #[test]
    fn rank_examples() {
        assert_eq!(BitMatrix::identity(4).rank(), 4);
        assert_eq!(BitMatrix::zeros(3, 3).rank(), 0);
        assert_eq!(m(&[&[1, 1], &[1, 1]]).rank(), 1);
    }

    #[test]
    fn solve_agrees_with_enumeration() {
        let mut rng = stream(11, StreamTag::Test, 0);
        let mut seen = [0usize; 3];
        for _ in 0..200 {
            let rows = rng.gen_range(1..=8);
            let cols = rng.gen_range(1..=4);
            let words: Vec<u64> = (0..rows).map(|_| rng.gen::<u64>()).collect();
            let h = BitMatrix::from_row_words(cols, &words);
            let b: Vec<bool> = (0..rows).map(|_| rng.gen()).collect();
            let sols = brute_force(&h, &b);
            match h.solve(&b).unwrap() {
                Gf2Solution::Unique(x) => {
                    seen[0] += 1;
                    assert_eq!(sols, vec![x.clone()]);
                    assert_eq!(h.mul_vec(&x).unwrap(), b);
                }
                Gf2Solution::Infeasible => {
                    seen[1] += 1;
                    assert!(sols.is_empty());
                }
                Gf2Solution::Underdetermined { rank } => {
                    seen[2] += 1;
                    assert!(sols.len() >= 2);
                    assert_eq!(sols.len(), 1 << (cols - rank));
                }
            }
        }
        assert!(seen.iter().all(|&c| c > 0), "outcome classes {seen:?}");
    }

    #[test]
    fn wide_matrices_use_multiple_words() {
        let n = 130;
        let mut h = BitMatrix::identity(n);
        h.set(0, 129, true);
        let mut x = vec![false; n];
        x[129] = true;
        x[64] = true;
        let b = h.mul_vec(&x).unwrap();
        assert!(b[0] && b[64] && b[129]);
        assert_eq!(h.solve(&b).unwrap(), Gf2Solution::Unique(x));
        assert_eq!(h.rank(), n);
    }

    #[test]
    fn bit_conversion() {
        assert_eq!(to_bits(5, 4), bits(&[1, 0, 1, 0]));
        assert_eq!(from_bits(&to_bits(0xdead_beef, 40)), Some(0xdead_beef));
    }

    proptest! {
        #[test]
        fn rank_bounded_and_permutation_invariant(
            words in prop::collection::vec(any::<u64>(), 1..10),
            cols in 1usize..12,
            rot in 0usize..10,
        ) {
            let h = BitMatrix::from_row_words(cols, &words);
            let r = h.rank();
            prop_assert!(r <= words.len().min(cols));
            let mut perm = words.clone();
            perm.rotate_left(rot % words.len());
            perm.reverse();
            prop_assert_eq!(BitMatrix::from_row_words(cols, &perm).rank(), r);
        }

        #[test]
        fn unique_solutions_reproduce_rhs(words in prop::collection::vec(any::<u64>(), 1..10), cols in 1usize..8, x in any::<u64>()) {
            let h = BitMatrix::from_row_words(cols, &words);
            let x = to_bits(x, cols);
            let b = h.mul_vec(&x).unwrap();
            match h.solve(&b).unwrap() {
                Gf2Solution::Unique(sol) => {
                    prop_assert_eq!(&h.mul_vec(&sol).unwrap(), &b);
                    prop_assert_eq!(sol, x);
                }
                Gf2Solution::Underdetermined { rank } => prop_assert!(rank < cols),
                Gf2Solution::Infeasible => prop_assert!(false, "consistent system reported infeasible"),
            }
        }
    }
}
