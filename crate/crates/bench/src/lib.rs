//! Shared fixtures for the benchmarks.

use ldphh_core::rng::{stream, StreamTag};
use ldphh_core::selftest::random_system;
use ldphh_core::{generate, BitMatrix, ClientRecord, DataGenSpec, DataKind, PrivacyBudget};

pub const SEED: u64 = 7;

/// Zipf(1) records over a universe of `universe` elements.
pub fn zipf_records(n: usize, universe: u64) -> Vec<ClientRecord> {
    generate(&DataGenSpec { kind: DataKind::Zipf { exponent: 1.0 }, n, universe, seed: SEED }).expect("valid data spec")
}

pub fn budget() -> PrivacyBudget {
    PrivacyBudget::new(1.0, 1e-5).expect("valid budget")
}

pub fn gf2_systems(count: usize) -> Vec<(BitMatrix, Vec<bool>)> {
    let mut rng = stream(SEED, StreamTag::Test, 0);
    (0..count).map(|_| random_system(&mut rng)).collect()
}
