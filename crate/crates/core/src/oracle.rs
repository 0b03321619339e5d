//! Local-randomizer oracle: the aggregator's only view of the clients.
//!
//! A mechanism hands the oracle a [`LocalRandomizer`]; the oracle invokes it
//! once per client with that client's record and private stream and returns
//! the reports (or their sum). Reports are summed in fixed-size chunks and
//! the chunk sums combined in order, so results are bit-identical for any
//! thread count.

use rayon::prelude::*;

use crate::domain::{ClientRecord, UniverseIndex};
use crate::error::{Error, Result};
use crate::privacy::LocalRandomizer;
use crate::rng::stream;

const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy)]
pub struct LrOracle<'a> {
    records: &'a [ClientRecord],
    seed: u64,
}

impl<'a> LrOracle<'a> {
    /// `seed` keys every client stream: client `i` reads
    /// `stream(seed, randomizer.stream_tag(), i)`.
    pub fn new(records: &'a [ClientRecord], seed: u64) -> Self {
        Self { records, seed }
    }

    pub fn clients(&self) -> usize {
        self.records.len()
    }

    /// Report of client `index` under `randomizer`.
    pub fn query<R: LocalRandomizer + ?Sized>(&self, index: usize, randomizer: &R) -> Result<Vec<f64>> {
        let record = self.records.get(index).ok_or(Error::OutOfRange {
            element: index as u64,
            universe: self.records.len() as u64,
        })?;
        let mut rng = stream(self.seed, randomizer.stream_tag(), record.owner as u64);
        randomizer.respond(record, &mut rng)
    }

    /// Sum of all client reports under `randomizer`.
    pub fn aggregate<R: LocalRandomizer + ?Sized>(&self, randomizer: &R) -> Result<Vec<f64>> {
        if self.records.is_empty() {
            return Err(Error::EmptyResponses);
        }
        let len = randomizer.message_len();
        let partials: Vec<Vec<f64>> = self
            .records
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acc = vec![0.0; len];
                let mut buf = vec![0.0; len];
                for record in chunk {
                    let mut rng = stream(self.seed, randomizer.stream_tag(), record.owner as u64);
                    randomizer.respond_into(record, &mut rng, &mut buf)?;
                    for (a, x) in acc.iter_mut().zip(&buf) {
                        *a += x;
                    }
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let mut total = vec![0.0; len];
        for p in partials {
            for (t, x) in total.iter_mut().zip(&p) {
                *t += x;
            }
        }
        Ok(total)
    }
}

/// Most frequent non-empty vote with its count; lowest index on ties.
pub fn plurality(votes: &[Option<UniverseIndex>]) -> Option<(UniverseIndex, usize)> {
    let mut tally: std::collections::BTreeMap<UniverseIndex, usize> = Default::default();
    for v in votes.iter().flatten() {
        *tally.entry(*v).or_default() += 1;
    }
    // BTreeMap iterates in increasing index order; keep the first maximum.
    tally.into_iter().fold(None, |best, (idx, count)| match best {
        Some((_, c)) if c >= count => best,
        _ => Some((idx, count)),
    })
}
