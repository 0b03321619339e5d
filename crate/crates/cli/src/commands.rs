//! The `run`, `sweep`, `lowerbound` and `selftest` subcommands.

use std::io::Write;

use anyhow::Context;
use ldphh_core::harness::estimate_count_of_one;
use ldphh_core::rng::{derive_seed, StreamTag};
use ldphh_core::selftest::{faulty_solver, reference_solver, run_with_solver};
use ldphh_core::stats::median;
use ldphh_core::{generate, run_protocol, ClientRecord, DataGenSpec, Error, Mechanism, MechanismConfig, NoiseMode, PrivacyBudget, TranscriptSummary};
use rayon::prelude::*;

use crate::config::{read_elements, DataArg, ExperimentConfig};

pub const RUN_HEADER: [&str; 12] =
    ["mechanism", "n", "N", "epsilon", "delta", "beta", "seed", "reported_index", "true_hh_index", "deficit", "message_reals", "wall_ms"];

pub const LOWERBOUND_HEADER: [&str; 8] = ["mechanism", "n", "runs", "epsilon", "delta", "noise", "median_abs_error", "error_over_sqrt_n"];

pub const LOWERBOUND_CAVEAT: &str =
    "# evidence only: median errors of this artifact's mechanisms on uniform bits over N=2; says nothing about other mechanisms";

/// Distinguishes bad input (exit 2) from failed runs (exit 1).
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Failure(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(e) | CliError::Failure(e) => write!(f, "{e:#}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

pub fn failure(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Failure(e.into())
}

/// Runtime switches that are not part of a saved configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub noise: NoiseMode,
    pub jobs: Option<usize>,
}

impl RunOptions {
    fn mechanism_config(&self, config: &ExperimentConfig) -> MechanismConfig {
        MechanismConfig { noise: self.noise, ..config.mechanism_config() }
    }

    fn pool(&self) -> CliResult<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            b = b.num_threads(j);
        }
        b.build().map_err(failure)
    }
}

/// Seed of run `i` under `master`; data and protocol both derive from it.
pub fn run_seed(master: u64, i: usize) -> u64 {
    derive_seed(master, StreamTag::RunSeed, i as u64)
}

fn records_for(config: &ExperimentConfig, file: Option<&[u64]>, seed: u64) -> ldphh_core::Result<Vec<ClientRecord>> {
    match (config.data.kind(), file) {
        (Some(kind), _) => generate(&DataGenSpec { kind, n: config.n, universe: config.universe, seed }),
        (None, Some(elements)) => Ok(elements.iter().enumerate().map(|(i, &e)| ClientRecord::new(i, e)).collect()),
        (None, None) => unreachable!("file data is loaded before the run"),
    }
}

fn load_file(config: &mut ExperimentConfig) -> CliResult<Option<Vec<u64>>> {
    match &config.data {
        DataArg::File(path) => {
            let elements = read_elements(path).map_err(usage)?;
            if elements.is_empty() {
                return Err(usage(anyhow::anyhow!("{} holds no records", path.display())));
            }
            if let Some(&bad) = elements.iter().find(|&&e| e >= config.universe) {
                return Err(usage(Error::OutOfRange { element: bad, universe: config.universe }));
            }
            config.n = elements.len();
            Ok(Some(elements))
        }
        _ => Ok(None),
    }
}

/// Failure rows carry `failed:<reason>` as the reported index.
fn failure_marker(e: &Error) -> String {
    let reason = match e {
        Error::NoCandidate => "no-candidate",
        Error::EmptyResponses | Error::EmptyHistogram => "empty",
        _ => "error",
    };
    format!("failed:{reason}")
}

pub fn run_row(config: &ExperimentConfig, seed: u64, t: &TranscriptSummary) -> Vec<String> {
    let (reported, deficit) = match &t.result {
        Ok(r) => (r.index.to_string(), r.true_deficit.map_or_else(|| "NA".into(), |d| d.to_string())),
        Err(e) => (failure_marker(e), "NA".into()),
    };
    vec![
        t.mechanism.name().into(),
        config.n.to_string(),
        config.universe.to_string(),
        config.epsilon.to_string(),
        config.delta.to_string(),
        config.beta.to_string(),
        seed.to_string(),
        reported,
        t.true_hh.map_or_else(|| "NA".into(), |i| i.to_string()),
        deficit,
        t.per_client_message_reals.to_string(),
        format!("{:.3}", t.wall_time.as_secs_f64() * 1e3),
    ]
}

/// One row per seed, in seed order.
pub fn run_rows(config: &ExperimentConfig, options: &RunOptions) -> CliResult<Vec<Vec<String>>> {
    let mut config = config.clone();
    let file = load_file(&mut config)?;
    config.validate().map_err(usage)?;
    let budget = PrivacyBudget::new(config.epsilon, config.delta).map_err(usage)?;
    let mc = options.mechanism_config(&config);
    // Surface parameter problems (e.g. an impossible projection size) as
    // usage errors before spending any time.
    ldphh_core::harness::metering(config.mechanism, config.n, config.universe, &budget, config.beta, &mc).map_err(usage)?;
    let pool = options.pool()?;
    pool.install(|| {
        (0..config.seeds)
            .into_par_iter()
            .map(|i| {
                let seed = run_seed(config.master_seed, i);
                let records = records_for(&config, file.as_deref(), seed)?;
                let t = run_protocol(config.mechanism, &records, config.universe, &budget, config.beta, &mc, seed)?;
                Ok(run_row(&config, seed, &t))
            })
            .collect::<ldphh_core::Result<Vec<_>>>()
    })
    .map_err(failure)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    N,
    Universe,
    Epsilon,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::N => "n",
            SweepAxis::Universe => "N",
            SweepAxis::Epsilon => "epsilon",
        }
    }

    pub fn parse(s: &str) -> anyhow::Result<Self> {
        match s {
            "n" => Ok(SweepAxis::N),
            "N" => Ok(SweepAxis::Universe),
            "epsilon" => Ok(SweepAxis::Epsilon),
            _ => anyhow::bail!("unknown sweep axis '{s}' (expected n, N or epsilon)"),
        }
    }
}

pub fn sweep_rows(config: &ExperimentConfig, axis: SweepAxis, values: &[String], options: &RunOptions) -> CliResult<Vec<Vec<String>>> {
    if values.is_empty() {
        return Err(usage(anyhow::anyhow!("sweep needs at least one value")));
    }
    let grid = values
        .iter()
        .map(|v| {
            let mut c = config.clone();
            c.set(axis.name(), v)?;
            c.validate()?;
            Ok(c)
        })
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(usage)?;
    let mut rows = Vec::new();
    for c in &grid {
        for mut row in run_rows(c, options)? {
            row.push(axis.name().into());
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Median absolute error of the estimated count of element 1, per `n`.
pub fn lowerbound_rows(config: &ExperimentConfig, ns: &[usize], runs: usize, options: &RunOptions) -> CliResult<Vec<Vec<String>>> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(usage(anyhow::anyhow!("need a non-empty list of positive n")));
    }
    if runs == 0 {
        return Err(usage(anyhow::anyhow!("runs must be positive")));
    }
    if !matches!(config.mechanism, Mechanism::Jl | Mechanism::Naive) {
        return Err(usage(Error::NoFrequencyEstimate(config.mechanism.name())));
    }
    let budget = PrivacyBudget::new(config.epsilon, config.delta).map_err(usage)?;
    let mc = options.mechanism_config(config);
    let pool = options.pool()?;
    let mut rows = Vec::new();
    for &n in ns {
        // Same per-run seeds as the library's lower_bound_experiment, but
        // spread over the worker pool.
        let errors = pool
            .install(|| {
                (0..runs)
                    .into_par_iter()
                    .map(|r| {
                        let seed = derive_seed(config.master_seed, StreamTag::RunSeed, r as u64);
                        let records = generate(&DataGenSpec { kind: ldphh_core::DataKind::UniformBits, n, universe: 2, seed })?;
                        let truth = records.iter().filter(|r| r.element.get() == 1).count() as f64;
                        Ok((estimate_count_of_one(config.mechanism, &records, &budget, config.beta, &mc, seed)? - truth).abs())
                    })
                    .collect::<ldphh_core::Result<Vec<f64>>>()
            })
            .map_err(failure)?;
        let m = median(&errors).expect("runs > 0");
        rows.push(vec![
            config.mechanism.name().into(),
            n.to_string(),
            runs.to_string(),
            config.epsilon.to_string(),
            config.delta.to_string(),
            if options.noise == NoiseMode::Off { "off".into() } else { "on".into() },
            format!("{m:.6}"),
            format!("{:.6}", m / (n as f64).sqrt()),
        ]);
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(out: W, preamble: Option<&str>, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut out = out;
    if let Some(p) = preamble {
        writeln!(out, "{p}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().context("writing CSV")?;
    Ok(())
}

/// Runs every suite and prints one summary line each. `Ok(true)` iff all
/// passed.
pub fn selftest<W: Write>(out: &mut W, inject_fault: bool, seed: u64) -> anyhow::Result<bool> {
    let solver = if inject_fault { faulty_solver } else { reference_solver };
    let reports = run_with_solver(solver, seed);
    for r in &reports {
        writeln!(out, "{}", r.summary_line())?;
        for f in r.failures.iter().take(3) {
            writeln!(out, "#   {}", f.replace('\n', " "))?;
        }
    }
    let ok = reports.iter().all(|r| r.passed());
    writeln!(out, "selftest status={}", if ok { "pass" } else { "fail" })?;
    Ok(ok)
}
