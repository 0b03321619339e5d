use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ldphh_cli::commands::{
    failure, lowerbound_rows, run_rows, selftest, sweep_rows, usage, write_csv, CliResult, RunOptions, SweepAxis, LOWERBOUND_CAVEAT,
    LOWERBOUND_HEADER, RUN_HEADER,
};
use ldphh_cli::config::{parse_k1_rule, DataArg, ExperimentConfig};
use ldphh_core::{Gamma, Mechanism, Neighboring, NoiseMode};

/// Simulator for heavy-hitter protocols in the local model of differential
/// privacy. Universe elements are 0-based.
#[derive(Parser, Debug)]
#[command(name = "ldphh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One CSV row per seed.
    Run(ExperimentArgs),
    /// Runs the cross product of seeds and the values of one axis.
    Sweep {
        #[command(flatten)]
        args: ExperimentArgs,
        /// n, N or epsilon.
        #[arg(long)]
        axis: String,
        /// Comma-separated values for the axis.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// Median frequency-estimation error on uniform bits over N=2.
    Lowerbound {
        #[command(flatten)]
        args: ExperimentArgs,
        /// Comma-separated database sizes.
        #[arg(long, value_delimiter = ',', default_values_t = [100usize, 400, 1600])]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        runs: usize,
    },
    /// Runs the built-in property suites.
    Selftest {
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// key=value file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// jl, glps, bucket or naive.
    #[arg(long)]
    mechanism: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Universe size.
    #[arg(long = "N")]
    universe: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// planted:IDX:COUNT, zipf:A, uniformbits or file:PATH.
    #[arg(long)]
    data: Option<String>,
    /// Number of seeded runs.
    #[arg(long)]
    seeds: Option<usize>,
    /// Overridden by LDPHH_SEED when set.
    #[arg(long)]
    master_seed: Option<u64>,
    /// Projection distortion for jl.
    #[arg(long, conflicts_with = "paper_gamma")]
    gamma: Option<f64>,
    /// Use gamma = 1/n^2 (huge projections; small n only).
    #[arg(long)]
    paper_gamma: bool,
    /// Fixed sparsity for glps instead of the tuned value.
    #[arg(long)]
    sparsity: Option<usize>,
    /// Odd number of glps repeats.
    #[arg(long)]
    repeats: Option<usize>,
    /// Hashes per bucket trial: twelve-n or unique.
    #[arg(long)]
    k1_rule: Option<String>,
    /// Calibrate for replacement neighbours (doubles sensitivities).
    #[arg(long)]
    replacement_dp: bool,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Turn all noise off. The output is NOT private.
    #[arg(long)]
    unsafe_no_noise: bool,
}

impl ExperimentArgs {
    fn resolve(&self) -> CliResult<(ExperimentConfig, RunOptions)> {
        let mut c = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| usage(anyhow::anyhow!("reading {}: {e}", path.display())))?;
            c.merge_text(&text).map_err(usage)?;
        }
        if let Some(m) = &self.mechanism {
            c.mechanism = m.parse::<Mechanism>().map_err(usage)?;
        }
        macro_rules! take {
            ($($field:ident => $target:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    c.$target = v;
                }
            )*};
        }
        take!(n => n, universe => universe, epsilon => epsilon, delta => delta, beta => beta, seeds => seeds, master_seed => master_seed, repeats => repeats);
        if let Some(d) = &self.data {
            c.data = d.parse::<DataArg>().map_err(usage)?;
        }
        if let Some(g) = self.gamma {
            c.gamma = Gamma::Fixed(g);
        }
        if self.paper_gamma {
            c.gamma = Gamma::InverseSquareN;
        }
        if let Some(s) = self.sparsity {
            c.sparsity = Some(s);
        }
        if let Some(k) = &self.k1_rule {
            c.k1_rule = parse_k1_rule(k).map_err(usage)?;
        }
        if self.replacement_dp {
            c.neighboring = Neighboring::Replacement;
        }
        if let Some(o) = &self.out {
            c.out = Some(o.clone());
        }
        if let Ok(s) = std::env::var("LDPHH_SEED") {
            c.master_seed = s.trim().parse().map_err(|_| usage(anyhow::anyhow!("LDPHH_SEED must be an unsigned integer, got '{s}'")))?;
        }
        if self.jobs == Some(0) {
            return Err(usage(anyhow::anyhow!("jobs must be positive")));
        }
        let noise = if self.unsafe_no_noise {
            eprintln!("warning: --unsafe-no-noise set; results are NOT differentially private");
            NoiseMode::Off
        } else {
            NoiseMode::Calibrated
        };
        Ok((c, RunOptions { noise, jobs: self.jobs }))
    }
}

fn emit(config: &ExperimentConfig, preamble: Option<&str>, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    match &config.out {
        Some(path) => {
            let f = File::create(path).map_err(|e| failure(anyhow::anyhow!("creating {}: {e}", path.display())))?;
            write_csv(BufWriter::new(f), preamble, header, rows).map_err(failure)
        }
        None => write_csv(io::stdout().lock(), preamble, header, rows).map_err(failure),
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(args) => {
            let (config, options) = args.resolve()?;
            let rows = run_rows(&config, &options)?;
            emit(&config, None, &RUN_HEADER, &rows)
        }
        Command::Sweep { args, axis, values } => {
            let (config, options) = args.resolve()?;
            let axis = SweepAxis::parse(&axis).map_err(usage)?;
            let rows = sweep_rows(&config, axis, &values, &options)?;
            let mut header = RUN_HEADER.to_vec();
            header.push("sweep_axis");
            emit(&config, None, &header, &rows)
        }
        Command::Lowerbound { args, ns, runs } => {
            let (mut config, options) = args.resolve()?;
            config.universe = 2;
            let rows = lowerbound_rows(&config, &ns, runs, &options)?;
            emit(&config, Some(LOWERBOUND_CAVEAT), &LOWERBOUND_HEADER, &rows)
        }
        Command::Selftest { inject_fault, seed } => {
            let inject = match inject_fault.as_deref() {
                None => false,
                Some("gf2") => true,
                Some(other) => return Err(usage(anyhow::anyhow!("unknown fault '{other}'"))),
            };
            let mut out = io::stdout().lock();
            let ok = selftest(&mut out, inject, seed).map_err(failure)?;
            out.flush().map_err(failure)?;
            if ok {
                Ok(())
            } else {
                Err(failure(anyhow::anyhow!("self-test failed")))
            }
        }
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors by itself.
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
