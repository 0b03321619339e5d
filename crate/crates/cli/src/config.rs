//! Experiment configuration: flat `key=value` files plus flag overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use ldphh_core::{DataKind, Gamma, K1Rule, Mechanism, Neighboring};

/// `--data` values: `planted:IDX:COUNT`, `zipf:A`, `uniformbits` or
/// `file:PATH`. A data file lists one 0-based element per line; blank lines
/// and lines starting with `#` are skipped.
#[derive(Debug, Clone, PartialEq)]
pub enum DataArg {
    Planted { index: u64, count: usize },
    Zipf(f64),
    UniformBits,
    File(PathBuf),
}

impl FromStr for DataArg {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let mut parts = s.splitn(3, ':');
        match (parts.next(), parts.next(), parts.next()) {
            (Some("planted"), Some(i), Some(c)) => Ok(DataArg::Planted {
                index: i.parse().with_context(|| format!("bad planted index '{i}'"))?,
                count: c.parse().with_context(|| format!("bad planted count '{c}'"))?,
            }),
            (Some("zipf"), Some(a), None) => Ok(DataArg::Zipf(a.parse().with_context(|| format!("bad Zipf exponent '{a}'"))?)),
            (Some("uniformbits"), None, None) => Ok(DataArg::UniformBits),
            (Some("file"), Some(_), _) => Ok(DataArg::File(PathBuf::from(&s["file:".len()..]))),
            _ => bail!("unrecognised data spec '{s}' (expected planted:IDX:COUNT, zipf:A, uniformbits or file:PATH)"),
        }
    }
}

impl fmt::Display for DataArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataArg::Planted { index, count } => write!(f, "planted:{index}:{count}"),
            DataArg::Zipf(a) => write!(f, "zipf:{a}"),
            DataArg::UniformBits => f.write_str("uniformbits"),
            DataArg::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl DataArg {
    /// Generator kind; `None` for file data.
    pub fn kind(&self) -> Option<DataKind> {
        match self {
            DataArg::Planted { index, count } => Some(DataKind::Planted { hh_index: *index, hh_count: *count }),
            DataArg::Zipf(a) => Some(DataKind::Zipf { exponent: *a }),
            DataArg::UniformBits => Some(DataKind::UniformBits),
            DataArg::File(_) => None,
        }
    }
}

pub fn read_elements(path: &Path) -> anyhow::Result<Vec<u64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| l.parse::<u64>().with_context(|| format!("{}:{}: not an element index: '{l}'", path.display(), i + 1)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mechanism: Mechanism,
    pub n: usize,
    pub universe: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub beta: f64,
    pub data: DataArg,
    pub seeds: usize,
    pub master_seed: u64,
    pub gamma: Gamma,
    pub sparsity: Option<usize>,
    pub repeats: usize,
    pub k1_rule: K1Rule,
    pub neighboring: Neighboring,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mechanism: Mechanism::Jl,
            n: 1000,
            universe: 64,
            epsilon: 1.0,
            delta: 1e-5,
            beta: 0.1,
            data: DataArg::Zipf(2.0),
            seeds: 1,
            master_seed: 0,
            gamma: Gamma::default(),
            sparsity: None,
            repeats: 1,
            k1_rule: K1Rule::default(),
            neighboring: Neighboring::default(),
            out: None,
        }
    }
}

fn k1_name(rule: K1Rule) -> &'static str {
    match rule {
        K1Rule::TwelveN => "twelve-n",
        K1Rule::UniqueSignature => "unique",
    }
}

pub fn parse_k1_rule(s: &str) -> anyhow::Result<K1Rule> {
    match s {
        "twelve-n" => Ok(K1Rule::TwelveN),
        "unique" => Ok(K1Rule::UniqueSignature),
        _ => bail!("unknown k1 rule '{s}' (expected twelve-n or unique)"),
    }
}

fn neighboring_name(n: Neighboring) -> &'static str {
    match n {
        Neighboring::AddRemove => "add-remove",
        Neighboring::Replacement => "replacement",
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> anyhow::Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    value.parse().with_context(|| format!("bad value for {key}: '{value}'"))
}

impl ExperimentConfig {
    /// Flat `key=value` text, one key per line.
    pub fn emit(&self) -> String {
        let gamma = match self.gamma {
            Gamma::Fixed(g) => g.to_string(),
            Gamma::InverseSquareN => "paper".into(),
        };
        let lines = [
            ("mechanism", self.mechanism.name().to_string()),
            ("n", self.n.to_string()),
            ("N", self.universe.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("delta", self.delta.to_string()),
            ("beta", self.beta.to_string()),
            ("data", self.data.to_string()),
            ("seeds", self.seeds.to_string()),
            ("master_seed", self.master_seed.to_string()),
            ("gamma", gamma),
            ("sparsity", self.sparsity.map_or_else(|| "auto".into(), |s| s.to_string())),
            ("repeats", self.repeats.to_string()),
            ("k1_rule", k1_name(self.k1_rule).into()),
            ("neighboring", neighboring_name(self.neighboring).into()),
            ("out", self.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
        ];
        lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        match key {
            "mechanism" => self.mechanism = value.parse().map_err(|e| anyhow!("{e}"))?,
            "n" => self.n = parse_num(key, value)?,
            "N" => self.universe = parse_num(key, value)?,
            "epsilon" => self.epsilon = parse_num(key, value)?,
            "delta" => self.delta = parse_num(key, value)?,
            "beta" => self.beta = parse_num(key, value)?,
            "data" => self.data = value.parse()?,
            "seeds" => self.seeds = parse_num(key, value)?,
            "master_seed" => self.master_seed = parse_num(key, value)?,
            "gamma" => {
                self.gamma = if value == "paper" { Gamma::InverseSquareN } else { Gamma::Fixed(parse_num(key, value)?) }
            }
            "sparsity" => self.sparsity = if value == "auto" { None } else { Some(parse_num(key, value)?) },
            "repeats" => self.repeats = parse_num(key, value)?,
            "k1_rule" => self.k1_rule = parse_k1_rule(value)?,
            "neighboring" => {
                self.neighboring = match value {
                    "add-remove" => Neighboring::AddRemove,
                    "replacement" => Neighboring::Replacement,
                    _ => bail!("unknown neighboring '{value}' (expected add-remove or replacement)"),
                }
            }
            "out" => self.out = if value.is_empty() { None } else { Some(PathBuf::from(value)) },
            _ => bail!("unknown config key '{key}'"),
        }
        Ok(())
    }

    /// Applies a config file on top of `self`.
    pub fn merge_text(&mut self, text: &str) -> anyhow::Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected key=value, got '{line}'", i + 1))?;
            self.set(k.trim(), v.trim()).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut c = Self::default();
        c.merge_text(text)?;
        Ok(c)
    }

    /// Parameter checks that do not need the data.
    pub fn validate(&self) -> anyhow::Result<()> {
        ldphh_core::PrivacyBudget::new(self.epsilon, self.delta)?;
        ldphh_core::domain::check_universe(self.universe)?;
        ldphh_core::domain::check_beta(self.beta)?;
        if self.n == 0 && !matches!(self.data, DataArg::File(_)) {
            bail!("n must be positive");
        }
        if self.seeds == 0 {
            bail!("seeds must be positive");
        }
        if self.repeats == 0 || self.repeats.is_multiple_of(2) {
            bail!("repeats must be a positive odd number, got {}", self.repeats);
        }
        if let Gamma::Fixed(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                bail!("gamma must lie in (0, 1), got {g}");
            }
        }
        if self.sparsity == Some(0) {
            bail!("sparsity must be positive");
        }
        match &self.data {
            DataArg::Planted { index, count } => {
                if *index >= self.universe {
                    bail!("planted index {index} is outside the universe of size {}", self.universe);
                }
                if *count > self.n {
                    bail!("planted count {count} exceeds n = {}", self.n);
                }
            }
            DataArg::Zipf(a) if !(a.is_finite() && *a >= 0.0) => bail!("Zipf exponent must be non-negative, got {a}"),
            DataArg::UniformBits if self.universe != 2 => bail!("uniformbits needs N = 2"),
            _ => {}
        }
        Ok(())
    }

    pub fn mechanism_config(&self) -> ldphh_core::MechanismConfig {
        ldphh_core::MechanismConfig {
            gamma: self.gamma,
            sparsity: self.sparsity,
            repeats: self.repeats,
            k1_rule: self.k1_rule,
            neighboring: self.neighboring,
            ..Default::default()
        }
    }
}
