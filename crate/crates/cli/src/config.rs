//! Flat `key = value` configuration files.
//!
//! Lines are `key = value`; `#` starts a comment. Every key has a fixed type
//! and a set of experiments that accept it; anything else is rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    Tails,
    Coupling,
    Spectral,
    Converge,
    Kinetic,
    Fracdiff,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Tails => "tails",
            Experiment::Coupling => "coupling",
            Experiment::Spectral => "spectral",
            Experiment::Converge => "converge",
            Experiment::Kinetic => "kinetic",
            Experiment::Fracdiff => "fracdiff",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    U64,
    Count,
    Real,
    Bool,
    Word,
    Counts,
    Reals,
}

use Experiment::*;
use Kind::*;

const ALL: &[Experiment] = &[Tails, Coupling, Spectral, Converge, Kinetic, Fracdiff];

/// The schema: key, type, experiments accepting it.
const SCHEMA: &[(&str, Kind, &[Experiment])] = &[
    ("experiment", Word, ALL),
    ("model", Word, ALL),
    ("alpha", Real, ALL),
    ("symmetric", Bool, ALL),
    ("seed", U64, ALL),
    ("output_dir", Word, ALL),
    ("workers", Count, ALL),
    ("N_schedule", Counts, &[Converge, Kinetic]),
    ("replicas", Count, &[Converge]),
    ("samples", Count, &[Tails]),
    ("lambdas", Reals, &[Tails]),
    ("hill_orders", Counts, &[Tails]),
    ("blocks", Count, &[Coupling]),
    ("j_max", Count, &[Coupling]),
    ("regen_paths", Count, &[Coupling]),
    ("regen_n_max", Count, &[Coupling]),
    ("theta_steps", Count, &[Coupling]),
    ("grid_sizes", Counts, &[Spectral]),
    ("tol", Real, &[Spectral]),
    ("path_length", Count, &[Spectral]),
    ("paths", Count, &[Spectral, Kinetic]),
    ("mode", Word, &[Converge]),
    ("centering", Word, &[Converge]),
    ("mean", Real, &[Converge]),
    ("pre_centered", Bool, &[Converge]),
    ("weights", Word, &[Converge]),
    ("step_budget", U64, &[Converge]),
    ("t", Real, &[Converge, Kinetic, Fracdiff]),
    ("x_probes", Reals, &[Kinetic]),
    ("k_count", Count, &[Kinetic]),
    ("width", Real, &[Kinetic, Fracdiff]),
    ("grid_points", Count, &[Kinetic, Fracdiff]),
    ("half_width", Real, &[Kinetic, Fracdiff]),
    ("diffusivity", Real, &[Fracdiff]),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: String) -> Result<T, ConfigError> {
    Err(ConfigError(msg))
}

/// A validated configuration: every key is known and its value parses.
#[derive(Debug, Clone)]
pub struct Config {
    pub experiment: Experiment,
    entries: BTreeMap<String, String>,
}

fn check(key: &str, kind: Kind, value: &str) -> Result<(), ConfigError> {
    let bad = |what: &str| err(format!("key `{key}`: `{value}` is not {what}"));
    let ok = match kind {
        U64 => value.parse::<u64>().is_ok(),
        Count => value.parse::<usize>().is_ok(),
        Real => value.parse::<f64>().map(f64::is_finite).unwrap_or(false),
        Bool => matches!(value, "true" | "false"),
        Word => !value.is_empty() && !value.contains(char::is_whitespace),
        Counts => split_list(value).all(|v| v.parse::<usize>().is_ok()) && split_list(value).next().is_some(),
        Reals => split_list(value).all(|v| v.parse::<f64>().map(f64::is_finite).unwrap_or(false)) && split_list(value).next().is_some(),
    };
    if ok {
        Ok(())
    } else {
        bad(match kind {
            U64 | Count => "a non-negative integer",
            Real => "a finite real",
            Bool => "true or false",
            Word => "a single word",
            Counts => "a comma-separated list of non-negative integers",
            Reals => "a comma-separated list of reals",
        })
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl Config {
    pub fn parse(text: &str, experiment: Experiment) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("line {}: expected `key = value`", no + 1));
            };
            let (k, v) = (k.trim(), v.trim());
            let Some((_, kind, allowed)) = SCHEMA.iter().find(|(name, _, _)| *name == k) else {
                return err(format!("unknown key `{k}`"));
            };
            if !allowed.contains(&experiment) {
                return err(format!("key `{k}` is not used by the {} experiment", experiment.name()));
            }
            check(k, *kind, v)?;
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return err(format!("key `{k}` given twice"));
            }
        }
        if let Some(e) = entries.get("experiment") {
            if e != experiment.name() {
                return err(format!("key `experiment`: file is for `{e}`, invoked as `{}`", experiment.name()));
            }
        }
        Ok(Self { experiment, entries })
    }

    pub fn load(path: &Path, experiment: Experiment) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, experiment)
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.entries.insert(key.to_string(), value);
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key).ok_or_else(|| ConfigError(format!("missing required key `{key}`")))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> u64 {
        self.raw(key).map(|v| v.parse().expect("validated")).unwrap_or(default)
    }

    pub fn count_or(&self, key: &str, default: usize) -> usize {
        self.raw(key).map(|v| v.parse().expect("validated")).unwrap_or(default)
    }

    pub fn real_or(&self, key: &str, default: f64) -> f64 {
        self.raw(key).map(|v| v.parse().expect("validated")).unwrap_or(default)
    }

    pub fn bool_or(&self, key: &str, default: bool) -> bool {
        self.raw(key).map(|v| v == "true").unwrap_or(default)
    }

    pub fn word_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }

    pub fn counts_or(&self, key: &str, default: &[usize]) -> Vec<usize> {
        self.raw(key).map(|v| split_list(v).map(|s| s.parse().expect("validated")).collect()).unwrap_or_else(|| default.to_vec())
    }

    pub fn reals_or(&self, key: &str, default: &[f64]) -> Vec<f64> {
        self.raw(key).map(|v| split_list(v).map(|s| s.parse().expect("validated")).collect()).unwrap_or_else(|| default.to_vec())
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        Ok(self.require("seed")?.parse().expect("validated"))
    }

    /// `OUTPUT_DIR` from the environment, else `output_dir`, else `out`.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os("OUTPUT_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(self.word_or("output_dir", "out")))
    }
}
