//! Experiment plumbing: a serialisable run configuration, report tables that
//! go to CSV or JSON, and the runner behind every CLI subcommand.

mod archive;
mod run;

pub use archive::*;
pub use run::*;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fourier::MomentumGrid;
use crate::lattice::Boundary;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "LACELAB_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(LabError::InvalidArgument(format!("unknown format '{s}' (csv|json)"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

/// Parse `a:b:n` into n evenly spaced points from a to b inclusive.
pub fn parse_p_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || LabError::InvalidArgument(format!("p-grid '{s}' is not of the form a:b:n"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    match n {
        0 => Err(bad()),
        1 => Ok(vec![a]),
        _ => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: String,
    pub dim: usize,
    pub side: u64,
    pub boundary: Boundary,
    pub p_grid: Vec<f64>,
    pub n_samples: u64,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    pub threads: usize,
    pub k_grid: MomentumGrid,
    pub out: PathBuf,
    pub format: Format,
    /// subcommand-specific options, kept as text so the config round-trips
    #[serde(default)]
    pub options: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn new(command: &str) -> Self {
        ExperimentConfig {
            command: command.into(),
            dim: 2,
            side: 16,
            boundary: Boundary::Torus,
            p_grid: vec![0.5],
            n_samples: 10_000,
            seed: 1,
            stream: 0,
            threads: 1,
            k_grid: MomentumGrid::Axis,
            out: default_out_dir(command),
            format: Format::Csv,
            options: BTreeMap::new(),
        }
    }

    /// Every field problem at once, as one usage error.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !COMMANDS.contains(&self.command.as_str()) {
            problems.push(format!("command: unknown subcommand '{}'", self.command));
        }
        if self.dim == 0 {
            problems.push("dim: must be positive".to_string());
        }
        if self.side < 2 {
            problems.push(format!("side: must be at least 2, got {}", self.side));
        }
        if self.p_grid.is_empty() {
            problems.push("p: need at least one density".to_string());
        }
        for p in &self.p_grid {
            if !(0.0..=1.0).contains(p) || p.is_nan() {
                problems.push(format!("p: {p} outside [0,1]"));
            }
        }
        if self.n_samples == 0 {
            problems.push("samples: must be positive".to_string());
        }
        if self.threads == 0 {
            problems.push("threads: must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(LabError::InvalidArgument(problems.join("; ")))
        }
    }

    pub fn option<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.options.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| LabError::InvalidArgument(format!("option {key}: cannot parse '{v}'"))),
        }
    }

    /// Configs that may be pooled: equal apart from seed, stream and output.
    pub fn compatible(&self, other: &ExperimentConfig) -> bool {
        let strip = |c: &ExperimentConfig| {
            let mut c = c.clone();
            c.seed = 0;
            c.stream = 0;
            c.out = PathBuf::new();
            c.threads = 1;
            c
        };
        strip(self) == strip(other)
    }
}

pub const COMMANDS: &[&str] = &[
    "two-point",
    "diagrams",
    "rw-integrals",
    "pi-coefficients",
    "oze-check",
    "bounds-check",
    "bootstrap-scan",
    "ir-bound",
    "pc-scan",
    "gamma-fit",
    "oracle-enum",
    "merge",
];

/// `$LACELAB_OUT/<command>` or `results/<command>`.
pub fn default_out_dir(command: &str) -> PathBuf {
    let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("results"));
    root.join(command)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_parse() {
        assert_eq!(parse_p_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_p_grid("0.2:0.9:1").unwrap(), vec![0.2]);
        assert!(parse_p_grid("0:1").is_err());
        assert!(parse_p_grid("0:1:0").is_err());
        assert!("xml".parse::<Format>().is_err());
    }

    #[test]
    fn config_round_trips_and_validates() {
        let mut c = ExperimentConfig::new("two-point");
        c.p_grid = vec![0.1, 0.30000000000000004];
        c.options.insert("order".into(), "3".into());
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert!(c.validate().is_ok());
        c.p_grid = vec![1.5];
        c.n_samples = 0;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("p:") && err.contains("samples:"), "{err}");
        assert_eq!(back.option("order", 1usize).unwrap(), 3);
        assert!(back.option::<usize>("missing", 7).unwrap() == 7);
    }

    #[test]
    fn compatibility_ignores_seed() {
        let a = ExperimentConfig::new("two-point");
        let mut b = a.clone();
        b.seed = 99;
        assert!(a.compatible(&b));
        b.dim = 3;
        assert!(!a.compatible(&b));
    }
}
