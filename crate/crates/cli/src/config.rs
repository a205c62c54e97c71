//! Run configuration: an optional JSON file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::Usage;

/// Options shared by every command. Each may also come from `--config`.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Pair potential: `lj` or `morse:a=<float>`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    /// Model: `a`, `cb` or `qnl` (comma list for `stability` and `critical`).
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Geometry: `linear` or `circular`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    /// Atom counts: `64`, `32,64,128` or `start:stop:step`.
    #[arg(long = "N", alias = "n", global = true)]
    #[serde(rename = "N", alias = "n", skip_serializing_if = "Option::is_none")]
    pub n: Option<String>,
    /// Strains: a value, a comma list or `start:stop:step`.
    #[arg(long = "F", alias = "f", global = true, allow_hyphen_values = true)]
    #[serde(rename = "F", alias = "f", skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    /// Bond-angle weights (list syntax as for F).
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
    /// QNL interface index K (default N/2).
    #[arg(long = "K", alias = "k", global = true)]
    #[serde(rename = "K", alias = "k", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Restrict displacements to the chain axis (linear chains only).
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub constrained: bool,
    /// Load profile for sweeps: `trig:<k1>,<k2>`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub load: Option<String>,
    /// CSV output path (default stdout).
    #[arg(long, short, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// JSON report path.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    /// Sweep: only the ghost-force norms.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub ghost_only: bool,
    /// Sweep: solve through indefinite Hessians and flag them.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub allow_indefinite: bool,
    /// Sweep: also report the numeric stability constant.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub gamma_numeric: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Usage(format!("config {}: {e}", path.display())).into())
    }

    /// `self` with every option set in `flags` taking precedence.
    pub fn overlay(mut self, flags: &RunConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if flags.$f.is_some() { self.$f = flags.$f.clone(); } )* };
        }
        take!(potential, model, kind, n, f, alpha, k, load, output, report);
        self.constrained |= flags.constrained;
        self.ghost_only |= flags.ghost_only;
        self.allow_indefinite |= flags.allow_indefinite;
        self.gamma_numeric |= flags.gamma_numeric;
        self
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Values from `a`, `a,b,c` or `start:stop:step` (stop included within half a step).
pub fn parse_reals(s: &str) -> Result<Vec<f64>, Usage> {
    let bad = |why: &str| Usage(format!("bad value list '{s}': {why}"));
    let s = s.trim();
    if s.contains(':') {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad("not a number")))
            .collect::<Result<_, _>>()?;
        let [a, b, h] = parts[..] else { return Err(bad("expected start:stop:step")) };
        if !(h > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let count = ((b - a) / h + 0.5).floor() as usize;
        if count > 1_000_000 {
            return Err(bad("too many points"));
        }
        // generated from the index to avoid accumulated drift
        Ok((0..=count).map(|i| a + i as f64 * h).collect())
    } else {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad("not a number")))
            .collect::<Result<_, _>>()?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(bad("non-finite value"));
        }
        Ok(v)
    }
}

pub fn parse_counts(s: &str) -> Result<Vec<usize>, Usage> {
    let v = parse_reals(s)?;
    v.into_iter()
        .map(|x| {
            if x.fract() == 0.0 && x >= 4.0 {
                Ok(x as usize)
            } else {
                Err(Usage(format!("N must be an integer >= 4, got {x}")))
            }
        })
        .collect()
}
