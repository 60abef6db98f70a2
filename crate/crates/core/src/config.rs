//! Run configuration: one TOML file describes a model, a d-sequence, and
//! the numerical budgets of a run. Reproducibility-first: the canonical
//! serialization of a config is hashed, and every output file carries the
//! hash, so identical configs are guaranteed identical outputs.

use serde::{Deserialize, Serialize};

use crate::dseq::DSequence;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, QueueClass};

use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub dsequence: DSequenceConfig,
    #[serde(default)]
    pub truncation: TruncationConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Either a named preset (a bare string) or an explicit sequence block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DSequenceConfig {
    Preset(String),
    Explicit(DSequence),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationConfig {
    pub n_initial: usize,
    /// Sup-norm tolerance for the doubling check of the limiting curves.
    pub tolerance: f64,
    pub n_cap: usize,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig { n_initial: 155, tolerance: 1e-4, n_cap: 4096 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Local error per unit time.
    pub tol: f64,
    /// Mixing horizon: limiting curves are read off `[t*, t*+1]`.
    pub t_star: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-10, t_star: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub paths: usize,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { paths: 10_000, seed: 20_24 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: PathBuf::from("out") }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(s).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Shipped model presets: `case-<i|ii|iii|iv>-<10|20|50>` select the
    /// queue class and the arrival level of the worked examples, with the
    /// matching d-sequence preset.
    pub fn preset(name: &str) -> Result<Self> {
        let mut parts = name.rsplitn(2, '-');
        let level: f64 = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?;
        let class = match parts.next() {
            Some("case-i") => QueueClass::Bd,
            Some("case-ii") => QueueClass::BatchArrival,
            Some("case-iii") => QueueClass::BatchService,
            Some("case-iv") => QueueClass::BatchBoth,
            _ => return Err(Error::Config(format!("unknown preset {name:?}"))),
        };
        if ![10.0, 20.0, 50.0].contains(&level) {
            return Err(Error::Config(format!(
                "preset level must be 10, 20 or 50, got {level}"
            )));
        }
        let cfg = RunConfig {
            model: ModelSpec::paper_case(class, level),
            dsequence: DSequenceConfig::Preset("paper-s100".into()),
            truncation: TruncationConfig::default(),
            solver: SolverConfig::default(),
            simulation: SimulationConfig::default(),
            output: OutputConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_dsequence(&self) -> Result<DSequence> {
        match &self.dsequence {
            DSequenceConfig::Explicit(d) => Ok(d.clone()),
            DSequenceConfig::Preset(name) => match name.as_str() {
                "paper-s100" => Ok(DSequence::paper_s100()),
                "all-ones" => Ok(DSequence::all_ones()),
                other => Err(Error::Config(format!("unknown d-sequence preset {other:?}"))),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.resolve_dsequence()?;
        let t = &self.truncation;
        if t.n_initial < 1 || t.n_initial > t.n_cap {
            return Err(Error::Config("need 1 <= n_initial <= n_cap".into()));
        }
        if !(t.tolerance > 0.0) {
            return Err(Error::Config("truncation tolerance must be positive".into()));
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        if self.solver.t_star < 0.0 {
            return Err(Error::Config("t_star must be >= 0".into()));
        }
        if self.simulation.paths < 1 {
            return Err(Error::Config("need at least one simulation path".into()));
        }
        Ok(())
    }

    /// FNV-1a hash of the canonical serialization, as fixed-width hex.
    pub fn hash(&self) -> String {
        const OFFSET: u64 = 0xcbf29ce484222325;
        const PRIME: u64 = 0x100000001b3;
        let mut h = OFFSET;
        for b in self.to_toml_string().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
        format!("{h:016x}")
    }
}
