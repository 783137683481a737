//! TOML run configuration, schema validation with key paths, and hashing.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use congestion_core::experiments::{GammaSweepPlan, Scenario};
use congestion_core::grid::{Grid, MIN_CELLS};
use congestion_core::potential::{Mode, PotentialSpec};
use congestion_core::profiles::InitialData;
use congestion_core::solver::SolverConfig;

/// A schema or semantic error located by its dotted key path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub dim: usize,
    pub n_cells: usize,
    #[serde(default = "unit_length")]
    pub length: f64,
}

fn unit_length() -> f64 {
    1.0
}

/// A single exponent or an increasing list of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaValue {
    Single(f64),
    List(Vec<f64>),
}

impl GammaValue {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GammaValue::Single(g) => vec![*g],
            GammaValue::List(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumBlock {
    pub gamma: GammaValue,
    pub nu: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialBlock {
    #[serde(default)]
    pub modes: Vec<Mode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub horizon: f64,
    /// Number of sample intervals over `[0, horizon]`.
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    /// Write a checkpoint every this many samples; 0 writes only the final one.
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Write density fields in the binary layout.
    #[serde(default = "yes")]
    pub fields: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: None, checkpoint_every: 0, fields: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridBlock,
    pub medium: MediumBlock,
    #[serde(default)]
    pub potential: PotentialBlock,
    pub initial: InitialData,
    pub time: TimeBlock,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Turns `missing field `x`` at path `a` into path `a.x`.
fn issue_from_toml(path: String, message: String) -> ConfigIssue {
    let mut path = if path == "." { String::new() } else { path };
    if let Some(rest) = message.strip_prefix("missing field `") {
        if let Some(field) = rest.split('`').next() {
            if !path.is_empty() {
                path.push('.');
            }
            path.push_str(field);
        }
    }
    ConfigIssue { path, message: message.lines().next().unwrap_or_default().to_string() }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, Vec<ConfigIssue>> {
        let de = toml::Deserializer::new(text);
        match serde_path_to_error::deserialize::<_, RunConfig>(de) {
            Ok(cfg) => {
                let issues = cfg.validate();
                if issues.is_empty() {
                    Ok(cfg)
                } else {
                    Err(issues)
                }
            }
            Err(e) => {
                let path = e.path().to_string();
                let message = e.into_inner().message().to_string();
                Err(vec![issue_from_toml(path, message)])
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self, Vec<ConfigIssue>> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            vec![ConfigIssue { path: String::new(), message: format!("cannot read {}: {e}", path.display()) }]
        })?;
        Self::parse(&text)
    }

    /// Every semantic problem, each with its key path.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut push = |path: &str, message: String| issues.push(ConfigIssue { path: path.into(), message });
        let g = &self.grid;
        if !(g.dim == 1 || g.dim == 2) {
            push("grid.dim", format!("must be 1 or 2, got {}", g.dim));
        }
        if g.n_cells < MIN_CELLS {
            push("grid.n_cells", format!("must be at least {}, got {}", MIN_CELLS, g.n_cells));
        }
        if !(g.length.is_finite() && g.length > 0.0) {
            push("grid.length", format!("must be positive, got {}", g.length));
        }
        let gammas = self.medium.gamma.values();
        if gammas.is_empty() {
            push("medium.gamma", "list is empty".into());
        }
        if gammas.iter().any(|&v| !(v.is_finite() && v > 1.0)) {
            push("medium.gamma", "every gamma must be finite and > 1".into());
        }
        if gammas.windows(2).any(|w| w[1] <= w[0]) {
            push("medium.gamma", "list must be strictly increasing".into());
        }
        if !(self.medium.nu.is_finite() && self.medium.nu >= 0.0) {
            push("medium.nu", format!("must be >= 0, got {}", self.medium.nu));
        }
        if !(self.time.horizon.is_finite() && self.time.horizon >= 0.0) {
            push("time.horizon", format!("must be >= 0, got {}", self.time.horizon));
        }
        if self.time.samples == 0 {
            push("time.samples", "must be at least 1".into());
        }
        if let Err(e) = self.solver.validate() {
            push("solver", e.to_string());
        }
        if g.dim == 1 || g.dim == 2 {
            for (i, m) in self.potential.modes.iter().enumerate() {
                if let Err(e) = (PotentialSpec { modes: vec![m.clone()], horizon: None }).validate(g.dim) {
                    let msg = e.to_string();
                    push(&format!("potential.modes[{i}]"), msg.trim_start_matches("mode 0: ").to_string());
                }
            }
            if let Ok(grid) = self.grid() {
                if let Err(e) = self.initial.validate(&grid) {
                    push("initial", e.to_string());
                }
            }
        }
        issues
    }

    pub fn grid(&self) -> Result<Grid, ConfigIssue> {
        let g = &self.grid;
        Grid::new(g.dim, &vec![g.n_cells; g.dim], &vec![g.length; g.dim])
            .map_err(|e| ConfigIssue { path: "grid".into(), message: e.to_string() })
    }

    pub fn potential(&self) -> PotentialSpec {
        PotentialSpec { modes: self.potential.modes.clone(), horizon: None }
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigIssue> {
        Ok(Scenario {
            grid: self.grid()?,
            nu: self.medium.nu,
            horizon: self.time.horizon,
            samples: self.time.samples,
            potential: self.potential(),
            initial: self.initial.clone(),
            solver: self.solver,
        })
    }

    pub fn single_gamma(&self) -> Result<f64, ConfigIssue> {
        match &self.medium.gamma {
            GammaValue::Single(g) => Ok(*g),
            GammaValue::List(v) if v.len() == 1 => Ok(v[0]),
            GammaValue::List(_) => {
                Err(ConfigIssue { path: "medium.gamma".into(), message: "simulate needs a single gamma".into() })
            }
        }
    }

    pub fn sweep_plan(&self) -> Result<GammaSweepPlan, ConfigIssue> {
        Ok(GammaSweepPlan { gammas: self.medium.gamma.values(), scenario: self.scenario()? })
    }

    /// Canonical TOML of everything except the output block.
    pub fn canonical(&self) -> String {
        let mut copy = self.clone();
        copy.output = OutputBlock::default();
        toml::to_string(&copy).expect("config serializes")
    }

    /// SHA-256 of [`RunConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
