//! Experiment configuration files.
//!
//! ```toml
//! eps = 0.1
//! C = 3.0
//! index_mode = "infinite"     # or a positive integer
//! D_max = 65536
//!
//! [operator]
//! kind = "mildly_ill_posed"   # well_posed | mildly_ill_posed | severely_ill_posed
//! t = 1.0
//!
//! [smoothness]
//! kind = "ordinary_smooth"    # ordinary_smooth | super_smooth
//! s = 1.0
//!
//! [[noise]]
//! kind = "long_range_gaussian"
//! s = 1.0
//! c = 0.5
//!
//! [test]
//! alpha = 0.1
//! beta = 0.1
//! D = 10                      # omit to use the radius-minimising bandwidth
//! c_beta_mode = "exact"       # exact | practical
//!
//! [rng]
//! seed = 42
//!
//! [run]
//! command = "simulate"
//! eps_grid = [0.1, 0.05]
//! reps = 10000
//! output_path = "out"
//! cells = ["well_posed/ordinary_smooth"]
//! ```
//!
//! Unknown keys anywhere are errors.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use seqdetect_core::bounds::RateCell;
use seqdetect_core::noise::NoiseSpec;
use seqdetect_core::sequences::DEFAULT_D_MAX;
use seqdetect_core::{CBetaMode, IndexMode, NoiseModel, OperatorFamily, ProblemSpec, SmoothnessFamily};

/// Replication floor for `simulate`.
pub const MIN_SIMULATE_REPS: u64 = 1_000;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub eps: Option<f64>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub index_mode: Option<IndexModeValue>,
    #[serde(rename = "D_max")]
    pub d_max: Option<usize>,
    pub operator: OperatorBlock,
    pub smoothness: SmoothnessBlock,
    #[serde(default)]
    pub noise: Vec<NoiseBlock>,
    #[serde(default)]
    pub test: TestBlock,
    #[serde(default)]
    pub rng: RngBlock,
    #[serde(default)]
    pub run: RunBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum IndexModeValue {
    Named(String),
    Finite(usize),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorBlock {
    pub kind: String,
    pub t: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessBlock {
    pub kind: String,
    pub s: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    pub kind: String,
    pub s: Option<f64>,
    pub c: Option<f64>,
    pub d: Option<f64>,
    #[serde(rename = "claimed_C")]
    pub claimed_c: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestBlock {
    #[serde(default = "default_level")]
    pub alpha: f64,
    #[serde(default = "default_level")]
    pub beta: f64,
    #[serde(rename = "D")]
    pub d: Option<usize>,
    #[serde(default = "default_mode")]
    pub c_beta_mode: String,
}

impl Default for TestBlock {
    fn default() -> Self {
        Self { alpha: default_level(), beta: default_level(), d: None, c_beta_mode: default_mode() }
    }
}

fn default_level() -> f64 {
    0.05
}

fn default_mode() -> String {
    "exact".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngBlock {
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub command: Option<String>,
    #[serde(default)]
    pub eps_grid: Option<Vec<f64>>,
    pub reps: Option<u64>,
    pub output_path: Option<PathBuf>,
    pub cells: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Bounds,
    Calibrate,
    Simulate,
    Rates,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bounds => "bounds",
            Command::Calibrate => "calibrate",
            Command::Simulate => "simulate",
            Command::Rates => "rates",
        }
    }
}

/// A noise block after validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseEntry {
    pub spec: NoiseSpec,
    pub claimed_c: Option<f64>,
}

impl NoiseEntry {
    pub fn instantiate(&self, dim: usize) -> seqdetect_core::Result<NoiseModel> {
        let model = self.spec.instantiate(dim)?;
        match self.claimed_c {
            Some(c) => model.with_claimed_c(c),
            None => Ok(model),
        }
    }
}

/// Validated configuration, with command-line overrides applied.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: ProblemSpec,
    pub noise: Vec<NoiseEntry>,
    pub alpha: f64,
    pub beta: f64,
    pub bandwidth: Option<usize>,
    pub mode: CBetaMode,
    pub eps_grid: Vec<f64>,
    pub reps: u64,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    pub cells: Vec<RateCell>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<u64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow!("invalid config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Checks every field for `command` and builds the typed experiment.
    pub fn resolve(&self, command: Command, overrides: Overrides) -> Result<Experiment> {
        if let Some(name) = &self.run.command {
            if name != command.name() {
                bail!("run.command: config is for `{name}` but `{}` was requested", command.name());
            }
        }
        let operator = match (self.operator.kind.as_str(), self.operator.t) {
            ("well_posed", None) => OperatorFamily::well_posed(),
            ("well_posed", Some(_)) => bail!("operator.t: not used by kind well_posed"),
            ("mildly_ill_posed", Some(t)) => OperatorFamily::mildly_ill_posed(t),
            ("severely_ill_posed", Some(t)) => OperatorFamily::severely_ill_posed(t),
            ("mildly_ill_posed" | "severely_ill_posed", None) => bail!("operator.t: required for kind {}", self.operator.kind),
            (other, _) => bail!("operator.kind: unknown kind `{other}` (expected well_posed, mildly_ill_posed or severely_ill_posed)"),
        };
        let smoothness = match self.smoothness.kind.as_str() {
            "ordinary_smooth" => SmoothnessFamily::ordinary(self.smoothness.s),
            "super_smooth" => SmoothnessFamily::super_smooth(self.smoothness.s),
            other => bail!("smoothness.kind: unknown kind `{other}` (expected ordinary_smooth or super_smooth)"),
        };
        let index_mode = match &self.index_mode {
            None => IndexMode::Infinite,
            Some(IndexModeValue::Named(n)) if n == "infinite" => IndexMode::Infinite,
            Some(IndexModeValue::Named(n)) => bail!("index_mode: expected \"infinite\" or a positive integer, got `{n}`"),
            Some(IndexModeValue::Finite(n)) => IndexMode::Finite(*n),
        };
        let eps = self.eps.unwrap_or(0.1);
        let spec = ProblemSpec::new(operator, smoothness, eps)
            .and_then(|s| s.with_fourth_moment_bound(self.c.unwrap_or(3.0)))
            .and_then(|s| s.with_index_mode(index_mode))
            .and_then(|s| s.with_d_max(self.d_max.unwrap_or(DEFAULT_D_MAX)))
            .map_err(|e| anyhow!("problem block: {e}"))?;

        let noise = self.noise.iter().enumerate().map(|(i, n)| n.resolve(i)).collect::<Result<Vec<_>>>()?;

        let t = &self.test;
        if !(t.alpha > 0.0 && t.alpha < 1.0) {
            bail!("test.alpha: must lie in (0, 1), got {}", t.alpha);
        }
        if !(t.beta > 0.0 && t.alpha + t.beta < 1.0) {
            bail!("test.beta: need 0 < beta < 1 - alpha, got {}", t.beta);
        }
        let mode = match t.c_beta_mode.as_str() {
            "exact" => CBetaMode::Exact,
            "practical" => CBetaMode::Practical,
            other => bail!("test.c_beta_mode: expected exact or practical, got `{other}`"),
        };
        if let Some(d) = t.d {
            spec.check_bandwidth(d).map_err(|e| anyhow!("test.D: {e}"))?;
        }

        let eps_grid = match &self.run.eps_grid {
            Some(g) => {
                if g.is_empty() {
                    bail!("run.eps_grid: must not be empty");
                }
                if g.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
                    bail!("run.eps_grid: entries must be positive and finite");
                }
                if g.windows(2).any(|w| !(w[1] < w[0])) {
                    bail!("run.eps_grid: must be strictly decreasing");
                }
                g.clone()
            }
            None if matches!(command, Command::Bounds | Command::Rates) => bail!("run.eps_grid: required for `{}`", command.name()),
            None => vec![eps],
        };
        if command == Command::Rates && eps_grid.len() < 5 {
            bail!("run.eps_grid: rate fitting needs at least 5 points, got {}", eps_grid.len());
        }

        let reps = overrides.reps.or(self.run.reps).unwrap_or(10_000);
        if command == Command::Simulate {
            if reps < MIN_SIMULATE_REPS {
                bail!("run.reps: simulate needs at least {MIN_SIMULATE_REPS} replications, got {reps}");
            }
            if noise.is_empty() {
                bail!("noise: simulate needs at least one [[noise]] block");
            }
        }

        let cells = match &self.run.cells {
            Some(names) => names
                .iter()
                .map(|n| RateCell::parse(n).ok_or_else(|| anyhow!("run.cells: unknown cell `{n}`")))
                .collect::<Result<Vec<_>>>()?,
            None => RateCell::ALL.to_vec(),
        };

        Ok(Experiment {
            spec,
            noise,
            alpha: t.alpha,
            beta: t.beta,
            bandwidth: t.d,
            mode,
            eps_grid,
            reps,
            seed: overrides.seed.unwrap_or(self.rng.seed),
            output_path: self.run.output_path.clone(),
            cells,
        })
    }
}

impl NoiseBlock {
    fn resolve(&self, index: usize) -> Result<NoiseEntry> {
        let key = |field: &str| format!("noise[{index}].{field}");
        let unused = |field: &str, present: bool| -> Result<()> {
            if present {
                bail!("{}: not used by kind {}", key(field), self.kind);
            }
            Ok(())
        };
        let spec = match self.kind.as_str() {
            "iid_gaussian" | "iid_rademacher" | "iid_scaled_uniform" => {
                unused("s", self.s.is_some())?;
                unused("c", self.c.is_some())?;
                unused("d", self.d.is_some())?;
                match self.kind.as_str() {
                    "iid_gaussian" => NoiseSpec::IidGaussian,
                    "iid_rademacher" => NoiseSpec::IidRademacher,
                    _ => NoiseSpec::IidScaledUniform,
                }
            }
            "correlated_gaussian" => {
                unused("s", self.s.is_some())?;
                unused("d", self.d.is_some())?;
                let rho = self.c.ok_or_else(|| anyhow!("{}: required (off-diagonal correlation)", key("c")))?;
                NoiseSpec::Equicorrelated { rho }
            }
            "long_range_gaussian" => {
                unused("d", self.d.is_some())?;
                NoiseSpec::LongRangeGaussian { s: self.s.unwrap_or(1.0), c: self.c.unwrap_or(0.5) }
            }
            "adversarial_equicorrelated" => {
                unused("s", self.s.is_some())?;
                unused("c", self.c.is_some())?;
                NoiseSpec::Adversarial { d: self.d.unwrap_or(std::f64::consts::FRAC_1_SQRT_2) }
            }
            other => bail!("{}: unknown kind `{other}`", key("kind")),
        };
        let entry = NoiseEntry { spec, claimed_c: self.claimed_c };
        // surface parameter errors now rather than mid-run
        entry.instantiate(2).map_err(|e| anyhow!("noise[{index}]: {e}"))?;
        Ok(entry)
    }
}
