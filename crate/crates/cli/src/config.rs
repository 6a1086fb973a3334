//! Experiment files: TOML (primary) or JSON, plus `--section.key=value`
//! overrides applied on top.

use std::path::Path;

use critvar::action::{MamConfig, TargetEvent};
use critvar::models::ModelSpec;
use critvar::path::{Control, TimeGrid};
use critvar::skeleton::SkeletonConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<EventSpec>,
    #[serde(default)]
    pub skeleton: SkeletonConfig<f64>,
    #[serde(default)]
    pub mam: MamConfig,
    #[serde(default)]
    pub check: CheckSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub ldp: LdpSection,
    #[serde(default)]
    pub convergence: ConvergenceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub t_final: f64,
    pub steps: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { t_final: 1.0, steps: 100 }
    }
}

/// Initial datum: explicit coefficients, or `amplitude/(k+1)` in mode `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    pub amplitude: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { x: None, amplitude: 0.5 }
    }
}

impl InitialSection {
    /// The datum in dimension `m`; explicit data are zero-padded.
    pub fn resolve(&self, m: usize) -> Result<Vec<f64>> {
        match &self.x {
            Some(x) if x.len() > m => {
                Err(ConfigError(format!("initial.x has {} entries but the model has dimension {m}", x.len())))
            }
            Some(x) => {
                let mut v = x.clone();
                v.resize(m, 0.0);
                Ok(v)
            }
            None => Ok((0..m).map(|k| self.amplitude / (k + 1) as f64).collect()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    #[default]
    Zero,
    /// Constant in time; shorter vectors are zero-padded.
    Constant { values: Vec<f64> },
    /// `amplitude·sin(2πnt)` in direction `dir`.
    Oscillatory { n: usize, dir: usize, amplitude: f64 },
}

impl ControlSpec {
    pub fn build(&self, grid: TimeGrid<f64>, k: usize) -> Result<Control<f64>> {
        match self {
            ControlSpec::Zero => Ok(Control::zeros(grid, k)),
            ControlSpec::Constant { values } => {
                if values.len() > k {
                    return Err(ConfigError(format!("control.values has {} entries but the noise has {k} modes", values.len())));
                }
                let mut c = values.clone();
                c.resize(k, 0.0);
                Ok(Control::constant(grid, &c))
            }
            ControlSpec::Oscillatory { n, dir, amplitude } => {
                if *dir >= k {
                    return Err(ConfigError(format!("control.dir = {dir} but the noise has {k} modes")));
                }
                Ok(Control::oscillatory(grid, k, *n, *dir, *amplitude))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventSpec {
    Ball { center: Vec<f64>, radius: f64 },
    Halfspace { direction: Vec<f64>, level: f64 },
}

impl EventSpec {
    pub fn build(&self) -> critvar::Result<TargetEvent<f64>> {
        match self {
            EventSpec::Ball { center, radius } => TargetEvent::ball(center.clone(), *radius),
            EventSpec::Halfspace { direction, level } => TargetEvent::halfspace(direction.clone(), *level),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub n_samples: usize,
    /// `n` of the localized probes `‖u‖_H ≤ n`.
    pub radius: f64,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self { n_samples: 2000, radius: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub eps: f64,
    pub n_paths: usize,
    pub gammas: Vec<f64>,
    /// Paths written to `paths.csv`.
    pub save_paths: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { eps: 0.1, n_paths: 1000, gammas: vec![2.0, 4.0, 8.0], save_paths: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LdpProbe {
    Slope,
    Laplace,
    Lln,
    Continuity,
}

/// `h` of the Laplace probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LaplaceSpec {
    /// `⟨d, z(T)⟩`.
    Linear { d: Vec<f64> },
    /// `‖z(T) − target‖²`.
    DistanceSq { target: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpSection {
    pub probes: Vec<LdpProbe>,
    pub eps: Vec<f64>,
    pub n_paths: usize,
    pub deltas: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub laplace: Option<LaplaceSpec>,
}

impl Default for LdpSection {
    fn default() -> Self {
        Self {
            probes: vec![LdpProbe::Slope, LdpProbe::Lln, LdpProbe::Continuity],
            eps: vec![0.2, 0.1, 0.05],
            n_paths: 10_000,
            deltas: vec![0.1],
            laplace: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    /// Refinement levels for `Δt`, `m` and `K_U`.
    pub levels: usize,
    pub eps: f64,
    pub n_paths: usize,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self { levels: 3, eps: 0.1, n_paths: 200 }
    }
}

impl ExperimentConfig {
    pub fn grid(&self) -> critvar::Result<TimeGrid<f64>> {
        TimeGrid::new(self.grid.t_final, self.grid.steps)
    }

    /// Parses by extension: `.json` as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ConfigError(format!("{e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| ConfigError(e.to_string()))
    }

    /// Applies `section.key=value` overrides; values are read as TOML
    /// literals, falling back to bare strings.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = serde_json::to_value(self).map_err(|e| ConfigError(e.to_string()))?;
        for (key, raw) in overrides {
            set_path(&mut root, key, parse_literal(raw)?)?;
        }
        serde_json::from_value(root).map_err(|e| ConfigError(format!("after overrides: {e}")))
    }
}

fn parse_literal(raw: &str) -> Result<Value> {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => {
            let v = t.remove("v").expect("parsed key");
            serde_json::to_value(v).map_err(|e| ConfigError(e.to_string()))
        }
        Err(_) => Ok(Value::String(raw.to_string())),
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError(format!("bad override key {key:?}")));
    }
    let mut cur = root;
    for p in &parts[..parts.len() - 1] {
        let obj = cur.as_object_mut().ok_or_else(|| ConfigError(format!("override {key:?}: {p:?} is not a table")))?;
        cur = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = cur.as_object_mut().ok_or_else(|| ConfigError(format!("override {key:?}: parent is not a table")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Splits `--a.b=value` arguments off the command line.
pub fn split_overrides(args: impl IntoIterator<Item = String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        if let Some(body) = a.strip_prefix("--") {
            if let Some((k, v)) = body.split_once('=') {
                if k.contains('.') {
                    overrides.push((k.to_string(), v.to_string()));
                    continue;
                }
            }
        }
        rest.push(a);
    }
    (rest, overrides)
}
