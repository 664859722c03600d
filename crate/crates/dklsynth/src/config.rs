//! Experiment configuration: one JSON file, optionally overridden by flags.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context as _, Result};
use dklsynth_core::abstraction::AlignPolicy;
use dklsynth_core::dkl::{GpConfig, ModelConfig, ModelKind, NetConfig};
use dklsynth_core::dynamics::{builtin_labels, builtin_system, LabelMap, SystemSpec, TermField, BUILTIN_SYSTEMS};
use dklsynth_core::nn::TrainConfig;
use dklsynth_core::refinement::{RefinementConfig, ScoreSupport};
use dklsynth_core::synthesis::{Dfa, DEFAULT_MAX_ITERS, DEFAULT_THRESHOLD, DEFAULT_TOL};
use dklsynth_core::Region;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::formats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub per_action: usize,
    pub pred: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: DEFAULT_TOL, max_iters: DEFAULT_MAX_ITERS }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSection {
    pub rounds: usize,
    pub n_ref: usize,
    pub support: ScoreSupport,
}

impl Default for RefineSection {
    fn default() -> Self {
        RefineSection { rounds: 2, n_ref: 100, support: ScoreSupport::AllStored }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    /// Simulations per start cell.
    pub runs: usize,
    pub horizon: usize,
    /// Start cells sampled from each class that is checked.
    pub cells: usize,
    /// Two-sided confidence level of the Clopper-Pearson intervals.
    pub confidence: f64,
    /// A cell passes when the interval's lower end is at least `p̌ − margin`.
    pub margin: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig { runs: 1000, horizon: 100, cells: 20, confidence: 0.99, margin: 0.03 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    pub triples: usize,
    pub samples: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig { triples: 200, samples: 1000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { points: 10_000 }
    }
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in system name or path to a system JSON file.
    pub system: String,
    /// Built-in label set name or path to a label JSON file; defaults to the
    /// built-in labels of the system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    /// Model variant name (`gp`, `nn-gp`, `nn-gp-l`, `dkl-f`, `dkl-fl`, `dkl-s`, `dkl-sl`).
    pub model: String,
    pub data: DataConfig,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub gp: GpConfig,
    pub grid: Vec<usize>,
    #[serde(default)]
    pub align: AlignPolicy,
    /// Built-in automaton name or path to a DFA JSON file.
    pub spec: String,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub synthesis: SolverConfig,
    #[serde(default)]
    pub refinement: RefineSection,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Directory relative references are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

pub const PRESETS: [&str; 3] = ["2d", "3d", "5d"];

/// The benchmark presets. Data sizes and network shapes follow the usual
/// desk-scale setup for each system.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (system, per_action, pred, hidden, grid, spec, n_ref): (&str, usize, usize, Vec<usize>, Vec<usize>, &str, usize) = match name {
        "2d" => ("nonlinear2d", 1000, 100, vec![64, 64], vec![32, 32], "safe_reach_two", 100),
        "3d" => ("dubins3d", 10_000, 400, vec![128, 128], vec![20, 8, 8], "safe_reach", 200),
        "5d" => ("car5d", 50_000, 250, vec![64, 64, 64], vec![10, 4, 4, 3, 3], "safe_reach", 200),
        _ => return Err(ConfigError::new(format!("unknown preset `{name}` (expected one of {PRESETS:?})")).into()),
    };
    Ok(ExperimentConfig {
        system: system.into(),
        labels: None,
        model: "dkl-s".into(),
        data: DataConfig { per_action, pred },
        net: NetConfig { hidden, train: TrainConfig::default() },
        gp: GpConfig::default(),
        grid,
        align: AlignPolicy::Split,
        spec: spec.into(),
        threshold: DEFAULT_THRESHOLD,
        synthesis: SolverConfig::default(),
        refinement: RefineSection { n_ref, ..RefineSection::default() },
        validation: ValidationConfig::default(),
        audit: AuditConfig::default(),
        eval: EvalConfig::default(),
        seed: 1,
        output_dir: PathBuf::from(format!("out-{name}")),
        base_dir: PathBuf::new(),
    })
}

/// System loaded from a JSON file. The noise is given either as the
/// diagonal `noise_var` or as a full `noise_cov` matrix, which must be diagonal.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub name: String,
    pub actions: Vec<String>,
    pub domain: Region,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_var: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_cov: Option<Vec<Vec<f64>>>,
    pub field: TermField,
}

impl SystemFile {
    pub fn into_spec(self) -> Result<SystemSpec> {
        let noise = match (self.noise_var, self.noise_cov) {
            (Some(v), None) => v,
            (None, Some(m)) => {
                for (i, row) in m.iter().enumerate() {
                    if row.len() != m.len() {
                        bail!(ConfigError::new("noise_cov must be square"));
                    }
                    if row.iter().enumerate().any(|(j, &v)| i != j && v != 0.0) {
                        bail!(ConfigError::new("noise_cov must be diagonal"));
                    }
                }
                (0..m.len()).map(|i| m[i][i]).collect()
            }
            _ => bail!(ConfigError::new("give exactly one of noise_var and noise_cov")),
        };
        self.field.validate()?;
        Ok(SystemSpec::new(self.name, self.actions, self.domain, noise, Arc::new(self.field))?)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| ConfigError::new(format!("cannot read config {}", path.display())))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| ConfigError::new(format!("malformed config {}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output(&self) -> PathBuf {
        if self.output_dir.is_absolute() {
            self.output_dir.clone()
        } else {
            self.base_dir.join(&self.output_dir)
        }
    }

    pub fn kind(&self) -> Result<ModelKind> {
        ModelKind::parse(&self.model).map_err(|_| ConfigError::new(format!("unknown model variant `{}`", self.model)).into())
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        Ok(ModelConfig { kind: self.kind()?, net: self.net.clone(), gp: self.gp.clone() })
    }

    pub fn refinement_config(&self) -> RefinementConfig {
        RefinementConfig { n_ref: self.refinement.n_ref, rounds: self.refinement.rounds, support: self.refinement.support }
    }

    pub fn system_spec(&self) -> Result<SystemSpec> {
        if BUILTIN_SYSTEMS.contains(&self.system.as_str()) {
            return Ok(builtin_system(&self.system)?);
        }
        let path = self.resolve(&self.system);
        let file: SystemFile = formats::read_json(&path)?;
        file.into_spec().with_context(|| format!("invalid system file {}", path.display()))
    }

    pub fn label_map(&self) -> Result<LabelMap> {
        let name = self.labels.as_deref().unwrap_or(&self.system);
        if BUILTIN_SYSTEMS.contains(&name) {
            return Ok(builtin_labels(name)?);
        }
        match &self.labels {
            Some(p) => {
                let l: LabelMap = formats::read_json(&self.resolve(p))?;
                Ok(LabelMap::new(l.props, l.regions)?)
            }
            None => Ok(LabelMap::empty()),
        }
    }

    pub fn dfa(&self) -> Result<Dfa> {
        match Dfa::builtin(&self.spec) {
            Ok(d) => Ok(d),
            Err(_) => formats::read_dfa(&self.resolve(&self.spec)),
        }
    }

    /// Checks everything that can be checked without running a stage.
    pub fn validate(&self) -> Result<()> {
        let spec = self.system_spec()?;
        self.label_map()?;
        self.dfa()?;
        self.kind()?;
        let bad = |m: String| -> Result<()> { Err(ConfigError::new(m).into()) };
        if self.grid.len() != spec.dim() || self.grid.contains(&0) {
            return bad(format!("grid needs {} positive entries", spec.dim()));
        }
        if self.data.pred == 0 || self.data.pred > self.data.per_action {
            return bad("data.pred must be in 1..=data.per_action".into());
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return bad("threshold must be in (0, 1]".into());
        }
        if self.refinement.n_ref == 0 {
            return bad("refinement.n_ref must be at least 1".into());
        }
        if !(self.validation.confidence > 0.0 && self.validation.confidence < 1.0) {
            return bad("validation.confidence must be in (0, 1)".into());
        }
        Ok(())
    }
}
