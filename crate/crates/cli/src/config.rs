//! Pipeline configuration: a single TOML document with explicit keys.
//! Unknown keys are rejected (typo protection) and semantic validation
//! reports every problem at once rather than failing on the first.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use osrlab_core::datasets::{synth_gaussians, GaussianClassSpec, LabeledDataset};
use osrlab_core::nn::GdxConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub out_dir: PathBuf,
    /// Split seeds; the pipeline runs once per seed and the report
    /// aggregates a mean row over them.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpecSection {
    pub name: String,
    pub mean: Vec<f64>,
    pub scale: f64,
    pub count: usize,
}

/// A dataset source: synthetic Gaussian clusters, a vector CSV, or a
/// paired IDX image/label file set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub source: String,
    pub origin: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class: Vec<ClassSpecSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Declared class names for file sources (synthetic sources derive
    /// them from the class specs).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<String>,
}

impl DatasetSection {
    pub fn class_names(&self) -> Vec<String> {
        if self.source == "synthetic" {
            self.class.iter().map(|c| c.name.clone()).collect()
        } else {
            self.classes.clone()
        }
    }

    fn validate(&self, label: &str, errors: &mut Vec<String>) {
        match self.source.as_str() {
            "synthetic" => {
                if self.class.is_empty() {
                    errors.push(format!("{label}: synthetic source needs [[{label}.class]] specs"));
                }
                if self.seed.is_none() {
                    errors.push(format!("{label}: seed required"));
                }
                let dims: BTreeSet<usize> = self.class.iter().map(|c| c.mean.len()).collect();
                if dims.len() > 1 {
                    errors.push(format!("{label}: class means have mixed dimensions {dims:?}"));
                }
                for c in &self.class {
                    if c.scale <= 0.0 {
                        errors.push(format!("{label}: class {:?} has non-positive scale", c.name));
                    }
                }
            }
            "csv" => {
                if self.csv.is_none() {
                    errors.push(format!("{label}: csv source needs a csv path"));
                }
                if self.classes.is_empty() {
                    errors.push(format!("{label}: file sources must declare class names"));
                }
            }
            "idx" => {
                if self.images.is_none() || self.labels.is_none() {
                    errors.push(format!("{label}: idx source needs images and labels paths"));
                }
                if self.classes.is_empty() {
                    errors.push(format!("{label}: file sources must declare class names"));
                }
            }
            other => errors.push(format!("{label}: unknown source {other:?}")),
        }
        if self.origin.is_empty() {
            errors.push(format!("{label}: origin tag required"));
        }
        let mut seen = BTreeSet::new();
        for name in self.class_names() {
            if name.contains(',') {
                errors.push(format!("{label}: class name {name:?} must not contain commas"));
            }
            if !seen.insert(name.clone()) {
                errors.push(format!("{label}: duplicate class name {name:?}"));
            }
        }
    }

    /// Materializes the dataset. Relative file paths resolve against
    /// `base_dir` (the config file's directory).
    pub fn load(&self, base_dir: &Path) -> Result<LabeledDataset, CliError> {
        let resolve = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                base_dir.join(p)
            }
        };
        match self.source.as_str() {
            "synthetic" => {
                let specs: Vec<GaussianClassSpec> = self
                    .class
                    .iter()
                    .map(|c| GaussianClassSpec {
                        name: c.name.clone(),
                        mean: c.mean.clone(),
                        scale: c.scale,
                        count: c.count,
                    })
                    .collect();
                Ok(synth_gaussians(&specs, self.seed.unwrap_or(0), &self.origin)?)
            }
            "csv" => {
                let ds = osrlab_core::datasets::load_vectors_csv(
                    &resolve(self.csv.as_ref().expect("validated")),
                    &self.origin,
                )?;
                Ok(ds.with_class_names(self.classes.clone())?)
            }
            "idx" => {
                let ds = osrlab_core::datasets::load_idx(
                    &resolve(self.images.as_ref().expect("validated")),
                    &resolve(self.labels.as_ref().expect("validated")),
                    &self.origin,
                )?;
                Ok(ds.with_class_names(self.classes.clone())?)
            }
            _ => unreachable!("validated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub kk_classes: Vec<String>,
    pub uu_classes: Vec<String>,
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneSection {
    /// "mlp" for vector data or "image_cnn" for [C, H, W] images.
    pub arch: String,
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub fc1_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    #[serde(default)]
    pub augment: bool,
}

impl BackboneSection {
    pub fn gdx(&self) -> GdxConfig {
        let mut gdx = GdxConfig::default();
        if let Some(lr) = self.learning_rate {
            gdx.learning_rate = lr;
        }
        if let Some(m) = self.momentum {
            gdx.momentum = m;
        }
        gdx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    /// "sweep" fits the cubic to swept candidates; "fixed" pins T.
    pub policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_t: Option<f64>,
    #[serde(default = "default_candidates")]
    pub candidates: Vec<f64>,
    /// Independently seeded CS trainings averaged per sweep candidate.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
}

fn default_candidates() -> Vec<f64> {
    vec![0.6, 0.7, 0.8, 0.9]
}

fn default_replicates() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_grid: Option<Vec<usize>>,
    pub folds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub delta_holdout_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
}

impl CsSection {
    pub fn gdx(&self) -> GdxConfig {
        let mut gdx = GdxConfig::default();
        if let Some(lr) = self.learning_rate {
            gdx.learning_rate = lr;
        }
        gdx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaSection {
    pub cost_fp: f64,
    pub cost_fn: f64,
    pub cost_tn: f64,
    pub cost_tp: f64,
}

impl Default for DeltaSection {
    fn default() -> Self {
        DeltaSection {
            cost_fp: 0.5,
            cost_fn: 0.5,
            cost_tn: 0.0,
            cost_tp: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub mmd_kernel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mmd_bandwidth: Option<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            mmd_kernel: "rbf".into(),
            mmd_bandwidth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub run: RunSection,
    pub dataset: DatasetSection,
    pub aux: DatasetSection,
    pub split: SplitSection,
    pub backbone: BackboneSection,
    pub threshold: ThresholdSection,
    pub cs: CsSection,
    #[serde(default)]
    pub delta: DeltaSection,
    #[serde(default)]
    pub eval: EvalSection,
    /// Directory the config file lives in; file paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn mmd_kernel(&self) -> osrlab_core::eval::KernelSpec {
        match self.eval.mmd_kernel.as_str() {
            "linear" => osrlab_core::eval::KernelSpec::Linear,
            _ => osrlab_core::eval::KernelSpec::Rbf {
                bandwidth: self.eval.mmd_bandwidth,
            },
        }
    }

    pub fn costs(&self) -> osrlab_core::osrnet::CostSpec {
        osrlab_core::osrnet::CostSpec {
            c_fp: self.delta.cost_fp,
            c_fn: self.delta.cost_fn,
            c_tn: self.delta.cost_tn,
            c_tp: self.delta.cost_tp,
        }
    }
}

/// Parses and validates a config file. All semantic errors are collected
/// and reported together.
pub fn validate_config(path: &Path) -> Result<PipelineConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    let mut cfg: PipelineConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(vec![format!("parse error: {e}")]))?;
    cfg.base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();

    let mut errors = Vec::new();
    if cfg.run.seeds.is_empty() {
        errors.push("run: seed required (run.seeds must not be empty)".into());
    }
    if cfg.run.out_dir.as_os_str().is_empty() {
        errors.push("run: out_dir required".into());
    }

    cfg.dataset.validate("dataset", &mut errors);
    cfg.aux.validate("aux", &mut errors);

    let dataset_names: BTreeSet<String> = cfg.dataset.class_names().into_iter().collect();
    let kk: BTreeSet<String> = cfg.split.kk_classes.iter().cloned().collect();
    let uu: BTreeSet<String> = cfg.split.uu_classes.iter().cloned().collect();
    if cfg.split.kk_classes.is_empty() {
        errors.push("split: kk_classes must not be empty".into());
    }
    if !(kk.is_disjoint(&uu)) {
        let overlap: Vec<&String> = kk.intersection(&uu).collect();
        errors.push(format!("split: kk_classes and uu_classes overlap: {overlap:?}"));
    }
    for name in kk.iter().chain(uu.iter()) {
        if !dataset_names.contains(name) {
            errors.push(format!("split: class {name:?} not present in the dataset"));
        }
    }
    let aux_names: BTreeSet<String> = cfg.aux.class_names().into_iter().collect();
    let kk_uu: BTreeSet<String> = kk.union(&uu).cloned().collect();
    let clash: Vec<&String> = aux_names.intersection(&kk_uu).collect();
    if !clash.is_empty() {
        errors.push(format!(
            "aux: class names {clash:?} violate the disjointness rule (aux classes must be disjoint from KK and UU classes)"
        ));
    }
    if cfg.dataset.origin == cfg.aux.origin {
        errors.push("aux: origin must differ from the dataset origin".into());
    }

    if !(cfg.split.test_fraction > 0.0 && cfg.split.test_fraction < 1.0) {
        errors.push(format!(
            "split: test_fraction {} outside (0, 1)",
            cfg.split.test_fraction
        ));
    }

    match cfg.backbone.arch.as_str() {
        "mlp" | "image_cnn" => {}
        other => errors.push(format!("backbone: unknown arch {other:?}")),
    }
    if cfg.backbone.fc1_width == 0 {
        errors.push("backbone: fc1_width must be positive".into());
    }
    if cfg.backbone.epochs == 0 || cfg.backbone.batch_size == 0 {
        errors.push("backbone: epochs and batch_size must be positive".into());
    }
    if let Err(e) = cfg.backbone.gdx().validate() {
        errors.push(format!("backbone: {e}"));
    }

    match cfg.threshold.policy.as_str() {
        "fixed" => match cfg.threshold.fixed_t {
            Some(t) if (0.0..=1.0).contains(&t) => {}
            Some(t) => errors.push(format!("threshold: fixed_t {t} outside [0, 1]")),
            None => errors.push("threshold: fixed policy needs fixed_t".into()),
        },
        "sweep" => {
            if cfg.threshold.candidates.is_empty() {
                errors.push("threshold: sweep policy needs candidates".into());
            }
            if cfg.threshold.replicates == 0 {
                errors.push("threshold: replicates must be positive".into());
            }
            for t in &cfg.threshold.candidates {
                if !(0.0..=1.0).contains(t) {
                    errors.push(format!("threshold: candidate {t} outside [0, 1]"));
                }
            }
        }
        other => errors.push(format!("threshold: unknown policy {other:?}")),
    }

    if cfg.cs.folds < 2 {
        errors.push("cs: folds must be >= 2".into());
    }
    if cfg.cs.epochs == 0 || cfg.cs.batch_size == 0 {
        errors.push("cs: epochs and batch_size must be positive".into());
    }
    if !(cfg.cs.delta_holdout_fraction > 0.0 && cfg.cs.delta_holdout_fraction < 1.0) {
        errors.push(format!(
            "cs: delta_holdout_fraction {} outside (0, 1)",
            cfg.cs.delta_holdout_fraction
        ));
    }
    if let Some(grid) = &cfg.cs.h_grid {
        if grid.is_empty() || grid.contains(&0) {
            errors.push("cs: h_grid entries must be positive".into());
        }
    }

    if cfg.delta.cost_fn - cfg.delta.cost_tp == 0.0 {
        errors.push("delta: cost denominator C(N|P) - C(P|P) must be nonzero".into());
    }

    match cfg.eval.mmd_kernel.as_str() {
        "rbf" | "linear" => {}
        other => errors.push(format!("eval: unknown mmd_kernel {other:?}")),
    }
    if let Some(b) = cfg.eval.mmd_bandwidth {
        if b <= 0.0 {
            errors.push("eval: mmd_bandwidth must be positive".into());
        }
    }

    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(errors))
    }
}
