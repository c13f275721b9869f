//! TOML run configuration. Every key is optional; missing keys take the
//! defaults shown by `structmark --help`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use structmark::synth::{BenchConfig, LabelSmoothing};
use structmark::toy::bimodal_init;
use structmark::{
    DatasetParams, EvalConfig, MarginKind, MarginSpec, Objective, SmoothingConfig, StructuredLossConfig, ToyConfig,
    ToyObjective,
};

pub const CONFIG_HELP: &str = "\
CONFIG KEYS (TOML, all optional):
  seed = 0                          global seed; every stream derives from it

  [toy]    length = 11, target = 5, init_high = 2.0, init_second = 1.5,
           learning_rate = 0.1, steps = 50, record_at = [10, 20, 50],
           objective = \"structured\" | \"softargmax\",
           epsilon = 1.0, margin = \"l2\", margin_alpha = 1.0,
           margin_s = 0.01, normalize_coords = false

  [synth]  n_samples = 500, width = 32, height = 32, n_landmarks = 3,
           noise_sigma = 0.1, eval_fraction = 0.2, n_seeds = 3,
           target_nme = 0.08, epochs = 20, batch_size = 16,
           stop_at_target = true,
           objective_a = \"structured\", grid_a = [0.03, 0.1, 0.3, 1.0],
           objective_b = \"softargmax\", grid_b = [0.03, 0.1, 0.3, 1.0],
           epsilon = 1.0, margin = \"smooth_l1\", margin_alpha = 1.0,
           margin_s = 0.01, normalize_coords = true, mse_sigma = 1.0,
           smoothing_samples = 8, export_dataset = false
           objectives: structured, structured_smoothed, softargmax, mse

  [smooth] annotations = \"\", boundaries = \"\" (relative to the config file),
           edge_map_size = 64, sigma_b = 1.5, blur_kernel = 9,
           blur_sigma = 1.7, sharpness_factor = 5.0, patch_half = 8,
           center_sigma = 1.0, blend = 0.01, gamma = 0.01,
           cov_reg = 1e-4, n_samples = 16

  [eval]   predictions = \"\", ground_truth = \"\" (relative to the config file),
           fr_threshold = 0.1, auc_threshold = 0.1, ced_points = 1001,
           norm_landmarks = [0, 1] (ground-truth pair giving the normaliser)

  margins: none, l1, l2 (squared distance), smooth_l1";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub toy: ToySection,
    pub synth: SynthSection,
    pub smooth: SmoothSection,
    pub eval: EvalSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config `{}`", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("invalid config `{}`", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Resolves a path from the config file relative to its directory.
    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

fn margin_spec(name: &str, alpha: f64, s: f64, normalize: bool) -> Result<MarginSpec> {
    let kind = match name {
        "none" => MarginKind::None,
        "l1" => MarginKind::L1,
        "l2" => MarginKind::L2,
        "smooth_l1" => MarginKind::SmoothL1,
        other => bail!("unknown margin `{other}` (expected none, l1, l2 or smooth_l1)"),
    };
    Ok(MarginSpec {
        kind,
        s,
        alpha,
        normalize_coords: normalize,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySection {
    pub length: usize,
    pub target: usize,
    pub init_high: f64,
    pub init_second: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub record_at: Vec<usize>,
    pub objective: String,
    pub epsilon: f64,
    pub margin: String,
    pub margin_alpha: f64,
    pub margin_s: f64,
    pub normalize_coords: bool,
}

impl Default for ToySection {
    fn default() -> Self {
        let d = ToyConfig::default();
        Self {
            length: d.length,
            target: d.target,
            init_high: 2.0,
            init_second: 1.5,
            learning_rate: d.learning_rate,
            steps: d.steps,
            record_at: d.record_at,
            objective: "structured".into(),
            epsilon: 1.0,
            margin: "l2".into(),
            margin_alpha: 1.0,
            margin_s: 0.01,
            normalize_coords: false,
        }
    }
}

impl ToySection {
    pub fn to_core(&self) -> Result<ToyConfig> {
        let objective = match self.objective.as_str() {
            "structured" => ToyObjective::Structured(StructuredLossConfig {
                epsilon: self.epsilon,
                margin: margin_spec(&self.margin, self.margin_alpha, self.margin_s, self.normalize_coords)?,
            }),
            "softargmax" => ToyObjective::SoftArgmaxL2,
            other => bail!("unknown toy objective `{other}` (expected structured or softargmax)"),
        };
        let cfg = ToyConfig {
            length: self.length,
            target: self.target,
            init_values: bimodal_init(self.length, self.init_high, self.init_second),
            learning_rate: self.learning_rate,
            steps: self.steps,
            objective,
            record_at: self.record_at.clone(),
        };
        cfg.validate().context("invalid [toy] config")?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_samples: usize,
    pub width: usize,
    pub height: usize,
    pub n_landmarks: usize,
    pub noise_sigma: f64,
    pub eval_fraction: f64,
    pub n_seeds: usize,
    pub target_nme: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub stop_at_target: bool,
    pub objective_a: String,
    pub grid_a: Vec<f64>,
    pub objective_b: String,
    pub grid_b: Vec<f64>,
    pub epsilon: f64,
    pub margin: String,
    pub margin_alpha: f64,
    pub margin_s: f64,
    pub normalize_coords: bool,
    pub mse_sigma: f64,
    pub smoothing_samples: usize,
    pub export_dataset: bool,
}

impl Default for SynthSection {
    fn default() -> Self {
        let b = BenchConfig::default();
        let m = MarginSpec::default();
        Self {
            n_samples: b.dataset.n_samples,
            width: b.dataset.width,
            height: b.dataset.height,
            n_landmarks: b.dataset.n_landmarks,
            noise_sigma: b.dataset.noise_sigma,
            eval_fraction: b.eval_fraction,
            n_seeds: b.seeds.len(),
            target_nme: b.target_nme,
            epochs: b.epochs,
            batch_size: b.batch_size,
            stop_at_target: b.early_stop,
            objective_a: "structured".into(),
            grid_a: b.grid_a,
            objective_b: "softargmax".into(),
            grid_b: b.grid_b,
            epsilon: 1.0,
            margin: "smooth_l1".into(),
            margin_alpha: m.alpha,
            margin_s: m.s,
            normalize_coords: m.normalize_coords,
            mse_sigma: 1.0,
            smoothing_samples: 8,
            export_dataset: false,
        }
    }
}

impl SynthSection {
    pub fn objective(&self, name: &str, smooth: &SmoothSection) -> Result<Objective> {
        let loss = StructuredLossConfig {
            epsilon: self.epsilon,
            margin: margin_spec(&self.margin, self.margin_alpha, self.margin_s, self.normalize_coords)?,
        };
        Ok(match name {
            "structured" => Objective::Structured { loss, smoothing: None },
            "structured_smoothed" => Objective::Structured {
                loss,
                smoothing: Some(LabelSmoothing {
                    // The edge map is drawn on the image grid itself.
                    config: SmoothingConfig {
                        edge_map_size: self.width,
                        ..smooth.to_core()?
                    },
                    n_samples: self.smoothing_samples,
                }),
            },
            "softargmax" => Objective::SoftArgmaxL2,
            "mse" => Objective::HeatmapMse { sigma: self.mse_sigma },
            other => {
                bail!("unknown synth objective `{other}` (expected structured, structured_smoothed, softargmax or mse)")
            }
        })
    }

    /// Bench configuration with per-seed dataset seeds derived from `seeds`.
    pub fn to_core(&self, seeds: Vec<u64>, smooth: &SmoothSection) -> Result<BenchConfig> {
        if self.epochs == 0 {
            bail!("invalid [synth] config: epochs must be at least 1");
        }
        if seeds.is_empty() {
            bail!("invalid [synth] config: n_seeds must be at least 1");
        }
        if self.grid_a.is_empty() || self.grid_b.is_empty() {
            bail!("invalid [synth] config: learning-rate grids must not be empty");
        }
        if let Some(lr) = self
            .grid_a
            .iter()
            .chain(&self.grid_b)
            .find(|&&lr| !(lr.is_finite() && lr > 0.0))
        {
            bail!("invalid [synth] config: learning rates must be positive, got {lr}");
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            bail!("invalid [synth] config: eval_fraction must lie strictly between 0 and 1");
        }
        Ok(BenchConfig {
            dataset: DatasetParams {
                n_samples: self.n_samples,
                width: self.width,
                height: self.height,
                n_landmarks: self.n_landmarks,
                noise_sigma: self.noise_sigma,
                seed: seeds[0],
            },
            eval_fraction: self.eval_fraction,
            seeds,
            target_nme: self.target_nme,
            epochs: self.epochs,
            batch_size: self.batch_size,
            early_stop: self.stop_at_target,
            objective_a: self.objective(&self.objective_a, smooth)?,
            grid_a: self.grid_a.clone(),
            objective_b: self.objective(&self.objective_b, smooth)?,
            grid_b: self.grid_b.clone(),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothSection {
    pub annotations: String,
    pub boundaries: String,
    pub edge_map_size: usize,
    pub sigma_b: f64,
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    pub sharpness_factor: f64,
    pub patch_half: usize,
    pub center_sigma: f64,
    pub blend: f64,
    pub gamma: f64,
    pub cov_reg: f64,
    pub n_samples: usize,
}

impl Default for SmoothSection {
    fn default() -> Self {
        let d = SmoothingConfig::default();
        Self {
            annotations: String::new(),
            boundaries: String::new(),
            edge_map_size: d.edge_map_size,
            sigma_b: d.sigma_b,
            blur_kernel: d.blur_kernel,
            blur_sigma: d.blur_sigma,
            sharpness_factor: d.sharpness_factor,
            patch_half: d.patch_half,
            center_sigma: d.center_sigma,
            blend: d.blend,
            gamma: d.gamma,
            cov_reg: d.cov_reg,
            n_samples: 16,
        }
    }
}

impl SmoothSection {
    pub fn to_core(&self) -> Result<SmoothingConfig> {
        let cfg = SmoothingConfig {
            edge_map_size: self.edge_map_size,
            sigma_b: self.sigma_b,
            blur_kernel: self.blur_kernel,
            blur_sigma: self.blur_sigma,
            sharpness_factor: self.sharpness_factor,
            patch_half: self.patch_half,
            center_sigma: self.center_sigma,
            blend: self.blend,
            gamma: self.gamma,
            cov_reg: self.cov_reg,
        };
        cfg.validate().context("invalid [smooth] config")?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub predictions: String,
    pub ground_truth: String,
    pub fr_threshold: f64,
    pub auc_threshold: f64,
    pub ced_points: usize,
    /// Ground-truth landmarks whose distance normalises each sample.
    pub norm_landmarks: [usize; 2],
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = EvalConfig::default();
        Self {
            predictions: String::new(),
            ground_truth: String::new(),
            fr_threshold: d.fr_threshold,
            auc_threshold: d.auc_threshold,
            ced_points: d.ced_points,
            norm_landmarks: [0, 1],
        }
    }
}

impl EvalSection {
    pub fn to_core(&self) -> EvalConfig {
        EvalConfig {
            fr_threshold: self.fr_threshold,
            auc_threshold: self.auc_threshold,
            ced_points: self.ced_points,
        }
    }
}
