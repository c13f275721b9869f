//! A synthetic landmark task and a linear heatmap scorer trained by
//! mini-batch gradient descent under any of the three objectives.
//!
//! Each image shows one ellipse contour; the landmarks are axis endpoints
//! lying on that contour. The scorer maps the flattened image (plus a bias
//! input) to one score heatmap per landmark, so the gradient of any per-cell
//! loss with respect to the weights is the outer product of the heatmap
//! gradient with the input features.

use std::f64::consts::PI;

use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, require_positive, Error, Result};
use crate::heatmap::{make_gaussian_target, Heatmap, LandmarkSet, Point};
use crate::losses::{
    heatmap_mse_loss, mean_structured_loss, soft_argmax_l2_loss, structured_loss, LossGrad, StructuredLossConfig,
};
use crate::metrics::nme;
use crate::rng::{indexed_seed, seeded, sub_seed};
use crate::smoothing::{
    build_edge_heatmap, fit_gaussian_label, refine_edge_heatmap, sample_label, BoundaryDef, GaussianLabel,
    SmoothingConfig,
};

/// A grayscale image with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl SynthImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        if pixels.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        if let Some(index) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("pixels", format!("value at {index} outside [0, 1]")));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.pixels[v * self.width + u]
    }

    pub fn to_heatmap(&self) -> Heatmap {
        Heatmap::from_parts_unchecked(self.width, self.height, self.pixels.clone())
    }
}

/// Ellipse geometry a sample was rendered from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: Point,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Rotation of the major axis, radians.
    pub angle: f64,
}

impl Ellipse {
    pub fn point_at(&self, t: f64) -> Point {
        let (s, c) = self.angle.sin_cos();
        let (x, y) = (self.semi_major * t.cos(), self.semi_minor * t.sin());
        Point::new(self.center.u + c * x - s * y, self.center.v + s * x + c * y)
    }

    /// The contour as a closed polygon with `n` vertices.
    pub fn polygon(&self, n: usize) -> Vec<Point> {
        (0..n).map(|i| self.point_at(2.0 * PI * i as f64 / n as f64)).collect()
    }

    /// Landmark `i`: major endpoint, minor endpoint, opposite major endpoint,
    /// opposite minor endpoint, cycling.
    pub fn landmark(&self, i: usize) -> Point {
        self.point_at([0.0, 0.5 * PI, PI, 1.5 * PI][i % 4])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub image: SynthImage,
    pub landmarks: LandmarkSet,
    /// Distance between landmarks 0 and 2 (the major axis) when present,
    /// otherwise between landmarks 0 and 1.
    pub norm_distance: f64,
    pub ellipse: Option<Ellipse>,
}

impl SynthSample {
    pub fn new(image: SynthImage, landmarks: LandmarkSet, norm_distance: f64) -> Result<Self> {
        landmarks.check_bounds(image.width, image.height)?;
        require_positive("norm_distance", norm_distance)?;
        Ok(Self {
            image,
            landmarks,
            norm_distance,
            ellipse: None,
        })
    }

    /// Input feature vector: pixels followed by a constant bias input.
    pub fn features(&self) -> Vec<f64> {
        let mut x = self.image.pixels.clone();
        x.push(1.0);
        x
    }
}

/// Parameters of [`generate_dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetParams {
    pub n_samples: usize,
    pub width: usize,
    pub height: usize,
    pub n_landmarks: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            n_samples: 500,
            width: 32,
            height: 32,
            n_landmarks: 3,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

/// Randomisation ranges, as fractions of the image size where relevant.
pub const CENTER_RANGE: (f64, f64) = (0.4, 0.6);
pub const SEMI_MAJOR_RANGE: (f64, f64) = (0.2, 0.3);
pub const SEMI_MINOR_RANGE: (f64, f64) = (0.1, 0.18);
pub const ANGLE_RANGE: (f64, f64) = (-PI / 8.0, PI / 8.0);
/// Contour cells within this distance render at full brightness.
const LINE_CORE: f64 = 0.75;
const LINE_FALLOFF: f64 = 0.5;
const POLYGON_VERTICES: usize = 96;

fn render(ellipse: &Ellipse, width: usize, height: usize) -> Vec<f64> {
    let poly = ellipse.polygon(POLYGON_VERTICES);
    let mut out = Vec::with_capacity(width * height);
    for v in 0..height {
        for u in 0..width {
            let p = Point::new(u as f64, v as f64);
            let d = (0..poly.len())
                .map(|i| segment_distance(p, poly[i], poly[(i + 1) % poly.len()]))
                .fold(f64::INFINITY, f64::min);
            let excess = (d - LINE_CORE).max(0.0);
            out.push((-excess * excess / (2.0 * LINE_FALLOFF * LINE_FALLOFF)).exp());
        }
    }
    out
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (du, dv) = (b.u - a.u, b.v - a.v);
    let len2 = du * du + dv * dv;
    let t = if len2 > 0.0 {
        (((p.u - a.u) * du + (p.v - a.v) * dv) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(Point::new(a.u + t * du, a.v + t * dv))
}

/// Renders `n_samples` noisy ellipse images with landmarks on the contour.
pub fn generate_dataset(params: &DatasetParams) -> Result<Vec<SynthSample>> {
    let DatasetParams {
        n_samples,
        width,
        height,
        n_landmarks,
        noise_sigma,
        seed,
    } = *params;
    if n_samples == 0 {
        return Err(invalid("n_samples", "must be at least 1"));
    }
    if width < 8 || height < 8 {
        return Err(Error::InvalidDimensions { width, height });
    }
    if !(1..=4).contains(&n_landmarks) {
        return Err(invalid("n_landmarks", "must be between 1 and 4"));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(invalid("noise_sigma", "must be finite and >= 0"));
    }
    let mut rng = seeded(sub_seed(seed, "dataset"));
    let scale = width.min(height) as f64;
    let noise = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE)).expect("sigma is positive");
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let ellipse = Ellipse {
            center: Point::new(
                width as f64 * rng.random_range(CENTER_RANGE.0..CENTER_RANGE.1),
                height as f64 * rng.random_range(CENTER_RANGE.0..CENTER_RANGE.1),
            ),
            semi_major: scale * rng.random_range(SEMI_MAJOR_RANGE.0..SEMI_MAJOR_RANGE.1),
            semi_minor: scale * rng.random_range(SEMI_MINOR_RANGE.0..SEMI_MINOR_RANGE.1),
            angle: rng.random_range(ANGLE_RANGE.0..ANGLE_RANGE.1),
        };
        let mut pixels = render(&ellipse, width, height);
        if noise_sigma > 0.0 {
            for p in &mut pixels {
                *p = (*p + noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
        let points: Vec<Point> = (0..n_landmarks).map(|i| ellipse.landmark(i)).collect();
        let norm_distance = if n_landmarks >= 3 {
            points[0].distance(points[2])
        } else if n_landmarks == 2 {
            points[0].distance(points[1])
        } else {
            ellipse.semi_major
        };
        let mut sample = SynthSample::new(
            SynthImage::new(width, height, pixels)?,
            LandmarkSet::new(points)?,
            norm_distance,
        )?;
        sample.ellipse = Some(ellipse);
        out.push(sample);
    }
    Ok(out)
}

/// One score heatmap per landmark from a linear map of the image.
///
/// Row `n * H * W + k` of `weights` produces the score of cell `k` in
/// heatmap `n`; the last column multiplies the bias input.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScorer {
    pub n_landmarks: usize,
    pub width: usize,
    pub height: usize,
    pub weights: Array2<f64>,
}

impl LinearScorer {
    pub fn zeros(n_landmarks: usize, width: usize, height: usize) -> Self {
        let cells = width * height;
        Self {
            n_landmarks,
            width,
            height,
            weights: Array2::zeros((n_landmarks * cells, cells + 1)),
        }
    }

    /// Weights drawn from `N(0, scale^2)`.
    pub fn random(n_landmarks: usize, width: usize, height: usize, scale: f64, seed: u64) -> Self {
        let mut s = Self::zeros(n_landmarks, width, height);
        let normal = Normal::new(0.0, scale).expect("finite scale");
        let mut rng = seeded(seed);
        s.weights.mapv_inplace(|_| normal.sample(&mut rng));
        s
    }

    pub fn n_params(&self) -> usize {
        self.weights.len()
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    fn cells(&self) -> usize {
        self.width * self.height
    }

    /// Scores for a batch of feature rows, one output row per sample.
    fn scores(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t())
    }

    pub fn predict_heatmaps(&self, sample: &SynthSample) -> Result<Vec<Heatmap>> {
        let x = Array2::from_shape_vec((1, self.cells() + 1), sample.features()).expect("feature length");
        let s = self.scores(x.view());
        (0..self.n_landmarks)
            .map(|n| {
                let row = s.slice(s![0, n * self.cells()..(n + 1) * self.cells()]);
                Heatmap::new(self.width, self.height, row.to_vec())
            })
            .collect()
    }

    /// Argmax inference on every landmark heatmap.
    pub fn predict(&self, sample: &SynthSample) -> Result<LandmarkSet> {
        let points = self
            .predict_heatmaps(sample)?
            .iter()
            .map(|h| Point::from(h.argmax().coord))
            .collect();
        LandmarkSet::new(points)
    }
}

/// Image-aware smoothing options for the structured objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSmoothing {
    pub config: SmoothingConfig,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Structured {
        loss: StructuredLossConfig,
        smoothing: Option<LabelSmoothing>,
    },
    SoftArgmaxL2,
    HeatmapMse {
        sigma: f64,
    },
}

impl Objective {
    pub fn structured() -> Self {
        Self::Structured {
            loss: StructuredLossConfig::default(),
            smoothing: None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Structured { smoothing: None, .. } => "structured",
            Self::Structured { smoothing: Some(_), .. } => "structured_smoothed",
            Self::SoftArgmaxL2 => "softargmax",
            Self::HeatmapMse { .. } => "mse",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub learning_rate: f64,
    /// Coefficient `C` of the `C/2 |W|^2` penalty.
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub target_nme: f64,
    /// Stop after the first epoch whose eval NME reaches `target_nme`.
    pub early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::structured(),
            learning_rate: 0.05,
            weight_decay: 0.0,
            epochs: 30,
            batch_size: 16,
            seed: 0,
            target_nme: 0.08,
            early_stop: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(invalid("learning_rate", "must be finite and >= 0"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(invalid("weight_decay", "must be finite and >= 0"));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        require_positive("target_nme", self.target_nme)?;
        match &self.objective {
            Objective::Structured { loss, smoothing } => {
                loss.validate()?;
                if let Some(sm) = smoothing {
                    sm.config.validate()?;
                    if sm.n_samples == 0 {
                        return Err(invalid("n_samples", "must be at least 1"));
                    }
                }
            }
            Objective::SoftArgmaxL2 => {}
            Objective::HeatmapMse { sigma } => require_positive("sigma", *sigma)?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_nme: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub scorer: LinearScorer,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    /// First epoch whose eval NME is at or below `target`.
    pub fn epochs_to(&self, target: f64) -> Option<usize> {
        self.history.iter().find(|r| r.eval_nme <= target).map(|r| r.epoch)
    }
}

/// Mean NME of argmax predictions over `samples`.
pub fn mean_nme(scorer: &LinearScorer, samples: &[SynthSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let cells = scorer.cells();
    let mut x = Array2::zeros((samples.len(), cells + 1));
    for (row, s) in samples.iter().enumerate() {
        x.row_mut(row).assign(&ArrayView1::from(&s.features()));
    }
    let scores = scorer.scores(x.view());
    let mut total = 0.0;
    for (row, s) in samples.iter().enumerate() {
        let points = (0..scorer.n_landmarks)
            .map(|n| {
                let h = Heatmap::from_parts_unchecked(
                    scorer.width,
                    scorer.height,
                    scores.slice(s![row, n * cells..(n + 1) * cells]).to_vec(),
                );
                Point::from(h.argmax().coord)
            })
            .collect();
        total += nme(&LandmarkSet::new(points)?, &s.landmarks, s.norm_distance)?;
    }
    Ok(total / samples.len() as f64)
}

/// Fits one smoothing label per landmark, using the rendered contour (or,
/// for imported samples, the landmark chain) as the pseudo boundary.
pub fn fit_sample_labels(sample: &SynthSample, cfg: &SmoothingConfig) -> Result<Vec<GaussianLabel>> {
    let (w, h) = (sample.image.width, sample.image.height);
    if w != h || cfg.edge_map_size != w {
        return Err(invalid(
            "edge_map_size",
            format!("must equal the square image side, image is {w}x{h}"),
        ));
    }
    let (outline, curve) = match &sample.ellipse {
        Some(e) => {
            let n = 64;
            let mut curve: Vec<usize> = (0..n).collect();
            curve.push(0);
            (LandmarkSet::new(e.polygon(n))?, curve)
        }
        None => (sample.landmarks.clone(), (0..sample.landmarks.len()).collect()),
    };
    if curve.len() < 2 {
        return Err(invalid(
            "landmarks",
            "at least two landmarks are needed to draw a boundary",
        ));
    }
    let edges = build_edge_heatmap(&outline, &BoundaryDef::new(vec![curve])?, cfg)?;
    let refined = refine_edge_heatmap(&edges, cfg)?;
    sample
        .landmarks
        .points()
        .iter()
        .map(|&p| fit_gaussian_label(&refined, p, cfg))
        .collect()
}

struct Prepared<'a> {
    cfg: &'a TrainConfig,
    labels: Option<Vec<Vec<GaussianLabel>>>,
    targets: Option<Vec<Vec<Heatmap>>>,
}

impl Prepared<'_> {
    fn landmark_loss(&self, h: &Heatmap, sample: &SynthSample, idx: usize, n: usize, epoch: usize) -> Result<LossGrad> {
        let y = sample.landmarks.points()[n];
        match &self.cfg.objective {
            Objective::Structured { loss, smoothing } => match (smoothing, &self.labels) {
                (Some(sm), Some(labels)) => {
                    let seed = indexed_seed(
                        sub_seed(self.cfg.seed, "label-samples"),
                        &[epoch as u64, idx as u64, n as u64],
                    );
                    let cells = sample_label(&labels[idx][n], sm.n_samples, seed, h.shape())?;
                    mean_structured_loss(h, &cells, loss)
                }
                _ => structured_loss(h, y.round_clamped(h.width(), h.height()), loss),
            },
            Objective::SoftArgmaxL2 => soft_argmax_l2_loss(h, y),
            Objective::HeatmapMse { .. } => {
                let t = &self.targets.as_ref().expect("targets prepared")[idx][n];
                heatmap_mse_loss(h, t)
            }
        }
    }
}

fn check_shapes(samples: &[SynthSample], scorer: &LinearScorer) -> Result<()> {
    for s in samples {
        if (s.image.width, s.image.height) != (scorer.width, scorer.height) || s.landmarks.len() != scorer.n_landmarks {
            return Err(invalid(
                "dataset",
                format!(
                    "sample is {}x{} with {} landmarks, scorer expects {}x{} with {}",
                    s.image.width,
                    s.image.height,
                    s.landmarks.len(),
                    scorer.width,
                    scorer.height,
                    scorer.n_landmarks
                ),
            ));
        }
    }
    Ok(())
}

impl<'a> Prepared<'a> {
    fn new(cfg: &'a TrainConfig, samples: &[SynthSample], scorer: &LinearScorer) -> Result<Self> {
        let labels = match &cfg.objective {
            Objective::Structured {
                smoothing: Some(sm), ..
            } => Some(
                samples
                    .iter()
                    .map(|s| fit_sample_labels(s, &sm.config))
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => None,
        };
        let targets = match &cfg.objective {
            Objective::HeatmapMse { sigma } => Some(
                samples
                    .iter()
                    .map(|s| {
                        s.landmarks
                            .points()
                            .iter()
                            .map(|&p| make_gaussian_target(p, scorer.width, scorer.height, *sigma))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => None,
        };
        Ok(Self { cfg, labels, targets })
    }

    fn diverged(&self, epoch: usize) -> Error {
        Error::Diverged {
            epoch,
            objective: self.cfg.objective.name().to_string(),
        }
    }

    /// Summed loss over `batch` and the weight gradient of the batch-mean
    /// loss (without the penalty).
    fn batch_gradient(
        &self,
        scorer: &LinearScorer,
        samples: &[SynthSample],
        features: &[Vec<f64>],
        batch: &[usize],
        epoch: usize,
    ) -> Result<(f64, Array2<f64>)> {
        let cells = scorer.cells();
        let mut x = Array2::zeros((batch.len(), cells + 1));
        for (row, &i) in batch.iter().enumerate() {
            x.row_mut(row).assign(&ArrayView1::from(&features[i]));
        }
        let scores = scorer.scores(x.view());
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(self.diverged(epoch));
        }
        let mut g = Array2::zeros(scores.raw_dim());
        let inv_b = 1.0 / batch.len() as f64;
        let mut loss_sum = 0.0;
        for (row, &i) in batch.iter().enumerate() {
            for n in 0..scorer.n_landmarks {
                let span = n * cells..(n + 1) * cells;
                let h = Heatmap::from_parts_unchecked(
                    scorer.width,
                    scorer.height,
                    scores.slice(s![row, span.clone()]).to_vec(),
                );
                let lg = self.landmark_loss(&h, &samples[i], i, n, epoch).map_err(|e| match e {
                    Error::InvalidParameter { name: "loss", .. } => self.diverged(epoch),
                    e => e,
                })?;
                loss_sum += lg.value;
                g.slice_mut(s![row, span])
                    .assign(&ArrayView1::from(lg.grad.values()).mapv(|d| d * inv_b));
            }
        }
        Ok((loss_sum, g.t().dot(&x)))
    }
}

/// Mini-batch gradient descent on the mean per-sample objective plus
/// `C/2 |W|^2`. Records the mean training loss and held-out NME per epoch;
/// an empty `eval_set` evaluates on the training set.
pub fn train(
    train_set: &[SynthSample],
    eval_set: &[SynthSample],
    scorer: LinearScorer,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    check_shapes(train_set, &scorer)?;
    check_shapes(eval_set, &scorer)?;
    let prep = Prepared::new(cfg, train_set, &scorer)?;
    let features: Vec<Vec<f64>> = train_set.iter().map(SynthSample::features).collect();
    let eval_set = if eval_set.is_empty() { train_set } else { eval_set };

    let mut scorer = scorer;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut seeded(indexed_seed(
            sub_seed(cfg.seed, "shuffle"),
            &[epoch as u64],
        )));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (l, mut grad_w) = prep.batch_gradient(&scorer, train_set, &features, batch, epoch)?;
            loss_sum += l;
            if cfg.weight_decay > 0.0 {
                grad_w.scaled_add(cfg.weight_decay, &scorer.weights);
            }
            scorer.weights.scaled_add(-cfg.learning_rate, &grad_w);
        }
        let train_loss = loss_sum / train_set.len() as f64;
        if !train_loss.is_finite() || scorer.weights.iter().any(|w| !w.is_finite()) {
            return Err(prep.diverged(epoch));
        }
        let eval_nme = mean_nme(&scorer, eval_set)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            eval_nme,
        });
        if cfg.early_stop && eval_nme <= cfg.target_nme {
            break;
        }
    }
    Ok(TrainOutcome { scorer, history })
}

/// Full-batch objective `mean_i sum_n L_in + C/2 |W|^2` and its analytic
/// gradient, with smoothing targets drawn as in `epoch`.
pub fn objective_gradient(
    samples: &[SynthSample],
    scorer: &LinearScorer,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<(f64, Array2<f64>)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("training set"));
    }
    check_shapes(samples, scorer)?;
    let prep = Prepared::new(cfg, samples, scorer)?;
    let features: Vec<Vec<f64>> = samples.iter().map(SynthSample::features).collect();
    let all: Vec<usize> = (0..samples.len()).collect();
    let (loss_sum, mut grad) = prep.batch_gradient(scorer, samples, &features, &all, epoch)?;
    grad.scaled_add(cfg.weight_decay, &scorer.weights);
    let penalty = 0.5 * cfg.weight_decay * scorer.weights.iter().map(|w| w * w).sum::<f64>();
    Ok((loss_sum / samples.len() as f64 + penalty, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Convergence {
    pub epochs_a: Option<usize>,
    pub epochs_b: Option<usize>,
    /// `epochs_b / epochs_a`; infinite when only `a` reaches the target,
    /// zero when only `b` does, `None` when neither does.
    pub speedup: Option<f64>,
    pub history_a: Vec<EpochRecord>,
    pub history_b: Vec<EpochRecord>,
}

pub fn speedup(epochs_a: Option<usize>, epochs_b: Option<usize>) -> Option<f64> {
    match (epochs_a, epochs_b) {
        (Some(a), Some(b)) => Some(b as f64 / a as f64),
        (Some(_), None) => Some(f64::INFINITY),
        (None, Some(_)) => Some(0.0),
        (None, None) => None,
    }
}

/// Trains both configurations from zero weights and compares the first
/// epoch at which each reaches `target_nme` on the held-out split.
pub fn compare_convergence(
    train_set: &[SynthSample],
    eval_set: &[SynthSample],
    cfg_a: &TrainConfig,
    cfg_b: &TrainConfig,
    target_nme: f64,
) -> Result<Convergence> {
    require_positive("target_nme", target_nme)?;
    let first = train_set.first().ok_or(Error::Empty("training set"))?;
    let zeros = || LinearScorer::zeros(first.landmarks.len(), first.image.width, first.image.height);
    let a = train(
        train_set,
        eval_set,
        zeros(),
        &TrainConfig {
            target_nme,
            ..cfg_a.clone()
        },
    )?;
    let b = train(
        train_set,
        eval_set,
        zeros(),
        &TrainConfig {
            target_nme,
            ..cfg_b.clone()
        },
    )?;
    let (epochs_a, epochs_b) = (a.epochs_to(target_nme), b.epochs_to(target_nme));
    Ok(Convergence {
        epochs_a,
        epochs_b,
        speedup: speedup(epochs_a, epochs_b),
        history_a: a.history,
        history_b: b.history,
    })
}

/// Picks the learning rate from `grid` reaching the target in the fewest
/// epochs (ties broken by the lower final NME). Diverging rates are skipped.
pub fn tune_learning_rate(
    train_set: &[SynthSample],
    eval_set: &[SynthSample],
    cfg: &TrainConfig,
    grid: &[f64],
) -> Result<(f64, Option<usize>)> {
    let first = train_set.first().ok_or(Error::Empty("training set"))?;
    let mut best: Option<(f64, Option<usize>, f64)> = None;
    for &lr in grid {
        let run_cfg = TrainConfig {
            learning_rate: lr,
            early_stop: true,
            ..cfg.clone()
        };
        let scorer = LinearScorer::zeros(first.landmarks.len(), first.image.width, first.image.height);
        let out = match train(train_set, eval_set, scorer, &run_cfg) {
            Ok(o) => o,
            Err(Error::Diverged { .. }) => continue,
            Err(e) => return Err(e),
        };
        let epochs = out.epochs_to(cfg.target_nme);
        let final_nme = out.history.last().map_or(f64::INFINITY, |r| r.eval_nme);
        let better = match &best {
            None => true,
            Some((_, be, bn)) => match (epochs, be) {
                (Some(e), Some(b)) => e < *b || (e == *b && final_nme < *bn),
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => final_nme < *bn,
            },
        };
        if better {
            best = Some((lr, epochs, final_nme));
        }
    }
    best.map(|(lr, e, _)| (lr, e))
        .ok_or_else(|| invalid("learning_rate grid", "every candidate diverged or the grid is empty"))
}

/// Convergence comparison of two objectives over several dataset seeds.
///
/// Each objective's learning rate is searched once on the first seed and
/// then reused for every seed.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub dataset: DatasetParams,
    pub eval_fraction: f64,
    pub seeds: Vec<u64>,
    pub target_nme: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop each comparison run once it reaches `target_nme`.
    pub early_stop: bool,
    pub objective_a: Objective,
    pub grid_a: Vec<f64>,
    pub objective_b: Objective,
    pub grid_b: Vec<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetParams::default(),
            eval_fraction: 0.2,
            seeds: vec![0, 1, 2],
            target_nme: 0.08,
            epochs: 20,
            batch_size: 16,
            early_stop: true,
            objective_a: Objective::structured(),
            grid_a: vec![0.03, 0.1, 0.3, 1.0],
            objective_b: Objective::SoftArgmaxL2,
            grid_b: vec![0.03, 0.1, 0.3, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub seed: u64,
    pub convergence: Convergence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub learning_rate_a: f64,
    pub learning_rate_b: f64,
    pub runs: Vec<BenchRun>,
}

fn bench_data(cfg: &BenchConfig, seed: u64) -> Result<(Vec<SynthSample>, Vec<SynthSample>)> {
    let data = generate_dataset(&DatasetParams {
        seed,
        ..cfg.dataset
    })?;
    let (train_set, eval_set) = split(data, cfg.eval_fraction);
    if train_set.is_empty() || eval_set.is_empty() {
        return Err(invalid("eval_fraction", "leaves an empty training or evaluation split"));
    }
    Ok((train_set, eval_set))
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let first_seed = *cfg.seeds.first().ok_or(Error::Empty("seed list"))?;
    let train_cfg = |objective: &Objective, lr: f64, seed: u64| TrainConfig {
        objective: objective.clone(),
        learning_rate: lr,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed,
        target_nme: cfg.target_nme,
        ..TrainConfig::default()
    };
    let (train_set, eval_set) = bench_data(cfg, first_seed)?;
    let (lr_a, _) = tune_learning_rate(
        &train_set,
        &eval_set,
        &train_cfg(&cfg.objective_a, 1.0, first_seed),
        &cfg.grid_a,
    )?;
    let (lr_b, _) = tune_learning_rate(
        &train_set,
        &eval_set,
        &train_cfg(&cfg.objective_b, 1.0, first_seed),
        &cfg.grid_b,
    )?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let (train_set, eval_set) = bench_data(cfg, seed)?;
        let a = TrainConfig {
            early_stop: cfg.early_stop,
            ..train_cfg(&cfg.objective_a, lr_a, seed)
        };
        let b = TrainConfig {
            early_stop: cfg.early_stop,
            ..train_cfg(&cfg.objective_b, lr_b, seed)
        };
        let convergence = compare_convergence(&train_set, &eval_set, &a, &b, cfg.target_nme)?;
        runs.push(BenchRun { seed, convergence });
    }
    Ok(BenchReport {
        learning_rate_a: lr_a,
        learning_rate_b: lr_b,
        runs,
    })
}

/// Splits off the last `eval_fraction` of samples as the held-out set.
pub fn split(samples: Vec<SynthSample>, eval_fraction: f64) -> (Vec<SynthSample>, Vec<SynthSample>) {
    let n_eval = ((samples.len() as f64) * eval_fraction.clamp(0.0, 1.0)).round() as usize;
    let mut train = samples;
    let eval = train.split_off(train.len() - n_eval.min(train.len()));
    (train, eval)
}
