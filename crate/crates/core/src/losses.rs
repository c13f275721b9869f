//! Training objectives over heatmap scores, each returning its value together
//! with the closed-form gradient with respect to every heatmap cell.
//!
//! * [`structured_loss`]: the temperature-relaxed loss-augmented hinge
//!   `eps * ln sum_k exp((margin_k + H_k) / eps) - H[y]`.
//! * [`soft_argmax_l2_loss`]: squared error of the soft-argmax coordinate.
//! * [`heatmap_mse_loss`]: summed squared error against a target heatmap.
//! * [`smoothed_structured_loss`]: Monte Carlo average of the structured loss
//!   over targets drawn from a [`GaussianLabel`].
//!
//! The margin table is treated as a constant of each call, so no gradient
//! flows through it.

use std::collections::BTreeMap;

use crate::error::{invalid, require_positive, Error, Result};
use crate::heatmap::{log_sum_exp, softmax, GridCoord, Heatmap, Point};
use crate::smoothing::{sample_label, GaussianLabel};

/// Distance family used as the task loss between truth and a candidate cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarginKind {
    None,
    L1,
    /// Squared Euclidean distance.
    L2,
    SmoothL1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginSpec {
    pub kind: MarginKind,
    /// Quadratic/linear breakpoint of the smooth-l1 margin.
    pub s: f64,
    /// Weight of the margin term.
    pub alpha: f64,
    /// Divide coordinates by `max(width, height)` before measuring distance.
    pub normalize_coords: bool,
}

impl MarginSpec {
    pub const fn none() -> Self {
        Self {
            kind: MarginKind::None,
            s: 0.01,
            alpha: 1.0,
            normalize_coords: true,
        }
    }

    pub const fn l1(alpha: f64) -> Self {
        Self {
            kind: MarginKind::L1,
            alpha,
            ..Self::none()
        }
    }

    pub const fn l2(alpha: f64) -> Self {
        Self {
            kind: MarginKind::L2,
            alpha,
            ..Self::none()
        }
    }

    pub const fn smooth_l1(s: f64, alpha: f64) -> Self {
        Self {
            kind: MarginKind::SmoothL1,
            s,
            alpha,
            normalize_coords: true,
        }
    }

    pub const fn with_normalize(mut self, normalize_coords: bool) -> Self {
        self.normalize_coords = normalize_coords;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(invalid("alpha", format!("must be finite and >= 0, got {}", self.alpha)));
        }
        if self.kind == MarginKind::SmoothL1 {
            require_positive("s", self.s)?;
        }
        Ok(())
    }

    fn eval_unchecked(&self, du: f64, dv: f64) -> f64 {
        let l1 = du.abs() + dv.abs();
        let sq = du * du + dv * dv;
        let raw = match self.kind {
            MarginKind::None => return 0.0,
            MarginKind::L1 => l1,
            MarginKind::L2 => sq,
            MarginKind::SmoothL1 => {
                if l1 < self.s {
                    0.5 / self.s * sq
                } else {
                    l1 - 0.5 * self.s
                }
            }
        };
        self.alpha * raw
    }

    /// The margin for every cell of a `width` x `height` grid, against truth `y`.
    pub(crate) fn table(&self, y: Point, width: usize, height: usize) -> Vec<f64> {
        let scale = self.scale(width, height);
        let mut out = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                out.push(self.eval_unchecked((u as f64 - y.u) * scale, (v as f64 - y.v) * scale));
            }
        }
        out
    }

    fn scale(&self, width: usize, height: usize) -> f64 {
        if self.normalize_coords {
            1.0 / width.max(height) as f64
        } else {
            1.0
        }
    }
}

impl Default for MarginSpec {
    /// Smooth-l1 with `s = 0.01`, `alpha = 1` on normalised coordinates.
    fn default() -> Self {
        Self::smooth_l1(0.01, 1.0)
    }
}

/// Evaluates the margin between truth `y` and candidate `y_hat`.
pub fn margin(spec: &MarginSpec, y: Point, y_hat: Point, grid_size: (usize, usize)) -> Result<f64> {
    spec.validate()?;
    if !y.is_finite() || !y_hat.is_finite() {
        return Err(invalid("coordinates", "must be finite"));
    }
    let (w, h) = grid_size;
    if w == 0 || h == 0 {
        return Err(Error::InvalidDimensions { width: w, height: h });
    }
    let scale = spec.scale(w, h);
    Ok(spec.eval_unchecked((y_hat.u - y.u) * scale, (y_hat.v - y.v) * scale))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuredLossConfig {
    /// Temperature of the log-sum-exp relaxation.
    pub epsilon: f64,
    pub margin: MarginSpec,
}

impl StructuredLossConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("epsilon", self.epsilon)?;
        self.margin.validate()
    }
}

impl Default for StructuredLossConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            margin: MarginSpec::default(),
        }
    }
}

/// A loss value with its gradient with respect to each heatmap cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Heatmap,
}

impl LossGrad {
    fn new(value: f64, width: usize, height: usize, grad: Vec<f64>) -> Result<Self> {
        if !value.is_finite() {
            return Err(invalid("loss", "evaluated to a non-finite value"));
        }
        Ok(Self {
            value,
            grad: Heatmap::new(width, height, grad)?,
        })
    }
}

/// Relaxed loss-augmented inference loss for a single landmark.
///
/// `grad[k] = p_k - [k == y]` with `p = softmax((margin + H) / epsilon)`.
pub fn structured_loss(h: &Heatmap, y: GridCoord, cfg: &StructuredLossConfig) -> Result<LossGrad> {
    cfg.validate()?;
    if !h.contains(y) {
        return Err(Error::OutOfBounds {
            u: y.u as f64,
            v: y.v as f64,
            width: h.width(),
            height: h.height(),
        });
    }
    let (w, ht) = h.shape();
    let mut augmented = cfg.margin.table(Point::from(y), w, ht);
    for (a, &s) in augmented.iter_mut().zip(h.values()) {
        *a += s;
    }
    let k_true = h.index_of(y);
    let value = log_sum_exp(&augmented, cfg.epsilon) - h.values()[k_true];
    let mut grad = softmax(&augmented, cfg.epsilon);
    grad[k_true] -= 1.0;
    LossGrad::new(value, w, ht, grad)
}

/// Mean of [`structured_loss`] over several target cells. Repeated cells
/// are evaluated once and weighted by their multiplicity.
pub fn mean_structured_loss(h: &Heatmap, targets: &[GridCoord], cfg: &StructuredLossConfig) -> Result<LossGrad> {
    if targets.is_empty() {
        return Err(Error::Empty("target cells"));
    }
    let mut counts: BTreeMap<GridCoord, usize> = BTreeMap::new();
    for &t in targets {
        *counts.entry(t).or_default() += 1;
    }
    let n = targets.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; h.len()];
    for (&t, &c) in &counts {
        let weight = c as f64 / n;
        let lg = structured_loss(h, t, cfg)?;
        value += weight * lg.value;
        for (g, &d) in grad.iter_mut().zip(lg.grad.values()) {
            *g += weight * d;
        }
    }
    LossGrad::new(value, h.width(), h.height(), grad)
}

/// Squared distance between the soft-argmax (temperature 1) and `y`.
pub fn soft_argmax_l2_loss(h: &Heatmap, y: Point) -> Result<LossGrad> {
    if !y.is_finite() || !crate::heatmap::in_bounds(y, h.width(), h.height()) {
        return Err(Error::OutOfBounds {
            u: y.u,
            v: y.v,
            width: h.width(),
            height: h.height(),
        });
    }
    let p = h.softmax_tempered(1.0)?;
    let s = p.expected_coord();
    let (eu, ev) = (s.u - y.u, s.v - y.v);
    let value = eu * eu + ev * ev;
    // d soft / d H_k = p_k (coord_k - soft)
    let grad = p
        .values()
        .iter()
        .enumerate()
        .map(|(k, &pk)| {
            let c = h.coord_of(k);
            2.0 * pk * (eu * (c.u as f64 - s.u) + ev * (c.v as f64 - s.v))
        })
        .collect();
    LossGrad::new(value, h.width(), h.height(), grad)
}

/// Summed squared error between predicted and target heatmaps.
pub fn heatmap_mse_loss(pred: &Heatmap, target: &Heatmap) -> Result<LossGrad> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            left: pred.shape(),
            right: target.shape(),
        });
    }
    let diff: Vec<f64> = pred.values().iter().zip(target.values()).map(|(a, b)| a - b).collect();
    let value = diff.iter().map(|d| d * d).sum();
    let grad = diff.into_iter().map(|d| 2.0 * d).collect();
    LossGrad::new(value, pred.width(), pred.height(), grad)
}

/// Monte Carlo estimate of the structured loss averaged over targets drawn
/// from `label`, with rounding to the nearest in-bounds cell.
pub fn smoothed_structured_loss(
    h: &Heatmap,
    label: &GaussianLabel,
    cfg: &StructuredLossConfig,
    n_samples: usize,
    rng_seed: u64,
) -> Result<LossGrad> {
    let cells = sample_label(label, n_samples, rng_seed, h.shape())?;
    mean_structured_loss(h, &cells, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn raw(spec: MarginSpec) -> MarginSpec {
        spec.with_normalize(false)
    }

    fn random_heatmap(rng: &mut impl Rng, w: usize, h: usize) -> Heatmap {
        Heatmap::new(w, h, (0..w * h).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn margin_zero_on_diagonal() {
        let y = Point::new(3.5, 1.25);
        for spec in [
            MarginSpec::none(),
            MarginSpec::l1(2.0),
            MarginSpec::l2(0.5),
            MarginSpec::smooth_l1(0.01, 1.0),
        ] {
            assert_eq!(margin(&spec, y, y, (8, 8)).unwrap(), 0.0);
        }
    }

    #[test]
    fn smooth_l1_branches() {
        let spec = raw(MarginSpec::smooth_l1(0.01, 1.0));
        let o = Point::new(0.0, 0.0);
        let at_break = margin(&spec, o, Point::new(0.01, 0.0), (1, 1)).unwrap();
        assert!((at_break - 0.005).abs() < 1e-15);
        let just_below = margin(&spec, o, Point::new(0.01 - 1e-12, 0.0), (1, 1)).unwrap();
        assert!((just_below - 0.005).abs() < 1e-11);
        let far = margin(&spec, o, Point::new(0.3, 0.4), (1, 1)).unwrap();
        assert!((far - 0.695).abs() < 1e-12);
    }

    #[test]
    fn margin_normalisation_and_weights() {
        let y = Point::new(0.0, 0.0);
        let yh = Point::new(3.0, 4.0);
        assert_eq!(margin(&raw(MarginSpec::l1(2.0)), y, yh, (10, 5)).unwrap(), 14.0);
        assert_eq!(margin(&raw(MarginSpec::l2(1.0)), y, yh, (10, 5)).unwrap(), 25.0);
        assert!((margin(&MarginSpec::l1(1.0), y, yh, (10, 5)).unwrap() - 0.7).abs() < 1e-15);
        assert!(margin(&MarginSpec::smooth_l1(0.0, 1.0), y, yh, (10, 5)).is_err());
        assert!(margin(&MarginSpec::l1(-1.0), y, yh, (10, 5)).is_err());
    }

    #[test]
    fn structured_uniform() {
        let h = Heatmap::filled(4, 1, 0.3).unwrap();
        let cfg = StructuredLossConfig {
            epsilon: 1.0,
            margin: MarginSpec::none(),
        };
        let lg = structured_loss(&h, GridCoord::new(0, 0), &cfg).unwrap();
        assert!((lg.value - 4f64.ln()).abs() < 1e-12);
        let expect = [-0.75, 0.25, 0.25, 0.25];
        for (g, e) in lg.grad.values().iter().zip(expect) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn structured_bimodal_l1() {
        let h = Heatmap::row(vec![0.4, 0.1, 0.0, 0.1, 0.4]).unwrap();
        let mut cfg = StructuredLossConfig {
            epsilon: 1.0,
            margin: raw(MarginSpec::l1(1.0)),
        };
        let y = GridCoord::new(2, 0);
        let lg = structured_loss(&h, y, &cfg).unwrap();
        let brute = (2.4f64.exp() + 1.1f64.exp() + 1.0 + 1.1f64.exp() + 2.4f64.exp()).ln();
        assert!((lg.value - brute).abs() < 1e-12);
        cfg.epsilon = 1e-4;
        let cold = structured_loss(&h, y, &cfg).unwrap();
        assert!((cold.value - 2.4).abs() < 1e-3);
        assert!(cold.value >= 2.4);
    }

    #[test]
    fn structured_rejects() {
        let h = Heatmap::zeros(3, 2).unwrap();
        let cfg = StructuredLossConfig::default();
        assert!(structured_loss(&h, GridCoord::new(3, 0), &cfg).is_err());
        let bad = StructuredLossConfig { epsilon: 0.0, ..cfg };
        assert!(structured_loss(&h, GridCoord::new(0, 0), &bad).is_err());
    }

    #[test]
    fn soft_argmax_l2_mismatch_and_exact_fit() {
        let bi = Heatmap::row(
            [0.4f64, 0.1, 0.0, 0.1, 0.4]
                .iter()
                .map(|&p| if p > 0.0 { p.ln() } else { -1e3 })
                .collect(),
        )
        .unwrap();
        let lg = soft_argmax_l2_loss(&bi, Point::new(2.0, 0.0)).unwrap();
        assert!(lg.value < 1e-18);
        assert_ne!(bi.argmax().coord.u, 2);
        let s = structured_loss(&bi, GridCoord::new(2, 0), &StructuredLossConfig::default()).unwrap();
        assert!(s.value > 0.0);

        let uni = Heatmap::row(vec![-1e3, -1e3, 0.0, -1e3, -1e3]).unwrap();
        let lg = soft_argmax_l2_loss(&uni, Point::new(2.0, 0.0)).unwrap();
        assert_eq!(lg.value, 0.0);
        assert!(lg.grad.values().iter().all(|&g| g == 0.0));
        assert!(soft_argmax_l2_loss(&uni, Point::new(5.0, 0.0)).is_err());
    }

    #[test]
    fn mse_cases() {
        let a = Heatmap::row(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let lg = heatmap_mse_loss(&a, &a).unwrap();
        assert_eq!(lg.value, 0.0);
        assert!(lg.grad.values().iter().all(|&g| g == 0.0));
        let b = a.shifted(1.0).unwrap();
        let lg = heatmap_mse_loss(&b, &a).unwrap();
        assert_eq!(lg.value, 4.0);
        assert_eq!(lg.grad.values(), &[2.0, 2.0, 2.0, 2.0]);
        assert!(heatmap_mse_loss(&a, &Heatmap::zeros(2, 2).unwrap()).is_err());

        let mut rng = seeded(5);
        let p = random_heatmap(&mut rng, 3, 3);
        let t = random_heatmap(&mut rng, 3, 3);
        let mut brute = 0.0;
        for v in 0..3 {
            for u in 0..3 {
                brute += (p.get(u, v) - t.get(u, v)).powi(2);
            }
        }
        assert!((heatmap_mse_loss(&p, &t).unwrap().value - brute).abs() < 1e-12);
    }

    #[test]
    fn soft_argmax_l2_grad_matches_fd_1x7() {
        let mut rng = seeded(17);
        let h = random_heatmap(&mut rng, 7, 1);
        let y = Point::new(3.0, 0.0);
        let lg = soft_argmax_l2_loss(&h, y).unwrap();
        let step = 1e-5;
        for k in 0..7 {
            let mut plus = h.values().to_vec();
            let mut minus = plus.clone();
            plus[k] += step;
            minus[k] -= step;
            let fp = soft_argmax_l2_loss(&Heatmap::row(plus).unwrap(), y).unwrap().value;
            let fm = soft_argmax_l2_loss(&Heatmap::row(minus).unwrap(), y).unwrap().value;
            let fd = (fp - fm) / (2.0 * step);
            let a = lg.grad.values()[k];
            let err = (a - fd).abs();
            assert!(err < 1e-8 || err <= 1e-6 * a.abs().max(fd.abs()), "k={k} a={a} fd={fd}");
        }
    }

    #[test]
    fn mean_structured_is_average() {
        let mut rng = seeded(3);
        let h = random_heatmap(&mut rng, 5, 4);
        let cfg = StructuredLossConfig::default();
        let a = GridCoord::new(1, 2);
        let b = GridCoord::new(4, 0);
        let la = structured_loss(&h, a, &cfg).unwrap();
        let lb = structured_loss(&h, b, &cfg).unwrap();
        let m = mean_structured_loss(&h, &[a, b], &cfg).unwrap();
        assert!((m.value - 0.5 * (la.value + lb.value)).abs() < 1e-12);
        for k in 0..h.len() {
            let e = 0.5 * (la.grad.values()[k] + lb.grad.values()[k]);
            assert!((m.grad.values()[k] - e).abs() < 1e-12);
        }
        assert!(mean_structured_loss(&h, &[], &cfg).is_err());
    }

    #[test]
    fn smoothed_degenerate_equals_point_loss() {
        let mut rng = seeded(9);
        let h = random_heatmap(&mut rng, 9, 9);
        let cfg = StructuredLossConfig::default();
        let label = GaussianLabel::new(Point::new(4.2, 5.7), [[1e-12, 0.0], [0.0, 1e-12]]).unwrap();
        let s = smoothed_structured_loss(&h, &label, &cfg, 10, 1).unwrap();
        let p = structured_loss(&h, GridCoord::new(4, 6), &cfg).unwrap();
        assert_eq!(s.value, p.value);
        assert_eq!(s.grad, p.grad);
        assert!(smoothed_structured_loss(&h, &label, &cfg, 0, 1).is_err());
    }

    #[test]
    fn smoothed_two_samples_is_their_mean() {
        let mut rng = seeded(11);
        let h = random_heatmap(&mut rng, 9, 9);
        let cfg = StructuredLossConfig::default();
        let label = GaussianLabel::new(Point::new(4.0, 4.0), [[3.0, 0.5], [0.5, 2.0]]).unwrap();
        let cells = sample_label(&label, 2, 77, h.shape()).unwrap();
        let s = smoothed_structured_loss(&h, &label, &cfg, 2, 77).unwrap();
        let la = structured_loss(&h, cells[0], &cfg).unwrap().value;
        let lb = structured_loss(&h, cells[1], &cfg).unwrap().value;
        assert!((s.value - 0.5 * (la + lb)).abs() < 1e-12);
    }

    #[test]
    fn smoothed_approaches_exact_expectation() {
        // Exact expectation by enumerating cells weighted by the rounded
        // Gaussian mass, itself estimated on a fine quadrature grid.
        let mut rng = seeded(21);
        let h = random_heatmap(&mut rng, 9, 9);
        let cfg = StructuredLossConfig::default();
        let label = GaussianLabel::new(Point::new(4.3, 3.8), [[1.5, 0.4], [0.4, 0.8]]).unwrap();
        let cov = label.cov;
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        let inv = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
        let mut weights = vec![0.0; 81];
        let n = 400;
        let (lo, hi) = (-8.0, 8.0);
        let step = (hi - lo) / n as f64;
        for i in 0..n {
            for j in 0..n {
                let du = lo + (i as f64 + 0.5) * step;
                let dv = lo + (j as f64 + 0.5) * step;
                let q = inv[0][0] * du * du + 2.0 * inv[0][1] * du * dv + inv[1][1] * dv * dv;
                let d = (-0.5 * q).exp();
                let c = Point::new(label.mean.u + du, label.mean.v + dv).round_clamped(9, 9);
                weights[c.v * 9 + c.u] += d;
            }
        }
        let z: f64 = weights.iter().sum();
        let mut exact = 0.0;
        for (k, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                exact += w / z * structured_loss(&h, h.coord_of(k), &cfg).unwrap().value;
            }
        }
        let mc = smoothed_structured_loss(&h, &label, &cfg, 20_000, 5).unwrap().value;
        assert!((mc - exact).abs() < 0.02, "mc={mc} exact={exact}");
    }

    fn margins() -> [MarginSpec; 4] {
        [
            MarginSpec::none(),
            MarginSpec::l1(1.0),
            MarginSpec::l2(1.0),
            MarginSpec::smooth_l1(0.01, 1.0),
        ]
    }

    proptest! {
        #[test]
        fn structured_identities(
            w in 1usize..10, ht in 1usize..10, seed in any::<u64>(),
            eps in 0.2f64..3.0, m in 0usize..4, c in -30.0f64..30.0,
        ) {
            let mut rng = seeded(seed);
            let h = random_heatmap(&mut rng, w, ht);
            let y = GridCoord::new(rng.random_range(0..w), rng.random_range(0..ht));
            let cfg = StructuredLossConfig { epsilon: eps, margin: margins()[m] };
            let lg = structured_loss(&h, y, &cfg).unwrap();
            let sum: f64 = lg.grad.values().iter().sum();
            prop_assert!(sum.abs() < 1e-10);
            let gy = lg.grad.values()[h.index_of(y)];
            prop_assert!((-1.0..=0.0).contains(&gy));
            let shifted = structured_loss(&h.shifted(c).unwrap(), y, &cfg).unwrap();
            prop_assert!((shifted.value - lg.value).abs() < 1e-9);
        }

        #[test]
        fn no_margin_is_tempered_cross_entropy(w in 1usize..10, ht in 1usize..10, seed in any::<u64>(), eps in 0.1f64..3.0) {
            let mut rng = seeded(seed);
            let h = random_heatmap(&mut rng, w, ht);
            let y = GridCoord::new(rng.random_range(0..w), rng.random_range(0..ht));
            let cfg = StructuredLossConfig { epsilon: eps, margin: MarginSpec::none() };
            let lg = structured_loss(&h, y, &cfg).unwrap();
            let p = h.softmax_tempered(eps).unwrap();
            let ce = -eps * p.values()[h.index_of(y)].ln();
            prop_assert!((lg.value - ce).abs() < 1e-10);
        }
    }
}
