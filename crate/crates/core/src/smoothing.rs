//! Image-aware label smoothing.
//!
//! Landmarks are joined into boundary polylines, rendered into a soft edge
//! heatmap, refined by a Gaussian blur followed by a sharpening blend, and
//! then, per landmark, the local patch of the refined edge map is mixed with
//! a small isotropic bump around the landmark. The weighted covariance of
//! that joint patch, scaled by `gamma`, becomes the covariance of a
//! [`GaussianLabel`] centred on the landmark.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, require_positive, Error, Result};
use crate::heatmap::{in_bounds, GridCoord, Heatmap, LandmarkSet, Point};
use crate::rng::seeded;

/// Boundary curves as ordered sequences of landmark indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryDef {
    pub curves: Vec<Vec<usize>>,
}

impl BoundaryDef {
    pub fn new(curves: Vec<Vec<usize>>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::Empty("boundary set"));
        }
        if let Some(i) = curves.iter().position(|c| c.len() < 2) {
            return Err(invalid("curves", format!("curve {i} has fewer than 2 points")));
        }
        Ok(Self { curves })
    }

    pub fn validate_for(&self, landmarks: &LandmarkSet) -> Result<()> {
        for (i, curve) in self.curves.iter().enumerate() {
            if let Some(&bad) = curve.iter().find(|&&k| k >= landmarks.len()) {
                return Err(invalid(
                    "curves",
                    format!("curve {i} references landmark {bad}, only {} present", landmarks.len()),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingConfig {
    /// Side length of the square edge heatmap.
    pub edge_map_size: usize,
    /// Falloff of the edge response with distance to the boundary.
    pub sigma_b: f64,
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    pub sharpness_factor: f64,
    /// Patch half-size `k`; patches are `(2k+1)` square.
    pub patch_half: usize,
    pub center_sigma: f64,
    /// Weight of the refined edge patch in the joint map.
    pub blend: f64,
    /// Scale applied to the fitted covariance.
    pub gamma: f64,
    /// Ridge added to the fitted covariance.
    pub cov_reg: f64,
}

impl SmoothingConfig {
    /// Sigma for an odd kernel size `k`: `0.3 * ((k - 1) / 2 - 1) + 0.8`.
    pub fn blur_sigma_for(kernel: usize) -> f64 {
        0.3 * ((kernel as f64 - 1.0) * 0.5 - 1.0) + 0.8
    }

    pub fn validate(&self) -> Result<()> {
        if self.edge_map_size == 0 {
            return Err(invalid("edge_map_size", "must be positive"));
        }
        if self.blur_kernel == 0 || self.blur_kernel.is_multiple_of(2) {
            return Err(invalid(
                "blur_kernel",
                format!("must be odd and positive, got {}", self.blur_kernel),
            ));
        }
        if self.patch_half == 0 {
            return Err(invalid("patch_half", "must be positive"));
        }
        require_positive("sigma_b", self.sigma_b)?;
        require_positive("blur_sigma", self.blur_sigma)?;
        require_positive("center_sigma", self.center_sigma)?;
        require_positive("gamma", self.gamma)?;
        require_positive("cov_reg", self.cov_reg)?;
        if !self.sharpness_factor.is_finite() {
            return Err(invalid("sharpness_factor", "must be finite"));
        }
        if !(self.blend.is_finite() && self.blend >= 0.0) {
            return Err(invalid("blend", "must be finite and >= 0"));
        }
        Ok(())
    }
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            edge_map_size: 64,
            sigma_b: 1.5,
            blur_kernel: 9,
            blur_sigma: Self::blur_sigma_for(9),
            sharpness_factor: 5.0,
            patch_half: 8,
            center_sigma: 1.0,
            blend: 0.01,
            gamma: 0.01,
            cov_reg: 1e-4,
        }
    }
}

/// A bivariate normal over heatmap coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLabel {
    pub mean: Point,
    /// `[[cov_uu, cov_uv], [cov_vu, cov_vv]]`.
    pub cov: [[f64; 2]; 2],
}

impl GaussianLabel {
    pub fn new(mean: Point, cov: [[f64; 2]; 2]) -> Result<Self> {
        if !mean.is_finite() || cov.iter().flatten().any(|x| !x.is_finite()) {
            return Err(invalid("label", "mean and covariance must be finite"));
        }
        if (cov[0][1] - cov[1][0]).abs() > 1e-12 {
            return Err(Error::NotPositiveDefinite);
        }
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        if !(cov[0][0] > 0.0 && det > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { mean, cov })
    }

    /// Lower-triangular factor `L` with `L L^T = cov`.
    pub fn cholesky(&self) -> [[f64; 2]; 2] {
        let a = self.cov[0][0].sqrt();
        let b = self.cov[1][0] / a;
        let c = (self.cov[1][1] - b * b).max(0.0).sqrt();
        [[a, 0.0], [b, c]]
    }

    /// Eigenvalues in descending order with matching unit eigenvectors.
    pub fn eigen(&self) -> ([f64; 2], [[f64; 2]; 2]) {
        sym2_eigen(self.cov)
    }

    /// The label density on a `(2k+1)` square patch centred on the rounded
    /// mean, scaled to a peak of 1.
    pub fn density_patch(&self, half: usize) -> Heatmap {
        let [[a, b], [_, d]] = self.cov;
        let det = a * d - b * b;
        let (ia, ib, id) = (d / det, -b / det, a / det);
        let cu = self.mean.u.round();
        let cv = self.mean.v.round();
        let side = 2 * half + 1;
        let vals: Vec<f64> = (0..side * side)
            .map(|k| {
                let du = cu + (k % side) as f64 - half as f64 - self.mean.u;
                let dv = cv + (k / side) as f64 - half as f64 - self.mean.v;
                (-0.5 * (ia * du * du + 2.0 * ib * du * dv + id * dv * dv)).exp()
            })
            .collect();
        normalize_max(Heatmap::from_parts_unchecked(side, side, vals))
    }
}

/// Closed-form eigen-decomposition of a symmetric 2x2 matrix.
pub fn sym2_eigen(m: [[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (a, b, d) = (m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]);
    let mid = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let (l1, l2) = (mid + rad, mid - rad);
    let theta = 0.5 * (2.0 * b).atan2(a - d);
    let v1 = [theta.cos(), theta.sin()];
    let v2 = [-theta.sin(), theta.cos()];
    ([l1, l2], [v1, v2])
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (du, dv) = (b.u - a.u, b.v - a.v);
    let len2 = du * du + dv * dv;
    let t = if len2 > 0.0 {
        (((p.u - a.u) * du + (p.v - a.v) * dv) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(Point::new(a.u + t * du, a.v + t * dv))
}

/// Renders the boundaries as a soft edge map of side `cfg.edge_map_size`.
///
/// Each pixel gets `exp(-d^2 / (2 sigma_b^2))` where `d` is its distance to
/// the nearest boundary segment, truncated to 0 beyond `3 sigma_b`.
pub fn build_edge_heatmap(landmarks: &LandmarkSet, boundaries: &BoundaryDef, cfg: &SmoothingConfig) -> Result<Heatmap> {
    cfg.validate()?;
    if boundaries.curves.is_empty() {
        return Err(Error::Empty("boundary set"));
    }
    boundaries.validate_for(landmarks)?;
    let pts = landmarks.points();
    let segments: Vec<(Point, Point)> = boundaries
        .curves
        .iter()
        .flat_map(|c| c.windows(2).map(|w| (pts[w[0]], pts[w[1]])))
        .collect();
    let cutoff = 3.0 * cfg.sigma_b;
    let denom = 2.0 * cfg.sigma_b * cfg.sigma_b;
    let n = cfg.edge_map_size;
    Heatmap::from_fn(n, n, |u, v| {
        let p = Point::new(u as f64, v as f64);
        let d = segments
            .iter()
            .map(|&(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min);
        if d < cutoff {
            (-d * d / denom).exp()
        } else {
            0.0
        }
    })
}

/// Normalised 1-D Gaussian kernel of odd `size`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let k: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let z: f64 = k.iter().sum();
    k.into_iter().map(|x| x / z).collect()
}

/// 3x3 smoothing kernel used by the sharpening blend.
const SMOOTH3: [[f64; 3]; 3] = [[1.0, 1.0, 1.0], [1.0, 5.0, 1.0], [1.0, 1.0, 1.0]];
const SMOOTH3_SUM: f64 = 13.0;

fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable Gaussian blur with edge-replicate padding.
pub fn gaussian_blur(e: &Heatmap, size: usize, sigma: f64) -> Heatmap {
    let kernel = gaussian_kernel(size, sigma);
    let r = (size / 2) as isize;
    let (w, h) = e.shape();
    let src = e.values();
    let mut tmp = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            tmp[v * w + u] = kernel
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * src[v * w + clamp_idx(u as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            out[v * w + u] = kernel
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[clamp_idx(v as isize + i as isize - r, h) * w + u])
                .sum();
        }
    }
    Heatmap::from_parts_unchecked(w, h, out)
}

/// `(1 - f) * smooth3x3(x) + f * x`, with edge-replicate padding.
pub fn sharpen(x: &Heatmap, factor: f64) -> Heatmap {
    let (w, h) = x.shape();
    let src = x.values();
    let mut out = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let mut acc = 0.0;
            for (dv, row) in SMOOTH3.iter().enumerate() {
                for (du, kv) in row.iter().enumerate() {
                    let uu = clamp_idx(u as isize + du as isize - 1, w);
                    let vv = clamp_idx(v as isize + dv as isize - 1, h);
                    acc += kv * src[vv * w + uu];
                }
            }
            let smooth = acc / SMOOTH3_SUM;
            out[v * w + u] = (1.0 - factor) * smooth + factor * src[v * w + u];
        }
    }
    Heatmap::from_parts_unchecked(w, h, out)
}

/// Blur, sharpen, then clamp into `[0, max]` of the blurred map.
pub fn refine_edge_heatmap(e: &Heatmap, cfg: &SmoothingConfig) -> Result<Heatmap> {
    cfg.validate()?;
    let blurred = gaussian_blur(e, cfg.blur_kernel, cfg.blur_sigma);
    let hi = blurred.max_value().max(0.0);
    let sharp = sharpen(&blurred, cfg.sharpness_factor);
    sharp.map(|x| x.clamp(0.0, hi))
}

fn normalize_max(h: Heatmap) -> Heatmap {
    let m = h.max_value();
    if m > 0.0 {
        let (w, ht) = h.shape();
        Heatmap::from_parts_unchecked(w, ht, h.into_values().into_iter().map(|x| x / m).collect())
    } else {
        h
    }
}

/// The `(2k+1)` square window of `map` centred on `c`, zero outside the map.
pub fn crop_patch(map: &Heatmap, c: GridCoord, half: usize) -> Heatmap {
    let side = 2 * half + 1;
    let (w, h) = map.shape();
    let vals = (0..side * side)
        .map(|i| {
            let u = (c.u + i % side).checked_sub(half);
            let v = (c.v + i / side).checked_sub(half);
            match (u, v) {
                (Some(u), Some(v)) if u < w && v < h => map.get(u, v),
                _ => 0.0,
            }
        })
        .collect();
    Heatmap::from_parts_unchecked(side, side, vals)
}

/// A fitted label together with the patches it was estimated from.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFit {
    pub label: GaussianLabel,
    /// Top-left cell of the patch in map coordinates (may be negative).
    pub origin: (isize, isize),
    /// Refined edge patch, normalised to a peak of 1 (all zero if empty).
    pub edge_patch: Heatmap,
    /// Isotropic bump around the landmark, peak 1.
    pub center_patch: Heatmap,
    /// `blend * edge_patch + center_patch`.
    pub joint_patch: Heatmap,
}

/// Fits the directional Gaussian label for a landmark at `y`.
pub fn fit_gaussian_label(e_refined: &Heatmap, y: Point, cfg: &SmoothingConfig) -> Result<GaussianLabel> {
    fit_gaussian_label_detailed(e_refined, y, cfg).map(|f| f.label)
}

/// As [`fit_gaussian_label`], also returning the intermediate patches.
pub fn fit_gaussian_label_detailed(e_refined: &Heatmap, y: Point, cfg: &SmoothingConfig) -> Result<LabelFit> {
    cfg.validate()?;
    let (w, h) = e_refined.shape();
    if !y.is_finite() || !in_bounds(y, w, h) {
        return Err(Error::OutOfBounds {
            u: y.u,
            v: y.v,
            width: w,
            height: h,
        });
    }
    let k = cfg.patch_half as isize;
    let side = 2 * cfg.patch_half + 1;
    let c = y.round_clamped(w, h);
    let origin = (c.u as isize - k, c.v as isize - k);
    let cell = |i: usize| -> (isize, isize) { (origin.0 + (i % side) as isize, origin.1 + (i / side) as isize) };

    let denom = 2.0 * cfg.center_sigma * cfg.center_sigma;
    let center: Vec<f64> = (0..side * side)
        .map(|i| {
            let (u, v) = cell(i);
            let (du, dv) = (u as f64 - y.u, v as f64 - y.v);
            (-(du * du + dv * dv) / denom).exp()
        })
        .collect();
    let edge_patch = normalize_max(crop_patch(e_refined, c, cfg.patch_half));
    let center_patch = normalize_max(Heatmap::from_parts_unchecked(side, side, center));
    let joint: Vec<f64> = edge_patch
        .values()
        .iter()
        .zip(center_patch.values())
        .map(|(e, n)| cfg.blend * e + n)
        .collect();

    let mass: f64 = joint.iter().sum();
    if mass.is_nan() || mass <= 0.0 {
        return Err(invalid("patch", "joint heatmap has zero mass"));
    }
    let (mut mu_u, mut mu_v) = (0.0, 0.0);
    for (i, m) in joint.iter().enumerate() {
        let (u, v) = cell(i);
        mu_u += m * u as f64;
        mu_v += m * v as f64;
    }
    mu_u /= mass;
    mu_v /= mass;
    let (mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0);
    for (i, m) in joint.iter().enumerate() {
        let (u, v) = cell(i);
        let (du, dv) = (u as f64 - mu_u, v as f64 - mu_v);
        suu += m * du * du;
        suv += m * du * dv;
        svv += m * dv * dv;
    }
    let g = cfg.gamma;
    let cov = [
        [g * (suu / mass + cfg.cov_reg), g * suv / mass],
        [g * suv / mass, g * (svv / mass + cfg.cov_reg)],
    ];
    Ok(LabelFit {
        label: GaussianLabel::new(y, cov)?,
        origin,
        edge_patch,
        center_patch,
        joint_patch: Heatmap::from_parts_unchecked(side, side, joint),
    })
}

/// Draws `n` cells from the label: Cholesky transform of seeded standard
/// normals, rounded to the nearest cell and clamped into `bounds`.
pub fn sample_label(label: &GaussianLabel, n: usize, rng_seed: u64, bounds: (usize, usize)) -> Result<Vec<GridCoord>> {
    if n == 0 {
        return Err(invalid("n_samples", "must be at least 1"));
    }
    let (w, h) = bounds;
    if w == 0 || h == 0 {
        return Err(Error::InvalidDimensions { width: w, height: h });
    }
    let GaussianLabel { mean, cov } = GaussianLabel::new(label.mean, label.cov)?;
    let l = GaussianLabel { mean, cov }.cholesky();
    let mut rng = seeded(rng_seed);
    Ok((0..n)
        .map(|_| {
            let z0: f64 = StandardNormal.sample(&mut rng);
            let z1: f64 = StandardNormal.sample(&mut rng);
            let p = Point::new(mean.u + l[0][0] * z0, mean.v + l[1][0] * z0 + l[1][1] * z1);
            p.round_clamped(w, h)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn horizontal_segment(size: usize, row: f64) -> (LandmarkSet, BoundaryDef, SmoothingConfig) {
        let lm = LandmarkSet::new(vec![Point::new(2.0, row), Point::new(size as f64 - 3.0, row)]).unwrap();
        let b = BoundaryDef::new(vec![vec![0, 1]]).unwrap();
        let cfg = SmoothingConfig {
            edge_map_size: size,
            ..SmoothingConfig::default()
        };
        (lm, b, cfg)
    }

    #[test]
    fn default_blur_sigma() {
        assert!((SmoothingConfig::default().blur_sigma - 1.7).abs() < 1e-12);
    }

    #[test]
    fn edge_map_profile() {
        let (lm, b, cfg) = horizontal_segment(32, 10.0);
        let e = build_edge_heatmap(&lm, &b, &cfg).unwrap();
        for u in 2..=29 {
            assert_eq!(e.get(u, 10), 1.0);
        }
        assert!((e.get(15, 11) - (-1.0f64 / 4.5).exp()).abs() < 1e-12);
        assert!((e.get(15, 11) - 0.8007).abs() < 1e-4);
        // 3 * sigma_b + 1 = 5.5 px away: rows are integers so check 6 px too.
        assert_eq!(e.get(15, 16), 0.0);
        assert!(e.values().iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn edge_map_rejects_bad_boundaries() {
        assert!(BoundaryDef::new(vec![]).is_err());
        assert!(BoundaryDef::new(vec![vec![0]]).is_err());
        let (lm, _, cfg) = horizontal_segment(16, 4.0);
        let b = BoundaryDef {
            curves: vec![vec![0, 5]],
        };
        assert!(build_edge_heatmap(&lm, &b, &cfg).is_err());
        let empty = BoundaryDef { curves: vec![] };
        assert!(build_edge_heatmap(&lm, &empty, &cfg).is_err());
    }

    #[test]
    fn refine_preserves_constants() {
        let cfg = SmoothingConfig::default();
        let c = Heatmap::filled(12, 9, 0.37).unwrap();
        let r = refine_edge_heatmap(&c, &cfg).unwrap();
        for &x in r.values() {
            assert!((x - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn sharpen_identity_at_unit_factor() {
        let x = Heatmap::from_fn(7, 5, |u, v| ((u * 3 + v * 5) % 7) as f64 / 7.0).unwrap();
        assert_eq!(sharpen(&x, 1.0), x);
    }

    #[test]
    fn blur_impulse_center() {
        let x = Heatmap::from_fn(9, 9, |u, v| if (u, v) == (4, 4) { 1.0 } else { 0.0 }).unwrap();
        let b = gaussian_blur(&x, 9, 1.7);
        // Independent kernel: direct evaluation, normalised.
        let raw: Vec<f64> = (-4..=4)
            .map(|i: i32| (-(i * i) as f64 / (2.0 * 1.7 * 1.7)).exp())
            .collect();
        let c = 1.0 / raw.iter().sum::<f64>();
        assert!((b.get(4, 4) - c * c).abs() < 1e-15);
    }

    #[test]
    fn isotropic_without_edges() {
        let cfg = SmoothingConfig {
            blend: 0.0,
            ..SmoothingConfig::default()
        };
        let e = Heatmap::zeros(32, 32).unwrap();
        let g = fit_gaussian_label(&e, Point::new(15.0, 16.0), &cfg).unwrap();
        assert!(g.cov[0][1].abs() < 1e-12);
        assert!((g.cov[0][0] - g.cov[1][1]).abs() / g.cov[0][0] < 0.05);
        assert_eq!(g.mean, Point::new(15.0, 16.0));
    }

    #[test]
    fn gamma_scales_linearly() {
        let (lm, b, cfg) = horizontal_segment(32, 12.0);
        let e = refine_edge_heatmap(&build_edge_heatmap(&lm, &b, &cfg).unwrap(), &cfg).unwrap();
        let y = Point::new(14.0, 12.0);
        let g1 = fit_gaussian_label(&e, y, &cfg).unwrap();
        let g2 = fit_gaussian_label(
            &e,
            y,
            &SmoothingConfig {
                gamma: 2.0 * cfg.gamma,
                ..cfg
            },
        )
        .unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(g2.cov[i][j], 2.0 * g1.cov[i][j]);
            }
        }
        let (_, v1) = g1.eigen();
        let (_, v2) = g2.eigen();
        assert!((v1[0][0] * v2[0][0] + v1[0][1] * v2[0][1]).abs() > 1.0 - 1e-12);
    }

    #[test]
    fn eigen_matches_angle_sweep() {
        let m = [[3.0, 1.2], [1.2, 1.5]];
        let (vals, vecs) = sym2_eigen(m);
        // Brute-force: maximise the Rayleigh quotient over a fine angle grid.
        let (mut best, mut best_t) = (f64::NEG_INFINITY, 0.0);
        for i in 0..100_000 {
            let t = std::f64::consts::PI * i as f64 / 100_000.0;
            let (c, s) = (t.cos(), t.sin());
            let q = m[0][0] * c * c + 2.0 * m[0][1] * c * s + m[1][1] * s * s;
            if q > best {
                best = q;
                best_t = t;
            }
        }
        assert!((vals[0] - best).abs() < 1e-8);
        assert!((vecs[0][0] * best_t.cos() + vecs[0][1] * best_t.sin()).abs() > 1.0 - 1e-8);
        assert!((vals[0] + vals[1] - 4.5).abs() < 1e-12);
    }

    #[test]
    fn label_validation() {
        let p = Point::new(1.0, 1.0);
        assert!(GaussianLabel::new(p, [[1.0, 0.0], [0.0, -1.0]]).is_err());
        assert!(GaussianLabel::new(p, [[1.0, 2.0], [2.0, 1.0]]).is_err());
        assert!(GaussianLabel::new(p, [[1.0, 0.1], [0.2, 1.0]]).is_err());
        assert!(GaussianLabel::new(p, [[1.0, 0.1], [0.1, 1.0]]).is_ok());
    }

    #[test]
    fn sampling_contracts() {
        let g = GaussianLabel::new(Point::new(3.4, 7.6), [[1e-12, 0.0], [0.0, 1e-12]]).unwrap();
        let s = sample_label(&g, 50, 3, (10, 10)).unwrap();
        assert!(s.iter().all(|&c| c == GridCoord::new(3, 8)));
        let g = GaussianLabel::new(Point::new(5.0, 5.0), [[4.0, 1.0], [1.0, 2.0]]).unwrap();
        assert_eq!(
            sample_label(&g, 20, 9, (10, 10)).unwrap(),
            sample_label(&g, 20, 9, (10, 10)).unwrap()
        );
        assert_ne!(
            sample_label(&g, 20, 9, (10, 10)).unwrap(),
            sample_label(&g, 20, 10, (10, 10)).unwrap()
        );
        assert!(sample_label(&g, 0, 9, (10, 10)).is_err());
        let s = sample_label(&g, 200, 1, (3, 3)).unwrap();
        assert!(s.iter().all(|c| c.u < 3 && c.v < 3));
    }

    #[test]
    fn sample_variance_matches_cov() {
        let g = GaussianLabel::new(Point::new(100.0, 100.0), [[4.0, 0.0], [0.0, 1.0]]).unwrap();
        let s = sample_label(&g, 10_000, 42, (201, 201)).unwrap();
        let n = s.len() as f64;
        let mu = |f: &dyn Fn(&GridCoord) -> f64| s.iter().map(f).sum::<f64>() / n;
        let mu_u = mu(&|c| c.u as f64);
        let mu_v = mu(&|c| c.v as f64);
        let var_u = mu(&|c| (c.u as f64 - mu_u).powi(2));
        let var_v = mu(&|c| (c.v as f64 - mu_v).powi(2));
        // Rounding adds 1/12 to each variance.
        assert!((3.5..=4.5).contains(&var_u), "var_u={var_u}");
        assert!((0.8..=1.2).contains(&var_v), "var_v={var_v}");
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        let sigma = 1.5;
        let g = GaussianLabel::new(Point::new(4.0, 4.0), [[sigma * sigma, 0.0], [0.0, sigma * sigma]]).unwrap();
        let n = 10_000;
        let s = sample_label(&g, n, 7, (9, 9)).unwrap();
        let bound = 3.0 * sigma / (n as f64).sqrt();
        let mu_u = s.iter().map(|c| c.u as f64).sum::<f64>() / n as f64;
        let mu_v = s.iter().map(|c| c.v as f64).sum::<f64>() / n as f64;
        assert!((mu_u - 4.0).abs() < bound, "mu_u={mu_u}");
        assert!((mu_v - 4.0).abs() < bound, "mu_v={mu_v}");
    }
}
