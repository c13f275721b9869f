//! Score grids, landmark coordinates and the inference operators on them.
//!
//! A [`Heatmap`] is stored row-major: linear index `k = v * width + u`, where
//! `u` is the column and `v` the row. Every operator here is a pure function
//! of its inputs.

use crate::error::{invalid, require_positive, Error, Result};

/// A continuous position in heatmap pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub u: f64,
    pub v: f64,
}

impl Point {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }

    pub fn is_finite(self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    /// Nearest grid cell, clamped into a `width` x `height` grid.
    pub fn round_clamped(self, width: usize, height: usize) -> GridCoord {
        let clamp = |x: f64, n: usize| -> usize {
            let r = x.round();
            if r.is_nan() || r <= 0.0 {
                0
            } else {
                (r as usize).min(n - 1)
            }
        };
        GridCoord::new(clamp(self.u, width), clamp(self.v, height))
    }
}

impl From<(f64, f64)> for Point {
    fn from((u, v): (f64, f64)) -> Self {
        Self { u, v }
    }
}

impl From<GridCoord> for Point {
    fn from(c: GridCoord) -> Self {
        Self::new(c.u as f64, c.v as f64)
    }
}

/// An integer cell of a heatmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct GridCoord {
    pub u: usize,
    pub v: usize,
}

impl GridCoord {
    pub const fn new(u: usize, v: usize) -> Self {
        Self { u, v }
    }
}

/// Result of [`Heatmap::argmax`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Argmax {
    pub coord: GridCoord,
    /// Another cell attains exactly the same maximum value.
    pub tied: bool,
}

/// An ordered set of landmark positions.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Point>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("landmark set"));
        }
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks every point lies inside a `width` x `height` grid.
    pub fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        for p in &self.points {
            if !in_bounds(*p, width, height) {
                return Err(Error::OutOfBounds {
                    u: p.u,
                    v: p.v,
                    width,
                    height,
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn in_bounds(p: Point, width: usize, height: usize) -> bool {
    p.u >= 0.0 && p.v >= 0.0 && p.u <= (width - 1) as f64 && p.v <= (height - 1) as f64
}

/// A `width` x `height` grid of finite scores for a single landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if values.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { width, height, values })
    }

    /// A single-row heatmap, the "1-D" case.
    pub fn row(values: Vec<f64>) -> Result<Self> {
        Self::new(values.len(), 1, values)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 0.0)
    }

    /// Builds a heatmap by evaluating `f(u, v)` at every cell.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_dims(width, height)?;
        let mut values = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                values.push(f(u, v));
            }
        }
        Self::new(width, height, values)
    }

    pub(crate) fn from_parts_unchecked(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[self.index_of(GridCoord::new(u, v))]
    }

    pub fn index_of(&self, c: GridCoord) -> usize {
        debug_assert!(c.u < self.width && c.v < self.height);
        c.v * self.width + c.u
    }

    pub fn coord_of(&self, k: usize) -> GridCoord {
        GridCoord::new(k % self.width, k / self.width)
    }

    pub fn contains(&self, c: GridCoord) -> bool {
        c.u < self.width && c.v < self.height
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `f` elementwise; fails if the result is not finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Heatmap> {
        Heatmap::new(self.width, self.height, self.values.iter().map(|&x| f(x)).collect())
    }

    /// Adds a constant to every score.
    pub fn shifted(&self, c: f64) -> Result<Heatmap> {
        self.map(|x| x + c)
    }

    /// Maximum cell; ties go to the lowest row-major index.
    pub fn argmax(&self) -> Argmax {
        let mut best = 0;
        let mut tied = false;
        for (k, &x) in self.values.iter().enumerate().skip(1) {
            if x > self.values[best] {
                best = k;
                tied = false;
            } else if x == self.values[best] {
                tied = true;
            }
        }
        Argmax {
            coord: self.coord_of(best),
            tied,
        }
    }

    /// `exp(h / epsilon)` normalised over all cells.
    pub fn softmax_tempered(&self, epsilon: f64) -> Result<Heatmap> {
        require_positive("epsilon", epsilon)?;
        let p = softmax(&self.values, epsilon);
        Ok(Heatmap::from_parts_unchecked(self.width, self.height, p))
    }

    /// Expected coordinate under the tempered softmax of the scores.
    pub fn soft_argmax(&self, epsilon: f64) -> Result<Point> {
        let p = self.softmax_tempered(epsilon)?;
        Ok(p.expected_coord())
    }

    /// Treats the values as a probability mass and returns `sum_k p_k * coord(k)`.
    pub(crate) fn expected_coord(&self) -> Point {
        let mut u = 0.0;
        let mut v = 0.0;
        for (k, &p) in self.values.iter().enumerate() {
            let c = self.coord_of(k);
            u += p * c.u as f64;
            v += p * c.v as f64;
        }
        Point::new(u, v)
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        Err(Error::InvalidDimensions { width, height })
    } else {
        Ok(())
    }
}

/// Max-subtracted tempered softmax of a slice.
pub(crate) fn softmax(x: &[f64], epsilon: f64) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|&xi| ((xi - m) / epsilon).exp()).collect();
    let z: f64 = out.iter().sum();
    for p in &mut out {
        *p /= z;
    }
    out
}

/// `epsilon * ln sum_k exp(x_k / epsilon)`, stabilised by the running max.
pub(crate) fn log_sum_exp(x: &[f64], epsilon: f64) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = x.iter().map(|&xi| ((xi - m) / epsilon).exp()).sum();
    m + epsilon * s.ln()
}

/// A Gaussian bump `exp(-|p - center|^2 / (2 sigma^2))` over the grid.
pub fn make_gaussian_target(center: Point, width: usize, height: usize, sigma: f64) -> Result<Heatmap> {
    require_positive("sigma", sigma)?;
    check_dims(width, height)?;
    if !center.is_finite() || !in_bounds(center, width, height) {
        return Err(Error::OutOfBounds {
            u: center.u,
            v: center.v,
            width,
            height,
        });
    }
    let denom = 2.0 * sigma * sigma;
    Heatmap::from_fn(width, height, |u, v| {
        let du = u as f64 - center.u;
        let dv = v as f64 - center.v;
        (-(du * du + dv * dv) / denom).exp()
    })
    .map_err(|_| invalid("sigma", "target underflowed to a non-finite value"))
}
