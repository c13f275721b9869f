//! Shared fixtures for the criterion benches.

use structmark::{Heatmap, LandmarkSet, Point};

/// A deterministic, non-trivial score map.
pub fn score_map(side: usize) -> Heatmap {
    Heatmap::from_fn(side, side, |u, v| ((u * 31 + v * 17) % 23) as f64 / 7.0 - 1.5).expect("side > 0")
}

/// A jaw-like open curve across a 64x64 edge map.
pub fn jaw(n: usize) -> LandmarkSet {
    let points = (0..n)
        .map(|i| {
            let t = std::f64::consts::PI * i as f64 / (n - 1) as f64;
            Point::new(32.0 - 24.0 * t.cos(), 24.0 + 24.0 * t.sin())
        })
        .collect();
    LandmarkSet::new(points).expect("finite points")
}
