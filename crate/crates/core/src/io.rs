//! Text and image formats.
//!
//! * Heatmap CSV: one line per grid row, comma separated.
//! * Binary PGM (P5): values rescaled linearly to 0..=255, for viewing only.
//! * Annotations: `id u1 v1 u2 v2 ... uN vN`, whitespace separated.
//! * Boundaries: one curve per line, comma-separated landmark indices.
//! * Labels CSV: `sample_id,landmark_id,mean_u,mean_v,cov_uu,cov_uv,cov_vv`.
//!
//! Blank lines and lines starting with `#` are skipped by every text parser.
//! Floats are written with Rust's shortest round-trip formatting.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::heatmap::{Heatmap, LandmarkSet, Point};
use crate::smoothing::{BoundaryDef, GaussianLabel};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn write_heatmap_csv(h: &Heatmap, mut out: impl Write) -> Result<()> {
    for row in h.values().chunks(h.width()) {
        let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_heatmap_csv(input: impl BufRead) -> Result<Heatmap> {
    let mut values = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(i + 1, format!("`{t}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err(i + 1, format!("row has {} values, expected {w}", row.len())))
            }
            _ => {}
        }
        values.extend(row);
        height += 1;
    }
    Heatmap::new(width.unwrap_or(0), height, values)
}

/// Writes a binary graymap, min mapped to 0 and max to 255.
pub fn write_pgm(h: &Heatmap, mut out: impl Write) -> Result<()> {
    let lo = h.values().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = h.max_value();
    let span = hi - lo;
    write!(out, "P5\n{} {}\n255\n", h.width(), h.height())?;
    let bytes: Vec<u8> = h
        .values()
        .iter()
        .map(|&x| {
            if span > 0.0 {
                ((x - lo) / span * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// One annotated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub id: String,
    pub landmarks: LandmarkSet,
}

pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    for (line_no, line) in content_lines(text) {
        let mut tokens = line.split_whitespace();
        let id = tokens.next().expect("content lines are non-empty").to_string();
        let coords = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(line_no, format!("malformed coordinate `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if coords.is_empty() || coords.len() % 2 != 0 {
            return Err(parse_err(
                line_no,
                format!("expected an even, nonzero number of coordinates, got {}", coords.len()),
            ));
        }
        if let Some(bad) = coords.iter().find(|x| !x.is_finite()) {
            return Err(parse_err(line_no, format!("non-finite coordinate `{bad}`")));
        }
        let points = coords.chunks(2).map(|c| Point::new(c[0], c[1])).collect();
        let landmarks = LandmarkSet::new(points).map_err(|e| parse_err(line_no, e.to_string()))?;
        out.push(Annotation { id, landmarks });
    }
    Ok(out)
}

pub fn write_annotations(samples: &[Annotation], mut out: impl Write) -> Result<()> {
    for s in samples {
        write!(out, "{}", s.id)?;
        for p in s.landmarks.points() {
            write!(out, " {} {}", p.u, p.v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn parse_boundaries(text: &str) -> Result<BoundaryDef> {
    let mut curves = Vec::new();
    for (line_no, line) in content_lines(text) {
        let curve = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| parse_err(line_no, format!("malformed landmark index `{}`", t.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        if curve.len() < 2 {
            return Err(parse_err(line_no, "a boundary curve needs at least 2 landmarks"));
        }
        curves.push(curve);
    }
    BoundaryDef::new(curves)
}

pub const LABEL_HEADER: &str = "sample_id,landmark_id,mean_u,mean_v,cov_uu,cov_uv,cov_vv";

pub fn write_label_row(mut out: impl Write, sample_id: &str, landmark_id: usize, g: &GaussianLabel) -> Result<()> {
    writeln!(
        out,
        "{sample_id},{landmark_id},{},{},{},{},{}",
        g.mean.u, g.mean.v, g.cov[0][0], g.cov[0][1], g.cov[1][1]
    )?;
    Ok(())
}
