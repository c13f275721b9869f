//! One-dimensional toy model: the heatmap is the parameter vector itself,
//! trained on a single target index by plain gradient descent.

use crate::error::{invalid, require_positive, Result};
use crate::heatmap::{GridCoord, Heatmap, Point};
use crate::losses::{soft_argmax_l2_loss, structured_loss, MarginSpec, StructuredLossConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToyObjective {
    Structured(StructuredLossConfig),
    SoftArgmaxL2,
}

impl ToyObjective {
    /// Structured loss with a squared-distance margin in raw index units.
    pub fn structured_default() -> Self {
        Self::Structured(StructuredLossConfig {
            epsilon: 1.0,
            margin: MarginSpec::l2(1.0).with_normalize(false),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Structured(_) => "structured",
            Self::SoftArgmaxL2 => "softargmax",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub length: usize,
    pub target: usize,
    pub init_values: Vec<f64>,
    pub learning_rate: f64,
    pub steps: usize,
    pub objective: ToyObjective,
    pub record_at: Vec<usize>,
}

/// Bimodal start: `high` at index 9, `second` at index 1, zero elsewhere.
pub fn bimodal_init(length: usize, high: f64, second: f64) -> Vec<f64> {
    let mut v = vec![0.0; length];
    if length > 9 {
        v[9] = high;
        v[1] = second;
    }
    v
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            length: 11,
            target: 5,
            init_values: bimodal_init(11, 2.0, 1.5),
            learning_rate: 0.1,
            steps: 50,
            objective: ToyObjective::structured_default(),
            record_at: vec![10, 20, 50],
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length < 10 {
            return Err(invalid("length", "must be at least 10 to hold the bimodal start"));
        }
        if self.target >= self.length {
            return Err(invalid(
                "target",
                format!("{} is outside 0..{}", self.target, self.length),
            ));
        }
        if self.init_values.len() != self.length {
            return Err(invalid(
                "init_values",
                format!("has {} entries, expected {}", self.init_values.len(), self.length),
            ));
        }
        if self.init_values.iter().any(|x| !x.is_finite()) {
            return Err(invalid("init_values", "must be finite"));
        }
        let (hi, second) = (self.init_values[9], self.init_values[1]);
        let rest_ok = self
            .init_values
            .iter()
            .enumerate()
            .all(|(k, &x)| k == 9 || k == 1 || x < second);
        if !(hi > second && rest_ok) {
            return Err(invalid(
                "init_values",
                "index 9 must be the largest and index 1 the second largest value",
            ));
        }
        require_positive("learning_rate", self.learning_rate)?;
        if self.steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        match &self.objective {
            ToyObjective::Structured(cfg) => cfg.validate(),
            ToyObjective::SoftArgmaxL2 => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySnapshot {
    pub step: usize,
    pub theta: Vec<f64>,
    pub loss: f64,
    pub argmax: usize,
    pub soft_argmax: f64,
    pub grad: Vec<f64>,
}

impl ToySnapshot {
    /// `theta[target] - max_{k != target} theta[k]`.
    pub fn target_gap(&self, target: usize) -> f64 {
        let rest = self
            .theta
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != target)
            .map(|(_, &x)| x)
            .fold(f64::NEG_INFINITY, f64::max);
        self.theta[target] - rest
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTrace {
    pub target: usize,
    pub snapshots: Vec<ToySnapshot>,
}

impl ToyTrace {
    pub fn last(&self) -> &ToySnapshot {
        self.snapshots.last().expect("trace always holds step 0")
    }

    pub fn at(&self, step: usize) -> Option<&ToySnapshot> {
        self.snapshots.iter().find(|s| s.step == step)
    }

    /// Argmax is off target although the soft-argmax rounds onto it.
    pub fn mismatch(&self) -> bool {
        let s = self.last();
        s.argmax != self.target && (s.soft_argmax - self.target as f64).abs() < 0.5
    }
}

fn evaluate(theta: &[f64], target: usize, objective: &ToyObjective) -> Result<(f64, Vec<f64>)> {
    let h = Heatmap::row(theta.to_vec())?;
    let lg = match objective {
        ToyObjective::Structured(cfg) => structured_loss(&h, GridCoord::new(target, 0), cfg)?,
        ToyObjective::SoftArgmaxL2 => soft_argmax_l2_loss(&h, Point::new(target as f64, 0.0))?,
    };
    Ok((lg.value, lg.grad.into_values()))
}

/// Runs gradient descent, recording step 0, each requested step and the
/// final step.
pub fn run_toy(cfg: &ToyConfig) -> Result<ToyTrace> {
    cfg.validate()?;
    let mut theta = cfg.init_values.clone();
    let mut snapshots = Vec::new();
    for step in 0..=cfg.steps {
        let (loss, grad) = evaluate(&theta, cfg.target, &cfg.objective)?;
        if step == 0 || step == cfg.steps || cfg.record_at.contains(&step) {
            let h = Heatmap::row(theta.clone())?;
            snapshots.push(ToySnapshot {
                step,
                theta: theta.clone(),
                loss,
                argmax: h.argmax().coord.u,
                soft_argmax: h.soft_argmax(1.0)?.u,
                grad: grad.clone(),
            });
        }
        if step < cfg.steps {
            for (t, g) in theta.iter_mut().zip(&grad) {
                *t -= cfg.learning_rate * g;
            }
        }
    }
    Ok(ToyTrace {
        target: cfg.target,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn every_step(cfg: ToyConfig) -> ToyConfig {
        ToyConfig {
            record_at: (0..=cfg.steps).collect(),
            ..cfg
        }
    }

    #[test]
    fn structured_default_run() {
        let trace = run_toy(&ToyConfig::default()).unwrap();
        let steps: Vec<usize> = trace.snapshots.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 50]);
        let last = trace.last();
        assert_eq!(last.argmax, 5);
        assert!(last.target_gap(5) > 0.0);
        for s in &trace.snapshots {
            assert!(s.grad[5] < 0.0);
            assert!(s.grad.iter().enumerate().all(|(k, &g)| k == 5 || g > 0.0));
        }
    }

    #[test]
    fn softargmax_default_run_mismatch() {
        let cfg = ToyConfig {
            objective: ToyObjective::SoftArgmaxL2,
            ..ToyConfig::default()
        };
        let trace = run_toy(&cfg).unwrap();
        let last = trace.last();
        assert_ne!(last.argmax, 5);
        assert!(last.loss < 1e-2);
        assert!(trace.mismatch());
    }

    #[test]
    fn structured_invariants_every_step() {
        let trace = run_toy(&every_step(ToyConfig::default())).unwrap();
        for w in trace.snapshots.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-12);
        }
        for s in &trace.snapshots {
            assert!(s.grad[5] <= 0.0);
            assert!(s.grad.iter().sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn structured_monotone_at_large_step() {
        let cfg = every_step(ToyConfig {
            learning_rate: 0.5,
            ..ToyConfig::default()
        });
        let trace = run_toy(&cfg).unwrap();
        for w in trace.snapshots.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-12);
        }
    }

    #[test]
    fn softargmax_error_shrinks() {
        let cfg = every_step(ToyConfig {
            objective: ToyObjective::SoftArgmaxL2,
            ..ToyConfig::default()
        });
        let trace = run_toy(&cfg).unwrap();
        let errs: Vec<f64> = trace.snapshots.iter().map(|s| (s.soft_argmax - 5.0).abs()).collect();
        for w in errs[1..].windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = every_step(ToyConfig::default());
        assert_eq!(run_toy(&cfg).unwrap(), run_toy(&cfg).unwrap());
    }

    #[test]
    fn rejects_bad_configs() {
        let base = ToyConfig::default();
        let cases = [
            ToyConfig {
                target: 11,
                ..base.clone()
            },
            ToyConfig {
                init_values: vec![0.0; 10],
                ..base.clone()
            },
            ToyConfig {
                init_values: bimodal_init(11, 1.0, 1.5),
                ..base.clone()
            },
            ToyConfig {
                learning_rate: 0.0,
                ..base.clone()
            },
            ToyConfig {
                steps: 0,
                ..base.clone()
            },
            ToyConfig {
                length: 5,
                init_values: vec![0.0; 5],
                target: 2,
                ..base.clone()
            },
        ];
        for c in cases {
            assert!(run_toy(&c).is_err(), "{c:?}");
        }
    }
}
