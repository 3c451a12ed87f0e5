use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::manifold::{ManifoldPoint, ManifoldSpec};

/// Finitely supported probability measure on a model manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub spec: ManifoldSpec,
    pub points: Vec<ManifoldPoint>,
    pub weights: Vec<f64>,
}

pub const WEIGHT_SUM_TOL: f64 = 1e-12;
pub const MIN_SEPARATION: f64 = 1e-9;

impl DiscreteMeasure {
    /// Builds and validates a measure.
    pub fn new(spec: ManifoldSpec, points: Vec<ManifoldPoint>, weights: Vec<f64>) -> Result<Self> {
        let m = Self {
            spec,
            points,
            weights,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn uniform(spec: ManifoldSpec, points: Vec<ManifoldPoint>) -> Result<Self> {
        let n = points.len();
        Self::new(spec, points, vec![1.0 / n as f64; n])
    }

    pub fn dirac(spec: ManifoldSpec, point: ManifoldPoint) -> Result<Self> {
        Self::new(spec, vec![point], vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.points.is_empty() {
            return Err(invalid("measure has no support points"));
        }
        if self.points.len() != self.weights.len() {
            return Err(invalid(format!(
                "{} support points but {} weights",
                self.points.len(),
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(invalid("measure weights must be positive"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(invalid(format!("measure weights sum to {total}, expected 1")));
        }
        for p in &self.points {
            self.spec.check_point(p)?;
        }
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                if self.spec.distance(a, b) <= MIN_SEPARATION {
                    return Err(invalid("measure support points must be pairwise distinct"));
                }
            }
        }
        Ok(())
    }

    /// Same measure with support points reordered: new point `k` is old point `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            spec: self.spec.clone(),
            points: perm.iter().map(|&k| self.points[k].clone()).collect(),
            weights: perm.iter().map(|&k| self.weights[k]).collect(),
        }
    }
}
