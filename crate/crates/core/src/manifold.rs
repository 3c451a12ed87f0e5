//! Closed-form Riemannian geometry on three model spaces: the unit sphere
//! (S¹, S²) embedded in ambient coordinates, the flat torus with per-axis
//! periods, and Euclidean space.
//!
//! Points and tangent vectors are plain coordinate vectors. Sphere points are
//! unit vectors in R^(dim+1) and tangents at `x` are ambient vectors orthogonal
//! to `x`. Torus points live in the half-open fundamental domain
//! `[0, period)` per axis; torus and Euclidean tangents are R^dim.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

/// Distance to the cut locus below which a point counts as on it.
pub const CUT_LOCUS_TOL: f64 = 1e-10;

/// Cut-locus margin reported on Euclidean space, which has no cut locus.
pub const EUCLIDEAN_CUT_MARGIN: f64 = 1e12;

const SPHERE_NORM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Sphere,
    Torus,
    Euclidean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    /// Intrinsic dimension.
    pub dim: usize,
    /// Torus periods per axis; all 1 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ManifoldPoint {
    pub coords: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: ManifoldPoint,
    pub components: Vec<f64>,
}

impl ManifoldPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

impl From<Vec<f64>> for ManifoldPoint {
    fn from(coords: Vec<f64>) -> Self {
        Self { coords }
    }
}

impl TangentVector {
    pub fn zero(base: &ManifoldPoint) -> Self {
        Self {
            base: base.clone(),
            components: vec![0.0; base.dim()],
        }
    }

    pub fn norm(&self) -> f64 {
        norm(&self.components)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            base: self.base.clone(),
            components: self.components.iter().map(|c| c * s).collect(),
        }
    }

    /// Inner product with another vector in the same tangent space.
    pub fn dot(&self, other: &TangentVector) -> f64 {
        dot(&self.components, &other.components)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Wrap a coordinate into `[0, period)`.
fn wrap(a: f64, period: f64) -> f64 {
    let r = a.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Signed shortest displacement from `a` to `b` on a circle of the given period,
/// in `[-period/2, period/2]`.
fn wrapped_diff(a: f64, b: f64, period: f64) -> f64 {
    let d = b - a;
    d - period * (d / period).round()
}

impl ManifoldSpec {
    pub fn sphere(dim: usize) -> Self {
        Self {
            kind: ManifoldKind::Sphere,
            dim,
            period: None,
        }
    }

    pub fn torus(dim: usize) -> Self {
        Self {
            kind: ManifoldKind::Torus,
            dim,
            period: None,
        }
    }

    pub fn torus_with_periods(periods: Vec<f64>) -> Self {
        Self {
            kind: ManifoldKind::Torus,
            dim: periods.len(),
            period: Some(periods),
        }
    }

    pub fn euclidean(dim: usize) -> Self {
        Self {
            kind: ManifoldKind::Euclidean,
            dim,
            period: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("manifold dimension must be at least 1"));
        }
        match self.kind {
            ManifoldKind::Sphere if self.dim > 2 => {
                Err(invalid(format!("sphere dimension {} unsupported (1 or 2)", self.dim)))
            }
            ManifoldKind::Torus | ManifoldKind::Euclidean if self.dim > 4 => Err(invalid(format!(
                "{:?} dimension {} unsupported (1 to 4)",
                self.kind, self.dim
            ))),
            _ => Ok(()),
        }?;
        if let Some(p) = &self.period {
            if self.kind != ManifoldKind::Torus {
                return Err(invalid("`period` is only meaningful for the torus"));
            }
            if p.len() != self.dim {
                return Err(invalid(format!(
                    "torus has dim {} but {} periods",
                    self.dim,
                    p.len()
                )));
            }
            if p.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
                return Err(invalid("torus periods must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Length of the coordinate vector of a point.
    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere => self.dim + 1,
            _ => self.dim,
        }
    }

    pub fn period(&self, axis: usize) -> f64 {
        self.period.as_ref().map_or(1.0, |p| p[axis])
    }

    /// Largest possible distance between two points (infinite for Euclidean space).
    pub fn diameter(&self) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => PI,
            ManifoldKind::Torus => (0..self.dim)
                .map(|i| (self.period(i) / 2.0).powi(2))
                .sum::<f64>()
                .sqrt(),
            ManifoldKind::Euclidean => f64::INFINITY,
        }
    }

    /// Longest tangent step that still makes geometric sense for descent.
    pub(crate) fn max_step_length(&self) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => PI / 2.0,
            ManifoldKind::Torus => {
                (0..self.dim).map(|i| self.period(i)).fold(f64::INFINITY, f64::min) / 4.0
            }
            ManifoldKind::Euclidean => f64::INFINITY,
        }
    }

    pub fn check_point(&self, x: &ManifoldPoint) -> Result<()> {
        if x.dim() != self.ambient_dim() {
            return Err(invalid(format!(
                "point has {} coordinates, expected {}",
                x.dim(),
                self.ambient_dim()
            )));
        }
        if x.coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("point has non-finite coordinates"));
        }
        match self.kind {
            ManifoldKind::Sphere => {
                let n = norm(&x.coords);
                if (n - 1.0).abs() > SPHERE_NORM_TOL {
                    return Err(invalid(format!("sphere point has norm {n}, expected 1")));
                }
            }
            ManifoldKind::Torus => {
                for (i, &c) in x.coords.iter().enumerate() {
                    if !(0.0..self.period(i)).contains(&c) {
                        return Err(invalid(format!(
                            "torus coordinate {c} outside [0, {})",
                            self.period(i)
                        )));
                    }
                }
            }
            ManifoldKind::Euclidean => {}
        }
        Ok(())
    }

    /// Map arbitrary coordinates onto the manifold: normalize onto the sphere,
    /// wrap into the torus fundamental domain.
    pub fn canonicalize(&self, coords: Vec<f64>) -> Result<ManifoldPoint> {
        if coords.len() != self.ambient_dim() {
            return Err(invalid(format!(
                "point has {} coordinates, expected {}",
                coords.len(),
                self.ambient_dim()
            )));
        }
        let p = match self.kind {
            ManifoldKind::Sphere => {
                let n = norm(&coords);
                if !(n.is_finite() && n > 0.0) {
                    return Err(invalid("cannot project the zero vector onto the sphere"));
                }
                coords.iter().map(|c| c / n).collect()
            }
            ManifoldKind::Torus => coords
                .iter()
                .enumerate()
                .map(|(i, &c)| wrap(c, self.period(i)))
                .collect(),
            ManifoldKind::Euclidean => coords,
        };
        let p = ManifoldPoint::new(p);
        self.check_point(&p)?;
        Ok(p)
    }

    pub fn distance(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => {
                if x == y {
                    return 0.0;
                }
                let c = dot(&x.coords, &y.coords);
                let s = x
                    .coords
                    .iter()
                    .zip(&y.coords)
                    .map(|(a, b)| (b - c * a).powi(2))
                    .sum::<f64>()
                    .sqrt();
                s.atan2(c)
            }
            ManifoldKind::Torus => x
                .coords
                .iter()
                .zip(&y.coords)
                .enumerate()
                .map(|(i, (a, b))| wrapped_diff(*a, *b, self.period(i)).powi(2))
                .sum::<f64>()
                .sqrt(),
            ManifoldKind::Euclidean => x
                .coords
                .iter()
                .zip(&y.coords)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn exp_map(&self, x: &ManifoldPoint, v: &TangentVector) -> ManifoldPoint {
        self.exp_components(x, &v.components)
    }

    pub(crate) fn exp_components(&self, x: &ManifoldPoint, v: &[f64]) -> ManifoldPoint {
        match self.kind {
            ManifoldKind::Sphere => {
                let v = self.project_tangent(x, v);
                let t = norm(&v);
                if t == 0.0 {
                    return x.clone();
                }
                let (s, c) = t.sin_cos();
                let y: Vec<f64> = x
                    .coords
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| a * c + b * (s / t))
                    .collect();
                let n = norm(&y);
                ManifoldPoint::new(y.into_iter().map(|a| a / n).collect())
            }
            ManifoldKind::Torus => ManifoldPoint::new(
                x.coords
                    .iter()
                    .zip(v)
                    .enumerate()
                    .map(|(i, (a, b))| wrap(a + b, self.period(i)))
                    .collect(),
            ),
            ManifoldKind::Euclidean => {
                ManifoldPoint::new(x.coords.iter().zip(v).map(|(a, b)| a + b).collect())
            }
        }
    }

    /// Inverse of the exponential map. Fails on the cut locus, where the
    /// minimizing geodesic from `x` to `y` is not unique.
    pub fn log_map(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<TangentVector> {
        let components = match self.kind {
            ManifoldKind::Sphere => {
                let c = dot(&x.coords, &y.coords);
                let w: Vec<f64> = x.coords.iter().zip(&y.coords).map(|(a, b)| b - c * a).collect();
                let s = norm(&w);
                let d = s.atan2(c);
                if PI - d < CUT_LOCUS_TOL {
                    return Err(Error::CutLocus { margin: PI - d });
                }
                if s == 0.0 {
                    vec![0.0; w.len()]
                } else {
                    w.into_iter().map(|a| a * (d / s)).collect()
                }
            }
            ManifoldKind::Torus => {
                let mut out = Vec::with_capacity(self.dim);
                for (i, (a, b)) in x.coords.iter().zip(&y.coords).enumerate() {
                    let p = self.period(i);
                    let d = wrapped_diff(*a, *b, p);
                    let margin = (p / 2.0 - d.abs()).abs();
                    if margin < CUT_LOCUS_TOL {
                        return Err(Error::CutLocus { margin });
                    }
                    out.push(d);
                }
                out
            }
            ManifoldKind::Euclidean => x.coords.iter().zip(&y.coords).map(|(a, b)| b - a).collect(),
        };
        Ok(TangentVector {
            base: x.clone(),
            components,
        })
    }

    /// Gap between `y` and the cut locus of `x`.
    pub fn cut_locus_margin(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => (PI - self.distance(x, y)).max(0.0),
            ManifoldKind::Torus => x
                .coords
                .iter()
                .zip(&y.coords)
                .enumerate()
                .map(|(i, (a, b))| {
                    let p = self.period(i);
                    (p / 2.0 - wrapped_diff(*a, *b, p).abs()).abs()
                })
                .fold(f64::INFINITY, f64::min),
            ManifoldKind::Euclidean => EUCLIDEAN_CUT_MARGIN,
        }
    }

    /// Deterministic sample: uniform surface measure on the sphere, uniform on
    /// the torus, uniform in `[-1, 1]^dim` on Euclidean space.
    pub fn random_point(&self, seed: u64) -> ManifoldPoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_point(&mut rng)
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> ManifoldPoint {
        match self.kind {
            ManifoldKind::Sphere => loop {
                let g: Vec<f64> = (0..self.ambient_dim())
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let n = norm(&g);
                if n > 1e-8 {
                    break ManifoldPoint::new(g.into_iter().map(|a| a / n).collect());
                }
            },
            ManifoldKind::Torus => ManifoldPoint::new(
                (0..self.dim)
                    .map(|i| wrap(rng.random::<f64>() * self.period(i), self.period(i)))
                    .collect(),
            ),
            ManifoldKind::Euclidean => {
                ManifoldPoint::new((0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            }
        }
    }

    /// Gaussian tangent direction at `x` rescaled to the given length.
    pub fn random_tangent<R: Rng + ?Sized>(
        &self,
        x: &ManifoldPoint,
        length: f64,
        rng: &mut R,
    ) -> TangentVector {
        loop {
            let g: Vec<f64> = (0..self.ambient_dim())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let g = self.project_tangent(x, &g);
            let n = norm(&g);
            if n > 1e-8 {
                return TangentVector {
                    base: x.clone(),
                    components: g.into_iter().map(|a| a * length / n).collect(),
                };
            }
        }
    }

    /// Orthogonal projection of an ambient vector onto the tangent space at `x`.
    pub fn project_tangent(&self, x: &ManifoldPoint, v: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Sphere => {
                let c = dot(&x.coords, v);
                v.iter().zip(&x.coords).map(|(a, b)| a - c * b).collect()
            }
            _ => v.to_vec(),
        }
    }

    /// Orthonormal basis of the tangent space at `x`.
    pub fn tangent_basis(&self, x: &ManifoldPoint) -> Vec<Vec<f64>> {
        match self.kind {
            ManifoldKind::Sphere => {
                let n = self.ambient_dim();
                let mut basis: Vec<Vec<f64>> = Vec::with_capacity(self.dim);
                // Gram-Schmidt over the ambient axes, most orthogonal to x first.
                let mut axes: Vec<usize> = (0..n).collect();
                axes.sort_by(|&a, &b| x.coords[a].abs().total_cmp(&x.coords[b].abs()));
                for axis in axes {
                    if basis.len() == self.dim {
                        break;
                    }
                    let mut e = vec![0.0; n];
                    e[axis] = 1.0;
                    let mut v = self.project_tangent(x, &e);
                    for b in &basis {
                        let c = dot(&v, b);
                        v.iter_mut().zip(b).for_each(|(a, bb)| *a -= c * bb);
                    }
                    let len = norm(&v);
                    if len > 1e-6 {
                        basis.push(v.into_iter().map(|a| a / len).collect());
                    }
                }
                basis
            }
            _ => (0..self.dim)
                .map(|i| {
                    let mut e = vec![0.0; self.dim];
                    e[i] = 1.0;
                    e
                })
                .collect(),
        }
    }

    /// The antipode on the sphere; `None` on other manifolds.
    pub fn antipode(&self, x: &ManifoldPoint) -> Option<ManifoldPoint> {
        (self.kind == ManifoldKind::Sphere)
            .then(|| ManifoldPoint::new(x.coords.iter().map(|a| -a).collect()))
    }
}
