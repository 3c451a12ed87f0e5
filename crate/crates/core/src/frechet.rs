//! Fréchet (Karcher) means: minimizers of `y ↦ Σᵢ wᵢ fᵢ(d(xᵢ, y))`.
//!
//! [`solve`] runs Riemannian gradient descent with Armijo backtracking from
//! every data point plus a number of seeded random starts, then clusters the
//! surviving minima so that non-unique means (two antipodal points on the
//! sphere, say) are reported rather than silently collapsed.
//! [`brute_force`] is an exhaustive grid scan used as an oracle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::manifold::{dot, ManifoldKind, ManifoldPoint, ManifoldSpec, TangentVector};
use crate::{mix_seed, par};

/// A strictly increasing, strictly convex C² function of distance with
/// `f(0) = 0` and `f'(0) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "f", rename_all = "snake_case")]
pub enum CostFn {
    /// `t²/2`
    HalfSquare,
    /// `t^p/p` with `p > 2`.
    Power { p: f64 },
    /// `cosh(t) - 1`
    CoshMinusOne,
}

impl CostFn {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CostFn::Power { p } if !(p.is_finite() && p > 2.0) => Err(invalid(format!(
                "power cost needs p > 2 (got {p}); use half_square for p = 2"
            ))),
            _ => Ok(()),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            CostFn::HalfSquare => 0.5 * t * t,
            CostFn::Power { p } => t.powf(p) / p,
            CostFn::CoshMinusOne => 2.0 * (0.5 * t).sinh().powi(2),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            CostFn::HalfSquare => t,
            CostFn::Power { p } => t.powf(p - 1.0),
            CostFn::CoshMinusOne => t.sinh(),
        }
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        match *self {
            CostFn::HalfSquare => 1.0,
            CostFn::Power { p } => (p - 1.0) * t.powf(p - 2.0),
            CostFn::CoshMinusOne => t.cosh(),
        }
    }

    /// Inverse of `f'` on `[0, ∞)`.
    pub fn inverse_derivative(&self, s: f64) -> f64 {
        match *self {
            CostFn::HalfSquare => s,
            CostFn::Power { p } => s.powf(1.0 / (p - 1.0)),
            CostFn::CoshMinusOne => s.asinh(),
        }
    }

    /// `f'(t)/t`, continuously extended to `t = 0`.
    fn derivative_over_t(&self, t: f64) -> f64 {
        match *self {
            CostFn::HalfSquare => 1.0,
            CostFn::Power { p } => t.powf(p - 2.0),
            CostFn::CoshMinusOne => {
                if t < 1e-8 {
                    1.0
                } else {
                    t.sinh() / t
                }
            }
        }
    }
}

/// One cost function per marginal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostFamily(pub Vec<CostFn>);

impl CostFamily {
    pub fn uniform(f: CostFn, m: usize) -> Self {
        Self(vec![f; m])
    }

    pub fn half_square(m: usize) -> Self {
        Self::uniform(CostFn::HalfSquare, m)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> CostFn {
        self.0[i]
    }

    pub fn validate(&self) -> Result<()> {
        self.0.iter().try_for_each(CostFn::validate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KarcherProblem {
    pub spec: ManifoldSpec,
    pub points: Vec<ManifoldPoint>,
    pub weights: Vec<f64>,
    pub family: CostFamily,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KarcherOptions {
    /// Random starts in addition to the data points.
    pub starts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub value_tol: f64,
    pub cluster_tol: f64,
    pub seed: u64,
}

impl Default for KarcherOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            max_iter: 2000,
            grad_tol: 1e-10,
            value_tol: 1e-9,
            cluster_tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KarcherResult {
    /// Distinct minimizers in lexicographic coordinate order; the first is
    /// the representative.
    pub minimizers: Vec<ManifoldPoint>,
    pub value: f64,
    pub grad_norm: f64,
    pub unique: bool,
    /// Smallest cut-locus margin between any data point and any minimizer.
    pub min_cut_margin: f64,
    pub iterations: usize,
}

impl KarcherResult {
    pub fn best(&self) -> &ManifoldPoint {
        &self.minimizers[0]
    }
}

const PERTURBATION: f64 = 1e-4;
const MAX_RESTARTS: usize = 16;
const ARMIJO_C: f64 = 1e-4;

impl KarcherProblem {
    /// Unit weights.
    pub fn new(spec: ManifoldSpec, points: Vec<ManifoldPoint>, family: CostFamily) -> Self {
        let m = points.len();
        Self {
            spec,
            points,
            weights: vec![1.0; m],
            family,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let m = self.points.len();
        if m < 2 {
            return Err(invalid(format!("need at least two points, got {m}")));
        }
        if self.weights.len() != m || self.family.len() != m {
            return Err(invalid(format!(
                "{m} points but {} weights and {} cost functions",
                self.weights.len(),
                self.family.len()
            )));
        }
        if self.weights.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(invalid("weights must be positive"));
        }
        self.family.validate()?;
        self.points.iter().try_for_each(|p| self.spec.check_point(p))
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn objective(&self, y: &ManifoldPoint) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .zip(&self.family.0)
            .map(|((x, w), f)| w * f.value(self.spec.distance(x, y)))
            .sum()
    }

    /// Riemannian gradient, using `∇_y f(d(x, y)) = -(f'(d)/d) log_y(x)`.
    pub fn gradient(&self, y: &ManifoldPoint) -> Result<TangentVector> {
        let mut g = vec![0.0; y.dim()];
        for ((x, w), f) in self.points.iter().zip(&self.weights).zip(&self.family.0) {
            let l = self.spec.log_map(y, x)?;
            let d = l.norm();
            if d == 0.0 {
                continue;
            }
            let s = w * f.derivative_over_t(d);
            g.iter_mut().zip(&l.components).for_each(|(a, b)| *a -= s * b);
        }
        Ok(TangentVector {
            base: y.clone(),
            components: g,
        })
    }

    pub fn min_cut_margin(&self, y: &ManifoldPoint) -> f64 {
        self.points
            .iter()
            .map(|x| self.spec.cut_locus_margin(x, y))
            .fold(f64::INFINITY, f64::min)
    }

    fn descend(&self, start: ManifoldPoint, opts: &KarcherOptions, seed: u64) -> Descent {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = start;
        let mut g = None;
        for _ in 0..=MAX_RESTARTS {
            match self.gradient(&y) {
                Ok(v) => {
                    g = Some(v);
                    break;
                }
                Err(_) => {
                    let v = self.spec.random_tangent(&y, PERTURBATION, &mut rng);
                    y = self.spec.exp_map(&y, &v);
                }
            }
        }
        let Some(mut g) = g else {
            return Descent::stalled(y, f64::INFINITY, f64::INFINITY, 0);
        };
        let mut f = self.objective(&y);
        let total_weight: f64 = self.weights.iter().sum();
        let mut step = 1.0 / total_weight;
        let max_len = self.spec.max_step_length();
        // Previous displacement and gradient, for Barzilai-Borwein steps.
        let mut last: Option<(Vec<f64>, Vec<f64>)> = None;

        for it in 0..opts.max_iter {
            let gn = g.norm();
            if gn <= opts.grad_tol {
                return Descent {
                    point: y,
                    value: f,
                    grad_norm: gn,
                    iterations: it,
                    converged: true,
                };
            }
            if let Some((s_prev, g_prev)) = &last {
                // Transport by projection onto the current tangent space.
                let s = self.spec.project_tangent(&y, s_prev);
                let gp = self.spec.project_tangent(&y, g_prev);
                let dg: Vec<f64> = g.components.iter().zip(&gp).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &dg);
                if sy > 0.0 {
                    step = (dot(&s, &s) / sy).clamp(1e-6 / total_weight, 1e6 / total_weight);
                }
            }
            loop {
                let eff = step.min(max_len / gn);
                let trial = self.spec.exp_map(&y, &g.scaled(-eff));
                let ft = self.objective(&trial);
                let sufficient = ft <= f - ARMIJO_C * eff * gn * gn;
                // Below round-off the Armijo test is meaningless; accept any
                // step that does not raise the value and shrinks the gradient.
                let in_noise = ft <= f + 1e-14 * f.abs().max(1.0);
                if sufficient || in_noise {
                    if let Ok(gt) = self.gradient(&trial) {
                        if sufficient || gt.norm() < gn {
                            let moved: Vec<f64> = g.components.iter().map(|c| -eff * c).collect();
                            // The displacement ends at the trial point; carry it over by
                            // the same projection as the gradient.
                            last = Some((moved, std::mem::replace(&mut g, gt).components));
                            y = trial;
                            f = ft;
                            break;
                        }
                    }
                }
                step *= 0.5;
                if step * gn < 1e-300 || step < 1e-30 {
                    return Descent::stalled(y, f, gn, it);
                }
            }
        }
        let gn = g.norm();
        Descent {
            converged: gn <= opts.grad_tol,
            point: y,
            value: f,
            grad_norm: gn,
            iterations: opts.max_iter,
        }
    }
}

struct Descent {
    point: ManifoldPoint,
    value: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
}

impl Descent {
    fn stalled(point: ManifoldPoint, value: f64, grad_norm: f64, iterations: usize) -> Self {
        Self {
            point,
            value,
            grad_norm,
            iterations,
            converged: false,
        }
    }
}

pub(crate) fn lex_cmp(a: &ManifoldPoint, b: &ManifoldPoint) -> Ordering {
    a.coords
        .iter()
        .zip(&b.coords)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Group points within `tol` of each other; each cluster is represented by
/// its lowest-value member. Representatives come back in lexicographic order.
fn cluster(
    spec: &ManifoldSpec,
    mut points: Vec<(ManifoldPoint, f64)>,
    tol: f64,
) -> Vec<ManifoldPoint> {
    points.sort_by(|a, b| lex_cmp(&a.0, &b.0));
    let mut reps: Vec<(ManifoldPoint, f64)> = Vec::new();
    for (p, v) in points {
        match reps.iter_mut().find(|r| spec.distance(&r.0, &p) <= tol) {
            Some(r) if v < r.1 => *r = (p, v),
            Some(_) => {}
            None => reps.push((p, v)),
        }
    }
    let mut out: Vec<ManifoldPoint> = reps.into_iter().map(|r| r.0).collect();
    out.sort_by(lex_cmp);
    out
}

fn summarize(
    prob: &KarcherProblem,
    minimizers: Vec<ManifoldPoint>,
    iterations: usize,
) -> KarcherResult {
    let best = &minimizers[0];
    let value = prob.objective(best);
    let grad_norm = prob.gradient(best).map_or(f64::NAN, |g| g.norm());
    let min_cut_margin = minimizers
        .iter()
        .map(|y| prob.min_cut_margin(y))
        .fold(f64::INFINITY, f64::min);
    KarcherResult {
        unique: minimizers.len() == 1,
        minimizers,
        value,
        grad_norm,
        min_cut_margin,
        iterations,
    }
}

/// Multi-start Riemannian gradient descent.
///
/// Starts are the data points followed by `opts.starts` seeded random points.
/// Converged minima within `value_tol` of the best are clustered at radius
/// `cluster_tol`; more than one cluster means the mean is not unique.
pub fn solve(prob: &KarcherProblem, opts: &KarcherOptions) -> Result<KarcherResult> {
    prob.validate()?;
    let m = prob.m();
    let n_starts = m + opts.starts;
    let runs = par::map_range(n_starts, |s| {
        let start = if s < m {
            prob.points[s].clone()
        } else {
            prob.spec.random_point(mix_seed(opts.seed, s as u64))
        };
        prob.descend(start, opts, mix_seed(opts.seed ^ 0x5eed, s as u64))
    });

    let iterations = runs.iter().map(|r| r.iterations).sum();
    let best = runs
        .iter()
        .filter(|r| r.converged)
        .map(|r| r.value)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        let best_grad = runs.iter().map(|r| r.grad_norm).fold(f64::INFINITY, f64::min);
        return Err(Error::Convergence {
            grad_tol: opts.grad_tol,
            max_iter: opts.max_iter,
            best_grad,
        });
    }
    let candidates: Vec<(ManifoldPoint, f64)> = runs
        .into_iter()
        .filter(|r| r.converged && r.value <= best + opts.value_tol)
        .map(|r| (r.point, r.value))
        .collect();
    let minimizers = cluster(&prob.spec, candidates, opts.cluster_tol);
    Ok(summarize(prob, minimizers, iterations))
}

/// Deterministic search grid for manifolds of dimension at most two.
///
/// `resolution` counts points per axis: S¹ gets equally spaced angles, S²
/// a Fibonacci lattice of `resolution²` points, the torus a uniform lattice. Euclidean: a
/// `resolution`-per-axis lattice over `bbox` (inclusive).
pub fn grid_points(
    spec: &ManifoldSpec,
    resolution: usize,
    bbox: Option<(&[f64], &[f64])>,
) -> Result<Vec<ManifoldPoint>> {
    if spec.dim > 2 {
        return Err(invalid(format!("grid search needs dim <= 2, got {}", spec.dim)));
    }
    if resolution < 2 {
        return Err(invalid("grid resolution must be at least 2"));
    }
    let axis_values = |i: usize| -> Vec<f64> {
        match spec.kind {
            ManifoldKind::Torus => {
                let p = spec.period(i);
                (0..resolution).map(|k| p * k as f64 / resolution as f64).collect()
            }
            _ => {
                let (lo, hi) = bbox.map_or((-1.0, 1.0), |(lo, hi)| (lo[i], hi[i]));
                if hi <= lo {
                    vec![lo]
                } else {
                    (0..resolution)
                        .map(|k| lo + (hi - lo) * k as f64 / (resolution - 1) as f64)
                        .collect()
                }
            }
        }
    };
    let pts = match (spec.kind, spec.dim) {
        (ManifoldKind::Sphere, 1) => (0..resolution)
            .map(|k| {
                let (s, c) = (2.0 * PI * k as f64 / resolution as f64).sin_cos();
                ManifoldPoint::new(vec![c, s])
            })
            .collect(),
        (ManifoldKind::Sphere, _) => {
            let golden = PI * (3.0 - 5f64.sqrt());
            let count = resolution * resolution;
            (0..count)
                .map(|k| {
                    let z = 1.0 - (2 * k + 1) as f64 / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let (s, c) = (golden * k as f64).sin_cos();
                    ManifoldPoint::new(vec![r * c, r * s, z])
                })
                .collect()
        }
        (_, 1) => axis_values(0).into_iter().map(|a| ManifoldPoint::new(vec![a])).collect(),
        _ => {
            let (xs, ys) = (axis_values(0), axis_values(1));
            xs.iter()
                .flat_map(|&a| ys.iter().map(move |&b| ManifoldPoint::new(vec![a, b])))
                .collect()
        }
    };
    Ok(pts)
}

/// Exhaustive grid scan. Euclidean grids span the bounding box of the data,
/// which contains every minimizer of a convex increasing function of distance.
pub fn brute_force(prob: &KarcherProblem, resolution: usize) -> Result<KarcherResult> {
    prob.validate()?;
    let bbox = (prob.spec.kind == ManifoldKind::Euclidean).then(|| {
        let d = prob.spec.dim;
        let lo: Vec<f64> = (0..d)
            .map(|i| prob.points.iter().map(|p| p.coords[i]).fold(f64::INFINITY, f64::min))
            .collect();
        let hi: Vec<f64> = (0..d)
            .map(|i| prob.points.iter().map(|p| p.coords[i]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        (lo, hi)
    });
    let grid = grid_points(
        &prob.spec,
        resolution,
        bbox.as_ref().map(|(lo, hi)| (lo.as_slice(), hi.as_slice())),
    )?;
    let values = par::map_slice(&grid, |y| prob.objective(y));
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let tie = 1e-12 * best.abs().max(1.0);
    let argmins: Vec<(ManifoldPoint, f64)> = grid
        .iter()
        .zip(&values)
        .filter(|(_, &v)| v <= best + tie)
        .map(|(p, &v)| (p.clone(), v))
        .collect();
    let minimizers = cluster(&prob.spec, argmins, 0.0);
    Ok(summarize(prob, minimizers, grid.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pt(c: &[f64]) -> ManifoldPoint {
        ManifoldPoint::new(c.to_vec())
    }

    #[test]
    fn cost_functions_vanish_at_zero() {
        for f in [CostFn::HalfSquare, CostFn::Power { p: 3.0 }, CostFn::CoshMinusOne] {
            assert_eq!(f.value(0.0), 0.0);
            assert_eq!(f.derivative(0.0), 0.0);
            for t in [0.1, 0.7, 2.5] {
                assert_abs_diff_eq!(f.inverse_derivative(f.derivative(t)), t, epsilon = 1e-12);
                let h = 1e-6;
                let fd = (f.value(t + h) - f.value(t - h)) / (2.0 * h);
                assert_abs_diff_eq!(fd, f.derivative(t), epsilon = 1e-8);
            }
        }
        assert!(CostFn::Power { p: 2.0 }.validate().is_err());
    }

    #[test]
    fn cost_family_json() {
        let fam: CostFamily = serde_json::from_str(
            r#"[{"f": "half_square"}, {"f": "power", "p": 3.0}, {"f": "cosh_minus_one"}]"#,
        )
        .unwrap();
        assert_eq!(
            fam.0,
            vec![CostFn::HalfSquare, CostFn::Power { p: 3.0 }, CostFn::CoshMinusOne]
        );
        assert_eq!(
            serde_json::to_string(&fam).unwrap(),
            r#"[{"f":"half_square"},{"f":"power","p":3.0},{"f":"cosh_minus_one"}]"#
        );
    }

    #[test]
    fn objective_examples() {
        let s2 = ManifoldSpec::sphere(2);
        let poles = KarcherProblem::new(
            s2,
            vec![pt(&[0.0, 0.0, 1.0]), pt(&[0.0, 0.0, -1.0])],
            CostFamily::half_square(2),
        );
        assert_abs_diff_eq!(poles.objective(&pt(&[1.0, 0.0, 0.0])), PI * PI / 4.0, epsilon = 1e-14);

        let tri = KarcherProblem::new(
            ManifoldSpec::euclidean(2),
            vec![pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), pt(&[0.0, 1.0])],
            CostFamily::half_square(3),
        );
        assert_abs_diff_eq!(tri.objective(&pt(&[1.0 / 3.0, 1.0 / 3.0])), 2.0 / 3.0, epsilon = 1e-14);
        assert_eq!(tri.objective(&pt(&[0.0, 0.0])), 1.0);
    }

    #[test]
    fn gradient_examples() {
        let line = KarcherProblem::new(
            ManifoldSpec::euclidean(1),
            vec![pt(&[0.0]), pt(&[1.0])],
            CostFamily::half_square(2),
        );
        assert_abs_diff_eq!(line.gradient(&pt(&[0.0])).unwrap().components[0], -1.0);
        assert_abs_diff_eq!(line.gradient(&pt(&[0.5])).unwrap().norm(), 0.0, epsilon = 1e-12);

        let s2 = ManifoldSpec::sphere(2);
        let prob = KarcherProblem::new(
            s2,
            vec![pt(&[0.0, 0.0, -1.0]), pt(&[1.0, 0.0, 0.0])],
            CostFamily::half_square(2),
        );
        assert!(matches!(
            prob.gradient(&pt(&[0.0, 0.0, 1.0])),
            Err(Error::CutLocus { .. })
        ));
    }

    #[test]
    fn coincident_points() {
        let s2 = ManifoldSpec::sphere(2);
        let p = s2.random_point(5);
        let prob = KarcherProblem::new(s2, vec![p.clone(); 3], CostFamily::half_square(3));
        let r = solve(&prob, &KarcherOptions::default()).unwrap();
        assert!(r.unique);
        assert_eq!(r.value, 0.0);
        assert!(prob.spec.distance(r.best(), &p) < 1e-12);
    }

    #[test]
    fn poles_have_equator_of_means() {
        let prob = KarcherProblem::new(
            ManifoldSpec::sphere(2),
            vec![pt(&[0.0, 0.0, 1.0]), pt(&[0.0, 0.0, -1.0])],
            CostFamily::half_square(2),
        );
        let r = solve(&prob, &KarcherOptions::default()).unwrap();
        assert!(!r.unique);
        assert!(r.minimizers.len() > 1);
        for y in &r.minimizers {
            assert!(y.coords[2].abs() < 1e-6);
        }
        assert_abs_diff_eq!(r.value, PI * PI / 4.0, epsilon = 1e-9);
    }

    #[test]
    fn torus_grid_scan() {
        let prob = KarcherProblem::new(
            ManifoldSpec::torus(1),
            vec![pt(&[0.1]), pt(&[0.9])],
            CostFamily::half_square(2),
        );
        let r = brute_force(&prob, 10_000).unwrap();
        assert!(r.unique);
        assert_abs_diff_eq!(r.best().coords[0], 0.0);
        assert_abs_diff_eq!(r.value, 0.01, epsilon = 1e-15);

        let s = solve(&prob, &KarcherOptions::default()).unwrap();
        assert!(s.unique);
        assert!(prob.spec.distance(s.best(), &pt(&[0.0])) < 1e-10);
        assert!(s.value <= r.value + 1e-9);
    }

    #[test]
    fn grid_scan_of_repeated_point_is_nearest_grid_point() {
        let spec = ManifoldSpec::sphere(2);
        let p = spec.random_point(8);
        let prob = KarcherProblem::new(spec.clone(), vec![p.clone(), p.clone()], CostFamily::half_square(2));
        let grid = grid_points(&spec, 2000, None).unwrap();
        let nearest = grid
            .iter()
            .min_by(|a, b| spec.distance(a, &p).total_cmp(&spec.distance(b, &p)))
            .unwrap();
        let r = brute_force(&prob, 2000).unwrap();
        assert_eq!(r.best(), nearest);
    }

    #[test]
    fn brute_force_rejects_high_dimension() {
        let spec = ManifoldSpec::torus(3);
        let prob = KarcherProblem::new(
            spec.clone(),
            vec![spec.random_point(1), spec.random_point(2)],
            CostFamily::half_square(2),
        );
        assert!(brute_force(&prob, 10).is_err());
    }

    #[test]
    fn invalid_problems_are_rejected() {
        let spec = ManifoldSpec::euclidean(1);
        let one = KarcherProblem::new(spec.clone(), vec![pt(&[0.0])], CostFamily::half_square(1));
        assert!(solve(&one, &KarcherOptions::default()).is_err());
        let mismatch = KarcherProblem::new(spec, vec![pt(&[0.0]), pt(&[1.0])], CostFamily::half_square(3));
        assert!(mismatch.validate().is_err());
    }
}
