//! Brute-force references for tests. Each routine is deliberately naive and
//! shares no code with the solvers it checks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::frechet::{self, KarcherProblem, KarcherResult};
use crate::manifold::{ManifoldPoint, ManifoldSpec, TangentVector};
use crate::measure::DiscreteMeasure;
use crate::solver::{DualPotentials, PlanSource, TransportPlan};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub grid_resolution: usize,
    pub fd_step: f64,
    pub enumeration_cap: u128,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid_resolution: 200,
            fd_step: 1e-5,
            enumeration_cap: 1_000_000,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_resolution < 10 {
            return Err(invalid("grid_resolution must be at least 10"));
        }
        if !(1e-8..=1e-3).contains(&self.fd_step) {
            return Err(invalid("fd_step must lie in [1e-8, 1e-3]"));
        }
        Ok(())
    }
}

/// Grid-search Karcher mean.
pub fn grid_karcher(prob: &KarcherProblem, cfg: &OracleConfig) -> Result<KarcherResult> {
    cfg.validate()?;
    frechet::brute_force(prob, cfg.grid_resolution)
}

/// Next permutation in lexicographic order; false after the last one.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut out = vec![p.clone()];
    while next_permutation(&mut p) {
        out.push(p.clone());
    }
    out
}

fn tensor_value(shape: &[usize], values: &[f64], idx: &[usize]) -> f64 {
    let mut flat = 0;
    for (i, &k) in idx.iter().enumerate() {
        flat = flat * shape[i] + k;
    }
    values[flat]
}

/// Best Monge plan `k ↦ (k, σ₂(k), …, σₘ(k))` over all tuples of
/// permutations, for uniform marginals of a common size `n`.
pub fn enumerate_assignments(
    shape: &[usize],
    values: &[f64],
    measures: &[DiscreteMeasure],
    cap: u128,
) -> Result<(TransportPlan, f64)> {
    let n = shape[0];
    if shape.iter().any(|&k| k != n) || measures.len() != shape.len() {
        return Err(invalid("assignment enumeration needs equal-size marginals"));
    }
    let uniform = 1.0 / n as f64;
    if measures
        .iter()
        .any(|mu| mu.weights.iter().any(|w| (w - uniform).abs() > 1e-12))
    {
        return Err(invalid("assignment enumeration needs uniform marginals"));
    }
    let factorial: u128 = (1..=n as u128).product();
    let count = (0..shape.len() - 1).try_fold(1u128, |acc, _| acc.checked_mul(factorial));
    match count {
        Some(c) if c <= cap => {}
        _ => {
            return Err(Error::EnumerationCap {
                count: count.unwrap_or(u128::MAX),
                cap,
            })
        }
    }

    let perms = all_permutations(n);
    let others = shape.len() - 1;
    let mut choice = vec![0; others];
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let total: f64 = (0..n)
            .map(|k| {
                let mut idx = vec![k];
                idx.extend(choice.iter().map(|&c| perms[c][k]));
                tensor_value(shape, values, &idx)
            })
            .sum::<f64>()
            * uniform;
        if best.as_ref().is_none_or(|b| total < b.1) {
            best = Some((choice.clone(), total));
        }
        // Odometer over the choice of permutation for each other marginal.
        let mut pos = others;
        loop {
            if pos == 0 {
                let (choice, value) = best.unwrap();
                let mut entries: Vec<(Vec<usize>, f64)> = (0..n)
                    .map(|k| {
                        let mut idx = vec![k];
                        idx.extend(choice.iter().map(|&c| perms[c][k]));
                        (idx, uniform)
                    })
                    .collect();
                entries.sort_by(|a, b| a.0.cmp(&b.0));
                let plan = TransportPlan {
                    shape: shape.to_vec(),
                    entries,
                    source: PlanSource::Enumeration,
                };
                return Ok((plan, value));
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < perms.len() {
                break;
            }
            choice[pos] = 0;
        }
    }
}

/// Minimum cost over all vertices of the transport polytope, found by
/// solving every square subsystem of the full constraint matrix.
pub fn enumerate_vertices(
    shape: &[usize],
    values: &[f64],
    weights: &[Vec<f64>],
    cap: u128,
) -> Result<f64> {
    let n_cols = values.len();
    let rows: usize = shape.iter().sum();
    let rank = rows - shape.len() + 1;
    let count = binomial(n_cols as u128, rank as u128);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mut a = DMatrix::<f64>::zeros(rows, n_cols);
    for col in 0..n_cols {
        let mut rest = col;
        let mut offset = rows;
        for i in (0..shape.len()).rev() {
            offset -= shape[i];
            a[(offset + rest % shape[i], col)] = 1.0;
            rest /= shape[i];
        }
    }
    let b = DVector::from_iterator(rows, weights.iter().flatten().copied());

    let mut best = f64::INFINITY;
    let mut subset: Vec<usize> = (0..rank).collect();
    loop {
        let sub = a.select_columns(subset.iter());
        let svd = sub.clone().svd(true, true);
        if svd.rank(1e-9) == rank {
            let x = svd.solve(&b, 1e-12).map_err(|e| Error::Numerical(e.to_string()))?;
            let residual = (&sub * &x - &b).norm();
            if residual < 1e-9 && x.iter().all(|&v| v >= -1e-12) {
                let cost: f64 = subset.iter().zip(x.iter()).map(|(&j, v)| values[j] * v).sum();
                best = best.min(cost);
            }
        }
        // Next combination in lexicographic order.
        let Some(i) = (0..rank).rev().find(|&i| subset[i] < n_cols - rank + i) else {
            break;
        };
        subset[i] += 1;
        for j in i + 1..rank {
            subset[j] = subset[j - 1] + 1;
        }
    }
    Ok(best)
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// `max over all tuples of Σᵢ uᵢ[idxᵢ] - c[idx]`.
pub fn exhaustive_dual_check(shape: &[usize], values: &[f64], u: &DualPotentials) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    let mut idx = vec![0; shape.len()];
    for &c in values {
        let s: f64 = idx.iter().enumerate().map(|(i, &k)| u.u[i][k]).sum();
        worst = worst.max(s - c);
        for i in (0..shape.len()).rev() {
            idx[i] += 1;
            if idx[i] < shape[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    worst
}

/// Central-difference gradient along an orthonormal tangent basis.
pub fn fd_gradient<F>(spec: &ManifoldSpec, objective: F, x: &ManifoldPoint, step: f64) -> TangentVector
where
    F: Fn(&ManifoldPoint) -> f64,
{
    let mut components = vec![0.0; x.coords.len()];
    for e in spec.tangent_basis(x) {
        let plus = spec.exp_map(x, &TangentVector { base: x.clone(), components: e.iter().map(|v| v * step).collect() });
        let minus = spec.exp_map(x, &TangentVector { base: x.clone(), components: e.iter().map(|v| -v * step).collect() });
        let slope = (objective(&plus) - objective(&minus)) / (2.0 * step);
        components.iter_mut().zip(&e).for_each(|(c, b)| *c += slope * b);
    }
    TangentVector {
        base: x.clone(),
        components,
    }
}
