//! Log-domain multi-marginal Sinkhorn with ε-scaling.
//!
//! The entropic plan is `P[idx] = exp(score[idx] / ε)` with
//! `score[idx] = Σⱼ (uⱼ[idxⱼ] + ε log wⱼ[idxⱼ]) - c[idx]`. Updating marginal
//! `i` adds `ε (log wᵢ - log rᵢ)` to `uᵢ`, where `rᵢ` is the current marginal,
//! computed by a log-sum-exp over each slice. The kernel `exp(-c/ε)` is never
//! formed; only the final plan is exponentiated, then rounded onto the exact
//! marginals.

use serde::{Deserialize, Serialize};

use super::{
    check_inputs, conjugate_sweep, potential_sums, slice_indices, weights_of, DualPotentials,
    PlanSource, SolveReport, TransportPlan,
};
use crate::cost::{strides, unflatten, CostTensor};
use crate::error::{invalid, Error, Result};
use crate::measure::DiscreteMeasure;
use crate::par;

/// Geometric ε schedule from `start` down to `end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub factor: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 1e-3,
            factor: 0.5,
        }
    }
}

impl EpsilonSchedule {
    pub fn to(end: f64) -> Self {
        Self {
            end,
            ..Self::default()
        }
    }

    pub fn stages(&self) -> Result<Vec<f64>> {
        if !(self.end > 0.0 && self.start >= self.end && self.factor > 0.0 && self.factor < 1.0) {
            return Err(invalid(format!("bad epsilon schedule {self:?}")));
        }
        let mut out = Vec::new();
        let mut e = self.start;
        while e > self.end * (1.0 + 1e-12) {
            out.push(e);
            e *= self.factor;
        }
        out.push(self.end);
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornOptions {
    pub epsilon_schedule: EpsilonSchedule,
    /// Sweeps per ε stage.
    pub max_iter: usize,
    /// L1 marginal error required at the final ε.
    pub tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            epsilon_schedule: EpsilonSchedule::default(),
            max_iter: 20_000,
            tol: 1e-9,
        }
    }
}

const INTERMEDIATE_TOL: f64 = 1e-4;
const RESCORE_EVERY: usize = 64;

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + it.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn scores(shape: &[usize], values: &[f64], u: &[Vec<f64>], logw: &[Vec<f64>], eps: f64) -> Vec<f64> {
    let shifted: Vec<Vec<f64>> = u
        .iter()
        .zip(logw)
        .map(|(a, l)| a.iter().zip(l).map(|(x, y)| x + eps * y).collect())
        .collect();
    potential_sums(shape, &shifted)
        .into_iter()
        .zip(values)
        .map(|(s, c)| s - c)
        .collect()
}

/// Log of marginal `i` of `exp(score / eps)`.
fn log_marginal(shape: &[usize], score: &[f64], eps: f64, i: usize) -> Vec<f64> {
    par::map_range(shape[i], |k| {
        log_sum_exp(slice_indices(shape, i, k).map(|f| score[f] / eps))
    })
}

fn marginal_of(shape: &[usize], p: &[f64], i: usize) -> Vec<f64> {
    (0..shape[i])
        .map(|k| slice_indices(shape, i, k).map(|f| p[f]).sum())
        .collect()
}

/// Scale each marginal down onto its target, then add the rank-one
/// correction `⊗ᵢ errᵢ / δ^(m-1)`, which restores every marginal exactly.
fn round_to_marginals(shape: &[usize], p: &mut [f64], weights: &[Vec<f64>]) {
    let st = strides(shape);
    for i in 0..shape.len() {
        let r = marginal_of(shape, p, i);
        let z: Vec<f64> = r
            .iter()
            .zip(&weights[i])
            .map(|(&rk, &wk)| if rk > wk { wk / rk } else { 1.0 })
            .collect();
        for (f, v) in p.iter_mut().enumerate() {
            *v *= z[(f / st[i]) % shape[i]];
        }
    }
    let errs: Vec<Vec<f64>> = (0..shape.len())
        .map(|i| {
            marginal_of(shape, p, i)
                .iter()
                .zip(&weights[i])
                .map(|(r, w)| (w - r).max(0.0))
                .collect()
        })
        .collect();
    let deficit: f64 = errs[0].iter().sum();
    if deficit <= 0.0 {
        return;
    }
    let scale = deficit.powi(shape.len() as i32 - 1);
    for (f, v) in p.iter_mut().enumerate() {
        let idx = unflatten(shape, f);
        let prod: f64 = idx.iter().enumerate().map(|(i, &k)| errs[i][k]).product();
        *v += prod / scale;
    }
}

pub fn solve_sinkhorn(
    tensor: &CostTensor,
    measures: &[DiscreteMeasure],
    opts: &SinkhornOptions,
) -> Result<(TransportPlan, DualPotentials, SolveReport)> {
    solve_sinkhorn_raw(&tensor.shape, &tensor.values, &weights_of(measures), opts)
}

pub fn solve_sinkhorn_raw(
    shape: &[usize],
    values: &[f64],
    weights: &[Vec<f64>],
    opts: &SinkhornOptions,
) -> Result<(TransportPlan, DualPotentials, SolveReport)> {
    check_inputs(shape, values, weights)?;
    if values.len() > crate::cost::DEFAULT_TENSOR_CAP {
        return Err(Error::SizeCap {
            entries: values.len(),
            cap: crate::cost::DEFAULT_TENSOR_CAP,
        });
    }
    let stages = opts.epsilon_schedule.stages()?;
    let m = shape.len();
    let st = strides(shape);
    let logw: Vec<Vec<f64>> = weights.iter().map(|w| w.iter().map(|x| x.ln()).collect()).collect();
    let mut u: Vec<Vec<f64>> = shape.iter().map(|&n| vec![0.0; n]).collect();
    let mut sweeps = 0;
    let mut eps = stages[0];
    let mut score = Vec::new();

    for (s, &e) in stages.iter().enumerate() {
        eps = e;
        let last = s + 1 == stages.len();
        let tol = if last { opts.tol } else { opts.tol.max(INTERMEDIATE_TOL) };
        score = scores(shape, values, &u, &logw, eps);
        let mut residual = f64::INFINITY;
        for sweep in 0..opts.max_iter {
            for i in 0..m {
                let lm = log_marginal(shape, &score, eps, i);
                let delta: Vec<f64> = logw[i].iter().zip(&lm).map(|(lw, l)| eps * (lw - l)).collect();
                u[i].iter_mut().zip(&delta).for_each(|(a, d)| *a += d);
                for (f, v) in score.iter_mut().enumerate() {
                    *v += delta[(f / st[i]) % shape[i]];
                }
            }
            sweeps += 1;
            if sweep % RESCORE_EVERY == RESCORE_EVERY - 1 {
                score = scores(shape, values, &u, &logw, eps);
            }
            residual = (0..m)
                .map(|i| {
                    log_marginal(shape, &score, eps, i)
                        .iter()
                        .zip(&weights[i])
                        .map(|(l, w)| (l.exp() - w).abs())
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            if residual <= tol {
                break;
            }
        }
        if last && residual > tol {
            return Err(Error::IterationLimit {
                max_iter: opts.max_iter,
                epsilon: eps,
                residual,
            });
        }
    }

    let mut p: Vec<f64> = score.iter().map(|s| (s / eps).exp()).collect();
    round_to_marginals(shape, &mut p, weights);
    let plan = TransportPlan {
        shape: shape.to_vec(),
        entries: p
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(f, &v)| (unflatten(shape, f), v))
            .collect(),
        source: PlanSource::SinkhornRounded,
    };
    // Entropic potentials are only approximately feasible; conjugating makes
    // them feasible so the dual value is a true lower bound.
    let potentials = conjugate_sweep(shape, values, &DualPotentials::new(u, shape, values));
    let primal_value = plan.cost(shape, values);
    let dual_value = potentials.objective(weights);
    let report = SolveReport {
        source: PlanSource::SinkhornRounded,
        primal_value,
        dual_value,
        gap: primal_value - dual_value,
        iterations: sweeps,
        epsilon: Some(eps),
        marginal_residuals: plan.marginal_residuals(weights),
        tied_columns: None,
    };
    Ok((plan, potentials, report))
}
