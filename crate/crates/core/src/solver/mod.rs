//! Discrete multi-marginal Kantorovich problem: exact LP, entropic
//! (Sinkhorn) solver with rounding, dual potentials and c-conjugation.

mod simplex;
mod sinkhorn;

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::cost::{flatten, strides, unflatten, CostTensor};
use crate::error::{invalid, Result};
use crate::measure::DiscreteMeasure;
use crate::par;

pub use sinkhorn::{solve_sinkhorn, solve_sinkhorn_raw, EpsilonSchedule, SinkhornOptions};

/// Largest LP the exact solver accepts (number of tensor entries).
pub const EXACT_COLUMN_CAP: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSource {
    ExactLp,
    SinkhornRounded,
    Pushforward,
    Enumeration,
}

/// Sparse coupling: `(index tuple, mass)` pairs in lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub shape: Vec<usize>,
    pub entries: Vec<(Vec<usize>, f64)>,
    pub source: PlanSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualPotentials {
    pub u: Vec<Vec<f64>>,
    /// `max(Σᵢ uᵢ - c)` over all tuples (nonpositive when feasible).
    pub feasibility_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub source: PlanSource,
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Per-marginal L1 distance between the plan marginal and the target.
    pub marginal_residuals: Vec<f64>,
    /// Exact LP only: nonbasic columns with zero reduced cost at the optimum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tied_columns: Option<usize>,
}

/// Plan and potentials in one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    #[serde(flatten)]
    pub plan: TransportPlan,
    #[serde(flatten)]
    pub potentials: DualPotentials,
}

impl TransportPlan {
    pub fn m(&self) -> usize {
        self.shape.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Marginal `i` of the plan.
    pub fn marginal(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.shape[i]];
        for (idx, mass) in &self.entries {
            out[idx[i]] += mass;
        }
        out
    }

    pub fn marginal_residuals(&self, weights: &[Vec<f64>]) -> Vec<f64> {
        (0..self.m())
            .map(|i| {
                self.marginal(i)
                    .iter()
                    .zip(&weights[i])
                    .map(|(a, b)| (a - b).abs())
                    .sum()
            })
            .collect()
    }

    /// `Σ c·γ` over the support.
    pub fn cost(&self, shape: &[usize], values: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|(idx, mass)| mass * values[flatten(shape, idx)])
            .sum()
    }

    /// Plan with marginal `axis` relabelled: old point `perm[k]` becomes `k`.
    pub fn relabeled(&self, axis: usize, perm: &[usize]) -> Self {
        let mut inverse = vec![0; perm.len()];
        for (k, &old) in perm.iter().enumerate() {
            inverse[old] = k;
        }
        let mut entries: Vec<(Vec<usize>, f64)> = self
            .entries
            .iter()
            .map(|(idx, mass)| {
                let mut idx = idx.clone();
                idx[axis] = inverse[idx[axis]];
                (idx, *mass)
            })
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        Self {
            shape: self.shape.clone(),
            entries,
            source: self.source,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.m()).map(|i| format!("i{i}")).collect();
        header.push("mass".into());
        out.write_record(&header)?;
        for (idx, mass) in &self.entries {
            let mut row: Vec<String> = idx.iter().map(usize::to_string).collect();
            row.push(mass.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

impl DualPotentials {
    /// Potentials with the feasibility residual computed against `values`.
    pub fn new(u: Vec<Vec<f64>>, shape: &[usize], values: &[f64]) -> Self {
        let feasibility_residual = potential_sums(shape, &u)
            .iter()
            .zip(values)
            .map(|(s, c)| s - c)
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            u,
            feasibility_residual,
        }
    }

    /// `Σᵢ Σₖ wᵢₖ uᵢₖ`.
    pub fn objective(&self, weights: &[Vec<f64>]) -> f64 {
        self.u
            .iter()
            .zip(weights)
            .map(|(u, w)| u.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    pub fn sum_at(&self, idx: &[usize]) -> f64 {
        idx.iter().enumerate().map(|(i, &k)| self.u[i][k]).sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["marginal", "index", "u"])?;
        for (i, u) in self.u.iter().enumerate() {
            for (k, v) in u.iter().enumerate() {
                out.write_record(&[i.to_string(), k.to_string(), v.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// `Σᵢ uᵢ[idxᵢ]` for every tuple in row-major order.
pub(crate) fn potential_sums(shape: &[usize], u: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0];
    for (i, &n) in shape.iter().enumerate() {
        acc = acc
            .iter()
            .flat_map(|&a| u[i][..n].iter().map(move |&b| a + b))
            .collect();
    }
    acc
}

/// Flat indices of the slice `idx[axis] = k`, in increasing order.
pub(crate) fn slice_indices(shape: &[usize], axis: usize, k: usize) -> impl Iterator<Item = usize> + Clone {
    let st = strides(shape);
    let inner = st[axis];
    let block = inner * shape[axis];
    let outer: usize = shape[..axis].iter().product();
    (0..outer).flat_map(move |o| {
        let base = o * block + k * inner;
        base..base + inner
    })
}

pub(crate) fn weights_of(measures: &[DiscreteMeasure]) -> Vec<Vec<f64>> {
    measures.iter().map(|m| m.weights.clone()).collect()
}

fn check_inputs(shape: &[usize], values: &[f64], weights: &[Vec<f64>]) -> Result<()> {
    if shape.len() < 2 {
        return Err(invalid("need at least two marginals"));
    }
    if weights.len() != shape.len() {
        return Err(invalid("one weight vector per marginal is required"));
    }
    for (w, &n) in weights.iter().zip(shape) {
        if w.len() != n {
            return Err(invalid("weight vector length does not match tensor shape"));
        }
    }
    if values.len() != shape.iter().product::<usize>() {
        return Err(invalid("cost values do not match tensor shape"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("cost values must be finite"));
    }
    Ok(())
}

/// Exact solve of the Kantorovich LP over a cost tensor.
pub fn solve_exact(
    tensor: &CostTensor,
    measures: &[DiscreteMeasure],
) -> Result<(TransportPlan, DualPotentials, SolveReport)> {
    solve_exact_raw(&tensor.shape, &tensor.values, &weights_of(measures))
}

/// Exact LP on an explicit `(shape, values)` cost table; also serves the
/// two-marginal problems in barycenter verification.
pub fn solve_exact_raw(
    shape: &[usize],
    values: &[f64],
    weights: &[Vec<f64>],
) -> Result<(TransportPlan, DualPotentials, SolveReport)> {
    check_inputs(shape, values, weights)?;
    if values.len() > EXACT_COLUMN_CAP {
        return Err(crate::Error::SizeCap {
            entries: values.len(),
            cap: EXACT_COLUMN_CAP,
        });
    }
    let lp = simplex::solve_transport_lp(shape, values, weights)?;
    let plan = TransportPlan {
        shape: shape.to_vec(),
        entries: lp
            .entries
            .iter()
            .map(|&(flat, mass)| (unflatten(shape, flat), mass))
            .collect(),
        source: PlanSource::ExactLp,
    };
    let potentials = DualPotentials::new(lp.potentials, shape, values);
    let primal_value = plan.cost(shape, values);
    let dual_value = potentials.objective(weights);
    let report = SolveReport {
        source: PlanSource::ExactLp,
        primal_value,
        dual_value,
        gap: primal_value - dual_value,
        iterations: lp.iterations,
        epsilon: None,
        marginal_residuals: plan.marginal_residuals(weights),
        tied_columns: Some(lp.tied_columns),
    };
    Ok((plan, potentials, report))
}

/// c-conjugate potential `i`: `uᵢ[k] = min_{idx: idxᵢ=k} (c[idx] - Σ_{j≠i} uⱼ[idxⱼ])`.
pub fn c_conjugate(tensor: &CostTensor, u: &DualPotentials, i: usize) -> DualPotentials {
    c_conjugate_raw(&tensor.shape, &tensor.values, u, i)
}

pub fn c_conjugate_raw(
    shape: &[usize],
    values: &[f64],
    u: &DualPotentials,
    i: usize,
) -> DualPotentials {
    let mut others = u.u.clone();
    others[i].iter_mut().for_each(|a| *a = 0.0);
    let sums = potential_sums(shape, &others);
    let slack: Vec<f64> = values.iter().zip(&sums).map(|(c, s)| c - s).collect();
    let new_i = par::map_range(shape[i], |k| {
        slice_indices(shape, i, k)
            .map(|f| slack[f])
            .fold(f64::INFINITY, f64::min)
    });
    let mut out = u.u.clone();
    out[i] = new_i;
    DualPotentials::new(out, shape, values)
}

/// Conjugates every potential in turn.
pub fn conjugate_sweep(shape: &[usize], values: &[f64], u: &DualPotentials) -> DualPotentials {
    (0..shape.len()).fold(u.clone(), |acc, i| c_conjugate_raw(shape, values, &acc, i))
}

/// Worst `|Σᵢ uᵢ - c|` over the plan support.
pub fn support_equality_check(plan: &TransportPlan, tensor: &CostTensor, u: &DualPotentials) -> f64 {
    support_equality_raw(plan, &tensor.shape, &tensor.values, u)
}

pub fn support_equality_raw(
    plan: &TransportPlan,
    shape: &[usize],
    values: &[f64],
    u: &DualPotentials,
) -> f64 {
    plan.entries
        .iter()
        .map(|(idx, _)| (u.sum_at(idx) - values[flatten(shape, idx)]).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn potential_sums_match_direct_sum() {
        let shape = [2, 3, 2];
        let u = vec![vec![1.0, 2.0], vec![10.0, 20.0, 30.0], vec![100.0, 200.0]];
        let s = potential_sums(&shape, &u);
        for (flat, v) in s.iter().enumerate() {
            let idx = unflatten(&shape, flat);
            assert_eq!(*v, u[0][idx[0]] + u[1][idx[1]] + u[2][idx[2]]);
        }
    }

    #[test]
    fn slices_cover_axis() {
        let shape = [3, 2, 4];
        for axis in 0..3 {
            for k in 0..shape[axis] {
                let got: Vec<usize> = slice_indices(&shape, axis, k).collect();
                let want: Vec<usize> = (0..24).filter(|&f| unflatten(&shape, f)[axis] == k).collect();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn two_by_two_assignment() {
        // ¼|x - y|² between uniform {0, 1} and {0.1, 0.9}: identity matching,
        // each pair costs 0.0025 and carries mass 1/2.
        let xs = [0.0, 1.0];
        let ys = [0.1, 0.9];
        let values: Vec<f64> = xs
            .iter()
            .flat_map(|x| ys.iter().map(move |y| 0.25 * (x - y) * (x - y)))
            .collect();
        let w = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let (plan, u, report) = solve_exact_raw(&[2, 2], &values, &w).unwrap();
        assert_eq!(plan.entries.len(), 2);
        assert_eq!(plan.entries[0].0, vec![0, 0]);
        assert_eq!(plan.entries[1].0, vec![1, 1]);
        assert_abs_diff_eq!(report.primal_value, 0.0025, epsilon = 1e-15);
        assert!(report.gap.abs() <= 1e-12);
        assert!(u.feasibility_residual <= 1e-12);
        assert!(support_equality_raw(&plan, &[2, 2], &values, &u) <= 1e-12);
    }

    #[test]
    fn dirac_lp() {
        let (plan, u, report) = solve_exact_raw(&[1, 1, 1], &[0.7], &[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(plan.entries, vec![(vec![0, 0, 0], 1.0)]);
        assert_abs_diff_eq!(report.primal_value, 0.7);
        assert_abs_diff_eq!(report.dual_value, 0.7, epsilon = 1e-15);
        let conj = conjugate_sweep(&[1, 1, 1], &[0.7], &u);
        assert_eq!(support_equality_raw(&plan, &[1, 1, 1], &[0.7], &conj), 0.0);
    }

    #[test]
    fn conjugation_from_zero_is_slice_minimum() {
        let shape = [2, 3];
        let values = vec![3.0, 1.0, 2.0, 0.5, 4.0, 6.0];
        let zero = DualPotentials::new(vec![vec![0.0; 2], vec![0.0; 3]], &shape, &values);
        let u = c_conjugate_raw(&shape, &values, &zero, 0);
        assert_eq!(u.u[0], vec![1.0, 0.5]);
        assert!(u.feasibility_residual <= 0.0);
        let again = c_conjugate_raw(&shape, &values, &u, 0);
        assert_eq!(again, u);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        assert!(solve_exact_raw(&[2, 2], &[1.0; 3], &[vec![0.5, 0.5], vec![0.5, 0.5]]).is_err());
        assert!(solve_exact_raw(&[2, 2], &[1.0; 4], &[vec![0.5, 0.5]]).is_err());
        assert!(solve_exact_raw(&[2], &[1.0; 2], &[vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn solution_json_layout() {
        let sol = Solution {
            plan: TransportPlan {
                shape: vec![2, 2],
                entries: vec![(vec![0, 1], 0.5), (vec![1, 0], 0.5)],
                source: PlanSource::ExactLp,
            },
            potentials: DualPotentials {
                u: vec![vec![0.0, 1.0], vec![0.5, 0.25]],
                feasibility_residual: 0.0,
            },
        };
        let text = serde_json::to_string(&sol).unwrap();
        assert!(text.contains(r#""entries":[[[0,1],0.5],[[1,0],0.5]]"#));
        assert!(text.contains(r#""u":[[0.0,1.0],[0.5,0.25]]"#));
        let back: Solution = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sol);
    }
}
