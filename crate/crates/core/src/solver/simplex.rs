//! Two-phase revised simplex with Bland's rule, specialised to the
//! multi-marginal transport polytope.
//!
//! Variables are the tensor entries in row-major order. Each marginal block
//! contributes one equality row per support point; the last row of every
//! block after the first is dropped, which removes exactly the `m - 1`
//! redundancies (every block sums to the same total), so bases have
//! `Σnᵢ - m + 1` columns. Constraint columns are never materialised: entry
//! `idx` has a one in row `(i, idxᵢ)` of every block.

use nalgebra::DMatrix;

use crate::cost::strides;
use crate::error::{Error, Result};

pub(crate) struct LpSolution {
    /// (flat index, mass) for basic entries with positive mass, sorted by index.
    pub entries: Vec<(usize, f64)>,
    pub potentials: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Nonbasic columns with zero reduced cost: alternative optimal vertices may exist.
    pub tied_columns: usize,
}

const REFACTOR_EVERY: usize = 64;
const PIVOT_TOL: f64 = 1e-11;

struct Layout {
    shape: Vec<usize>,
    strides: Vec<usize>,
    /// Row of (block, point), `None` for dropped rows.
    rows: Vec<Vec<Option<usize>>>,
    n_rows: usize,
    n_cols: usize,
}

impl Layout {
    fn new(shape: &[usize]) -> Self {
        let mut rows = Vec::with_capacity(shape.len());
        let mut r = 0;
        for (i, &n) in shape.iter().enumerate() {
            let block = (0..n)
                .map(|k| {
                    if i > 0 && k + 1 == n {
                        None
                    } else {
                        r += 1;
                        Some(r - 1)
                    }
                })
                .collect();
            rows.push(block);
        }
        Self {
            shape: shape.to_vec(),
            strides: strides(shape),
            rows,
            n_rows: r,
            n_cols: shape.iter().product(),
        }
    }

    /// Rows holding a one in column `j` (real or artificial).
    fn column_rows(&self, j: usize, out: &mut Vec<usize>) {
        out.clear();
        if j >= self.n_cols {
            out.push(j - self.n_cols);
            return;
        }
        for (i, (&n, &s)) in self.shape.iter().zip(&self.strides).enumerate() {
            if let Some(r) = self.rows[i][(j / s) % n] {
                out.push(r);
            }
        }
    }
}

struct Tableau<'a> {
    layout: &'a Layout,
    costs: &'a [f64],
    rhs: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots_since_refactor: usize,
    iterations: usize,
    scratch: Vec<usize>,
}

impl<'a> Tableau<'a> {
    fn m(&self) -> usize {
        self.layout.n_rows
    }

    fn cost(&self, j: usize, phase_one: bool) -> f64 {
        match (phase_one, j >= self.layout.n_cols) {
            (true, art) => f64::from(u8::from(art)),
            (false, true) => 0.0,
            (false, false) => self.costs[j],
        }
    }

    /// Simplex multipliers `c_Bᵀ B⁻¹`.
    fn duals(&self, phase_one: bool) -> Vec<f64> {
        let m = self.m();
        let mut y = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            let c = self.cost(j, phase_one);
            if c != 0.0 {
                let row = &self.binv[k * m..(k + 1) * m];
                y.iter_mut().zip(row).for_each(|(a, b)| *a += c * b);
            }
        }
        y
    }

    fn reduced_cost(&mut self, j: usize, y: &[f64], phase_one: bool) -> f64 {
        let mut rows = std::mem::take(&mut self.scratch);
        self.layout.column_rows(j, &mut rows);
        let d = self.cost(j, phase_one) - rows.iter().map(|&r| y[r]).sum::<f64>();
        self.scratch = rows;
        d
    }

    /// `B⁻¹ A_j`.
    fn direction(&mut self, j: usize) -> Vec<f64> {
        let m = self.m();
        let mut rows = std::mem::take(&mut self.scratch);
        self.layout.column_rows(j, &mut rows);
        let a = (0..m)
            .map(|k| rows.iter().map(|&r| self.binv[k * m + r]).sum())
            .collect();
        self.scratch = rows;
        a
    }

    fn pivot(&mut self, leave: usize, enter: usize, a: &[f64]) -> Result<()> {
        let m = self.m();
        let p = a[leave];
        for c in 0..m {
            self.binv[leave * m + c] /= p;
        }
        self.xb[leave] /= p;
        for k in 0..m {
            if k != leave && a[k] != 0.0 {
                let f = a[k];
                for c in 0..m {
                    self.binv[k * m + c] -= f * self.binv[leave * m + c];
                }
                self.xb[k] -= f * self.xb[leave];
            }
        }
        self.in_basis[self.basis[leave]] = false;
        self.in_basis[enter] = true;
        self.basis[leave] = enter;
        self.iterations += 1;
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    /// Recompute `B⁻¹` and `x_B` from scratch.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m();
        let mut b = DMatrix::<f64>::zeros(m, m);
        let mut rows = Vec::new();
        for (k, &j) in self.basis.iter().enumerate() {
            self.layout.column_rows(j, &mut rows);
            for &r in &rows {
                b[(r, k)] = 1.0;
            }
        }
        let inv = b
            .try_inverse()
            .ok_or_else(|| Error::Numerical("basis matrix became singular".into()))?;
        for k in 0..m {
            for c in 0..m {
                self.binv[k * m + c] = inv[(k, c)];
            }
        }
        self.xb = (0..m)
            .map(|k| (0..m).map(|c| self.binv[k * m + c] * self.rhs[c]).sum())
            .collect();
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// Runs simplex iterations to optimality for the given phase.
    fn optimize(&mut self, phase_one: bool, tol: f64, max_iter: usize) -> Result<()> {
        let n_real = self.layout.n_cols;
        loop {
            if self.iterations > max_iter {
                return Err(Error::Numerical(format!(
                    "simplex exceeded {max_iter} pivots; Bland's rule should not cycle"
                )));
            }
            let y = self.duals(phase_one);
            // Bland: lowest-index improving column. Artificials never re-enter.
            let mut enter = None;
            for j in 0..n_real {
                if !self.in_basis[j] && self.reduced_cost(j, &y, phase_one) < -tol {
                    enter = Some(j);
                    break;
                }
            }
            let Some(enter) = enter else {
                return Ok(());
            };
            let a = self.direction(enter);
            let mut leave: Option<(usize, f64)> = None;
            for k in 0..self.m() {
                if a[k] > PIVOT_TOL {
                    let t = self.xb[k].max(0.0) / a[k];
                    leave = match leave {
                        None => Some((k, t)),
                        Some((l, best)) => {
                            let closer = t < best - 1e-14 * best.max(1.0);
                            let tie = !closer && t <= best + 1e-14 * best.max(1.0);
                            if closer || (tie && self.basis[k] < self.basis[l]) {
                                Some((k, t))
                            } else {
                                Some((l, best))
                            }
                        }
                    };
                }
            }
            let Some((leave, _)) = leave else {
                return Err(Error::Numerical("transport LP reported unbounded".into()));
            };
            self.pivot(leave, enter, &a)?;
        }
    }
}

/// Solves `min Σ c·x` over couplings of the given marginals.
pub(crate) fn solve_transport_lp(
    shape: &[usize],
    costs: &[f64],
    marginals: &[Vec<f64>],
) -> Result<LpSolution> {
    let layout = Layout::new(shape);
    let m = layout.n_rows;
    let n = layout.n_cols;
    let mut rhs = vec![0.0; m];
    for (i, w) in marginals.iter().enumerate() {
        for (k, &wk) in w.iter().enumerate() {
            if let Some(r) = layout.rows[i][k] {
                rhs[r] = wk;
            }
        }
    }
    let scale = costs.iter().fold(1.0f64, |a, c| a.max(c.abs()));
    let tol = 1e-11 * scale;
    let max_iter = 50 * (n + m) + 10_000;

    let mut in_basis = vec![false; n + m];
    in_basis[n..].iter_mut().for_each(|b| *b = true);
    let mut binv = vec![0.0; m * m];
    (0..m).for_each(|k| binv[k * m + k] = 1.0);
    let mut t = Tableau {
        layout: &layout,
        costs,
        xb: rhs.clone(),
        rhs,
        basis: (n..n + m).collect(),
        in_basis,
        binv,
        pivots_since_refactor: 0,
        iterations: 0,
        scratch: Vec::new(),
    };

    t.optimize(true, 1e-11, max_iter)?;
    let infeasibility: f64 = t
        .basis
        .iter()
        .zip(&t.xb)
        .filter(|(&j, _)| j >= n)
        .map(|(_, x)| x.abs())
        .sum();
    if infeasibility > 1e-9 {
        return Err(Error::Numerical(format!(
            "marginals are inconsistent (phase-one residual {infeasibility:.3e})"
        )));
    }
    // Drive the remaining (zero-valued) artificials out of the basis.
    for k in 0..m {
        if t.basis[k] < n {
            continue;
        }
        let m_rows = t.m();
        let row: Vec<f64> = t.binv[k * m_rows..(k + 1) * m_rows].to_vec();
        let mut rows = Vec::new();
        let mut replacement = None;
        for j in 0..n {
            if t.in_basis[j] {
                continue;
            }
            layout.column_rows(j, &mut rows);
            let v: f64 = rows.iter().map(|&r| row[r]).sum();
            if v.abs() > 1e-9 {
                replacement = Some(j);
                break;
            }
        }
        let j = replacement
            .ok_or_else(|| Error::Numerical("constraint rows are linearly dependent".into()))?;
        let a = t.direction(j);
        t.pivot(k, j, &a)?;
    }

    t.optimize(false, tol, max_iter)?;
    t.refactor()?;

    if let Some(x) = t.xb.iter().find(|&&x| x < -1e-9) {
        return Err(Error::Numerical(format!("final basis is infeasible (x = {x:e})")));
    }
    let y = t.duals(false);
    let mut tied_columns = 0;
    for j in 0..n {
        if !t.in_basis[j] && t.reduced_cost(j, &y, false).abs() <= tol {
            tied_columns += 1;
        }
    }
    let potentials = layout
        .rows
        .iter()
        .map(|block| block.iter().map(|r| r.map_or(0.0, |r| y[r])).collect())
        .collect();
    let mut entries: Vec<(usize, f64)> = t
        .basis
        .iter()
        .zip(&t.xb)
        .filter(|(&j, &x)| j < n && x > 1e-15)
        .map(|(&j, &x)| (j, x))
        .collect();
    entries.sort_by_key(|e| e.0);
    Ok(LpSolution {
        entries,
        potentials,
        iterations: t.iterations,
        tied_columns,
    })
}
