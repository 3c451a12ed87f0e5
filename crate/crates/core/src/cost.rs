//! The barycenter cost `c(x₁,…,x_m) = inf_y Σᵢ fᵢ(d(xᵢ, y))`, dense cost
//! tensors over the supports of discrete marginals, and the envelope gradient
//! of the cost in its first argument.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::error::{invalid, Error, Result};
use crate::frechet::{self, CostFamily, CostFn, KarcherOptions, KarcherProblem};
use crate::manifold::{ManifoldPoint, ManifoldSpec, TangentVector};
use crate::measure::DiscreteMeasure;
use crate::{mix_seed, par};

/// Default cap on the number of tensor entries.
pub const DEFAULT_TENSOR_CAP: usize = 1_000_000;

const BINARY_MAGIC: &[u8; 8] = b"MMOTCT01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEval {
    pub value: f64,
    pub ybar: ManifoldPoint,
    pub unique: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TensorOptions {
    pub karcher: KarcherOptions,
    pub cap: usize,
}

impl Default for TensorOptions {
    fn default() -> Self {
        Self {
            karcher: KarcherOptions::default(),
            cap: DEFAULT_TENSOR_CAP,
        }
    }
}

/// Dense row-major table of cost values over all support tuples, with the
/// minimizing `y` cached per entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostTensor {
    pub spec: ManifoldSpec,
    pub family: CostFamily,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    /// Representative minimizer (lexicographically smallest when not unique).
    pub argmin_y: Vec<ManifoldPoint>,
    pub unique_flags: Vec<bool>,
}

/// Row-major strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Multi-index of a flat row-major offset.
pub fn unflatten(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for i in (0..shape.len()).rev() {
        idx[i] = flat % shape[i];
        flat /= shape[i];
    }
    idx
}

pub fn flatten(shape: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i)
}

/// Cost of one tuple and its minimizing point.
pub fn evaluate(
    spec: &ManifoldSpec,
    family: &CostFamily,
    tuple: &[ManifoldPoint],
    opts: &KarcherOptions,
) -> Result<CostEval> {
    let prob = KarcherProblem::new(spec.clone(), tuple.to_vec(), family.clone());
    let r = frechet::solve(&prob, opts)?;
    Ok(CostEval {
        value: r.value,
        unique: r.unique,
        ybar: r.minimizers.into_iter().next().expect("solve returns a minimizer"),
    })
}

pub fn build_tensor(
    spec: &ManifoldSpec,
    family: &CostFamily,
    measures: &[DiscreteMeasure],
    opts: &TensorOptions,
) -> Result<CostTensor> {
    if measures.len() < 2 {
        return Err(invalid("need at least two marginals"));
    }
    if family.len() != measures.len() {
        return Err(invalid(format!(
            "{} marginals but {} cost functions",
            measures.len(),
            family.len()
        )));
    }
    for mu in measures {
        if &mu.spec != spec {
            return Err(invalid("marginal lives on a different manifold"));
        }
        mu.validate()?;
    }
    let shape: Vec<usize> = measures.iter().map(DiscreteMeasure::len).collect();
    let entries = shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .unwrap_or(usize::MAX);
    if entries > opts.cap {
        return Err(Error::SizeCap {
            entries,
            cap: opts.cap,
        });
    }

    let evals = par::map_range(entries, |flat| {
        let idx = unflatten(&shape, flat);
        let tuple: Vec<ManifoldPoint> = idx
            .iter()
            .zip(measures)
            .map(|(&k, mu)| mu.points[k].clone())
            .collect();
        let opts_k = KarcherOptions {
            seed: mix_seed(opts.karcher.seed, flat as u64),
            ..opts.karcher.clone()
        };
        evaluate(spec, family, &tuple, &opts_k)
    });

    let mut values = Vec::with_capacity(entries);
    let mut argmin_y = Vec::with_capacity(entries);
    let mut unique_flags = Vec::with_capacity(entries);
    for e in evals {
        let e = e?;
        values.push(e.value);
        argmin_y.push(e.ybar);
        unique_flags.push(e.unique);
    }
    Ok(CostTensor {
        spec: spec.clone(),
        family: family.clone(),
        shape,
        values,
        argmin_y,
        unique_flags,
    })
}

/// Envelope gradient `∇_{x₁} c = ∇_{x₁} f₁(d(x₁, ȳ))`.
pub fn grad_x1(
    spec: &ManifoldSpec,
    family: &CostFamily,
    tuple: &[ManifoldPoint],
    eval: &CostEval,
) -> Result<TangentVector> {
    if !eval.unique {
        return Err(Error::NonUnique);
    }
    let x1 = &tuple[0];
    let l = spec.log_map(x1, &eval.ybar)?;
    let d = l.norm();
    if d == 0.0 {
        return Ok(TangentVector::zero(x1));
    }
    Ok(l.scaled(-family.get(0).derivative(d) / d))
}

/// Recover the minimizing point from `x₁` and `∇_{x₁} c`: with
/// `|∇| = f₁'(d)` the minimizer lies at distance `f₁'⁻¹(|∇|)` against the
/// gradient. For `f₁ = t²/2` this is `exp_{x₁}(-∇_{x₁} c)`.
pub fn reconstruct_ybar(
    spec: &ManifoldSpec,
    f1: CostFn,
    x1: &ManifoldPoint,
    grad: &TangentVector,
) -> ManifoldPoint {
    let g = grad.norm();
    if g == 0.0 {
        return x1.clone();
    }
    let d = f1.inverse_derivative(g);
    spec.exp_map(x1, &grad.scaled(-d / g))
}

impl CostTensor {
    pub fn m(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        flatten(&self.shape, idx)
    }

    pub fn index(&self, flat: usize) -> Vec<usize> {
        unflatten(&self.shape, flat)
    }

    pub fn value(&self, idx: &[usize]) -> f64 {
        self.values[self.flat(idx)]
    }

    pub fn validate(&self) -> Result<()> {
        let n: usize = self.shape.iter().product();
        if self.values.len() != n || self.argmin_y.len() != n || self.unique_flags.len() != n {
            return Err(invalid("cost tensor arrays do not match its shape"));
        }
        if self.family.len() != self.shape.len() {
            return Err(invalid("cost tensor family does not match its order"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("cost tensor has non-finite values"));
        }
        Ok(())
    }

    /// Tensor with axes `a` and `b` exchanged.
    pub fn transposed(&self, a: usize, b: usize) -> Self {
        let mut shape = self.shape.clone();
        shape.swap(a, b);
        let mut family = self.family.clone();
        family.0.swap(a, b);
        let n = self.len();
        let mut values = vec![0.0; n];
        let mut argmin_y = self.argmin_y.clone();
        let mut unique_flags = vec![false; n];
        for flat in 0..n {
            let mut idx = self.index(flat);
            idx.swap(a, b);
            let t = flatten(&shape, &idx);
            values[t] = self.values[flat];
            argmin_y[t] = self.argmin_y[flat].clone();
            unique_flags[t] = self.unique_flags[flat];
        }
        Self {
            spec: self.spec.clone(),
            family,
            shape,
            values,
            argmin_y,
            unique_flags,
        }
    }

    /// Flat binary dump: 8-byte magic `MMOTCT01`, the order `m` as a
    /// little-endian u64, `m` little-endian u64 extents, then the values as
    /// little-endian f64 in row-major order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.m() as u64).to_le_bytes())?;
        for &n in &self.shape {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a binary dump back as `(shape, values)`.
    pub fn read_binary<R: Read>(mut r: R) -> Result<(Vec<usize>, Vec<f64>)> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        if &word != BINARY_MAGIC {
            return Err(invalid("not a cost tensor dump"));
        }
        let mut read_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let m = read_u64(&mut r)? as usize;
        let shape = (0..m)
            .map(|_| read_u64(&mut r).map(|n| n as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut word)?;
            values.push(f64::from_le_bytes(word));
        }
        Ok((shape, values))
    }

    /// CSV with one row per entry: `i1,…,im,value,unique`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.m()).map(|i| format!("i{i}")).collect();
        header.push("value".into());
        header.push("unique".into());
        out.write_record(&header)?;
        for flat in 0..self.len() {
            let mut row: Vec<String> = self.index(flat).iter().map(usize::to_string).collect();
            row.push(self.values[flat].to_string());
            row.push(self.unique_flags[flat].to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}
