//! Structure checks on solved plans: Monge (graph) structure, the barycenter
//! `ν = ȳ#γ` with its induced two-marginal couplings, the composition
//! `Fᵢ = Gᵢ ∘ G₁⁻¹`, and optimality probes for `ν`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{flatten, CostTensor};
use crate::error::{invalid, Result};
use crate::frechet::CostFamily;
use crate::manifold::{ManifoldPoint, ManifoldSpec};
use crate::measure::DiscreteMeasure;
use crate::mix_seed;
use crate::solver::{solve_exact_raw, DualPotentials, PlanSource, TransportPlan};

/// Default radius below which two pushed points are merged into one atom of `ν`.
pub const DEFAULT_MERGE_TOL: f64 = 1e-6;
/// Plan entries at or below this mass are ignored when counting partners.
pub const MASS_TOL: f64 = 1e-12;
pub const BARYCENTER_TOL: f64 = 1e-7;
pub const MONOTONICITY_TOL: f64 = 1e-8;
pub const CONCAVITY_TOL: f64 = 1e-9;
pub const UNIQUENESS_THRESHOLD: f64 = 0.99;

/// Support of the plan above one first-marginal atom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MongeAtom {
    pub index: usize,
    pub mass: f64,
    /// Full index tuples with their masses.
    pub partners: Vec<(Vec<usize>, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MongeMapTable {
    pub atoms: Vec<MongeAtom>,
    /// μ₁-mass of atoms with exactly one partner tuple.
    pub graph_fraction: f64,
    /// `maps[i][k] = Fᵢ(k)` where atom `k` has a single partner; `maps[0]` is the identity.
    pub maps: Vec<Vec<Option<usize>>>,
}

impl MongeMapTable {
    pub fn is_graph(&self) -> bool {
        self.maps[0].iter().all(Option::is_some)
    }
}

pub fn extract_monge(plan: &TransportPlan, measures: &[DiscreteMeasure]) -> Result<MongeMapTable> {
    if measures.len() != plan.m() || measures[0].len() != plan.shape[0] {
        return Err(invalid("plan shape does not match the marginals"));
    }
    let n1 = plan.shape[0];
    let mut atoms: Vec<MongeAtom> = (0..n1)
        .map(|index| MongeAtom {
            index,
            mass: 0.0,
            partners: Vec::new(),
        })
        .collect();
    for (idx, mass) in &plan.entries {
        let a = &mut atoms[idx[0]];
        a.mass += mass;
        if *mass > MASS_TOL {
            a.partners.push((idx.clone(), *mass));
        }
    }
    let mut maps = vec![vec![None; n1]; plan.m()];
    // Summing in the same order as the total makes a full graph exactly 1.
    let (mut graph_mass, mut total) = (0.0, 0.0);
    for a in &atoms {
        total += measures[0].weights[a.index];
        if let [(idx, _)] = a.partners.as_slice() {
            graph_mass += measures[0].weights[a.index];
            for (i, &k) in idx.iter().enumerate() {
                maps[i][a.index] = Some(k);
            }
        }
    }
    Ok(MongeMapTable {
        atoms,
        graph_fraction: graph_mass / total,
        maps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarycenterResult {
    pub nu: DiscreteMeasure,
    pub family: CostFamily,
    /// Atom of `ν` receiving each plan entry, in plan order.
    pub entry_atoms: Vec<usize>,
    /// `γᵢ = (πᵢ, ȳ)#γ`, shape `(nᵢ, |ν|)`.
    pub couplings: Vec<TransportPlan>,
    /// Cost of `γᵢ` under `fᵢ(d)`.
    pub coupling_costs: Vec<f64>,
    pub merge_tol: f64,
    /// Plan entries whose tuple has a non-unique minimizer.
    pub nonunique_entries: usize,
    pub nonunique_mass: f64,
    /// Plan entries whose `ȳ` fell within `merge_tol` of an earlier entry's.
    pub injectivity_exceptions: usize,
}

impl BarycenterResult {
    pub fn objective(&self) -> f64 {
        self.coupling_costs.iter().sum()
    }
}

/// `fᵢ(d(xᵢₖ, yⱼ))` as an `(nᵢ, |ys|)` row-major table.
fn pair_costs(spec: &ManifoldSpec, family: &CostFamily, i: usize, xs: &[ManifoldPoint], ys: &[ManifoldPoint]) -> Vec<f64> {
    let f = family.get(i);
    xs.iter()
        .flat_map(|x| ys.iter().map(move |y| f.value(spec.distance(x, y))))
        .collect()
}

/// Pushes the plan through the cached minimizers.
pub fn pushforward_barycenter(
    plan: &TransportPlan,
    tensor: &CostTensor,
    measures: &[DiscreteMeasure],
    merge_tol: f64,
) -> Result<BarycenterResult> {
    if plan.shape != tensor.shape || measures.len() != plan.m() {
        return Err(invalid("plan, tensor and marginals disagree in shape"));
    }
    if !(merge_tol >= 0.0) {
        return Err(invalid("merge_tol must be nonnegative"));
    }
    let spec = &tensor.spec;
    let mut points: Vec<ManifoldPoint> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut entry_atoms = Vec::with_capacity(plan.entries.len());
    let (mut nonunique_entries, mut nonunique_mass, mut injectivity_exceptions) = (0, 0.0, 0);
    for (idx, mass) in &plan.entries {
        let flat = flatten(&tensor.shape, idx);
        if !tensor.unique_flags[flat] {
            nonunique_entries += 1;
            nonunique_mass += mass;
        }
        let y = &tensor.argmin_y[flat];
        let atom = match points.iter().position(|p| spec.distance(p, y) <= merge_tol) {
            Some(j) => {
                injectivity_exceptions += 1;
                weights[j] += mass;
                j
            }
            None => {
                points.push(y.clone());
                weights.push(*mass);
                points.len() - 1
            }
        };
        entry_atoms.push(atom);
    }
    let nu = DiscreteMeasure {
        spec: spec.clone(),
        points,
        weights,
    };
    let mut couplings = Vec::with_capacity(plan.m());
    let mut coupling_costs = Vec::with_capacity(plan.m());
    for (i, mu) in measures.iter().enumerate() {
        let shape = vec![mu.len(), nu.len()];
        let mut dense = vec![0.0; mu.len() * nu.len()];
        for ((idx, mass), &j) in plan.entries.iter().zip(&entry_atoms) {
            dense[idx[i] * nu.len() + j] += mass;
        }
        let gamma = TransportPlan {
            entries: dense
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .map(|(f, &v)| (vec![f / nu.len(), f % nu.len()], v))
                .collect(),
            shape,
            source: PlanSource::Pushforward,
        };
        let costs = pair_costs(spec, &tensor.family, i, &mu.points, &nu.points);
        coupling_costs.push(gamma.cost(&gamma.shape, &costs));
        couplings.push(gamma);
    }
    Ok(BarycenterResult {
        nu,
        family: tensor.family.clone(),
        entry_atoms,
        couplings,
        coupling_costs,
        merge_tol,
        nonunique_entries,
        nonunique_mass,
        injectivity_exceptions,
    })
}

/// `Σᵢ Wᵢ(μᵢ, ν)` with each term an exact two-marginal solve under `fᵢ(d)`.
pub fn barycenter_functional(
    measures: &[DiscreteMeasure],
    family: &CostFamily,
    nu_points: &[ManifoldPoint],
    nu_weights: &[f64],
) -> Result<Vec<f64>> {
    measures
        .iter()
        .enumerate()
        .map(|(i, mu)| {
            let costs = pair_costs(&mu.spec, family, i, &mu.points, nu_points);
            let (_, _, report) = solve_exact_raw(
                &[mu.len(), nu_points.len()],
                &costs,
                &[mu.weights.clone(), nu_weights.to_vec()],
            )?;
            Ok(report.primal_value)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarycenterReport {
    /// `B(ν)` from independent two-marginal solves.
    pub b_nu: f64,
    pub primal_value: f64,
    pub identity_residual: f64,
    pub jitter_values: Vec<f64>,
    /// `max(B(ν) - B(ν'))` over jittered candidates; positive means a candidate did better.
    pub worst_jitter_improvement: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks `B(ν)` against the multi-marginal primal value and against
/// candidates whose support points are moved by `jitter_scale`.
pub fn verify_barycenter_optimality(
    result: &BarycenterResult,
    measures: &[DiscreteMeasure],
    primal_value: f64,
    jitter_count: usize,
    jitter_scale: f64,
    seed: u64,
) -> Result<BarycenterReport> {
    let spec = &result.nu.spec;
    let b_nu: f64 = barycenter_functional(measures, &result.family, &result.nu.points, &result.nu.weights)?
        .iter()
        .sum();
    let mut jitter_values = Vec::with_capacity(jitter_count);
    for probe in 0..jitter_count {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, probe as u64));
        let moved: Vec<ManifoldPoint> = result
            .nu
            .points
            .iter()
            .map(|y| {
                let v = spec.random_tangent(y, jitter_scale, &mut rng);
                spec.exp_map(y, &v)
            })
            .collect();
        let b: f64 = barycenter_functional(measures, &result.family, &moved, &result.nu.weights)?
            .iter()
            .sum();
        jitter_values.push(b);
    }
    let identity_residual = (b_nu - primal_value).abs();
    let worst_jitter_improvement = jitter_values
        .iter()
        .map(|b| b_nu - b)
        .fold(f64::NEG_INFINITY, f64::max);
    let tolerance = BARYCENTER_TOL;
    Ok(BarycenterReport {
        b_nu,
        primal_value,
        identity_residual,
        pass: identity_residual <= tolerance && !(worst_jitter_improvement > tolerance),
        jitter_values,
        worst_jitter_improvement,
        tolerance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoMarginalReport {
    /// Cost of each pushed coupling `γᵢ`.
    pub coupling_costs: Vec<f64>,
    /// Independently solved optimum between `μᵢ` and `ν`.
    pub optimal_costs: Vec<f64>,
    pub worst_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Each `γᵢ` must be an optimal coupling of `(μᵢ, ν)`.
pub fn verify_two_marginal_optimality(
    result: &BarycenterResult,
    measures: &[DiscreteMeasure],
) -> Result<TwoMarginalReport> {
    if result.couplings.len() != measures.len() {
        return Err(invalid("one coupling per marginal is required"));
    }
    let optimal_costs = barycenter_functional(measures, &result.family, &result.nu.points, &result.nu.weights)?;
    let coupling_costs: Vec<f64> = measures
        .iter()
        .enumerate()
        .map(|(i, mu)| {
            let costs = pair_costs(&mu.spec, &result.family, i, &mu.points, &result.nu.points);
            let gamma = &result.couplings[i];
            gamma.cost(&gamma.shape, &costs)
        })
        .collect();
    let worst_residual = coupling_costs
        .iter()
        .zip(&optimal_costs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(TwoMarginalReport {
        pass: worst_residual <= BARYCENTER_TOL,
        coupling_costs,
        optimal_costs,
        worst_residual,
        tolerance: BARYCENTER_TOL,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    /// μ₁-mass of atoms with a single partner tuple and a single `ν` partner in `γ₁`.
    pub well_posed_mass: f64,
    pub passing_mass: f64,
    pub pass_fraction: f64,
    /// First-marginal atoms where the diagram fails to commute.
    pub failures: Vec<usize>,
    pub pass: bool,
}

/// Atoms of `ν` coupled to row `k` of a two-marginal plan.
fn row_partners(gamma: &TransportPlan, k: usize) -> Vec<usize> {
    gamma
        .entries
        .iter()
        .filter(|(idx, mass)| idx[0] == k && *mass > MASS_TOL)
        .map(|(idx, _)| idx[1])
        .collect()
}

/// Points of marginal `i` coupled to atom `j` of `ν`.
fn column_partners(gamma: &TransportPlan, j: usize) -> Vec<usize> {
    gamma
        .entries
        .iter()
        .filter(|(idx, mass)| idx[1] == j && *mass > MASS_TOL)
        .map(|(idx, _)| idx[0])
        .collect()
}

/// For each atom `x₁` with `Fᵢ(x₁)` defined and `y = G₁⁻¹(x₁)` unique, checks
/// that `γᵢ` sends `y` to `Fᵢ(x₁)` and nowhere else.
pub fn verify_composition(table: &MongeMapTable, result: &BarycenterResult) -> CompositionReport {
    let mut well_posed_mass = 0.0;
    let mut passing_mass = 0.0;
    let mut failures = Vec::new();
    for atom in &table.atoms {
        if table.maps[0][atom.index].is_none() {
            continue;
        }
        let [y] = row_partners(&result.couplings[0], atom.index)[..] else {
            continue;
        };
        well_posed_mass += atom.mass;
        let commutes = (1..table.maps.len()).all(|i| {
            table.maps[i][atom.index].is_some_and(|fi| column_partners(&result.couplings[i], y) == [fi])
        });
        if commutes {
            passing_mass += atom.mass;
        } else {
            failures.push(atom.index);
        }
    }
    let pass_fraction = if well_posed_mass > 0.0 {
        passing_mass / well_posed_mass
    } else {
        1.0
    };
    CompositionReport {
        well_posed_mass,
        passing_mass,
        pass_fraction,
        pass: failures.is_empty(),
        failures,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub support_size: usize,
    pub swaps_checked: usize,
    /// Largest `c(x) + c(x̄) - c(x') - c(x̄')` over swaps; positive means a swap improves.
    pub worst_violation: f64,
    /// One worst offending pair of support tuples and the swapped coordinate.
    pub worst_swap: Option<(Vec<usize>, Vec<usize>, usize)>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Exchanging one coordinate between two support tuples never lowers the cost.
pub fn check_monotonicity(plan: &TransportPlan, shape: &[usize], values: &[f64]) -> MonotonicityReport {
    let support: Vec<&Vec<usize>> = plan
        .entries
        .iter()
        .filter(|e| e.1 > MASS_TOL)
        .map(|e| &e.0)
        .collect();
    let c = |idx: &[usize]| values[flatten(shape, idx)];
    let mut swaps_checked = 0;
    let mut worst_violation = f64::NEG_INFINITY;
    let mut worst_swap = None;
    for (a, x) in support.iter().enumerate() {
        for y in &support[a + 1..] {
            for j in 0..shape.len() {
                if x[j] == y[j] {
                    continue;
                }
                let (mut xs, mut ys) = ((*x).clone(), (*y).clone());
                std::mem::swap(&mut xs[j], &mut ys[j]);
                let v = c(x) + c(y) - c(&xs) - c(&ys);
                swaps_checked += 1;
                if v > worst_violation {
                    worst_violation = v;
                    worst_swap = Some(((*x).clone(), (*y).clone(), j));
                }
            }
        }
    }
    if swaps_checked == 0 {
        worst_violation = 0.0;
    }
    MonotonicityReport {
        support_size: support.len(),
        swaps_checked,
        worst_violation,
        worst_swap,
        tolerance: MONOTONICITY_TOL,
        pass: worst_violation <= MONOTONICITY_TOL,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub support_entries: usize,
    pub unique_entries: usize,
    pub rate: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Share of support tuples whose minimizing `ȳ` is unique.
pub fn uniqueness_rate(plan: &TransportPlan, tensor: &CostTensor) -> UniquenessReport {
    let support_entries = plan.entries.len();
    let unique_entries = plan
        .entries
        .iter()
        .filter(|(idx, _)| tensor.unique_flags[flatten(&tensor.shape, idx)])
        .count();
    let rate = if support_entries == 0 {
        1.0
    } else {
        unique_entries as f64 / support_entries as f64
    };
    UniquenessReport {
        support_entries,
        unique_entries,
        rate,
        threshold: UNIQUENESS_THRESHOLD,
        pass: rate >= UNIQUENESS_THRESHOLD,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub pairs_checked: usize,
    /// Largest `uᵢ(x) + uᵢᶜ(y) - fᵢ(d(x, y))`.
    pub worst_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Concavity proxy for the duals: with `uᵢᶜ(y) = min_x fᵢ(d(x, y)) - uᵢ(x)`
/// over the support of `μᵢ`, checks `uᵢ(x) + uᵢᶜ(y) ≤ fᵢ(d(x, y))` for all
/// support points `x` of `μᵢ` and atoms `y` of `ν`.
pub fn concavity_proxy(
    potentials: &DualPotentials,
    measures: &[DiscreteMeasure],
    result: &BarycenterResult,
) -> ConcavityReport {
    let mut worst_violation = f64::NEG_INFINITY;
    let mut pairs_checked = 0;
    for (i, mu) in measures.iter().enumerate() {
        let f = result.family.get(i);
        let u = &potentials.u[i];
        for y in &result.nu.points {
            let cost: Vec<f64> = mu.points.iter().map(|x| f.value(mu.spec.distance(x, y))).collect();
            let uc = cost
                .iter()
                .zip(u)
                .map(|(c, a)| c - a)
                .fold(f64::INFINITY, f64::min);
            for (c, a) in cost.iter().zip(u) {
                worst_violation = worst_violation.max(a + uc - c);
                pairs_checked += 1;
            }
        }
    }
    if pairs_checked == 0 {
        worst_violation = 0.0;
    }
    ConcavityReport {
        pairs_checked,
        worst_violation,
        tolerance: CONCAVITY_TOL,
        pass: worst_violation <= CONCAVITY_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{build_tensor, TensorOptions};
    use crate::solver::solve_exact;

    fn line(xs: &[f64]) -> DiscreteMeasure {
        let spec = ManifoldSpec::euclidean(1);
        DiscreteMeasure::uniform(spec, xs.iter().map(|&x| ManifoldPoint::new(vec![x])).collect()).unwrap()
    }

    fn solved(measures: &[DiscreteMeasure]) -> (CostTensor, TransportPlan, f64) {
        let family = CostFamily::half_square(measures.len());
        let tensor = build_tensor(&measures[0].spec, &family, measures, &TensorOptions::default()).unwrap();
        let (plan, _, report) = solve_exact(&tensor, measures).unwrap();
        (tensor, plan, report.primal_value)
    }

    #[test]
    fn identical_marginals_push_to_themselves() {
        let measures = [line(&[0.0, 1.0]), line(&[0.0, 1.0])];
        let (tensor, plan, primal) = solved(&measures);
        assert!(primal.abs() < 1e-20);
        let table = extract_monge(&plan, &measures).unwrap();
        assert_eq!(table.graph_fraction, 1.0);
        assert_eq!(table.maps[1], vec![Some(0), Some(1)]);
        let bc = pushforward_barycenter(&plan, &tensor, &measures, DEFAULT_MERGE_TOL).unwrap();
        assert_eq!(bc.nu.len(), 2);
        for (p, x) in bc.nu.points.iter().zip([0.0, 1.0]) {
            assert!((p.coords[0] - x).abs() < 1e-12);
        }
        assert_eq!(bc.nu.weights, vec![0.5, 0.5]);
        assert!(verify_composition(&table, &bc).pass);
    }

    #[test]
    fn product_plan_has_no_graph() {
        let measures = [line(&[0.0, 1.0]), line(&[0.2, 0.7])];
        let plan = TransportPlan {
            shape: vec![2, 2],
            entries: vec![
                (vec![0, 0], 0.25),
                (vec![0, 1], 0.25),
                (vec![1, 0], 0.25),
                (vec![1, 1], 0.25),
            ],
            source: PlanSource::ExactLp,
        };
        let table = extract_monge(&plan, &measures).unwrap();
        assert_eq!(table.graph_fraction, 0.0);
        assert!(!table.is_graph());
    }

    #[test]
    fn corrupted_coupling_is_detected() {
        let measures = [line(&[0.0, 1.0]), line(&[0.1, 0.9])];
        let (tensor, plan, primal) = solved(&measures);
        let mut bc = pushforward_barycenter(&plan, &tensor, &measures, DEFAULT_MERGE_TOL).unwrap();
        assert!(verify_two_marginal_optimality(&bc, &measures).unwrap().pass);
        assert!(verify_barycenter_optimality(&bc, &measures, primal, 3, 1e-3, 0).unwrap().pass);
        // Send each point of μ₂ to the far atom of ν.
        for (idx, _) in &mut bc.couplings[1].entries {
            idx[1] = 1 - idx[1];
        }
        assert!(!verify_two_marginal_optimality(&bc, &measures).unwrap().pass);
        let table = extract_monge(&plan, &measures).unwrap();
        assert!(!verify_composition(&table, &bc).pass);
    }

    #[test]
    fn swap_detector() {
        // Anti-monotone matching on the line is not c-monotone.
        let measures = [line(&[0.0, 1.0]), line(&[0.1, 0.9])];
        let (tensor, plan, _) = solved(&measures);
        assert!(check_monotonicity(&plan, &tensor.shape, &tensor.values).pass);
        let bad = TransportPlan {
            entries: vec![(vec![0, 1], 0.5), (vec![1, 0], 0.5)],
            ..plan
        };
        let r = check_monotonicity(&bad, &tensor.shape, &tensor.values);
        assert!(!r.pass);
        assert_eq!(r.swaps_checked, 2);
    }
}
