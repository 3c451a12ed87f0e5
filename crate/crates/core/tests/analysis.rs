mod common;

use common::{solve_instance, tensor_for};
use mmot::analysis::{
    check_monotonicity, concavity_proxy, extract_monge, pushforward_barycenter, uniqueness_rate,
    verify_barycenter_optimality, verify_composition, verify_two_marginal_optimality, DEFAULT_MERGE_TOL,
};
use mmot::cost::evaluate;
use mmot::frechet::{CostFamily, KarcherOptions};
use mmot::manifold::{ManifoldPoint, ManifoldSpec};
use mmot::measure::DiscreteMeasure;
use mmot::solver::solve_exact;

fn pt(c: &[f64]) -> ManifoldPoint {
    ManifoldPoint::new(c.to_vec())
}

#[test]
fn dirac_case() {
    let s2 = ManifoldSpec::sphere(2);
    let xs: Vec<ManifoldPoint> = (0..3).map(|k| s2.random_point(10 + k)).collect();
    let ms: Vec<DiscreteMeasure> = xs.iter().map(|x| DiscreteMeasure::dirac(s2.clone(), x.clone()).unwrap()).collect();
    let t = tensor_for(&s2, &CostFamily::half_square(3), &ms, 0);
    let (plan, _, report) = solve_exact(&t, &ms).unwrap();
    let table = extract_monge(&plan, &ms).unwrap();
    assert_eq!(table.graph_fraction, 1.0);
    assert_eq!(table.maps, vec![vec![Some(0)]; 3]);

    let bc = pushforward_barycenter(&plan, &t, &ms, DEFAULT_MERGE_TOL).unwrap();
    let mean = evaluate(&s2, &CostFamily::half_square(3), &xs, &KarcherOptions::default()).unwrap();
    assert_eq!(bc.nu.len(), 1);
    assert!(s2.distance(&bc.nu.points[0], &mean.ybar) < 1e-8);
    let r = verify_barycenter_optimality(&bc, &ms, report.primal_value, 5, 1e-2, 0).unwrap();
    assert!(r.pass);
    assert!((r.b_nu - t.values[0]).abs() < 1e-12);
    let two = verify_two_marginal_optimality(&bc, &ms).unwrap();
    assert!(two.pass && two.worst_residual == 0.0);
    assert!(verify_composition(&table, &bc).pass);
}

#[test]
fn two_point_line_example() {
    let r1 = ManifoldSpec::euclidean(1);
    let mu = DiscreteMeasure::uniform(r1.clone(), vec![pt(&[0.0]), pt(&[1.0])]).unwrap();
    let ms = [mu.clone(), mu];
    let t = tensor_for(&r1, &CostFamily::half_square(2), &ms, 0);
    let (plan, _, _) = solve_exact(&t, &ms).unwrap();
    assert_eq!(plan.entries, vec![(vec![0, 0], 0.5), (vec![1, 1], 0.5)]);
    let bc = pushforward_barycenter(&plan, &t, &ms, DEFAULT_MERGE_TOL).unwrap();
    assert_eq!(bc.nu.weights, vec![0.5, 0.5]);
    assert!(bc.nu.points[0].coords[0].abs() < 1e-12);
    assert!((bc.nu.points[1].coords[0] - 1.0).abs() < 1e-12);
}

#[test]
fn generic_two_marginal_plans_are_permutations() {
    for seed in 0..10 {
        let s = solve_instance(&ManifoldSpec::sphere(2), &CostFamily::half_square(2), &[2, 2], 300 + seed, true);
        assert_eq!(extract_monge(&s.plan, &s.measures).unwrap().graph_fraction, 1.0);
    }
}

#[test]
fn mass_conservation_and_barycenter_identity() {
    for seed in 0..50 {
        let spec = [ManifoldSpec::sphere(2), ManifoldSpec::torus(2), ManifoldSpec::euclidean(2)][seed as usize % 3].clone();
        let s = solve_instance(&spec, &CostFamily::half_square(3), &[3, 4, 3], 400 + seed, seed % 2 == 0);
        let bc = pushforward_barycenter(&s.plan, &s.tensor, &s.measures, DEFAULT_MERGE_TOL).unwrap();
        assert!((bc.nu.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (i, gamma) in bc.couplings.iter().enumerate() {
            let residual: f64 = gamma.marginal(0).iter().zip(&s.measures[i].weights).map(|(a, b)| (a - b).abs()).sum();
            assert!(residual < 1e-9);
            let residual: f64 = gamma.marginal(1).iter().zip(&bc.nu.weights).map(|(a, b)| (a - b).abs()).sum();
            assert!(residual < 1e-9);
        }
        // Pushed couplings cost exactly the primal value.
        assert!((bc.objective() - s.report.primal_value).abs() < 1e-9);
        if seed < 10 {
            let r = verify_barycenter_optimality(&bc, &s.measures, s.report.primal_value, 10, 1e-2, seed).unwrap();
            assert!(r.pass, "seed {seed}: {r:?}");
            assert!(verify_two_marginal_optimality(&bc, &s.measures).unwrap().pass);
        }
    }
}

#[test]
fn uniqueness_and_injectivity_on_generic_instances() {
    let (mut entries, mut unique, mut exceptions) = (0, 0, 0);
    for seed in 0..50 {
        let s = solve_instance(&ManifoldSpec::sphere(2), &CostFamily::half_square(3), &[4, 4, 4], 500 + seed, seed % 2 == 0);
        let r = uniqueness_rate(&s.plan, &s.tensor);
        entries += r.support_entries;
        unique += r.unique_entries;
        let bc = pushforward_barycenter(&s.plan, &s.tensor, &s.measures, DEFAULT_MERGE_TOL).unwrap();
        exceptions += bc.injectivity_exceptions;
    }
    assert!(unique as f64 / entries as f64 >= 0.99);
    assert_eq!(exceptions, 0);
}

#[test]
fn concavity_proxy_holds_for_conjugated_duals() {
    for seed in 0..10 {
        let s = solve_instance(&ManifoldSpec::sphere(2), &CostFamily::half_square(3), &[3, 3, 4], 600 + seed, false);
        let bc = pushforward_barycenter(&s.plan, &s.tensor, &s.measures, DEFAULT_MERGE_TOL).unwrap();
        let r = concavity_proxy(&s.potentials, &s.measures, &bc);
        assert!(r.pass && r.pairs_checked > 0);
    }
}

#[test]
fn composition_on_generic_instances() {
    let mut checked = 0;
    for seed in 0..10 {
        let s = solve_instance(&ManifoldSpec::sphere(2), &CostFamily::half_square(3), &[6, 6, 6], 700 + seed, true);
        let table = extract_monge(&s.plan, &s.measures).unwrap();
        if table.graph_fraction < 1.0 {
            continue;
        }
        let bc = pushforward_barycenter(&s.plan, &s.tensor, &s.measures, DEFAULT_MERGE_TOL).unwrap();
        let r = verify_composition(&table, &bc);
        assert!(r.pass && r.pass_fraction == 1.0);
        assert!((r.well_posed_mass - 1.0).abs() < 1e-12);

        // Point F₂ of atom 0 at a different partner: the diagram no longer commutes.
        let mut broken = table.clone();
        let f = broken.maps[1][0].unwrap();
        broken.maps[1][0] = Some((f + 1) % 6);
        let r = verify_composition(&broken, &bc);
        assert!(!r.pass && r.failures == vec![0]);
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn exact_plans_are_c_monotone() {
    for seed in 0..20 {
        let s = solve_instance(&ManifoldSpec::torus(2), &CostFamily::half_square(3), &[5, 4, 5], 800 + seed, seed % 2 == 0);
        let r = check_monotonicity(&s.plan, &s.tensor.shape, &s.tensor.values);
        assert!(r.pass, "seed {seed}: {r:?}");
        assert!(r.swaps_checked > 0);
    }
}
