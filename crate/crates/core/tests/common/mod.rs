#![allow(dead_code)]

use mmot::cost::{build_tensor, CostTensor, TensorOptions};
use mmot::frechet::{CostFamily, KarcherOptions};
use mmot::manifold::ManifoldSpec;
use mmot::measure::DiscreteMeasure;
use mmot::mix_seed;
use mmot::solver::{solve_exact, DualPotentials, SolveReport, TransportPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_measure(spec: &ManifoldSpec, n: usize, seed: u64) -> DiscreteMeasure {
    let points = (0..n).map(|k| spec.random_point(mix_seed(seed, k as u64))).collect();
    DiscreteMeasure::uniform(spec.clone(), points).unwrap()
}

pub fn random_weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Seeded marginals of the given sizes, uniform or with random weights.
pub fn random_measures(spec: &ManifoldSpec, sizes: &[usize], seed: u64, uniform: bool) -> Vec<DiscreteMeasure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mu = random_measure(spec, n, mix_seed(seed, 100 + i as u64));
            if uniform {
                mu
            } else {
                DiscreteMeasure::new(spec.clone(), mu.points, random_weights(n, &mut rng)).unwrap()
            }
        })
        .collect()
}

pub struct Solved {
    pub measures: Vec<DiscreteMeasure>,
    pub tensor: CostTensor,
    pub plan: TransportPlan,
    pub potentials: DualPotentials,
    pub report: SolveReport,
}

pub fn tensor_for(spec: &ManifoldSpec, family: &CostFamily, measures: &[DiscreteMeasure], seed: u64) -> CostTensor {
    let opts = TensorOptions {
        karcher: KarcherOptions { seed, ..Default::default() },
        ..Default::default()
    };
    build_tensor(spec, family, measures, &opts).unwrap()
}

pub fn solve_instance(spec: &ManifoldSpec, family: &CostFamily, sizes: &[usize], seed: u64, uniform: bool) -> Solved {
    let measures = random_measures(spec, sizes, seed, uniform);
    let tensor = tensor_for(spec, family, &measures, seed);
    let (plan, potentials, report) = solve_exact(&tensor, &measures).unwrap();
    Solved {
        measures,
        tensor,
        plan,
        potentials,
        report,
    }
}
