//! Multi-marginal optimal transport with barycenter costs
//! `c(x₁,…,x_m) = inf_y Σᵢ fᵢ(d(xᵢ, y))` on the sphere, the flat torus and
//! Euclidean space.

pub mod analysis;
pub mod cost;
pub mod error;
pub mod frechet;
pub mod manifold;
pub mod measure;
pub mod oracle;
mod par;
pub mod solver;

pub use error::{Error, Result};
pub use frechet::{CostFamily, CostFn, KarcherOptions, KarcherProblem, KarcherResult};
pub use cost::{CostEval, CostTensor, TensorOptions};
pub use manifold::{ManifoldKind, ManifoldPoint, ManifoldSpec, TangentVector};
pub use measure::DiscreteMeasure;
pub use par::is_parallel;

/// Derive an independent stream seed from a base seed and an index
/// (splitmix64 finalizer).
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
