use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mmot::frechet::{CostFamily, CostFn, KarcherOptions};
use mmot::manifold::{ManifoldKind, ManifoldPoint, ManifoldSpec};
use mmot::measure::DiscreteMeasure;
use mmot::solver::EpsilonSchedule;
use mmot::{mix_seed, TensorOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const SCHEMA: u32 = 1;

/// Sphere inputs may be off the unit sphere by at most this much before
/// being normalized; anything further is treated as a mistake.
const SPHERE_INPUT_TOL: f64 = 1e-6;

/// One cost function for every marginal, or one per marginal.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostSpec {
    Each(Vec<CostFn>),
    All(CostFn),
}

impl Default for CostSpec {
    fn default() -> Self {
        CostSpec::All(CostFn::HalfSquare)
    }
}

impl CostSpec {
    pub fn family(&self, m: usize) -> Result<CostFamily> {
        let family = match self {
            CostSpec::All(f) => CostFamily::uniform(*f, m),
            CostSpec::Each(fs) if fs.len() == m => CostFamily(fs.clone()),
            CostSpec::Each(fs) => bail!("`cost` lists {} functions for {m} marginals", fs.len()),
        };
        family.validate()?;
        Ok(family)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    UniformRandom,
    Cluster,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub kind: GeneratorKind,
    pub n: usize,
    pub seed: u64,
    /// Cluster only: geodesic radius of the cloud around its center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread: Option<f64>,
    /// Cluster only: center point; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    /// Draw unequal weights instead of uniform ones.
    #[serde(default)]
    pub random_weights: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Exact,
    Sinkhorn,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default)]
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_schedule: Option<EpsilonSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

/// Pass thresholds; unset values fall back to method-dependent defaults.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub marginal: Option<f64>,
    pub gap: Option<f64>,
    pub dual_feasibility: Option<f64>,
    pub support_equality: Option<f64>,
    pub monotonicity: Option<f64>,
    pub barycenter: Option<f64>,
    pub two_marginal: Option<f64>,
    pub concavity: Option<f64>,
    pub uniqueness: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    pub jitter_count: usize,
    pub jitter_scale: f64,
    pub seed: u64,
    pub merge_tol: f64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            jitter_count: 10,
            jitter_scale: 1e-2,
            seed: 0,
            merge_tol: mmot::analysis::DEFAULT_MERGE_TOL,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub manifold: ManifoldSpec,
    pub marginals: Vec<MarginalSpec>,
    #[serde(default)]
    pub cost: CostSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub karcher: KarcherOptions,
    /// Checks whose failure fails the run; everything else is reported only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifications: Option<Vec<String>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub verify: VerifySpec,
    /// Report failed checks without failing the run.
    #[serde(default)]
    pub warn_only: bool,
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KarcherConfig {
    pub schema: u32,
    pub manifold: ManifoldSpec,
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub cost: CostSpec,
    #[serde(default)]
    pub karcher: KarcherOptions,
    /// Points per axis of the grid scan written next to the result.
    #[serde(default = "default_grid_resolution")]
    pub grid_resolution: usize,
    pub output_dir: PathBuf,
}

fn default_grid_resolution() -> usize {
    100
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(T, serde_json::Value)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))?;
    match value.get("schema") {
        Some(s) if s.as_u64() == Some(SCHEMA as u64) => {}
        Some(s) => bail!("unsupported schema {s}; this build reads schema {SCHEMA}"),
        None => bail!("config is missing `\"schema\": {SCHEMA}`"),
    }
    let parsed = serde_json::from_value(value.clone()).with_context(|| format!("invalid config {}", path.display()))?;
    Ok((parsed, value))
}

pub fn point(spec: &ManifoldSpec, coords: &[f64]) -> Result<ManifoldPoint> {
    if spec.kind == ManifoldKind::Sphere {
        let n = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (n - 1.0).abs() > SPHERE_INPUT_TOL {
            bail!("sphere point {coords:?} has norm {n}, expected 1");
        }
    }
    Ok(spec.canonicalize(coords.to_vec())?)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.manifold.validate()?;
        if self.marginals.len() < 2 {
            bail!("need at least two marginals, got {}", self.marginals.len());
        }
        self.cost.family(self.marginals.len())?;
        if let Some(names) = &self.verifications {
            for n in names {
                if !crate::verify::CHECKS.contains(&n.as_str()) {
                    bail!("unknown verification `{n}`; known: {}", crate::verify::CHECKS.join(", "));
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Result<CostFamily> {
        self.cost.family(self.marginals.len())
    }

    pub fn tensor_options(&self) -> TensorOptions {
        TensorOptions {
            karcher: self.karcher.clone(),
            ..Default::default()
        }
    }

    pub fn measures(&self) -> Result<Vec<DiscreteMeasure>> {
        self.marginals
            .iter()
            .enumerate()
            .map(|(i, m)| m.build(&self.manifold).with_context(|| format!("marginal {i}")))
            .collect()
    }
}

impl KarcherConfig {
    pub fn problem(&self) -> Result<mmot::KarcherProblem> {
        self.manifold.validate()?;
        let points = self
            .points
            .iter()
            .map(|c| point(&self.manifold, c))
            .collect::<Result<Vec<_>>>()?;
        let m = points.len();
        let mut prob = mmot::KarcherProblem::new(self.manifold.clone(), points, self.cost.family(m)?);
        if let Some(w) = &self.weights {
            prob.weights = w.clone();
        }
        prob.validate()?;
        Ok(prob)
    }
}

impl MarginalSpec {
    pub fn build(&self, spec: &ManifoldSpec) -> Result<DiscreteMeasure> {
        match (&self.points, &self.generator) {
            (Some(_), Some(_)) => bail!("give either `points` or `generator`, not both"),
            (None, None) => bail!("needs `points` with `weights`, or a `generator`"),
            (Some(points), None) => {
                let weights = self
                    .weights
                    .clone()
                    .ok_or_else(|| anyhow!("explicit `points` need a matching `weights` array"))?;
                let points = points.iter().map(|c| point(spec, c)).collect::<Result<Vec<_>>>()?;
                Ok(DiscreteMeasure::new(spec.clone(), points, weights)?)
            }
            (None, Some(g)) => {
                if self.weights.is_some() {
                    bail!("`weights` cannot be combined with a `generator`");
                }
                g.generate(spec)
            }
        }
    }
}

impl Generator {
    pub fn generate(&self, spec: &ManifoldSpec) -> Result<DiscreteMeasure> {
        if self.n == 0 {
            bail!("generator needs n >= 1");
        }
        let points: Vec<ManifoldPoint> = match self.kind {
            GeneratorKind::UniformRandom => {
                if self.spread.is_some() || self.center.is_some() {
                    bail!("`spread` and `center` only apply to cluster generators");
                }
                (0..self.n).map(|k| spec.random_point(mix_seed(self.seed, k as u64))).collect()
            }
            GeneratorKind::Cluster => {
                let spread = self.spread.unwrap_or(0.3);
                if !(spread.is_finite() && spread > 0.0) {
                    bail!("cluster spread must be positive, got {spread}");
                }
                let center = match &self.center {
                    Some(c) => point(spec, c)?,
                    None => spec.random_point(mix_seed(self.seed, u64::MAX)),
                };
                (0..self.n)
                    .map(|k| {
                        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, k as u64));
                        let r = spread * rng.random_range(0.0..1.0f64);
                        let v = spec.random_tangent(&center, r, &mut rng);
                        spec.exp_map(&center, &v)
                    })
                    .collect()
            }
        };
        let weights = if self.random_weights {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, u64::MAX - 1));
            let raw: Vec<f64> = (0..self.n).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            // Absorb rounding in the last atom.
            let head: f64 = w[..self.n - 1].iter().sum();
            w[self.n - 1] = 1.0 - head;
            w
        } else {
            vec![1.0 / self.n as f64; self.n]
        };
        Ok(DiscreteMeasure::new(spec.clone(), points, weights)?)
    }
}
