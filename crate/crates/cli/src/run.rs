use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use mmot::cost::build_tensor;
use mmot::frechet::{self, grid_points};
use mmot::manifold::ManifoldKind;
use mmot::solver::{solve_exact, solve_sinkhorn, SinkhornOptions, Solution, SolveReport, TransportPlan};
use mmot::{CostTensor, DiscreteMeasure};
use serde::Serialize;
use serde_json::json;

use crate::config::{read_json, KarcherConfig, Method, RunConfig};
use crate::verify::{run_checks, summary, Artifacts, Check, Verification};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type CmdResult = Result<u8, Failure>;

pub fn config_err(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error: error.into(),
    }
}

/// Library errors caused by the inputs (bad values, size caps) count as
/// configuration errors; everything else is a solver failure.
pub fn solver_err(error: anyhow::Error) -> Failure {
    let code = match error.downcast_ref::<mmot::Error>() {
        Some(mmot::Error::InvalidInput(_) | mmot::Error::SizeCap { .. } | mmot::Error::EnumerationCap { .. }) => {
            EXIT_CONFIG
        }
        _ => EXIT_SOLVER,
    };
    Failure { code, error }
}

fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_artifact<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> anyhow::Result<T> {
    let path = dir.join(name);
    let file = File::open(&path).with_context(|| format!("run directory lacks {name}"))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("cannot parse {}", path.display()))
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn output_dir(configured: &Path, over: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = over.unwrap_or_else(|| configured.to_path_buf());
    fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(config_err)?;
    Ok(dir)
}

fn load_run_config(path: &Path) -> Result<(RunConfig, serde_json::Value), Failure> {
    let (cfg, raw): (RunConfig, _) = read_json(path).map_err(config_err)?;
    cfg.validate().map_err(config_err)?;
    Ok((cfg, raw))
}

pub fn solve(config: &Path, out: Option<PathBuf>) -> CmdResult {
    let (cfg, raw) = load_run_config(config)?;
    let measures = cfg.measures().map_err(config_err)?;
    let family = cfg.family().map_err(config_err)?;
    let dir = output_dir(&cfg.output_dir, out)?;

    let tensor = build_tensor(&cfg.manifold, &family, &measures, &cfg.tensor_options())
        .context("building the cost tensor")
        .map_err(solver_err)?;
    let (plan, potentials, report) = match cfg.solver.method {
        Method::Exact => solve_exact(&tensor, &measures),
        Method::Sinkhorn => {
            let mut opts = SinkhornOptions::default();
            if let Some(s) = &cfg.solver.epsilon_schedule {
                opts.epsilon_schedule = s.clone();
            }
            if let Some(t) = cfg.solver.tol {
                opts.tol = t;
            }
            if let Some(n) = cfg.solver.max_iter {
                opts.max_iter = n;
            }
            solve_sinkhorn(&tensor, &measures, &opts)
        }
    }
    .context("solving the transport problem")
    .map_err(solver_err)?;
    let solution = Solution { plan, potentials };

    write_artifacts(&dir, &raw, &measures, &tensor, &solution, &report).map_err(solver_err)?;
    let art = Artifacts {
        measures,
        tensor,
        solution,
        report,
    };
    let (verification, derived) = run_checks(&cfg, &art).map_err(solver_err)?;
    let written = (|| -> anyhow::Result<()> {
        if let Some(monge) = &derived.monge {
            write_json(&dir, "monge.json", monge)?;
        }
        if let Some(bc) = &derived.barycenter {
            write_json(&dir, "barycenter.json", bc)?;
            write_json(&dir, "nu.json", &bc.nu)?;
        }
        write_json(&dir, "verification.json", &verification)
    })();
    written.map_err(solver_err)?;

    println!(
        "primal {:.12e}  dual {:.12e}  gap {:.3e}  support {}  -> {}",
        art.report.primal_value,
        art.report.dual_value,
        art.report.gap,
        art.solution.plan.entries.len(),
        dir.display()
    );
    Ok(conclude(&verification))
}

fn write_artifacts(
    dir: &Path,
    raw: &serde_json::Value,
    measures: &[DiscreteMeasure],
    tensor: &CostTensor,
    solution: &Solution,
    report: &SolveReport,
) -> anyhow::Result<()> {
    write_json(dir, "config.json", raw)?;
    write_json(dir, "measures.json", measures)?;
    write_json(dir, "cost_tensor.json", tensor)?;
    let mut w = create(dir, "cost_tensor.bin")?;
    tensor.write_binary(&mut w)?;
    w.flush()?;
    tensor.write_csv(create(dir, "cost_tensor.csv")?)?;
    write_json(dir, "solution.json", solution)?;
    solution.plan.write_csv(create(dir, "plan.csv")?)?;
    solution.potentials.write_csv(create(dir, "potentials.csv")?)?;
    let nonunique = tensor.unique_flags.iter().filter(|u| !**u).count();
    let tensor_summary = json!({
        "shape": tensor.shape,
        "entries": tensor.len(),
        "min": tensor.values.iter().copied().fold(f64::INFINITY, f64::min),
        "max": tensor.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "nonunique_entries": nonunique,
    });
    write_json(
        dir,
        "report.json",
        &json!({ "solve": report, "tensor": tensor_summary, "parallel": mmot::is_parallel() }),
    )?;
    Ok(())
}

fn conclude(v: &Verification) -> u8 {
    print!("{}", summary(v));
    if v.ok() {
        if !v.pass {
            eprintln!("warning: failed checks ({}) ignored by warn_only", v.hard_failures.join(", "));
        }
        EXIT_OK
    } else {
        eprintln!("verification failed: {}", v.hard_failures.join(", "));
        EXIT_VERIFY
    }
}

#[derive(serde::Deserialize)]
struct PersistedReport {
    solve: SolveReport,
}

fn read_plan_csv(path: &Path, m: usize) -> anyhow::Result<Vec<(Vec<usize>, f64)>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut entries = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != m + 1 {
            return Err(anyhow!("plan.csv row has {} fields, expected {}", rec.len(), m + 1));
        }
        let idx = (0..m).map(|i| rec[i].parse::<usize>()).collect::<Result<Vec<_>, _>>()?;
        entries.push((idx, rec[m].parse::<f64>()?));
    }
    Ok(entries)
}

/// Every persisted copy of the plan and the tensor must agree exactly.
fn consistency(dir: &Path, tensor: &CostTensor, plan: &TransportPlan) -> Check {
    let problem = (|| -> anyhow::Result<Option<String>> {
        if read_plan_csv(&dir.join("plan.csv"), plan.m())? != plan.entries {
            return Ok(Some("plan.csv differs from solution.json".into()));
        }
        let (shape, values) = CostTensor::read_binary(BufReader::new(File::open(dir.join("cost_tensor.bin"))?))?;
        if shape != tensor.shape || values.iter().zip(&tensor.values).any(|(a, b)| a.to_bits() != b.to_bits()) {
            return Ok(Some("cost_tensor.bin differs from cost_tensor.json".into()));
        }
        Ok(None)
    })()
    .unwrap_or_else(|e| Some(format!("{e:#}")));
    Check {
        name: "artifacts".into(),
        pass: problem.is_none(),
        hard: true,
        value: None,
        tolerance: None,
        note: problem,
    }
}

pub fn verify(dir: &Path) -> CmdResult {
    let (cfg, _) = load_run_config(&dir.join("config.json"))?;
    let load = || -> anyhow::Result<Artifacts> {
        Ok(Artifacts {
            measures: read_artifact(dir, "measures.json")?,
            tensor: read_artifact(dir, "cost_tensor.json")?,
            solution: read_artifact(dir, "solution.json")?,
            report: read_artifact::<PersistedReport>(dir, "report.json")?.solve,
        })
    };
    let art = load().map_err(config_err)?;
    for m in &art.measures {
        m.validate().context("measures.json").map_err(config_err)?;
    }
    let (mut verification, _) = run_checks(&cfg, &art).map_err(solver_err)?;
    verification.add(consistency(dir, &art.tensor, &art.solution.plan));
    Ok(conclude(&verification))
}

pub fn karcher(config: &Path, out: Option<PathBuf>) -> CmdResult {
    let (cfg, _): (KarcherConfig, _) = read_json(config).map_err(config_err)?;
    let prob = cfg.problem().map_err(config_err)?;
    let dir = output_dir(&cfg.output_dir, out)?;
    let result = frechet::solve(&prob, &cfg.karcher)
        .context("Karcher descent")
        .map_err(solver_err)?;

    let mut doc = json!({ "problem": prob, "options": cfg.karcher, "result": result });
    if prob.spec.dim <= 2 {
        let scan = grid_scan(&prob, cfg.grid_resolution).map_err(config_err)?;
        doc["grid"] = scan;
    }
    let written = (|| -> anyhow::Result<()> {
        write_json(&dir, "karcher.json", &doc)?;
        if prob.spec.dim <= 2 {
            write_grid_csv(&dir, &prob, cfg.grid_resolution)?;
        }
        Ok(())
    })();
    written.map_err(solver_err)?;

    println!(
        "value {:.12e}  unique {}  minimizers {}  grad {:.3e}",
        result.value,
        result.unique,
        result.minimizers.len(),
        result.grad_norm
    );
    for y in &result.minimizers {
        println!("  {:?}", y.coords);
    }
    Ok(EXIT_OK)
}

/// Euclidean grids span the bounding box of the data.
fn data_bbox(prob: &mmot::KarcherProblem) -> Option<(Vec<f64>, Vec<f64>)> {
    (prob.spec.kind == ManifoldKind::Euclidean).then(|| {
        let d = prob.spec.dim;
        let lo = (0..d)
            .map(|i| prob.points.iter().map(|p| p.coords[i]).fold(f64::INFINITY, f64::min))
            .collect();
        let hi = (0..d)
            .map(|i| prob.points.iter().map(|p| p.coords[i]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        (lo, hi)
    })
}

fn grid_scan(prob: &mmot::KarcherProblem, resolution: usize) -> anyhow::Result<serde_json::Value> {
    let r = frechet::brute_force(prob, resolution)?;
    Ok(json!({ "resolution": resolution, "value": r.value, "minimizers": r.minimizers }))
}

fn write_grid_csv(dir: &Path, prob: &mmot::KarcherProblem, resolution: usize) -> anyhow::Result<()> {
    let bbox = data_bbox(prob);
    let grid = grid_points(
        &prob.spec,
        resolution,
        bbox.as_ref().map(|(lo, hi)| (lo.as_slice(), hi.as_slice())),
    )?;
    let mut w = csv::Writer::from_writer(create(dir, "grid_scan.csv")?);
    let mut header: Vec<String> = (0..prob.spec.ambient_dim()).map(|i| format!("x{i}")).collect();
    header.push("value".into());
    w.write_record(&header)?;
    for y in &grid {
        let mut row: Vec<String> = y.coords.iter().map(f64::to_string).collect();
        row.push(prob.objective(y).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn gen(config: &Path, out: Option<PathBuf>) -> CmdResult {
    let (cfg, _) = load_run_config(config)?;
    let measures = cfg.measures().map_err(config_err)?;
    let dir = output_dir(&cfg.output_dir, out)?;
    write_json(&dir, "measures.json", &measures).map_err(solver_err)?;
    let sizes: Vec<usize> = measures.iter().map(DiscreteMeasure::len).collect();
    println!("{} marginals with sizes {sizes:?} -> {}", measures.len(), dir.join("measures.json").display());
    Ok(EXIT_OK)
}

impl Verification {
    /// Appends a check and refreshes the verdict.
    pub fn add(&mut self, check: Check) {
        if !check.pass {
            if check.hard {
                self.hard_failures.push(check.name.clone());
            } else {
                self.warnings.push(check.name.clone());
            }
        }
        self.pass = self.hard_failures.is_empty();
        self.checks.push(check);
    }
}
