//! Post-solve checks computed purely from run artifacts, so `mmot verify`
//! can repeat them on a finished run directory without re-solving.

use anyhow::Result;
use mmot::analysis::{
    check_monotonicity, concavity_proxy, extract_monge, pushforward_barycenter, uniqueness_rate,
    verify_barycenter_optimality, verify_composition, verify_two_marginal_optimality, BarycenterResult,
    MongeMapTable, BARYCENTER_TOL, CONCAVITY_TOL, MONOTONICITY_TOL, UNIQUENESS_THRESHOLD,
};
use mmot::solver::{support_equality_check, DualPotentials, PlanSource, SolveReport, Solution};
use mmot::{CostTensor, DiscreteMeasure};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{Method, RunConfig};

pub const CHECKS: &[&str] = &[
    "marginals",
    "report",
    "duality",
    "dual_feasibility",
    "support_equality",
    "vertex_bound",
    "monotonicity",
    "barycenter",
    "two_marginal",
    "composition",
    "concavity",
    "uniqueness",
    "injectivity",
    "monge_graph",
];

/// Checks that always gate the run, whatever `verifications` says.
const ALWAYS_HARD: &[&str] = &["marginals", "report"];

const EXACT_HARD: &[&str] = &[
    "duality",
    "dual_feasibility",
    "support_equality",
    "vertex_bound",
    "monotonicity",
    "barycenter",
    "two_marginal",
    "composition",
    "concavity",
];

const SINKHORN_HARD: &[&str] = &["duality", "dual_feasibility"];

/// Plans with more support entries than this skip the barycenter checks;
/// the pushforward merge and the two-marginal solves grow with the support.
pub const BARYCENTER_ENTRY_CAP: usize = 5_000;

/// Relative agreement required between recomputed and reported objective values.
const REPORT_TOL: f64 = 1e-12;
/// Weak duality may fail by this much through rounding alone.
const NEGATIVE_GAP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Whether a failure fails the run.
    pub hard: bool,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub pass: bool,
    pub warn_only: bool,
    pub hard_failures: Vec<String>,
    pub warnings: Vec<String>,
    pub checks: Vec<Check>,
    /// Full report of each analysis, keyed by check name.
    pub details: Map<String, Value>,
}

impl Verification {
    /// True when the run should exit successfully.
    pub fn ok(&self) -> bool {
        self.pass || self.warn_only
    }
}

/// Everything a run directory persists that the checks read.
pub struct Artifacts {
    pub measures: Vec<DiscreteMeasure>,
    pub tensor: CostTensor,
    pub solution: Solution,
    pub report: SolveReport,
}

/// Derived objects that the solve command also writes out.
pub struct Derived {
    pub monge: Option<MongeMapTable>,
    pub barycenter: Option<BarycenterResult>,
}

struct Thresholds {
    marginal: f64,
    gap: f64,
    dual_feasibility: f64,
    support_equality: f64,
    monotonicity: f64,
    barycenter: f64,
    two_marginal: f64,
    concavity: f64,
    uniqueness: f64,
}

fn thresholds(cfg: &RunConfig, art: &Artifacts) -> Thresholds {
    let t = &cfg.tolerances;
    // Entropic bias of the rounded plan is at most about ε·ln(Πnᵢ).
    let default_gap = match (cfg.solver.method, art.report.epsilon) {
        (Method::Sinkhorn, Some(eps)) => 5.0 * eps * (art.tensor.len() as f64).ln().max(1.0),
        _ => 1e-8,
    };
    Thresholds {
        marginal: t.marginal.unwrap_or(1e-9),
        gap: t.gap.unwrap_or(default_gap),
        dual_feasibility: t.dual_feasibility.unwrap_or(1e-9),
        support_equality: t.support_equality.unwrap_or(1e-8),
        monotonicity: t.monotonicity.unwrap_or(MONOTONICITY_TOL),
        barycenter: t.barycenter.unwrap_or(BARYCENTER_TOL),
        two_marginal: t.two_marginal.unwrap_or(BARYCENTER_TOL),
        concavity: t.concavity.unwrap_or(CONCAVITY_TOL),
        uniqueness: t.uniqueness.unwrap_or(UNIQUENESS_THRESHOLD),
    }
}

fn is_hard(cfg: &RunConfig, name: &str) -> bool {
    if ALWAYS_HARD.contains(&name) {
        return true;
    }
    match &cfg.verifications {
        Some(list) => list.iter().any(|n| n == name),
        None => match cfg.solver.method {
            Method::Exact => EXACT_HARD.contains(&name),
            Method::Sinkhorn => SINKHORN_HARD.contains(&name),
        },
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

struct Builder<'a> {
    cfg: &'a RunConfig,
    checks: Vec<Check>,
    details: Map<String, Value>,
}

impl Builder<'_> {
    fn push(&mut self, name: &str, pass: bool, value: f64, tolerance: Option<f64>, note: Option<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            hard: is_hard(self.cfg, name),
            value: finite(value),
            tolerance,
            note,
        });
    }

    fn skip(&mut self, name: &str, why: &str) {
        let hard = is_hard(self.cfg, name);
        self.checks.push(Check {
            name: name.to_string(),
            // A gating check that cannot run is a failure, not a pass.
            pass: !hard,
            hard,
            value: None,
            tolerance: None,
            note: Some(why.to_string()),
        });
    }

    fn detail<T: Serialize>(&mut self, name: &str, report: &T) {
        self.details
            .insert(name.to_string(), serde_json::to_value(report).unwrap_or(Value::Null));
    }
}

pub fn run_checks(cfg: &RunConfig, art: &Artifacts) -> Result<(Verification, Derived)> {
    let th = thresholds(cfg, art);
    let mut b = Builder {
        cfg,
        checks: Vec::new(),
        details: Map::new(),
    };
    let plan = &art.solution.plan;
    let tensor = &art.tensor;
    let weights: Vec<Vec<f64>> = art.measures.iter().map(|m| m.weights.clone()).collect();
    let shape_ok = plan.shape == tensor.shape
        && weights.iter().map(Vec::len).collect::<Vec<_>>() == tensor.shape
        && art.solution.potentials.u.iter().map(Vec::len).collect::<Vec<_>>() == tensor.shape
        && plan
            .entries
            .iter()
            .all(|(idx, _)| idx.len() == tensor.m() && idx.iter().zip(&tensor.shape).all(|(k, n)| k < n));
    if !shape_ok {
        b.push("marginals", false, f64::NAN, None, Some("plan, tensor and marginals disagree in shape".into()));
        return Ok((finish(cfg, b), Derived { monge: None, barycenter: None }));
    }

    // Marginals and mass.
    let residuals = plan.marginal_residuals(&weights);
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    let min_mass = plan.entries.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let note = (min_mass < 0.0).then(|| format!("negative mass {min_mass:e} in plan"));
    b.push("marginals", worst <= th.marginal && min_mass >= 0.0, worst, Some(th.marginal), note);
    b.detail("marginals", &json!({ "residuals": residuals, "total_mass": plan.total_mass() }));

    // Reported objective values must match the artifacts.
    let primal = plan.cost(&tensor.shape, &tensor.values);
    let potentials = DualPotentials::new(art.solution.potentials.u.clone(), &tensor.shape, &tensor.values);
    let dual = potentials.objective(&weights);
    let drift = ((primal - art.report.primal_value).abs() / art.report.primal_value.abs().max(1.0))
        .max((dual - art.report.dual_value).abs() / art.report.dual_value.abs().max(1.0));
    b.push("report", drift <= REPORT_TOL, drift, Some(REPORT_TOL), None);
    b.detail("report", &json!({ "primal_value": primal, "dual_value": dual }));

    let gap = primal - dual;
    b.push(
        "duality",
        gap >= -NEGATIVE_GAP_TOL && gap <= th.gap,
        gap,
        Some(th.gap),
        None,
    );
    b.push(
        "dual_feasibility",
        potentials.feasibility_residual <= th.dual_feasibility,
        potentials.feasibility_residual,
        Some(th.dual_feasibility),
        None,
    );
    let eq = support_equality_check(plan, tensor, &potentials);
    b.push("support_equality", eq <= th.support_equality, eq, Some(th.support_equality), None);

    let bound = tensor.shape.iter().sum::<usize>() - tensor.m() + 1;
    let support = plan.entries.len();
    b.push(
        "vertex_bound",
        support <= bound,
        support as f64,
        Some(bound as f64),
        (plan.source != PlanSource::ExactLp).then(|| "only meaningful for exact plans".to_string()),
    );

    let mono = check_monotonicity(plan, &tensor.shape, &tensor.values);
    b.push(
        "monotonicity",
        mono.worst_violation <= th.monotonicity,
        mono.worst_violation,
        Some(th.monotonicity),
        None,
    );
    b.detail("monotonicity", &mono);

    let uniq = uniqueness_rate(plan, tensor);
    b.push("uniqueness", uniq.rate >= th.uniqueness, uniq.rate, Some(th.uniqueness), None);
    b.detail("uniqueness", &uniq);

    let monge = extract_monge(plan, &art.measures)?;
    b.push(
        "monge_graph",
        monge.is_graph(),
        monge.graph_fraction,
        Some(1.0),
        None,
    );
    b.detail("monge_graph", &json!({ "graph_fraction": monge.graph_fraction }));

    let barycenter = if support > BARYCENTER_ENTRY_CAP {
        let why = format!("plan has {support} support entries (cap {BARYCENTER_ENTRY_CAP})");
        for name in ["barycenter", "two_marginal", "composition", "concavity", "injectivity"] {
            b.skip(name, &why);
        }
        None
    } else {
        match pushforward_barycenter(plan, tensor, &art.measures, cfg.verify.merge_tol) {
            Ok(bc) => {
                barycenter_checks(&mut b, &th, art, &potentials, &monge, &bc, primal)?;
                Some(bc)
            }
            Err(e) => {
                let why = format!("pushforward failed: {e}");
                for name in ["barycenter", "two_marginal", "composition", "concavity", "injectivity"] {
                    b.skip(name, &why);
                }
                None
            }
        }
    };

    Ok((
        finish(cfg, b),
        Derived {
            monge: Some(monge),
            barycenter,
        },
    ))
}

fn barycenter_checks(
    b: &mut Builder,
    th: &Thresholds,
    art: &Artifacts,
    potentials: &DualPotentials,
    monge: &MongeMapTable,
    bc: &BarycenterResult,
    primal: f64,
) -> Result<()> {
    let v = &b.cfg.verify;
    let r = verify_barycenter_optimality(bc, &art.measures, primal, v.jitter_count, v.jitter_scale, v.seed)?;
    let worst = r.identity_residual.max(r.worst_jitter_improvement);
    b.push("barycenter", worst <= th.barycenter, worst, Some(th.barycenter), None);
    b.detail("barycenter", &r);

    let r = verify_two_marginal_optimality(bc, &art.measures)?;
    b.push("two_marginal", r.worst_residual <= th.two_marginal, r.worst_residual, Some(th.two_marginal), None);
    b.detail("two_marginal", &r);

    let r = verify_composition(monge, bc);
    let note = (r.well_posed_mass == 0.0).then(|| "no atom with a well-posed composition".to_string());
    b.push("composition", r.pass, r.pass_fraction, Some(1.0), note);
    b.detail("composition", &r);

    let r = concavity_proxy(potentials, &art.measures, bc);
    b.push("concavity", r.worst_violation <= th.concavity, r.worst_violation, Some(th.concavity), None);
    b.detail("concavity", &r);

    b.push(
        "injectivity",
        bc.injectivity_exceptions == 0,
        bc.injectivity_exceptions as f64,
        Some(0.0),
        None,
    );
    b.detail(
        "injectivity",
        &json!({
            "exceptions": bc.injectivity_exceptions,
            "nonunique_entries": bc.nonunique_entries,
            "nonunique_mass": bc.nonunique_mass,
        }),
    );
    Ok(())
}

fn finish(cfg: &RunConfig, b: Builder) -> Verification {
    let hard_failures: Vec<String> = b.checks.iter().filter(|c| c.hard && !c.pass).map(|c| c.name.clone()).collect();
    let warnings = b.checks.iter().filter(|c| !c.hard && !c.pass).map(|c| c.name.clone()).collect();
    Verification {
        pass: hard_failures.is_empty(),
        warn_only: cfg.warn_only,
        hard_failures,
        warnings,
        checks: b.checks,
        details: b.details,
    }
}

/// One line per check for the terminal.
pub fn summary(v: &Verification) -> String {
    let mut out = String::new();
    for c in &v.checks {
        let status = match (c.pass, c.hard) {
            (true, _) => "ok",
            (false, true) if v.warn_only => "WARN",
            (false, true) => "FAIL",
            (false, false) => "warn",
        };
        let value = c.value.map_or("-".to_string(), |x| format!("{x:.3e}"));
        let tol = c.tolerance.map_or(String::new(), |t| format!(" (tol {t:.1e})"));
        let note = c.note.as_ref().map_or(String::new(), |n| format!(" [{n}]"));
        out.push_str(&format!("{status:>4} {:<17} {value}{tol}{note}\n", c.name));
    }
    out
}
