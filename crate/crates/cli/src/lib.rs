//! Report assembly for the `critex` command.
//!
//! `analyze` runs the whole pipeline on a problem file: search, family
//! detection, classification, multipliers and the bordered-Hessian
//! cross-check. `subsidiary` computes the image of a homogeneous objective
//! over the unit sphere and any extra constraints. Both produce a report
//! that serializes to JSON deterministically and renders as plain text.

use std::fmt::Write as _;

use critex_core::charts::{ChartError, ConstrainedProblem};
use critex_core::classify::{
    classify_family, classify_points, solve_subsidiary, Classification, ClassifyConfig, FamilyClassification,
    IntervalImage, SubsidiaryProblem, Verdict,
};
use critex_core::expr::{parse_problem, HomogeneousPolynomial, ParseError};
use critex_core::lagrange::{bordered_hessian_oracle, recover_multipliers, OracleVerdict};
use critex_core::solver::{solve, SearchConfig, SolverError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Box used when none is given: the same interval on every axis.
pub const DEFAULT_BOX: (f64, f64) = (-10.0, 10.0);

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("no critical points found in the search box")]
    NoPoints,
    #[error("tolerance failure: {0}")]
    Tolerance(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Input(_) => 1,
            CliError::NoPoints => 2,
            CliError::Tolerance(_) => 3,
        }
    }
}

impl From<ChartError> for CliError {
    fn from(e: ChartError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidConfig(m) => CliError::Input(m),
            other => CliError::Tolerance(other.to_string()),
        }
    }
}

/// Overrides from the command line; `None` keeps the module default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Options {
    pub bounds: Option<BoxSpec>,
    pub seeds_per_axis: Option<usize>,
    pub k_max: Option<u32>,
    pub depth_max: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoxSpec {
    /// One interval for every axis.
    Uniform(f64, f64),
    PerAxis(Vec<(f64, f64)>),
}

impl std::str::FromStr for BoxSpec {
    type Err = String;

    /// `LO:HI` or `LO:HI,LO:HI,…`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_one = |t: &str| -> Result<(f64, f64), String> {
            let (lo, hi) = t.split_once(':').ok_or_else(|| format!("expected LO:HI, got `{t}`"))?;
            let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
            let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(format!("interval {lo}:{hi} must be finite with LO < HI"));
            }
            Ok((lo, hi))
        };
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() == 1 {
            let (lo, hi) = parse_one(parts[0])?;
            return Ok(BoxSpec::Uniform(lo, hi));
        }
        parts.into_iter().map(parse_one).collect::<Result<_, _>>().map(BoxSpec::PerAxis)
    }
}

impl Options {
    fn bounds(&self, d: usize) -> Result<Vec<(f64, f64)>, CliError> {
        match &self.bounds {
            None => Ok(vec![DEFAULT_BOX; d]),
            Some(BoxSpec::Uniform(lo, hi)) => Ok(vec![(*lo, *hi); d]),
            Some(BoxSpec::PerAxis(v)) if v.len() == d => Ok(v.clone()),
            Some(BoxSpec::PerAxis(v)) => Err(CliError::Input(format!("--box has {} intervals for {d} variables", v.len()))),
        }
    }

    pub fn search_config(&self, d: usize) -> Result<SearchConfig, CliError> {
        let mut cfg = SearchConfig::new(self.bounds(d)?);
        if let Some(s) = self.seeds_per_axis {
            cfg.seeds_per_axis = s;
        }
        if let Some(t) = self.tol {
            cfg.constraint_tol = t;
            cfg.gradient_tol = t;
        }
        cfg.validate(d)?;
        Ok(cfg)
    }

    pub fn classify_config(&self) -> ClassifyConfig {
        let mut cfg = ClassifyConfig::default();
        if let Some(k) = self.k_max {
            cfg.k_max = k;
        }
        if let Some(d) = self.depth_max {
            cfg.depth_max = d;
        }
        if let Some(t) = self.tol {
            cfg.value_tol = t;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemEcho {
    pub variables: Vec<String>,
    pub objective: String,
    pub constraints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub bounds: Vec<(f64, f64)>,
    pub seeds_per_axis: usize,
    pub constraint_tol: f64,
    pub gradient_tol: f64,
    pub k_max: u32,
    pub depth_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSummary {
    pub chart: String,
    pub dependent: Vec<usize>,
    pub seeds: usize,
    pub converged: usize,
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub minors: Vec<(usize, f64)>,
    pub verdict: OracleVerdict,
    /// Whether a decisive oracle verdict matches the classification.
    pub agrees: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub index: usize,
    pub coordinates: Vec<f64>,
    pub value: f64,
    pub chart: String,
    pub constraint_residual: f64,
    pub gradient_residual: f64,
    pub jacobian_rank: usize,
    pub family_id: Option<usize>,
    pub classification: Option<Classification>,
    pub classification_error: Option<String>,
    pub multipliers: Option<Vec<f64>>,
    pub multiplier_error: Option<String>,
    pub oracle: Option<OracleReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyOut {
    pub id: usize,
    pub members: Vec<usize>,
    /// Further points found on the family and folded into the members.
    pub absorbed: usize,
    pub samples: Vec<Vec<f64>>,
    pub tangents: Vec<Vec<Vec<f64>>>,
    pub classification: FamilyClassification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistics {
    pub seeds: usize,
    pub candidates: usize,
    pub unique: usize,
    pub families: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub problem: ProblemEcho,
    pub config: ConfigEcho,
    pub charts: Vec<ChartSummary>,
    pub points: Vec<PointReport>,
    pub families: Vec<FamilyOut>,
    pub statistics: Statistics,
    pub diagnostics: Vec<String>,
}

fn echo(p: &ConstrainedProblem) -> ProblemEcho {
    ProblemEcho {
        variables: p.names().to_vec(),
        objective: p.objective().display_with(p.names()),
        constraints: p.constraints().iter().map(|c| c.display_with(p.names())).collect(),
    }
}

fn oracle_agrees(o: OracleVerdict, v: Verdict) -> Option<bool> {
    match o {
        OracleVerdict::Min => Some(v.is_min()),
        OracleVerdict::Max => Some(v.is_max()),
        OracleVerdict::Saddle => Some(v == Verdict::Saddle),
        OracleVerdict::Indeterminate => None,
    }
}

/// Full pipeline on the text of a problem file.
pub fn cmd_analyze(text: &str, opts: &Options) -> Result<Report, CliError> {
    let def = parse_problem(text)?;
    let p = ConstrainedProblem::from_definition(&def)?;
    let search = opts.search_config(p.d())?;
    let ccfg = opts.classify_config();
    let (report, stats) = solve(&p, &search)?;
    if report.points.is_empty() {
        return Err(CliError::NoPoints);
    }
    let mut diagnostics = Vec::new();
    let classes = classify_points(&p, &report.points, &ccfg);
    let mut points = Vec::with_capacity(report.points.len());
    for (index, (cp, class)) in report.points.iter().zip(classes).enumerate() {
        let scaled = p.scaled_constraint_residual(&cp.coordinates);
        if scaled > search.constraint_tol {
            return Err(CliError::Tolerance(format!("point {index}: scaled constraint residual {scaled:e}")));
        }
        let (classification, classification_error) = match class {
            Ok(c) => (Some(c), None),
            Err(e) => {
                diagnostics.push(format!("point {index}: classification failed: {e}"));
                (None, Some(e.to_string()))
            }
        };
        let (multipliers, multiplier_error, oracle) = if p.m() == 0 || p.m() >= p.d() {
            (None, None, None)
        } else {
            match recover_multipliers(&p, cp, &cp.chart) {
                Ok(mv) => {
                    let o = bordered_hessian_oracle(&p, cp, &mv);
                    let agrees = classification.as_ref().and_then(|c| oracle_agrees(o.verdict, c.verdict));
                    if agrees == Some(false) {
                        diagnostics.push(format!("point {index}: bordered-Hessian oracle disagrees ({:?})", o.verdict));
                    }
                    (Some(mv.lambda), None, Some(OracleReport { minors: o.minors, verdict: o.verdict, agrees }))
                }
                Err(e) => (None, Some(e.to_string()), None),
            }
        };
        points.push(PointReport {
            index,
            coordinates: cp.coordinates.clone(),
            value: p.objective_value(&cp.coordinates),
            chart: cp.chart.label(p.names()),
            constraint_residual: cp.constraint_residual,
            gradient_residual: cp.gradient_residual,
            jacobian_rank: cp.jacobian_rank,
            family_id: cp.family_id,
            classification,
            classification_error,
            multipliers,
            multiplier_error,
            oracle,
        });
    }
    let families = report
        .families
        .iter()
        .map(|f| FamilyOut {
            id: f.id,
            members: f.members.clone(),
            absorbed: f.absorbed,
            samples: f.samples.clone(),
            tangents: f.tangents.clone(),
            classification: classify_family(&p, f, &search, &ccfg),
        })
        .collect::<Vec<_>>();
    let charts = stats
        .charts
        .iter()
        .map(|c| ChartSummary {
            chart: c.chart.label(p.names()),
            dependent: c.chart.dependent().to_vec(),
            seeds: c.seeds,
            converged: c.converged,
            accepted: c.accepted,
        })
        .collect();
    Ok(Report {
        problem: echo(&p),
        config: ConfigEcho {
            bounds: search.bounds.clone(),
            seeds_per_axis: search.seeds_per_axis,
            constraint_tol: search.constraint_tol,
            gradient_tol: search.gradient_tol,
            k_max: ccfg.k_max,
            depth_max: ccfg.depth_max,
        },
        charts,
        statistics: Statistics {
            seeds: search.seeds_per_axis.pow(p.d() as u32),
            candidates: stats.candidates,
            unique: stats.unique,
            families: families.len(),
        },
        points,
        families,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsidiaryReport {
    pub variables: Vec<String>,
    pub objective: String,
    pub degree: u32,
    /// Unit sphere first.
    pub constraints: Vec<String>,
    pub image: IntervalImage,
}

/// Image of a homogeneous objective over the unit sphere intersected with
/// the file's constraints.
pub fn cmd_subsidiary(text: &str, opts: &Options) -> Result<SubsidiaryReport, CliError> {
    let def = parse_problem(text)?;
    let form = HomogeneousPolynomial::from_expression(&def.objective)
        .map_err(|e| CliError::Input(format!("objective must be homogeneous: {e}")))?;
    if form.is_zero() {
        return Err(CliError::Input("objective is identically zero".into()));
    }
    let s = SubsidiaryProblem::on_sphere(def.variables.clone(), form.clone()).with_constraints(&def.constraints);
    let mut cfg = opts.classify_config();
    cfg.subsidiary_seeds = opts.seeds_per_axis;
    let image = solve_subsidiary(&s, &cfg).map_err(|e| match e {
        critex_core::classify::ClassifyError::SearchCoverage { .. } => CliError::NoPoints,
        other => CliError::Tolerance(other.to_string()),
    })?;
    Ok(SubsidiaryReport {
        variables: def.variables.clone(),
        objective: form.display_with(&def.variables),
        degree: form.degree(),
        constraints: s.constraint_labels(),
        image,
    })
}

/// Deterministic JSON: struct fields in declaration order, floats in
/// shortest round-trip form.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

fn fmt_point(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.9}")).collect();
    format!("({})", parts.join(", "))
}

pub fn render_report(r: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "objective: {}", r.problem.objective);
    for c in &r.problem.constraints {
        let _ = writeln!(out, "constraint: {c} = 0");
    }
    let _ = writeln!(
        out,
        "search: {} seeds per axis, {} candidates, {} distinct points, {} families",
        r.config.seeds_per_axis, r.statistics.candidates, r.statistics.unique, r.statistics.families
    );
    for c in &r.charts {
        let _ = writeln!(out, "  chart {}: {} converged, {} accepted", c.chart, c.converged, c.accepted);
    }
    for p in &r.points {
        let verdict = p.classification.as_ref().map_or("error".to_string(), |c| format!("{:?}", c.verdict));
        let _ = write!(out, "[{}] {} f = {:.9} {}", p.index, fmt_point(&p.coordinates), p.value, verdict);
        if let Some(c) = &p.classification {
            if let Some(k) = c.leading_order {
                let _ = write!(out, " (order {k}");
                if let Some(case) = c.evidence.last().and_then(|e| e.case) {
                    let _ = write!(out, ", {}", serde_json::to_value(case).expect("label").as_str().unwrap_or(""));
                }
                let _ = write!(out, ")");
            }
            if !c.flags.is_empty() {
                let _ = write!(out, " flags {:?}", c.flags);
            }
        }
        if let Some(id) = p.family_id {
            let _ = write!(out, " family {id}");
        }
        let _ = writeln!(out);
        if let Some(l) = &p.multipliers {
            let _ = write!(out, "    multipliers {}", fmt_point(l));
            if let Some(o) = &p.oracle {
                let _ = write!(out, "; bordered Hessian {:?}", o.verdict);
            }
            let _ = writeln!(out);
        }
    }
    for f in &r.families {
        let _ = writeln!(
            out,
            "family {}: {} samples, {} members listed, {} more absorbed",
            f.id,
            f.samples.len(),
            f.members.len(),
            f.absorbed
        );
        let name = &r.problem.variables[f.classification.parameter];
        for run in &f.classification.summary {
            let _ = writeln!(out, "    {name} in [{:.4}, {:.4}]: {:?} ({} samples)", run.from, run.to, run.verdict, run.count);
        }
    }
    for d in &r.diagnostics {
        let _ = writeln!(out, "note: {d}");
    }
    out
}

const WITNESS_LIMIT: usize = 4;

/// Exact value from a rational witness when there is one.
fn endpoint(v: f64, ws: &[critex_core::classify::Witness]) -> String {
    ws.iter().find_map(|w| w.exact_value.clone()).unwrap_or_else(|| format!("{v:.12}"))
}

pub fn render_subsidiary(r: &SubsidiaryReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "objective: {} (degree {})", r.objective, r.degree);
    for c in &r.constraints {
        let _ = writeln!(out, "constraint: {c}");
    }
    let _ = writeln!(
        out,
        "image: [{}, {}] ({} points evaluated)",
        endpoint(r.image.a, &r.image.min_witnesses),
        endpoint(r.image.b, &r.image.max_witnesses),
        r.image.evaluated
    );
    for (label, ws) in [("min", &r.image.min_witnesses), ("max", &r.image.max_witnesses)] {
        for w in ws.iter().take(WITNESS_LIMIT) {
            let _ = writeln!(out, "  {label} at {}", fmt_point(&w.point));
        }
        if ws.len() > WITNESS_LIMIT {
            let _ = writeln!(out, "  ... {} more {label} witnesses", ws.len() - WITNESS_LIMIT);
        }
    }
    let z = &r.image.zero_set;
    if !z.isolated.is_empty() || z.positive_dimensional {
        let _ = writeln!(
            out,
            "zero set: {} isolated points{}",
            z.isolated.len(),
            if z.positive_dimensional { ", plus a positive-dimensional part" } else { "" }
        );
    }
    out
}
