//! Classification of critical points.
//!
//! The second derivative test on the reduced Hessian comes first. When it is
//! inconclusive, the point is classified from the homogeneous Taylor
//! components `P_k` of the reduced function: the first nonzero component
//! is studied on the unit sphere, and if its image `[a, b]` touches zero
//! without changing sign, the analysis descends onto the zero set with the
//! following components.

mod descent;
mod reexpress;
mod subsidiary;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charts::{
    implicit_jet, reduced_gradient, reduced_hessian, reduced_series, Chart, ChartError, ConstrainedProblem,
    DEFAULT_RANK_TOL,
};
use crate::expr::{ExprError, HomogeneousPolynomial};
use crate::linalg::Matrix;
use crate::scalar::{f64_to_rational, snap_rational, Scalar};
use crate::series::Series;
use crate::solver::{best_chart_at, CriticalPoint, Family, SearchConfig, SolverError};

pub use reexpress::{perfect_power, reexpress_degenerate, ReexpressRule, Reexpression};
pub use subsidiary::{
    solve_subsidiary, value_band, zero_set_descent, ImageMethod, IntervalImage, SubsidiaryProblem, Value, Witness,
    ZeroSetSummary,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("no critical points found for the subsidiary problem {problem}")]
    SearchCoverage { problem: String },
    #[error("no valid chart at the point")]
    NoChart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    StrictMin,
    StrictMax,
    Saddle,
    NonStrictMin,
    NonStrictMax,
    Indeterminate,
}

impl Verdict {
    /// The verdict for `−f` given the verdict for `f`.
    pub fn mirrored(self) -> Self {
        match self {
            Verdict::StrictMin => Verdict::StrictMax,
            Verdict::StrictMax => Verdict::StrictMin,
            Verdict::NonStrictMin => Verdict::NonStrictMax,
            Verdict::NonStrictMax => Verdict::NonStrictMin,
            v => v,
        }
    }

    pub fn is_min(self) -> bool {
        matches!(self, Verdict::StrictMin | Verdict::NonStrictMin)
    }

    pub fn is_max(self) -> bool {
        matches!(self, Verdict::StrictMax | Verdict::NonStrictMax)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "hessian")]
    Hessian,
    #[serde(rename = "P_k")]
    Component,
}

/// Case of the higher derivative test. `C5x` are the mirrored `C4x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseLabel {
    Odd,
    C1,
    C2,
    C3,
    C4,
    C5,
    C41,
    C42,
    C43,
    C44,
    C45,
    C51,
    C52,
    C53,
    C54,
    C55,
}

impl CaseLabel {
    fn mirrored(self) -> Self {
        use CaseLabel::*;
        match self {
            C41 => C51,
            C42 => C52,
            C43 => C53,
            C44 => C54,
            C45 => C55,
            C4 => C5,
            c => c,
        }
    }
}

/// Markers for conclusions resting on more than exact evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    /// Every further component up to `k_max` vanished on the zero set, but
    /// the Taylor series does not end there.
    Truncated,
    /// An image was estimated from sampled points of a degenerate variety.
    Sampled,
    /// A degenerate constraint had no regular rewrite.
    ReexpressionIncomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceStep {
    pub stage: Stage,
    /// Degree `k` of the component; 2 for the Hessian stage.
    pub degree: u32,
    pub eigenvalues: Option<Vec<f64>>,
    pub interval: Option<[f64; 2]>,
    pub case: Option<CaseLabel>,
    /// Constraints of the variety the component was studied on.
    pub active_constraints: Vec<String>,
    /// Descent depth: number of restrictions below the bare sphere.
    pub depth: usize,
    pub note: Option<String>,
}

impl EvidenceStep {
    fn component(degree: u32, depth: usize, active: Vec<String>) -> Self {
        Self {
            stage: Stage::Component,
            degree,
            eigenvalues: None,
            interval: None,
            case: None,
            active_constraints: active,
            depth,
            note: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    /// Why the verdict is `Indeterminate`, when it is.
    pub reason: Option<String>,
    pub evidence: Vec<EvidenceStep>,
    pub flags: Vec<Flag>,
    /// Degree of the first nonzero component, when the test got that far.
    pub leading_order: Option<u32>,
}

impl Classification {
    fn decided(verdict: Verdict, evidence: Vec<EvidenceStep>) -> Self {
        Self { verdict, reason: None, evidence, flags: Vec::new(), leading_order: None }
    }

    fn indeterminate(reason: impl Into<String>, evidence: Vec<EvidenceStep>) -> Self {
        Self { verdict: Verdict::Indeterminate, reason: Some(reason.into()), evidence, flags: Vec::new(), leading_order: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub k_max: u32,
    pub depth_max: usize,
    /// Zero band for sign decisions on numerically computed values,
    /// relative to the coefficient size of the form.
    pub value_tol: f64,
    /// Zero band used when an image comes from sampling.
    pub sampled_value_tol: f64,
    /// Eigenvalues within `eig_rel_tol·(1 + ρ)` of zero count as zero.
    pub eig_rel_tol: f64,
    pub constraint_tol: f64,
    pub rank_tol: f64,
    /// Largest denominator tried when snapping points to rationals.
    pub snap_max_denominator: u64,
    pub subsidiary_seeds: Option<usize>,
    /// Half-width of the search box around the unit sphere.
    pub subsidiary_radius: f64,
    pub sample_count: usize,
    pub sample_seed: u64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            k_max: 10,
            depth_max: 4,
            value_tol: 1e-9,
            sampled_value_tol: 1e-6,
            eig_rel_tol: 1e-8,
            constraint_tol: 1e-8,
            rank_tol: DEFAULT_RANK_TOL,
            snap_max_denominator: 1000,
            subsidiary_seeds: None,
            subsidiary_radius: 1.05,
            sample_count: 200,
            sample_seed: 0x5eed,
        }
    }
}

/// Sign pattern of the eigenvalues of a symmetric matrix.
///
/// Returns the verdict when the test is decisive, together with the
/// evidence step either way.
pub fn second_derivative_test(h: &Matrix<f64>, cfg: &ClassifyConfig) -> (Option<Verdict>, EvidenceStep) {
    let n = h.len();
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (h[i][j] + h[j][i]));
    let mut eig: Vec<f64> = if n == 0 { Vec::new() } else { SymmetricEigen::new(m).eigenvalues.iter().copied().collect() };
    eig.sort_by(f64::total_cmp);
    let rho = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = cfg.eig_rel_tol * (1.0 + rho);
    let pos = eig.iter().filter(|v| **v > tol).count();
    let neg = eig.iter().filter(|v| **v < -tol).count();
    let verdict = if pos > 0 && neg > 0 {
        Some(Verdict::Saddle)
    } else if n > 0 && pos == n {
        Some(Verdict::StrictMin)
    } else if n > 0 && neg == n {
        Some(Verdict::StrictMax)
    } else {
        None
    };
    let step = EvidenceStep {
        stage: Stage::Hessian,
        degree: 2,
        eigenvalues: Some(eig),
        interval: None,
        case: None,
        active_constraints: Vec::new(),
        depth: 0,
        note: verdict.is_none().then(|| format!("eigenvalue within {tol:.1e} of zero")),
    };
    (verdict, step)
}

/// Homogeneous components of the reduced function at a point, indexed by
/// degree (`components[k]` has degree `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTaylor {
    pub chart: Chart,
    /// Names of the chart's independent variables.
    pub names: Vec<String>,
    pub components: Vec<HomogeneousPolynomial>,
    /// Whether the point was snapped to rationals and the components are
    /// exact.
    pub exact: bool,
    /// Set when the expansion is a polynomial of at most this degree, so
    /// components beyond it are known to vanish.
    pub complete_degree: Option<u32>,
}

/// Taylor components of `J` up to `cfg.k_max` at `x` in `chart`.
pub fn reduced_taylor(
    p: &ConstrainedProblem,
    x: &[f64],
    chart: &Chart,
    cfg: &ClassifyConfig,
) -> Result<ReducedTaylor, ClassifyError> {
    let names: Vec<String> = chart.independent().iter().map(|&i| p.names()[i].clone()).collect();
    let k_max = cfg.k_max.max(2);
    let n = chart.independent().len();
    if p.m() == 0 {
        let (center, exact) = match snap_point(x, cfg) {
            Some(q) if p.objective_gradient(&q).iter().all(Zero::is_zero) => (q, true),
            _ => (x.iter().map(|&v| f64_to_rational(v)).collect(), false),
        };
        let shifted = p.objective().shift(&center)?;
        let components = (0..=k_max)
            .map(|k| HomogeneousPolynomial::from_parts(k, center.clone(), shifted.homogeneous_part(k).into_terms()))
            .collect();
        let complete_degree = Some(p.objective().degree());
        return Ok(ReducedTaylor { chart: chart.clone(), names, components, exact, complete_degree });
    }
    if let Some(q) = snap_point(x, cfg) {
        if p.constraint_values(&q).iter().all(Zero::is_zero) {
            if let Ok(jet) = implicit_jet(p, chart, &q, k_max, cfg.constraint_tol, cfg.rank_tol) {
                if reduced_gradient(p, &jet).iter().all(Zero::is_zero) {
                    let center: Vec<BigRational> = chart.independent().iter().map(|&i| q[i].clone()).collect();
                    let series = reduced_series(p, &jet);
                    let components = split_series(&series, &center, k_max, |c| c.clone());
                    return Ok(ReducedTaylor { chart: chart.clone(), names, components, exact: true, complete_degree: None });
                }
            }
        }
    }
    let jet = implicit_jet(p, chart, x, k_max, cfg.constraint_tol, cfg.rank_tol)?;
    let series = reduced_series(p, &jet);
    let center: Vec<BigRational> = chart.independent().iter().map(|&i| f64_to_rational(x[i])).collect();
    // Chop rounding noise relative to the largest coefficient of degree ≥ 2.
    let scale = (0..series.coeffs().len())
        .filter(|&i| series.basis().degree(i) >= 2)
        .map(|i| series.coeffs()[i].abs())
        .fold(1.0, f64::max);
    let chop = cfg.value_tol * scale;
    let components = split_series(&series, &center, k_max, |&c: &f64| {
        if c.abs() <= chop {
            BigRational::zero()
        } else {
            snap_rational(c, 10_000, 1e-12 * c.abs().max(1.0)).unwrap_or_else(|| f64_to_rational(c))
        }
    });
    debug_assert_eq!(components.first().map_or(0, |c| c.nvars()), n);
    Ok(ReducedTaylor { chart: chart.clone(), names, components, exact: false, complete_degree: None })
}

fn split_series<T: Scalar>(
    s: &Series<T>,
    center: &[BigRational],
    k_max: u32,
    conv: impl Fn(&T) -> BigRational,
) -> Vec<HomogeneousPolynomial> {
    let b = s.basis();
    (0..=k_max)
        .map(|k| {
            let mut terms = BTreeMap::new();
            for i in b.degree_range(k) {
                let c = conv(&s.coeffs()[i]);
                if !c.is_zero() {
                    terms.insert(b.exponents(i).to_vec(), c);
                }
            }
            HomogeneousPolynomial::from_parts(k, center.to_vec(), terms)
        })
        .collect()
}

fn snap_point(x: &[f64], cfg: &ClassifyConfig) -> Option<Vec<BigRational>> {
    x.iter().map(|&v| snap_rational(v, cfg.snap_max_denominator, 1e-9 * v.abs().max(1.0))).collect()
}

/// Higher derivative test on the components of a reduced expansion.
pub fn higher_derivative_test(t: &ReducedTaylor, cfg: &ClassifyConfig) -> Result<Classification, ClassifyError> {
    descent::run(t, cfg)
}

/// Second derivative test at the point, then the higher derivative test if
/// needed.
pub fn classify_point(
    p: &ConstrainedProblem,
    cp: &CriticalPoint,
    cfg: &ClassifyConfig,
) -> Result<Classification, ClassifyError> {
    classify_at(p, &cp.coordinates, &cp.chart, cfg)
}

/// [`classify_point`] for bare coordinates and a chart valid there.
pub fn classify_at(
    p: &ConstrainedProblem,
    x: &[f64],
    chart: &Chart,
    cfg: &ClassifyConfig,
) -> Result<Classification, ClassifyError> {
    if p.n() == 0 || p.m() >= p.d() {
        return Ok(Classification::indeterminate("constraint set has no free directions at this point", Vec::new()));
    }
    let jet = implicit_jet(p, chart, x, 2, cfg.constraint_tol, cfg.rank_tol)?;
    let (verdict, step) = second_derivative_test(&reduced_hessian(p, &jet), cfg);
    if let Some(v) = verdict {
        let mut c = Classification::decided(v, vec![step]);
        c.leading_order = Some(2);
        return Ok(c);
    }
    let taylor = reduced_taylor(p, x, chart, cfg)?;
    let mut c = higher_derivative_test(&taylor, cfg)?;
    c.evidence.insert(0, step);
    Ok(c)
}

/// Classifies many points concurrently, in order.
pub fn classify_points(
    p: &ConstrainedProblem,
    points: &[CriticalPoint],
    cfg: &ClassifyConfig,
) -> Vec<Result<Classification, ClassifyError>> {
    points.par_iter().map(|cp| classify_point(p, cp, cfg)).collect()
}

/// Verdicts at the samples of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyClassification {
    pub family_id: usize,
    /// Coordinate along which the samples spread the most; the family is
    /// summarized as a function of it.
    pub parameter: usize,
    pub samples: Vec<SampleVerdict>,
    /// Maximal runs of equal verdicts, in parameter order.
    pub summary: Vec<VerdictRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleVerdict {
    pub point: Vec<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRun {
    pub verdict: Verdict,
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

/// Classifies every sample of a family independently.
pub fn classify_family(
    p: &ConstrainedProblem,
    family: &Family,
    search: &SearchConfig,
    cfg: &ClassifyConfig,
) -> FamilyClassification {
    let d = p.d();
    let spread = |i: usize| {
        let vals = family.samples.iter().map(|s| s[i]);
        vals.clone().fold(f64::NEG_INFINITY, f64::max) - vals.fold(f64::INFINITY, f64::min)
    };
    let parameter = (0..d).max_by(|&a, &b| spread(a).total_cmp(&spread(b))).unwrap_or(0);
    let mut samples: Vec<SampleVerdict> = family
        .samples
        .par_iter()
        .map(|x| {
            let verdict = best_chart_at(p, x, search)
                .ok_or(ClassifyError::NoChart)
                .and_then(|chart| classify_at(p, x, &chart, cfg))
                .map_or(Verdict::Indeterminate, |c| c.verdict);
            SampleVerdict { point: x.clone(), verdict }
        })
        .collect();
    samples.sort_by(|a, b| a.point[parameter].total_cmp(&b.point[parameter]));
    let mut summary: Vec<VerdictRun> = Vec::new();
    for s in &samples {
        let t = s.point[parameter];
        match summary.last_mut() {
            Some(run) if run.verdict == s.verdict => {
                run.to = t;
                run.count += 1;
            }
            _ => summary.push(VerdictRun { verdict: s.verdict, from: t, to: t, count: 1 }),
        }
    }
    FamilyClassification { family_id: family.id, parameter, samples, summary }
}
