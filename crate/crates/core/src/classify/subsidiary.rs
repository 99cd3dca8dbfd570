//! Range of a form over the unit sphere and its algebraic subsets.
//!
//! The image of a homogeneous polynomial over a compact variety is a closed
//! interval `[a, b]`. Both endpoints are attained at critical points of the
//! restricted form, so the interval is read off the critical values found by
//! the multi-start solver. When a constraint could not be rewritten into a
//! regular one, charts do not exist on the variety and the range is
//! estimated from points pulled onto the variety from random starts instead.

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::reexpress::{reexpress_degenerate, Reexpression};
use super::{ClassifyConfig, ClassifyError};
use crate::charts::ConstrainedProblem;
use crate::expr::{Expression, HomogeneousPolynomial};
use crate::scalar::{snap_rational, Scalar};
use crate::solver::{pinv_solve, solve, CompiledPoly, SearchConfig};

/// Extremize a form over `S^{d−1}` intersected with further constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsidiaryProblem {
    names: Vec<String>,
    objective: HomogeneousPolynomial,
    /// Unit sphere first, then the constraints appended by descent.
    constraints: Vec<Expression>,
    /// Some appended constraint is a degenerate form kept as is.
    flagged: bool,
}

impl SubsidiaryProblem {
    /// `objective` restricted to the unit sphere about its center.
    pub fn on_sphere(names: Vec<String>, objective: HomogeneousPolynomial) -> Self {
        let sphere = unit_sphere(objective.nvars());
        Self { names, objective, constraints: vec![sphere], flagged: false }
    }

    /// Adds user-supplied constraints in offset coordinates, rewriting
    /// degenerate forms where a rule applies.
    pub fn with_constraints(mut self, extra: &[Expression]) -> Self {
        for c in extra {
            match HomogeneousPolynomial::from_expression(c) {
                Ok(h) if h.degree() >= 2 && !reexpress_degenerate(&h).flagged => {
                    self.append(reexpress_degenerate(&h));
                }
                _ => self.constraints.push(c.clone()),
            }
        }
        self
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn objective(&self) -> &HomogeneousPolynomial {
        &self.objective
    }

    pub fn constraints(&self) -> &[Expression] {
        &self.constraints
    }

    pub fn flagged(&self) -> bool {
        self.flagged
    }

    pub fn nvars(&self) -> usize {
        self.objective.nvars()
    }

    /// Same variety, different objective.
    pub fn with_objective(&self, objective: HomogeneousPolynomial) -> Self {
        Self { objective, ..self.clone() }
    }

    /// Human-readable constraint list.
    pub fn constraint_labels(&self) -> Vec<String> {
        self.constraints.iter().map(|c| format!("{} = 0", c.display_with(&self.names))).collect()
    }

    fn append(&mut self, r: Reexpression) {
        self.flagged |= r.flagged;
        for c in r.constraints {
            if !self.constraints.contains(&c) {
                self.constraints.push(c);
            }
        }
    }
}

/// The variety of `prev` cut down by the zero set of `vanishing`, with
/// `next` as the new objective.
pub fn zero_set_descent(
    prev: &SubsidiaryProblem,
    vanishing: &HomogeneousPolynomial,
    next: HomogeneousPolynomial,
) -> (SubsidiaryProblem, Reexpression) {
    let r = reexpress_degenerate(vanishing);
    let mut out = prev.with_objective(next);
    out.append(r.clone());
    (out, r)
}

fn unit_sphere(n: usize) -> Expression {
    let mut s = Expression::constant(-BigRational::from_integer(1.into()), n);
    for i in 0..n {
        let v = Expression::variable(i, n).expect("index in range");
        s = &s + &(&v * &v);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageMethod {
    /// Critical values of the restricted form.
    CriticalValues,
    /// Values at sampled points of the variety.
    Sampled,
}

/// A point of the variety with the form's value there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub value: f64,
    /// Rational coordinates when the point snaps to one that satisfies every
    /// constraint exactly.
    pub exact: Option<Vec<String>>,
    /// Exact value at the rational point.
    pub exact_value: Option<String>,
}

impl Witness {
    pub fn rational_point(&self) -> Option<Vec<BigRational>> {
        self.exact.as_ref()?.iter().map(|s| s.parse().ok()).collect()
    }

    /// Value of `p` here, exactly when the witness is rational.
    pub fn evaluate(&self, p: &HomogeneousPolynomial) -> Value {
        match self.rational_point() {
            Some(q) => Value::Exact(p.evaluate(&q).expect("dimension checked")),
            None => Value::Approx(p.evaluate(&self.point).expect("dimension checked")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Exact(BigRational),
    Approx(f64),
}

impl Value {
    pub fn to_f64(&self) -> f64 {
        match self {
            Value::Exact(q) => q.to_f64(),
            Value::Approx(v) => *v,
        }
    }

    /// Sign with a numerical zero band of half-width `tol` for approximate
    /// values.
    pub fn sign(&self, tol: f64) -> i8 {
        match self {
            Value::Exact(q) if q.is_zero() => 0,
            Value::Exact(q) if q.is_positive() => 1,
            Value::Exact(_) => -1,
            Value::Approx(v) if v.abs() <= tol => 0,
            Value::Approx(v) => v.signum() as i8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSetSummary {
    /// Isolated points of the variety where the form vanishes.
    pub isolated: Vec<Witness>,
    /// Whether some zero lies on a continuum of critical points.
    pub positive_dimensional: bool,
    /// Samples of those continua.
    pub samples: Vec<Vec<f64>>,
}

/// `[a, b]`, the image of the form over the variety.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalImage {
    pub a: f64,
    pub b: f64,
    pub min_witnesses: Vec<Witness>,
    pub max_witnesses: Vec<Witness>,
    pub zero_set: ZeroSetSummary,
    pub method: ImageMethod,
    /// Number of points the values were taken over.
    pub evaluated: usize,
    /// Zero band used for approximate sign decisions.
    pub value_tol: f64,
}

impl IntervalImage {
    /// Sign of `a`: exact at a rational minimizer, banded otherwise.
    pub fn sign_a(&self) -> i8 {
        endpoint_sign(&self.min_witnesses, self.a, self.value_tol)
    }

    pub fn sign_b(&self) -> i8 {
        endpoint_sign(&self.max_witnesses, self.b, self.value_tol)
    }
}

fn endpoint_sign(ws: &[Witness], v: f64, tol: f64) -> i8 {
    // A rational witness that is an exact zero settles the question.
    if ws.iter().any(|w| w.exact_value.as_deref() == Some("0")) {
        return 0;
    }
    if let Some(w) = ws.iter().find(|w| w.exact_value.is_some()) {
        return Value::Exact(w.exact_value.as_ref().and_then(|s| s.parse().ok()).expect("stored exact")).sign(tol);
    }
    Value::Approx(v).sign(tol)
}

/// Zero band for values of `p` on the unit sphere: relative to the sum of
/// absolute coefficients, which bounds `|p|` there.
pub fn value_band(p: &HomogeneousPolynomial, value_tol: f64) -> f64 {
    let l1: f64 = p.coefficients().values().map(|c| c.to_f64().abs()).sum();
    value_tol * l1.max(1.0)
}

/// Computes `[a, b]` and the zero set of the objective over the variety.
pub fn solve_subsidiary(s: &SubsidiaryProblem, cfg: &ClassifyConfig) -> Result<IntervalImage, ClassifyError> {
    if s.flagged {
        return sampled_image(s, cfg);
    }
    let n = s.nvars();
    let objective = s.objective.recentered().to_expression();
    let p = ConstrainedProblem::new(s.names.clone(), objective, s.constraints.clone())?;
    let mut search = SearchConfig::cube(n, -cfg.subsidiary_radius, cfg.subsidiary_radius);
    if let Some(k) = cfg.subsidiary_seeds {
        search = search.with_seeds(k);
    }
    let (report, _) = solve(&p, &search)?;
    if report.points.is_empty() {
        return Err(ClassifyError::SearchCoverage {
            problem: format!("{} on {}", s.objective.display_with(&s.names), s.constraint_labels().join(", ")),
        });
    }
    let tol = value_band(&s.objective, cfg.value_tol);
    let mut witnesses: Vec<(Witness, bool)> = report
        .points
        .iter()
        .map(|c| (make_witness(s, &c.coordinates, cfg), c.family_flag))
        .collect();
    let mut samples = Vec::new();
    for f in &report.families {
        for x in &f.samples {
            let w = make_witness(s, x, cfg);
            if w.evaluate(&s.objective).sign(tol) == 0 {
                samples.push(x.clone());
            }
            witnesses.push((w, true));
        }
    }
    let evaluated = witnesses.len();
    let mut image = summarize(witnesses, tol, ImageMethod::CriticalValues);
    image.zero_set.positive_dimensional |= !samples.is_empty();
    image.zero_set.samples = samples;
    image.evaluated = evaluated;
    Ok(image)
}

fn summarize(witnesses: Vec<(Witness, bool)>, tol: f64, method: ImageMethod) -> IntervalImage {
    let a = witnesses.iter().map(|(w, _)| w.value).fold(f64::INFINITY, f64::min);
    let b = witnesses.iter().map(|(w, _)| w.value).fold(f64::NEG_INFINITY, f64::max);
    let pick = |target: f64| -> Vec<Witness> {
        witnesses.iter().filter(|(w, _)| (w.value - target).abs() <= tol).map(|(w, _)| w.clone()).collect()
    };
    let min_witnesses = pick(a);
    let max_witnesses = pick(b);
    let mut isolated = Vec::new();
    let mut positive_dimensional = false;
    for (w, on_family) in &witnesses {
        let zero = match &w.exact_value {
            Some(v) => v == "0",
            None => w.value.abs() <= tol,
        };
        if !zero {
            continue;
        }
        if *on_family {
            positive_dimensional = true;
        } else {
            isolated.push(w.clone());
        }
    }
    IntervalImage {
        a,
        b,
        min_witnesses,
        max_witnesses,
        zero_set: ZeroSetSummary { isolated, positive_dimensional, samples: Vec::new() },
        method,
        evaluated: witnesses.len(),
        value_tol: tol,
    }
}

fn make_witness(s: &SubsidiaryProblem, x: &[f64], cfg: &ClassifyConfig) -> Witness {
    let value = s.objective.evaluate(x).expect("dimension checked");
    let exact = exact_point(&s.constraints, x, cfg.snap_max_denominator);
    let exact_value = exact.as_ref().map(|q| s.objective.evaluate(q).expect("dimension checked").to_string());
    Witness { point: x.to_vec(), value, exact: exact.map(|q| q.iter().map(|v| v.to_string()).collect()), exact_value }
}

/// Small-denominator rational point near `x` on which every constraint
/// vanishes exactly.
pub(crate) fn exact_point(constraints: &[Expression], x: &[f64], max_den: u64) -> Option<Vec<BigRational>> {
    let q: Vec<BigRational> = x.iter().map(|v| snap_rational(*v, max_den, 1e-7 * v.abs().max(1.0))).collect::<Option<_>>()?;
    constraints.iter().all(|c| c.evaluate(&q).is_ok_and(|v| v.is_zero())).then_some(q)
}

/// Values at random points projected onto the variety.
fn sampled_image(s: &SubsidiaryProblem, cfg: &ClassifyConfig) -> Result<IntervalImage, ClassifyError> {
    let n = s.nvars();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sample_seed);
    let mut witnesses = Vec::new();
    for _ in 0..cfg.sample_count {
        let start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Some(x) = project(&s.constraints, &start) {
            witnesses.push((make_witness(s, &x, cfg), false));
        }
    }
    if witnesses.is_empty() {
        return Err(ClassifyError::SearchCoverage {
            problem: format!("no samples reached {}", s.constraint_labels().join(", ")),
        });
    }
    let tol = value_band(&s.objective, cfg.sampled_value_tol);
    let mut image = summarize(witnesses, tol, ImageMethod::Sampled);
    // Sampled zeros are generically not isolated; keep them as samples.
    image.zero_set.positive_dimensional = !image.zero_set.isolated.is_empty();
    image.zero_set.samples = image.zero_set.isolated.iter().map(|w| w.point.clone()).collect();
    Ok(image)
}

/// Gauss–Newton with minimum-norm steps onto `{c = 0 for all c}`. Keeps
/// iterating while the residual decreases, since degenerate constraints
/// only give linear convergence.
pub(crate) fn project(constraints: &[Expression], x0: &[f64]) -> Option<Vec<f64>> {
    let n = x0.len();
    let polys: Vec<CompiledPoly> = constraints.iter().map(CompiledPoly::new).collect();
    let grads: Vec<Vec<CompiledPoly>> =
        constraints.iter().map(|c| c.gradient().iter().map(CompiledPoly::new).collect()).collect();
    let eval = |x: &[f64]| nalgebra::DVector::from_iterator(polys.len(), polys.iter().map(|p| p.eval(x)));
    let mut x = x0.to_vec();
    let mut fx = eval(&x);
    let mut merit = fx.norm_squared();
    for _ in 0..500 {
        if merit == 0.0 {
            break;
        }
        let jm = nalgebra::DMatrix::from_fn(polys.len(), n, |i, j| grads[i][j].eval(&x));
        let step = pinv_solve(jm, &fx)?;
        let mut t = 1.0;
        let mut moved = false;
        while t >= 1.0 / 64.0 {
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let fnew = eval(&xn);
            let mn = fnew.norm_squared();
            if mn.is_finite() && mn < merit {
                x = xn;
                fx = fnew;
                merit = mn;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let scaled = polys.iter().map(|p| p.eval(&x).abs() / (1.0 + p.magnitude(&x))).fold(0.0, f64::max);
    (scaled <= 1e-12).then_some(x)
}
