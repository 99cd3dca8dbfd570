//! Randomized property suites shared by the `properties` test target and the
//! acceptance harness. Each suite runs a fixed number of proptest cases with
//! a deterministic seed and reports the first counterexample.

#![allow(dead_code)]

use critex_core::charts::{enumerate_charts, Chart, ConstrainedProblem, DEFAULT_RANK_TOL};
use critex_core::classify::{classify_at, solve_subsidiary, ClassifyConfig, SubsidiaryProblem, Verdict};
use critex_core::expr::{Expression, HomogeneousPolynomial};
use critex_core::scalar::ratio;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CASES: u32 = 50;

/// Runs `test` on `CASES` inputs drawn from `strategy`.
pub fn run<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let config = Config { cases: CASES, failure_persistence: None, max_global_rejects: 4096, ..Config::default() };
    let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &[7; 32]);
    let mut runner = TestRunner::new_with_rng(config, rng);
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn names(d: usize) -> Vec<String> {
    ["x", "y", "z", "w"][..d].iter().map(|s| s.to_string()).collect()
}

pub fn rational(num: std::ops::RangeInclusive<i64>, den: std::ops::RangeInclusive<i64>) -> impl Strategy<Value = BigRational> {
    (num, den).prop_map(|(p, q)| ratio(p, q))
}

fn exponents(d: usize, min_deg: u32, max_deg: u32) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0..=max_deg, d).prop_filter("degree range", move |e| {
        let s: u32 = e.iter().sum();
        s >= min_deg && s <= max_deg
    })
}

/// Polynomial in `d` variables with `1..=terms` monomials of total degree in
/// `min_deg..=max_deg` and integer coefficients in `-c..=c`.
pub fn polynomial(d: usize, min_deg: u32, max_deg: u32, terms: usize, c: i64) -> impl Strategy<Value = Expression> {
    prop::collection::vec((exponents(d, min_deg, max_deg), -c..=c), 1..=terms).prop_map(move |ts| {
        Expression::from_terms(d, ts.into_iter().map(|(e, k)| (e, ratio(k, 1)))).expect("matching arity")
    })
}

fn point(d: usize) -> impl Strategy<Value = Vec<BigRational>> {
    prop::collection::vec(rational(-6..=6, 1..=4), d)
}

fn to_f64(x: &[BigRational]) -> Vec<f64> {
    x.iter().map(critex_core::scalar::rational_to_f64).collect()
}

fn constant(c: BigRational, d: usize) -> Expression {
    Expression::constant(c, d)
}

/// `Σ c_i (x_i − x0_i)`.
fn affine(c: &[BigRational], x0: &[BigRational]) -> Expression {
    let d = x0.len();
    let mut e = Expression::zero(d);
    for i in 0..d {
        let xi = &Expression::variable(i, d).unwrap() - &constant(x0[i].clone(), d);
        e = &e + &xi.scale(&c[i]);
    }
    e
}

fn grad_at(e: &Expression, x: &[BigRational]) -> Vec<BigRational> {
    e.gradient().iter().map(|g| g.evaluate(x).unwrap()).collect()
}

// ---------------------------------------------------------------- suites

/// Symbolic partial derivatives against central differences, step 1e-4.
pub fn derivative_vs_finite_difference() -> Result<(), String> {
    run((polynomial(3, 0, 4, 6, 5), point(3), 0usize..3), |(e, x, i)| {
        let x = to_f64(&x);
        let sym: f64 = e.differentiate(i).unwrap().evaluate(&x).unwrap();
        let h = 1e-4;
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[i] += h;
        xm[i] -= h;
        let fd = (e.evaluate::<f64>(&xp).unwrap() - e.evaluate::<f64>(&xm).unwrap()) / (2.0 * h);
        let scale = sym.abs().max(e.magnitude_at(&x)).max(1.0);
        prop_assert!((sym - fd).abs() <= 1e-6 * scale, "sym {} fd {} scale {}", sym, fd, scale);
        Ok(())
    })
}

/// `e(X0) + Σ P_k(X − X0) = e(X)` exactly.
pub fn taylor_reconstruction() -> Result<(), String> {
    run((polynomial(3, 0, 5, 6, 7), point(3), point(3)), |(e, x0, x)| {
        let comps = e.taylor_components(&x0, e.degree()).unwrap();
        let y: Vec<BigRational> = x.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let mut sum: BigRational = e.evaluate(&x0).unwrap();
        for p in &comps {
            sum += p.evaluate(&y).unwrap();
        }
        prop_assert_eq!(sum, e.evaluate::<BigRational>(&x).unwrap());
        Ok(())
    })
}

/// `P_k(tY) = t^k P_k(Y)` and `P_k(−Y) = (−1)^k P_k(Y)`, exactly.
pub fn homogeneity() -> Result<(), String> {
    let forms = (1u32..=5).prop_flat_map(|k| polynomial(3, k, k, 5, 9));
    run((forms, point(3), rational(-9..=9, 1..=5)), |(e, y, t)| {
        let p = HomogeneousPolynomial::from_expression(&e).unwrap();
        let k = p.degree() as i32;
        let ty: Vec<BigRational> = y.iter().map(|v| v * &t).collect();
        let neg: Vec<BigRational> = y.iter().map(|v| -v).collect();
        let py: BigRational = p.evaluate(&y).unwrap();
        prop_assert_eq!(p.evaluate::<BigRational>(&ty).unwrap(), num_traits::pow(t.clone(), k as usize) * &py);
        let sign = if k % 2 == 0 { BigRational::one() } else { -BigRational::one() };
        prop_assert_eq!(p.evaluate::<BigRational>(&neg).unwrap(), sign * py);
        Ok(())
    })
}

/// A constrained problem with a critical point at `x0`: `G(x0) = 0` and
/// `f = f_r − ∇f_r(x0)·(X − x0) + λ G`, so `∇f(x0) = λ ∇G(x0)`.
#[derive(Debug, Clone)]
pub struct Planted {
    pub problem: ConstrainedProblem,
    pub x0: Vec<BigRational>,
}

pub fn planted(d: usize) -> impl Strategy<Value = Planted> {
    let g = (polynomial(d, 2, 2, 3, 3), prop::collection::vec(rational(-4..=4, 1..=2), d));
    let f = (polynomial(d, 2, 2, 5, 3), polynomial(d, 3, 3, 3, 1));
    (point(d), g, f, rational(-3..=3, 1..=2)).prop_map(move |(x0, (gq, gl), (fq, fc), lambda)| {
        let mut g = &gq + &affine(&gl, &x0);
        let g0 = g.evaluate::<BigRational>(&x0).unwrap();
        g = &g - &constant(g0, d);
        let fr = &fq + &fc;
        let grad = grad_at(&fr, &x0);
        let f = &(&fr - &affine(&grad, &x0)) + &g.scale(&lambda);
        let problem = ConstrainedProblem::new(names(d), f, vec![g]).unwrap();
        Planted { problem, x0 }
    })
}

fn hessian_signs(p: &ConstrainedProblem, x: &[f64], chart: &Chart) -> Option<(usize, usize)> {
    let c = classify_at(p, x, chart, &ClassifyConfig::default()).ok()?;
    let eig = c.evidence.first()?.eigenvalues.clone()?;
    if eig.iter().any(|e| e.abs() < 1e-6) {
        return None;
    }
    Some((eig.iter().filter(|e| **e > 0.0).count(), eig.iter().filter(|e| **e < 0.0).count()))
}

/// At a point valid in two charts the reduced Hessians have the same inertia.
pub fn chart_independence() -> Result<(), String> {
    run(planted(3), |pl| {
        let x = to_f64(&pl.x0);
        let charts = enumerate_charts(&pl.problem, &x, DEFAULT_RANK_TOL);
        prop_assume!(charts.len() >= 2);
        let signs: Vec<Option<(usize, usize)>> = charts.iter().map(|c| hessian_signs(&pl.problem, &x, c)).collect();
        prop_assume!(signs.iter().all(Option::is_some));
        for s in &signs[1..] {
            prop_assert_eq!(s, &signs[0]);
        }
        Ok(())
    })
}

/// Projects `x` onto `{G = 0}` along the gradient.
fn project(g: &Expression, grad: &[Expression], mut x: Vec<f64>) -> Option<Vec<f64>> {
    for _ in 0..30 {
        let v: f64 = g.evaluate(&x).ok()?;
        let n: Vec<f64> = grad.iter().map(|e| e.evaluate(&x).unwrap()).collect();
        let nn: f64 = n.iter().map(|a| a * a).sum();
        if nn == 0.0 {
            return None;
        }
        if v.abs() <= 1e-15 * (1.0 + g.magnitude_at(&x)) {
            return Some(x);
        }
        for (xi, ni) in x.iter_mut().zip(&n) {
            *xi -= v * ni / nn;
        }
    }
    None
}

/// Feasible samples within `radius` of `x0`.
pub fn feasible_samples(p: &ConstrainedProblem, x0: &[f64], radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = x0.len();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 20 * count {
        attempts += 1;
        let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-3 {
            continue;
        }
        let r = radius * rng.gen_range(0.05..1.0);
        let x: Vec<f64> = x0.iter().zip(&dir).map(|(a, b)| a + r * b / norm).collect();
        let x = match p.constraints().first() {
            None => Some(x),
            Some(g) => project(g, &p.constraint_jacobian_exprs()[0], x),
        };
        if let Some(x) = x {
            let dist = x.iter().zip(x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if dist <= radius && dist > 0.0 {
                out.push(x);
            }
        }
    }
    out
}

/// Checks a verdict against dense sampling of `f` near `x0`.
pub fn sampling_agrees(p: &ConstrainedProblem, x0: &[f64], verdict: Verdict, seed: u64) -> Result<(), String> {
    let f0: f64 = p.objective().evaluate(x0).unwrap();
    let samples = feasible_samples(p, x0, 1e-2, 2000, seed);
    if samples.len() < 2000 {
        return Err(format!("only {} feasible samples", samples.len()));
    }
    let deltas: Vec<f64> = samples.iter().map(|x| p.objective().evaluate::<f64>(x).unwrap() - f0).collect();
    let lo = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ok = match verdict {
        Verdict::StrictMin => lo > -1e-12,
        Verdict::StrictMax => hi < 1e-12,
        Verdict::Saddle => lo < 0.0 && hi > 0.0,
        _ => true,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("{verdict:?} but sampled f - f0 spans [{lo:e}, {hi:e}]"))
    }
}

/// Planted points decided by the Hessian, plus separable even-power sums
/// decided by the higher-order test.
pub fn sampling_oracle() -> Result<(), String> {
    let separable = (2usize..=3)
        .prop_flat_map(|d| prop::collection::vec((prop_oneof![Just(-1i64), Just(1)], 1i64..=3, 1u32..=3), d))
        .prop_map(|parts| {
            let d = parts.len();
            let terms = parts.iter().enumerate().map(|(i, (s, c, p))| {
                let mut e = vec![0; d];
                e[i] = 2 * p;
                (e, ratio(s * c, 1))
            });
            let f = Expression::from_terms(d, terms).unwrap();
            Planted { problem: ConstrainedProblem::new(names(d), f, vec![]).unwrap(), x0: vec![BigRational::zero(); d] }
        });
    let instances = prop_oneof![planted(2), planted(3), separable];
    run((instances, any::<u64>()), |(pl, seed)| {
        let x = to_f64(&pl.x0);
        let p = &pl.problem;
        let chart = if p.m() == 0 {
            Chart::new(vec![], p.d())
        } else {
            match enumerate_charts(p, &x, DEFAULT_RANK_TOL).into_iter().next() {
                Some(c) => c,
                None => return Err(TestCaseError::reject("no valid chart")),
            }
        };
        let c = classify_at(p, &x, &chart, &ClassifyConfig::default()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assume!(matches!(c.verdict, Verdict::StrictMin | Verdict::StrictMax | Verdict::Saddle));
        if c.leading_order == Some(2) {
            // Sampling at radius 1e-2 only resolves curvature well above the cubic terms.
            let eig = c.evidence[0].eigenvalues.clone().unwrap_or_default();
            prop_assume!(eig.iter().all(|e| e.abs() >= 0.5));
        }
        sampling_agrees(p, &x, c.verdict, seed).map_err(TestCaseError::fail)
    })
}

/// A nonzero odd-degree form takes both signs on the sphere.
pub fn odd_degree_straddle() -> Result<(), String> {
    let forms = (2usize..=3, prop_oneof![Just(1u32), Just(3u32)]).prop_flat_map(|(d, k)| polynomial(d, k, k, 4, 5));
    run(forms, |e| {
        prop_assume!(!e.is_zero());
        let d = e.nvars();
        let p = HomogeneousPolynomial::from_expression(&e).unwrap();
        let s = SubsidiaryProblem::on_sphere(names(d), p);
        let img = solve_subsidiary(&s, &ClassifyConfig::default()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(img.a < 0.0 && img.b > 0.0, "image [{}, {}]", img.a, img.b);
        prop_assert!((img.a + img.b).abs() <= 1e-8 * img.b.abs().max(1.0));
        Ok(())
    })
}

pub type Suite = (&'static str, fn() -> Result<(), String>);

pub const SUITES: [Suite; 6] = [
    ("symbolic vs finite-difference derivatives", derivative_vs_finite_difference),
    ("Taylor reconstruction", taylor_reconstruction),
    ("homogeneity", homogeneity),
    ("chart independence of Hessian signs", chart_independence),
    ("sampling oracle", sampling_oracle),
    ("odd-degree sign straddle", odd_degree_straddle),
];
