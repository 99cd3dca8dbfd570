//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fail.

mod common;

use critex_core::charts::{implicit_jet, reduced_derivative_tensor, reduced_hessian, Chart, ConstrainedProblem};
use critex_core::classify::{
    classify_at, classify_family, classify_points, solve_subsidiary, ClassifyConfig, SubsidiaryProblem, Verdict,
};
use critex_core::expr::{parse_problem, HomogeneousPolynomial};
use critex_core::lagrange::{
    bordered_hessian, bordered_hessian_oracle, bordered_minors, multipliers, recover_multipliers, OracleVerdict,
};
use critex_core::scalar::{ratio, QuadraticSurd};
use critex_core::solver::{solve, CriticalPoint, SearchConfig};
use num_rational::BigRational;
use num_traits::Zero;

type Check = Result<(), String>;

const EX_2_1: &str = "vars x y; objective x*y; constraint -2*x^3 + 15*x^2*y + 11*y^3 - 24*y;";
const EX_2_4: &str = "vars x1 x2; objective x2^6 + x1^3 + 4*x1 + 4*x2; constraint x1^5 + x2^4 + x1 + x2;";
const EX_2_5: &str =
    "vars x1 x2; objective x2^6 + x1^3 + 2*x1^2 - x2^2 + 4*x1 + 4*x2; constraint x1^5 + x2^4 + x1 + x2;";
const EX_4_1: &str = "vars x y z; objective x*y*z; constraint -2*x^3 + 15*x^2*y + 11*y^3 - 24*y;";
const EX_4_2: &str = "vars u x v y; objective (x - u)^2 + (y - v)^2; \
                      constraint x^2/4 + y^2/9 - 1; constraint u^2 + v^2 - 6*u + 10*v + 33;";

fn problem(text: &str) -> ConstrainedProblem {
    ConstrainedProblem::from_definition(&parse_problem(text).expect("parses")).expect("valid problem")
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn near(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn find<'a>(points: &'a [CriticalPoint], x: &[f64], tol: f64) -> Option<(usize, &'a CriticalPoint)> {
    points.iter().enumerate().find(|(_, p)| dist(&p.coordinates, x) <= tol)
}

/// Exact derivative `∂^r J/∂u_0^r` at a rational point.
fn derivative(p: &ConstrainedProblem, x: &[BigRational], dependent: Vec<usize>, r: u32) -> BigRational {
    let chart = Chart::new(dependent, p.d());
    let jet = implicit_jet(p, &chart, x, r.max(2), 1e-9, 1e-9).expect("chart valid");
    reduced_derivative_tensor(p, &jet, r).expect("order available").get(&vec![0; r as usize])
}

fn zeros(d: usize) -> Vec<BigRational> {
    vec![BigRational::zero(); d]
}

fn c1() -> Check {
    let p = problem(EX_2_1);
    let (report, _) = solve(&p, &SearchConfig::cube(2, -3.0, 3.0)).map_err(|e| e.to_string())?;
    let pts = &report.points;
    // Oracle: 17ρ⁴ − 58ρ² + 32 = 0 is quadratic in ρ², ρ² = (58 ± √1188)/34.
    let mut expected: Vec<(Vec<f64>, Verdict)> =
        vec![(vec![0.0, 0.0], Verdict::StrictMax), (vec![1.0, 1.0], Verdict::StrictMax), (vec![-1.0, -1.0], Verdict::StrictMax)];
    for s in [1.0, -1.0] {
        let rho2 = (58.0 + s * 1188f64.sqrt()) / 34.0;
        for rho in [rho2.sqrt(), -rho2.sqrt()] {
            expected.push((vec![rho, 17.0 / 22.0 * rho.powi(3) - 20.0 / 11.0 * rho], Verdict::StrictMin));
        }
    }
    ensure(pts.len() == 7, || format!("{} points found", pts.len()))?;
    let classes = classify_points(&p, pts, &ClassifyConfig::default());
    for (x, want) in &expected {
        let (i, _) = find(pts, x, 1e-6).ok_or_else(|| format!("missing {x:?}"))?;
        let got = classes[i].as_ref().map_err(|e| e.to_string())?.verdict;
        ensure(got == *want, || format!("{x:?}: {got:?}, expected {want:?}"))?;
    }
    let j4 = derivative(&p, &zeros(2), vec![1], 4);
    ensure(j4 == ratio(-2, 1), || format!("J''''(0) = {j4}"))?;
    let (i, _) = find(pts, &[0.0, 0.0], 1e-6).expect("checked above");
    let lead = classes[i].as_ref().expect("classified").leading_order;
    ensure(lead == Some(4), || format!("origin decided at order {lead:?}"))
}

fn c2() -> Check {
    let p = problem(EX_2_4);
    let d: Vec<BigRational> = (1..=3).map(|r| derivative(&p, &zeros(2), vec![1], r)).collect();
    ensure(d == [ratio(0, 1), ratio(0, 1), ratio(6, 1)], || format!("Example 2.4 J', J'', J''' = {d:?}"))?;
    let v = classify_at(&p, &[0.0, 0.0], &Chart::new(vec![1], 2), &ClassifyConfig::default()).map_err(|e| e.to_string())?;
    ensure(v.verdict == Verdict::Saddle, || format!("Example 2.4 origin {:?}", v.verdict))?;
    let p = problem(EX_2_5);
    let j2 = derivative(&p, &zeros(2), vec![1], 2);
    ensure(j2 == ratio(2, 1), || format!("Exercise 2.5 J'' = {j2}"))?;
    let v = classify_at(&p, &[0.0, 0.0], &Chart::new(vec![1], 2), &ClassifyConfig::default()).map_err(|e| e.to_string())?;
    ensure(v.verdict == Verdict::StrictMin, || format!("Exercise 2.5 origin {:?}", v.verdict))
}

fn c3() -> Check {
    let p = problem(EX_4_1);
    let search = SearchConfig::cube(3, -3.0, 3.0);
    let (report, _) = solve(&p, &search).map_err(|e| e.to_string())?;
    let cfg = ClassifyConfig::default();
    let c = 2.0 * 66f64.sqrt() / 11.0;
    for y0 in [c, -c] {
        let (_, cp) = find(&report.points, &[0.0, y0, 0.0], 1e-6).ok_or_else(|| format!("no saddle at y = {y0}"))?;
        let x = &cp.coordinates;
        ensure(near(x[1], y0, 1e-9), || format!("saddle y = {}", x[1]))?;
        let chart = Chart::new(vec![1], 3);
        let jet = implicit_jet(&p, &chart, x, 2, 1e-9, 1e-9).map_err(|e| e.to_string())?;
        let h = reduced_hessian(&p, &jet);
        let ok = near(h[0][0], 0.0, 1e-9) && near(h[1][1], 0.0, 1e-9) && near(h[0][1], y0, 1e-9) && near(h[1][0], y0, 1e-9);
        ensure(ok, || format!("Hessian at y = {y0}: {h:?}"))?;
        let v = classify_at(&p, x, &chart, &cfg).map_err(|e| e.to_string())?.verdict;
        ensure(v == Verdict::Saddle, || format!("y = {y0}: {v:?}"))?;
    }
    ensure(report.families.len() == 1, || format!("{} families", report.families.len()))?;
    let fam = &report.families[0];
    for (s, t) in fam.samples.iter().zip(&fam.tangents) {
        let on_axis = s[0].abs() < 1e-9 && s[1].abs() < 1e-9;
        let along_z = t.iter().any(|v| v[2].abs() > 1.0 - 1e-9);
        ensure(on_axis && along_z, || format!("family sample {s:?} with tangents {t:?}"))?;
    }
    for z0 in [0.5, -0.5, 1.0, -1.0, 2.0, -2.0] {
        let x = [BigRational::zero(), BigRational::zero(), critex_core::scalar::f64_to_rational(z0)];
        let j = derivative(&p, &x, vec![1], 4);
        let want = -2.0 * z0;
        ensure(near(critex_core::scalar::rational_to_f64(&j), want, 1e-9), || format!("J_1111 at z = {z0}: {j}"))?;
        let v = classify_at(&p, &[0.0, 0.0, z0], &Chart::new(vec![1], 3), &cfg).map_err(|e| e.to_string())?.verdict;
        let want = if z0 > 0.0 { Verdict::NonStrictMax } else { Verdict::NonStrictMin };
        ensure(v == want, || format!("z = {z0}: {v:?}"))?;
    }
    let fc = classify_family(&p, fam, &search, &cfg);
    for s in &fc.samples {
        let want = if s.point[2] > 0.0 { Verdict::NonStrictMax } else { Verdict::NonStrictMin };
        ensure(s.verdict == want, || format!("family sample z = {}: {:?}", s.point[2], s.verdict))?;
    }
    let origin = classify_at(&p, &[0.0; 3], &Chart::new(vec![1], 3), &cfg).map_err(|e| e.to_string())?;
    ensure(origin.verdict == Verdict::Saddle && origin.leading_order == Some(5), || {
        format!("origin {:?} at order {:?}", origin.verdict, origin.leading_order)
    })
}

fn c4() -> Check {
    let p = problem(EX_4_2);
    let (report, _) = solve(&p, &SearchConfig::cube(4, -7.0, 7.0)).map_err(|e| e.to_string())?;
    ensure(report.points.len() == 4, || format!("{} points", report.points.len()))?;
    // Point, f, distance, multipliers.
    type Row = ([f64; 4], f64, f64, [f64; 2]);
    let table: [Row; 4] = [
        ([3.41407, -0.580423, -5.91025, 2.87089], 93.065, 9.647, [-27.528, -9.647]),
        ([2.58593, -0.580423, -4.08975, 2.87089], 58.477, 7.647, [-21.821, 7.647]),
        ([3.64566, 0.982085, -5.76362, -2.61341], 17.019, 4.1253, [10.849, -4.1254]),
        ([2.35434, 0.982085, -4.23638, -2.61341], 4.5173, 2.1254, [5.5891, 2.1254]),
    ];
    for (x, fv, dv, lambda) in table {
        let (_, cp) = find(&report.points, &x, 1e-4).ok_or_else(|| format!("missing {x:?}"))?;
        let f: f64 = p.objective().evaluate(&cp.coordinates).expect("evaluates");
        ensure(near(f, fv, 1e-3) && near(f.sqrt(), dv, 1e-3), || format!("f = {f} at {x:?}"))?;
        let mv = recover_multipliers(&p, cp, &cp.chart).map_err(|e| e.to_string())?;
        let ok = mv.lambda.iter().zip(lambda).all(|(a, b)| near(*a, b, 1e-3));
        ensure(ok, || format!("multipliers {:?} at {x:?}, expected {lambda:?}", mv.lambda))?;
    }
    Ok(())
}

fn c5() -> Check {
    // Variables, objective, extra constraints, expected image.
    type Case<'a> = (&'a [&'a str], &'a str, &'a [&'a str], f64, f64);
    let cases: [Case; 5] = [
        (&["x", "y", "z"], "5*x^2 + 3*y^2", &[], 0.0, 5.0),
        (&["x", "y", "z"], "5*x^2 + 3*y^2 + 7*z^2", &[], 3.0, 7.0),
        (&["x", "y", "z"], "x^2 + 2*x*y + y^2", &[], 0.0, 2.0),
        (&["x", "y", "z"], "x^4 + y^4", &["x + y"], 0.0, 0.5),
        (&["w", "x", "y", "z"], "x^2 + 2*x*y + y^2", &[], 0.0, 2.0),
    ];
    for (vars, obj, cons, a, b) in cases {
        let mut text = format!("vars {}; objective {obj};", vars.join(" "));
        for c in cons {
            text.push_str(&format!(" constraint {c};"));
        }
        let def = parse_problem(&text).map_err(|e| e.to_string())?;
        let form = HomogeneousPolynomial::from_expression(&def.objective).map_err(|e| e.to_string())?;
        let s = SubsidiaryProblem::on_sphere(def.variables.clone(), form).with_constraints(&def.constraints);
        let img = solve_subsidiary(&s, &ClassifyConfig::default()).map_err(|e| e.to_string())?;
        ensure(near(img.a, a, 1e-8) && near(img.b, b, 1e-8), || format!("{obj}: [{}, {}]", img.a, img.b))?;
    }
    Ok(())
}

fn c6() -> Check {
    let cases = [
        ("5*x^2 + 3*y^2 + x^2*y + 2*x*z^2 + z^3", "x y z", Verdict::Saddle),
        ("5*x^2 + 3*y^2 + x^2*y + 2*x*z^2 + 5*x^3*y + 7*x*z^3 + 3*z^4", "x y z", Verdict::StrictMin),
        ("5*x^2 + 3*y^2 + x*y*z + x^2*z^2 + 2*y^2*z^4", "x y z", Verdict::NonStrictMin),
        ("x2^4 - x1^4 - x2^8 + x1^10", "x1 x2", Verdict::Saddle),
        ("x2^4 - x1^4", "x1 x2", Verdict::Saddle),
        ("x2^4 - x1^4 + 3*x1^8 - 5*x2^10", "x1 x2", Verdict::Saddle),
    ];
    for (f, vars, want) in cases {
        let p = problem(&format!("vars {vars}; objective {f};"));
        let c = classify_at(&p, &vec![0.0; p.d()], &Chart::new(vec![], p.d()), &ClassifyConfig::default())
            .map_err(|e| e.to_string())?;
        ensure(c.verdict == want, || format!("{f}: {:?}, expected {want:?}", c.verdict))?;
    }
    Ok(())
}

fn c7() -> Check {
    type Q66 = QuadraticSurd<66>;
    let p = problem(EX_4_1);
    let chart = Chart::new(vec![1], 3);
    let expected = Q66::rational(ratio(363096, 1331));
    let mut failures = Vec::new();
    for s in [2, -2] {
        let x = [Q66::rational(ratio(0, 1)), Q66::new(ratio(0, 1), ratio(s, 11)), Q66::rational(ratio(0, 1))];
        let lambda = multipliers(&p, &x, &chart).map_err(|e| e.to_string())?;
        let b = bordered_hessian(&p, &x, &lambda, &chart);
        let minors = bordered_minors(&b, 1, 3);
        let g4 = &minors.iter().find(|(j, _)| *j == 4).ok_or("no 4x4 minor")?.1;
        if *g4 != expected {
            failures.push(format!("Gamma_4 at y = {s}*sqrt(66)/11 is {} + {}*sqrt(66), expected 363096/1331", g4.a, g4.b));
        }
    }
    let q = problem(EX_2_1);
    let chart = Chart::new(vec![1], 2);
    let origin = CriticalPoint {
        coordinates: vec![0.0, 0.0],
        chart: chart.clone(),
        constraint_residual: 0.0,
        gradient_residual: 0.0,
        jacobian_rank: 1,
        family_flag: false,
        family_id: None,
    };
    let mv = recover_multipliers(&q, &origin, &chart).map_err(|e| e.to_string())?;
    let rep = bordered_hessian_oracle(&q, &origin, &mv);
    let g3_zero = rep.minors.iter().any(|(j, v)| *j == 3 && *v == 0.0);
    if !g3_zero || rep.verdict != OracleVerdict::Indeterminate {
        failures.push(format!("Example 2.1 origin minors {:?}, oracle {:?}", rep.minors, rep.verdict));
    }
    let v = classify_at(&q, &[0.0, 0.0], &chart, &ClassifyConfig::default()).map_err(|e| e.to_string())?.verdict;
    if v != Verdict::StrictMax {
        failures.push(format!("Example 2.1 origin classified {v:?}"));
    }
    ensure(failures.is_empty(), || failures.join("; "))
}

fn c8() -> Check {
    let failed: Vec<String> = common::SUITES
        .iter()
        .filter_map(|(name, suite)| suite().err().map(|e| format!("{name}: {e}")))
        .collect();
    ensure(failed.is_empty(), || failed.join("; "))
}

fn main() {
    type Criterion = (&'static str, fn() -> Check);
    let criteria: [Criterion; 8] = [
        ("C1 Example 2.1 end-to-end", c1),
        ("C2 Example 2.4 and Exercise 2.5 at the origin", c2),
        ("C3 Example 4.1 saddles, z-axis family and origin", c3),
        ("C4 Example 4.2 points, values and multipliers", c4),
        ("C5 subsidiary images", c5),
        ("C6 higher-derivative verdicts", c6),
        ("C7 bordered-Hessian oracle minors", c7),
        ("C8 property suites", c8),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = std::time::Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS {name} ({secs:.1} s)"),
            Err(e) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1} s): {e}");
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
