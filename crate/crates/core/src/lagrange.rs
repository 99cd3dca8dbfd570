//! Lagrange multipliers recovered after the fact, and a bordered-Hessian
//! cross-check.
//!
//! Neither is used to find or classify points. Multipliers come from the
//! chart's inverse minor, `λ = −f_v·(G'_v)⁻¹`, and the bordered Hessian of
//! `L = f + Σ λ_j G_j` gives an independent verdict where its minors are
//! decisive.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charts::{Chart, ConstrainedProblem};
use crate::linalg::{determinant, hadamard_bound, inverse, Matrix};
use crate::scalar::Scalar;
use crate::solver::CriticalPoint;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LagrangeError {
    #[error("chart minor is singular at the point")]
    SingularMinor,
    #[error("stationarity residual {residual:e} exceeds {bound:e}")]
    Stationarity { residual: f64, bound: f64 },
    #[error("chart does not match the problem")]
    ChartMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierVector {
    pub lambda: Vec<f64>,
    pub point: Vec<f64>,
    pub chart: Chart,
    /// `‖∇f + Σ λ_j ∇G_j‖` over all coordinates.
    pub residual: f64,
}

/// `λ_c = −Σ_a f_{v_a}·[(G'_v)⁻¹]_{a c}` in any scalar type.
pub fn multipliers<T: Scalar>(p: &ConstrainedProblem, x: &[T], chart: &Chart) -> Result<Vec<T>, LagrangeError> {
    if chart.dependent().len() != p.m() {
        return Err(LagrangeError::ChartMismatch);
    }
    let grad = p.objective_gradient(x);
    let jac = p.constraint_jacobian(x);
    let inv = inverse(&chart.minor(&jac)).ok_or(LagrangeError::SingularMinor)?;
    let v = chart.dependent();
    Ok((0..p.m())
        .map(|c| (0..v.len()).fold(T::zero(), |acc, a| acc - grad[v[a]].clone() * inv[a][c].clone()))
        .collect())
}

/// `∇f + Σ λ_j ∇G_j` at `x`.
pub fn stationarity_residual<T: Scalar>(p: &ConstrainedProblem, x: &[T], lambda: &[T]) -> Vec<T> {
    let grad = p.objective_gradient(x);
    let jac = p.constraint_jacobian(x);
    (0..p.d())
        .map(|i| jac.iter().zip(lambda).fold(grad[i].clone(), |acc, (row, l)| acc + l.clone() * row[i].clone()))
        .collect()
}

/// Multipliers at a critical point, checked against stationarity in every
/// coordinate.
pub fn recover_multipliers(
    p: &ConstrainedProblem,
    cp: &CriticalPoint,
    chart: &Chart,
) -> Result<MultiplierVector, LagrangeError> {
    let x = &cp.coordinates;
    let lambda = multipliers(p, x, chart)?;
    let r = stationarity_residual(p, x, &lambda);
    let residual = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let gnorm = p.objective_gradient(x).iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
    let bound = 1e-6 * (1.0 + gnorm);
    if residual > bound {
        return Err(LagrangeError::Stationarity { residual, bound });
    }
    Ok(MultiplierVector { lambda, point: x.clone(), chart: chart.clone(), residual })
}

/// `[[0, G'], [G'ᵀ, Hess L]]` with the chart's dependent variables ordered
/// first, so the leading minors border the dependent block.
pub fn bordered_hessian<T: Scalar>(p: &ConstrainedProblem, x: &[T], lambda: &[T], chart: &Chart) -> Matrix<T> {
    let (m, d) = (p.m(), p.d());
    let order: Vec<usize> = chart.dependent().iter().chain(chart.independent()).copied().collect();
    let jac = p.constraint_jacobian(x);
    let mut hl = p.objective_hessian(x);
    for (l, hg) in lambda.iter().zip(p.constraint_hessians(x)) {
        for i in 0..d {
            for j in 0..d {
                hl[i][j] = hl[i][j].clone() + l.clone() * hg[i][j].clone();
            }
        }
    }
    let size = m + d;
    let mut b = vec![vec![T::zero(); size]; size];
    for a in 0..m {
        for (k, &i) in order.iter().enumerate() {
            b[a][m + k] = jac[a][i].clone();
            b[m + k][a] = jac[a][i].clone();
        }
    }
    for (r, &i) in order.iter().enumerate() {
        for (c, &j) in order.iter().enumerate() {
            b[m + r][m + c] = hl[i][j].clone();
        }
    }
    b
}

/// `Γ_j` for `j = 2m+1, …, m+d`: leading principal minors of the bordered
/// Hessian.
pub fn bordered_minors<T: Scalar>(b: &Matrix<T>, m: usize, d: usize) -> Vec<(usize, T)> {
    (2 * m + 1..=m + d)
        .map(|j| {
            let sub: Matrix<T> = b[..j].iter().map(|row| row[..j].to_vec()).collect();
            (j, determinant(&sub))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleVerdict {
    Min,
    Max,
    Saddle,
    Indeterminate,
}

/// Sign rule on `Γ_{2m+1}, …, Γ_{m+d}` (signs in `{−1, 0, 1}`).
///
/// All nonzero: `sign Γ_j = (−1)^m` for every `j` is a minimum,
/// `sign Γ_{2m+r} = (−1)^{m+r}` a maximum, anything else a saddle. With a
/// vanishing minor the full determinant still rules out whichever of the
/// two definite patterns it contradicts; if it contradicts both the point
/// is a saddle, otherwise the rule is silent.
pub fn bordered_rule(signs: &[i8], m: usize) -> OracleVerdict {
    let n = signs.len();
    if n == 0 {
        return OracleVerdict::Indeterminate;
    }
    let parity = |e: usize| if e.is_multiple_of(2) { 1 } else { -1 };
    let full = signs[n - 1];
    if full == 0 {
        return OracleVerdict::Indeterminate;
    }
    if signs.iter().all(|&s| s != 0) {
        if signs.iter().all(|&s| s == parity(m)) {
            return OracleVerdict::Min;
        }
        if signs.iter().enumerate().all(|(r, &s)| s == parity(m + r + 1)) {
            return OracleVerdict::Max;
        }
        return OracleVerdict::Saddle;
    }
    if full != parity(m) && full != parity(m + n) {
        OracleVerdict::Saddle
    } else {
        OracleVerdict::Indeterminate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorderedReport {
    /// `(j, Γ_j)`.
    pub minors: Vec<(usize, f64)>,
    pub signs: Vec<i8>,
    pub verdict: OracleVerdict,
}

/// Signs with a zero band of `1e−9` times the Hadamard bound of each minor
/// for inexact scalars; exact signs otherwise.
pub fn bordered_signs<T: Scalar>(b: &Matrix<T>, minors: &[(usize, T)]) -> Vec<i8> {
    minors
        .iter()
        .map(|(j, g)| {
            if !T::is_exact() {
                let sub: Matrix<T> = b[..*j].iter().map(|row| row[..*j].to_vec()).collect();
                if g.to_f64().abs() <= 1e-9 * hadamard_bound(&sub) {
                    return 0;
                }
            }
            match g.signum_cmp() {
                Ordering::Less => -1,
                Ordering::Equal => 0,
                Ordering::Greater => 1,
            }
        })
        .collect()
}

/// Bordered-Hessian verdict at a critical point with recovered multipliers.
pub fn bordered_hessian_oracle(p: &ConstrainedProblem, cp: &CriticalPoint, lambda: &MultiplierVector) -> BorderedReport {
    let b = bordered_hessian(p, &cp.coordinates, &lambda.lambda, &lambda.chart);
    let minors = bordered_minors(&b, p.m(), p.d());
    let signs = bordered_signs(&b, &minors);
    BorderedReport { verdict: bordered_rule(&signs, p.m()), minors, signs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_problem;
    use crate::scalar::{ratio, QuadraticSurd};
    use num_rational::BigRational;

    fn problem(text: &str) -> ConstrainedProblem {
        ConstrainedProblem::from_definition(&parse_problem(text).unwrap()).unwrap()
    }

    fn point(x: &[f64], chart: Chart) -> CriticalPoint {
        CriticalPoint {
            coordinates: x.to_vec(),
            chart,
            constraint_residual: 0.0,
            gradient_residual: 0.0,
            jacobian_rank: x.len(),
            family_flag: false,
            family_id: None,
        }
    }

    const EX21: &str = "vars x y; objective x*y; constraint -2*x^3 + 15*x^2*y + 11*y^3 - 24*y;";

    #[test]
    fn multiplier_at_one_one_is_exact() {
        let p = problem(EX21);
        let q = [ratio(1, 1), ratio(1, 1)];
        let l = multipliers(&p, &q, &Chart::new(vec![1], 2)).unwrap();
        assert_eq!(l, vec![ratio(-1, 24)]);
        // The other chart gives the same multiplier.
        assert_eq!(multipliers(&p, &q, &Chart::new(vec![0], 2)).unwrap(), l);
        let mv = recover_multipliers(&p, &point(&[1.0, 1.0], Chart::new(vec![1], 2)), &Chart::new(vec![1], 2)).unwrap();
        assert!((mv.lambda[0] + 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn constant_objective_has_zero_multipliers() {
        let p = problem("vars x y; objective 0; constraint x^2 + y^2 - 1;");
        let mv = recover_multipliers(&p, &point(&[0.6, 0.8], Chart::new(vec![1], 2)), &Chart::new(vec![1], 2)).unwrap();
        assert_eq!(mv.lambda, vec![0.0]);
    }

    #[test]
    fn non_stationary_point_is_rejected() {
        let p = problem(EX21);
        let err = recover_multipliers(&p, &point(&[2.0, 0.5], Chart::new(vec![1], 2)), &Chart::new(vec![1], 2));
        assert!(matches!(err, Err(LagrangeError::Stationarity { .. })));
    }

    #[test]
    fn bordered_verdicts_on_the_cubic_constraint() {
        let p = problem(EX21);
        let chart = Chart::new(vec![1], 2);
        let cp = point(&[1.0, 1.0], chart.clone());
        let mv = recover_multipliers(&p, &cp, &chart).unwrap();
        assert_eq!(bordered_hessian_oracle(&p, &cp, &mv).verdict, OracleVerdict::Max);
        let origin = point(&[0.0, 0.0], chart.clone());
        let mv = recover_multipliers(&p, &origin, &chart).unwrap();
        let rep = bordered_hessian_oracle(&p, &origin, &mv);
        assert_eq!(rep.minors, vec![(3, 0.0)]);
        assert_eq!(rep.verdict, OracleVerdict::Indeterminate);
    }

    #[test]
    fn exact_minors_in_the_quadratic_field() {
        type Q66 = QuadraticSurd<66>;
        let p = problem("vars x y z; objective x*y*z; constraint -2*x^3 + 15*x^2*y + 11*y^3 - 24*y;");
        let chart = Chart::new(vec![1], 3);
        let y0 = Q66::new(BigRational::from_integer(0.into()), ratio(2, 11));
        let x = [Q66::rational(ratio(0, 1)), y0, Q66::rational(ratio(0, 1))];
        let lambda = multipliers(&p, &x, &chart).unwrap();
        assert_eq!(lambda[0], Q66::rational(ratio(0, 1)));
        let b = bordered_hessian(&p, &x, &lambda, &chart);
        let minors = bordered_minors(&b, 1, 3);
        assert_eq!(minors[0].1, Q66::rational(ratio(0, 1)));
        // Independent of ordering: det = det[[0, G_y], [G_y, 0]]·det[[0, y₀], [y₀, 0]] = 48²·y₀².
        assert_eq!(minors[1].1, Q66::rational(ratio(55296, 11)));
        assert_eq!(bordered_rule(&bordered_signs(&b, &minors), 1), OracleVerdict::Saddle);
    }

    #[test]
    fn sign_rule_table() {
        // m = 1, n = 2: min needs (−,−), max needs (+,−).
        assert_eq!(bordered_rule(&[-1, -1], 1), OracleVerdict::Min);
        assert_eq!(bordered_rule(&[1, -1], 1), OracleVerdict::Max);
        assert_eq!(bordered_rule(&[1, 1], 1), OracleVerdict::Saddle);
        assert_eq!(bordered_rule(&[0, 1], 1), OracleVerdict::Saddle);
        assert_eq!(bordered_rule(&[0, -1], 1), OracleVerdict::Indeterminate);
        assert_eq!(bordered_rule(&[0], 1), OracleVerdict::Indeterminate);
        // Unconstrained: plain leading minors.
        assert_eq!(bordered_rule(&[1, 1], 0), OracleVerdict::Min);
        assert_eq!(bordered_rule(&[-1, 1], 0), OracleVerdict::Max);
    }
}
