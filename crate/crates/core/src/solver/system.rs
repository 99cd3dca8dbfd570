//! Denominator-cleared critical systems and the Newton iteration.

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::Zero;

use crate::charts::{Chart, ConstrainedProblem};
use crate::expr::Expression;
use crate::scalar::{snap_rational, Scalar};

/// Largest denominator tried when snapping a singular root to a rational.
pub const SNAP_MAX_DENOMINATOR: u64 = 1000;

/// A polynomial flattened for fast `f64` evaluation.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledPoly {
    pub fn new(e: &Expression) -> Self {
        let terms = e
            .terms()
            .map(|(k, c)| {
                let factors = k.iter().enumerate().filter(|(_, &p)| p > 0).map(|(i, &p)| (i, p as i32)).collect();
                (c.to_f64(), factors)
            })
            .collect();
        Self { terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, f)| f.iter().fold(*c, |acc, &(i, p)| acc * x[i].powi(p)))
            .sum()
    }

    /// Sum of absolute term values; the scale against which a residual is judged.
    pub fn magnitude(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, f)| f.iter().fold(c.abs(), |acc, &(i, p)| acc * x[i].abs().powi(p)))
            .sum()
    }
}

/// Determinant of a matrix of polynomials by cofactor expansion.
pub fn symbolic_determinant(m: &[Vec<Expression>], nvars: usize) -> Expression {
    let n = m.len();
    match n {
        0 => Expression::one(nvars),
        1 => m[0][0].clone(),
        _ => {
            let mut acc = Expression::zero(nvars);
            for (col, entry) in m[0].iter().enumerate() {
                if entry.is_zero() {
                    continue;
                }
                let sub: Vec<Vec<Expression>> = m[1..]
                    .iter()
                    .map(|row| row.iter().enumerate().filter(|(j, _)| *j != col).map(|(_, e)| e.clone()).collect())
                    .collect();
                let term = entry * &symbolic_determinant(&sub, nvars);
                acc = if col % 2 == 0 { &acc + &term } else { &acc - &term };
            }
            acc
        }
    }
}

/// The square system `{det·J_i = 0, G = 0}` of one chart, with its Jacobian.
///
/// With `adj` the adjugate of the minor `G'_v`,
/// `det·J_i = det·f_{u_i} − Σ_{a,c} f_{v_a} adj[a][c] G_{c,u_i}` is a
/// polynomial. In the over-determined or square case (`m ≥ d`) the system is
/// just `G = 0`.
#[derive(Debug, Clone)]
pub struct CriticalSystem {
    chart: Chart,
    equations: Vec<Expression>,
    compiled: Vec<CompiledPoly>,
    jacobian: Vec<Vec<CompiledPoly>>,
    det: CompiledPoly,
    gradient_count: usize,
}

impl CriticalSystem {
    pub fn new(p: &ConstrainedProblem, chart: &Chart) -> Self {
        let d = p.d();
        let m = p.m();
        let mut equations = Vec::with_capacity(d.max(m));
        let det_expr;
        if m >= d {
            det_expr = if m == d {
                symbolic_determinant(p.constraint_jacobian_exprs(), d)
            } else {
                Expression::one(d)
            };
        } else {
            let jac = p.constraint_jacobian_exprs();
            let v = chart.dependent();
            let u = chart.independent();
            let minor: Vec<Vec<Expression>> = jac.iter().map(|row| v.iter().map(|&j| row[j].clone()).collect()).collect();
            det_expr = symbolic_determinant(&minor, d);
            // adj[a][c] = (−1)^{a+c} det(minor without row c and column a)
            let adj: Vec<Vec<Expression>> = (0..m)
                .map(|a| {
                    (0..m)
                        .map(|c| {
                            let sub: Vec<Vec<Expression>> = minor
                                .iter()
                                .enumerate()
                                .filter(|(r, _)| *r != c)
                                .map(|(_, row)| row.iter().enumerate().filter(|(k, _)| *k != a).map(|(_, e)| e.clone()).collect())
                                .collect();
                            let det = symbolic_determinant(&sub, d);
                            if (a + c) % 2 == 0 { det } else { -&det }
                        })
                        .collect()
                })
                .collect();
            let grad = p.objective_gradient_exprs();
            for &ui in u {
                let mut eq = &det_expr * &grad[ui];
                for (a, &va) in v.iter().enumerate() {
                    for (c, row) in jac.iter().enumerate() {
                        let t = &(&grad[va] * &adj[a][c]) * &row[ui];
                        eq = &eq - &t;
                    }
                }
                equations.push(eq);
            }
        }
        let gradient_count = equations.len();
        equations.extend(p.constraints().iter().cloned());
        let compiled = equations.iter().map(CompiledPoly::new).collect();
        let jacobian = equations
            .iter()
            .map(|e| e.gradient().iter().map(CompiledPoly::new).collect())
            .collect();
        Self { chart: chart.clone(), equations, compiled, jacobian, det: CompiledPoly::new(&det_expr), gradient_count }
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    /// Polynomial equations, cleared reduced-gradient components first.
    pub fn equations(&self) -> &[Expression] {
        &self.equations
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.compiled.len(), self.compiled.iter().map(|e| e.eval(x)))
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let rows = self.jacobian.len();
        let cols = x.len();
        DMatrix::from_fn(rows, cols, |i, j| self.jacobian[i][j].eval(x))
    }

    pub fn det(&self, x: &[f64]) -> f64 {
        self.det.eval(x)
    }

    /// Largest `|F_i| / (1 + Σ|terms of F_i|)`.
    pub fn scaled_residual(&self, x: &[f64]) -> f64 {
        self.compiled
            .iter()
            .map(|e| e.eval(x).abs() / (1.0 + e.magnitude(x)))
            .fold(0.0, f64::max)
    }

    /// Raw and scaled reduced-gradient residuals `|J_i| = |det·J_i| / |det|`.
    pub fn gradient_residual(&self, x: &[f64]) -> (f64, f64) {
        let det = self.det(x).abs();
        let mut raw: f64 = 0.0;
        let mut scaled: f64 = 0.0;
        for e in &self.compiled[..self.gradient_count] {
            let v = e.eval(x).abs();
            raw = raw.max(v / det);
            scaled = scaled.max(v / (det + e.magnitude(x)));
        }
        (raw, scaled)
    }

    /// Numerical rank of the system Jacobian and its null directions.
    pub fn rank_and_null_space(&self, x: &[f64], rel_tol: f64) -> (usize, Vec<Vec<f64>>) {
        rank_and_null_space(&self.jacobian(x), rel_tol)
    }

    /// Damped Newton with a pseudo-inverse step. Returns the final iterate
    /// when the scaled residual falls below `target`.
    pub fn newton(&self, x0: &[f64], max_iter: usize, target: f64) -> Option<Vec<f64>> {
        let mut x = x0.to_vec();
        let mut fx = self.eval(&x);
        let mut merit = fx.norm_squared();
        for _ in 0..max_iter {
            if self.scaled_residual(&x) <= 1e-15 {
                break;
            }
            let jm = self.jacobian(&x);
            let step = pinv_solve(jm, &fx)?;
            let mut t = 1.0;
            let mut accepted = false;
            while t >= 1.0 / 1024.0 {
                let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
                let fn_ = self.eval(&xn);
                let mn = fn_.norm_squared();
                if mn.is_finite() && mn <= merit * (1.0 - 1e-4 * t) {
                    x = xn;
                    fx = fn_;
                    merit = mn;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            let size = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if !accepted || step.norm() * t <= 1e-15 * (1.0 + size) {
                break;
            }
            if size > 1e8 {
                return None;
            }
        }
        (self.scaled_residual(&x) <= target).then_some(x)
    }

    /// Keeps taking full or damped Newton steps as long as the residual
    /// strictly decreases. Near a singular root Newton only converges
    /// linearly, and stopping at the residual target leaves the iterate far
    /// from the root in coordinate terms.
    pub fn polish(&self, x0: &[f64], max_iter: usize) -> Vec<f64> {
        self.polish_frozen(x0, &vec![false; x0.len()], max_iter)
    }

    /// [`polish`](Self::polish) with the coordinates marked in `frozen`
    /// held fixed.
    pub fn polish_frozen(&self, x0: &[f64], frozen: &[bool], max_iter: usize) -> Vec<f64> {
        let mut x = x0.to_vec();
        let mut fx = self.eval(&x);
        let mut merit = fx.norm_squared();
        for _ in 0..max_iter {
            if merit == 0.0 {
                break;
            }
            let mut jm = self.jacobian(&x);
            for (j, _) in frozen.iter().enumerate().filter(|(_, f)| **f) {
                jm.column_mut(j).fill(0.0);
            }
            let Some(step) = pinv_solve(jm, &fx) else {
                break;
            };
            let mut t = 1.0;
            let mut moved = false;
            while t >= 1.0 / 64.0 {
                let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
                let fn_ = self.eval(&xn);
                let mn = fn_.norm_squared();
                if mn.is_finite() && mn < merit {
                    x = xn;
                    fx = fn_;
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
        x
    }

    /// Squared residual norm of the system at `x`.
    pub fn merit(&self, x: &[f64]) -> f64 {
        self.eval(x).norm_squared()
    }

    /// Polishes `x`, then rounds coordinates one at a time to nearby
    /// small-denominator rationals, re-polishing the rest with the rounded
    /// ones held fixed. A rounding is kept when the residual does not grow.
    /// At a degenerate root this recovers coordinates such as an exact zero
    /// that Newton only approaches linearly.
    pub fn snap_coordinates(&self, x0: &[f64], max_iter: usize) -> Vec<f64> {
        let mut x = self.polish(x0, max_iter);
        let mut merit = self.merit(&x);
        let mut frozen = vec![false; x.len()];
        let mut order: Vec<(usize, f64)> = x
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                let q = snap_rational(*v, SNAP_MAX_DENOMINATOR, 1e-4 * v.abs().max(1.0))?;
                Some((i, q.to_f64()))
            })
            .collect();
        order.sort_by(|a, b| (a.1 - x[a.0]).abs().total_cmp(&(b.1 - x[b.0]).abs()).then(a.0.cmp(&b.0)));
        for (i, q) in order {
            let mut trial = x.clone();
            trial[i] = q;
            let mut trial_frozen = frozen.clone();
            trial_frozen[i] = true;
            let trial = self.polish_frozen(&trial, &trial_frozen, max_iter);
            let m = self.merit(&trial);
            if m <= merit {
                x = trial;
                merit = m;
                frozen = trial_frozen;
            }
        }
        x
    }

    /// Rounds `x` to nearby small-denominator rationals and returns them if
    /// every equation of the system vanishes there exactly.
    pub fn snap_exact(&self, x: &[f64]) -> Option<Vec<BigRational>> {
        let q: Vec<BigRational> = x
            .iter()
            .map(|v| snap_rational(*v, SNAP_MAX_DENOMINATOR, 1e-4 * v.abs().max(1.0)))
            .collect::<Option<_>>()?;
        let exact = self.equations.iter().all(|e| e.evaluate(&q).is_ok_and(|v| v.is_zero()));
        exact.then_some(q)
    }
}

/// Minimum-norm least-squares step `J⁺ F`.
pub fn pinv_solve(jm: DMatrix<f64>, f: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = jm.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if !smax.is_finite() {
        return None;
    }
    if smax == 0.0 {
        return Some(DVector::zeros(svd.v_t.as_ref().map_or(0, |v| v.ncols())));
    }
    let step = svd.solve(f, smax * 1e-13).ok()?;
    step.iter().all(|v| v.is_finite()).then_some(step)
}

/// Rank with relative singular-value threshold, plus an orthonormal basis of
/// the null space.
pub fn rank_and_null_space(jm: &DMatrix<f64>, rel_tol: f64) -> (usize, Vec<Vec<f64>>) {
    let cols = jm.ncols();
    // Pad to square so the full right-singular basis is available.
    let rows = jm.nrows().max(cols);
    let mut sq = DMatrix::zeros(rows, cols);
    sq.view_mut((0, 0), (jm.nrows(), cols)).copy_from(jm);
    let svd = sq.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let mut rank = 0;
    let mut null = Vec::new();
    for (k, s) in svd.singular_values.iter().enumerate() {
        if smax > 0.0 && *s > rel_tol * smax {
            rank += 1;
        } else {
            null.push(v_t.row(k).iter().copied().collect());
        }
    }
    (rank, null)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_problem;

    fn problem(text: &str) -> ConstrainedProblem {
        ConstrainedProblem::from_definition(&parse_problem(text).unwrap()).unwrap()
    }

    #[test]
    fn cleared_gradient_is_det_times_reduced_gradient() {
        let p = problem("vars x y; objective x*y; constraint -2*x^3 + 15*x^2*y + 11*y^3 - 24*y;");
        let sys = CriticalSystem::new(&p, &Chart::new(vec![1], 2));
        let x = [0.3, -0.7];
        let gx = -6.0 * 0.09 + 30.0 * 0.3 * -0.7;
        let gy = 15.0 * 0.09 + 33.0 * 0.49 - 24.0;
        // J_x = f_x − f_y G_x / G_y with f = xy.
        let jx = -0.7 - 0.3 * gx / gy;
        let f = sys.eval(&x);
        assert!((f[0] - gy * jx).abs() < 1e-12);
        assert!((sys.det(&x) - gy).abs() < 1e-12);
    }

    #[test]
    fn newton_polishes_known_root() {
        let p = problem("vars x y; objective x*y; constraint -2*x^3 + 15*x^2*y + 11*y^3 - 24*y;");
        let sys = CriticalSystem::new(&p, &Chart::new(vec![1], 2));
        let x = sys.newton(&[1.01, 0.99], 50, 1e-13).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-10 && (x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn symbolic_determinant_of_two_by_two() {
        let p = problem("vars a b; objective a; constraint a*b; constraint a + b;");
        let det = symbolic_determinant(p.constraint_jacobian_exprs(), 2);
        // [[b, a], [1, 1]] → b − a
        let names = vec!["a".to_string(), "b".to_string()];
        assert_eq!(det, crate::expr::parse_expression("b - a", &names).unwrap());
    }

    #[test]
    fn null_space_of_rank_one_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -24.0, 0.0, -24.0]);
        let (rank, null) = rank_and_null_space(&m, 1e-6);
        assert_eq!(rank, 1);
        assert_eq!(null.len(), 1);
        assert!((null[0][0].abs() - 1.0).abs() < 1e-12);
    }
}
