//! Implicit-function charts and derivatives of the reduced function.
//!
//! For a chart with dependent variables `v` and independent variables `u`,
//! the constraint set is locally the graph `v = h(u)` and the reduced
//! function is `J(u) = f(u, h(u))`. Nothing here builds `h` symbolically:
//! jets are evaluated at a point. Orders one and two use the closed forms
//!
//! ```text
//! h_{γ,i}  = −Σ_α G^{γα} G_{α,i}
//! h_{γ,ij} = −Σ_α G^{γα} (G_{α,ij} + G_{α,iβ} h_{β,j} + G_{α,βj} h_{β,i} + G_{α,βδ} h_{β,i} h_{δ,j})
//! J_i      = f_i + f_α h_{α,i}
//! J_ij     = f_ij + f_iα h_{α,j} + f_αj h_{α,i} + f_αβ h_{α,i} h_{β,j} + f_γ h_{γ,ij}
//! ```
//!
//! Higher orders differentiate `K = G(u, h(u)) ≡ 0` once more per order:
//! the new `h` coefficients enter linearly through `G'_v`, so each order is a
//! single linear solve against the cached inverse minor.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expression, ProblemDefinition};
use crate::linalg::{determinant, inverse, Matrix};
use crate::scalar::Scalar;
use crate::series::{compose_polynomial, MonomialBasis, Series};

/// Default threshold on the scaled determinant of a chart minor.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChartError {
    #[error("expressions use {found} variables, expected {expected}")]
    VariableCount { expected: usize, found: usize },
    #[error("point has {got} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("chart has {got} dependent variables, expected {expected}")]
    ChartSize { expected: usize, got: usize },
    #[error("chart minor is singular at this point (scaled |det| = {score:e})")]
    SingularMinor { score: f64 },
    #[error("constraint residual {residual:e} exceeds tolerance")]
    ConstraintResidual { residual: f64 },
    #[error("jet has order {have}, order {need} requested")]
    JetOrder { have: u32, need: u32 },
}

/// Objective `f` and constraint map `G` over `d` named variables.
///
/// Derivatives up to second order are cached symbolically at construction.
#[derive(Debug, Clone)]
pub struct ConstrainedProblem {
    names: Vec<String>,
    objective: Expression,
    constraints: Vec<Expression>,
    grad_f: Vec<Expression>,
    hess_f: Vec<Vec<Expression>>,
    jac_g: Vec<Vec<Expression>>,
    hess_g: Vec<Vec<Vec<Expression>>>,
}

impl ConstrainedProblem {
    pub fn new(names: Vec<String>, objective: Expression, constraints: Vec<Expression>) -> Result<Self, ChartError> {
        let d = names.len();
        for e in std::iter::once(&objective).chain(&constraints) {
            if e.nvars() != d {
                return Err(ChartError::VariableCount { expected: d, found: e.nvars() });
            }
        }
        let grad_f = objective.gradient();
        let hess_f = grad_f.iter().map(Expression::gradient).collect();
        let jac_g: Vec<Vec<Expression>> = constraints.iter().map(Expression::gradient).collect();
        let hess_g = jac_g.iter().map(|row| row.iter().map(Expression::gradient).collect()).collect();
        Ok(Self { names, objective, constraints, grad_f, hess_f, jac_g, hess_g })
    }

    pub fn from_definition(def: &ProblemDefinition) -> Result<Self, ChartError> {
        Self::new(def.variables.clone(), def.objective.clone(), def.constraints.clone())
    }

    pub fn unconstrained(names: Vec<String>, objective: Expression) -> Result<Self, ChartError> {
        Self::new(names, objective, Vec::new())
    }

    /// Ambient dimension.
    pub fn d(&self) -> usize {
        self.names.len()
    }

    /// Number of constraints.
    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    /// Manifold dimension `d − m` (zero when the constraints are at least as
    /// many as the variables).
    pub fn n(&self) -> usize {
        self.d().saturating_sub(self.m())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn objective(&self) -> &Expression {
        &self.objective
    }

    pub fn constraints(&self) -> &[Expression] {
        &self.constraints
    }

    pub fn objective_gradient_exprs(&self) -> &[Expression] {
        &self.grad_f
    }

    pub fn constraint_jacobian_exprs(&self) -> &[Vec<Expression>] {
        &self.jac_g
    }

    fn check_point<T>(&self, x: &[T]) -> Result<(), ChartError> {
        if x.len() != self.d() {
            return Err(ChartError::DimensionMismatch { expected: self.d(), got: x.len() });
        }
        Ok(())
    }

    pub fn objective_value<T: Scalar>(&self, x: &[T]) -> T {
        self.objective.evaluate(x).expect("dimension checked by caller")
    }

    pub fn constraint_values<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        self.constraints.iter().map(|g| g.evaluate(x).expect("dimension")).collect()
    }

    pub fn objective_gradient<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        self.grad_f.iter().map(|g| g.evaluate(x).expect("dimension")).collect()
    }

    pub fn objective_hessian<T: Scalar>(&self, x: &[T]) -> Matrix<T> {
        eval_matrix(&self.hess_f, x)
    }

    /// `m × d` constraint Jacobian `G'(X)`.
    pub fn constraint_jacobian<T: Scalar>(&self, x: &[T]) -> Matrix<T> {
        eval_matrix(&self.jac_g, x)
    }

    /// Hessians of the individual constraints.
    pub fn constraint_hessians<T: Scalar>(&self, x: &[T]) -> Vec<Matrix<T>> {
        self.hess_g.iter().map(|h| eval_matrix(h, x)).collect()
    }

    /// Largest constraint violation, scaled by the size of the terms.
    pub fn scaled_constraint_residual(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|g| g.evaluate(x).expect("dimension").abs() / (1.0 + g.magnitude_at(x)))
            .fold(0.0, f64::max)
    }
}

fn eval_matrix<T: Scalar>(m: &[Vec<Expression>], x: &[T]) -> Matrix<T> {
    m.iter().map(|row| row.iter().map(|e| e.evaluate(x).expect("dimension")).collect()).collect()
}

/// A choice of dependent variables `v` (the rest, `u`, parametrize).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Chart {
    dependent: Vec<usize>,
    independent: Vec<usize>,
}

impl Chart {
    /// Chart with the given dependent indices in ambient dimension `d`.
    pub fn new(mut dependent: Vec<usize>, d: usize) -> Self {
        dependent.sort_unstable();
        dependent.dedup();
        let independent = (0..d).filter(|i| !dependent.contains(i)).collect();
        Self { dependent, independent }
    }

    /// Every size-`m` subset of `0..d`, in lexicographic order.
    pub fn all(d: usize, m: usize) -> Vec<Chart> {
        if m > d {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut combo: Vec<usize> = (0..m).collect();
        loop {
            out.push(Chart::new(combo.clone(), d));
            // Advance to the next combination.
            let mut i = m;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                if combo[i] < d - m + i {
                    combo[i] += 1;
                    for j in i + 1..m {
                        combo[j] = combo[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    pub fn dependent(&self) -> &[usize] {
        &self.dependent
    }

    pub fn independent(&self) -> &[usize] {
        &self.independent
    }

    /// `G'_v`: the columns of the Jacobian at the dependent indices.
    pub fn minor<T: Scalar>(&self, jac: &Matrix<T>) -> Matrix<T> {
        jac.iter().map(|row| self.dependent.iter().map(|&j| row[j].clone()).collect()).collect()
    }

    /// `G'_u`: the columns at the independent indices.
    pub fn complement<T: Scalar>(&self, jac: &Matrix<T>) -> Matrix<T> {
        jac.iter().map(|row| self.independent.iter().map(|&j| row[j].clone()).collect()).collect()
    }

    /// `|det G'_v|` divided by the product of the full Jacobian row norms.
    pub fn score<T: Scalar>(&self, jac: &Matrix<T>) -> f64 {
        let scale: f64 = jac
            .iter()
            .map(|row| row.iter().map(|v| v.to_f64().powi(2)).sum::<f64>().sqrt())
            .product();
        if scale == 0.0 {
            return 0.0;
        }
        determinant(&self.minor(jac)).to_f64().abs() / scale
    }

    /// Renders as `{y}` or `{v,y}` with variable names.
    pub fn label(&self, names: &[String]) -> String {
        let parts: Vec<&str> = self.dependent.iter().map(|&i| names[i].as_str()).collect();
        format!("{{{}}}", parts.join(","))
    }
}

/// All charts valid at `x`, best conditioned first.
pub fn enumerate_charts(p: &ConstrainedProblem, x: &[f64], rank_tol: f64) -> Vec<Chart> {
    if x.len() != p.d() || p.m() > p.d() {
        return Vec::new();
    }
    let jac = p.constraint_jacobian(x);
    let mut scored: Vec<(f64, Chart)> = Chart::all(p.d(), p.m())
        .into_iter()
        .map(|c| (c.score(&jac), c))
        .filter(|(s, _)| *s > rank_tol)
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, c)| c).collect()
}

/// Fully symmetric tensor stored once per sorted multi-index.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricTensor<T> {
    order: u32,
    nvars: usize,
    entries: BTreeMap<Vec<usize>, T>,
}

impl<T: Scalar> SymmetricTensor<T> {
    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Entry for any index tuple; order does not matter.
    pub fn get(&self, index: &[usize]) -> T {
        let mut k = index.to_vec();
        k.sort_unstable();
        self.entries.get(&k).cloned().unwrap_or_else(T::zero)
    }

    /// `(sorted multi-index, value)` pairs.
    pub fn entries(&self) -> impl Iterator<Item = (&Vec<usize>, &T)> {
        self.entries.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(|v| v.is_zero())
    }
}

/// Derivatives of the implicit map `h` at one point, in one chart.
#[derive(Debug, Clone)]
pub struct ImplicitJet<T> {
    point: Vec<T>,
    chart: Chart,
    minor_inverse: Matrix<T>,
    h1: Matrix<T>,
    h2: Vec<Matrix<T>>,
    order: u32,
    h_series: Vec<Series<T>>,
}

impl<T: Scalar> ImplicitJet<T> {
    pub fn point(&self) -> &[T] {
        &self.point
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// `(G'_v)⁻¹`, rows indexed by dependent variable, columns by constraint.
    pub fn minor_inverse(&self) -> &Matrix<T> {
        &self.minor_inverse
    }

    /// `h_{γ,i}` as an `m × n` matrix.
    pub fn first(&self) -> &Matrix<T> {
        &self.h1
    }

    /// `h_{γ,ij}`, one `n × n` matrix per dependent variable.
    pub fn second(&self) -> &[Matrix<T>] {
        &self.h2
    }

    /// Order-`r` derivatives of `h_γ`.
    pub fn tensor(&self, gamma: usize, r: u32) -> Result<SymmetricTensor<T>, ChartError> {
        if r > self.order {
            return Err(ChartError::JetOrder { have: self.order, need: r });
        }
        Ok(series_tensor(&self.h_series[gamma], r))
    }

    /// Taylor series of `h` (offsets from the point) up to the jet order.
    pub fn h_series(&self) -> &[Series<T>] {
        &self.h_series
    }
}

fn series_tensor<T: Scalar>(s: &Series<T>, r: u32) -> SymmetricTensor<T> {
    let b = s.basis();
    let mut entries = BTreeMap::new();
    for i in b.degree_range(r) {
        let exps = b.exponents(i);
        let mut key = Vec::with_capacity(r as usize);
        for (v, &e) in exps.iter().enumerate() {
            key.extend(std::iter::repeat_n(v, e as usize));
        }
        entries.insert(key, s.derivative_at_origin(exps));
    }
    SymmetricTensor { order: r, nvars: b.nvars(), entries }
}

/// Builds the implicit jet of order `order` at `x` in `chart`.
///
/// `constraint_tol` bounds the scaled residual `|G(x)|`; the minor must pass
/// `rank_tol` on its scaled determinant (exact types only need it nonzero).
pub fn implicit_jet<T: Scalar>(
    p: &ConstrainedProblem,
    chart: &Chart,
    x: &[T],
    order: u32,
    constraint_tol: f64,
    rank_tol: f64,
) -> Result<ImplicitJet<T>, ChartError> {
    p.check_point(x)?;
    let m = p.m();
    if chart.dependent.len() != m || m > p.d() {
        return Err(ChartError::ChartSize { expected: m, got: chart.dependent.len() });
    }
    let xf: Vec<f64> = x.iter().map(Scalar::to_f64).collect();
    let residual = p.scaled_constraint_residual(&xf);
    let exact_zero = T::is_exact() && p.constraint_values(x).iter().all(|v| v.is_zero());
    if !exact_zero && residual > constraint_tol {
        return Err(ChartError::ConstraintResidual { residual });
    }
    let jac = p.constraint_jacobian(x);
    let score = if m == 0 { 1.0 } else { chart.score(&jac) };
    let singular = if T::is_exact() { score == 0.0 && determinant(&chart.minor(&jac)).is_zero() } else { score <= rank_tol };
    if singular {
        return Err(ChartError::SingularMinor { score });
    }
    let gv = chart.minor(&jac);
    let gu = chart.complement(&jac);
    let inv = inverse(&gv).ok_or(ChartError::SingularMinor { score })?;
    let n = chart.independent.len();
    let u = &chart.independent;
    let v = &chart.dependent;

    // h_{γ,i} = −Σ_α G^{γα} G_{α,u_i}
    let h1: Matrix<T> = (0..m)
        .map(|g| {
            (0..n)
                .map(|i| (0..m).fold(T::zero(), |acc, a| acc - inv[g][a].clone() * gu[a][i].clone()))
                .collect()
        })
        .collect();

    let hg = p.constraint_hessians(x);
    let mut h2 = vec![vec![vec![T::zero(); n]; n]; m];
    for i in 0..n {
        for j in i..n {
            // Second total derivative of K_α in (u_i, u_j), without the h₂ term.
            let rhs: Vec<T> = (0..m)
                .map(|a| {
                    let hs = &hg[a];
                    let mut t = hs[u[i]][u[j]].clone();
                    for b in 0..m {
                        t = t + hs[u[i]][v[b]].clone() * h1[b][j].clone();
                        t = t + hs[v[b]][u[j]].clone() * h1[b][i].clone();
                        for c in 0..m {
                            t = t + hs[v[b]][v[c]].clone() * h1[b][i].clone() * h1[c][j].clone();
                        }
                    }
                    t
                })
                .collect();
            for g in 0..m {
                let val = (0..m).fold(T::zero(), |acc, a| acc - inv[g][a].clone() * rhs[a].clone());
                h2[g][i][j] = val.clone();
                h2[g][j][i] = val;
            }
        }
    }

    let basis = MonomialBasis::new(n, order.max(2));
    let mut h_series: Vec<Series<T>> = (0..m).map(|_| Series::zero(&basis)).collect();
    for (g, hs) in h_series.iter_mut().enumerate() {
        for i in 0..n {
            let mut e = vec![0u32; n];
            e[i] = 1;
            hs.set_coeff_at(basis.index_of(&e).expect("linear"), h1[g][i].clone());
            for j in i..n {
                let mut e2 = vec![0u32; n];
                e2[i] += 1;
                e2[j] += 1;
                let c = if i == j { h2[g][i][j].clone() / T::from_i64(2) } else { h2[g][i][j].clone() };
                hs.set_coeff_at(basis.index_of(&e2).expect("quadratic"), c);
            }
        }
    }
    for q in 3..=order {
        let args = chart_arguments(chart, x, &h_series, &basis);
        let residuals: Vec<Series<T>> = p.constraints().iter().map(|g| compose_polynomial(g, &args, q)).collect();
        for idx in basis.degree_range(q) {
            for g in 0..m {
                let val = (0..m).fold(T::zero(), |acc, a| acc - inv[g][a].clone() * residuals[a].coeffs()[idx].clone());
                h_series[g].set_coeff_at(idx, val);
            }
        }
    }
    Ok(ImplicitJet { point: x.to_vec(), chart: chart.clone(), minor_inverse: inv, h1, h2, order, h_series })
}

/// Ambient coordinates as series in the chart offsets: `X_u = x_u + s`,
/// `X_v = x_v + h(s)`.
fn chart_arguments<T: Scalar>(chart: &Chart, x: &[T], h: &[Series<T>], basis: &Arc<MonomialBasis>) -> Vec<Series<T>> {
    let mut args: Vec<Series<T>> = x.iter().map(|xi| Series::constant(basis, xi.clone())).collect();
    for (i, &ui) in chart.independent.iter().enumerate() {
        args[ui] = args[ui].add(&Series::variable(basis, i));
    }
    for (g, &vg) in chart.dependent.iter().enumerate() {
        args[vg] = args[vg].add(&h[g]);
    }
    args
}

/// `∇J` at the jet's point.
pub fn reduced_gradient<T: Scalar>(p: &ConstrainedProblem, jet: &ImplicitJet<T>) -> Vec<T> {
    let grad = p.objective_gradient(&jet.point);
    let (u, v) = (&jet.chart.independent, &jet.chart.dependent);
    (0..u.len())
        .map(|i| {
            (0..v.len()).fold(grad[u[i]].clone(), |acc, g| acc + grad[v[g]].clone() * jet.h1[g][i].clone())
        })
        .collect()
}

/// `Hess J` at the jet's point.
pub fn reduced_hessian<T: Scalar>(p: &ConstrainedProblem, jet: &ImplicitJet<T>) -> Matrix<T> {
    let grad = p.objective_gradient(&jet.point);
    let hf = p.objective_hessian(&jet.point);
    let (u, v) = (&jet.chart.independent, &jet.chart.dependent);
    let (n, m) = (u.len(), v.len());
    let h1 = &jet.h1;
    let mut out = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in i..n {
            let mut t = hf[u[i]][u[j]].clone();
            for a in 0..m {
                t = t + hf[u[i]][v[a]].clone() * h1[a][j].clone();
                t = t + hf[v[a]][u[j]].clone() * h1[a][i].clone();
                for b in 0..m {
                    t = t + hf[v[a]][v[b]].clone() * h1[a][i].clone() * h1[b][j].clone();
                }
                t = t + grad[v[a]].clone() * jet.h2[a][i][j].clone();
            }
            out[i][j] = t.clone();
            out[j][i] = t;
        }
    }
    out
}

/// Taylor series of `J(u₀ + s)` up to the jet order.
pub fn reduced_series<T: Scalar>(p: &ConstrainedProblem, jet: &ImplicitJet<T>) -> Series<T> {
    let basis = jet.h_series.first().map_or_else(
        || MonomialBasis::new(jet.chart.independent.len(), jet.order.max(2)),
        |s| s.basis().clone(),
    );
    let args = chart_arguments(&jet.chart, &jet.point, &jet.h_series, &basis);
    compose_polynomial(p.objective(), &args, jet.order.max(2))
}

/// All order-`r` partial derivatives of `J`.
pub fn reduced_derivative_tensor<T: Scalar>(
    p: &ConstrainedProblem,
    jet: &ImplicitJet<T>,
    r: u32,
) -> Result<SymmetricTensor<T>, ChartError> {
    if r > jet.order.max(2) {
        return Err(ChartError::JetOrder { have: jet.order, need: r });
    }
    let n = jet.chart.independent.len();
    match r {
        1 => {
            let g = reduced_gradient(p, jet);
            let entries = (0..n).map(|i| (vec![i], g[i].clone())).collect();
            Ok(SymmetricTensor { order: 1, nvars: n, entries })
        }
        2 => {
            let h = reduced_hessian(p, jet);
            let mut entries = BTreeMap::new();
            for i in 0..n {
                for j in i..n {
                    entries.insert(vec![i, j], h[i][j].clone());
                }
            }
            Ok(SymmetricTensor { order: 2, nvars: n, entries })
        }
        _ => Ok(series_tensor(&reduced_series(p, jet), r)),
    }
}

/// `dK_α/du_i = G_{α,u_i} + Σ_β G_{α,v_β} h_{β,i}`; zero up to rounding for
/// a correct jet.
pub fn first_order_k_residual<T: Scalar>(p: &ConstrainedProblem, jet: &ImplicitJet<T>) -> f64 {
    let jac = p.constraint_jacobian(&jet.point);
    let (u, v) = (&jet.chart.independent, &jet.chart.dependent);
    let mut worst: f64 = 0.0;
    for row in &jac {
        for i in 0..u.len() {
            let t = (0..v.len()).fold(row[u[i]].clone(), |acc, b| acc + row[v[b]].clone() * jet.h1[b][i].clone());
            worst = worst.max(t.to_f64().abs());
        }
    }
    worst
}
