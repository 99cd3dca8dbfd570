//! Homogeneous Taylor components.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use super::{format_terms, ExprError, Expression};
use crate::scalar::Scalar;

/// A homogeneous polynomial of degree `k` in offset coordinates `Y = X − X₀`.
///
/// Coefficients are keyed by exponent vector, which is the multiplicity form
/// of a sorted multi-index: `[2, 0, 1]` stands for `(0, 0, 2)`. The stored
/// coefficient is the full monomial coefficient, i.e. the symmetric
/// derivative divided by `k!` and multiplied by the multinomial count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomogeneousPolynomial {
    degree: u32,
    center: Vec<BigRational>,
    coefficients: BTreeMap<Vec<u32>, BigRational>,
}

impl HomogeneousPolynomial {
    /// Validating constructor: every monomial must have total degree `degree`.
    pub fn new(
        degree: u32,
        center: Vec<BigRational>,
        coefficients: BTreeMap<Vec<u32>, BigRational>,
    ) -> Result<Self, ExprError> {
        for k in coefficients.keys() {
            if k.len() != center.len() {
                return Err(ExprError::DimensionMismatch { expected: center.len(), got: k.len() });
            }
            let found: u32 = k.iter().sum();
            if found != degree {
                return Err(ExprError::NotHomogeneous { expected: degree, found });
            }
        }
        let coefficients = coefficients.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        Ok(Self { degree, center, coefficients })
    }

    pub(crate) fn from_parts(
        degree: u32,
        center: Vec<BigRational>,
        coefficients: BTreeMap<Vec<u32>, BigRational>,
    ) -> Self {
        Self { degree, center, coefficients }
    }

    /// Reads a homogeneous polynomial from an expression in offset
    /// coordinates centred at the origin.
    pub fn from_expression(e: &Expression) -> Result<Self, ExprError> {
        let degree = e.degree();
        let center = vec![BigRational::zero(); e.nvars()];
        Self::new(degree, center, e.terms.clone())
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn nvars(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[BigRational] {
        &self.center
    }

    pub fn coefficients(&self) -> &BTreeMap<Vec<u32>, BigRational> {
        &self.coefficients
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Evaluates at an offset `Y` (not at an absolute point).
    pub fn evaluate<T: Scalar>(&self, y: &[T]) -> Result<T, ExprError> {
        self.to_expression().evaluate(y)
    }

    /// The polynomial as an expression in the offset coordinates.
    pub fn to_expression(&self) -> Expression {
        Expression { nvars: self.nvars(), terms: self.coefficients.clone() }
    }

    /// Same polynomial with the centre moved to the origin.
    pub fn recentered(&self) -> Self {
        Self {
            degree: self.degree,
            center: vec![BigRational::zero(); self.nvars()],
            coefficients: self.coefficients.clone(),
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            degree: self.degree,
            center: self.center.clone(),
            coefficients: self.coefficients.iter().map(|(k, c)| (k.clone(), -c)).collect(),
        }
    }

    /// Symmetric derivative `∂^k P / ∂y_{i₁}…∂y_{i_k}` for a sorted
    /// multi-index; equals `α!·a_α` for the matching exponent vector `α`.
    pub fn derivative(&self, multi_index: &[usize]) -> BigRational {
        let mut exps = vec![0u32; self.nvars()];
        for &i in multi_index {
            exps[i] += 1;
        }
        let c = self.coefficients.get(&exps).cloned().unwrap_or_else(BigRational::zero);
        let fact: BigInt = exps.iter().map(|&e| (1..=e).map(BigInt::from).product::<BigInt>()).product();
        c * BigRational::from_integer(fact)
    }

    pub fn display_with(&self, names: &[String]) -> String {
        format_terms(self.coefficients.iter(), names)
    }
}

/// Detects `P = λ·(Σ yᵢ²)^p` by coefficient comparison; returns `(λ, p)`.
pub fn spherical_power_form(p: &HomogeneousPolynomial) -> Option<(BigRational, u32)> {
    if p.is_zero() || p.degree % 2 == 1 || p.nvars() == 0 {
        return None;
    }
    let half = p.degree / 2;
    let mut lead = vec![0u32; p.nvars()];
    lead[0] = p.degree;
    let lambda = p.coefficients.get(&lead)?.clone();
    let n = p.nvars();
    let mut square_sum = Expression::zero(n);
    for i in 0..n {
        let v = Expression::variable(i, n).expect("index in range");
        square_sum = &square_sum + &(&v * &v);
    }
    let candidate = square_sum.pow(half).scale(&lambda);
    (candidate.terms == p.coefficients).then_some((lambda, half))
}
