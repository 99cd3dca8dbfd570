//! Polynomial expressions with exact rational coefficients.
//!
//! Input is parsed into a small syntax tree ([`Node`]) and immediately
//! normalized into an [`Expression`]: an expanded sum of monomials keyed by
//! exponent vector. The normal form makes structural equality meaningful, so
//! `∂ᵢ∂ⱼe == ∂ⱼ∂ᵢe` is an `assert_eq!` and exact zero tests are free.

mod homogeneous;
mod parse;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::scalar::{f64_to_rational, Scalar};

pub use homogeneous::{spherical_power_form, HomogeneousPolynomial};
pub use parse::{parse_expression, parse_problem, ParseError, ParseErrorKind, ProblemDefinition};

/// Errors raised by expression operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("point has {got} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("variable index {index} out of range for {nvars} variables")]
    IndexOutOfRange { index: usize, nvars: usize },
    #[error("monomial of degree {found} in a homogeneous polynomial of degree {expected}")]
    NotHomogeneous { expected: u32, found: u32 },
}

/// Unnormalized syntax tree, as produced by the parser.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Constant(BigRational),
    Variable(usize),
    Sum(Vec<Node>),
    Product(Vec<Node>),
    Power(Box<Node>, u32),
    Negation(Box<Node>),
}

impl Node {
    /// Expands the tree into normal form over `nvars` variables.
    pub fn normalize(&self, nvars: usize) -> Result<Expression, ExprError> {
        Ok(match self {
            Node::Constant(c) => Expression::constant(c.clone(), nvars),
            Node::Variable(i) => Expression::variable(*i, nvars)?,
            Node::Sum(items) => {
                let mut acc = Expression::zero(nvars);
                for item in items {
                    acc = &acc + &item.normalize(nvars)?;
                }
                acc
            }
            Node::Product(items) => {
                let mut acc = Expression::one(nvars);
                for item in items {
                    acc = &acc * &item.normalize(nvars)?;
                }
                acc
            }
            Node::Power(base, e) => base.normalize(nvars)?.pow(*e),
            Node::Negation(inner) => -&inner.normalize(nvars)?,
        })
    }
}

/// A polynomial in `nvars` variables, stored as an expanded sum of monomials.
///
/// Keys are exponent vectors of length `nvars`; zero coefficients are never
/// stored, so the zero polynomial has no terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Expression {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, BigRational>,
}

impl Expression {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(BigRational::one(), nvars)
    }

    pub fn constant(c: BigRational, nvars: usize) -> Self {
        let mut e = Self::zero(nvars);
        e.add_term(vec![0; nvars], c);
        e
    }

    pub fn variable(index: usize, nvars: usize) -> Result<Self, ExprError> {
        if index >= nvars {
            return Err(ExprError::IndexOutOfRange { index, nvars });
        }
        let mut exps = vec![0; nvars];
        exps[index] = 1;
        let mut e = Self::zero(nvars);
        e.add_term(exps, BigRational::one());
        Ok(e)
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs, combining
    /// like terms.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Result<Self, ExprError>
    where
        I: IntoIterator<Item = (Vec<u32>, BigRational)>,
    {
        let mut e = Self::zero(nvars);
        for (exps, c) in terms {
            if exps.len() != nvars {
                return Err(ExprError::DimensionMismatch { expected: nvars, got: exps.len() });
            }
            e.add_term(exps, c);
        }
        Ok(e)
    }

    fn add_term(&mut self, exps: Vec<u32>, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(exps) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get() + c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Monomials in ascending lexicographic exponent order.
    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &BigRational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, exps: &[u32]) -> BigRational {
        self.terms.get(exps).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|k| k.iter().all(|&e| e == 0))
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|k| k.iter().sum::<u32>()).max().unwrap_or(0)
    }

    /// Largest exponent of each variable.
    pub fn max_exponents(&self) -> Vec<u32> {
        let mut out = vec![0; self.nvars];
        for k in self.terms.keys() {
            for (o, &e) in out.iter_mut().zip(k) {
                *o = (*o).max(e);
            }
        }
        out
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero(self.nvars);
        }
        Self {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut result = Self::one(self.nvars);
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// Exact partial derivative with respect to variable `index`.
    pub fn differentiate(&self, index: usize) -> Result<Self, ExprError> {
        if index >= self.nvars {
            return Err(ExprError::IndexOutOfRange { index, nvars: self.nvars });
        }
        let mut out = Self::zero(self.nvars);
        for (k, c) in &self.terms {
            if k[index] == 0 {
                continue;
            }
            let mut k2 = k.clone();
            k2[index] -= 1;
            out.add_term(k2, c * BigRational::from_integer(BigInt::from(k[index])));
        }
        Ok(out)
    }

    /// Gradient as a vector of expressions.
    pub fn gradient(&self) -> Vec<Self> {
        (0..self.nvars).map(|i| self.differentiate(i).expect("index in range")).collect()
    }

    /// Evaluates at a point in any scalar field.
    pub fn evaluate<T: Scalar>(&self, x: &[T]) -> Result<T, ExprError> {
        if x.len() != self.nvars {
            return Err(ExprError::DimensionMismatch { expected: self.nvars, got: x.len() });
        }
        let maxe = self.max_exponents();
        let powers: Vec<Vec<T>> = x
            .iter()
            .zip(&maxe)
            .map(|(xi, &m)| {
                let mut p = Vec::with_capacity(m as usize + 1);
                p.push(T::one());
                for j in 1..=m as usize {
                    let next = p[j - 1].clone() * xi.clone();
                    p.push(next);
                }
                p
            })
            .collect();
        let mut acc = T::zero();
        for (k, c) in &self.terms {
            let mut t = T::from_rational(c);
            for (i, &e) in k.iter().enumerate() {
                if e > 0 {
                    t = t * powers[i][e as usize].clone();
                }
            }
            acc = acc + t;
        }
        Ok(acc)
    }

    /// Sum of absolute term values at `x`; a natural scale for residuals.
    pub fn magnitude_at(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(k, c)| {
                let mut t = c.to_f64().abs();
                for (xi, &e) in x.iter().zip(k) {
                    t *= xi.abs().powi(e as i32);
                }
                t
            })
            .sum()
    }

    /// Re-centres the polynomial: returns `Y ↦ e(center + Y)`.
    pub fn shift(&self, center: &[BigRational]) -> Result<Self, ExprError> {
        if center.len() != self.nvars {
            return Err(ExprError::DimensionMismatch { expected: self.nvars, got: center.len() });
        }
        let mut out = Self::zero(self.nvars);
        for (k, c) in &self.terms {
            // Binomial expansion of Π (cᵢ + yᵢ)^{eᵢ}.
            let mut partial: Vec<(Vec<u32>, BigRational)> = vec![(vec![0; self.nvars], c.clone())];
            for (i, &e) in k.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let expansions = binomial_expansion(&center[i], e);
                let mut next = Vec::with_capacity(partial.len() * expansions.len());
                for (exps, coef) in &partial {
                    for (j, b) in &expansions {
                        let mut ex = exps.clone();
                        ex[i] = *j;
                        next.push((ex, coef * b));
                    }
                }
                partial = next;
            }
            for (exps, coef) in partial {
                out.add_term(exps, coef);
            }
        }
        Ok(out)
    }

    /// Degree-`k` homogeneous part (in the current coordinates).
    pub(crate) fn into_terms(self) -> BTreeMap<Vec<u32>, BigRational> {
        self.terms
    }

    pub fn homogeneous_part(&self, k: u32) -> Self {
        Self {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| e.iter().sum::<u32>() == k)
                .map(|(e, c)| (e.clone(), c.clone()))
                .collect(),
        }
    }

    /// Nonzero homogeneous Taylor components `P_k`, `1 ≤ k ≤ min(k_max, deg)`,
    /// of the expansion about `center`. Coefficients carry the `1/l!`
    /// normalization, so `e(center) + Σ P_k(Y) = e(center + Y)` whenever
    /// `k_max ≥ deg e`.
    pub fn taylor_components(
        &self,
        center: &[BigRational],
        k_max: u32,
    ) -> Result<Vec<HomogeneousPolynomial>, ExprError> {
        let shifted = self.shift(center)?;
        let top = k_max.min(shifted.degree());
        let mut out = Vec::new();
        for k in 1..=top {
            let part = shifted.homogeneous_part(k);
            if part.is_zero() {
                continue;
            }
            out.push(HomogeneousPolynomial::from_parts(k, center.to_vec(), part.terms));
        }
        Ok(out)
    }

    /// Same as [`Expression::taylor_components`] for a floating-point centre;
    /// each coordinate is taken as the exact dyadic rational it represents.
    pub fn taylor_components_f64(
        &self,
        center: &[f64],
        k_max: u32,
    ) -> Result<Vec<HomogeneousPolynomial>, ExprError> {
        let c: Vec<BigRational> = center.iter().map(|&v| f64_to_rational(v)).collect();
        self.taylor_components(&c, k_max)
    }

    /// Substitutes polynomials for variables: `e(q₀, …, q_{d−1})`.
    pub fn compose(&self, args: &[Expression]) -> Result<Self, ExprError> {
        if args.len() != self.nvars {
            return Err(ExprError::DimensionMismatch { expected: self.nvars, got: args.len() });
        }
        let target = args.first().map_or(0, Expression::nvars);
        let mut out = Self::zero(target);
        for (k, c) in &self.terms {
            let mut t = Self::constant(c.clone(), target);
            for (i, &e) in k.iter().enumerate() {
                if e > 0 {
                    t = &t * &args[i].pow(e);
                }
            }
            out = &out + &t;
        }
        Ok(out)
    }

    /// Syntax-tree view of the normal form: a sum of products.
    pub fn to_node(&self) -> Node {
        let items = self
            .terms
            .iter()
            .map(|(k, c)| {
                let mut factors = vec![Node::Constant(c.clone())];
                for (i, &e) in k.iter().enumerate() {
                    match e {
                        0 => {}
                        1 => factors.push(Node::Variable(i)),
                        _ => factors.push(Node::Power(Box::new(Node::Variable(i)), e)),
                    }
                }
                Node::Product(factors)
            })
            .collect();
        Node::Sum(items)
    }

    /// Renders with the given variable names, highest degree first.
    pub fn display_with(&self, names: &[String]) -> String {
        format_terms(self.terms.iter(), names)
    }
}

pub(crate) fn format_terms<'a, I>(terms: I, names: &[String]) -> String
where
    I: Iterator<Item = (&'a Vec<u32>, &'a BigRational)>,
{
    let mut items: Vec<_> = terms.collect();
    if items.is_empty() {
        return "0".to_string();
    }
    items.sort_by(|(a, _), (b, _)| {
        let da: u32 = a.iter().sum();
        let db: u32 = b.iter().sum();
        db.cmp(&da).then_with(|| b.cmp(a))
    });
    let mut out = String::new();
    for (n, (k, c)) in items.into_iter().enumerate() {
        let negative = c.is_negative();
        let mag = c.abs();
        if n == 0 {
            if negative {
                out.push('-');
            }
        } else {
            out.push_str(if negative { " - " } else { " + " });
        }
        let mut factors = Vec::new();
        let is_const = k.iter().all(|&e| e == 0);
        if !mag.is_one() || is_const {
            factors.push(mag.to_string());
        }
        for (i, &e) in k.iter().enumerate() {
            let name = names.get(i).cloned().unwrap_or_else(|| format!("x{}", i + 1));
            match e {
                0 => {}
                1 => factors.push(name),
                _ => factors.push(format!("{name}^{e}")),
            }
        }
        out.push_str(&factors.join("*"));
    }
    out
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_with(&[]))
    }
}

/// `(c + y)^e = Σ_j C(e, j) c^{e−j} y^j` as `(j, coefficient)` pairs.
fn binomial_expansion(c: &BigRational, e: u32) -> Vec<(u32, BigRational)> {
    let mut out = Vec::with_capacity(e as usize + 1);
    let mut binom = BigInt::one();
    for j in 0..=e {
        let coef = BigRational::from_integer(binom.clone()) * num_traits::pow(c.clone(), (e - j) as usize);
        if !coef.is_zero() {
            out.push((j, coef));
        }
        binom = binom * BigInt::from(e - j) / BigInt::from(j + 1);
    }
    out
}

impl Add for &Expression {
    type Output = Expression;
    fn add(self, o: &Expression) -> Expression {
        assert_eq!(self.nvars, o.nvars, "adding polynomials over different variable sets");
        let mut out = self.clone();
        for (k, c) in &o.terms {
            out.add_term(k.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Expression {
    type Output = Expression;
    fn sub(self, o: &Expression) -> Expression {
        self + &(-o)
    }
}

impl Neg for &Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        Expression {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(k, c)| (k.clone(), -c)).collect(),
        }
    }
}

impl Mul for &Expression {
    type Output = Expression;
    fn mul(self, o: &Expression) -> Expression {
        assert_eq!(self.nvars, o.nvars, "multiplying polynomials over different variable sets");
        let mut out = Expression::zero(self.nvars);
        for (ka, ca) in &self.terms {
            for (kb, cb) in &o.terms {
                let k: Vec<u32> = ka.iter().zip(kb).map(|(a, b)| a + b).collect();
                out.add_term(k, ca * cb);
            }
        }
        out
    }
}
