//! Truncated multivariate power series.
//!
//! Higher implicit derivatives are computed by composing polynomials with
//! truncated series and reading off coefficients order by order. The
//! monomial basis and its multiplication table are built once per
//! `(nvars, order)` pair and shared between series.

use std::collections::HashMap;
use std::sync::Arc;

use crate::expr::Expression;
use crate::scalar::Scalar;

/// Graded monomial basis up to a fixed total degree.
#[derive(Debug)]
pub struct MonomialBasis {
    nvars: usize,
    order: u32,
    exponents: Vec<Vec<u32>>,
    degrees: Vec<u32>,
    index: HashMap<Vec<u32>, usize>,
    degree_start: Vec<usize>,
    /// For each basis element `i`, the pairs `(j, k)` with `eᵢ + eⱼ = e_k`,
    /// ordered by increasing degree of `j`.
    partners: Vec<Vec<(u32, u32)>>,
}

impl MonomialBasis {
    pub fn new(nvars: usize, order: u32) -> Arc<Self> {
        let mut exponents = Vec::new();
        let mut degree_start = Vec::with_capacity(order as usize + 2);
        for deg in 0..=order {
            degree_start.push(exponents.len());
            let mut level = Vec::new();
            compositions(nvars, deg, &mut vec![0; nvars], 0, &mut level);
            level.sort_by(|a, b| b.cmp(a));
            exponents.extend(level);
        }
        degree_start.push(exponents.len());
        let degrees: Vec<u32> = exponents.iter().map(|e| e.iter().sum()).collect();
        let index: HashMap<Vec<u32>, usize> =
            exponents.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let partners = exponents
            .iter()
            .enumerate()
            .map(|(i, ei)| {
                let room = order - degrees[i];
                let end = degree_start[room as usize + 1];
                (0..end)
                    .map(|j| {
                        let sum: Vec<u32> = ei.iter().zip(&exponents[j]).map(|(a, b)| a + b).collect();
                        (j as u32, index[&sum] as u32)
                    })
                    .collect()
            })
            .collect();
        Arc::new(Self { nvars, order, exponents, degrees, index, degree_start, partners })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self, i: usize) -> &[u32] {
        &self.exponents[i]
    }

    pub fn degree(&self, i: usize) -> u32 {
        self.degrees[i]
    }

    pub fn index_of(&self, exps: &[u32]) -> Option<usize> {
        self.index.get(exps).copied()
    }

    /// Index range of the monomials of total degree `deg`.
    pub fn degree_range(&self, deg: u32) -> std::ops::Range<usize> {
        if deg > self.order {
            return self.len()..self.len();
        }
        self.degree_start[deg as usize]..self.degree_start[deg as usize + 1]
    }
}

fn compositions(nvars: usize, remaining: u32, cur: &mut Vec<u32>, pos: usize, out: &mut Vec<Vec<u32>>) {
    if pos + 1 >= nvars {
        if nvars > 0 {
            cur[pos] = remaining;
            out.push(cur.clone());
            cur[pos] = 0;
        } else if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for v in (0..=remaining).rev() {
        cur[pos] = v;
        compositions(nvars, remaining - v, cur, pos + 1, out);
    }
    cur[pos] = 0;
}

/// A power series truncated at the basis order.
#[derive(Debug, Clone)]
pub struct Series<T> {
    basis: Arc<MonomialBasis>,
    coeffs: Vec<T>,
}

impl<T: Scalar> Series<T> {
    pub fn zero(basis: &Arc<MonomialBasis>) -> Self {
        Self { basis: basis.clone(), coeffs: vec![T::zero(); basis.len()] }
    }

    pub fn constant(basis: &Arc<MonomialBasis>, c: T) -> Self {
        let mut s = Self::zero(basis);
        if !s.coeffs.is_empty() {
            s.coeffs[0] = c;
        }
        s
    }

    /// The coordinate function `s_i`.
    pub fn variable(basis: &Arc<MonomialBasis>, i: usize) -> Self {
        let mut s = Self::zero(basis);
        if basis.order >= 1 {
            let mut e = vec![0; basis.nvars];
            e[i] = 1;
            let idx = basis.index_of(&e).expect("linear monomial present");
            s.coeffs[idx] = T::one();
        }
        s
    }

    pub fn basis(&self) -> &Arc<MonomialBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeff(&self, exps: &[u32]) -> T {
        self.basis.index_of(exps).map_or_else(T::zero, |i| self.coeffs[i].clone())
    }

    pub fn set_coeff_at(&mut self, i: usize, c: T) {
        self.coeffs[i] = c;
    }

    pub fn add(&self, o: &Self) -> Self {
        let coeffs = self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a.clone() + b.clone()).collect();
        Self { basis: self.basis.clone(), coeffs }
    }

    pub fn sub(&self, o: &Self) -> Self {
        let coeffs = self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a.clone() - b.clone()).collect();
        Self { basis: self.basis.clone(), coeffs }
    }

    pub fn scale(&self, c: &T) -> Self {
        let coeffs = self.coeffs.iter().map(|a| a.clone() * c.clone()).collect();
        Self { basis: self.basis.clone(), coeffs }
    }

    /// Product truncated at total degree `max_degree` (and the basis order).
    pub fn mul_truncated(&self, o: &Self, max_degree: u32) -> Self {
        let mut out = vec![T::zero(); self.basis.len()];
        let cap = max_degree.min(self.basis.order);
        for (i, a) in self.coeffs.iter().enumerate() {
            let di = self.basis.degrees[i];
            if a.is_zero() || di > cap {
                continue;
            }
            for &(j, k) in &self.basis.partners[i] {
                if di + self.basis.degrees[j as usize] > cap {
                    break;
                }
                let b = &o.coeffs[j as usize];
                if b.is_zero() {
                    continue;
                }
                let k = k as usize;
                out[k] = out[k].clone() + a.clone() * b.clone();
            }
        }
        Self { basis: self.basis.clone(), coeffs: out }
    }

    pub fn mul(&self, o: &Self) -> Self {
        self.mul_truncated(o, self.basis.order)
    }

    /// Homogeneous degree-`deg` part as a new series.
    pub fn degree_part(&self, deg: u32) -> Self {
        let mut out = Self::zero(&self.basis);
        for i in self.basis.degree_range(deg) {
            out.coeffs[i] = self.coeffs[i].clone();
        }
        out
    }

    /// `∂^α` at the origin: `α!` times the coefficient.
    pub fn derivative_at_origin(&self, exps: &[u32]) -> T {
        let fact: u64 = exps.iter().map(|&e| (1..=e as u64).product::<u64>()).product();
        self.coeff(exps) * T::from_i64(fact as i64)
    }
}

/// Substitutes series for the variables of a polynomial, truncating at
/// `max_degree`.
pub fn compose_polynomial<T: Scalar>(e: &Expression, args: &[Series<T>], max_degree: u32) -> Series<T> {
    let basis = args[0].basis().clone();
    let maxe = e.max_exponents();
    let mut powers: Vec<Vec<Series<T>>> = Vec::with_capacity(args.len());
    for (arg, &m) in args.iter().zip(&maxe) {
        let mut p = vec![Series::constant(&basis, T::one())];
        for j in 1..=m as usize {
            let next = p[j - 1].mul_truncated(arg, max_degree);
            p.push(next);
        }
        powers.push(p);
    }
    let mut acc = Series::zero(&basis);
    for (k, c) in e.terms() {
        let mut t: Option<Series<T>> = None;
        for (i, &ex) in k.iter().enumerate() {
            if ex == 0 {
                continue;
            }
            let p = &powers[i][ex as usize];
            t = Some(match t {
                None => p.clone(),
                Some(s) => s.mul_truncated(p, max_degree),
            });
        }
        let c = T::from_rational(c);
        let term = match t {
            None => Series::constant(&basis, c),
            Some(s) => s.scale(&c),
        };
        acc = acc.add(&term);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::scalar::ratio;
    use num_rational::BigRational;

    #[test]
    fn basis_sizes_are_binomial() {
        // C(n + K, K) monomials of degree ≤ K in n variables.
        assert_eq!(MonomialBasis::new(2, 4).len(), 15);
        assert_eq!(MonomialBasis::new(3, 10).len(), 286);
        assert_eq!(MonomialBasis::new(0, 5).len(), 1);
    }

    #[test]
    fn geometric_series_inverse() {
        // (1 - s)·(1 + s + s² + …) = 1 up to truncation.
        let b = MonomialBasis::new(1, 6);
        let s = Series::<BigRational>::variable(&b, 0);
        let one = Series::constant(&b, ratio(1, 1));
        let mut geo = Series::zero(&b);
        let mut p = one.clone();
        for _ in 0..=6 {
            geo = geo.add(&p);
            p = p.mul(&s);
        }
        let prod = one.sub(&s).mul(&geo);
        assert_eq!(prod.coeff(&[0]), ratio(1, 1));
        for k in 1..=6 {
            assert_eq!(prod.coeff(&[k]), ratio(0, 1));
        }
    }

    #[test]
    fn composition_matches_symbolic_substitution() {
        let names = vec!["x".to_string(), "y".to_string()];
        let f = parse_expression("x^2*y - 3*y^2 + x", &names).unwrap();
        let b = MonomialBasis::new(2, 8);
        // x = 1 + s0, y = s0·s1 - 2
        let x = Series::constant(&b, ratio(1, 1)).add(&Series::variable(&b, 0));
        let y = Series::variable(&b, 0).mul(&Series::variable(&b, 1)).sub(&Series::constant(&b, ratio(2, 1)));
        let got = compose_polynomial(&f, &[x, y], 8);
        let s0 = crate::expr::Expression::variable(0, 2).unwrap();
        let s1 = crate::expr::Expression::variable(1, 2).unwrap();
        let one = crate::expr::Expression::one(2);
        let two = crate::expr::Expression::constant(ratio(2, 1), 2);
        let expected = f.compose(&[&one + &s0, &(&s0 * &s1) - &two]).unwrap();
        for (k, c) in expected.terms() {
            assert_eq!(&got.coeff(k), c);
        }
        let nonzero = got.coeffs().iter().filter(|c| **c != ratio(0, 1)).count();
        assert_eq!(nonzero, expected.num_terms());
    }
}
