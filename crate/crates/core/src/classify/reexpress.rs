//! Replacing degenerate constraints by equivalent regular ones.
//!
//! A nonnegative form `P` vanishes to second order on its own zero set, so
//! `P = 0` never has a full-rank Jacobian there and no chart exists. Two
//! syntactic rewrites recover a regular description of the same set:
//!
//! * `Σ cᵢ·xᵢ^{2pᵢ}` with all `cᵢ` of one sign vanishes exactly on
//!   `{xᵢ = 0 for every participating i}`;
//! * `c·Q^e` vanishes exactly where `Q` does, and `Q` is tried again.
//!
//! Anything else is returned unchanged and marked as flagged.

use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::expr::{Expression, HomogeneousPolynomial};

/// Which rewrite produced the replacement constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReexpressRule {
    EvenPowers,
    PerfectPower,
    PerfectPowerThenEvenPowers,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reexpression {
    pub constraints: Vec<Expression>,
    pub rule: ReexpressRule,
    /// True when no rewrite applied; the zero set is then carried by the
    /// original polynomial and any later conclusion drawn on it is marked.
    pub flagged: bool,
}

/// Rewrites `P = 0` into constraints with the same real zero set.
pub fn reexpress_degenerate(p: &HomogeneousPolynomial) -> Reexpression {
    let e = p.recentered().to_expression();
    if let Some(lin) = even_power_zero_set(&e) {
        return Reexpression { constraints: lin, rule: ReexpressRule::EvenPowers, flagged: false };
    }
    if let Some((root, _)) = perfect_power(&e) {
        if let Some(lin) = even_power_zero_set(&root) {
            return Reexpression {
                constraints: lin,
                rule: ReexpressRule::PerfectPowerThenEvenPowers,
                flagged: false,
            };
        }
        return Reexpression { constraints: vec![primitive(&root)], rule: ReexpressRule::PerfectPower, flagged: false };
    }
    Reexpression { constraints: vec![e], rule: ReexpressRule::Unchanged, flagged: true }
}

/// `{xᵢ = 0}` when `e = Σ cᵢ xᵢ^{2pᵢ}` with like-signed `cᵢ`.
fn even_power_zero_set(e: &Expression) -> Option<Vec<Expression>> {
    if e.is_zero() {
        return None;
    }
    let n = e.nvars();
    let mut sign = None;
    let mut vars = Vec::new();
    for (k, c) in e.terms() {
        let nonzero: Vec<(usize, u32)> = k.iter().copied().enumerate().filter(|(_, p)| *p > 0).collect();
        let [(i, p)] = nonzero.as_slice() else {
            return None;
        };
        if p % 2 == 1 {
            return None;
        }
        let s = c.is_positive();
        if *sign.get_or_insert(s) != s {
            return None;
        }
        vars.push(*i);
    }
    vars.sort_unstable();
    vars.dedup();
    Some(vars.into_iter().map(|i| Expression::variable(i, n).expect("index in range")).collect())
}

/// Finds `(Q, e)` with `e ≥ 2` and `P = c·Q^e`, taking the largest `e`.
///
/// `Q` is built term by term from the lex-leading term: if
/// `P/c = (Q₀ + R)^e` then the leading term of `P/c − Q₀^e` is `e·Q₀^{e−1}`
/// times the leading term of `R`.
pub fn perfect_power(p: &Expression) -> Option<(Expression, u32)> {
    let (lead_k, lead_c) = leading_term(p)?;
    let g = lead_k.iter().fold(0u32, |acc, &v| acc.gcd(&v));
    let total: u32 = lead_k.iter().sum();
    let mut es: Vec<u32> = (2..=g).filter(|e| g.is_multiple_of(*e) && total.is_multiple_of(*e)).collect();
    es.reverse();
    let normalized = p.scale(&(BigRational::one() / lead_c.clone()));
    for e in es {
        if let Some(q) = root_of(&normalized, &lead_k, e) {
            return Some((q, e));
        }
    }
    None
}

fn root_of(p: &Expression, lead: &[u32], e: u32) -> Option<Expression> {
    let n = p.nvars();
    let q_lead: Vec<u32> = lead.iter().map(|v| v / e).collect();
    let mut q = Expression::from_terms(n, [(q_lead.clone(), BigRational::one())]).ok()?;
    let e_big = BigRational::from_integer(e.into());
    // Q has at most as many terms as there are monomials of its degree.
    for _ in 0..=p.num_terms() + 1 {
        let diff = p - &q.pow(e);
        let Some((dk, dc)) = leading_term(&diff) else {
            return Some(q);
        };
        // LT(diff) = e·LT(Q)^{e−1}·T
        let base: Vec<u32> = q_lead.iter().map(|v| v * (e - 1)).collect();
        let mut tk = Vec::with_capacity(n);
        for (a, b) in dk.iter().zip(&base) {
            tk.push(a.checked_sub(*b)?);
        }
        if tk >= q_lead {
            return None;
        }
        let t = Expression::from_terms(n, [(tk, dc / &e_big)]).ok()?;
        q = &q + &t;
    }
    None
}

fn leading_term(p: &Expression) -> Option<(Vec<u32>, BigRational)> {
    p.terms().max_by(|a, b| a.0.cmp(b.0)).map(|(k, c)| (k.clone(), c.clone()))
}

/// Scales so the lex-leading coefficient is one.
fn primitive(q: &Expression) -> Expression {
    match leading_term(q) {
        Some((_, c)) if !c.is_zero() => q.scale(&(BigRational::one() / c)),
        _ => q.clone(),
    }
}
