//! Polynomial-plus-transcendental normal form.
//!
//! A [`CanonicalForm`] is a sum of [`Term`]s, each a real coefficient times a
//! [`Monomial`]: a sorted product of variable powers and transcendental
//! factors (`sin`, `cos`, `sqrt` applied to an inner canonical form).
//! Products are distributed over sums, constants folded and like terms
//! merged. Division is only normalizable by a constant divisor.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use super::{BinaryOp, Expr, UnaryOp};

pub const DEFAULT_COEFF_EPSILON: f64 = 1e-9;

/// Expansion beyond this many terms is treated as not normalizable.
const MAX_TERMS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonicalizeError {
    #[error("division by a non-constant expression")]
    NonConstantDivisor,
    #[error("constant subexpression evaluates to a non-finite value")]
    NonFinite,
    #[error("expansion exceeds {MAX_TERMS} terms")]
    TooLarge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FuncKind {
    Sin,
    Cos,
    Sqrt,
}

impl FuncKind {
    fn apply(self, x: f64) -> f64 {
        match self {
            FuncKind::Sin => x.sin(),
            FuncKind::Cos => x.cos(),
            FuncKind::Sqrt => x.sqrt(),
        }
    }

    fn unary_op(self) -> UnaryOp {
        match self {
            FuncKind::Sin => UnaryOp::Sin,
            FuncKind::Cos => UnaryOp::Cos,
            FuncKind::Sqrt => UnaryOp::Sqrt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Factor {
    Var(usize),
    Func(FuncKind, Box<CanonicalForm>),
}

/// Sorted `(factor, power)` pairs; the empty monomial is the constant 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Monomial(pub Vec<(Factor, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn is_constant(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, p)| p).sum()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut map: BTreeMap<Factor, u32> = BTreeMap::new();
        for (f, p) in self.0.iter().chain(&other.0) {
            *map.entry(f.clone()).or_insert(0) += p;
        }
        Monomial(map.into_iter().collect())
    }

    fn to_expr(&self) -> Option<Expr> {
        let mut acc: Option<Expr> = None;
        for (f, p) in &self.0 {
            let base = match f {
                Factor::Var(i) => Expr::Var(*i),
                Factor::Func(k, inner) => Expr::unary(k.unary_op(), inner.to_expr()),
            };
            for _ in 0..*p {
                acc = Some(match acc {
                    None => base.clone(),
                    Some(a) => Expr::mul(a, base.clone()),
                });
            }
        }
        acc
    }
}

#[derive(Debug, Clone)]
pub struct Term {
    pub coeff: f64,
    pub monomial: Monomial,
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Term {}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        self.monomial
            .cmp(&other.monomial)
            .then_with(|| self.coeff.total_cmp(&other.coeff))
    }
}

/// Sum of terms with distinct monomials, sorted by monomial.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct CanonicalForm {
    terms: Vec<Term>,
}

type Poly = BTreeMap<Monomial, f64>;

impl Term {
    pub fn to_expr(&self) -> Expr {
        CanonicalForm {
            terms: vec![self.clone()],
        }
        .to_expr()
    }
}

impl CanonicalForm {
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// `Some(c)` when the form is a constant (zero included).
    pub fn as_constant(&self) -> Option<f64> {
        match self.terms.as_slice() {
            [] => Some(0.0),
            [t] if t.monomial.is_constant() => Some(t.coeff),
            _ => None,
        }
    }

    fn from_poly(poly: Poly, eps: f64) -> Self {
        let terms = poly
            .into_iter()
            .filter(|(_, c)| c.abs() >= eps)
            .map(|(monomial, coeff)| Term {
                // normalizes -0.0
                coeff: coeff + 0.0,
                monomial,
            })
            .collect();
        CanonicalForm { terms }
    }

    /// Rebuilds an expression tree: a left-folded sum of
    /// `coefficient * factor * ...` products, negative coefficients after the
    /// first term written as subtraction.
    pub fn to_expr(&self) -> Expr {
        let mut acc: Option<Expr> = None;
        for t in &self.terms {
            let negate = acc.is_some() && t.coeff < 0.0;
            let c = if negate { -t.coeff } else { t.coeff };
            let term = match t.monomial.to_expr() {
                None => Expr::Const(c),
                Some(m) if c == 1.0 => m,
                Some(m) => prepend_coeff(c, m),
            };
            acc = Some(match acc {
                None => term,
                Some(a) if negate => Expr::sub(a, term),
                Some(a) => Expr::add(a, term),
            });
        }
        acc.unwrap_or(Expr::Const(0.0))
    }
}

/// `c * f1 * f2 ...` as a left-folded product with the coefficient first.
fn prepend_coeff(c: f64, product: Expr) -> Expr {
    match product {
        Expr::Binary(BinaryOp::Mul, a, b) => Expr::mul(prepend_coeff(c, *a), *b),
        other => Expr::mul(Expr::Const(c), other),
    }
}

/// Normalizes `expr`; coefficients with magnitude below `coeff_epsilon` are
/// dropped.
pub fn canonicalize(expr: &Expr, coeff_epsilon: f64) -> Result<CanonicalForm, CanonicalizeError> {
    let poly = to_poly(expr, coeff_epsilon)?;
    Ok(CanonicalForm::from_poly(poly, coeff_epsilon))
}

fn constant_poly(c: f64) -> Poly {
    let mut p = Poly::new();
    if c != 0.0 {
        p.insert(Monomial::one(), c);
    }
    p
}

fn poly_constant(p: &Poly, eps: f64) -> Option<f64> {
    let mut value = 0.0;
    for (m, c) in p {
        if m.is_constant() {
            value = *c;
        } else if c.abs() >= eps {
            return None;
        }
    }
    Some(value)
}

fn add_into(acc: &mut Poly, other: Poly, sign: f64) {
    for (m, c) in other {
        *acc.entry(m).or_insert(0.0) += sign * c;
    }
}

fn to_poly(expr: &Expr, eps: f64) -> Result<Poly, CanonicalizeError> {
    let poly = match expr {
        Expr::Const(c) => {
            if !c.is_finite() {
                return Err(CanonicalizeError::NonFinite);
            }
            constant_poly(*c)
        }
        Expr::Var(i) => {
            let mut p = Poly::new();
            p.insert(Monomial(vec![(Factor::Var(*i), 1)]), 1.0);
            p
        }
        Expr::Unary(UnaryOp::Neg, a) => {
            let mut p = to_poly(a, eps)?;
            p.values_mut().for_each(|c| *c = -*c);
            p
        }
        Expr::Unary(op, a) => {
            let kind = match op {
                UnaryOp::Sin => FuncKind::Sin,
                UnaryOp::Cos => FuncKind::Cos,
                UnaryOp::Sqrt => FuncKind::Sqrt,
                UnaryOp::Neg => unreachable!(),
            };
            let inner = CanonicalForm::from_poly(to_poly(a, eps)?, eps);
            match inner.as_constant() {
                Some(c) => {
                    let v = kind.apply(c);
                    if !v.is_finite() {
                        return Err(CanonicalizeError::NonFinite);
                    }
                    constant_poly(v)
                }
                None => {
                    let mut p = Poly::new();
                    p.insert(Monomial(vec![(Factor::Func(kind, Box::new(inner)), 1)]), 1.0);
                    p
                }
            }
        }
        Expr::Binary(op, a, b) => {
            let pa = to_poly(a, eps)?;
            let pb = to_poly(b, eps)?;
            match op {
                BinaryOp::Add => {
                    let mut acc = pa;
                    add_into(&mut acc, pb, 1.0);
                    acc
                }
                BinaryOp::Sub => {
                    let mut acc = pa;
                    add_into(&mut acc, pb, -1.0);
                    acc
                }
                BinaryOp::Mul => {
                    if pa.len().saturating_mul(pb.len()) > MAX_TERMS {
                        return Err(CanonicalizeError::TooLarge);
                    }
                    let mut acc = Poly::new();
                    for (ma, ca) in &pa {
                        for (mb, cb) in &pb {
                            *acc.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
                        }
                    }
                    acc
                }
                BinaryOp::Div => {
                    let d = poly_constant(&pb, eps).ok_or(CanonicalizeError::NonConstantDivisor)?;
                    if d == 0.0 {
                        return Err(CanonicalizeError::NonFinite);
                    }
                    let mut acc = pa;
                    acc.values_mut().for_each(|c| *c /= d);
                    acc
                }
            }
        }
    };
    if poly.len() > MAX_TERMS {
        return Err(CanonicalizeError::TooLarge);
    }
    Ok(poly)
}
