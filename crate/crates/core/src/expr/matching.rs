//! Structural comparison of a recovered expression against a reference.
//!
//! Two expressions share a *form* when their canonical terms have the same
//! multiset of signatures. A transcendental factor applied to a linear
//! combination of variables is signed by the function and the variable set
//! alone, so `sin(1.08*x)` and `sin(x)` belong to the same family.

use serde::{Deserialize, Serialize};

use super::canonical::{canonicalize, CanonicalForm, Factor, FuncKind, Term, DEFAULT_COEFF_EPSILON};
use super::Expr;

pub const DEFAULT_COEFF_RTOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchVerdict {
    ExactForm,
    FormOnly,
    Mismatch,
}

impl MatchVerdict {
    /// Whether the structural form counts as identified.
    pub fn is_recovered(self) -> bool {
        !matches!(self, MatchVerdict::Mismatch)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum FamilyFactor {
    Var(usize),
    Func(FuncKind, InnerFamily),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum InnerFamily {
    /// Affine in these variables.
    Linear(Vec<usize>),
    General(Vec<Vec<(FamilyFactor, u32)>>),
}

type Family = Vec<(FamilyFactor, u32)>;

fn term_family(t: &Term) -> Family {
    t.monomial.0.iter().map(|(f, p)| (factor_family(f), *p)).collect()
}

fn factor_family(f: &Factor) -> FamilyFactor {
    match f {
        Factor::Var(i) => FamilyFactor::Var(*i),
        Factor::Func(k, inner) => FamilyFactor::Func(*k, inner_family(inner)),
    }
}

fn inner_family(form: &CanonicalForm) -> InnerFamily {
    let mut vars = Vec::new();
    for t in form.terms() {
        match t.monomial.0.as_slice() {
            [] => {}
            [(Factor::Var(i), 1)] => vars.push(*i),
            _ => {
                let mut fams: Vec<Family> = form.terms().iter().map(term_family).collect();
                fams.sort();
                return InnerFamily::General(fams);
            }
        }
    }
    InnerFamily::Linear(vars)
}

/// Outer coefficient followed by the coefficients of every inner form.
fn term_coefficients(t: &Term, out: &mut Vec<f64>) {
    out.push(t.coeff);
    for (f, _) in &t.monomial.0 {
        if let Factor::Func(_, inner) = f {
            for it in inner.terms() {
                term_coefficients(it, out);
            }
        }
    }
}

fn profiles(form: &CanonicalForm) -> Vec<(Family, Vec<f64>)> {
    let mut out: Vec<(Family, Vec<f64>)> = form
        .terms()
        .iter()
        .map(|t| {
            let mut coeffs = Vec::new();
            term_coefficients(t, &mut coeffs);
            (term_family(t), coeffs)
        })
        .collect();
    out.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| {
            a.1.iter()
                .zip(&b.1)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or_else(|| a.1.len().cmp(&b.1.len()))
        })
    });
    out
}

fn close(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs())
}

fn all_close(a: &[f64], b: &[f64], rtol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y, rtol))
}

fn compare_forms(candidate: &CanonicalForm, truth: &CanonicalForm, rtol: f64) -> MatchVerdict {
    let pc = profiles(candidate);
    let pt = profiles(truth);
    if pc.len() != pt.len() || pc.iter().zip(&pt).any(|(a, b)| a.0 != b.0) {
        return MatchVerdict::Mismatch;
    }
    if pc.iter().zip(&pt).all(|(a, b)| all_close(&a.1, &b.1, rtol)) {
        MatchVerdict::ExactForm
    } else {
        MatchVerdict::FormOnly
    }
}

/// Shape string with constants abstracted away.
fn shape(e: &Expr) -> String {
    match e {
        Expr::Const(_) => "c".into(),
        Expr::Var(i) => format!("v{i}"),
        Expr::Unary(op, a) => format!("{}({})", op.name(), shape(a)),
        Expr::Binary(op, a, b) => format!("({} {} {})", shape(a), op.symbol(), shape(b)),
    }
}

/// Orders the operands of commutative nodes by shape, then by constants.
fn sort_commutative(e: &Expr) -> Expr {
    match e {
        Expr::Unary(op, a) => Expr::unary(*op, sort_commutative(a)),
        Expr::Binary(op, a, b) => {
            let a = sort_commutative(a);
            let b = sort_commutative(b);
            if op.is_commutative() && operand_key(&b) < operand_key(&a) {
                Expr::binary(*op, b, a)
            } else {
                Expr::binary(*op, a, b)
            }
        }
        leaf => leaf.clone(),
    }
}

fn operand_key(e: &Expr) -> (String, Vec<OrdF64>) {
    (shape(e), e.constants().into_iter().map(OrdF64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.0.total_cmp(&other.0))
    }
}

fn tree_match(candidate: &Expr, truth: &Expr, rtol: f64) -> MatchVerdict {
    let c = sort_commutative(candidate);
    let t = sort_commutative(truth);
    if shape(&c) != shape(&t) {
        return MatchVerdict::Mismatch;
    }
    if all_close(&c.constants(), &t.constants(), rtol) {
        MatchVerdict::ExactForm
    } else {
        MatchVerdict::FormOnly
    }
}

/// Compares `candidate` with `truth`. Expressions outside the normalizable
/// fragment fall back to tree isomorphism modulo commutativity.
pub fn structural_match(candidate: &Expr, truth: &Expr, coeff_rtol: f64) -> MatchVerdict {
    match (
        canonicalize(candidate, DEFAULT_COEFF_EPSILON),
        canonicalize(truth, DEFAULT_COEFF_EPSILON),
    ) {
        (Ok(c), Ok(t)) => compare_forms(&c, &t, coeff_rtol),
        _ => tree_match(candidate, truth, coeff_rtol),
    }
}
