//! Symbolic expression trees over indexed state variables.
//!
//! An [`Expr`] is an immutable operator tree. Variables are referenced by
//! index into the owning system's ordered variable list; names only matter
//! when parsing or formatting. Evaluation never panics on domain errors:
//! division by zero and `sqrt` of a negative value produce non-finite
//! results that callers test with [`f64::is_finite`].

mod canonical;
mod matching;
mod parse;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use canonical::{
    canonicalize, CanonicalForm, CanonicalizeError, Factor, FuncKind, Monomial, Term, DEFAULT_COEFF_EPSILON,
};
pub use matching::{structural_match, MatchVerdict, DEFAULT_COEFF_RTOL};
pub use parse::{parse, parse_infer, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl UnaryOp {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Neg => -x,
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Sqrt => x.sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Sqrt => "sqrt",
        }
    }
}

impl BinaryOp {
    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, BinaryOp::Add | BinaryOp::Mul)
    }
}

/// An operator usable in a function set or a nesting constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Op {
    Unary(UnaryOp),
    Binary(BinaryOp),
}

impl Op {
    pub const ALL: [Op; 8] = [
        Op::Binary(BinaryOp::Add),
        Op::Binary(BinaryOp::Sub),
        Op::Binary(BinaryOp::Mul),
        Op::Binary(BinaryOp::Div),
        Op::Unary(UnaryOp::Neg),
        Op::Unary(UnaryOp::Sin),
        Op::Unary(UnaryOp::Cos),
        Op::Unary(UnaryOp::Sqrt),
    ];

    pub fn arity(self) -> usize {
        match self {
            Op::Unary(_) => 1,
            Op::Binary(_) => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Unary(u) => u.name(),
            Op::Binary(BinaryOp::Add) => "add",
            Op::Binary(BinaryOp::Sub) => "sub",
            Op::Binary(BinaryOp::Mul) => "mul",
            Op::Binary(BinaryOp::Div) => "div",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown operator `{0}` (expected one of add, sub, mul, div, neg, sin, cos, sqrt)")]
pub struct UnknownOp(pub String);

impl FromStr for Op {
    type Err = UnknownOp;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "add" | "+" => Op::Binary(BinaryOp::Add),
            "sub" | "-" | "−" => Op::Binary(BinaryOp::Sub),
            "mul" | "*" | "×" => Op::Binary(BinaryOp::Mul),
            "div" | "/" | "÷" => Op::Binary(BinaryOp::Div),
            "neg" => Op::Unary(UnaryOp::Neg),
            "sin" => Op::Unary(UnaryOp::Sin),
            "cos" => Op::Unary(UnaryOp::Cos),
            "sqrt" => Op::Unary(UnaryOp::Sqrt),
            other => return Err(UnknownOp(other.to_string())),
        })
    }
}

impl TryFrom<String> for Op {
    type Error = UnknownOp;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Op> for String {
    fn from(op: Op) -> String {
        op.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("variable index {index} out of range for a point of dimension {dim}")]
    VariableOutOfRange { index: usize, dim: usize },
    #[error("column length mismatch: expected {expected}, found {found}")]
    ColumnLength { expected: usize, found: usize },
}

/// Immutable expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        Expr::Unary(op, Box::new(a))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Add, a, b)
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Mul, a, b)
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Div, a, b)
    }

    pub fn sin(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Sin, a)
    }

    pub fn cos(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Cos, a)
    }

    pub fn neg(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Neg, a)
    }

    /// The root operator, if this node is not a terminal.
    pub fn op(&self) -> Option<Op> {
        match self {
            Expr::Unary(u, _) => Some(Op::Unary(*u)),
            Expr::Binary(b, _, _) => Some(Op::Binary(*b)),
            _ => None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Expr::Const(_) | Expr::Var(_))
    }

    /// Evaluates at a single point. Fails only if a variable index is out of
    /// range; arithmetic domain errors come back as non-finite values.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, ExprError> {
        if let Some(max) = self.max_var() {
            if max >= point.len() {
                return Err(ExprError::VariableOutOfRange {
                    index: max,
                    dim: point.len(),
                });
            }
        }
        Ok(self.eval_unchecked(point))
    }

    /// Evaluation without the bounds pre-check. Panics on an out-of-range
    /// variable index.
    pub fn eval_unchecked(&self, point: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => point[*i],
            Expr::Unary(op, a) => op.apply(a.eval_unchecked(point)),
            Expr::Binary(op, a, b) => op.apply(a.eval_unchecked(point), b.eval_unchecked(point)),
        }
    }

    /// Evaluates over column-major samples: `columns[v][row]`. All columns
    /// must share the same length.
    pub fn evaluate_columns(&self, columns: &[&[f64]]) -> Result<Vec<f64>, ExprError> {
        let n = columns.first().map_or(0, |c| c.len());
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(ExprError::ColumnLength {
                expected: n,
                found: c.len(),
            });
        }
        if let Some(max) = self.max_var() {
            if max >= columns.len() {
                return Err(ExprError::VariableOutOfRange {
                    index: max,
                    dim: columns.len(),
                });
            }
        }
        Ok(self.eval_columns_unchecked(columns, n))
    }

    pub(crate) fn eval_columns_unchecked(&self, columns: &[&[f64]], n: usize) -> Vec<f64> {
        match self {
            Expr::Const(c) => vec![*c; n],
            Expr::Var(i) => columns[*i].to_vec(),
            Expr::Unary(op, a) => {
                let mut v = a.eval_columns_unchecked(columns, n);
                for x in &mut v {
                    *x = op.apply(*x);
                }
                v
            }
            Expr::Binary(op, a, b) => {
                let mut va = a.eval_columns_unchecked(columns, n);
                let vb = b.eval_columns_unchecked(columns, n);
                match op {
                    BinaryOp::Add => va.iter_mut().zip(&vb).for_each(|(x, y)| *x += y),
                    BinaryOp::Sub => va.iter_mut().zip(&vb).for_each(|(x, y)| *x -= y),
                    BinaryOp::Mul => va.iter_mut().zip(&vb).for_each(|(x, y)| *x *= y),
                    BinaryOp::Div => va.iter_mut().zip(&vb).for_each(|(x, y)| *x /= y),
                }
                va
            }
        }
    }

    /// Total node count.
    pub fn complexity(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.complexity(),
            Expr::Binary(_, a, b) => 1 + a.complexity() + b.complexity(),
        }
    }

    /// Longest root-to-leaf path, counted in edges (a lone terminal has depth 0).
    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 0,
            Expr::Unary(_, a) => 1 + a.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Unary(_, a) => a.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    /// Sorted, deduplicated variable indices appearing in the tree.
    pub fn variables(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Var(i) = e {
                out.push(*i);
            }
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Unary(_, a) => a.visit(f),
            Expr::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    /// Subtree at a pre-order index (`0` is the root).
    pub fn subtree(&self, index: usize) -> Option<&Expr> {
        let mut i = index;
        self.subtree_inner(&mut i)
    }

    fn subtree_inner(&self, i: &mut usize) -> Option<&Expr> {
        if *i == 0 {
            return Some(self);
        }
        *i -= 1;
        match self {
            Expr::Unary(_, a) => a.subtree_inner(i),
            Expr::Binary(_, a, b) => a.subtree_inner(i).or_else(|| b.subtree_inner(i)),
            _ => None,
        }
    }

    /// Copy of the tree with the subtree at pre-order `index` replaced.
    pub fn replace_subtree(&self, index: usize, replacement: Expr) -> Expr {
        let mut i = index;
        let mut repl = Some(replacement);
        self.replace_inner(&mut i, &mut repl)
    }

    fn replace_inner(&self, i: &mut usize, repl: &mut Option<Expr>) -> Expr {
        if repl.is_none() {
            return self.clone();
        }
        if *i == 0 {
            return repl.take().expect("replacement consumed once");
        }
        *i -= 1;
        match self {
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(a.replace_inner(i, repl))),
            Expr::Binary(op, a, b) => {
                let na = a.replace_inner(i, repl);
                let nb = b.replace_inner(i, repl);
                Expr::Binary(*op, Box::new(na), Box::new(nb))
            }
            leaf => leaf.clone(),
        }
    }

    /// Parent operator of every node in pre-order (`None` for the root).
    pub fn parent_ops(&self) -> Vec<Option<Op>> {
        fn walk(e: &Expr, parent: Option<Op>, out: &mut Vec<Option<Op>>) {
            out.push(parent);
            match e {
                Expr::Unary(op, a) => walk(a, Some(Op::Unary(*op)), out),
                Expr::Binary(op, a, b) => {
                    walk(a, Some(Op::Binary(*op)), out);
                    walk(b, Some(Op::Binary(*op)), out);
                }
                _ => {}
            }
        }
        let mut out = Vec::with_capacity(self.complexity());
        walk(self, None, &mut out);
        out
    }

    /// Whether any node with operator `outer` has a direct child with
    /// operator `inner`.
    pub fn contains_nesting(&self, outer: Op, inner: Op) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if found || e.op() != Some(outer) {
                return;
            }
            match e {
                Expr::Unary(_, a) => found = a.op() == Some(inner),
                Expr::Binary(_, a, b) => {
                    found = a.op() == Some(inner) || b.op() == Some(inner);
                }
                _ => {}
            }
        });
        found
    }

    /// Constant values in pre-order.
    pub fn constants(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Const(c) = e {
                out.push(*c);
            }
        });
        out
    }

    /// Copy with constants replaced, in pre-order, by `values`.
    pub fn with_constants(&self, values: &[f64]) -> Expr {
        fn walk(e: &Expr, values: &[f64], k: &mut usize) -> Expr {
            match e {
                Expr::Const(c) => {
                    let v = values.get(*k).copied().unwrap_or(*c);
                    *k += 1;
                    Expr::Const(v)
                }
                Expr::Var(i) => Expr::Var(*i),
                Expr::Unary(op, a) => Expr::Unary(*op, Box::new(walk(a, values, k))),
                Expr::Binary(op, a, b) => {
                    let na = walk(a, values, k);
                    let nb = walk(b, values, k);
                    Expr::Binary(*op, Box::new(na), Box::new(nb))
                }
            }
        }
        walk(self, values, &mut 0)
    }

    /// Replaces every variable-free subtree by its value. Subtrees that
    /// evaluate to a non-finite value are kept.
    pub fn fold_constants(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(op, a) => {
                let a = a.fold_constants();
                if let Expr::Const(x) = a {
                    let v = op.apply(x);
                    if v.is_finite() {
                        return Expr::Const(v);
                    }
                }
                Expr::Unary(*op, Box::new(a))
            }
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.fold_constants(), b.fold_constants());
                if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
                    let v = op.apply(*x, *y);
                    if v.is_finite() {
                        return Expr::Const(v);
                    }
                }
                Expr::Binary(*op, Box::new(a), Box::new(b))
            }
        }
    }

    /// Rounds every constant to `digits` significant digits.
    pub fn round_constants(&self, digits: u32) -> Expr {
        let rounded: Vec<f64> = self
            .constants()
            .into_iter()
            .map(|c| round_significant(c, digits))
            .collect();
        self.with_constants(&rounded)
    }

    /// Remaps variable indices through `map` (old index -> new index).
    pub fn remap_variables(&self, map: &[usize]) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => Expr::Var(map[*i]),
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(a.remap_variables(map))),
            Expr::Binary(op, a, b) => {
                Expr::Binary(*op, Box::new(a.remap_variables(map)), Box::new(b.remap_variables(map)))
            }
        }
    }

    /// Formats with the given variable names.
    pub fn display<'a, S: AsRef<str>>(&'a self, names: &'a [S]) -> Displayed<'a, S> {
        Displayed { expr: self, names }
    }

    /// Formats with the given variable names into an owned string.
    pub fn to_text<S: AsRef<str>>(&self, names: &[S]) -> String {
        self.display(names).to_string()
    }
}

pub(crate) fn round_significant(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let text = format!("{:.*e}", digits.saturating_sub(1) as usize, x);
    text.parse().unwrap_or(x)
}

pub struct Displayed<'a, S> {
    expr: &'a Expr,
    names: &'a [S],
}

impl<S: AsRef<str>> fmt::Display for Displayed<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        parse::write_expr(
            self.expr,
            &|i| self.names.get(i).map(|n| n.as_ref().to_string()),
            &mut s,
        );
        f.write_str(&s)
    }
}

/// Variables print as `x0`, `x1`, ... without a name table.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        parse::write_expr(self, &|_| None, &mut s);
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xyz() -> Vec<String> {
        vec!["x".into(), "y".into(), "z".into()]
    }

    #[test]
    fn folds_variable_free_subtrees() {
        let names = xyz();
        let e = parse("sin(x)*(3*(-2 + 1)) + y/(1 - 1)", &names).unwrap();
        // sin(x)*-3 + y/0
        assert_eq!(e.fold_constants().complexity(), 8);
        assert_eq!(e.fold_constants().constants(), vec![-3.0, 0.0]);
        let p = [0.4, 1.3, 0.0];
        let f = parse("x*cos(0.5*2) - sqrt(4)*y", &names).unwrap();
        assert!((f.fold_constants().eval_unchecked(&p) - f.eval_unchecked(&p)).abs() < 1e-15);
    }

    #[test]
    fn evaluates_lorenz_x_rate() {
        let e = parse("2*(y - x)", &xyz()).unwrap();
        let v = e.evaluate(&[0.6, 2.0, 1.0]).unwrap();
        assert!((v - 2.8).abs() < 1e-12);
    }

    #[test]
    fn division_by_zero_is_non_finite() {
        let e = parse("x / x", &xyz()).unwrap();
        assert!(!e.evaluate(&[0.0, 0.0, 0.0]).unwrap().is_finite());
        let e = parse("sqrt(x)", &xyz()).unwrap();
        assert!(e.evaluate(&[-1.0, 0.0, 0.0]).unwrap().is_nan());
    }

    #[test]
    fn pendulum_at_rest() {
        let e = parse("-9.8*sin(theta)", &["theta", "omega"]).unwrap();
        assert_eq!(e.evaluate(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_variable_is_structural_error() {
        let e = Expr::add(Expr::var(0), Expr::var(3));
        assert_eq!(
            e.evaluate(&[1.0, 2.0]),
            Err(ExprError::VariableOutOfRange { index: 3, dim: 2 })
        );
    }

    #[test]
    fn complexity_counts_nodes() {
        assert_eq!(parse("x", &xyz()).unwrap().complexity(), 1);
        assert_eq!(parse("sin(x) + 2*y", &xyz()).unwrap().complexity(), 6);
        assert_eq!(parse("2*(y - x)", &xyz()).unwrap().complexity(), 5);
        assert_eq!(parse("x*y - 2.6*z", &xyz()).unwrap().complexity(), 7);
    }

    #[test]
    fn subtree_indexing_matches_preorder() {
        let e = parse("sin(x) + 2*y", &xyz()).unwrap();
        assert_eq!(e.subtree(1), Some(&Expr::sin(Expr::var(0))));
        assert_eq!(e.subtree(5), Some(&Expr::var(1)));
        assert_eq!(e.subtree(6), None);
        let r = e.replace_subtree(3, Expr::var(2));
        assert_eq!(r.to_text(&xyz()), "sin(x) + z");
        assert_eq!(e.parent_ops().len(), e.complexity());
    }

    #[test]
    fn nesting_detection() {
        let e = parse("sin(sin(x)) + y", &xyz()).unwrap();
        let sin = Op::Unary(UnaryOp::Sin);
        assert!(e.contains_nesting(sin, sin));
        let e = parse("sin(x + sin(y))", &xyz()).unwrap();
        assert!(!e.contains_nesting(sin, sin));
    }

    #[test]
    fn constants_round_trip() {
        let e = parse("1.5*x + sin(0.25*y) - 3.0", &xyz()).unwrap();
        assert_eq!(e.constants(), vec![1.5, 0.25, 3.0]);
        let e2 = e.with_constants(&[2.0, 1.0, 0.5]);
        assert_eq!(e2.to_text(&xyz()), "2.0*x + sin(1.0*y) - 0.5");
    }

    #[test]
    fn column_evaluation_matches_pointwise() {
        let e = parse("x*y - 2.6*z / (x + 1.0)", &xyz()).unwrap();
        let xs = [0.1, 0.5, -2.0];
        let ys = [1.0, -1.0, 3.0];
        let zs = [2.0, 0.0, 1.5];
        let cols = e.evaluate_columns(&[&xs, &ys, &zs]).unwrap();
        for r in 0..3 {
            let v = e.evaluate(&[xs[r], ys[r], zs[r]]).unwrap();
            assert_eq!(cols[r], v);
        }
    }

    #[test]
    fn op_names_parse() {
        for op in Op::ALL {
            assert_eq!(op.name().parse::<Op>().unwrap(), op);
        }
        assert_eq!("*".parse::<Op>().unwrap(), Op::Binary(BinaryOp::Mul));
        assert!("tan".parse::<Op>().is_err());
    }
}
