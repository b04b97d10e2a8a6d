use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::SindyError;
use crate::expr::{parse_infer, Expr};

/// A family of candidate terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// All monomials up to `degree`, in graded lexicographic order.
    Polynomial {
        degree: u32,
        #[serde(default = "yes")]
        bias: bool,
    },
    /// `sin(k*x)` and `cos(k*x)` for `k = 1..=n` and every variable.
    Fourier { n: u32 },
    /// Each template is instantiated over every ordered selection of
    /// distinct variables `i1 < i2 < ...`, one per template variable.
    /// `"x"` yields every variable, `"x*y"` every pairwise product.
    Custom { templates: Vec<String> },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibrarySpec {
    pub generators: Vec<Generator>,
    /// Term texts (as printed with the state variable names) to drop.
    #[serde(default)]
    pub exclude: Vec<String>,
}

impl LibrarySpec {
    pub fn polynomial(degree: u32) -> Self {
        LibrarySpec {
            generators: vec![Generator::Polynomial { degree, bias: true }],
            exclude: Vec::new(),
        }
    }

    pub fn fourier(n: u32) -> Self {
        LibrarySpec {
            generators: vec![Generator::Fourier { n }],
            exclude: Vec::new(),
        }
    }

    pub fn custom<S: AsRef<str>>(templates: &[S]) -> Self {
        LibrarySpec {
            generators: vec![Generator::Custom {
                templates: templates.iter().map(|s| s.as_ref().to_string()).collect(),
            }],
            exclude: Vec::new(),
        }
    }

    /// Concatenation of both generator lists.
    pub fn union(mut self, other: LibrarySpec) -> Self {
        self.generators.extend(other.generators);
        self.exclude.extend(other.exclude);
        self
    }

    pub fn excluding<S: AsRef<str>>(mut self, terms: &[S]) -> Self {
        self.exclude.extend(terms.iter().map(|s| s.as_ref().to_string()));
        self
    }

    /// Candidate terms over `dim` variables, duplicates removed by printed form.
    pub fn terms<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<Expr>, SindyError> {
        let dim = names.len();
        let mut raw = Vec::new();
        for g in &self.generators {
            match g {
                Generator::Polynomial { degree, bias } => {
                    let start = if *bias { 0 } else { 1 };
                    for d in start..=*degree as usize {
                        for combo in multisets(dim, d) {
                            raw.push(product(&combo));
                        }
                    }
                }
                Generator::Fourier { n } => {
                    for k in 1..=*n {
                        for i in 0..dim {
                            let arg = if k == 1 {
                                Expr::var(i)
                            } else {
                                Expr::mul(Expr::constant(k as f64), Expr::var(i))
                            };
                            raw.push(Expr::sin(arg.clone()));
                            raw.push(Expr::cos(arg));
                        }
                    }
                }
                Generator::Custom { templates } => {
                    for t in templates {
                        let (e, vars) = parse_infer(t).map_err(|source| SindyError::Template {
                            template: t.clone(),
                            source,
                        })?;
                        for combo in subsets(dim, vars.len()) {
                            raw.push(e.remap_variables(&combo));
                        }
                    }
                }
            }
        }
        let mut seen = HashSet::new();
        let excluded: HashSet<&str> = self.exclude.iter().map(String::as_str).collect();
        let terms: Vec<Expr> = raw
            .into_iter()
            .filter(|e| {
                let text = e.to_text(names);
                !excluded.contains(text.as_str()) && seen.insert(text)
            })
            .collect();
        if terms.is_empty() {
            return Err(SindyError::EmptyLibrary);
        }
        Ok(terms)
    }
}

fn product(indices: &[usize]) -> Expr {
    let mut it = indices.iter().map(|&i| Expr::var(i));
    match it.next() {
        None => Expr::constant(1.0),
        Some(first) => it.fold(first, Expr::mul),
    }
}

/// Non-decreasing index tuples of length `k` over `0..n`, lexicographic.
fn multisets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, k, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Strictly increasing index tuples of length `k` over `0..n`, lexicographic.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    multisets(n, k)
        .into_iter()
        .filter(|c| c.windows(2).all(|w| w[0] < w[1]))
        .collect()
}

/// Evaluates `terms` on state columns; one row per sample.
pub fn library_matrix(terms: &[Expr], columns: &[Vec<f64>]) -> DMatrix<f64> {
    let n = columns.first().map_or(0, Vec::len);
    let cols: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
    let mut theta = DMatrix::zeros(n, terms.len());
    for (j, t) in terms.iter().enumerate() {
        let v = t.eval_columns_unchecked(&cols, n);
        theta.column_mut(j).copy_from_slice(&v);
    }
    theta
}
