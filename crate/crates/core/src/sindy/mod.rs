//! Sparse identification of nonlinear dynamics.
//!
//! Each derivative column is regressed separately onto a library of candidate
//! terms `Θ(X)` with one of three sparsity-promoting solvers.

mod library;
mod solvers;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::expr::{Expr, ParseError};
use crate::odeint::Trajectory;

pub use library::{library_matrix, Generator, LibrarySpec};
pub use solvers::{lstsq, omp, sr3, stlsq, LeastSquares};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SindyError {
    #[error("candidate library is empty")]
    EmptyLibrary,
    #[error("trajectory has no derivatives")]
    NoDerivatives,
    #[error("library has {rows} rows but targets have {targets}")]
    Shape { rows: usize, targets: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("bad library template `{template}`: {source}")]
    Template { template: String, source: ParseError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StlsqParams {
    pub threshold: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_stlsq_iter")]
    pub max_iter: usize,
}

fn default_stlsq_iter() -> usize {
    20
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Thresholder {
    #[default]
    L0,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sr3Params {
    pub threshold: f64,
    #[serde(default = "one")]
    pub nu: f64,
    #[serde(default = "default_sr3_tol")]
    pub tol: f64,
    #[serde(default)]
    pub thresholder: Thresholder,
    #[serde(default = "default_sr3_iter")]
    pub max_iter: usize,
    /// Refit ordinary least squares on the final support.
    #[serde(default = "yes")]
    pub unbias: bool,
}

fn one() -> f64 {
    1.0
}
fn default_sr3_tol() -> f64 {
    1e-5
}
fn default_sr3_iter() -> usize {
    30
}
fn yes() -> bool {
    true
}

impl Sr3Params {
    /// Magnitude below which the proximal step zeroes a coefficient.
    pub fn cutoff(&self) -> f64 {
        match self.thresholder {
            Thresholder::L0 => (2.0 * self.threshold / self.nu).sqrt(),
            Thresholder::L1 => self.threshold / self.nu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmpParams {
    pub n_nonzero: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Stlsq(StlsqParams),
    Sr3(Sr3Params),
    Omp(OmpParams),
}

impl Optimizer {
    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Stlsq(_) => "stlsq",
            Optimizer::Sr3(_) => "sr3",
            Optimizer::Omp(_) => "omp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SindyConfig {
    pub library: LibrarySpec,
    pub optimizer: Optimizer,
    #[serde(default)]
    pub normalize_columns: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub rank_deficient: bool,
}

/// Solution of one regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub coefficients: DVector<f64>,
    pub diagnostics: FitDiagnostics,
}

/// Coefficients `Ξ` (terms × variables) with their term descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    pub variables: Vec<String>,
    pub terms: Vec<Expr>,
    pub coefficients: DMatrix<f64>,
    pub diagnostics: Vec<FitDiagnostics>,
}

/// Row-per-term view of a [`SparseModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTable {
    pub variables: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub term: String,
    pub coefficients: Vec<f64>,
}

impl SparseModel {
    pub fn term_names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.to_text(&self.variables)).collect()
    }

    pub fn table(&self) -> ModelTable {
        ModelTable {
            variables: self.variables.clone(),
            rows: self
                .term_names()
                .into_iter()
                .enumerate()
                .map(|(i, term)| TableRow {
                    term,
                    coefficients: self.coefficients.row(i).iter().copied().collect(),
                })
                .collect(),
        }
    }

    /// Indices of non-zero terms for variable `j`.
    pub fn support(&self, j: usize) -> Vec<usize> {
        self.coefficients
            .column(j)
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// One expression per variable; coefficients with magnitude at most
    /// `zero_epsilon` are omitted.
    pub fn expressions(&self, zero_epsilon: f64) -> Vec<Expr> {
        (0..self.variables.len())
            .map(|j| {
                let col: Vec<f64> = self.coefficients.column(j).iter().copied().collect();
                model_to_expression(&self.terms, &col, zero_epsilon)
            })
            .collect()
    }
}

fn scale_term(c: f64, term: &Expr) -> Expr {
    match term {
        Expr::Const(k) => Expr::constant(c * k),
        Expr::Binary(crate::expr::BinaryOp::Mul, a, b) => Expr::mul(scale_term(c, a), (**b).clone()),
        t => Expr::mul(Expr::constant(c), t.clone()),
    }
}

/// `Σ ξ_k θ_k` as a left-folded sum, negative terms written as subtraction.
pub fn model_to_expression(terms: &[Expr], coefficients: &[f64], zero_epsilon: f64) -> Expr {
    let mut acc: Option<Expr> = None;
    for (t, &c) in terms.iter().zip(coefficients) {
        if c.abs() <= zero_epsilon {
            continue;
        }
        acc = Some(match acc {
            None => scale_term(c, t),
            Some(a) if c < 0.0 => Expr::sub(a, scale_term(-c, t)),
            Some(a) => Expr::add(a, scale_term(c, t)),
        });
    }
    acc.unwrap_or(Expr::constant(0.0))
}

fn validate(optimizer: &Optimizer, n_terms: usize) -> Result<(), SindyError> {
    let bad = |m: String| Err(SindyError::Parameter(m));
    match optimizer {
        Optimizer::Stlsq(p) => {
            if !(p.threshold >= 0.0) || !(p.alpha >= 0.0) {
                return bad("stlsq threshold and alpha must be non-negative".into());
            }
        }
        Optimizer::Sr3(p) => {
            if !(p.nu > 0.0) || !(p.tol > 0.0) || !(p.threshold >= 0.0) {
                return bad("sr3 needs nu > 0, tol > 0, threshold >= 0".into());
            }
        }
        Optimizer::Omp(p) => {
            if p.n_nonzero == 0 || p.n_nonzero > n_terms {
                return bad(format!("omp n_nonzero must be in 1..={n_terms}, got {}", p.n_nonzero));
            }
        }
    }
    Ok(())
}

/// Fits every column of `targets` against `theta`.
pub fn fit_matrix(
    theta: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    optimizer: &Optimizer,
    normalize_columns: bool,
    exec: Exec,
) -> Result<(DMatrix<f64>, Vec<FitDiagnostics>), SindyError> {
    if theta.nrows() != targets.nrows() {
        return Err(SindyError::Shape {
            rows: theta.nrows(),
            targets: targets.nrows(),
        });
    }
    validate(optimizer, theta.ncols())?;
    let norms: Vec<f64> = theta
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if normalize_columns && n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = theta.clone();
    if normalize_columns {
        for (j, n) in norms.iter().enumerate() {
            scaled.column_mut(j).unscale_mut(*n);
        }
    }
    let fits = exec.map_range(targets.ncols(), |j| {
        let y: DVector<f64> = targets.column(j).into_owned();
        match optimizer {
            Optimizer::Stlsq(p) => stlsq(&scaled, &y, p.threshold, p.alpha, p.max_iter),
            Optimizer::Sr3(p) => sr3(&scaled, &y, p),
            Optimizer::Omp(p) => omp(&scaled, &y, p.n_nonzero),
        }
    });
    let mut xi = DMatrix::zeros(theta.ncols(), targets.ncols());
    let mut diags = Vec::with_capacity(fits.len());
    for (j, f) in fits.into_iter().enumerate() {
        for (i, c) in f.coefficients.iter().enumerate() {
            xi[(i, j)] = c / norms[i];
        }
        diags.push(f.diagnostics);
    }
    Ok((xi, diags))
}

/// Builds the library on `traj` and fits its finite-difference derivatives.
pub fn fit(traj: &Trajectory, cfg: &SindyConfig, exec: Exec) -> Result<SparseModel, SindyError> {
    let derivs = traj.derivative_columns().ok_or(SindyError::NoDerivatives)?;
    let terms = cfg.library.terms(&traj.variables)?;
    let theta = library_matrix(&terms, &traj.state_columns());
    let n = traj.len();
    let targets = DMatrix::from_fn(n, derivs.len(), |i, j| derivs[j][i]);
    let (coefficients, diagnostics) = fit_matrix(&theta, &targets, &cfg.optimizer, cfg.normalize_columns, exec)?;
    Ok(SparseModel {
        variables: traj.variables.clone(),
        terms,
        coefficients,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn expressions_from_coefficients() {
        let names = ["S", "I", "R"];
        let terms = LibrarySpec::custom(&["x", "x*y"]).terms(&names).unwrap();
        // S, I, R, S*I, S*R, I*R
        let e = model_to_expression(&terms, &[0.0, -0.1, 0.0, 0.3, 0.0, 0.0], 0.0);
        assert_eq!(e.to_text(&names), "-0.1*I + 0.3*S*I");
        let e = model_to_expression(&terms, &[0.0, 0.0, 0.0, 0.3, 0.0, 0.0], 0.0);
        assert_eq!(e.to_text(&names), "0.3*S*I");
        let e = model_to_expression(&terms, &[0.0, -0.1, 0.0, 0.3, 0.0, 0.0], 0.2);
        assert_eq!(e.to_text(&names), "0.3*S*I");
        let e = model_to_expression(&terms, &[0.0; 6], 0.0);
        assert_eq!(e, Expr::constant(0.0));
    }

    #[test]
    fn reordered_terms_print_like_tables() {
        let names = ["S", "I"];
        let terms = vec![parse("S*I", &names).unwrap(), parse("I", &names).unwrap()];
        let e = model_to_expression(&terms, &[0.3, -0.1], 0.0);
        assert_eq!(e.to_text(&names), "0.3*S*I - 0.1*I");
        let terms = vec![Expr::constant(1.0), parse("sin(S)", &names).unwrap()];
        let e = model_to_expression(&terms, &[2.0, -9.8], 0.0);
        assert_eq!(e.to_text(&names), "2.0 - 9.8*sin(S)");
    }

    #[test]
    fn optimizer_from_toml() {
        #[derive(Deserialize)]
        struct W {
            optimizer: Optimizer,
        }
        let w: W = toml::from_str("[optimizer]\nkind = \"sr3\"\nthreshold = 0.4\nthresholder = \"l1\"").unwrap();
        let Optimizer::Sr3(p) = w.optimizer else { panic!() };
        assert_eq!(p.thresholder, Thresholder::L1);
        assert_eq!((p.nu, p.max_iter, p.unbias), (1.0, 30, true));
        assert!((p.cutoff() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn omp_bounds_checked() {
        let theta = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        for n in [0, 3] {
            let r = fit_matrix(
                &theta,
                &y,
                &Optimizer::Omp(OmpParams { n_nonzero: n }),
                false,
                Exec::Sequential,
            );
            assert!(matches!(r, Err(SindyError::Parameter(_))));
        }
    }
}
