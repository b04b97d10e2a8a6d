//! Goodness-of-fit metrics and the Wilcoxon signed-rank test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::dynsys::SystemSpec;
use crate::expr::Expr;
use crate::odeint::{integrate_equations, Grid, OdeError, OdeOptions};

pub const DEFAULT_TEST_POINTS: usize = 100;
pub const SIGNIFICANCE: f64 = 0.05;
/// Largest sample size that uses the exact null distribution.
pub const EXACT_LIMIT: usize = 25;
/// Lower bound applied to R² values before plotting.
pub const R2_PLOT_FLOOR: f64 = -2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("need at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("expected {expected} recovered equations, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("reference system failed to integrate: {0}")]
    Reference(OdeError),
}

fn check(pred: &[f64], truth: &[f64]) -> Result<(), StatsError> {
    if pred.len() != truth.len() {
        return Err(StatsError::Length(pred.len(), truth.len()));
    }
    if truth.len() < 2 {
        return Err(StatsError::TooShort(truth.len()));
    }
    Ok(())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, StatsError> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / truth.len() as f64)
}

/// Coefficient of determination. A constant `truth` gives 1 for a perfect
/// prediction and −∞ otherwise.
pub fn r2(pred: &[f64], truth: &[f64]) -> Result<f64, StatsError> {
    check(pred, truth)?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p).powi(2)).sum();
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY });
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// `|1 / ln(mae)|`, with 0 at `mae = 0` and +∞ at `mae = 1`.
pub fn inv_log_mae(mae: f64) -> f64 {
    if mae == 0.0 {
        return 0.0;
    }
    let l = mae.ln();
    if l == 0.0 {
        f64::INFINITY
    } else {
        (1.0 / l).abs()
    }
}

pub fn r2_for_plot(r2: f64) -> f64 {
    if r2.is_nan() {
        R2_PLOT_FLOOR
    } else {
        r2.max(R2_PLOT_FLOOR)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
    /// Every difference was zero.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    /// `min(W+, W−)`.
    pub statistic: f64,
    pub p_value: f64,
    /// Non-zero differences.
    pub n: usize,
    pub method: WilcoxonMethod,
}

/// Non-zero differences, their midranks doubled to integers, and tie sizes.
fn signed_ranks(d: &[f64]) -> (Vec<f64>, Vec<u64>, Vec<usize>) {
    let mut nz: Vec<f64> = d.iter().copied().filter(|x| *x != 0.0).collect();
    nz.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let n = nz.len();
    let mut ranks = vec![0u64; n];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && nz[j].abs() == nz[i].abs() {
            j += 1;
        }
        // positions i+1..=j averaged, doubled: (i+1) + j
        let doubled = (i + 1 + j) as u64;
        ranks[i..j].fill(doubled);
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (nz, ranks, ties)
}

fn rank_sums(nz: &[f64], ranks: &[u64]) -> (u64, u64) {
    let plus = nz.iter().zip(ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let total: u64 = ranks.iter().sum();
    (plus, total - plus)
}

fn degenerate() -> Wilcoxon {
    Wilcoxon {
        statistic: 0.0,
        p_value: 1.0,
        n: 0,
        method: WilcoxonMethod::Degenerate,
    }
}

/// Exact test on paired differences, counting sign assignments by dynamic
/// programming over doubled ranks.
pub fn wilcoxon_exact(d: &[f64]) -> Wilcoxon {
    let (nz, ranks, _) = signed_ranks(d);
    let n = nz.len();
    if n == 0 {
        return degenerate();
    }
    assert!(n < 64, "exact test supports fewer than 64 differences");
    let (plus, minus) = rank_sums(&nz, &ranks);
    let w = plus.min(minus);
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in &ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let below: u64 = counts[..=w as usize].iter().sum();
    let p = (2.0 * below as f64 / (1u64 << n) as f64).min(1.0);
    Wilcoxon {
        statistic: w as f64 / 2.0,
        p_value: p,
        n,
        method: WilcoxonMethod::Exact,
    }
}

/// Normal approximation with tie and continuity corrections.
pub fn wilcoxon_normal(d: &[f64]) -> Wilcoxon {
    let (nz, ranks, ties) = signed_ranks(d);
    let n = nz.len();
    if n == 0 {
        return degenerate();
    }
    let (plus, minus) = rank_sums(&nz, &ranks);
    let w = plus.min(minus) as f64 / 2.0;
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let p = if var <= 0.0 {
        1.0
    } else {
        let diff = w - mean;
        let corrected = if diff < 0.0 { (diff + 0.5).min(0.0) } else { 0.0 };
        let z = corrected / var.sqrt();
        let std = Normal::standard();
        (2.0 * std.cdf(z)).min(1.0)
    };
    Wilcoxon {
        statistic: w,
        p_value: p,
        n,
        method: WilcoxonMethod::Normal,
    }
}

/// Two-sided signed-rank test of `a` against `b`. Exact for up to
/// [`EXACT_LIMIT`] non-zero differences.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<Wilcoxon, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Length(a.len(), b.len()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nonzero = d.iter().filter(|x| **x != 0.0).count();
    Ok(if nonzero <= EXACT_LIMIT {
        wilcoxon_exact(&d)
    } else {
        wilcoxon_normal(&d)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "no significant difference")]
    NoSignificantDifference,
    #[serde(rename = "significant difference")]
    SignificantDifference,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::NoSignificantDifference => "no significant difference",
            Verdict::SignificantDifference => "significant difference",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub variables: Vec<String>,
    #[serde(with = "crate::float_serde::vec")]
    pub mae: Vec<f64>,
    #[serde(with = "crate::float_serde::vec")]
    pub r2: Vec<f64>,
    /// `|1/ln|` of the MAE averaged over variables.
    #[serde(with = "crate::float_serde")]
    pub inv_log_mae: f64,
    #[serde(with = "crate::float_serde::vec")]
    pub wilcoxon_p: Vec<f64>,
    pub verdict: Verdict,
    pub points: usize,
    /// Time at which the recovered system stopped integrating, if it did.
    #[serde(with = "crate::float_serde::option", default)]
    pub diverged_at: Option<f64>,
}

impl MetricReport {
    pub fn mean_mae(&self) -> f64 {
        self.mae.iter().sum::<f64>() / self.mae.len() as f64
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn no_significant_difference(&self) -> bool {
        self.verdict == Verdict::NoSignificantDifference
    }
}

/// Evenly spaced indices into `0..len`, at most `count` of them.
pub fn downsample_indices(len: usize, count: usize) -> Vec<usize> {
    if count >= len || count < 2 {
        return (0..len).collect();
    }
    (0..count)
        .map(|k| ((k as f64) * (len - 1) as f64 / (count - 1) as f64).round() as usize)
        .collect()
}

/// Integrates `spec` and the `recovered` equations from the same initial state
/// and compares the sampled trajectories variable by variable.
pub fn trajectory_compare(
    spec: &SystemSpec,
    recovered: &[Expr],
    rtol: f64,
    atol: f64,
    n_test_points: usize,
) -> Result<MetricReport, StatsError> {
    if recovered.len() != spec.dim() {
        return Err(StatsError::Dimension {
            expected: spec.dim(),
            found: recovered.len(),
        });
    }
    let grid = Grid::new(spec.t0, spec.t1, spec.dt).map_err(StatsError::Reference)?;
    let opts = OdeOptions::with_tolerances(rtol, atol);
    let truth = integrate_equations(&spec.equations, &spec.initial_state, grid, &opts);
    if let Some(e) = truth.failure {
        return Err(StatsError::Reference(e));
    }
    let model_opts = OdeOptions {
        max_steps: 200_000,
        ..opts
    };
    let model = integrate_equations(recovered, &spec.initial_state, grid, &model_opts);
    let diverged_at = model.failure.as_ref().map(|e| e.time_reached().unwrap_or(spec.t0));

    let idx: Vec<usize> = downsample_indices(truth.times.len(), n_test_points)
        .into_iter()
        .filter(|&i| i < model.states.len())
        .collect();
    let m = spec.dim();
    let (mut maes, mut r2s, mut ps) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..m {
        let t: Vec<f64> = idx.iter().map(|&i| truth.states[i][j]).collect();
        let p: Vec<f64> = idx.iter().map(|&i| model.states[i][j]).collect();
        if idx.len() < 2 {
            maes.push(f64::INFINITY);
            r2s.push(f64::NEG_INFINITY);
            ps.push(0.0);
            continue;
        }
        maes.push(mae(&p, &t)?);
        r2s.push(r2(&p, &t)?);
        ps.push(wilcoxon_signed_rank(&p, &t)?.p_value);
    }
    let mean_mae = maes.iter().sum::<f64>() / m as f64;
    let verdict = if ps.iter().all(|p| *p > SIGNIFICANCE) {
        Verdict::NoSignificantDifference
    } else {
        Verdict::SignificantDifference
    };
    Ok(MetricReport {
        variables: spec.variables.clone(),
        mae: maes,
        r2: r2s,
        inv_log_mae: inv_log_mae(mean_mae),
        wilcoxon_p: ps,
        verdict,
        points: idx.len(),
        diverged_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{builtin_spec, SystemId};
    use crate::expr::parse;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basic_metrics() {
        let x = [1.0, 2.0, 5.0];
        assert_eq!(mae(&x, &x).unwrap(), 0.0);
        assert_eq!(r2(&x, &x).unwrap(), 1.0);
        assert!((mae(&[1.0, 2.0, 3.0], &x).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let m = 8.0 / 3.0;
        assert!(r2(&[m, m, m], &x).unwrap().abs() < 1e-15);
        assert_eq!(r2(&[1.0, 1.0], &[2.0, 2.0]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(r2(&[2.0, 2.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert!(mae(&[1.0], &[1.0]).is_err());
        assert!(mae(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn inverse_log() {
        assert!((inv_log_mae((-2.0f64).exp()) - 0.5).abs() < 1e-12);
        assert!((inv_log_mae((-10.0f64).exp()) - 0.1).abs() < 1e-12);
        assert_eq!(inv_log_mae(0.0), 0.0);
        assert_eq!(inv_log_mae(1.0), f64::INFINITY);
        assert_eq!(r2_for_plot(-7.0), -2.0);
        assert_eq!(r2_for_plot(0.4), 0.4);
    }

    #[test]
    fn mae_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let shift = |v: &[f64]| v.iter().map(|x| x + 0.25).collect::<Vec<_>>();
        let (m1, m2) = (mae(&a, &b).unwrap(), mae(&shift(&a), &shift(&b)).unwrap());
        assert!((m1 - m2).abs() < 1e-12);
    }

    #[test]
    fn five_positive_differences() {
        let w = wilcoxon_exact(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(w.statistic, 0.0);
        assert_eq!(w.p_value, 0.0625);
    }

    #[test]
    fn equal_samples_are_degenerate() {
        let x = [1.0, 2.0, 3.0];
        let w = wilcoxon_signed_rank(&x, &x).unwrap();
        assert_eq!(w.p_value, 1.0);
        assert_eq!(w.statistic, 0.0);
        assert_eq!(w.method, WilcoxonMethod::Degenerate);
    }

    #[test]
    fn tied_ranks_are_averaged() {
        // |d| = 1, 1, 2 -> ranks 1.5, 1.5, 3; W+ = 4.5, W- = 1.5
        let w = wilcoxon_exact(&[1.0, -1.0, 2.0]);
        assert_eq!(w.statistic, 1.5);
        // sums of doubled ranks {3,3,6} <= 3: {}, {a}, {b} -> 3 of 8
        assert_eq!(w.p_value, 0.75);
    }

    #[test]
    fn symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [5, 20, 40] {
            let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            assert_eq!(
                wilcoxon_signed_rank(&a, &b).unwrap().p_value,
                wilcoxon_signed_rank(&b, &a).unwrap().p_value
            );
        }
    }

    fn sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>() - 0.4).collect()
    }

    #[test]
    fn normal_close_to_exact() {
        for seed in 0..20 {
            let d = sample(30, seed);
            let e = wilcoxon_exact(&d).p_value;
            let a = wilcoxon_normal(&d).p_value;
            assert!((e - a).abs() < 0.01, "seed {seed}: {e} vs {a}");
        }
    }

    #[test]
    fn identical_comparison_for_every_system() {
        for id in SystemId::ALL {
            let s = builtin_spec(id);
            let r = trajectory_compare(&s, &s.equations, 1e-8, 1e-10, 100).unwrap();
            assert!(r.mae.iter().all(|m| *m == 0.0));
            assert!(r.r2.iter().all(|v| *v == 1.0), "{id}: {:?}", r.r2);
            assert!(r.wilcoxon_p.iter().all(|p| *p == 1.0));
            assert_eq!(r.verdict, Verdict::NoSignificantDifference);
            assert_eq!(r.points, s.n_steps().min(99) + 1);
        }
    }

    #[test]
    fn small_coefficient_change_on_sir() {
        let s = builtin_spec(SystemId::Sir);
        let rec: Vec<Expr> = ["-0.301*S*I", "0.301*S*I - 0.1*I", "0.1*I"]
            .iter()
            .map(|t| parse(t, &s.variables).unwrap())
            .collect();
        let r = trajectory_compare(&s, &rec, 1e-8, 1e-10, 100).unwrap();
        // reference values from an independent RK45 solve at rtol 1e-10
        let oracle = [1.91509e-3, 0.89373e-3, 1.83788e-3];
        for (m, o) in r.mae.iter().zip(oracle) {
            assert!((m - o).abs() < 1e-3 * o, "{:?}", r.mae);
        }
    }

    #[test]
    fn wrong_lorenz_coefficient_is_significant() {
        let s = builtin_spec(SystemId::Lorenz);
        let mut rec = s.equations.clone();
        rec[2] = parse("x*y - 0.6*z", &s.variables).unwrap();
        let r = trajectory_compare(&s, &rec, 1e-8, 1e-10, 100).unwrap();
        assert_eq!(r.verdict, Verdict::SignificantDifference);
    }

    #[test]
    fn divergent_model_is_flagged() {
        let s = builtin_spec(SystemId::LotkaVolterra);
        let rec: Vec<Expr> = ["u*u", "-v"].iter().map(|t| parse(t, &s.variables).unwrap()).collect();
        let r = trajectory_compare(&s, &rec, 1e-8, 1e-10, 100).unwrap();
        assert!(r.is_diverged());
        assert!(r.points < 100);
        assert_eq!(r.verdict, Verdict::SignificantDifference);
    }

    #[test]
    fn report_json_field_names() {
        let s = builtin_spec(SystemId::Sis);
        let r = trajectory_compare(&s, &s.equations, 1e-8, 1e-10, 10).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["mae", "r2", "inv_log_mae", "wilcoxon_p", "verdict"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["verdict"], "no significant difference");
        let back: MetricReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
