use argmin::core::{CostFunction, Error, Executor, State};
use argmin::solver::neldermead::NelderMead;

use super::mse;
use crate::expr::Expr;

struct ConstantCost<'a> {
    expr: &'a Expr,
    inputs: &'a [Vec<f64>],
    target: &'a [f64],
}

impl CostFunction for ConstantCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> Result<f64, Error> {
        let loss = mse(&self.expr.with_constants(p), self.inputs, self.target);
        Ok(if loss.is_finite() { loss } else { f64::MAX })
    }
}

fn simplex(x0: &[f64]) -> Vec<Vec<f64>> {
    let mut s = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] = if v[i] == 0.0 { 2.5e-4 } else { v[i] * 1.05 };
        s.push(v);
    }
    s
}

fn nelder_mead(cost: ConstantCost<'_>, x0: &[f64], iters: u64) -> Option<(Vec<f64>, f64)> {
    let solver = NelderMead::new(simplex(x0)).with_sd_tolerance(1e-15).ok()?;
    let res = Executor::new(cost, solver)
        .configure(|s| s.max_iters(iters))
        .run()
        .ok()?;
    let state = res.state();
    Some((state.get_best_param()?.clone(), state.get_best_cost()))
}

/// Refines the constants of `expr` by Nelder–Mead on the mean squared
/// error, restarting once from the best point. The structure is kept and
/// the error never increases: if no improvement is found, `expr` is
/// returned as is.
pub fn optimize_constants(expr: &Expr, inputs: &[Vec<f64>], target: &[f64], iters: usize) -> Expr {
    let x0 = expr.constants();
    if x0.is_empty() || iters == 0 {
        return expr.clone();
    }
    let start = mse(expr, inputs, target);
    let mut best = (x0, if start.is_finite() { start } else { f64::MAX });
    let half = (iters as u64).div_ceil(2);
    for _ in 0..2 {
        let cost = ConstantCost { expr, inputs, target };
        match nelder_mead(cost, &best.0, half) {
            Some((p, c)) if c < best.1 => best = (p, c),
            _ => break,
        }
    }
    let refined = expr.with_constants(&best.0);
    if mse(&refined, inputs, target) < start || !start.is_finite() && best.1 < f64::MAX {
        refined
    } else {
        expr.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn linear_coefficient() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let e = parse("1.7*x", &["x"]).unwrap();
        let out = optimize_constants(&e, &[x], &y, 200);
        assert!((out.constants()[0] - 2.0).abs() < 1e-4, "{out}");
    }

    #[test]
    fn no_constants_unchanged() {
        let e = parse("x*x", &["x"]).unwrap();
        assert_eq!(optimize_constants(&e, &[vec![1.0, 2.0]], &[0.0, 1.0], 100), e);
    }

    #[test]
    fn never_worse() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.2).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin() * 3.0 + 0.2).collect();
        for text in ["0.5*x + 1.0", "1.5*sin(0.3*x)", "x/(x - 2.0)"] {
            let e = parse(text, &["x"]).unwrap();
            let inputs = [x.clone()];
            let before = mse(&e, &inputs, &y);
            let after = mse(&optimize_constants(&e, &inputs, &y, 100), &inputs, &y);
            assert!(after <= before || !before.is_finite(), "{text}: {after} > {before}");
        }
    }
}
