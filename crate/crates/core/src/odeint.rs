//! Trajectory generation and numerical differentiation.
//!
//! The integrator is the Dormand–Prince 5(4) pair with the quartic
//! free interpolant, sampled on a fixed output grid.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynsys::SystemSpec;
use crate::expr::Expr;

pub const DEFAULT_RTOL: f64 = 1e-8;
pub const DEFAULT_ATOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("solution left the finite range at t = {t}")]
    Diverged { t: f64 },
    #[error("step budget of {limit} exhausted at t = {t}")]
    TooManySteps { t: f64, limit: usize },
    #[error("invalid integration request: {0}")]
    Invalid(String),
    #[error("need at least 3 time points, got {0}")]
    TooFewPoints(usize),
}

impl OdeError {
    /// Time reached before the failure, if integration had started.
    pub fn time_reached(&self) -> Option<f64> {
        match self {
            OdeError::StepUnderflow { t } | OdeError::Diverged { t } | OdeError::TooManySteps { t, .. } => Some(*t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// States beyond this magnitude count as blow-up.
    pub bound: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            max_step: f64::INFINITY,
            max_steps: 1_000_000,
            bound: 1e12,
        }
    }
}

impl OdeOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        OdeOptions {
            rtol,
            atol,
            ..Default::default()
        }
    }
}

/// Uniform output grid `t0 + k*dt`, `k = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(t0: f64, t1: f64, dt: f64) -> Result<Self, OdeError> {
        if !(dt > 0.0) || !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(OdeError::Invalid(format!("grid [{t0}, {t1}] with dt = {dt}")));
        }
        Ok(Grid {
            t0,
            dt,
            n: ((t1 - t0) / dt).round() as usize,
        })
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.time(k)).collect()
    }

    pub fn end(&self) -> f64 {
        self.time(self.n)
    }
}

/// Grid samples produced before integration ended, and the reason it ended
/// early, if it did.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutput {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub failure: Option<OdeError>,
}

const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];
const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const E: [f64; 7] = [
    -71.0 / 57600.0,
    0.0,
    71.0 / 16695.0,
    -71.0 / 1920.0,
    17253.0 / 339200.0,
    -22.0 / 525.0,
    1.0 / 40.0,
];
// Dense-output coefficients: y(t_old + x h) = y_old + h * sum_i K_i * sum_j P[i][j] x^(j+1).
const P: [[f64; 4]; 7] = [
    [
        1.0,
        -8048581381.0 / 2820520608.0,
        8663915743.0 / 2820520608.0,
        -12715105075.0 / 11282082432.0,
    ],
    [0.0, 0.0, 0.0, 0.0],
    [
        0.0,
        131558114200.0 / 32700410799.0,
        -68118460800.0 / 10900136933.0,
        87487479700.0 / 32700410799.0,
    ],
    [
        0.0,
        -1754552775.0 / 470086768.0,
        14199869525.0 / 1410260304.0,
        -10690763975.0 / 1880347072.0,
    ],
    [
        0.0,
        127303824393.0 / 49829197408.0,
        -318862633887.0 / 49829197408.0,
        701980252875.0 / 199316789632.0,
    ],
    [
        0.0,
        -282668133.0 / 205662961.0,
        2019193451.0 / 616988883.0,
        -1453857185.0 / 822651844.0,
    ],
    [
        0.0,
        40617522.0 / 29380423.0,
        -110615467.0 / 29380423.0,
        69997945.0 / 29380423.0,
    ],
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const ERROR_EXPONENT: f64 = -1.0 / 5.0;

fn rms(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    (v.map(|x| x * x).sum::<f64>() / n as f64).sqrt()
}

fn initial_step<F>(f: &mut F, t0: f64, y0: &[f64], f0: &[f64], span: f64, opts: &OdeOptions) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let scale: Vec<f64> = y0.iter().map(|y| opts.atol + y.abs() * opts.rtol).collect();
    let d0 = rms(y0.iter().zip(&scale).map(|(y, s)| y / s), n);
    let d1 = rms(f0.iter().zip(&scale).map(|(y, s)| y / s), n);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + h0 * d).collect();
    let mut f1 = vec![0.0; n];
    f(t0 + h0, &y1, &mut f1);
    let d2 = rms(f1.iter().zip(f0).zip(&scale).map(|((a, b), s)| (a - b) / s), n) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(span).min(opts.max_step)
}

/// Integrates `dy/dt = f(t, y)` and samples the solution on `grid`.
///
/// Integration stops at the first failure; the samples gathered up to that
/// point are returned together with the error.
pub fn integrate_grid<F>(mut f: F, y0: &[f64], grid: Grid, opts: &OdeOptions) -> GridOutput
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut out = GridOutput {
        times: Vec::with_capacity(grid.n + 1),
        states: Vec::with_capacity(grid.n + 1),
        failure: None,
    };
    if y0.iter().any(|v| !v.is_finite() || v.abs() > opts.bound) {
        out.failure = Some(OdeError::Diverged { t: grid.t0 });
        return out;
    }
    out.times.push(grid.t0);
    out.states.push(y0.to_vec());
    if grid.n == 0 {
        return out;
    }

    let t_end = grid.end();
    let mut t = grid.t0;
    let mut y = y0.to_vec();
    let mut fy = vec![0.0; n];
    f(t, &y, &mut fy);
    let mut h_abs = initial_step(&mut f, t, &y, &fy, t_end - t, opts);

    let mut k = vec![vec![0.0; n]; 7];
    let mut y_new = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut next = 1usize;
    let mut steps = 0usize;

    while t < t_end {
        if steps >= opts.max_steps {
            out.failure = Some(OdeError::TooManySteps {
                t,
                limit: opts.max_steps,
            });
            return out;
        }
        steps += 1;
        let min_step = 10.0 * (t.next_up() - t);
        h_abs = h_abs.min(opts.max_step).max(min_step);

        let mut rejected = false;
        let h = loop {
            if h_abs < min_step || !h_abs.is_finite() {
                out.failure = Some(OdeError::StepUnderflow { t });
                return out;
            }
            let mut h = h_abs;
            let mut t_new = t + h;
            if t_new > t_end {
                t_new = t_end;
                h = t_new - t;
                h_abs = h;
            }

            k[0].copy_from_slice(&fy);
            for s in 1..6 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, a) in A[s][..s].iter().enumerate() {
                        acc += a * k[j][i];
                    }
                    tmp[i] = y[i] + h * acc;
                }
                f(t + C[s] * h, &tmp, &mut k[s]);
            }
            for i in 0..n {
                let mut acc = 0.0;
                for (j, b) in B.iter().enumerate() {
                    acc += b * k[j][i];
                }
                y_new[i] = y[i] + h * acc;
            }
            f(t + h, &y_new, &mut k[6]);

            let err = rms(
                (0..n).map(|i| {
                    let scale = opts.atol + y[i].abs().max(y_new[i].abs()) * opts.rtol;
                    let e: f64 = E.iter().enumerate().map(|(j, c)| c * k[j][i]).sum();
                    e * h / scale
                }),
                n,
            );

            if err < 1.0 {
                let mut factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    MAX_FACTOR.min(SAFETY * err.powf(ERROR_EXPONENT))
                };
                if rejected {
                    factor = factor.min(1.0);
                }
                h_abs *= factor;
                break h;
            }
            let shrink = SAFETY * err.powf(ERROR_EXPONENT);
            // NaN errors shrink by the minimum factor
            h_abs *= if shrink.is_nan() {
                MIN_FACTOR
            } else {
                MIN_FACTOR.max(shrink)
            };
            rejected = true;
        };

        let t_old = t;
        t = if t + h >= t_end { t_end } else { t + h };

        if y_new.iter().any(|v| !v.is_finite() || v.abs() > opts.bound) {
            out.failure = Some(OdeError::Diverged { t: t_old });
            return out;
        }

        while next <= grid.n {
            let tk = if next == grid.n { t_end } else { grid.time(next) };
            if tk > t {
                break;
            }
            let sample = if tk == t {
                y_new.clone()
            } else {
                let x = (tk - t_old) / h;
                let powers = [x, x * x, x * x * x, x * x * x * x];
                (0..n)
                    .map(|i| {
                        let mut acc = 0.0;
                        for (j, row) in P.iter().enumerate() {
                            let q: f64 = row.iter().zip(&powers).map(|(p, x)| p * x).sum();
                            acc += k[j][i] * q;
                        }
                        y[i] + h * acc
                    })
                    .collect()
            };
            out.times.push(grid.time(next));
            out.states.push(sample);
            next += 1;
        }

        std::mem::swap(&mut y, &mut y_new);
        fy.copy_from_slice(&k[6]);
    }
    out
}

/// Integrates a system given by one expression per variable.
pub fn integrate_equations(equations: &[Expr], y0: &[f64], grid: Grid, opts: &OdeOptions) -> GridOutput {
    integrate_grid(
        |_, y, dy| {
            for (d, e) in dy.iter_mut().zip(equations) {
                *d = e.eval_unchecked(y);
            }
        },
        y0,
        grid,
        opts,
    )
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub system: Option<String>,
    pub seed: Option<u64>,
    pub noise: f64,
}

/// Uniformly sampled states, optionally with time derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One row per time point.
    pub states: Vec<Vec<f64>>,
    pub derivatives: Option<Vec<Vec<f64>>>,
    pub variables: Vec<String>,
    pub provenance: Provenance,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    /// Mean sampling step.
    pub fn dt(&self) -> f64 {
        match self.times.len() {
            0 | 1 => 0.0,
            n => (self.times[n - 1] - self.times[0]) / (n - 1) as f64,
        }
    }

    pub fn state_column(&self, j: usize) -> Vec<f64> {
        self.states.iter().map(|r| r[j]).collect()
    }

    pub fn state_columns(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|j| self.state_column(j)).collect()
    }

    pub fn derivative_columns(&self) -> Option<Vec<Vec<f64>>> {
        let d = self.derivatives.as_ref()?;
        Some((0..self.dim()).map(|j| d.iter().map(|r| r[j]).collect()).collect())
    }

    /// Checks the shape, finiteness and uniform spacing invariants.
    pub fn validate(&self) -> Result<(), String> {
        let m = self.dim();
        if self.states.len() != self.times.len() {
            return Err(format!(
                "{} times but {} state rows",
                self.times.len(),
                self.states.len()
            ));
        }
        if let Some(r) = self.states.iter().position(|r| r.len() != m) {
            return Err(format!("row {r} has {} values, expected {m}", self.states[r].len()));
        }
        if let Some(d) = &self.derivatives {
            if d.len() != self.times.len() || d.iter().any(|r| r.len() != m) {
                return Err("derivative matrix shape differs from states".into());
            }
        }
        if self.states.iter().flatten().any(|v| !v.is_finite()) {
            return Err("non-finite state value".into());
        }
        if let Some(i) = self.times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(format!("times not strictly increasing at row {}", i + 1));
        }
        let dt = self.dt();
        if let Some(i) = self
            .times
            .windows(2)
            .position(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt)
        {
            return Err(format!("non-uniform time step at row {}", i + 1));
        }
        Ok(())
    }
}

/// Samples `spec` on its own grid from its initial state.
pub fn integrate(spec: &SystemSpec, rtol: f64, atol: f64) -> Result<Trajectory, OdeError> {
    if !(rtol > 0.0 && atol > 0.0) {
        return Err(OdeError::Invalid("tolerances must be positive".into()));
    }
    spec.validate().map_err(|e| OdeError::Invalid(e.to_string()))?;
    let grid = Grid::new(spec.t0, spec.t1, spec.dt)?;
    let out = integrate_equations(
        &spec.equations,
        &spec.initial_state,
        grid,
        &OdeOptions::with_tolerances(rtol, atol),
    );
    if let Some(e) = out.failure {
        return Err(e);
    }
    Ok(Trajectory {
        times: out.times,
        states: out.states,
        derivatives: None,
        variables: spec.variables.clone(),
        provenance: Provenance {
            system: Some(spec.name.clone()),
            seed: None,
            noise: 0.0,
        },
    })
}

/// Second-order finite differences of each state column.
pub fn finite_difference(traj: &Trajectory) -> Result<Trajectory, OdeError> {
    let n = traj.len();
    if n < 3 {
        return Err(OdeError::TooFewPoints(n));
    }
    let h2 = 2.0 * traj.dt();
    let x = &traj.states;
    let m = traj.dim();
    let mut d = vec![vec![0.0; m]; n];
    for j in 0..m {
        d[0][j] = (-3.0 * x[0][j] + 4.0 * x[1][j] - x[2][j]) / h2;
        for i in 1..n - 1 {
            d[i][j] = (x[i + 1][j] - x[i - 1][j]) / h2;
        }
        d[n - 1][j] = (3.0 * x[n - 1][j] - 4.0 * x[n - 2][j] + x[n - 3][j]) / h2;
    }
    let mut out = traj.clone();
    out.derivatives = Some(d);
    Ok(out)
}

/// Adds i.i.d. Gaussian noise to every state entry. Derivatives are dropped.
pub fn add_noise(traj: &Trajectory, sigma: f64, seed: u64) -> Trajectory {
    let mut out = traj.clone();
    out.provenance.seed = Some(seed);
    out.provenance.noise = sigma;
    if sigma > 0.0 {
        out.derivatives = None;
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in out.states.iter_mut().flatten() {
            *v += normal.sample(&mut rng);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{builtin_spec, SystemId};
    use crate::expr::parse;

    fn scalar_decay(opts: &OdeOptions) -> f64 {
        let out = integrate_grid(|_, y, d| d[0] = -y[0], &[1.0], Grid::new(0.0, 1.0, 0.1).unwrap(), opts);
        assert!(out.failure.is_none());
        assert_eq!(out.times.len(), 11);
        out.states[10][0]
    }

    #[test]
    fn exponential_decay() {
        let y = scalar_decay(&OdeOptions::default());
        assert!((y - (-1.0f64).exp()).abs() < 1e-6, "{y}");
        assert!((y - 0.3678794).abs() < 1e-6);
    }

    #[test]
    fn dense_output_matches_analytic_everywhere() {
        let out = integrate_grid(
            |_, y, d| d[0] = -y[0],
            &[1.0],
            Grid::new(0.0, 3.0, 0.01).unwrap(),
            &OdeOptions::default(),
        );
        for (t, y) in out.times.iter().zip(&out.states) {
            assert!((y[0] - (-t).exp()).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn order_under_step_bound() {
        // Loose tolerances so the step bound, not the error control, sets h.
        let err = |h: f64| {
            let opts = OdeOptions {
                rtol: 1.0,
                atol: 1.0,
                max_step: h,
                ..Default::default()
            };
            (scalar_decay(&opts) - (-1.0f64).exp()).abs()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(e1 / e2 >= 16.0, "{e1} {e2} {}", e1 / e2);
    }

    #[test]
    fn harmonic_energy() {
        let out = integrate_grid(
            |_, y, d| {
                d[0] = y[1];
                d[1] = -y[0];
            },
            &[1.0, 0.0],
            Grid::new(0.0, 10.0, 0.01).unwrap(),
            &OdeOptions::default(),
        );
        for s in &out.states {
            let energy = 0.5 * (s[0] * s[0] + s[1] * s[1]);
            assert!((energy - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn lorenz_row_count() {
        let t = integrate(&builtin_spec(SystemId::Lorenz), DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
        assert_eq!(t.len(), 2501);
        assert_eq!(t.times[2500], 5.0);
        t.validate().unwrap();
    }

    #[test]
    fn epidemic_populations_conserved() {
        for id in SystemId::ALL.into_iter().filter(|i| i.is_epidemic()) {
            let t = integrate(&builtin_spec(id), DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
            for row in &t.states {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-6, "{id}");
            }
        }
    }

    #[test]
    fn blow_up_returns_prefix() {
        let e = vec![parse("x*x", &["x"]).unwrap()];
        let out = integrate_equations(&e, &[1.0], Grid::new(0.0, 2.0, 0.1).unwrap(), &OdeOptions::default());
        let t = out.failure.as_ref().and_then(|f| f.time_reached()).unwrap();
        assert!(t > 0.9 && t < 1.01, "{t}");
        assert!(out.times.len() == 10 || out.times.len() == 11);
        assert!(out.states.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn step_budget() {
        let opts = OdeOptions {
            max_steps: 3,
            ..Default::default()
        };
        let out = integrate_grid(
            |_, y, d| d[0] = -y[0],
            &[1.0],
            Grid::new(0.0, 100.0, 1.0).unwrap(),
            &opts,
        );
        assert!(matches!(out.failure, Some(OdeError::TooManySteps { .. })));
    }

    fn sampled(f: impl Fn(f64) -> f64, dt: f64, n: usize) -> Trajectory {
        let times: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        Trajectory {
            states: times.iter().map(|&t| vec![f(t)]).collect(),
            times,
            derivatives: None,
            variables: vec!["x".into()],
            provenance: Provenance::default(),
        }
    }

    #[test]
    fn differences_exact_on_quadratics() {
        let t = finite_difference(&sampled(|t| t * t, 0.1, 21)).unwrap();
        for (time, d) in t.times.iter().zip(t.derivatives.unwrap()) {
            assert!((d[0] - 2.0 * time).abs() < 1e-12, "{time}: {}", d[0]);
        }
        let c = finite_difference(&sampled(|_| 3.5, 0.1, 5)).unwrap();
        assert!(c.derivatives.unwrap().iter().all(|r| r[0] == 0.0));
    }

    #[test]
    fn differences_of_sine() {
        let t = finite_difference(&sampled(f64::sin, 1e-3, 5001)).unwrap();
        let worst = t
            .times
            .iter()
            .zip(t.derivatives.unwrap())
            .map(|(s, d)| (d[0] - s.cos()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn too_few_points() {
        assert_eq!(
            finite_difference(&sampled(|t| t, 0.1, 2)).unwrap_err(),
            OdeError::TooFewPoints(2)
        );
    }

    #[test]
    fn lorenz_differences_track_rhs() {
        let spec = builtin_spec(SystemId::Lorenz);
        let t = finite_difference(&integrate(&spec, DEFAULT_RTOL, DEFAULT_ATOL).unwrap()).unwrap();
        let d = t.derivatives.as_ref().unwrap();
        let scale = d.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (row, state) in d.iter().zip(&t.states).skip(1).take(t.len() - 2) {
            let f = spec.rhs(state, 0.0).unwrap();
            for (dj, fj) in row.iter().zip(&f) {
                assert!((dj - fj).abs() < 1e-3 * fj.abs().max(1e-2 * scale));
            }
        }
    }

    #[test]
    fn noise_properties() {
        let t = integrate(&builtin_spec(SystemId::Lorenz), DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
        assert_eq!(add_noise(&t, 0.0, 5).states, t.states);
        let a = add_noise(&t, 0.01, 9);
        assert_eq!(a, add_noise(&t, 0.01, 9));
        let dev: Vec<f64> = a
            .states
            .iter()
            .flatten()
            .zip(t.states.iter().flatten())
            .map(|(x, y)| x - y)
            .collect();
        let n = dev.len() as f64;
        let mean = dev.iter().sum::<f64>() / n;
        let sd = (dev.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert_eq!(dev.len(), 2501 * 3);
        // 5 standard errors
        assert!(mean.abs() < 5.0 * 0.01 / n.sqrt(), "{mean}");
        assert!((sd - 0.01).abs() < 5.0 * 0.01 / (2.0 * n).sqrt(), "{sd}");
    }
}
