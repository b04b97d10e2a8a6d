//! Registry of benchmark dynamical systems.
//!
//! Every system carries its ground-truth right-hand side as expressions, a
//! named parameter record, an initial state and the sampling grid used to
//! generate training data. Epidemic systems are normalized to a unit
//! population, so the `beta/N` factors collapse into `beta`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Expr, ParseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("unknown system `{name}` (valid: {valid})")]
    Unknown { name: String, valid: String },
    #[error("state has dimension {found}, system `{system}` expects {expected}")]
    Dimension {
        system: String,
        expected: usize,
        found: usize,
    },
    #[error("system `{0}` is not an epidemic model")]
    NotEpidemic(String),
    #[error("epidemic system `{0}` lacks a `{1}` parameter")]
    MissingParameter(String, &'static str),
    #[error("invalid system `{system}`: {reason}")]
    Invalid { system: String, reason: String },
    #[error("equation {index} of `{system}`: {source}")]
    Parse {
        system: String,
        index: usize,
        source: ParseError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemId {
    Lorenz,
    Pendulum,
    LotkaVolterra,
    Sis,
    Sir,
    Seir,
    Seird,
    Sirv,
    Sirs,
}

impl SystemId {
    pub const ALL: [SystemId; 9] = [
        SystemId::Lorenz,
        SystemId::Pendulum,
        SystemId::LotkaVolterra,
        SystemId::Sis,
        SystemId::Sir,
        SystemId::Seir,
        SystemId::Seird,
        SystemId::Sirv,
        SystemId::Sirs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemId::Lorenz => "lorenz",
            SystemId::Pendulum => "pendulum",
            SystemId::LotkaVolterra => "lotka_volterra",
            SystemId::Sis => "sis",
            SystemId::Sir => "sir",
            SystemId::Seir => "seir",
            SystemId::Seird => "seird",
            SystemId::Sirv => "sirv",
            SystemId::Sirs => "sirs",
        }
    }

    pub fn is_epidemic(self) -> bool {
        !matches!(self, SystemId::Lorenz | SystemId::Pendulum | SystemId::LotkaVolterra)
    }

    pub fn valid_names() -> String {
        SystemId::ALL.map(SystemId::name).join(", ")
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemId {
    type Err = SystemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SystemId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| SystemError::Unknown {
                name: s.to_string(),
                valid: SystemId::valid_names(),
            })
    }
}

/// A dynamical system `dX/dt = f(X)` with its data-generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SystemFile", try_from = "SystemFile")]
pub struct SystemSpec {
    pub name: String,
    pub variables: Vec<String>,
    pub equations: Vec<Expr>,
    pub parameters: BTreeMap<String, f64>,
    pub initial_state: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub epidemic: bool,
}

/// Text form of a [`SystemSpec`], as stored in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub name: String,
    pub variables: Vec<String>,
    pub equations: Vec<String>,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    pub initial_state: Vec<f64>,
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    #[serde(default)]
    pub epidemic: bool,
}

impl From<SystemSpec> for SystemFile {
    fn from(s: SystemSpec) -> Self {
        let equations = s.equations.iter().map(|e| e.to_text(&s.variables)).collect();
        SystemFile {
            name: s.name,
            variables: s.variables,
            equations,
            parameters: s.parameters,
            initial_state: s.initial_state,
            t0: s.t0,
            t1: s.t1,
            dt: s.dt,
            epidemic: s.epidemic,
        }
    }
}

impl TryFrom<SystemFile> for SystemSpec {
    type Error = SystemError;

    fn try_from(f: SystemFile) -> Result<Self, Self::Error> {
        let equations = f
            .equations
            .iter()
            .enumerate()
            .map(|(index, text)| {
                expr::parse(text, &f.variables).map_err(|source| SystemError::Parse {
                    system: f.name.clone(),
                    index,
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let spec = SystemSpec {
            name: f.name,
            variables: f.variables,
            equations,
            parameters: f.parameters,
            initial_state: f.initial_state,
            t0: f.t0,
            t1: f.t1,
            dt: f.dt,
            epidemic: f.epidemic,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

struct Builder {
    id: SystemId,
    variables: &'static [&'static str],
    equations: Vec<String>,
    parameters: BTreeMap<String, f64>,
    initial_state: Vec<f64>,
    t1: f64,
    dt: f64,
}

impl Builder {
    fn build(self) -> SystemSpec {
        let variables: Vec<String> = self.variables.iter().map(|s| s.to_string()).collect();
        let equations = self
            .equations
            .iter()
            .map(|t| expr::parse(t, &variables).expect("builtin equation parses"))
            .collect();
        SystemSpec {
            name: self.id.name().to_string(),
            variables,
            equations,
            parameters: self.parameters,
            initial_state: self.initial_state,
            t0: 0.0,
            t1: self.t1,
            dt: self.dt,
            epidemic: self.id.is_epidemic(),
        }
    }
}

/// The shipped benchmark system for `id`.
pub fn builtin_spec(id: SystemId) -> SystemSpec {
    let b = match id {
        SystemId::Lorenz => {
            let (s, r, b) = (2.0, 1.0, 2.6);
            Builder {
                id,
                variables: &["x", "y", "z"],
                equations: vec![
                    format!("{}*(y - x)", num(s)),
                    format!("x*({} - z) - y", num(r)),
                    format!("x*y - {}*z", num(b)),
                ],
                parameters: params(&[("sigma", s), ("rho", r), ("beta", b)]),
                initial_state: vec![0.6, 2.0, 1.0],
                t1: 5.0,
                dt: 2e-3,
            }
        }
        SystemId::Pendulum => {
            let (g, l) = (9.8, 1.0);
            Builder {
                id,
                variables: &["theta", "omega"],
                equations: vec!["omega".into(), format!("-{}*sin(theta)", num(g / l))],
                parameters: params(&[("g", g), ("L", l)]),
                // 45 degrees
                initial_state: vec![FRAC_PI_4, 0.0],
                t1: 5.0,
                dt: 2e-3,
            }
        }
        SystemId::LotkaVolterra => {
            let (a, b, c, d) = (2.0, 0.5, 1.0, 0.375);
            Builder {
                id,
                variables: &["u", "v"],
                equations: vec![
                    format!("{}*u - {}*u*v", num(a), num(b)),
                    format!("-{}*v + {}*u*v", num(c), num(d)),
                ],
                parameters: params(&[("alpha", a), ("beta", b), ("gamma", c), ("delta", d)]),
                initial_state: vec![20.0, 5.0],
                t1: 7.5,
                dt: 0.1,
            }
        }
        SystemId::Sis => {
            let (b, g) = (0.3, 0.1);
            Builder {
                id,
                variables: &["S", "I"],
                equations: vec![
                    format!("-{}*S*I + {}*I", num(b), num(g)),
                    format!("{}*S*I - {}*I", num(b), num(g)),
                ],
                parameters: params(&[("beta", b), ("gamma", g)]),
                initial_state: vec![0.999, 0.001],
                t1: 100.0,
                dt: 2e-3,
            }
        }
        SystemId::Sir => {
            let (b, g) = (0.3, 0.1);
            Builder {
                id,
                variables: &["S", "I", "R"],
                equations: vec![
                    format!("-{}*S*I", num(b)),
                    format!("{}*S*I - {}*I", num(b), num(g)),
                    format!("{}*I", num(g)),
                ],
                parameters: params(&[("beta", b), ("gamma", g)]),
                initial_state: vec![0.999, 0.001, 0.0],
                t1: 100.0,
                dt: 2e-3,
            }
        }
        SystemId::Seir => {
            let (b, s, g) = (0.3, 0.2, 1.0);
            Builder {
                id,
                variables: &["S", "E", "I", "R"],
                equations: vec![
                    format!("-{}*S*I", num(b)),
                    format!("{}*S*I - {}*E", num(b), num(s)),
                    format!("{}*E - {}*I", num(s), num(g)),
                    format!("{}*I", num(g)),
                ],
                parameters: params(&[("beta", b), ("sigma", s), ("gamma", g)]),
                initial_state: vec![0.999, 0.0, 0.001, 0.0],
                t1: 160.0,
                dt: 1.0,
            }
        }
        SystemId::Seird => {
            let (b, s, g, m) = (0.3, 0.2, 1.0, 0.1);
            Builder {
                id,
                variables: &["S", "E", "I", "R", "D"],
                equations: vec![
                    format!("-{}*S*I", num(b)),
                    format!("{}*S*I - {}*E", num(b), num(s)),
                    format!("{}*E - {}*I", num(s), num(g + m)),
                    format!("{}*I", num(g)),
                    format!("{}*I", num(m)),
                ],
                parameters: params(&[("beta", b), ("sigma", s), ("gamma", g), ("mu", m)]),
                initial_state: vec![0.999, 0.0, 0.001, 0.0, 0.0],
                t1: 100.0,
                dt: 5e-2,
            }
        }
        SystemId::Sirv => {
            let (b, g, e) = (0.5, 1.0, 0.5);
            Builder {
                id,
                variables: &["S", "I", "R", "V"],
                equations: vec![
                    format!("-{}*S*I - {}*S", num(b), num(e)),
                    format!("{}*S*I - {}*I", num(b), num(g)),
                    format!("{}*I", num(g)),
                    format!("{}*S", num(e)),
                ],
                parameters: params(&[("beta", b), ("gamma", g), ("epsilon", e)]),
                initial_state: vec![0.999, 0.001, 0.0, 0.0],
                t1: 100.0,
                dt: 5e-2,
            }
        }
        SystemId::Sirs => {
            let (b, g, d) = (0.3, 1.0, 0.2);
            Builder {
                id,
                variables: &["S", "I", "R"],
                equations: vec![
                    format!("-{}*S*I + {}*R", num(b), num(d)),
                    format!("{}*S*I - {}*I", num(b), num(g)),
                    format!("{}*I - {}*R", num(g), num(d)),
                ],
                parameters: params(&[("beta", b), ("gamma", g), ("delta", d)]),
                initial_state: vec![0.999, 0.001, 0.0],
                t1: 100.0,
                dt: 5e-2,
            }
        }
    };
    b.build()
}

/// Resolves a builtin by name.
pub fn builtin_by_name(name: &str) -> Result<SystemSpec, SystemError> {
    Ok(builtin_spec(name.parse()?))
}

impl SystemSpec {
    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn builtin_id(&self) -> Option<SystemId> {
        self.name.parse().ok()
    }

    /// Number of output intervals on the sampling grid.
    pub fn n_steps(&self) -> usize {
        ((self.t1 - self.t0) / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        let invalid = |reason: String| SystemError::Invalid {
            system: self.name.clone(),
            reason,
        };
        let n = self.variables.len();
        if n == 0 {
            return Err(invalid("no state variables".into()));
        }
        if self.equations.len() != n || self.initial_state.len() != n {
            return Err(invalid(format!(
                "{} variables, {} equations, {} initial values",
                n,
                self.equations.len(),
                self.initial_state.len()
            )));
        }
        for (i, e) in self.equations.iter().enumerate() {
            if e.max_var().is_some_and(|m| m >= n) {
                return Err(invalid(format!("equation {i} references a missing variable")));
            }
        }
        if !(self.dt > 0.0) || !(self.t1 > self.t0) {
            return Err(invalid("need dt > 0 and t1 > t0".into()));
        }
        let steps = (self.t1 - self.t0) / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(invalid(format!(
                "dt = {} does not divide [{}, {}] evenly",
                self.dt, self.t0, self.t1
            )));
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite initial state".into()));
        }
        if self.epidemic {
            let total: f64 = self.initial_state.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("initial population sums to {total}, not 1")));
            }
            if self.initial_state.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(invalid("compartment fraction outside [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Time derivative at `state`. The systems are autonomous; `_t` is kept
    /// for integrator signatures.
    pub fn rhs(&self, state: &[f64], _t: f64) -> Result<Vec<f64>, SystemError> {
        if state.len() != self.dim() {
            return Err(SystemError::Dimension {
                system: self.name.clone(),
                expected: self.dim(),
                found: state.len(),
            });
        }
        Ok(self.equations.iter().map(|e| e.eval_unchecked(state)).collect())
    }

    /// Basic reproduction number `beta / gamma`.
    pub fn r0(&self) -> Result<f64, SystemError> {
        if !self.epidemic {
            return Err(SystemError::NotEpidemic(self.name.clone()));
        }
        let get = |k: &'static str| {
            self.parameters
                .get(k)
                .copied()
                .ok_or_else(|| SystemError::MissingParameter(self.name.clone(), k))
        };
        Ok(get("beta")? / get("gamma")?)
    }

    /// Hand-written right-hand side of a builtin, computed from the parameter
    /// record without going through expressions.
    pub fn reference_rhs(&self, s: &[f64]) -> Option<Vec<f64>> {
        let p = |k: &str| self.parameters[k];
        let id = self.builtin_id()?;
        Some(match id {
            SystemId::Lorenz => {
                let (x, y, z) = (s[0], s[1], s[2]);
                vec![p("sigma") * (y - x), x * (p("rho") - z) - y, x * y - p("beta") * z]
            }
            SystemId::Pendulum => vec![s[1], -(p("g") / p("L")) * s[0].sin()],
            SystemId::LotkaVolterra => {
                let (u, v) = (s[0], s[1]);
                vec![p("alpha") * u - p("beta") * u * v, -p("gamma") * v + p("delta") * u * v]
            }
            SystemId::Sis => {
                let inf = p("beta") * s[0] * s[1];
                let rec = p("gamma") * s[1];
                vec![-inf + rec, inf - rec]
            }
            SystemId::Sir => {
                let inf = p("beta") * s[0] * s[1];
                let rec = p("gamma") * s[1];
                vec![-inf, inf - rec, rec]
            }
            SystemId::Seir => {
                let inf = p("beta") * s[0] * s[2];
                let onset = p("sigma") * s[1];
                let rec = p("gamma") * s[2];
                vec![-inf, inf - onset, onset - rec, rec]
            }
            SystemId::Seird => {
                let inf = p("beta") * s[0] * s[2];
                let onset = p("sigma") * s[1];
                let rec = p("gamma") * s[2];
                let death = p("mu") * s[2];
                vec![-inf, inf - onset, onset - rec - death, rec, death]
            }
            SystemId::Sirv => {
                let inf = p("beta") * s[0] * s[1];
                let vac = p("epsilon") * s[0];
                let rec = p("gamma") * s[1];
                vec![-inf - vac, inf - rec, rec, vac]
            }
            SystemId::Sirs => {
                let inf = p("beta") * s[0] * s[1];
                let rec = p("gamma") * s[1];
                let wane = p("delta") * s[2];
                vec![-inf + wane, inf - rec, rec - wane]
            }
        })
    }

    /// Equations as `d<var>/dt = <expr>` lines.
    pub fn describe(&self) -> Vec<String> {
        self.variables
            .iter()
            .zip(&self.equations)
            .map(|(v, e)| format!("d{v}/dt = {}", e.to_text(&self.variables)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn lorenz_rhs_at_initial_state() {
        let s = builtin_spec(SystemId::Lorenz);
        let d = s.rhs(&[0.6, 2.0, 1.0], 0.0).unwrap();
        assert!(close(&d, &[2.8, -2.0, -1.4], 1e-12), "{d:?}");
        assert_eq!(s.initial_state, vec![0.6, 2.0, 1.0]);
        assert_eq!((s.t0, s.t1, s.dt), (0.0, 5.0, 2e-3));
        assert_eq!(s.n_steps(), 2500);
    }

    #[test]
    fn sir_rhs_at_initial_state() {
        let s = builtin_spec(SystemId::Sir);
        let d = s.rhs(&[0.999, 0.001, 0.0], 0.0).unwrap();
        assert!(close(&d, &[-2.997e-4, 1.997e-4, 1.0e-4], 1e-15), "{d:?}");
        assert_eq!(s.describe()[1], "dI/dt = 0.3*S*I - 0.1*I");
    }

    #[test]
    fn sirv_ground_truth() {
        let s = builtin_spec(SystemId::Sirv);
        assert_eq!(
            s.describe(),
            vec![
                "dS/dt = -0.5*S*I - 0.5*S",
                "dI/dt = 0.5*S*I - 1.0*I",
                "dR/dt = 1.0*I",
                "dV/dt = 0.5*S",
            ]
        );
        assert_eq!(s.initial_state, vec![0.999, 0.001, 0.0, 0.0]);
        assert_eq!(s.dt, 5e-2);
    }

    #[test]
    fn pendulum_rhs() {
        let s = builtin_spec(SystemId::Pendulum);
        assert!((s.initial_state[0] - FRAC_PI_4).abs() < 1e-4);
        let d = s.rhs(&[FRAC_PI_4, 0.0], 0.0).unwrap();
        assert_eq!(d[0], 0.0);
        assert!((d[1] + 6.9296).abs() < 1e-4);
    }

    #[test]
    fn reproduction_numbers() {
        assert!((builtin_spec(SystemId::Sir).r0().unwrap() - 3.0).abs() < 1e-12);
        assert!((builtin_spec(SystemId::Sis).r0().unwrap() - 3.0).abs() < 1e-12);
        assert!((builtin_spec(SystemId::Sirs).r0().unwrap() - 0.3).abs() < 1e-15);
        assert!(matches!(
            builtin_spec(SystemId::Lorenz).r0(),
            Err(SystemError::NotEpidemic(_))
        ));
        for id in SystemId::ALL.into_iter().filter(|i| i.is_epidemic()) {
            assert!(builtin_spec(id).r0().unwrap() > 0.0);
        }
    }

    #[test]
    fn unknown_and_mismatched() {
        let err = "nope".parse::<SystemId>().unwrap_err();
        assert!(err.to_string().contains("lorenz"));
        let s = builtin_spec(SystemId::Sir);
        assert!(matches!(s.rhs(&[1.0], 0.0), Err(SystemError::Dimension { .. })));
    }

    #[test]
    fn builtins_validate() {
        for id in SystemId::ALL {
            let s = builtin_spec(id);
            s.validate().unwrap();
            assert_eq!(s.name, id.name());
            assert_eq!(s.builtin_id(), Some(id));
        }
    }

    #[test]
    fn epidemic_rhs_conserves_population() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for id in SystemId::ALL.into_iter().filter(|i| i.is_epidemic()) {
            let s = builtin_spec(id);
            for _ in 0..200 {
                let state: Vec<f64> = (0..s.dim()).map(|_| rng.random::<f64>()).collect();
                let total: f64 = s.rhs(&state, 0.0).unwrap().iter().sum();
                assert!(total.abs() < 1e-12, "{id}: {total}");
            }
        }
    }

    #[test]
    fn expressions_agree_with_reference_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for id in SystemId::ALL {
            let s = builtin_spec(id);
            for _ in 0..1000 {
                let state: Vec<f64> = (0..s.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
                let a = s.rhs(&state, 0.0).unwrap();
                let b = s.reference_rhs(&state).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()), "{id}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn pendulum_rhs_is_odd() {
        let s = builtin_spec(SystemId::Pendulum);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let st = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let a = s.rhs(&st, 0.0).unwrap();
            let b = s.rhs(&[-st[0], -st[1]], 0.0).unwrap();
            assert_eq!(a[0], -b[0]);
            assert_eq!(a[1], -b[1]);
        }
    }

    #[test]
    fn spec_file_round_trip() {
        let s = builtin_spec(SystemId::Seird);
        let text = toml::to_string(&s).unwrap();
        let back: SystemSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn invalid_files_rejected() {
        let bad_sum = r#"
            name = "bad"
            variables = ["S", "I"]
            equations = ["-S*I", "S*I"]
            initial_state = [0.5, 0.6]
            t1 = 1.0
            dt = 0.1
            epidemic = true
        "#;
        assert!(toml::from_str::<SystemSpec>(bad_sum).is_err());
        let bad_dt = r#"
            name = "bad"
            variables = ["x"]
            equations = ["-x"]
            initial_state = [1.0]
            t1 = 1.0
            dt = 0.3
        "#;
        assert!(toml::from_str::<SystemSpec>(bad_dt).is_err());
        let bad_var = r#"
            name = "bad"
            variables = ["x"]
            equations = ["-y"]
            initial_state = [1.0]
            t1 = 1.0
            dt = 0.5
        "#;
        assert!(toml::from_str::<SystemSpec>(bad_var).is_err());
    }
}
