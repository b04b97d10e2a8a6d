use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::BenchError;
use crate::dynsys::{builtin_spec, SystemId};
use crate::gpsr::GpConfig;
use crate::sindy::SindyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MethodId {
    /// Sparse regression with a per-system choice of optimizer.
    Sindy,
    SindyStlsq,
    SindySr3,
    SindyOmp,
    Gpsr,
}

impl MethodId {
    pub const ALL: [MethodId; 5] = [
        MethodId::Sindy,
        MethodId::SindyStlsq,
        MethodId::SindySr3,
        MethodId::SindyOmp,
        MethodId::Gpsr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodId::Sindy => "sindy",
            MethodId::SindyStlsq => "sindy.stlsq",
            MethodId::SindySr3 => "sindy.sr3",
            MethodId::SindyOmp => "sindy.omp",
            MethodId::Gpsr => "gpsr",
        }
    }

    /// Optimizer kind forced by the method id, if any.
    pub fn fixed_optimizer(self) -> Option<&'static str> {
        match self {
            MethodId::SindyStlsq => Some("stlsq"),
            MethodId::SindySr3 => Some("sr3"),
            MethodId::SindyOmp => Some("omp"),
            _ => None,
        }
    }

    pub fn is_sindy(self) -> bool {
        self != MethodId::Gpsr
    }

    pub fn valid_names() -> String {
        MethodId::ALL.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| BenchError::UnknownMethod {
                name: s.to_string(),
                valid: MethodId::valid_names(),
            })
    }
}

impl TryFrom<String> for MethodId {
    type Error = BenchError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<MethodId> for String {
    fn from(m: MethodId) -> String {
        m.name().to_string()
    }
}

/// Hyperparameters of one method: a base table plus per-system tables
/// (and, for GP, per-variable tables) merged over it field by field.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MethodBlock {
    pub base: Table,
    pub systems: BTreeMap<String, Table>,
    pub variables: BTreeMap<String, BTreeMap<String, Table>>,
}

impl MethodBlock {
    fn from_table(mut t: Table) -> Result<Self, String> {
        let mut block = MethodBlock::default();
        if let Some(v) = t.remove("systems") {
            let Value::Table(systems) = v else {
                return Err("`systems` must be a table".into());
            };
            for (name, v) in systems {
                let Value::Table(mut st) = v else {
                    return Err(format!("`systems.{name}` must be a table"));
                };
                if let Some(vars) = st.remove("variables") {
                    let Value::Table(vars) = vars else {
                        return Err(format!("`systems.{name}.variables` must be a table"));
                    };
                    let mut per = BTreeMap::new();
                    for (var, v) in vars {
                        let Value::Table(vt) = v else {
                            return Err(format!("`systems.{name}.variables.{var}` must be a table"));
                        };
                        per.insert(var, vt);
                    }
                    block.variables.insert(name.clone(), per);
                }
                block.systems.insert(name, st);
            }
        }
        block.base = t;
        Ok(block)
    }

    /// Base merged with the system table and then the variable table.
    pub fn resolve(&self, system: &str, variable: Option<&str>) -> Table {
        let mut t = self.base.clone();
        if let Some(s) = self.systems.get(system) {
            merge(&mut t, s);
        }
        if let Some(v) = variable.and_then(|v| self.variables.get(system)?.get(v)) {
            merge(&mut t, v);
        }
        t
    }
}

/// Recursive field-wise merge. Arrays and scalars are replaced; a table
/// whose `kind` tag changes is replaced whole.
pub fn merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) if b.get("kind") == o.get("kind") || o.get("kind").is_none() => {
                merge(b, o)
            }
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub systems: Vec<SystemId>,
    pub methods: Vec<MethodId>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Relative coefficient tolerance for structural matching.
    pub match_rtol: f64,
    /// Samples used by the trajectory comparison.
    pub test_points: usize,
    /// Worker threads for cells; 0 uses every core.
    pub workers: usize,
    /// Gaussian noise added to the states before differentiation.
    pub noise: f64,
    pub blocks: BTreeMap<MethodId, MethodBlock>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    systems: Vec<String>,
    methods: Vec<String>,
    seeds: Vec<u64>,
    #[serde(default = "default_output")]
    output_dir: PathBuf,
    #[serde(default = "default_rtol")]
    match_rtol: f64,
    #[serde(default = "default_points")]
    test_points: usize,
    #[serde(default)]
    workers: usize,
    #[serde(default)]
    noise: f64,
    #[serde(default)]
    methods_config: Table,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_rtol() -> f64 {
    crate::expr::DEFAULT_COEFF_RTOL
}
fn default_points() -> usize {
    crate::stats::DEFAULT_TEST_POINTS
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let mut table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| BenchError::Config(e.to_string()))?;
        // `[methods.<id>]` blocks share the key with the method list.
        let blocks = match table.remove("methods") {
            Some(Value::Array(list)) => {
                table.insert("methods".into(), Value::Array(list));
                Table::new()
            }
            Some(Value::Table(mut t)) => {
                let list = t
                    .remove("run")
                    .ok_or_else(|| BenchError::Config("`methods.run` must list the methods to run".into()))?;
                table.insert("methods".into(), list);
                t
            }
            Some(_) => return Err(BenchError::Config("`methods` must be a list or a table".into())),
            None => Table::new(),
        };
        table.insert("methods_config".into(), Value::Table(blocks));
        let raw: RawConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| BenchError::Config(e.to_string()))?;

        let systems = if raw.systems.iter().any(|s| s == "all") {
            SystemId::ALL.to_vec()
        } else {
            raw.systems
                .iter()
                .map(|s| s.parse::<SystemId>().map_err(BenchError::System))
                .collect::<Result<_, _>>()?
        };
        let methods: Vec<MethodId> = raw.methods.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
        let mut blocks = BTreeMap::new();
        for (name, v) in raw.methods_config {
            let id: MethodId = name.parse()?;
            let Value::Table(t) = v else {
                return Err(BenchError::Config(format!("`methods.{name}` must be a table")));
            };
            let block = MethodBlock::from_table(t).map_err(|e| BenchError::Config(format!("methods.{name}: {e}")))?;
            blocks.insert(id, block);
        }
        let cfg = BenchConfig {
            systems,
            methods,
            seeds: raw.seeds,
            output_dir: raw.output_dir,
            match_rtol: raw.match_rtol,
            test_points: raw.test_points,
            workers: raw.workers,
            noise: raw.noise,
            blocks,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    /// Checks the matrix is non-empty and every cell's hyperparameters
    /// resolve.
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.systems.is_empty() || self.methods.is_empty() || self.seeds.is_empty() {
            return Err(BenchError::Config(
                "at least one system, method and seed is required".into(),
            ));
        }
        if !(self.match_rtol >= 0.0) || self.test_points < 2 || !(self.noise >= 0.0) {
            return Err(BenchError::Config(
                "match_rtol and noise must be non-negative and test_points at least 2".into(),
            ));
        }
        for &m in &self.methods {
            for &s in &self.systems {
                if m.is_sindy() {
                    self.sindy_config(m, s)?;
                } else {
                    for j in 0..builtin_spec(s).dim() {
                        self.gp_config(s, j, 0)?.validate().map_err(|e| BenchError::Method {
                            method: m,
                            system: s.name().to_string(),
                            message: e.to_string(),
                        })?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn block(&self, m: MethodId) -> MethodBlock {
        self.blocks.get(&m).cloned().unwrap_or_default()
    }

    pub fn sindy_config(&self, m: MethodId, s: SystemId) -> Result<SindyConfig, BenchError> {
        sindy_from_table(m, self.block(m).resolve(s.name(), None)).map_err(|message| BenchError::Method {
            method: m,
            system: s.name().to_string(),
            message,
        })
    }

    /// GP settings for variable `j` of system `s`, seeded with `seed`.
    pub fn gp_config(&self, s: SystemId, j: usize, seed: u64) -> Result<GpConfig, BenchError> {
        let spec = builtin_spec(s);
        let t = self
            .block(MethodId::Gpsr)
            .resolve(s.name(), spec.variables.get(j).map(String::as_str));
        let mut cfg: GpConfig = Value::Table(t)
            .try_into()
            .map_err(|e: toml::de::Error| BenchError::Method {
                method: MethodId::Gpsr,
                system: s.name().to_string(),
                message: e.to_string(),
            })?;
        cfg.seed = seed;
        Ok(cfg)
    }
}

/// Builds a sparse-regression configuration from a resolved table. For
/// the `sindy.<optimizer>` methods the optimizer kind is implied.
pub fn sindy_from_table(m: MethodId, mut t: Table) -> Result<SindyConfig, String> {
    if let Some(kind) = m.fixed_optimizer() {
        let opt = t.entry("optimizer").or_insert_with(|| Value::Table(Table::new()));
        let Value::Table(opt) = opt else {
            return Err("`optimizer` must be a table".into());
        };
        match opt.get("kind").and_then(Value::as_str) {
            None => {
                opt.insert("kind".into(), Value::String(kind.into()));
            }
            Some(k) if k == kind => {}
            Some(k) => return Err(format!("method {m} cannot use optimizer `{k}`")),
        }
    }
    for key in ["library", "optimizer"] {
        if !t.contains_key(key) {
            return Err(format!("missing key `{key}`"));
        }
    }
    Value::Table(t).try_into().map_err(|e: toml::de::Error| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sindy::{Optimizer, Thresholder};

    const SAMPLE: &str = r#"
systems = ["sir", "pendulum"]
seeds = [1, 2]
output_dir = "results"

[methods]
run = ["sindy", "gpsr"]

[methods.sindy]
normalize_columns = true
library = { generators = [{ kind = "custom", templates = ["x", "x*y"] }] }
optimizer = { kind = "stlsq", threshold = 0.6, alpha = 1e-4 }

[methods.sindy.systems.pendulum]
normalize_columns = false
library = { generators = [{ kind = "polynomial", degree = 1 }, { kind = "fourier", n = 1 }] }
optimizer = { kind = "sr3", threshold = 0.4, thresholder = "l1" }

[methods.gpsr]
population_size = 500
function_set = ["add", "sub", "mul"]

[methods.gpsr.systems.pendulum]
function_set = ["add", "mul", "sin"]
parsimony_coefficient = 0.009

[methods.gpsr.systems.pendulum.variables.theta]
max_size = 5
"#;

    #[test]
    fn parses_and_merges() {
        let cfg = BenchConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.systems, vec![SystemId::Sir, SystemId::Pendulum]);
        assert_eq!(cfg.methods, vec![MethodId::Sindy, MethodId::Gpsr]);
        assert_eq!(cfg.output_dir, PathBuf::from("results"));
        let sir = cfg.sindy_config(MethodId::Sindy, SystemId::Sir).unwrap();
        assert!(sir.normalize_columns);
        assert!(matches!(sir.optimizer, Optimizer::Stlsq(p) if p.threshold == 0.6 && p.alpha == 1e-4));
        let pend = cfg.sindy_config(MethodId::Sindy, SystemId::Pendulum).unwrap();
        assert!(!pend.normalize_columns);
        // The kind changed, so no STLSQ field leaks into the SR3 block.
        assert!(matches!(pend.optimizer, Optimizer::Sr3(p) if p.thresholder == Thresholder::L1));

        let theta = cfg.gp_config(SystemId::Pendulum, 0, 7).unwrap();
        let omega = cfg.gp_config(SystemId::Pendulum, 1, 7).unwrap();
        assert_eq!((theta.max_size, omega.max_size), (5, GpConfig::default().max_size));
        assert_eq!(omega.population_size, 500);
        assert_eq!(omega.parsimony_coefficient, 0.009);
        assert_eq!(omega.function_set.len(), 3);
        assert_eq!(omega.seed, 7);
        let sir = cfg.gp_config(SystemId::Sir, 0, 0).unwrap();
        assert_eq!(sir.parsimony_coefficient, GpConfig::default().parsimony_coefficient);
    }

    #[test]
    fn flat_method_list() {
        let text = r#"
systems = ["all"]
methods = ["gpsr"]
seeds = [0]
"#;
        let cfg = BenchConfig::from_toml(text).unwrap();
        assert_eq!(cfg.systems.len(), 9);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn rejects_bad_configs() {
        let unknown = SAMPLE.replace(r#"run = ["sindy", "gpsr"]"#, r#"run = ["sindy", "eureqa"]"#);
        assert!(matches!(
            BenchConfig::from_toml(&unknown),
            Err(BenchError::UnknownMethod { .. })
        ));
        let no_seeds = SAMPLE.replace("seeds = [1, 2]", "seeds = []");
        assert!(matches!(BenchConfig::from_toml(&no_seeds), Err(BenchError::Config(_))));
        let system = SAMPLE.replace(r#"["sir", "pendulum"]"#, r#"["sir", "ebola"]"#);
        assert!(matches!(BenchConfig::from_toml(&system), Err(BenchError::System(_))));
        let typo = SAMPLE.replace("population_size = 500", "populaton_size = 500");
        assert!(matches!(BenchConfig::from_toml(&typo), Err(BenchError::Method { .. })));
        let extra = format!("verbose = true\n{SAMPLE}");
        assert!(matches!(BenchConfig::from_toml(&extra), Err(BenchError::Config(_))));
    }

    #[test]
    fn omp_requires_sparsity_level() {
        let t: Table = toml::from_str(r#"library = { generators = [{ kind = "polynomial", degree = 1 }] }"#).unwrap();
        let err = sindy_from_table(MethodId::SindyOmp, t.clone()).unwrap_err();
        assert!(err.contains("n_nonzero"), "{err}");
        let mut ok = t.clone();
        ok.insert("optimizer".into(), toml::from_str::<Value>("n_nonzero = 2").unwrap());
        assert!(sindy_from_table(MethodId::SindyOmp, ok).is_ok());
        let err = sindy_from_table(MethodId::Sindy, t).unwrap_err();
        assert!(err.contains("optimizer"), "{err}");
    }

    #[test]
    fn merge_rules() {
        let mut base: Table = toml::from_str("a = 1\n[t]\nkind = 'x'\np = 1\nq = 2\n[u]\nr = [1, 2]").unwrap();
        let over: Table = toml::from_str("a = 2\n[t]\nkind = 'x'\nq = 3\n[u]\nr = [5]").unwrap();
        merge(&mut base, &over);
        assert_eq!(
            base.to_string(),
            toml::from_str::<Table>("a = 2\n[t]\nkind = 'x'\np = 1\nq = 3\n[u]\nr = [5]")
                .unwrap()
                .to_string()
        );
        let swap: Table = toml::from_str("[t]\nkind = 'y'\nz = 0").unwrap();
        merge(&mut base, &swap);
        assert_eq!(base["t"].as_table().unwrap().len(), 2);
    }
}
