//! Genetic-programming symbolic regression.
//!
//! Each target is fitted by an independent search: islands of expression
//! trees evolve by tournament selection, crossover and three mutations,
//! scored by mean squared error plus a per-node parsimony penalty. Every
//! evaluated tree is offered to a complexity/loss Pareto front, and new
//! front entries get their constants refined by Nelder–Mead.

mod constants;
mod front;
mod variation;

use std::io;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::expr::{Expr, Op};
use crate::odeint::Trajectory;

pub use constants::optimize_constants;
pub use front::{FrontEntry, ModelSelection, ParetoFront};
pub use variation::{
    crossover, hoist_mutation, init_population, offspring, point_mutation, random_tree, subtree_mutation,
    tournament_select, InitMethod, Variation, MAX_RETRIES,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GpError {
    #[error("function set is empty")]
    EmptyFunctionSet,
    #[error("population is empty")]
    EmptyPopulation,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{inputs} input rows but {target} targets")]
    Shape { inputs: usize, target: usize },
    #[error("trajectory has no derivatives")]
    NoDerivatives,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    /// Individuals per island.
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    /// Stop once the best raw mean squared error is at or below this.
    pub stopping_criteria: f64,
    pub p_crossover: f64,
    pub p_subtree_mutation: f64,
    pub p_hoist_mutation: f64,
    pub p_point_mutation: f64,
    pub init_depth: (usize, usize),
    pub parsimony_coefficient: f64,
    pub function_set: Vec<Op>,
    /// Node cap for every tree.
    pub max_size: usize,
    /// Forbidden `(outer, inner)` pairs of directly nested operators.
    pub nested_constraints: Vec<(Op, Op)>,
    pub seed: u64,
    pub n_populations: usize,
    pub model_selection: ModelSelection,
    /// Generations between ring migrations of island elites.
    pub migration_interval: usize,
    /// Nelder–Mead iterations per new front entry; 0 disables refinement.
    pub optimize_iters: usize,
    /// Rows used for fitness, evenly spaced over the data; 0 uses all.
    pub max_samples: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population_size: 1000,
            generations: 50,
            tournament_size: 7,
            stopping_criteria: 0.0,
            p_crossover: 0.7,
            p_subtree_mutation: 0.1,
            p_hoist_mutation: 0.05,
            p_point_mutation: 0.1,
            init_depth: (2, 4),
            parsimony_coefficient: 0.001,
            function_set: ["add", "sub", "mul"]
                .iter()
                .map(|s| s.parse().expect("known op"))
                .collect(),
            max_size: 30,
            nested_constraints: Vec::new(),
            seed: 0,
            n_populations: 1,
            model_selection: ModelSelection::Best,
            migration_interval: 10,
            optimize_iters: 200,
            max_samples: 1000,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<(), GpError> {
        let bad = |m: String| Err(GpError::Config(m));
        if self.function_set.is_empty() {
            return Err(GpError::EmptyFunctionSet);
        }
        let probs = [
            self.p_crossover,
            self.p_subtree_mutation,
            self.p_hoist_mutation,
            self.p_point_mutation,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || probs.iter().sum::<f64>() > 1.0 + 1e-12 {
            return bad("variation probabilities must lie in [0, 1] and sum to at most 1".into());
        }
        if self.population_size == 0 || self.n_populations == 0 {
            return bad("population_size and n_populations must be positive".into());
        }
        if self.tournament_size == 0 || self.tournament_size > self.population_size {
            return bad(format!(
                "tournament_size {} must be in 1..={}",
                self.tournament_size, self.population_size
            ));
        }
        if self.init_depth.0 > self.init_depth.1 {
            return bad(format!("init_depth {:?} has min > max", self.init_depth));
        }
        if self.max_size < 3 {
            return bad(format!("max_size {} is below 3", self.max_size));
        }
        if !(self.parsimony_coefficient >= 0.0) || !(self.stopping_criteria >= 0.0) {
            return bad("parsimony_coefficient and stopping_criteria must be non-negative".into());
        }
        Ok(())
    }

    pub fn forbids(&self, outer: Op, inner: Op) -> bool {
        self.nested_constraints.contains(&(outer, inner))
    }

    /// Whether a tree uses only allowed operators, fits the node cap and
    /// violates no nesting constraint.
    pub fn admits(&self, e: &Expr) -> bool {
        if e.complexity() > self.max_size {
            return false;
        }
        let mut ok = true;
        e.visit(&mut |n| {
            if let Some(op) = n.op() {
                ok &= self.function_set.contains(&op);
            }
        });
        ok && self
            .nested_constraints
            .iter()
            .all(|&(outer, inner)| !e.contains_nesting(outer, inner))
    }
}

/// Mean squared error over the samples; `+∞` if any prediction is not finite.
pub fn mse(expr: &Expr, inputs: &[Vec<f64>], target: &[f64]) -> f64 {
    let cols: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let pred = expr.eval_columns_unchecked(&cols, target.len());
    let mut sum = 0.0;
    for (p, y) in pred.iter().zip(target) {
        if !p.is_finite() {
            return f64::INFINITY;
        }
        sum += (p - y) * (p - y);
    }
    let m = sum / target.len() as f64;
    if m.is_finite() {
        m
    } else {
        f64::INFINITY
    }
}

/// Mean squared error plus `parsimony * complexity`.
pub fn fitness(expr: &Expr, inputs: &[Vec<f64>], target: &[f64], parsimony: f64) -> f64 {
    mse(expr, inputs, target) + parsimony * expr.complexity() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub expr: Expr,
    /// Raw mean squared error.
    pub loss: f64,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_loss: f64,
    pub mean_loss: f64,
    pub best_complexity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpResult {
    pub best: Expr,
    pub best_loss: f64,
    pub front: ParetoFront,
    pub log: Vec<GenerationStats>,
}

/// Writes the generation log as CSV.
pub fn write_log_csv<W: io::Write>(log: &[GenerationStats], w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for row in log {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

struct Problem<'a> {
    inputs: &'a [Vec<f64>],
    target: &'a [f64],
    parsimony: f64,
}

impl Problem<'_> {
    fn individual(&self, expr: Expr) -> Individual {
        let loss = mse(&expr, self.inputs, self.target);
        let fitness = loss + self.parsimony * expr.complexity() as f64;
        Individual { expr, loss, fitness }
    }
}

#[derive(Clone)]
struct Island {
    pop: Vec<Individual>,
    rng: ChaCha8Rng,
}

impl Island {
    fn best_loss(&self) -> usize {
        argmin_by(&self.pop, |i| i.loss)
    }

    fn best_fitness(&self) -> usize {
        argmin_by(&self.pop, |i| i.fitness)
    }
}

fn argmin_by(pop: &[Individual], key: impl Fn(&Individual) -> f64) -> usize {
    let mut best = 0;
    for (i, ind) in pop.iter().enumerate().skip(1) {
        let (a, b) = (key(ind), key(&pop[best]));
        if a < b || a == b && ind.expr.complexity() < pop[best].expr.complexity() {
            best = i;
        }
    }
    best
}

fn subsample(n: usize, max: usize) -> Vec<usize> {
    if max == 0 || n <= max {
        return (0..n).collect();
    }
    (0..max).map(|k| k * (n - 1) / (max - 1)).collect()
}

/// Runs the search on `inputs` (one column per variable) against `target`.
pub fn evolve(cfg: &GpConfig, inputs: &[Vec<f64>], target: &[f64], exec: Exec) -> Result<GpResult, GpError> {
    cfg.validate()?;
    if let Some(c) = inputs.iter().find(|c| c.len() != target.len()) {
        return Err(GpError::Shape {
            inputs: c.len(),
            target: target.len(),
        });
    }
    let rows = subsample(target.len(), cfg.max_samples);
    let inputs: Vec<Vec<f64>> = inputs.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect();
    let target: Vec<f64> = rows.iter().map(|&r| target[r]).collect();
    let problem = Problem {
        inputs: &inputs,
        target: &target,
        parsimony: cfg.parsimony_coefficient,
    };
    let n_vars = inputs.len();

    let mut islands: Vec<Island> = (0..cfg.n_populations)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let exprs: Vec<Expr> = init_population(cfg, n_vars, &mut rng)?
                .iter()
                .map(Expr::fold_constants)
                .collect();
            let pop = exec.map(&exprs, |e| problem.individual(e.clone()));
            Ok(Island { pop, rng })
        })
        .collect::<Result<_, GpError>>()?;

    let mut front = ParetoFront::new();
    let mut log = Vec::new();
    for generation in 0..=cfg.generations {
        if generation > 0 {
            islands = exec.map(&islands, |island| step(island, cfg, n_vars, &problem, exec));
            if cfg.n_populations > 1 && cfg.migration_interval > 0 && generation % cfg.migration_interval == 0 {
                migrate(&mut islands);
            }
        }
        refine(&mut islands, &mut front, cfg, &problem, exec);
        let stats = generation_stats(generation, &islands);
        let done = stats.best_loss <= cfg.stopping_criteria;
        log.push(stats);
        if done {
            break;
        }
    }
    let chosen = front
        .select(cfg.model_selection, cfg.parsimony_coefficient)
        .cloned()
        .unwrap_or_else(|| {
            // Nothing finite was ever found; fall back to the fittest tree.
            let island = &islands[0];
            let ind = &island.pop[island.best_fitness()];
            FrontEntry {
                expr: ind.expr.clone(),
                loss: ind.loss,
            }
        });
    Ok(GpResult {
        best: chosen.expr,
        best_loss: chosen.loss,
        front,
        log,
    })
}

fn step(island: &Island, cfg: &GpConfig, n_vars: usize, problem: &Problem<'_>, exec: Exec) -> Island {
    let mut rng = island.rng.clone();
    let elite = island.pop[island.best_loss()].clone();
    let children: Vec<Expr> = (1..cfg.population_size)
        .map(|_| offspring(&island.pop, cfg, n_vars, &mut rng).fold_constants())
        .collect();
    let mut pop = Vec::with_capacity(cfg.population_size);
    pop.push(elite);
    pop.extend(exec.map(&children, |e| problem.individual(e.clone())));
    Island { pop, rng }
}

/// Each island's fittest individual replaces the least fit one of the next
/// island in the ring.
fn migrate(islands: &mut [Island]) {
    let n = islands.len();
    let emigrants: Vec<Individual> = islands.iter().map(|i| i.pop[i.best_fitness()].clone()).collect();
    for (k, ind) in emigrants.into_iter().enumerate() {
        let dest = &mut islands[(k + 1) % n];
        let worst = (0..dest.pop.len())
            .rev()
            .max_by(|&a, &b| dest.pop[a].fitness.total_cmp(&dest.pop[b].fitness))
            .expect("non-empty island");
        dest.pop[worst] = ind;
    }
}

/// Offers every individual to the front in island/index order. For each
/// complexity the best newcomer has its constants refined first, and the
/// refined tree takes its place in the population.
fn refine(islands: &mut [Island], front: &mut ParetoFront, cfg: &GpConfig, problem: &Problem<'_>, exec: Exec) {
    if cfg.optimize_iters > 0 {
        let mut best_at: std::collections::BTreeMap<usize, (usize, usize, f64)> = Default::default();
        for (k, island) in islands.iter().enumerate() {
            for (i, ind) in island.pop.iter().enumerate() {
                let c = ind.expr.complexity();
                if !front.improves(c, ind.loss) || ind.expr.constants().is_empty() {
                    continue;
                }
                if best_at.get(&c).is_none_or(|&(_, _, l)| ind.loss < l) {
                    best_at.insert(c, (k, i, ind.loss));
                }
            }
        }
        let picks: Vec<(usize, usize)> = best_at.values().map(|&(k, i, _)| (k, i)).collect();
        let refined = exec.map(&picks, |&(k, i)| {
            let e = optimize_constants(
                &islands[k].pop[i].expr,
                problem.inputs,
                problem.target,
                cfg.optimize_iters,
            );
            problem.individual(e)
        });
        for ((k, i), ind) in picks.into_iter().zip(refined) {
            islands[k].pop[i] = ind;
        }
    }
    for island in islands.iter() {
        for ind in &island.pop {
            front.insert(&ind.expr, ind.loss);
        }
    }
}

fn generation_stats(generation: usize, islands: &[Island]) -> GenerationStats {
    let mut best: Option<&Individual> = None;
    let (mut sum, mut count) = (0.0, 0usize);
    for ind in islands.iter().flat_map(|i| &i.pop) {
        if ind.loss.is_finite() {
            sum += ind.loss;
            count += 1;
        }
        if best.is_none_or(|b| ind.loss < b.loss || ind.loss == b.loss && ind.expr.complexity() < b.expr.complexity()) {
            best = Some(ind);
        }
    }
    let best = best.expect("non-empty population");
    GenerationStats {
        generation,
        best_loss: best.loss,
        mean_loss: if count > 0 { sum / count as f64 } else { f64::INFINITY },
        best_complexity: best.expr.complexity(),
    }
}

/// One search per derivative column.
#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    pub variables: Vec<String>,
    pub results: Vec<GpResult>,
}

impl GpModel {
    pub fn expressions(&self) -> Vec<Expr> {
        self.results.iter().map(|r| r.best.clone()).collect()
    }
}

/// Seed used for the search on variable `j`.
pub fn variable_seed(seed: u64, j: usize) -> u64 {
    seed ^ (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fits every derivative column against all state variables.
pub fn discover(traj: &Trajectory, cfg: &GpConfig, exec: Exec) -> Result<GpModel, GpError> {
    discover_with(traj, |_| cfg.clone(), exec)
}

/// Like [`discover`] with a per-variable configuration.
pub fn discover_with(traj: &Trajectory, cfg_for: impl Fn(usize) -> GpConfig, exec: Exec) -> Result<GpModel, GpError> {
    let targets = traj.derivative_columns().ok_or(GpError::NoDerivatives)?;
    let inputs = traj.state_columns();
    let results = (0..targets.len())
        .map(|j| {
            let mut cfg = cfg_for(j);
            cfg.seed = variable_seed(cfg.seed, j);
            evolve(&cfg, &inputs, &targets[j], exec)
        })
        .collect::<Result<_, _>>()?;
    Ok(GpModel {
        variables: traj.variables.clone(),
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn line(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 * 0.1 - 1.0).collect()
    }

    #[test]
    fn fitness_rules() {
        let x = line(30);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        let e = parse("3*x*x", &["x"]).unwrap();
        assert_eq!(fitness(&e, std::slice::from_ref(&x), &y, 0.0), 0.0);
        let c = parse("1.5", &["x"]).unwrap();
        assert_eq!(fitness(&c, std::slice::from_ref(&x), &vec![1.5; 30], 0.01), 0.01);
        let d = parse("1/(x - x)", &["x"]).unwrap();
        assert_eq!(fitness(&d, std::slice::from_ref(&x), &y, 0.01), f64::INFINITY);
        // x passes through 0 exactly once on this grid.
        let d = parse("1/x", &["x"]).unwrap();
        assert_eq!(fitness(&d, &[x], &y, 0.0), f64::INFINITY);
    }

    #[test]
    fn config_validation() {
        assert!(GpConfig::default().validate().is_ok());
        let bad = [
            GpConfig {
                p_crossover: 0.9,
                ..GpConfig::default()
            },
            GpConfig {
                tournament_size: 2000,
                ..GpConfig::default()
            },
            GpConfig {
                init_depth: (4, 2),
                ..GpConfig::default()
            },
            GpConfig {
                max_size: 2,
                ..GpConfig::default()
            },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(GpError::Config(_))), "{c:?}");
        }
        let c = GpConfig {
            function_set: vec![],
            ..GpConfig::default()
        };
        assert_eq!(c.validate(), Err(GpError::EmptyFunctionSet));
    }

    #[test]
    fn config_from_toml() {
        let c: GpConfig = toml::from_str(
            r#"
            population_size = 200
            function_set = ["add", "mul", "sin"]
            nested_constraints = [["sin", "sin"]]
            init_depth = [1, 3]
            model_selection = "accuracy"
            "#,
        )
        .unwrap();
        assert_eq!(c.population_size, 200);
        assert_eq!(c.init_depth, (1, 3));
        assert_eq!(c.model_selection, ModelSelection::Accuracy);
        let sin: Op = "sin".parse().unwrap();
        assert!(c.forbids(sin, sin));
        assert!(toml::from_str::<GpConfig>("populaton_size = 3").is_err());
    }

    #[test]
    fn identity_task_solved_quickly() {
        let x0 = line(40);
        let x1: Vec<f64> = x0.iter().map(|v| (3.0 * v).cos()).collect();
        let mut solved = 0;
        for seed in 0..10 {
            let cfg = GpConfig {
                population_size: 200,
                generations: 5,
                seed,
                stopping_criteria: 0.0,
                ..GpConfig::default()
            };
            let r = evolve(&cfg, &[x0.clone(), x1.clone()], &x0, Exec::Sequential).unwrap();
            if r.best == Expr::var(0) && r.best_loss == 0.0 {
                solved += 1;
            }
            assert!(r.log.len() <= 6);
        }
        assert!(solved >= 9, "{solved}/10");
    }

    #[test]
    fn elitism_and_front_invariants() {
        let x = line(50);
        let y: Vec<f64> = x.iter().map(|v| v * v * v - 0.5 * v + 0.3).collect();
        let cfg = GpConfig {
            population_size: 300,
            generations: 15,
            n_populations: 3,
            migration_interval: 5,
            max_size: 15,
            seed: 11,
            ..GpConfig::default()
        };
        let r = evolve(&cfg, std::slice::from_ref(&x), &y, Exec::Parallel).unwrap();
        assert!(r.log.windows(2).all(|w| w[1].best_loss <= w[0].best_loss));
        assert!(r.front.is_monotone());
        assert!(r.front.entries().all(|e| cfg.admits(&e.expr)));
        let again = evolve(&cfg, std::slice::from_ref(&x), &y, Exec::Sequential).unwrap();
        assert_eq!(r, again);
        let mut buf = Vec::new();
        write_log_csv(&r.log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("generation,best_loss,mean_loss,best_complexity\n"));
        assert_eq!(text.lines().count(), r.log.len() + 1);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let r = evolve(&GpConfig::default(), &[vec![1.0, 2.0]], &[1.0], Exec::Sequential);
        assert_eq!(r, Err(GpError::Shape { inputs: 2, target: 1 }));
    }
}
