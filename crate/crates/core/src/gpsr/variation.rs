//! Tree generation, selection and the four variation operators.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{GpConfig, GpError, Individual};
use crate::expr::{BinaryOp, Expr, Op, UnaryOp};

/// Attempts per variation before the parent is copied unchanged.
pub const MAX_RETRIES: usize = 10;

const CONST_RANGE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMethod {
    Full,
    Grow,
}

fn random_terminal<R: Rng + ?Sized>(n_vars: usize, rng: &mut R) -> Expr {
    if n_vars > 0 && rng.random_range(0..=n_vars) < n_vars {
        Expr::var(rng.random_range(0..n_vars))
    } else {
        Expr::constant(rng.random_range(-CONST_RANGE..=CONST_RANGE))
    }
}

fn allowed_ops(cfg: &GpConfig, parent: Option<Op>) -> Vec<Op> {
    cfg.function_set
        .iter()
        .copied()
        .filter(|op| parent.is_none_or(|p| !cfg.forbids(p, *op)))
        .collect()
}

fn make_node(op: Op, mut children: Vec<Expr>) -> Expr {
    match op {
        Op::Unary(u) => Expr::unary(u, children.pop().expect("one child")),
        Op::Binary(b) => {
            let rhs = children.pop().expect("two children");
            let lhs = children.pop().expect("two children");
            Expr::binary(b, lhs, rhs)
        }
    }
}

fn build<R: Rng + ?Sized>(
    cfg: &GpConfig,
    n_vars: usize,
    depth: usize,
    method: InitMethod,
    parent: Option<Op>,
    rng: &mut R,
) -> Expr {
    let ops = allowed_ops(cfg, parent);
    if depth == 0 || ops.is_empty() {
        return random_terminal(n_vars, rng);
    }
    if method == InitMethod::Grow {
        // Terminals compete with functions in proportion to their counts.
        let n_terms = n_vars + 1;
        if rng.random_range(0..n_terms + ops.len()) < n_terms {
            return random_terminal(n_vars, rng);
        }
    }
    let op = ops[rng.random_range(0..ops.len())];
    let children = (0..op.arity())
        .map(|_| build(cfg, n_vars, depth - 1, method, Some(op), rng))
        .collect();
    make_node(op, children)
}

/// A random tree of the given depth (exact for `Full`, at most for `Grow`).
/// Nesting constraints are honoured during construction; size is not.
pub fn random_tree<R: Rng + ?Sized>(
    cfg: &GpConfig,
    n_vars: usize,
    depth: usize,
    method: InitMethod,
    rng: &mut R,
) -> Expr {
    build(cfg, n_vars, depth, method, None, rng)
}

/// Ramped half-and-half: even slots use full trees, odd slots grow trees,
/// depths uniform over `init_depth`. Oversized trees are redrawn.
pub fn init_population<R: Rng + ?Sized>(cfg: &GpConfig, n_vars: usize, rng: &mut R) -> Result<Vec<Expr>, GpError> {
    if cfg.function_set.is_empty() {
        return Err(GpError::EmptyFunctionSet);
    }
    let (lo, hi) = cfg.init_depth;
    let mut out = Vec::with_capacity(cfg.population_size);
    for i in 0..cfg.population_size {
        let method = if i % 2 == 0 { InitMethod::Full } else { InitMethod::Grow };
        let mut tree = None;
        for _ in 0..100 {
            let depth = rng.random_range(lo..=hi);
            let t = random_tree(cfg, n_vars, depth, method, rng);
            if cfg.admits(&t) {
                tree = Some(t);
                break;
            }
        }
        out.push(tree.unwrap_or_else(|| random_terminal(n_vars, rng)));
    }
    Ok(out)
}

/// Index of the winner among `k` uniform draws with replacement. Lower
/// fitness wins; ties go to the smaller tree, then the lower index.
pub fn tournament_select<R: Rng + ?Sized>(population: &[Individual], k: usize, rng: &mut R) -> Result<usize, GpError> {
    if population.is_empty() {
        return Err(GpError::EmptyPopulation);
    }
    let mut best = rng.random_range(0..population.len());
    for _ in 1..k.max(1) {
        let c = rng.random_range(0..population.len());
        if beats(&population[c], c, &population[best], best) {
            best = c;
        }
    }
    Ok(best)
}

fn beats(a: &Individual, ia: usize, b: &Individual, ib: usize) -> bool {
    let key = |x: &Individual, i: usize| (x.fitness, x.expr.complexity(), i);
    let (fa, ca, ia) = key(a, ia);
    let (fb, cb, ib) = key(b, ib);
    match fa.total_cmp(&fb) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => (ca, ia) < (cb, ib),
    }
}

/// Replaces a uniformly chosen subtree of `a` with a uniformly chosen
/// subtree of `b`.
pub fn crossover<R: Rng + ?Sized>(a: &Expr, b: &Expr, rng: &mut R) -> Expr {
    let at = rng.random_range(0..a.complexity());
    let from = rng.random_range(0..b.complexity());
    let donor = b.subtree(from).expect("index within tree").clone();
    a.replace_subtree(at, donor)
}

/// Replaces a uniformly chosen subtree with a fresh grow tree.
pub fn subtree_mutation<R: Rng + ?Sized>(a: &Expr, cfg: &GpConfig, n_vars: usize, rng: &mut R) -> Expr {
    let at = rng.random_range(0..a.complexity());
    let (lo, hi) = cfg.init_depth;
    let depth = rng.random_range(lo..=hi);
    let fresh = random_tree(cfg, n_vars, depth, InitMethod::Grow, rng);
    a.replace_subtree(at, fresh)
}

/// Replaces a subtree with one of its own subtrees; never grows the tree.
pub fn hoist_mutation<R: Rng + ?Sized>(a: &Expr, rng: &mut R) -> Expr {
    let at = rng.random_range(0..a.complexity());
    let sub = a.subtree(at).expect("index within tree");
    let inner = rng.random_range(0..sub.complexity());
    let hoisted = sub.subtree(inner).expect("index within subtree").clone();
    a.replace_subtree(at, hoisted)
}

/// Changes one node: an operator becomes another of the same arity, a
/// variable becomes another terminal, a constant takes a Gaussian step.
pub fn point_mutation<R: Rng + ?Sized>(a: &Expr, cfg: &GpConfig, n_vars: usize, rng: &mut R) -> Expr {
    let at = rng.random_range(0..a.complexity());
    let node = a.subtree(at).expect("index within tree");
    let replacement = match node {
        Expr::Const(c) => {
            let step = Normal::new(0.0, 0.1 * c.abs().max(1.0)).expect("positive scale");
            Expr::constant(c + step.sample(rng))
        }
        Expr::Var(v) => {
            // Another variable or a fresh constant, never the same variable.
            let k = rng.random_range(0..n_vars.max(1));
            if k + 1 < n_vars {
                Expr::var(if k >= *v { k + 1 } else { k })
            } else {
                Expr::constant(rng.random_range(-CONST_RANGE..=CONST_RANGE))
            }
        }
        Expr::Unary(op, child) => {
            let pool: Vec<UnaryOp> = cfg
                .function_set
                .iter()
                .filter_map(|o| match o {
                    Op::Unary(u) if u != op => Some(*u),
                    _ => None,
                })
                .collect();
            if pool.is_empty() {
                return a.clone();
            }
            Expr::unary(pool[rng.random_range(0..pool.len())], (**child).clone())
        }
        Expr::Binary(op, l, r) => {
            let pool: Vec<BinaryOp> = cfg
                .function_set
                .iter()
                .filter_map(|o| match o {
                    Op::Binary(b) if b != op => Some(*b),
                    _ => None,
                })
                .collect();
            if pool.is_empty() {
                return a.clone();
            }
            Expr::binary(pool[rng.random_range(0..pool.len())], (**l).clone(), (**r).clone())
        }
    };
    a.replace_subtree(at, replacement)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variation {
    Crossover,
    Subtree,
    Hoist,
    Point,
    Reproduction,
}

impl Variation {
    pub fn draw<R: Rng + ?Sized>(cfg: &GpConfig, rng: &mut R) -> Variation {
        let r: f64 = rng.random();
        let mut acc = cfg.p_crossover;
        if r < acc {
            return Variation::Crossover;
        }
        acc += cfg.p_subtree_mutation;
        if r < acc {
            return Variation::Subtree;
        }
        acc += cfg.p_hoist_mutation;
        if r < acc {
            return Variation::Hoist;
        }
        acc += cfg.p_point_mutation;
        if r < acc {
            return Variation::Point;
        }
        Variation::Reproduction
    }
}

/// Produces one admissible child from the population, retrying a
/// constraint-violating variation up to [`MAX_RETRIES`] times before
/// falling back to a copy of the first parent.
pub fn offspring<R: Rng + ?Sized>(population: &[Individual], cfg: &GpConfig, n_vars: usize, rng: &mut R) -> Expr {
    let kind = Variation::draw(cfg, rng);
    let parent = tournament_select(population, cfg.tournament_size, rng).expect("non-empty population");
    let a = &population[parent].expr;
    if kind == Variation::Reproduction {
        return a.clone();
    }
    let donor = if kind == Variation::Crossover {
        Some(tournament_select(population, cfg.tournament_size, rng).expect("non-empty population"))
    } else {
        None
    };
    for _ in 0..MAX_RETRIES {
        let child = match kind {
            Variation::Crossover => crossover(a, &population[donor.expect("donor drawn")].expr, rng),
            Variation::Subtree => subtree_mutation(a, cfg, n_vars, rng),
            Variation::Hoist => hoist_mutation(a, rng),
            Variation::Point => point_mutation(a, cfg, n_vars, rng),
            Variation::Reproduction => unreachable!(),
        };
        if cfg.admits(&child) {
            return child;
        }
    }
    a.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(ops: &[&str]) -> GpConfig {
        GpConfig {
            function_set: ops.iter().map(|o| o.parse().unwrap()).collect(),
            ..GpConfig::default()
        }
    }

    fn ind(expr: Expr, fitness: f64) -> Individual {
        Individual {
            expr,
            loss: fitness,
            fitness,
        }
    }

    #[test]
    fn full_trees_have_exact_depth() {
        let c = GpConfig {
            init_depth: (2, 2),
            ..cfg(&["add", "mul", "sin"])
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let t = random_tree(&c, 3, 2, InitMethod::Full, &mut rng);
            assert_eq!(t.depth(), 2);
        }
        let pop = init_population(&c, 3, &mut rng).unwrap();
        assert!(pop.iter().step_by(2).all(|t| t.depth() == 2));
        assert!(pop.iter().all(|t| t.depth() <= 2));
    }

    #[test]
    fn nesting_constraint_respected() {
        let sin: Op = "sin".parse().unwrap();
        let c = GpConfig {
            population_size: 10_000,
            init_depth: (1, 5),
            max_size: 60,
            nested_constraints: vec![(sin, sin)],
            ..cfg(&["add", "mul", "sin"])
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pop = init_population(&c, 2, &mut rng).unwrap();
        assert_eq!(pop.len(), 10_000);
        assert!(pop.iter().all(|t| !t.contains_nesting(sin, sin)));
        assert!(pop.iter().any(|t| t.op() == Some(sin)));
        assert!(pop.iter().all(|t| t.complexity() <= 60));
    }

    #[test]
    fn seeded_population_is_reproducible() {
        let c = cfg(&["add", "sub", "mul"]);
        let a = init_population(&c, 2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = init_population(&c, 2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let empty = GpConfig {
            function_set: vec![],
            ..c
        };
        assert_eq!(
            init_population(&empty, 2, &mut ChaCha8Rng::seed_from_u64(9)),
            Err(GpError::EmptyFunctionSet)
        );
    }

    #[test]
    fn tournament_rules() {
        let pop = vec![ind(Expr::var(0), 3.0), ind(Expr::var(1), 1.0), ind(Expr::var(0), 2.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            counts[tournament_select(&pop, 1, &mut rng).unwrap()] += 1;
        }
        assert!(counts.iter().all(|&c| c > 900 && c < 1100), "{counts:?}");
        // Whenever the draws cover the argmin it wins; with many draws they always do.
        for _ in 0..100 {
            assert_eq!(tournament_select(&pop, 50, &mut rng).unwrap(), 1);
        }
        let tie = vec![
            ind(Expr::add(Expr::var(0), Expr::constant(0.0)), 1.0),
            ind(Expr::var(0), 1.0),
        ];
        for _ in 0..100 {
            assert_eq!(tournament_select(&tie, 20, &mut rng).unwrap(), 1);
        }
        assert_eq!(tournament_select(&[], 3, &mut rng), Err(GpError::EmptyPopulation));
    }

    #[test]
    fn hoist_never_grows() {
        let c = cfg(&["add", "mul", "sin"]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let t = random_tree(&c, 2, 4, InitMethod::Grow, &mut rng);
            assert!(hoist_mutation(&t, &mut rng).complexity() <= t.complexity());
        }
    }

    #[test]
    fn point_mutation_at_root_keeps_arity() {
        let c = cfg(&["add", "sub", "mul"]);
        let names = ["x", "y"];
        let e = parse("x + y", &names).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let m = point_mutation(&e, &c, 2, &mut rng);
            if let Expr::Binary(op, l, r) = &m {
                if **l == Expr::var(0) && **r == Expr::var(1) {
                    assert!(matches!(op, BinaryOp::Sub | BinaryOp::Mul), "{}", m.to_text(&names));
                    continue;
                }
                // Otherwise a leaf changed and the root is untouched.
                assert_eq!(*op, BinaryOp::Add);
            } else {
                panic!("root arity changed: {}", m.to_text(&names));
            }
        }
    }

    #[test]
    fn crossover_is_seed_deterministic() {
        let names = ["x", "y"];
        let a = parse("sin(x)", &names).unwrap();
        let b = parse("2*y", &names).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..8)
                .map(|_| crossover(&a, &b, &mut rng).to_text(&names))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(7), run(7));
        assert_eq!(run(7), ["2.0*y", "2.0*y", "y", "y", "2.0", "sin(2.0)", "2.0*y", "y"]);
        // Every offspring is a subtree of b grafted into a.
        let allowed = ["2.0*y", "2.0", "y", "sin(2.0*y)", "sin(2.0)", "sin(y)"];
        assert!(run(7).iter().all(|t| allowed.contains(&t.as_str())), "{:?}", run(7));
    }
}
