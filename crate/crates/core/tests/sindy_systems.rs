use eqdisc::dynsys::{builtin_spec, SystemId};
use eqdisc::exec::Exec;
use eqdisc::expr::{canonicalize, parse, structural_match, MatchVerdict, Term};
use eqdisc::odeint::{finite_difference, integrate, Trajectory, DEFAULT_ATOL, DEFAULT_RTOL};
use eqdisc::sindy::*;
use nalgebra::{DMatrix, DVector};

fn data(id: SystemId) -> Trajectory {
    finite_difference(&integrate(&builtin_spec(id), DEFAULT_RTOL, DEFAULT_ATOL).unwrap()).unwrap()
}

/// Same states with derivatives taken from the true right-hand side.
fn exact_derivatives(id: SystemId) -> Trajectory {
    let spec = builtin_spec(id);
    let mut t = integrate(&spec, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
    t.derivatives = Some(t.states.iter().map(|s| spec.rhs(s, 0.0).unwrap()).collect());
    t
}

fn stlsq_cfg(library: LibrarySpec, threshold: f64, alpha: f64, normalize: bool) -> SindyConfig {
    SindyConfig {
        library,
        optimizer: Optimizer::Stlsq(StlsqParams {
            threshold,
            alpha,
            max_iter: 20,
        }),
        normalize_columns: normalize,
    }
}

fn coefficient(model: &SparseModel, term: &str, var: usize) -> f64 {
    let i = model.term_names().iter().position(|t| t == term).unwrap();
    model.coefficients[(i, var)]
}

fn assert_model(model: &SparseModel, expected: &[&[(&str, f64)]], rtol: f64) {
    let names = model.term_names();
    for (j, eq) in expected.iter().enumerate() {
        let mut support: Vec<&str> = model.support(j).iter().map(|&i| names[i].as_str()).collect();
        let mut want: Vec<&str> = eq.iter().map(|(t, _)| *t).collect();
        support.sort();
        want.sort();
        assert_eq!(support, want, "variable {j}");
        for (t, c) in eq.iter() {
            let got = coefficient(model, t, j);
            assert!((got - c).abs() <= rtol * c.abs(), "{t} in eq {j}: {got} vs {c}");
        }
    }
}

#[test]
fn lorenz_matches_ridge_on_true_support() {
    let t = data(SystemId::Lorenz);
    let model = fit(
        &t,
        &stlsq_cfg(LibrarySpec::polynomial(2), 0.2, 1e-4, false),
        Exec::Sequential,
    )
    .unwrap();
    assert_model(
        &model,
        &[
            &[("x", -2.0), ("y", 2.0)],
            &[("x", 1.0), ("y", -1.0), ("x*z", -1.0)],
            &[("z", -2.6), ("x*y", 1.0)],
        ],
        0.02,
    );
    // Oracle: one ridge solve restricted to the true support.
    let terms = LibrarySpec::polynomial(2).terms(&t.variables).unwrap();
    let theta = library_matrix(&terms, &t.state_columns());
    let names = model.term_names();
    let derivs = t.derivative_columns().unwrap();
    for (j, support) in [vec!["x", "y"], vec!["x", "y", "x*z"], vec!["z", "x*y"]]
        .iter()
        .enumerate()
    {
        let idx: Vec<usize> = support
            .iter()
            .map(|s| names.iter().position(|n| n == s).unwrap())
            .collect();
        let sub = theta.select_columns(&idx);
        let y = DVector::from_vec(derivs[j].clone());
        let oracle = (sub.transpose() * &sub + DMatrix::identity(idx.len(), idx.len()) * 1e-4)
            .lu()
            .solve(&(sub.transpose() * y))
            .unwrap();
        for (k, &i) in idx.iter().enumerate() {
            assert!((model.coefficients[(i, j)] - oracle[k]).abs() < 1e-8);
        }
    }
    let truth = builtin_spec(SystemId::Lorenz).equations;
    for (e, t) in model.expressions(0.0).iter().zip(&truth) {
        assert_eq!(structural_match(e, t, 0.05), MatchVerdict::ExactForm);
    }
}

#[test]
fn sir_and_sis_within_two_percent() {
    let lib = || LibrarySpec::custom(&["x", "x*y"]);
    let sir = fit(&data(SystemId::Sir), &stlsq_cfg(lib(), 0.6, 1e-4, true), Exec::Parallel).unwrap();
    assert_model(
        &sir,
        &[&[("S*I", -0.301)], &[("S*I", 0.301), ("I", -0.1)], &[("I", 0.1)]],
        0.02,
    );
    let sis = fit(&data(SystemId::Sis), &stlsq_cfg(lib(), 0.6, 1e-4, true), Exec::Parallel).unwrap();
    assert_model(
        &sis,
        &[&[("S*I", -0.301), ("I", 0.1)], &[("S*I", 0.301), ("I", -0.1)]],
        0.02,
    );
    let text: Vec<String> = sir
        .expressions(0.0)
        .iter()
        .map(|e| e.round_constants(3).to_text(&sir.variables))
        .collect();
    assert_eq!(text[0], "-0.3*S*I");
}

#[test]
fn pendulum_sr3_within_one_percent() {
    let cfg = SindyConfig {
        library: LibrarySpec::polynomial(1).union(LibrarySpec::fourier(1)),
        optimizer: Optimizer::Sr3(Sr3Params {
            threshold: 0.4,
            nu: 1.0,
            tol: 1e-5,
            thresholder: Thresholder::L1,
            max_iter: 30,
            unbias: true,
        }),
        normalize_columns: false,
    };
    let model = fit(&data(SystemId::Pendulum), &cfg, Exec::Parallel).unwrap();
    assert_model(&model, &[&[("omega", 1.0)], &[("sin(theta)", -9.8)]], 0.01);
}

#[test]
fn lotka_volterra_sr3() {
    let cfg = SindyConfig {
        library: LibrarySpec::polynomial(3),
        optimizer: Optimizer::Sr3(Sr3Params {
            threshold: 0.02,
            nu: 1.0,
            tol: 1e-6,
            thresholder: Thresholder::L0,
            max_iter: 30,
            unbias: true,
        }),
        normalize_columns: false,
    };
    let model = fit(&data(SystemId::LotkaVolterra), &cfg, Exec::Parallel).unwrap();
    assert_model(
        &model,
        &[&[("u", 1.94), ("u*v", -0.49)], &[("v", -0.95), ("u*v", 0.37)]],
        0.05,
    );
}

#[test]
fn stlsq_exact_support_on_every_system() {
    for id in SystemId::ALL {
        let spec = builtin_spec(id);
        let library = match id {
            SystemId::Lorenz => LibrarySpec::polynomial(2),
            SystemId::Pendulum => LibrarySpec::polynomial(1).union(LibrarySpec::fourier(1)),
            SystemId::LotkaVolterra => LibrarySpec::polynomial(2),
            // R and D both integrate a multiple of I from zero, so every
            // column carrying D is an exact copy of one carrying R.
            SystemId::Seird => LibrarySpec::custom(&["x", "x*y"]).excluding(&["D", "S*D", "E*D", "I*D", "R*D"]),
            _ => LibrarySpec::custom(&["x", "x*y"]),
        };
        let t = exact_derivatives(id);
        // Thresholds act on unit-norm columns, so the smallest true
        // coefficient is measured as |c| * |column|.
        let smallest = spec
            .equations
            .iter()
            .flat_map(|e| canonicalize(e, 1e-12).unwrap().terms().to_vec())
            .map(|term| {
                let single = Term {
                    coeff: 1.0,
                    ..term.clone()
                }
                .to_expr();
                let norm = t
                    .states
                    .iter()
                    .map(|s| single.eval_unchecked(s).powi(2))
                    .sum::<f64>()
                    .sqrt();
                term.coeff.abs() * norm
            })
            .fold(f64::INFINITY, f64::min);
        let model = fit(&t, &stlsq_cfg(library, smallest / 2.0, 0.0, true), Exec::Parallel).unwrap();
        for (j, (e, truth)) in model.expressions(0.0).iter().zip(&spec.equations).enumerate() {
            assert_eq!(
                structural_match(e, truth, 1e-6),
                MatchVerdict::ExactForm,
                "{id} eq {j}: {}",
                e.to_text(&spec.variables)
            );
        }
    }
}

fn best_subset(theta: &DMatrix<f64>, y: &DVector<f64>) -> Vec<usize> {
    let mut best = (vec![], f64::INFINITY);
    for i in 0..theta.ncols() {
        for j in i + 1..theta.ncols() {
            let x = lstsq(&theta.select_columns(&[i, j]), y, 0.0).x;
            let r = (y - theta.select_columns(&[i, j]) * x).norm();
            if r < best.1 {
                best = (vec![i, j], r);
            }
        }
    }
    best.0
}

#[test]
fn seird_recovered_compartment_by_omp() {
    let t = data(SystemId::Seird);
    let cfg = SindyConfig {
        library: LibrarySpec::custom(&["x", "x*y"]),
        optimizer: Optimizer::Omp(OmpParams { n_nonzero: 2 }),
        normalize_columns: false,
    };
    let model = fit(&t, &cfg, Exec::Sequential).unwrap();
    let theta = library_matrix(&model.terms, &t.state_columns());
    let y = DVector::from_vec(t.derivative_columns().unwrap()[3].clone());
    let residual = |pair: &[usize]| {
        let sub = theta.select_columns(pair);
        (&y - &sub * lstsq(&sub, &y, 0.0).x).norm()
    };
    // S stays near 0.999, so I and S*I are nearly collinear and the best pair
    // may pick either; greedy selection must be within 2% of the optimum.
    let support = model.support(3);
    assert_eq!(model.term_names()[support[0]], "I");
    assert!(residual(&support) <= 1.02 * residual(&best_subset(&theta, &y)));
    assert!((coefficient(&model, "I", 3) - 1.0).abs() < 1e-3);
    // The companion term explains a negligible share of the signal.
    let other = model
        .support(3)
        .into_iter()
        .find(|&i| model.term_names()[i] != "I")
        .unwrap();
    let share = (theta.column(other) * model.coefficients[(other, 3)]).amax() / y.amax();
    assert!(share < 0.05, "{share}");
}

#[test]
fn model_table_lists_terms() {
    let model = fit(
        &data(SystemId::Sir),
        &stlsq_cfg(LibrarySpec::custom(&["x", "x*y"]), 0.6, 1e-4, true),
        Exec::Sequential,
    )
    .unwrap();
    let table = model.table();
    assert_eq!(table.variables, vec!["S", "I", "R"]);
    let terms: Vec<&str> = table.rows.iter().map(|r| r.term.as_str()).collect();
    assert_eq!(terms, vec!["S", "I", "R", "S*I", "S*R", "I*R"]);
    assert_eq!(table.rows[2].coefficients, vec![0.0, 0.0, 0.0]);
}

#[test]
fn parallel_and_sequential_fits_agree() {
    let t = data(SystemId::Lorenz);
    let cfg = stlsq_cfg(LibrarySpec::polynomial(2), 0.2, 1e-4, false);
    let a = fit(&t, &cfg, Exec::Sequential).unwrap();
    let b = fit(&t, &cfg, Exec::Parallel).unwrap();
    assert_eq!(a, b);
    let _ = parse("x", &["x"]).unwrap();
}
