use plevy::control::*;
use plevy::estimates::simulate_ensemble;
use plevy::grid::{Field, Grid, Space};
use plevy::levy::{LevyMeasure, LevyModel, NoiseCoefficient};
use plevy::rng::path_seeds;
use plevy::scheme::{SchemeConfig, SolverOptions};

fn model(coef: f64) -> LevyModel {
    let eta = if coef == 0.0 {
        NoiseCoefficient::Zero
    } else {
        NoiseCoefficient::Linear { coef }
    };
    LevyModel::new(LevyMeasure::point(1.0, 1.0), eta, 0.5).unwrap()
}

fn setup() -> (Grid, SchemeConfig, Field, ControlBasis) {
    let grid = Grid::new(1, 16).unwrap();
    let cfg = SchemeConfig::new(3.0, 0.05, 10).unwrap();
    let u0 = Field::from_fn(grid, Space::ZeroBoundary, |x| {
        0.1 * (std::f64::consts::PI * x[0]).sin()
    });
    let basis = ControlBasis::preset(grid, BasisPreset::SineModes { modes: 2 }).unwrap();
    (grid, cfg, u0, basis)
}

#[test]
fn planted_control_is_recovered_without_noise() {
    let (_, cfg, u0, basis) = setup();
    let quiet = model(0.0);
    let seeds = [1];
    let planted = [0.3, -0.2];
    let u_star = basis.combine(&planted).unwrap();
    let target = simulate_ensemble(&u0, &u_star, &quiet, &cfg, &seeds).unwrap();
    let spec = CostSpec::from_ensemble(&target, TerminalPayoff::Zero).unwrap();
    let j_star = cost_j(&target, &u_star, &spec).unwrap().total;
    let r = saa_minimize(
        &quiet,
        &cfg,
        &u0,
        &spec,
        &basis,
        &seeds,
        &SaaOptions::default(),
    )
    .unwrap();
    assert!(
        r.best_j <= j_star + 1e-6,
        "best {} planted {}",
        r.best_j,
        j_star
    );
    assert!(r.j_history.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(r.j_history.len(), 200);
}

#[test]
fn zero_problem_keeps_zero_control() {
    let (grid, cfg, _, basis) = setup();
    let z = Field::zeros(grid, Space::ZeroBoundary);
    let spec = CostSpec::constant(z.clone(), cfg.n_steps, TerminalPayoff::Zero).unwrap();
    let r = saa_minimize(
        &model(0.0),
        &cfg,
        &z,
        &spec,
        &basis,
        &[1],
        &SaaOptions::default(),
    )
    .unwrap();
    assert!(r.best_j.abs() <= 1e-8);
    assert!(r.best_coeffs.iter().all(|c| c.abs() <= 1e-8));
}

#[test]
fn common_random_numbers_make_search_reproducible() {
    let (grid, cfg, u0, basis) = setup();
    let noisy = model(0.5);
    let target = Field::from_fn(grid, Space::ZeroBoundary, |x| 0.2 * x[0] * (1.0 - x[0]));
    let spec = CostSpec::constant(
        target,
        cfg.n_steps,
        TerminalPayoff::ClippedL2 {
            weight: 0.5,
            cap: 1.0,
        },
    )
    .unwrap();
    let seeds = path_seeds(3, 8);
    let opts = SaaOptions {
        budget: 40,
        ..Default::default()
    };
    let a = saa_minimize(&noisy, &cfg, &u0, &spec, &basis, &seeds, &opts).unwrap();
    let b = saa_minimize(&noisy, &cfg, &u0, &spec, &basis, &seeds, &opts).unwrap();
    assert_eq!(a.j_history, b.j_history);
    assert_eq!(a.best_coeffs, b.best_coeffs);
    assert_eq!(a.common_seeds, seeds);
    assert!(a.best_j <= a.j_history[0]);
}

#[test]
fn cost_is_continuous_in_the_coefficients() {
    let (grid, cfg, u0, basis) = setup();
    let noisy = model(0.5);
    let target = Field::from_fn(grid, Space::ZeroBoundary, |x| 0.1 * x[0] * (1.0 - x[0]));
    let spec = CostSpec::constant(
        target,
        cfg.n_steps,
        TerminalPayoff::ClippedL2 {
            weight: 1.0,
            cap: 0.5,
        },
    )
    .unwrap();
    let seeds = path_seeds(4, 6);
    let j = |c: &[f64]| {
        let u = basis.combine(c).unwrap();
        let trajs = simulate_ensemble(&u0, &u, &noisy, &cfg, &seeds).unwrap();
        cost_j(&trajs, &u, &spec).unwrap().total
    };
    let limit = [0.2, 0.1];
    let j_lim = j(&limit);
    let gaps: Vec<f64> = (1..6)
        .map(|n| {
            let d = 0.5f64.powi(2 * n);
            (j(&[limit[0] + d, limit[1] - d]) - j_lim).abs()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[4] < gaps[0] / 50.0, "{gaps:?}");
}

#[test]
fn failed_solves_score_infinity_and_search_continues() {
    let (grid, mut cfg, _, basis) = setup();
    cfg.solver = SolverOptions {
        tol: 1e-14,
        max_iters: 1,
    };
    let z = Field::zeros(grid, Space::ZeroBoundary);
    let spec = CostSpec::constant(z.clone(), cfg.n_steps, TerminalPayoff::Zero).unwrap();
    let opts = SaaOptions {
        budget: 12,
        ..Default::default()
    };
    let r = saa_minimize(&model(0.0), &cfg, &z, &spec, &basis, &[1], &opts).unwrap();
    assert!(r.failed_evaluations > 0);
    assert_eq!(r.best_j, 0.0);
    assert_eq!(r.j_history.len(), 12);
}
