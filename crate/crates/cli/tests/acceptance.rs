//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line per criterion and exits nonzero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use plevy::control::{
    cost_j, saa_minimize, BasisPreset, ControlBasis, CostSpec, SaaOptions, TerminalPayoff,
};
use plevy::estimates::{
    aldous_scaling, apriori_check, coupled_ensembles, interp_gap_scaling, isometry_check,
    self_convergence, simulate_ensemble, uniqueness_check, AldousOptions, Probe, FITTED_C,
};
use plevy::grid::{self, Field, Grid, Space};
use plevy::levy::{LevyMeasure, LevyModel, NoiseCoefficient};
use plevy::rng::path_seeds;
use plevy::scheme::{prepare_initial, step_solve, FluxModel, SchemeConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "../../core/tests/support/mod.rs"]
mod support;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sine(grid: Grid, amplitude: f64) -> Field {
    Field::from_fn(grid, Space::ZeroBoundary, |x| {
        amplitude
            * (0..grid.dim())
                .map(|i| (std::f64::consts::PI * x[i]).sin())
                .product::<f64>()
    })
}

fn zero(grid: Grid) -> Field {
    Field::zeros(grid, Space::ZeroBoundary)
}

/// `m = δ_1`, `η(u; z) = ½ u (1 ∧ |z|)`, `λ* = ½`.
fn reference_model() -> LevyModel {
    LevyModel::new(
        LevyMeasure::point(1.0, 1.0),
        NoiseCoefficient::Linear { coef: 0.5 },
        0.5,
    )
    .unwrap()
}

fn quiet_model() -> LevyModel {
    LevyModel::new(LevyMeasure::point(1.0, 1.0), NoiseCoefficient::Zero, 0.5).unwrap()
}

fn reference_grid() -> Grid {
    Grid::new(1, 32).unwrap()
}

/// Smooth datum of the reference configuration.
fn reference_u0() -> Field {
    sine(reference_grid(), 0.02)
}

fn cfg(p: f64, dt: f64, t_final: f64) -> SchemeConfig {
    SchemeConfig::new(p, dt, (t_final / dt).round() as usize).unwrap()
}

fn random_interior(grid: Grid, amp: f64, rng: &mut ChaCha8Rng) -> Field {
    Field::from_fn(grid, Space::ZeroBoundary, |_| rng.random_range(-amp..amp))
}

fn zero_fixed_point() -> Outcome {
    let power_law = LevyMeasure::PowerLaw {
        scale: 0.5,
        alpha: 1.5,
        eps: 1e-3,
        z_max: 3.0,
    };
    let models = [
        reference_model(),
        LevyModel::new(
            LevyMeasure::point(0.5, 20.0),
            NoiseCoefficient::Sine { coef: 0.9 },
            0.95,
        )
        .unwrap(),
        LevyModel::new(power_law, NoiseCoefficient::Linear { coef: 0.3 }, 0.3).unwrap(),
    ];
    let grids = [Grid::new(1, 32).unwrap(), Grid::new(2, 8).unwrap()];
    let fluxes = [FluxModel::Zero, FluxModel::Sine { coef: [0.7, -0.4] }];
    let mut runs = 0;
    let mut nonzero = 0;
    for model in &models {
        for &g in &grids {
            for flux in fluxes {
                let c = SchemeConfig::new(3.0, 0.05, 20).unwrap().with_flux(flux);
                let trajs = simulate_ensemble(&zero(g), &zero(g), model, &c, &path_seeds(11, 4))
                    .map_err(|e| e.to_string())?;
                runs += trajs.len();
                nonzero += trajs
                    .iter()
                    .flat_map(|t| t.hats())
                    .filter(|u| u.values().iter().any(|v| *v != 0.0))
                    .count();
            }
        }
    }
    check(
        nonzero == 0,
        format!("{runs} paths, {nonzero} nonzero states"),
    )
}

fn initial_approximation() -> Outcome {
    let g = Grid::new(1, 63).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut trials = 0;
    for p in [3.0, 4.0] {
        for i in 0..100 {
            let amp = 10f64.powf(rng.random_range(-2.0..1.0));
            let u0 = random_interior(g, amp, &mut rng);
            let dt = [1e-1, 1e-2, 1e-3, 1e-4][i % 4];
            let init = prepare_initial(&u0, &zero(g), &SchemeConfig::new(p, dt, 1).unwrap())
                .map_err(|e| e.to_string())?;
            trials += 1;
            if !init.holds() {
                violations += 1;
            }
            worst = worst.max((init.lhs - init.rhs) / init.rhs);
        }
    }
    check(
        violations == 0,
        format!(
            "{trials} data on {} nodes, {violations} violations, max (lhs-rhs)/rhs = {worst:.3e}",
            g.n_nodes()
        ),
    )
}

fn step_oracle() -> Outcome {
    let g = Grid::new(1, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let p = [3.0, 4.0, 2.5][trial % 3];
        let dt = [0.1, 0.01, 0.5, 1.0][trial % 4];
        let rhs = random_interior(g, 2.0, &mut rng);
        let solved = step_solve(&rhs, &zero(g), &SchemeConfig::new(p, dt, 1).unwrap())
            .map_err(|e| e.to_string())?;
        let oracle = support::energy_minimiser_1d(rhs.values(), g.h(), dt, p);
        let diff = Field::new(
            g,
            solved
                .values()
                .iter()
                .zip(&oracle)
                .map(|(a, b)| a - b)
                .collect(),
            Space::ZeroBoundary,
        )
        .unwrap();
        worst = worst.max(grid::l2_norm(&diff));
    }
    check(
        worst <= 1e-6,
        format!(
            "50 right-hand sides on {} interior nodes, max L2 gap {worst:.2e}",
            g.n_interior()
        ),
    )
}

fn self_convergence_order() -> Outcome {
    let dts: Vec<f64> = (4..=8).map(|k| 0.5f64.powi(k)).collect();
    let mut details = Vec::new();
    let mut ok = true;
    for p in [3.0, 4.0] {
        let r = self_convergence(
            &reference_u0(),
            &zero(reference_grid()),
            &quiet_model(),
            &cfg(p, 0.1, 1.0),
            1.0,
            &dts,
            32,
            &[1],
            Some(0.8),
        )
        .map_err(|e| e.to_string())?
        .with_max_slope(1.2);
        ok &= r.passed;
        details.push(format!("p={p} slope {:.3}", r.fitted_slope));
    }
    check(
        ok,
        format!("dt 1/16..1/256: {} (target 1.0 ± 0.2)", details.join(", ")),
    )
}

/// Reference stochastic ensembles at `T = 1`, `dt = 1/16 .. 1/128`, 200
/// paths, all levels driven by the same noise realisations.
fn halving_ensembles() -> Result<Vec<Vec<plevy::Trajectory>>, String> {
    let dts: Vec<f64> = (4..=7).map(|k| 0.5f64.powi(k)).collect();
    coupled_ensembles(
        &reference_u0(),
        &zero(reference_grid()),
        &reference_model(),
        &cfg(3.0, 0.1, 1.0),
        1.0,
        &dts,
        &path_seeds(5, 200),
    )
    .map_err(|e| e.to_string())
}

fn interp_gap() -> Outcome {
    let ens = halving_ensembles()?;
    let r = interp_gap_scaling(&ens, 0.8).map_err(|e| e.to_string())?;
    let measured: Vec<String> = r.measured.iter().map(|m| format!("{m:.3e}")).collect();
    check(
        r.passed,
        format!(
            "slope {:.3} (min 0.8) over dt 1/16..1/128, gaps [{}]",
            r.fitted_slope,
            measured.join(", ")
        ),
    )
}

fn constant_stability() -> Outcome {
    let ens = halving_ensembles()?;
    let cs: Vec<f64> = ens
        .iter()
        .map(|e| apriori_check(e).map(|r| r.get(FITTED_C)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let hi = cs.iter().copied().fold(f64::MIN, f64::max);
    let lo = cs.iter().copied().fold(f64::MAX, f64::min);
    let shown: Vec<String> = cs.iter().map(|c| format!("{c:.3}")).collect();
    check(
        hi / lo < 2.0,
        format!(
            "fitted C [{}] over dt 1/16..1/128, max/min {:.3}",
            shown.join(", "),
            hi / lo
        ),
    )
}

fn isometry() -> Outcome {
    let g = Grid::new(1, 16).unwrap();
    let u = Field::from_fn(g, Space::ZeroBoundary, |x| 4.0 * x[0] * (1.0 - x[0]));
    let model = reference_model();
    let gate = isometry_check(&model, &u, 0.1, 100_000, 7).map_err(|e| e.to_string())?;
    let fine = isometry_check(&model, &u, 0.01, 100_000, 7).map_err(|e| e.to_string())?;
    let closed = 0.1 * 0.25 * grid::l2_norm(&u).powi(2);
    let ok =
        gate.relative_error <= 0.05 && gate.passed && (gate.rhs - closed).abs() <= 1e-12 * closed;
    check(
        ok,
        format!(
            "dt=0.1: relative error {:.4} (limit 0.05, {:.1} SE); dt=0.01 reported: relative error {:.4}, within 3 SE: {}",
            gate.relative_error,
            (gate.lhs - gate.rhs).abs() / gate.std_error,
            fine.relative_error,
            fine.passed
        ),
    )
}

fn aldous() -> Outcome {
    let dt = 1.0 / 64.0;
    let c = cfg(3.0, dt, 2.0);
    let trajs = simulate_ensemble(
        &reference_u0(),
        &zero(reference_grid()),
        &reference_model(),
        &c,
        &path_seeds(8, 200),
    )
    .map_err(|e| e.to_string())?;
    let thetas: Vec<f64> = [32.0, 16.0, 8.0, 4.0, 2.0].iter().map(|m| m * dt).collect();
    let opts = AldousOptions {
        taus: vec![0.0, 0.75, 1.5],
        dual_iters: 30,
    };
    let t1 = aldous_scaling(&trajs, Probe::T1, &thetas, &opts).map_err(|e| e.to_string())?;
    let t2 = aldous_scaling(&trajs, Probe::T2, &thetas, &opts).map_err(|e| e.to_string())?;
    let ok = t1.fitted_slope >= 0.5
        && (0.75..=1.5).contains(&t2.fitted_slope)
        && !t1.trivial
        && !t2.trivial;
    check(
        ok,
        format!(
            "T1 slope {:.3} (min 0.5), T2 slope {:.3} (range [0.75, 1.5]), 200 paths",
            t1.fitted_slope, t2.fitted_slope
        ),
    )
}

fn uniqueness() -> Outcome {
    let c = cfg(3.0, 0.05, 1.0);
    let seeds = path_seeds(9, 500);
    let g = reference_grid();
    let u0 = reference_u0();
    let same = uniqueness_check(&reference_model(), &c, &u0, &u0, &zero(g), &seeds)
        .map_err(|e| e.to_string())?;
    let bump = Field::from_fn(g, Space::FreeBoundary, |x| {
        0.02 * (-100.0 * (x[0] - 0.3).powi(2)).exp()
    })
    .project_zero_boundary();
    let other = u0.add(&bump).unwrap();
    let diff = uniqueness_check(&reference_model(), &c, &u0, &other, &zero(g), &seeds)
        .map_err(|e| e.to_string())?;
    let first = diff.mean_l1[0];
    let last = *diff.mean_l1.last().unwrap();
    check(
        same.passed && diff.passed,
        format!(
            "identical: max L1 {:.1e} (tolerance {:.1e}); distinct: E L1 {first:.3e} -> {last:.3e}, worst growth excess {:.2e}, 500 paths",
            same.max_pathwise_l1, same.tolerance, diff.worst_growth_excess
        ),
    )
}

fn control_sanity() -> Outcome {
    let g = Grid::new(1, 16).unwrap();
    let c = cfg(3.0, 0.05, 0.5);
    let quiet = quiet_model();
    let basis = ControlBasis::preset(g, BasisPreset::SineModes { modes: 2 }).unwrap();
    let u0 = sine(g, 0.1);
    let planted = basis.combine(&[0.3, -0.2]).unwrap();
    let target = simulate_ensemble(&u0, &planted, &quiet, &c, &[1]).map_err(|e| e.to_string())?;
    let spec = CostSpec::from_ensemble(&target, TerminalPayoff::Zero).map_err(|e| e.to_string())?;
    let j_star = cost_j(&target, &planted, &spec)
        .map_err(|e| e.to_string())?
        .total;
    let opts = SaaOptions::default();
    let found =
        saa_minimize(&quiet, &c, &u0, &spec, &basis, &[1], &opts).map_err(|e| e.to_string())?;

    let zero_spec = CostSpec::constant(zero(g), c.n_steps, TerminalPayoff::Zero).unwrap();
    let trivial = saa_minimize(&quiet, &c, &zero(g), &zero_spec, &basis, &[1], &opts)
        .map_err(|e| e.to_string())?;
    let monotone = |h: &[f64]| h.windows(2).all(|w| w[1] <= w[0]);
    let coeff_max = trivial
        .best_coeffs
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let ok = found.best_j <= j_star + 1e-6
        && trivial.best_j.abs() <= 1e-8
        && coeff_max <= 1e-8
        && monotone(&found.j_history)
        && monotone(&trivial.j_history);
    check(
        ok,
        format!(
            "inverse crime J(best) {:.4e} vs J(U*) {j_star:.4e}; zero target |J| {:.1e}, max |coeff| {coeff_max:.1e}; histories monotone",
            found.best_j,
            trivial.best_j.abs()
        ),
    )
}

const SMALL_CONFIG: &str = r#"
[grid]
dim = 1
n_cells = 16

[scheme]
p = 3.0
dt = 0.0625
n_steps = 64

[levy]
lambda_star = 0.5
measure = { kind = "point_masses", atoms = [[1.0, 1.0]] }
eta = { kind = "linear", coef = 0.5 }

[initial]
u0 = { kind = "sine", amplitude = 0.05 }
control = { basis = { kind = "sine_modes", modes = 2 } }

[cost]
target = { kind = "sine", amplitude = 0.02 }

[run]
n_paths = 12
seed = 99

[verify]
isometry_samples = 2000

[optimize]
budget = 30

[converge]
dts = [0.25, 0.125, 0.0625]
refine = 4
"#;

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("run.toml");
    std::fs::write(&config, SMALL_CONFIG).unwrap();
    let mut summary = Vec::new();
    for cmd in ["simulate", "verify", "optimize", "converge"] {
        let out = tmp.path().join(cmd);
        let run = || {
            Command::new(env!("CARGO_BIN_EXE_plevy"))
                .args([cmd, "--config"])
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .output()
                .unwrap()
        };
        let first = run();
        let a = snapshot(&out);
        let second = run();
        let b = snapshot(&out);
        if first.status.code() != second.status.code() || first.stdout != second.stdout {
            return Err(format!("{cmd}: exit status or stdout differ between runs"));
        }
        if a.len() < 2 || a != b {
            return Err(format!("{cmd}: output files differ between runs"));
        }
        summary.push(format!("{cmd} ({} files)", a.len()));
    }

    let lib_run = || {
        let g = reference_grid();
        let trajs = simulate_ensemble(
            &reference_u0(),
            &zero(g),
            &reference_model(),
            &cfg(3.0, 0.05, 1.0),
            &path_seeds(4, 50),
        )
        .unwrap();
        apriori_check(&trajs).unwrap()
    };
    check(
        lib_run() == lib_run(),
        format!(
            "bitwise identical reruns: {}, library ensemble report",
            summary.join(", ")
        ),
    )
}

fn main() {
    type Criterion = (&'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("zero fixed point", Duration::from_secs(1), zero_fixed_point),
        (
            "initial approximation inequality",
            Duration::from_secs(30),
            initial_approximation,
        ),
        (
            "per-step oracle equivalence",
            Duration::from_secs(60),
            step_oracle,
        ),
        (
            "deterministic self-convergence",
            Duration::from_secs(120),
            self_convergence_order,
        ),
        (
            "interpolant gap scaling",
            Duration::from_secs(300),
            interp_gap,
        ),
        (
            "a-priori constant stability",
            Duration::from_secs(300),
            constant_stability,
        ),
        ("Ito-Levy isometry", Duration::from_secs(60), isometry),
        ("Aldous scalings", Duration::from_secs(300), aldous),
        ("pathwise uniqueness", Duration::from_secs(300), uniqueness),
        ("control sanity", Duration::from_secs(300), control_sanity),
        ("reproducibility", Duration::from_secs(300), reproducibility),
    ];
    let mut failures = 0;
    for (i, (name, budget, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (
                false,
                format!("{d}; over the {} s budget", budget.as_secs()),
            ),
            Err(d) => (false, d),
        };
        failures += usize::from(!ok);
        println!(
            "{} [{:>2}] {name}: {detail} ({:.2} s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
