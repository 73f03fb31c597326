//! The four subcommands. Each one validates the whole configuration before
//! writing anything, then writes its results into `run.out_dir`.

use plevy::control::{saa_minimize, BasisPreset, SaaOptions, SaaResult};
use plevy::estimates::{
    aldous_scaling, apriori_check, apriori_check_against, coupled_ensembles, interp_gap_scaling,
    isometry_check, self_convergence, simulate_ensemble, truncation_sweep, uniqueness_check,
    EnsembleReport, Probe, ScalingReport,
};
use plevy::grid;
use plevy::levy::{step_count, LevyMeasure, NoiseCoefficient};
use plevy::rng::path_seeds;
use plevy::scheme::Trajectory;
use serde::Serialize;

use crate::config::Resolved;
use crate::output::{prepare, write_csv, write_json, write_jsonl};
use crate::{CliError, Outcome, RunConfig, SCHEMA_VERSION};

/// Parameter swept by `converge`.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    Dt(Vec<f64>),
    Eps(Vec<f64>),
}

#[derive(Serialize)]
struct PathRow {
    path: usize,
    seed: u64,
    step: usize,
    t: f64,
    l2_norm: f64,
    grad_lp_pow: f64,
    /// Jumps of the noise path up to and including `t`.
    jump_count: usize,
}

#[derive(Serialize)]
struct SimulateSummary {
    schema_version: u32,
    command: &'static str,
    seed: u64,
    n_paths: usize,
    n_steps: usize,
    dt: f64,
    t_final: f64,
    total_jumps: usize,
    /// Absent for a single path, since ensemble statistics need two.
    report: Option<EnsembleReport>,
}

fn path_rows(trajs: &[Trajectory], p: f64) -> Result<Vec<PathRow>, CliError> {
    let mut rows = Vec::new();
    for (i, traj) in trajs.iter().enumerate() {
        let mut jumps = 0;
        for (k, u) in traj.hats().iter().enumerate() {
            if k > 0 {
                jumps += traj.prm().jumps(k - 1).len();
            }
            rows.push(PathRow {
                path: i,
                seed: traj.prm().seed(),
                step: k,
                t: k as f64 * traj.dt(),
                l2_norm: grid::l2_norm(u),
                grad_lp_pow: grid::grad_lp_pow(u, p)?,
                jump_count: jumps,
            });
        }
    }
    Ok(rows)
}

fn energy_report(cfg: &RunConfig, trajs: &[Trajectory]) -> Result<EnsembleReport, CliError> {
    Ok(match cfg.verify.reference_c {
        Some(c) => apriori_check_against(trajs, c)?,
        None => apriori_check(trajs)?,
    })
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let r = cfg.resolve()?;
    let dir = prepare(cfg)?;
    let trajs = simulate_ensemble(&r.u0, &r.control, &r.model, &r.scheme, &r.seeds)?;
    write_csv(&dir.join("paths.csv"), &path_rows(&trajs, r.scheme.p)?)?;
    let report = if trajs.len() >= 2 {
        Some(energy_report(cfg, &trajs)?)
    } else {
        None
    };
    let summary = SimulateSummary {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        seed: cfg.run.seed,
        n_paths: trajs.len(),
        n_steps: r.scheme.n_steps,
        dt: r.scheme.dt,
        t_final: r.scheme.t_final(),
        total_jumps: trajs.iter().map(|t| t.prm().jump_count()).sum(),
        report,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "simulate: {} paths written to {}",
        trajs.len(),
        dir.display()
    );
    Ok(Outcome::Passed)
}

#[derive(Serialize)]
struct CheckRecord<T: Serialize> {
    schema_version: u32,
    check: &'static str,
    passed: bool,
    report: T,
}

fn record<T: Serialize>(
    check: &'static str,
    passed: bool,
    report: T,
) -> Result<serde_json::Value, CliError> {
    println!("{check}: {}", if passed { "PASS" } else { "FAIL" });
    serde_json::to_value(CheckRecord {
        schema_version: SCHEMA_VERSION,
        check,
        passed,
        report,
    })
    .map_err(|e| CliError::Io(e.to_string()))
}

pub fn verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let r = cfg.resolve()?;
    let thetas = cfg.theta_grid()?;
    let aldous = cfg.aldous_options();
    if r.seeds.len() < 2 {
        return Err(CliError::Config("verify needs run.n_paths >= 2".into()));
    }
    if cfg.verify.isometry_samples < 1000 {
        return Err(CliError::Config(
            "verify.isometry_samples must be at least 1000".into(),
        ));
    }
    let iso_dt = cfg.verify.isometry_dt.unwrap_or(r.scheme.dt);
    if !(iso_dt > 0.0) {
        return Err(CliError::Config(
            "verify.isometry_dt must be positive".into(),
        ));
    }
    let uniq_paths = cfg.verify.uniqueness_paths.unwrap_or(cfg.run.n_paths);
    if uniq_paths == 0 {
        return Err(CliError::Config(
            "verify.uniqueness_paths must be positive".into(),
        ));
    }
    let dir = prepare(cfg)?;

    let trajs = simulate_ensemble(&r.u0, &r.control, &r.model, &r.scheme, &r.seeds)?;
    let mut records = Vec::new();
    let energy = energy_report(cfg, &trajs)?;
    records.push(record("apriori", energy.violations.is_empty(), &energy)?);

    let t1 = aldous_scaling(&trajs, Probe::T1, &thetas, &aldous)?;
    records.push(record("aldous_t1", t1.passed, &t1)?);
    let t2 = aldous_scaling(&trajs, Probe::T2, &thetas, &aldous)?.with_max_slope(1.5);
    records.push(record("aldous_t2", t2.passed, &t2)?);

    let iso = isometry_check(
        &r.model,
        &r.u0,
        iso_dt,
        cfg.verify.isometry_samples,
        cfg.run.seed,
    )?;
    records.push(record("isometry", iso.passed, &iso)?);

    let u0_b = r.u0.scaled(cfg.verify.uniqueness_scale);
    let seeds = path_seeds(cfg.run.seed, uniq_paths);
    let uniq = uniqueness_check(&r.model, &r.scheme, &r.u0, &u0_b, &r.control, &seeds)?;
    records.push(record("uniqueness", uniq.passed, &uniq)?);

    write_jsonl(&dir.join("verify.jsonl"), &records)?;
    let passed = records
        .iter()
        .all(|v| v["passed"] == serde_json::Value::Bool(true));
    Ok(Outcome::from_passed(passed))
}

#[derive(Serialize)]
struct OptimizeOutput {
    schema_version: u32,
    command: &'static str,
    basis: BasisPreset,
    result: SaaResult,
}

pub fn optimize(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let r = cfg.resolve()?;
    let preset = cfg
        .initial
        .control
        .basis
        .ok_or_else(|| CliError::Config("optimize needs initial.control.basis".into()))?;
    let basis = r.basis.clone().expect("resolved with the preset");
    if cfg.optimize.budget < basis.len() + 1 {
        return Err(CliError::Config(format!(
            "optimize.budget = {} is below basis size + 1 = {}",
            cfg.optimize.budget,
            basis.len() + 1
        )));
    }
    cfg.cost
        .psi
        .check_lipschitz(r.grid, 200, cfg.run.seed)
        .map_err(CliError::invalid)?;
    let dir = prepare(cfg)?;
    let spec = cfg.cost_spec(&r)?;
    let opts = SaaOptions {
        budget: cfg.optimize.budget,
        restarts: cfg.optimize.restarts,
        initial_step: cfg.optimize.initial_step,
        ..Default::default()
    };
    let result = saa_minimize(&r.model, &r.scheme, &r.u0, &spec, &basis, &r.seeds, &opts)?;
    println!(
        "optimize: best J = {:e} after {} evaluations",
        result.best_j, result.evaluations
    );
    write_json(
        &dir.join("optimize.json"),
        &OptimizeOutput {
            schema_version: SCHEMA_VERSION,
            command: "optimize",
            basis: preset,
            result,
        },
    )?;
    Ok(Outcome::Passed)
}

#[derive(Serialize)]
struct ConvergeOutput {
    schema_version: u32,
    command: &'static str,
    sweep: &'static str,
    t_final: f64,
    n_paths: usize,
    passed: bool,
    reports: Vec<ScalingReport>,
}

#[derive(Serialize)]
struct ConvergeRow {
    probe: Probe,
    grid_value: f64,
    measured: f64,
    std_error: f64,
}

/// Sorts largest first and requires two distinct positive values.
fn sweep_values(name: &str, values: &[f64]) -> Result<Vec<f64>, CliError> {
    if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(CliError::Config(format!(
            "{name} sweep values must be positive"
        )));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v.dedup();
    if v.len() < 2 {
        return Err(CliError::Config(format!(
            "{name} sweep needs at least two distinct values"
        )));
    }
    Ok(v)
}

fn is_deterministic(r: &Resolved) -> bool {
    r.model.noise() == NoiseCoefficient::Zero || r.model.total_mass() == 0.0
}

pub fn converge(cfg: &RunConfig, sweep: Sweep) -> Result<Outcome, CliError> {
    let r = cfg.resolve()?;
    let t_final = r.scheme.t_final();
    let (sweep, dir, reports) = match sweep {
        Sweep::Dt(values) => {
            let dts = sweep_values("dt", &values)?;
            if cfg.converge.refine < 2 {
                return Err(CliError::Config(
                    "converge.refine must be at least 2".into(),
                ));
            }
            let fine = dts[dts.len() - 1];
            for &dt in &dts {
                step_count(t_final, dt).map_err(CliError::invalid)?;
                let m = (dt / fine).round();
                if (m * fine - dt).abs() > 1e-9 * dt {
                    return Err(CliError::Config(format!(
                        "sweep step {dt} is not a multiple of {fine}"
                    )));
                }
            }
            let dir = prepare(cfg)?;
            let ensembles = coupled_ensembles(
                &r.u0, &r.control, &r.model, &r.scheme, t_final, &dts, &r.seeds,
            )?;
            let gap = interp_gap_scaling(&ensembles, cfg.converge.gap_min_slope)?;
            let deterministic = is_deterministic(&r);
            let min = deterministic.then_some(0.8);
            let mut conv = self_convergence(
                &r.u0,
                &r.control,
                &r.model,
                &r.scheme,
                t_final,
                &dts,
                cfg.converge.refine,
                &r.seeds,
                min,
            )?;
            if deterministic {
                conv = conv.with_max_slope(1.2);
            }
            ("dt", dir, vec![gap, conv])
        }
        Sweep::Eps(values) => {
            if !matches!(r.model.measure(), LevyMeasure::PowerLaw { .. }) {
                return Err(CliError::Config(
                    "an eps sweep needs a power_law measure".into(),
                ));
            }
            let eps = sweep_values("eps", &values)?;
            let dir = prepare(cfg)?;
            let report = truncation_sweep(&r.u0, &r.control, &r.model, &r.scheme, &eps, &r.seeds)?;
            ("eps", dir, vec![report])
        }
    };
    let passed = reports.iter().all(|rep| rep.passed);
    let rows: Vec<ConvergeRow> = reports
        .iter()
        .flat_map(|rep| {
            rep.grid
                .iter()
                .zip(&rep.measured)
                .zip(&rep.standard_errors)
                .map(|((&g, &m), &se)| ConvergeRow {
                    probe: rep.probe,
                    grid_value: g,
                    measured: m,
                    std_error: se,
                })
        })
        .collect();
    write_csv(&dir.join("converge.csv"), &rows)?;
    for rep in &reports {
        println!(
            "{:?}: slope {:.3} {}",
            rep.probe,
            rep.fitted_slope,
            if rep.passed { "PASS" } else { "FAIL" }
        );
    }
    write_json(
        &dir.join("converge.json"),
        &ConvergeOutput {
            schema_version: SCHEMA_VERSION,
            command: "converge",
            sweep,
            t_final,
            n_paths: r.seeds.len(),
            passed,
            reports,
        },
    )?;
    Ok(Outcome::from_passed(passed))
}
