//! Monte Carlo checks of the scheme's quantitative structure: energy bounds,
//! interpolant gaps, increment scalings in the dual norm, the isometry of
//! compensated integrals, and pathwise L¹ stability.
//!
//! All reductions run in path-index order, so reports are reproducible for a
//! fixed seed set regardless of thread scheduling.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, dual_norm_estimate, Field};
use crate::levy::{compensated_increment, sample_prm, LevyModel, PrmPath};
use crate::rng::mix64;
use crate::scheme::{simulate_path, simulate_with_path, SchemeConfig, Trajectory};
use crate::stats::{fit_loglog, mean_se, Estimate};

pub const SUP_E_L2: &str = "sup_E_l2";
pub const E_SUP_L2: &str = "E_sup_l2";
pub const E_GRAD_LP_TIME_INTEGRAL: &str = "E_grad_lp_time_integral";
pub const E_INTERP_GAP_SQ: &str = "E_interp_gap_sq";
pub const FITTED_C: &str = "fitted_C";
pub const E_INCREMENT_SQ_SUM: &str = "E_increment_sq_sum";
pub const BOUND_LHS: &str = "bound_lhs";
pub const DATA_NORM: &str = "data_norm";

/// Runs one trajectory per seed, in parallel; output order follows `seeds`.
pub fn simulate_ensemble(
    u0: &Field,
    control: &Field,
    model: &LevyModel,
    cfg: &SchemeConfig,
    seeds: &[u64],
) -> Result<Vec<Trajectory>> {
    seeds
        .par_iter()
        .map(|&s| simulate_path(u0, control, model, cfg, s))
        .collect()
}

/// Like [`simulate_ensemble`] on pre-sampled noise paths.
pub fn simulate_ensemble_on(
    u0: &Field,
    control: &Field,
    model: &LevyModel,
    cfg: &SchemeConfig,
    paths: Vec<PrmPath>,
) -> Result<Vec<Trajectory>> {
    paths
        .into_par_iter()
        .map(|prm| simulate_with_path(u0, control, model, cfg, prm))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub n_paths: usize,
    pub dt: f64,
    pub statistics: BTreeMap<String, f64>,
    pub standard_errors: BTreeMap<String, f64>,
    /// Statistics exceeding the reference bound by more than three standard errors.
    pub violations: Vec<String>,
}

impl EnsembleReport {
    pub fn get(&self, name: &str) -> f64 {
        self.statistics[name]
    }

    pub fn fitted_c(&self) -> f64 {
        self.statistics[FITTED_C]
    }
}

fn check_shared_config(trajs: &[Trajectory]) -> Result<()> {
    let first = trajs.first().ok_or(Error::EmptyEnsemble)?;
    if trajs.iter().any(|t| t.config() != first.config()) {
        return Err(Error::Inconsistent(
            "trajectories use different scheme configurations".into(),
        ));
    }
    Ok(())
}

/// Monte Carlo estimates of the energy-bound quantities and the fitted
/// constant `C` in `LHS ≤ C (‖u0‖² + E‖U‖_{W^{1,p}}^p)`.
pub fn apriori_check(trajs: &[Trajectory]) -> Result<EnsembleReport> {
    apriori_report(trajs, None)
}

/// [`apriori_check`], flagging statistics above `reference_c` times the data norm.
pub fn apriori_check_against(trajs: &[Trajectory], reference_c: f64) -> Result<EnsembleReport> {
    apriori_report(trajs, Some(reference_c))
}

fn apriori_report(trajs: &[Trajectory], reference_c: Option<f64>) -> Result<EnsembleReport> {
    check_shared_config(trajs)?;
    if trajs.len() < 2 {
        return Err(Error::param(
            "n_paths",
            "ensemble statistics need at least two paths",
        ));
    }
    let cfg = *trajs[0].config();
    let n = cfg.n_steps;
    let p = cfg.p;

    struct PathStats {
        l2sq: Vec<f64>,
        grad_integral: f64,
        gap: f64,
        inc_sum: f64,
        data: f64,
    }
    let per_path: Vec<PathStats> = trajs
        .par_iter()
        .map(|t| -> Result<PathStats> {
            let l2sq: Vec<f64> = t.hats().iter().map(|u| grid::l2_norm(u).powi(2)).collect();
            let grad_integral = t.hats()[1..]
                .iter()
                .map(|u| grid::grad_lp_pow(u, p))
                .sum::<Result<f64>>()?
                * cfg.dt;
            let data = grid::l2_norm(t.u0()).powi(2) + grid::w1p_norm_pow(t.control(), p)?;
            Ok(PathStats {
                l2sq,
                grad_integral,
                gap: t.interp_gap_sq(),
                inc_sum: t.increment_sq_sum(),
                data,
            })
        })
        .collect::<Result<_>>()?;

    let column = |f: &dyn Fn(&PathStats) -> f64| -> Estimate {
        let xs: Vec<f64> = per_path.iter().map(f).collect();
        mean_se(&xs)
    };
    let by_time: Vec<Estimate> = (0..=n).map(|k| column(&|s| s.l2sq[k])).collect();
    let first = if n == 0 { 0 } else { 1 };
    let sup_e = by_time[first..]
        .iter()
        .copied()
        .fold(Estimate::ZERO, |a, b| if b.mean > a.mean { b } else { a });
    let sup_e_all =
        by_time
            .iter()
            .copied()
            .fold(Estimate::ZERO, |a, b| if b.mean > a.mean { b } else { a });
    let e_sup = column(&|s| s.l2sq[first..].iter().copied().fold(0.0, f64::max));
    let grad = column(&|s| s.grad_integral);
    let gap = column(&|s| s.gap);
    let inc = column(&|s| s.inc_sum);
    let data = column(&|s| s.data).mean;

    let lhs = sup_e_all.mean + inc.mean + grad.mean;
    let lhs_se =
        (sup_e_all.std_error.powi(2) + inc.std_error.powi(2) + grad.std_error.powi(2)).sqrt();
    let (c, c_se) = if data > 0.0 {
        (lhs / data, lhs_se / data)
    } else {
        (0.0, 0.0)
    };

    let mut statistics = BTreeMap::new();
    let mut standard_errors = BTreeMap::new();
    for (name, est) in [
        (SUP_E_L2, sup_e),
        (E_SUP_L2, e_sup),
        (E_GRAD_LP_TIME_INTEGRAL, grad),
        (E_INTERP_GAP_SQ, gap),
        (E_INCREMENT_SQ_SUM, inc),
        (
            BOUND_LHS,
            Estimate {
                mean: lhs,
                std_error: lhs_se,
            },
        ),
        (
            FITTED_C,
            Estimate {
                mean: c,
                std_error: c_se,
            },
        ),
        (
            DATA_NORM,
            Estimate {
                mean: data,
                std_error: 0.0,
            },
        ),
    ] {
        statistics.insert(name.to_string(), est.mean);
        standard_errors.insert(name.to_string(), est.std_error);
    }

    let bound = reference_c.unwrap_or(c) * data;
    let violations = [SUP_E_L2, E_SUP_L2, E_GRAD_LP_TIME_INTEGRAL, BOUND_LHS]
        .into_iter()
        .filter(|name| statistics[*name] > bound + 3.0 * standard_errors[*name] + 1e-14)
        .map(String::from)
        .collect();

    Ok(EnsembleReport {
        n_paths: trajs.len(),
        dt: cfg.dt,
        statistics,
        standard_errors,
        violations,
    })
}

/// Quantity whose scaling a [`ScalingReport`] records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    /// Time integral of the drift, increments in the dual norm (first power).
    T1,
    /// Martingale part, increments in the dual norm (squared).
    T2,
    /// `E‖u_Δt - ũ_Δt‖²_{L²(D_T)}` against `Δt`.
    InterpGap,
    /// Error against a fine-step reference run against `Δt`.
    SelfConvergence,
    /// Distance to a fine-truncation reference run against `ε`.
    Truncation,
}

impl Probe {
    /// Power `α` applied to the increment norm and the decay exponent `ζ`
    /// of the bound `E‖X(τ+θ) - X(τ)‖^α ≤ C θ^ζ`.
    pub fn aldous_exponents(self) -> Option<(i32, f64)> {
        match self {
            Probe::T1 => Some((1, 0.5)),
            Probe::T2 => Some((2, 1.0)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub probe: Probe,
    /// `θ`, `Δt` or `ε` values, strictly decreasing.
    pub grid: Vec<f64>,
    pub measured: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub fitted_slope: f64,
    pub r_squared: f64,
    /// Slope bounds for `passed`, when the probe has them.
    pub min_slope: Option<f64>,
    pub max_slope: Option<f64>,
    /// All measurements vanish; the bound holds trivially.
    pub trivial: bool,
    pub passed: bool,
}

fn check_decreasing(name: &'static str, xs: &[f64]) -> Result<()> {
    if xs.windows(2).any(|w| !(w[0] > w[1])) || xs.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::param(
            name,
            "must be positive and strictly decreasing",
        ));
    }
    Ok(())
}

/// Builds a report from measurements, fitting a log-log slope unless every
/// measurement is zero.
pub fn scaling_report(
    probe: Probe,
    grid: Vec<f64>,
    measured: Vec<Estimate>,
    min_slope: Option<f64>,
) -> Result<ScalingReport> {
    check_decreasing("grid", &grid)?;
    let values: Vec<f64> = measured.iter().map(|e| e.mean).collect();
    let errors: Vec<f64> = measured.iter().map(|e| e.std_error).collect();
    if values.iter().all(|v| *v == 0.0) {
        return Ok(ScalingReport {
            probe,
            grid,
            measured: values,
            standard_errors: errors,
            fitted_slope: 0.0,
            r_squared: 1.0,
            min_slope,
            max_slope: None,
            trivial: true,
            passed: true,
        });
    }
    let fit = fit_loglog(&grid, &values)?;
    Ok(ScalingReport {
        probe,
        passed: min_slope.is_none_or(|m| fit.slope >= m),
        grid,
        measured: values,
        standard_errors: errors,
        fitted_slope: fit.slope,
        r_squared: fit.r_squared,
        min_slope,
        max_slope: None,
        trivial: false,
    })
}

impl ScalingReport {
    /// Adds an upper slope bound and re-evaluates `passed`.
    pub fn with_max_slope(mut self, max: f64) -> Self {
        self.max_slope = Some(max);
        if !self.trivial {
            self.passed = self.passed && self.fitted_slope <= max;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AldousOptions {
    /// Deterministic start times `τ`.
    pub taus: Vec<f64>,
    /// Ascent iterations of the dual-norm estimate.
    pub dual_iters: usize,
}

impl AldousOptions {
    /// `τ ∈ {0, T/4, T/2}` and 30 ascent iterations.
    pub fn for_horizon(t_final: f64) -> Self {
        Self {
            taus: vec![0.0, 0.25 * t_final, 0.5 * t_final],
            dual_iters: 30,
        }
    }
}

/// `T1(t) = ũ_Δt(t) - û_0 - B̃_Δt(t)`, the integrated drift.
fn drift_part(t: &Trajectory, time: f64) -> Result<Field> {
    t.affine_at(time)?
        .sub(&t.hats()[0])?
        .sub(&t.martingale_at(time)?)
}

/// Fits `E‖X(τ+θ) - X(τ)‖^α_{W^{-1,p'}}` against `θ` for `X = T1` or `T2`.
/// Pass criterion: slope at least `ζ - 0.25`.
pub fn aldous_scaling(
    trajs: &[Trajectory],
    probe: Probe,
    theta_grid: &[f64],
    opts: &AldousOptions,
) -> Result<ScalingReport> {
    check_shared_config(trajs)?;
    let (alpha, zeta) = probe
        .aldous_exponents()
        .ok_or_else(|| Error::param("probe", format!("{probe:?} is not an increment probe")))?;
    if theta_grid.len() < 4 {
        return Err(Error::param("theta_grid", "need at least four values"));
    }
    check_decreasing("theta_grid", theta_grid)?;
    if opts.taus.is_empty() {
        return Err(Error::param("taus", "need at least one start time"));
    }
    let cfg = *trajs[0].config();
    let t_final = cfg.t_final();
    let slack = 1e-12 * t_final.max(1.0);
    if opts
        .taus
        .iter()
        .any(|&tau| tau < 0.0 || tau + theta_grid[0] > t_final + slack)
    {
        return Err(Error::param(
            "theta_grid",
            "every tau + theta must lie in [0, T]",
        ));
    }

    let per_path: Vec<Vec<f64>> = trajs
        .par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let value = |time: f64| -> Result<Field> {
                let time = time.min(t_final);
                match probe {
                    Probe::T1 => drift_part(t, time),
                    _ => t.martingale_at(time),
                }
            };
            theta_grid
                .iter()
                .map(|&theta| {
                    let mut acc = 0.0;
                    for &tau in &opts.taus {
                        let inc = value(tau + theta)?.sub(&value(tau)?)?;
                        let inc = inc.project_zero_boundary();
                        acc += dual_norm_estimate(&inc, cfg.p, opts.dual_iters)?.powi(alpha);
                    }
                    Ok(acc / opts.taus.len() as f64)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let measured = (0..theta_grid.len())
        .map(|i| mean_se(&per_path.iter().map(|v| v[i]).collect::<Vec<_>>()))
        .collect();
    scaling_report(probe, theta_grid.to_vec(), measured, Some(zeta - 0.25))
}

/// Fits `E‖u_Δt - ũ_Δt‖²_{L²(D_T)}` against `Δt` over ensembles run at
/// decreasing step sizes.
pub fn interp_gap_scaling(ensembles: &[Vec<Trajectory>], min_slope: f64) -> Result<ScalingReport> {
    let mut dts = Vec::new();
    let mut measured = Vec::new();
    for e in ensembles {
        check_shared_config(e)?;
        dts.push(e[0].dt());
        measured.push(mean_se(
            &e.iter().map(Trajectory::interp_gap_sq).collect::<Vec<_>>(),
        ));
    }
    scaling_report(Probe::InterpGap, dts, measured, Some(min_slope))
}

/// Merges consecutive groups of `factor` steps, keeping every jump.
pub fn coarsen_path(path: &PrmPath, factor: usize) -> Result<PrmPath> {
    if factor == 0 || !path.n_steps().is_multiple_of(factor) {
        return Err(Error::param(
            "factor",
            format!("{factor} does not divide {} steps", path.n_steps()),
        ));
    }
    Ok(path.coarsened(factor))
}

/// Ratios `Δt / fine` of a sweep, each required to be an integer.
fn step_factors(dts: &[f64], fine: f64) -> Result<Vec<usize>> {
    dts.iter()
        .map(|dt| {
            let f = (dt / fine).round();
            if f < 1.0 || (f * fine - dt).abs() > 1e-9 * dt {
                Err(Error::param(
                    "sweep",
                    format!("{dt} is not a multiple of the step {fine}"),
                ))
            } else {
                Ok(f as usize)
            }
        })
        .collect()
}

/// Ensembles at each step size of a decreasing sweep, driven by the same
/// noise: every path is sampled once at the finest step and its steps are
/// merged for the coarser runs.
pub fn coupled_ensembles(
    u0: &Field,
    control: &Field,
    model: &LevyModel,
    base: &SchemeConfig,
    t_final: f64,
    dts: &[f64],
    seeds: &[u64],
) -> Result<Vec<Vec<Trajectory>>> {
    if dts.is_empty() || seeds.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    check_decreasing("sweep", dts)?;
    let fine = dts[dts.len() - 1];
    let factors = step_factors(dts, fine)?;
    let n_fine = crate::levy::step_count(t_final, fine)?;
    let paths: Vec<PrmPath> = seeds
        .par_iter()
        .map(|&seed| sample_prm(model, t_final, fine, seed))
        .collect::<Result<_>>()?;
    dts.iter()
        .zip(&factors)
        .map(|(&dt, &m)| {
            let cfg = SchemeConfig {
                dt,
                n_steps: n_fine / m,
                ..*base
            };
            let coarse = paths
                .iter()
                .map(|p| coarsen_path(p, m))
                .collect::<Result<Vec<_>>>()?;
            simulate_ensemble_on(u0, control, model, &cfg, coarse)
        })
        .collect()
}

/// Self-convergence of the scheme: for each `Δt` in `dts` (strictly
/// decreasing), the root-mean-square over paths of
/// `max_k ‖û^{Δt}_k - û^{ref}(t_k)‖_{L²}` against a reference run with step
/// `min(dts) / refine`. Coarse runs reuse the reference noise realisation
/// with its steps merged.
#[allow(clippy::too_many_arguments)]
pub fn self_convergence(
    u0: &Field,
    control: &Field,
    model: &LevyModel,
    base: &SchemeConfig,
    t_final: f64,
    dts: &[f64],
    refine: usize,
    seeds: &[u64],
    min_slope: Option<f64>,
) -> Result<ScalingReport> {
    if dts.len() < 2 {
        return Err(Error::param("sweep", "need at least two step sizes"));
    }
    check_decreasing("sweep", dts)?;
    if seeds.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let dt_ref = dts[dts.len() - 1] / refine.max(1) as f64;
    let n_ref = crate::levy::step_count(t_final, dt_ref)?;
    let factors = step_factors(dts, dt_ref)?;
    let cfg_ref = SchemeConfig {
        dt: dt_ref,
        n_steps: n_ref,
        ..*base
    };

    let errors: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<f64>> {
            let prm = sample_prm(model, t_final, dt_ref, seed)?;
            let reference = simulate_with_path(u0, control, model, &cfg_ref, prm.clone())?;
            dts.iter()
                .zip(&factors)
                .map(|(&dt, &m)| {
                    let cfg = SchemeConfig {
                        dt,
                        n_steps: n_ref / m,
                        ..*base
                    };
                    let coarse =
                        simulate_with_path(u0, control, model, &cfg, coarsen_path(&prm, m)?)?;
                    let mut worst: f64 = 0.0;
                    for (k, u) in coarse.hats().iter().enumerate() {
                        let d = u.sub(&reference.hats()[k * m])?;
                        worst = worst.max(grid::l2_norm(&d));
                    }
                    Ok(worst * worst)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let measured = (0..dts.len())
        .map(|i| {
            let sq = mean_se(&errors.iter().map(|e| e[i]).collect::<Vec<_>>());
            let rms = sq.mean.sqrt();
            Estimate {
                mean: rms,
                std_error: if rms > 0.0 {
                    sq.std_error / (2.0 * rms)
                } else {
                    0.0
                },
            }
        })
        .collect();
    scaling_report(Probe::SelfConvergence, dts.to_vec(), measured, min_slope)
}

/// Distance `E‖u_ε(T) - u_ref(T)‖_{L²}` for decreasing truncation levels,
/// with the reference at `min(eps) / 10`. All levels share one noise
/// realisation per seed, thinned to each cutoff.
pub fn truncation_sweep(
    u0: &Field,
    control: &Field,
    model: &LevyModel,
    cfg: &SchemeConfig,
    eps_list: &[f64],
    seeds: &[u64],
) -> Result<ScalingReport> {
    if eps_list.len() < 2 {
        return Err(Error::param("sweep", "need at least two truncation levels"));
    }
    check_decreasing("sweep", eps_list)?;
    let eps_ref = eps_list[eps_list.len() - 1] / 10.0;
    let reference_model = model.with_truncation(eps_ref)?;
    let models: Vec<LevyModel> = eps_list
        .iter()
        .map(|&e| model.with_truncation(e))
        .collect::<Result<_>>()?;
    let dists: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<f64>> {
            let prm = sample_prm(&reference_model, cfg.t_final(), cfg.dt, seed)?;
            let reference = simulate_with_path(u0, control, &reference_model, cfg, prm.clone())?;
            let end = &reference.hats()[cfg.n_steps];
            models
                .iter()
                .zip(eps_list)
                .map(|(m, &e)| {
                    let run = simulate_with_path(u0, control, m, cfg, prm.thinned(e))?;
                    Ok(grid::l2_norm(&run.hats()[cfg.n_steps].sub(end)?))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let measured = (0..eps_list.len())
        .map(|i| mean_se(&dists.iter().map(|d| d[i]).collect::<Vec<_>>()))
        .collect();
    scaling_report(Probe::Truncation, eps_list.to_vec(), measured, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub n_paths: usize,
    pub identical_inputs: bool,
    pub times: Vec<f64>,
    /// `Ê‖u_a(t_k) - u_b(t_k)‖_{L¹}`
    pub mean_l1: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub max_pathwise_l1: f64,
    /// Largest `mean(D_k) - 3 SE(D_k)` over steps, with `D_k` the per-path
    /// change of the L¹ distance; nonpositive when the check passes.
    pub worst_growth_excess: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Runs paired trajectories from `u0_a` and `u0_b` on identical noise paths
/// and tracks their L¹ distance over time.
pub fn uniqueness_check(
    model: &LevyModel,
    cfg: &SchemeConfig,
    u0_a: &Field,
    u0_b: &Field,
    control: &Field,
    seeds: &[u64],
) -> Result<UniquenessReport> {
    if seeds.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let identical = u0_a == u0_b;
    let n_nodes = u0_a.grid().n_nodes();
    let tolerance = 10.0 * cfg.solver.tol * n_nodes as f64;

    let dists: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<f64>> {
            let prm = sample_prm(model, cfg.t_final(), cfg.dt, seed)?;
            let a = simulate_with_path(u0_a, control, model, cfg, prm.clone())?;
            let b = simulate_with_path(u0_b, control, model, cfg, prm)?;
            a.hats()
                .iter()
                .zip(b.hats())
                .map(|(x, y)| Ok(grid::l1_norm(&x.sub(y)?)))
                .collect()
        })
        .collect::<Result<_>>()?;

    let n = cfg.n_steps;
    let per_time: Vec<Estimate> = (0..=n)
        .map(|k| mean_se(&dists.iter().map(|d| d[k]).collect::<Vec<_>>()))
        .collect();
    let max_pathwise = dists.iter().flatten().copied().fold(0.0, f64::max);
    let worst_growth_excess = (0..n)
        .map(|k| {
            let growth = mean_se(&dists.iter().map(|d| d[k + 1] - d[k]).collect::<Vec<_>>());
            growth.mean - 3.0 * growth.std_error
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let passed = if identical {
        max_pathwise <= tolerance
    } else {
        n == 0 || worst_growth_excess <= tolerance
    };
    Ok(UniquenessReport {
        n_paths: seeds.len(),
        identical_inputs: identical,
        times: cfg.times(),
        mean_l1: per_time.iter().map(|e| e.mean).collect(),
        standard_errors: per_time.iter().map(|e| e.std_error).collect(),
        max_pathwise_l1: max_pathwise,
        worst_growth_excess: if n == 0 { 0.0 } else { worst_growth_excess },
        tolerance,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    pub n_samples: usize,
    pub dt: f64,
    /// Monte Carlo `Σ_x w_x Var(increment(x))`.
    pub lhs: f64,
    /// `dt ∫ ‖η(u; z)‖²_{L²} m(dz)`.
    pub rhs: f64,
    pub std_error: f64,
    pub relative_error: f64,
    /// Three standard errors, relative to `rhs`.
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares the sample variance of one-step compensated increments with the
/// isometry value.
pub fn isometry_check(
    model: &LevyModel,
    u: &Field,
    dt: f64,
    n_samples: usize,
    seed: u64,
) -> Result<IsometryReport> {
    if n_samples < 1000 {
        return Err(Error::param("n_samples", "need at least 1000 samples"));
    }
    let grid = *u.grid();
    let interior = grid.interior_nodes();
    let w = grid.cell_volume();
    let rhs = dt
        * interior
            .iter()
            .map(|&k| w * model.squared_intensity(u.values()[k]))
            .sum::<f64>();

    let samples: Vec<Vec<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let prm = sample_prm(model, dt, dt, mix64(seed ^ mix64(s)))?;
            Ok(compensated_increment(model, u, &prm, 0)?.into_values())
        })
        .collect::<Result<_>>()?;

    let mean: Vec<f64> = (0..grid.n_nodes())
        .map(|k| samples.iter().map(|x| x[k]).sum::<f64>() / n_samples as f64)
        .collect();
    let centred: Vec<f64> = samples
        .iter()
        .map(|x| {
            interior
                .iter()
                .map(|&k| w * (x[k] - mean[k]).powi(2))
                .sum::<f64>()
        })
        .collect();
    let est = mean_se(&centred);
    let lhs = est.mean * n_samples as f64 / (n_samples - 1) as f64;
    let (relative_error, tolerance) = if rhs > 0.0 {
        ((lhs - rhs).abs() / rhs, 3.0 * est.std_error / rhs)
    } else {
        (lhs.abs(), 0.0)
    };
    Ok(IsometryReport {
        n_samples,
        dt,
        lhs,
        rhs,
        std_error: est.std_error,
        relative_error,
        tolerance,
        passed: relative_error <= tolerance || (rhs == 0.0 && lhs == 0.0),
    })
}
