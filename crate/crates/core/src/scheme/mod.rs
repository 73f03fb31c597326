//! Implicit Euler time stepping: drift implicit, noise explicit.
//!
//! Each step solves
//! `û_{k+1} - Δt div(|∇û_{k+1}|^{p-2}∇û_{k+1} + f⃗(û_{k+1})) = û_k + ∫∫ η(û_k; z) Ñ(dz, dt)`.

mod flux;
mod interp;
mod solver;

use serde::{Deserialize, Serialize};

pub use flux::{convective_flux, FluxModel};
pub use interp::Interpolants;
pub use solver::{
    prepare_initial, step_solve, step_solve_from, InitialApprox, SolverOptions, StepReport,
    JACOBIAN_DELTA,
};

use crate::error::{Assumption, Error, Result};
use crate::grid::{Field, Space};
use crate::levy::{compensated_increment, sample_prm, LevyModel, PrmPath};

/// How a control with a nonzero boundary trace enters the zero-boundary scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlProjection {
    /// Drop the trace: the control is projected onto the zero-boundary space.
    #[default]
    ClampBoundary,
    /// Keep the trace as time-constant Dirichlet data.
    Lift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub p: f64,
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub flux: FluxModel,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub projection: ControlProjection,
}

impl SchemeConfig {
    pub fn new(p: f64, dt: f64, n_steps: usize) -> Result<Self> {
        let cfg = Self {
            p,
            dt,
            n_steps,
            flux: FluxModel::Zero,
            solver: SolverOptions::default(),
            projection: ControlProjection::ClampBoundary,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_flux(mut self, flux: FluxModel) -> Self {
        self.flux = flux;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 2.0 && self.p.is_finite()) {
            return Err(Error::Assumption {
                assumption: Assumption::Exponent,
                reason: format!("p = {}", self.p),
            });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param(
                "dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::param("newton_tol", "must be positive"));
        }
        if self.solver.max_iters == 0 {
            return Err(Error::param("newton_max_iters", "must be positive"));
        }
        self.flux.validate()
    }

    pub fn t_final(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| k as f64 * self.dt).collect()
    }
}

/// Discrete solution `û_0..û_N` with its noise path and the martingale
/// partial sums `B_Δt(t_k)`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub(crate) hats: Vec<Field>,
    pub(crate) prm: PrmPath,
    pub(crate) martingale_partials: Vec<Field>,
    pub(crate) config: SchemeConfig,
    pub(crate) u0: Field,
    pub(crate) control: Field,
    pub(crate) initial: InitialApprox,
}

impl Trajectory {
    pub fn hats(&self) -> &[Field] {
        &self.hats
    }

    pub fn prm(&self) -> &PrmPath {
        &self.prm
    }

    pub fn martingale_partials(&self) -> &[Field] {
        &self.martingale_partials
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn u0(&self) -> &Field {
        &self.u0
    }

    pub fn control(&self) -> &Field {
        &self.control
    }

    pub fn initial(&self) -> &InitialApprox {
        &self.initial
    }

    pub fn n_steps(&self) -> usize {
        self.hats.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn t_final(&self) -> f64 {
        self.config.t_final()
    }

    /// `‖u_Δt - ũ_Δt‖²_{L²(D_T)}` in closed form: on each step the gap is
    /// `(û_{k+1} - û_k)(1 - s/Δt)`, whose square integrates to `Δt/3`.
    pub fn interp_gap_sq(&self) -> f64 {
        let dt = self.dt();
        self.hats
            .windows(2)
            .map(|w| {
                let d = w[1].sub(&w[0]).expect("same grid");
                crate::grid::l2_norm(&d).powi(2)
            })
            .sum::<f64>()
            * dt
            / 3.0
    }

    /// `Σ_k ‖û_{k+1} - û_k‖²`
    pub fn increment_sq_sum(&self) -> f64 {
        self.hats
            .windows(2)
            .map(|w| crate::grid::l2_norm(&w[1].sub(&w[0]).expect("same grid")).powi(2))
            .sum()
    }
}

/// Runs the scheme on a given noise realisation.
pub fn simulate_with_path(
    u0: &Field,
    control: &Field,
    model: &LevyModel,
    cfg: &SchemeConfig,
    prm: PrmPath,
) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = *u0.grid();
    if *control.grid() != grid {
        return Err(Error::GridMismatch);
    }
    if let Some(k) = u0.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::Assumption {
            assumption: Assumption::A1,
            reason: format!("u0 is not finite at node {k}"),
        });
    }
    if prm.n_steps() != cfg.n_steps || (prm.dt() - cfg.dt).abs() > 1e-15 * cfg.dt.max(1.0) {
        return Err(Error::Inconsistent(format!(
            "noise path has {} steps of {}, scheme expects {} of {}",
            prm.n_steps(),
            prm.dt(),
            cfg.n_steps,
            cfg.dt
        )));
    }

    let initial = prepare_initial(u0, control, cfg).map_err(|e| e.at_step(0))?;
    let mut hats = Vec::with_capacity(cfg.n_steps + 1);
    let mut partials = Vec::with_capacity(cfg.n_steps + 1);
    hats.push(initial.hat0.clone());
    let mut partial = Field::zeros(grid, Space::ZeroBoundary);
    partials.push(partial.clone());

    for k in 0..cfg.n_steps {
        let prev = &hats[k];
        let inc = compensated_increment(model, prev, &prm, k)?;
        let next = step_solve(prev, &inc, cfg).map_err(|e| e.at_step(k + 1))?;
        partial = partial.add(&inc)?.with_space(Space::ZeroBoundary);
        partials.push(partial.clone());
        hats.push(next);
    }

    Ok(Trajectory {
        hats,
        prm,
        martingale_partials: partials,
        config: *cfg,
        u0: u0.clone(),
        control: control.clone(),
        initial,
    })
}

/// Samples a noise path from `seed` and runs the scheme.
pub fn simulate_path(
    u0: &Field,
    control: &Field,
    model: &LevyModel,
    cfg: &SchemeConfig,
    seed: u64,
) -> Result<Trajectory> {
    let prm = sample_prm(model, cfg.t_final(), cfg.dt, seed)?;
    simulate_with_path(u0, control, model, cfg, prm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::levy::{LevyMeasure, NoiseCoefficient};

    fn model() -> LevyModel {
        LevyModel::new(
            LevyMeasure::point(1.0, 4.0),
            NoiseCoefficient::Linear { coef: 0.5 },
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn config_rejects_small_exponent() {
        assert!(matches!(
            SchemeConfig::new(2.0, 0.1, 3),
            Err(Error::Assumption {
                assumption: Assumption::Exponent,
                ..
            })
        ));
        assert!(SchemeConfig::new(3.0, -0.1, 3).is_err());
    }

    #[test]
    fn zero_data_is_an_exact_fixed_point() {
        let grid = Grid::new(1, 16).unwrap();
        let z = Field::zeros(grid, Space::ZeroBoundary);
        let cfg = SchemeConfig::new(3.0, 0.05, 20)
            .unwrap()
            .with_flux(FluxModel::Sine { coef: [1.0, 0.0] });
        let traj = simulate_path(&z, &z, &model(), &cfg, 17).unwrap();
        assert_eq!(traj.hats().len(), 21);
        assert!(traj.hats().iter().all(Field::is_zero));
        assert!(traj.prm().jump_count() > 0);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let grid = Grid::new(1, 16).unwrap();
        let u0 = Field::from_fn(grid, Space::ZeroBoundary, |x| {
            (std::f64::consts::PI * x[0]).sin()
        });
        let z = Field::zeros(grid, Space::ZeroBoundary);
        let cfg = SchemeConfig::new(3.0, 0.05, 20).unwrap();
        let a = simulate_path(&u0, &z, &model(), &cfg, 3).unwrap();
        let b = simulate_path(&u0, &z, &model(), &cfg, 3).unwrap();
        for (x, y) in a.hats().iter().zip(b.hats()) {
            assert_eq!(x.values(), y.values());
        }
        let c = simulate_path(&u0, &z, &model(), &cfg, 4).unwrap();
        assert_ne!(a.hats()[20].values(), c.hats()[20].values());
    }

    #[test]
    fn mismatched_noise_path_is_rejected() {
        let grid = Grid::new(1, 8).unwrap();
        let z = Field::zeros(grid, Space::ZeroBoundary);
        let cfg = SchemeConfig::new(3.0, 0.1, 10).unwrap();
        let prm = sample_prm(&model(), 0.5, 0.1, 1).unwrap();
        assert!(simulate_with_path(&z, &z, &model(), &cfg, prm).is_err());
    }
}
