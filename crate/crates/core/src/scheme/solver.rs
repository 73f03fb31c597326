//! Per-step nonlinear solve of the implicit Euler equation
//!
//! `u - dt · div(|∇u|^{p-2} ∇u + f⃗(u)) = rhs`
//!
//! in weak form against nodal test functions. Damped Newton with a
//! regularised Jacobian; the residual always uses the exact flux.

use serde::{Deserialize, Serialize};

use super::flux::{convective_flux, convective_partials, FluxModel};
use super::{ControlProjection, SchemeConfig};
use crate::error::{Error, Result};
use crate::grid::{
    self, div_flux_values, grad_lp_pow_values, gradient_of, CellVec, Field, Grid, Space,
};

/// Regularisation of `|∇u|` inside the Newton Jacobian only.
pub const JACOBIAN_DELTA: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Absolute tolerance on the discrete L2 norm of the nodal residual.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    pub residual: f64,
    /// Whether the lagged-diffusivity fallback was used.
    pub picard: bool,
}

struct StepProblem<'a> {
    grid: Grid,
    p: f64,
    dt: f64,
    flux: &'a FluxModel,
    /// Nodal right-hand side; its boundary values are the Dirichlet data.
    rhs: &'a [f64],
    interior: Vec<usize>,
}

impl StepProblem<'_> {
    fn cell_flux(&self, x: &[f64]) -> Vec<CellVec> {
        let p = self.p;
        let mut g = gradient_of(&self.grid, x);
        for v in g.iter_mut() {
            let a = grid::norm2(v).powf(p - 2.0);
            v[0] *= a;
            v[1] *= a;
        }
        if !self.flux.is_zero() {
            for (v, q) in g.iter_mut().zip(convective_flux(&self.grid, self.flux, x)) {
                v[0] += q[0];
                v[1] += q[1];
            }
        }
        g
    }

    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let div = div_flux_values(&self.grid, &self.cell_flux(x));
        self.interior
            .iter()
            .map(|&k| x[k] - self.rhs[k] - self.dt * div[k])
            .collect()
    }

    fn norm(&self, r: &[f64]) -> f64 {
        (r.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// Convex energy whose gradient is the residual (zero flux only).
    fn energy(&self, x: &[f64]) -> f64 {
        let mass: f64 = self
            .interior
            .iter()
            .map(|&k| (x[k] - self.rhs[k]).powi(2))
            .sum::<f64>()
            * 0.5
            * self.grid.cell_volume();
        mass + self.dt / self.p * grad_lp_pow_values(&self.grid, x, self.p)
    }

    fn jacobian(&self, x: &[f64]) -> crate::banded::BandMatrix {
        let grid = self.grid;
        let dim = grid.dim();
        let d = grid.local_gradient();
        let grads = gradient_of(&grid, x);
        let partials = if self.flux.is_zero() {
            None
        } else {
            Some(convective_partials(&grid, self.flux, x))
        };
        let (p, dt) = (self.p, self.dt);
        let delta2 = JACOBIAN_DELTA * JACOBIAN_DELTA;
        grid.assemble(1.0, |cell| {
            let g = grads[cell];
            let s = g[0] * g[0] + g[1] * g[1] + delta2;
            let a = s.powf(0.5 * (p - 2.0));
            let b = (p - 2.0) * s.powf(0.5 * (p - 4.0));
            let df = [
                [a + b * g[0] * g[0], b * g[0] * g[1]],
                [b * g[1] * g[0], a + b * g[1] * g[1]],
            ];
            // dG_axis / d(local node)
            let mut dg = [[0.0; 3]; 2];
            for ax in 0..dim {
                for j in 0..=dim {
                    dg[ax][j] = (0..dim).map(|bx| df[ax][bx] * d[bx][j]).sum();
                }
                if let Some(parts) = &partials {
                    let (pa, pb) = parts[cell][ax];
                    dg[ax][0] += pa;
                    dg[ax][ax + 1] += pb;
                }
            }
            let mut block = [[0.0; 3]; 3];
            for (i, row) in block.iter_mut().enumerate().take(dim + 1) {
                for (j, entry) in row.iter_mut().enumerate().take(dim + 1) {
                    *entry = dt * (0..dim).map(|ax| d[ax][i] * dg[ax][j]).sum::<f64>();
                }
            }
            block
        })
    }

    /// Lagged-diffusivity linear system with explicit convection.
    fn picard_step(&self, x: &[f64]) -> Result<Vec<f64>> {
        let grid = self.grid;
        let dim = grid.dim();
        let d = grid.local_gradient();
        let grads = gradient_of(&grid, x);
        let p = self.p;
        let mat = grid.assemble(1.0, |cell| {
            let g = grads[cell];
            let a = (g[0] * g[0] + g[1] * g[1])
                .sqrt()
                .max(JACOBIAN_DELTA)
                .powf(p - 2.0);
            let mut block = [[0.0; 3]; 3];
            for (i, row) in block.iter_mut().enumerate().take(dim + 1) {
                for (j, entry) in row.iter_mut().enumerate().take(dim + 1) {
                    *entry = self.dt * a * (0..dim).map(|ax| d[ax][i] * d[ax][j]).sum::<f64>();
                }
            }
            block
        });
        let conv = div_flux_values(&grid, &convective_flux(&grid, self.flux, x));
        // Dirichlet boundary values enter through the stiffness coupling.
        let boundary_push = self.boundary_coupling(
            &grads,
            |g| {
                (g[0] * g[0] + g[1] * g[1])
                    .sqrt()
                    .max(JACOBIAN_DELTA)
                    .powf(p - 2.0)
            },
            x,
        );
        let b: Vec<f64> = self
            .interior
            .iter()
            .zip(boundary_push)
            .map(|(&k, push)| self.rhs[k] + self.dt * conv[k] - push)
            .collect();
        let sol = mat.factor()?.solve(&b);
        let mut out = x.to_vec();
        for (&k, v) in self.interior.iter().zip(sol) {
            out[k] = v;
        }
        Ok(out)
    }

    /// Contribution of fixed boundary values to each interior equation of the
    /// lagged stiffness operator.
    fn boundary_coupling(
        &self,
        grads: &[CellVec],
        coeff: impl Fn(&CellVec) -> f64,
        x: &[f64],
    ) -> Vec<f64> {
        let grid = self.grid;
        let dim = grid.dim();
        let d = grid.local_gradient();
        let mut push = vec![0.0; self.interior.len()];
        for (cell, g) in grads.iter().enumerate() {
            let nodes = grid.cell_nodes(cell);
            let a = coeff(g);
            for i in 0..=dim {
                let Some(row) = grid.interior_index(nodes[i]) else {
                    continue;
                };
                for j in 0..=dim {
                    if grid.is_boundary(nodes[j]) && x[nodes[j]] != 0.0 {
                        let k: f64 = (0..dim).map(|ax| d[ax][i] * d[ax][j]).sum();
                        push[row] += self.dt * a * k * x[nodes[j]];
                    }
                }
            }
        }
        push
    }

    fn solve(&self, mut x: Vec<f64>, opts: &SolverOptions) -> Result<(Vec<f64>, StepReport)> {
        let use_energy = self.flux.is_zero();
        let h_d = self.grid.cell_volume();
        let mut picard = false;
        let mut r = self.residual(&x);
        let mut rn = self.norm(&r);

        for it in 0..opts.max_iters {
            if rn <= opts.tol {
                return Ok((
                    x,
                    StepReport {
                        iterations: it,
                        residual: rn,
                        picard,
                    },
                ));
            }

            if !picard {
                let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
                let dir = self.jacobian(&x).factor()?.solve(&neg_r);
                let slope: f64 = r.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>() * h_d;
                let e0 = if use_energy {
                    self.energy(&x)
                } else {
                    0.5 * rn * rn
                };
                let mut step = 1.0;
                let mut accepted = None;
                while step >= 1e-10 {
                    let mut trial = x.clone();
                    for (&k, dv) in self.interior.iter().zip(&dir) {
                        trial[k] += step * dv;
                    }
                    let tr = self.residual(&trial);
                    let tn = self.norm(&tr);
                    let ok = if use_energy {
                        self.energy(&trial) <= e0 + 1e-4 * step * slope || tn <= opts.tol
                    } else {
                        0.5 * tn * tn <= (1.0 - 1e-4 * step) * e0 || tn <= opts.tol
                    };
                    if ok {
                        accepted = Some((trial, tr, tn));
                        break;
                    }
                    step *= 0.5;
                }
                match accepted {
                    Some((nx, nr, nn)) => {
                        x = nx;
                        r = nr;
                        rn = nn;
                    }
                    None => picard = true,
                }
            }

            if picard {
                x = self.picard_step(&x)?;
                r = self.residual(&x);
                rn = self.norm(&r);
            }
        }

        if rn <= opts.tol {
            Ok((
                x,
                StepReport {
                    iterations: opts.max_iters,
                    residual: rn,
                    picard,
                },
            ))
        } else {
            Err(Error::NonConvergence {
                step: None,
                iterations: opts.max_iters,
                residual: rn,
            })
        }
    }
}

fn solve_nodal(
    grid: Grid,
    p: f64,
    dt: f64,
    flux: &FluxModel,
    rhs: &[f64],
    guess: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, StepReport)> {
    let problem = StepProblem {
        grid,
        p,
        dt,
        flux,
        rhs,
        interior: grid.interior_nodes(),
    };
    let mut x = guess.to_vec();
    for k in grid.boundary_nodes() {
        x[k] = rhs[k];
    }
    problem.solve(x, opts)
}

/// Solves one implicit step from `u_prev` with noise increment `noise_inc`,
/// starting Newton at `u_prev`. Boundary values of `u_prev` are kept.
pub fn step_solve(u_prev: &Field, noise_inc: &Field, cfg: &SchemeConfig) -> Result<Field> {
    step_solve_from(u_prev, noise_inc, cfg, u_prev).map(|(f, _)| f)
}

/// [`step_solve`] with an explicit initial Newton iterate.
pub fn step_solve_from(
    u_prev: &Field,
    noise_inc: &Field,
    cfg: &SchemeConfig,
    guess: &Field,
) -> Result<(Field, StepReport)> {
    cfg.validate()?;
    let grid = *u_prev.grid();
    if *noise_inc.grid() != grid || *guess.grid() != grid {
        return Err(Error::GridMismatch);
    }
    if grid
        .boundary_nodes()
        .into_iter()
        .any(|k| noise_inc.values()[k] != 0.0)
    {
        return Err(Error::InvalidField(
            "noise increment must vanish on the boundary".into(),
        ));
    }
    let rhs: Vec<f64> = u_prev
        .values()
        .iter()
        .zip(noise_inc.values())
        .map(|(a, b)| a + b)
        .collect();
    let (x, report) = solve_nodal(
        grid,
        cfg.p,
        cfg.dt,
        &cfg.flux,
        &rhs,
        guess.values(),
        &cfg.solver,
    )?;
    let space = if grid.boundary_nodes().into_iter().all(|k| x[k] == 0.0) {
        Space::ZeroBoundary
    } else {
        Space::FreeBoundary
    };
    Ok((Field::from_raw(grid, x, space), report))
}

/// Outcome of the initial regularisation.
#[derive(Debug, Clone)]
pub struct InitialApprox {
    /// Zero-boundary approximation `u_{0,Δt}` of `u0`.
    pub u0_dt: Field,
    /// Starting value `u_{0,Δt} + U` of the scheme.
    pub hat0: Field,
    /// `½‖u_{0,Δt}‖² + Δt ‖∇u_{0,Δt}‖_p^p`
    pub lhs: f64,
    /// `½‖u0‖²`
    pub rhs: f64,
    /// Residual norm of the proximal solve.
    pub residual: f64,
}

impl InitialApprox {
    /// Admissible excess of `lhs` over `rhs` caused by the solver residual.
    pub fn slack(&self) -> f64 {
        self.residual * grid::l2_norm(&self.u0_dt)
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + self.slack()
    }
}

/// Proximal regularisation `u_{0,Δt} = argmin ½‖v - u0‖² + Δt ‖∇v‖_p^p`
/// over zero-boundary `v`, and the scheme's starting value `u_{0,Δt} + U`.
pub fn prepare_initial(u0: &Field, control: &Field, cfg: &SchemeConfig) -> Result<InitialApprox> {
    cfg.validate()?;
    let grid = *u0.grid();
    if *control.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let rhs_vals = u0.project_zero_boundary().into_values();
    let (v, report) = solve_nodal(
        grid,
        cfg.p,
        cfg.p * cfg.dt,
        &FluxModel::Zero,
        &rhs_vals,
        &rhs_vals,
        &cfg.solver,
    )?;
    let u0_dt = Field::from_raw(grid, v, Space::ZeroBoundary);
    let lift = match cfg.projection {
        ControlProjection::ClampBoundary => control.project_zero_boundary(),
        ControlProjection::Lift => control.clone(),
    };
    let hat0 = u0_dt.add(&lift)?;
    let lhs = 0.5 * grid::l2_norm(&u0_dt).powi(2) + cfg.dt * grid::grad_lp_pow(&u0_dt, cfg.p)?;
    let rhs = 0.5 * grid::l2_norm(u0).powi(2);
    Ok(InitialApprox {
        u0_dt,
        hat0,
        lhs,
        rhs,
        residual: report.residual,
    })
}
