//! Convective flux `f⃗(u)` and its conservative cell discretisation.

use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Error, Result};
use crate::grid::{CellVec, Grid};

/// Preset fluxes; every preset vanishes at zero and is globally Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FluxModel {
    #[default]
    Zero,
    /// `f⃗(u) = coef · u`
    Linear { coef: [f64; 2] },
    /// `f⃗(u) = coef · sin(u)`
    Sine { coef: [f64; 2] },
}

impl FluxModel {
    #[inline]
    pub fn value(&self, u: f64) -> CellVec {
        match *self {
            FluxModel::Zero => [0.0; 2],
            FluxModel::Linear { coef } => [coef[0] * u, coef[1] * u],
            FluxModel::Sine { coef } => [coef[0] * u.sin(), coef[1] * u.sin()],
        }
    }

    /// Componentwise `∫_0^u f⃗`.
    #[inline]
    pub fn antiderivative(&self, u: f64) -> CellVec {
        match *self {
            FluxModel::Zero => [0.0; 2],
            FluxModel::Linear { coef } => [0.5 * coef[0] * u * u, 0.5 * coef[1] * u * u],
            FluxModel::Sine { coef } => {
                let c = 1.0 - u.cos();
                [coef[0] * c, coef[1] * c]
            }
        }
    }

    #[inline]
    pub fn derivative(&self, u: f64) -> CellVec {
        match *self {
            FluxModel::Zero => [0.0; 2],
            FluxModel::Linear { coef } => coef,
            FluxModel::Sine { coef } => [coef[0] * u.cos(), coef[1] * u.cos()],
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            FluxModel::Zero => 0.0,
            FluxModel::Linear { coef } | FluxModel::Sine { coef } => {
                (coef[0] * coef[0] + coef[1] * coef[1]).sqrt()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.lipschitz() == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.lipschitz();
        if !l.is_finite() {
            return Err(Error::Assumption {
                assumption: Assumption::A2,
                reason: format!("flux Lipschitz constant {l} is not finite"),
            });
        }
        if self.value(0.0) != [0.0; 2] {
            return Err(Error::Assumption {
                assumption: Assumption::A2,
                reason: "f(0) != 0".into(),
            });
        }
        Ok(())
    }

    /// Divided difference `(F(b) - F(a)) / (b - a)` for one component, with
    /// the midpoint value when `a ≈ b`.
    #[inline]
    fn divided(&self, axis: usize, a: f64, b: f64) -> f64 {
        let d = b - a;
        if d.abs() <= 1e-7 * (1.0 + a.abs() + b.abs()) {
            self.value(0.5 * (a + b))[axis]
        } else {
            (self.antiderivative(b)[axis] - self.antiderivative(a)[axis]) / d
        }
    }

    /// Partial derivatives of [`Self::divided`] with respect to `a` and `b`.
    #[inline]
    fn divided_partials(&self, axis: usize, a: f64, b: f64) -> (f64, f64) {
        let d = b - a;
        if d.abs() <= 1e-4 * (1.0 + a.abs() + b.abs()) {
            let half = 0.5 * self.derivative(0.5 * (a + b))[axis];
            (half, half)
        } else {
            let q = self.divided(axis, a, b);
            ((q - self.value(a)[axis]) / d, (self.value(b)[axis] - q) / d)
        }
    }
}

/// Cell values of the conservative convective flux: along each axis, the
/// divided difference of the antiderivative between the two nodes of the
/// cell edge. For zero-boundary `v`, `Σ_cells q·∇v h^dim` telescopes to zero.
pub fn convective_flux(grid: &Grid, flux: &FluxModel, values: &[f64]) -> Vec<CellVec> {
    if flux.is_zero() {
        return vec![[0.0; 2]; grid.n_cells_total()];
    }
    (0..grid.n_cells_total())
        .map(|cell| {
            let nodes = grid.cell_nodes(cell);
            let mut q = [0.0; 2];
            for (axis, qa) in q.iter_mut().enumerate().take(grid.dim()) {
                *qa = flux.divided(axis, values[nodes[0]], values[nodes[axis + 1]]);
            }
            q
        })
        .collect()
}

/// `∂q_axis/∂(u_base, u_neighbour)` for each cell and axis.
pub(crate) fn convective_partials(
    grid: &Grid,
    flux: &FluxModel,
    values: &[f64],
) -> Vec<[(f64, f64); 2]> {
    (0..grid.n_cells_total())
        .map(|cell| {
            let nodes = grid.cell_nodes(cell);
            let mut out = [(0.0, 0.0); 2];
            for (axis, o) in out.iter_mut().enumerate().take(grid.dim()) {
                *o = flux.divided_partials(axis, values[nodes[0]], values[nodes[axis + 1]]);
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gradient, Field, Space};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn presets_satisfy_flux_hypotheses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for f in [
            FluxModel::Zero,
            FluxModel::Linear { coef: [0.7, -0.2] },
            FluxModel::Sine { coef: [1.5, 0.5] },
        ] {
            f.validate().unwrap();
            assert_eq!(f.value(0.0), [0.0; 2]);
            for _ in 0..1000 {
                let (u, v): (f64, f64) = (rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
                let (fu, fv) = (f.value(u), f.value(v));
                let diff = ((fu[0] - fv[0]).powi(2) + (fu[1] - fv[1]).powi(2)).sqrt();
                assert!(diff <= f.lipschitz() * (u - v).abs() + 1e-12);
            }
        }
    }

    #[test]
    fn convection_has_zero_mean_on_zero_boundary_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for grid in [Grid::new(1, 13).unwrap(), Grid::new(2, 7).unwrap()] {
            for flux in [
                FluxModel::Linear { coef: [1.3, -0.4] },
                FluxModel::Sine { coef: [2.0, 1.0] },
            ] {
                for _ in 0..50 {
                    let v =
                        Field::from_fn(grid, Space::ZeroBoundary, |_| rng.random_range(-3.0..3.0));
                    let q = convective_flux(&grid, &flux, v.values());
                    let total: f64 = q
                        .iter()
                        .zip(gradient(&v))
                        .map(|(a, g)| a[0] * g[0] + a[1] * g[1])
                        .sum::<f64>()
                        * grid.cell_volume();
                    assert!(total.abs() < 1e-12, "{total}");
                }
            }
        }
    }

    #[test]
    fn divided_partials_match_finite_differences() {
        let f = FluxModel::Sine { coef: [1.0, 0.0] };
        for (a, b) in [(0.1, 0.9), (-1.0, 2.0), (0.5, 0.5 + 1e-6)] {
            let (da, db) = f.divided_partials(0, a, b);
            let h = 1e-6;
            let fa = (f.divided(0, a + h, b) - f.divided(0, a - h, b)) / (2.0 * h);
            let fb = (f.divided(0, a, b + h) - f.divided(0, a, b - h)) / (2.0 * h);
            assert!((da - fa).abs() < 1e-4, "{da} {fa}");
            assert!((db - fb).abs() < 1e-4, "{db} {fb}");
        }
    }
}
