use super::Trajectory;
use crate::error::{Error, Result};
use crate::grid::Field;

/// Time-continuous processes built from `{û_k}` at one query time.
#[derive(Debug, Clone)]
pub struct Interpolants {
    /// Right-continuous step `u_Δt(t) = û_{k+1}` on `[t_k, t_{k+1})`.
    pub right_step: Field,
    /// Left-continuous step `ū_Δt(t) = û_k` on `(t_k, t_{k+1}]`, `ū_Δt(0) = û_0`.
    pub left_step: Field,
    /// Piecewise affine `ũ_Δt`.
    pub affine: Field,
    /// Piecewise affine martingale `B̃_Δt`.
    pub martingale_affine: Field,
}

enum Locate {
    /// Exactly the time node `t_j`.
    Node(usize),
    /// Strictly inside `(t_k, t_{k+1})` with fraction `s ∈ (0, 1)`.
    Inside(usize, f64),
}

fn affine(a: &Field, b: &Field, s: f64) -> Field {
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x + s * (y - x))
        .collect();
    Field::from_raw(*a.grid(), values, a.space())
}

impl Trajectory {
    fn locate(&self, t: f64) -> Result<Locate> {
        let n = self.n_steps();
        let t_final = self.t_final();
        let slack = 1e-12 * t_final.max(1.0);
        if !(t >= -slack && t <= t_final + slack) {
            return Err(Error::TimeOutOfRange { t, t_final });
        }
        let x = (t / self.dt()).clamp(0.0, n as f64);
        let j = x.round();
        if (x - j).abs() <= 1e-9 {
            return Ok(Locate::Node(j as usize));
        }
        let k = (x.floor() as usize).min(n.saturating_sub(1));
        Ok(Locate::Inside(k, x - k as f64))
    }

    /// Evaluates all interpolants at `t ∈ [0, T]`.
    pub fn interpolants(&self, t: f64) -> Result<Interpolants> {
        let n = self.n_steps();
        let hats = &self.hats;
        let bs = &self.martingale_partials;
        Ok(match self.locate(t)? {
            Locate::Node(j) => Interpolants {
                right_step: hats[(j + 1).min(n)].clone(),
                left_step: hats[j.saturating_sub(1)].clone(),
                affine: hats[j].clone(),
                martingale_affine: bs[j].clone(),
            },
            Locate::Inside(k, s) => Interpolants {
                right_step: hats[k + 1].clone(),
                left_step: hats[k].clone(),
                affine: affine(&hats[k], &hats[k + 1], s),
                martingale_affine: affine(&bs[k], &bs[k + 1], s),
            },
        })
    }

    /// Affine `ũ_Δt(t)` alone.
    pub fn affine_at(&self, t: f64) -> Result<Field> {
        Ok(match self.locate(t)? {
            Locate::Node(j) => self.hats[j].clone(),
            Locate::Inside(k, s) => affine(&self.hats[k], &self.hats[k + 1], s),
        })
    }

    /// Affine `B̃_Δt(t)` alone.
    pub fn martingale_at(&self, t: f64) -> Result<Field> {
        let bs = &self.martingale_partials;
        Ok(match self.locate(t)? {
            Locate::Node(j) => bs[j].clone(),
            Locate::Inside(k, s) => affine(&bs[k], &bs[k + 1], s),
        })
    }
}
