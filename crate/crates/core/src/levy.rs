//! Poisson random measures with a finite (possibly truncated) Lévy intensity,
//! and compensated stochastic increments of the noise coefficient.
//!
//! Noise coefficients have product form `η(u; z) = a(u) · (1 ∧ |z|)`, which
//! keeps the compensator a single precomputed moment of the measure.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Error, Result};
use crate::grid::{Field, Space};
use crate::rng::stream_rng;

/// Nodes per sign of the compensator quadrature for density measures.
pub const QUADRATURE_NODES: usize = 256;

/// Default small-jump cutoff for density measures.
pub const DEFAULT_EPS: f64 = 1e-3;

/// Intensity measure `m(dz)` of the Poisson random measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevyMeasure {
    /// `Σ_j λ_j δ_{z_j}`; atoms are `[z_j, λ_j]`.
    PointMasses { atoms: Vec<[f64; 2]> },
    /// Symmetric `scale · |z|^{-1-alpha}` restricted to `eps ≤ |z| ≤ z_max`.
    PowerLaw {
        scale: f64,
        alpha: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        z_max: f64,
    },
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

impl LevyMeasure {
    /// Point mass `rate · δ_{z}`.
    pub fn point(z: f64, rate: f64) -> Self {
        LevyMeasure::PointMasses {
            atoms: vec![[z, rate]],
        }
    }

    /// Truncation level actually applied (zero for atomic measures).
    pub fn truncation(&self) -> f64 {
        match self {
            LevyMeasure::PointMasses { .. } => 0.0,
            LevyMeasure::PowerLaw { eps, .. } => *eps,
        }
    }

    /// Same measure with a different small-jump cutoff.
    pub fn with_truncation(&self, new_eps: f64) -> Self {
        match self {
            LevyMeasure::PowerLaw {
                scale,
                alpha,
                z_max,
                ..
            } => LevyMeasure::PowerLaw {
                scale: *scale,
                alpha: *alpha,
                eps: new_eps,
                z_max: *z_max,
            },
            other => other.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        let a4 = |reason: String| Error::Assumption {
            assumption: Assumption::A4,
            reason,
        };
        match self {
            LevyMeasure::PointMasses { atoms } => {
                for [z, w] in atoms {
                    if !z.is_finite() || *z == 0.0 {
                        return Err(a4(format!("atom location {z} must be finite and nonzero")));
                    }
                    if !w.is_finite() || *w < 0.0 {
                        return Err(a4(format!(
                            "atom weight {w} must be finite and nonnegative"
                        )));
                    }
                }
            }
            LevyMeasure::PowerLaw {
                scale,
                alpha,
                eps,
                z_max,
            } => {
                if !(scale.is_finite() && *scale >= 0.0) {
                    return Err(a4(format!("scale {scale} must be finite and nonnegative")));
                }
                if !(alpha.is_finite() && *alpha < 2.0) {
                    return Err(a4(format!(
                        "alpha {alpha} must be below 2 for 1 ^ z^2 to be integrable"
                    )));
                }
                if !(eps.is_finite() && *eps >= 0.0 && z_max.is_finite() && z_max > eps) {
                    return Err(a4(format!(
                        "need 0 <= eps < z_max, got eps={eps}, z_max={z_max}"
                    )));
                }
                if *eps == 0.0 && *alpha >= 0.0 && *scale > 0.0 {
                    return Err(Error::InfiniteMass(format!(
                        "power law with alpha={alpha} needs a positive truncation eps"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Quadrature `(z_q, w_q)` representing the (truncated) measure.
    fn quadrature(&self) -> Vec<(f64, f64)> {
        match self {
            LevyMeasure::PointMasses { atoms } => atoms.iter().map(|[z, w]| (*z, *w)).collect(),
            LevyMeasure::PowerLaw {
                scale,
                alpha,
                eps,
                z_max,
            } => {
                let density = |z: f64| scale * z.powf(-1.0 - alpha);
                let n = QUADRATURE_NODES;
                let mut half = Vec::with_capacity(n);
                if *eps > 0.0 {
                    // midpoint rule in log z
                    let (s0, s1) = (eps.ln(), z_max.ln());
                    let ds = (s1 - s0) / n as f64;
                    for q in 0..n {
                        let z = (s0 + (q as f64 + 0.5) * ds).exp();
                        half.push((z, density(z) * z * ds));
                    }
                } else {
                    let dz = z_max / n as f64;
                    for q in 0..n {
                        let z = (q as f64 + 0.5) * dz;
                        half.push((z, density(z) * dz));
                    }
                }
                half.iter()
                    .map(|&(z, w)| (-z, w))
                    .chain(half.iter().copied())
                    .collect()
            }
        }
    }
}

/// Amplitude `a(u)` of a product-form noise coefficient `a(u) · (1 ∧ |z|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseCoefficient {
    Zero,
    /// `a(u) = coef · u`
    Linear {
        coef: f64,
    },
    /// `a(u) = coef · sin(u)`
    Sine {
        coef: f64,
    },
}

impl NoiseCoefficient {
    #[inline]
    pub fn amplitude(&self, u: f64) -> f64 {
        match *self {
            NoiseCoefficient::Zero => 0.0,
            NoiseCoefficient::Linear { coef } => coef * u,
            NoiseCoefficient::Sine { coef } => coef * u.sin(),
        }
    }

    /// Lipschitz constant of the amplitude.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            NoiseCoefficient::Zero => 0.0,
            NoiseCoefficient::Linear { coef } | NoiseCoefficient::Sine { coef } => coef.abs(),
        }
    }
}

#[inline]
pub fn mark_factor(z: f64) -> f64 {
    z.abs().min(1.0)
}

#[derive(Debug, Clone)]
pub struct LevyModel {
    measure: LevyMeasure,
    eta: NoiseCoefficient,
    lambda_star: f64,
    quadrature: Vec<(f64, f64)>,
    total_mass: f64,
    /// `∫ (1 ∧ |z|) m(dz)`, the compensator moment.
    first_moment: f64,
    c_eta: f64,
    sampler: Option<WeightedIndex<f64>>,
}

impl LevyModel {
    pub fn new(measure: LevyMeasure, eta: NoiseCoefficient, lambda_star: f64) -> Result<Self> {
        let a3 = |reason: String| Error::Assumption {
            assumption: Assumption::A3,
            reason,
        };
        if !(lambda_star > 0.0 && lambda_star < 1.0) {
            return Err(a3(format!("lambda* = {lambda_star} not in (0, 1)")));
        }
        if !eta.lipschitz().is_finite() || eta.lipschitz() > lambda_star {
            return Err(a3(format!(
                "noise coefficient has Lipschitz constant {} > lambda* = {lambda_star}",
                eta.lipschitz()
            )));
        }
        measure.validate()?;

        let quadrature = measure.quadrature();
        let total_mass: f64 = quadrature.iter().map(|q| q.1).sum();
        let first_moment = quadrature.iter().map(|&(z, w)| w * mark_factor(z)).sum();
        let c_eta: f64 = quadrature
            .iter()
            .map(|&(z, w)| w * z.abs().min(1.0).powi(2))
            .sum();
        if !total_mass.is_finite() {
            return Err(Error::InfiniteMass(format!("total mass {total_mass}")));
        }
        if !c_eta.is_finite() {
            return Err(Error::Assumption {
                assumption: Assumption::A4,
                reason: format!("c_eta = {c_eta} is not finite"),
            });
        }
        let sampler = match &measure {
            LevyMeasure::PointMasses { atoms } if total_mass > 0.0 => Some(
                WeightedIndex::new(atoms.iter().map(|a| a[1]))
                    .map_err(|e| Error::param("atoms", e.to_string()))?,
            ),
            _ => None,
        };

        let model = Self {
            measure,
            eta,
            lambda_star,
            quadrature,
            total_mass,
            first_moment,
            c_eta,
            sampler,
        };
        model.spot_check()?;
        Ok(model)
    }

    /// Randomised check of the noise-coefficient hypotheses.
    fn spot_check(&self) -> Result<()> {
        let a3 = |reason: String| Error::Assumption {
            assumption: Assumption::A3,
            reason,
        };
        for i in 0..=40 {
            let z = -4.0 + 0.2 * i as f64;
            if self.eta(0.0, z) != 0.0 {
                return Err(a3(format!("eta(0; {z}) = {} != 0", self.eta(0.0, z))));
            }
        }
        let mut rng = stream_rng(0x5EED, 0);
        for _ in 0..1000 {
            let u: f64 = rng.random_range(-10.0..10.0);
            let v: f64 = rng.random_range(-10.0..10.0);
            let z: f64 = rng.random_range(-5.0..5.0);
            let lhs = (self.eta(u, z) - self.eta(v, z)).abs();
            let rhs = self.lambda_star * (u - v).abs() * mark_factor(z);
            if lhs > rhs * (1.0 + 1e-12) + 1e-15 {
                return Err(a3(format!("Lipschitz bound fails at u={u}, v={v}, z={z}")));
            }
        }
        Ok(())
    }

    pub fn measure(&self) -> &LevyMeasure {
        &self.measure
    }

    pub fn noise(&self) -> NoiseCoefficient {
        self.eta
    }

    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    pub fn c_eta(&self) -> f64 {
        self.c_eta
    }

    /// Mass of the truncated measure, the jump rate.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn truncation(&self) -> f64 {
        self.measure.truncation()
    }

    pub fn quadrature(&self) -> &[(f64, f64)] {
        &self.quadrature
    }

    #[inline]
    pub fn eta(&self, u: f64, z: f64) -> f64 {
        self.eta.amplitude(u) * mark_factor(z)
    }

    /// `∫ η(u; z) m(dz)`.
    #[inline]
    pub fn compensator(&self, u: f64) -> f64 {
        self.eta.amplitude(u) * self.first_moment
    }

    /// `∫ η(u; z)² m(dz)`.
    pub fn squared_intensity(&self, u: f64) -> f64 {
        self.eta.amplitude(u).powi(2) * self.c_eta
    }

    /// Same model with a different small-jump cutoff.
    pub fn with_truncation(&self, eps: f64) -> Result<Self> {
        Self::new(
            self.measure.with_truncation(eps),
            self.eta,
            self.lambda_star,
        )
    }

    fn sample_mark(&self, rng: &mut ChaCha8Rng) -> f64 {
        match &self.measure {
            LevyMeasure::PointMasses { atoms } => {
                let idx = self.sampler.as_ref().expect("positive mass").sample(rng);
                atoms[idx][0]
            }
            LevyMeasure::PowerLaw {
                alpha, eps, z_max, ..
            } => {
                let u: f64 = rng.random();
                let mag = if *alpha == 0.0 {
                    eps * (z_max / eps).powf(u)
                } else {
                    let lo = eps.powf(-alpha);
                    let hi = z_max.powf(-alpha);
                    (lo - u * (lo - hi)).powf(-1.0 / alpha)
                };
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: f64,
}

/// One realisation of the Poisson random measure on `[0, T]`, grouped by
/// time step.
#[derive(Debug, Clone, PartialEq)]
pub struct PrmPath {
    seed: u64,
    dt: f64,
    truncation: f64,
    steps: Vec<Vec<JumpEvent>>,
}

impl PrmPath {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Jumps in `(t_k, t_{k+1}]`.
    pub fn jumps(&self, k: usize) -> &[JumpEvent] {
        &self.steps[k]
    }

    pub fn jump_count(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.iter().all(Vec::is_empty)
    }

    /// Drops jumps with `|z| < eps`: the exact coupling between truncation
    /// levels of the same measure.
    pub fn thinned(&self, eps: f64) -> PrmPath {
        PrmPath {
            seed: self.seed,
            dt: self.dt,
            truncation: self.truncation.max(eps),
            steps: self
                .steps
                .iter()
                .map(|s| s.iter().copied().filter(|j| j.mark.abs() >= eps).collect())
                .collect(),
        }
    }

    /// The same realisation on steps `factor` times longer. `factor` must
    /// divide the step count.
    pub(crate) fn coarsened(&self, factor: usize) -> PrmPath {
        PrmPath {
            seed: self.seed,
            dt: self.dt * factor as f64,
            truncation: self.truncation,
            steps: self.steps.chunks(factor).map(|c| c.concat()).collect(),
        }
    }
}

/// Number of steps `T / dt`, which must be an integer.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::param(
            "T",
            format!("must be nonnegative, got {t_final}"),
        ));
    }
    let n = (t_final / dt).round();
    if (n * dt - t_final).abs() > 1e-9 * t_final.max(dt) {
        return Err(Error::param(
            "dt",
            format!("T = {t_final} is not an integer multiple of dt = {dt}"),
        ));
    }
    Ok(n as usize)
}

/// Samples the compound-Poisson realisation of the truncated measure on
/// `[0, T]`. Step `k` draws from its own random stream of `seed`.
pub fn sample_prm(model: &LevyModel, t_final: f64, dt: f64, seed: u64) -> Result<PrmPath> {
    let n = step_count(t_final, dt)?;
    let rate = model.total_mass() * dt;
    let poisson = if rate > 0.0 {
        Some(Poisson::new(rate).map_err(|e| Error::InfiniteMass(e.to_string()))?)
    } else {
        None
    };
    let steps = (0..n)
        .map(|k| {
            let Some(poisson) = &poisson else {
                return Vec::new();
            };
            let mut rng = stream_rng(seed, k as u64);
            let count = poisson.sample(&mut rng) as usize;
            let t0 = k as f64 * dt;
            let mut events: Vec<JumpEvent> = (0..count)
                .map(|_| {
                    let offset: f64 = rng.random();
                    let mark = model.sample_mark(&mut rng);
                    JumpEvent {
                        time: t0 + dt * (1.0 - offset),
                        mark,
                    }
                })
                .collect();
            events.sort_by(|a, b| a.time.total_cmp(&b.time));
            events
        })
        .collect();
    Ok(PrmPath {
        seed,
        dt,
        truncation: model.truncation(),
        steps,
    })
}

/// `∫_{t_k}^{t_{k+1}} ∫ η(u; z) Ñ(dz, dt)` at every node: the jump sum minus
/// `dt` times the compensator. Boundary values are zero.
pub fn compensated_increment(
    model: &LevyModel,
    u: &Field,
    path: &PrmPath,
    k: usize,
) -> Result<Field> {
    if k >= path.n_steps() {
        return Err(Error::param(
            "k",
            format!("step {k} outside path with {} steps", path.n_steps()),
        ));
    }
    let grid = *u.grid();
    let jump_sum: f64 = path.jumps(k).iter().map(|j| mark_factor(j.mark)).sum();
    let weight = jump_sum - path.dt() * model.first_moment;
    let values = u
        .values()
        .iter()
        .enumerate()
        .map(|(node, &v)| {
            if grid.is_boundary(node) {
                0.0
            } else {
                model.noise().amplitude(v) * weight
            }
        })
        .collect();
    Ok(Field::from_raw(grid, values, Space::ZeroBoundary))
}
