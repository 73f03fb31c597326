//! Cost functional of the initial-value control problem
//!
//! `J(U) = E[∫_0^T ‖u(t) - u_tar(t)‖² dt + ‖U‖^p_{W^{1,p}} + Ψ(u(T))]`
//!
//! and its sample-average minimisation over a finite control basis with
//! common random numbers.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::simulate_ensemble;
use crate::grid::{self, Field, Grid, Space};
use crate::levy::LevyModel;
use crate::rng::stream_rng;
use crate::scheme::{SchemeConfig, Trajectory};

/// Lipschitz terminal payoff `Ψ` on `L²(D)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalPayoff {
    #[default]
    Zero,
    /// `Ψ(v) = weight · min(‖v‖_{L²}, cap)`
    ClippedL2 { weight: f64, cap: f64 },
}

impl TerminalPayoff {
    pub fn value(&self, v: &Field) -> f64 {
        match *self {
            TerminalPayoff::Zero => 0.0,
            TerminalPayoff::ClippedL2 { weight, cap } => weight * grid::l2_norm(v).min(cap),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            TerminalPayoff::Zero => 0.0,
            TerminalPayoff::ClippedL2 { weight, .. } => weight.abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let TerminalPayoff::ClippedL2 { weight, cap } = *self {
            if !weight.is_finite() || weight < 0.0 {
                return Err(Error::param("psi.weight", "must be finite and nonnegative"));
            }
            if !(cap > 0.0) {
                return Err(Error::param("psi.cap", "must be positive"));
            }
        }
        Ok(())
    }

    /// Largest difference quotient `|Ψ(v) - Ψ(w)| / ‖v - w‖` over random
    /// field pairs; errors if it exceeds the declared constant.
    pub fn check_lipschitz(&self, grid: Grid, pairs: usize, seed: u64) -> Result<f64> {
        let mut rng = stream_rng(seed, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let scale = 10f64.powf(rng.random_range(-2.0..2.0));
            let mut draw = || {
                let vals = (0..grid.n_nodes())
                    .map(|k| {
                        if grid.is_boundary(k) {
                            0.0
                        } else {
                            scale * rng.random_range(-1.0..1.0)
                        }
                    })
                    .collect();
                Field::from_raw(grid, vals, Space::ZeroBoundary)
            };
            let (v, w) = (draw(), draw());
            let dist = grid::l2_norm(&v.sub(&w)?);
            if dist > 0.0 {
                worst = worst.max((self.value(&v) - self.value(&w)).abs() / dist);
            }
        }
        if worst > self.lipschitz() * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::param(
                "psi",
                format!(
                    "observed Lipschitz ratio {worst} exceeds {}",
                    self.lipschitz()
                ),
            ));
        }
        Ok(worst)
    }
}

/// Target profile on the scheme's time grid and terminal payoff.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    u_tar: Vec<Field>,
    psi: TerminalPayoff,
}

impl CostSpec {
    /// `u_tar[k]` is the target at `t_k`, `k = 0..=N`.
    pub fn new(u_tar: Vec<Field>, psi: TerminalPayoff) -> Result<Self> {
        psi.validate()?;
        let first = u_tar
            .first()
            .ok_or_else(|| Error::param("u_tar", "needs at least one time point"))?;
        for (k, f) in u_tar.iter().enumerate() {
            if f.grid() != first.grid() {
                return Err(Error::GridMismatch);
            }
            if f.space() != Space::ZeroBoundary {
                return Err(Error::InvalidField(format!(
                    "target at step {k} must vanish on the boundary"
                )));
            }
        }
        Ok(Self { u_tar, psi })
    }

    /// The same target at every one of `n_steps + 1` time points.
    pub fn constant(target: Field, n_steps: usize, psi: TerminalPayoff) -> Result<Self> {
        Self::new(vec![target; n_steps + 1], psi)
    }

    /// Pathwise mean of an ensemble, as a target.
    pub fn from_ensemble(trajs: &[Trajectory], psi: TerminalPayoff) -> Result<Self> {
        let first = trajs.first().ok_or(Error::EmptyEnsemble)?;
        let inv = 1.0 / trajs.len() as f64;
        let u_tar = (0..first.hats().len())
            .map(|k| {
                let mut acc = Field::zeros(*first.hats()[k].grid(), Space::ZeroBoundary);
                for t in trajs {
                    acc = acc.add(&t.hats()[k])?;
                }
                Ok(acc.scaled(inv).project_zero_boundary())
            })
            .collect::<Result<_>>()?;
        Self::new(u_tar, psi)
    }

    pub fn u_tar(&self) -> &[Field] {
        &self.u_tar
    }

    pub fn psi(&self) -> TerminalPayoff {
        self.psi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub tracking: f64,
    pub control: f64,
    pub terminal: f64,
    pub total: f64,
}

fn tracking_term(hats: &[Field], dt: f64, u_tar: &[Field]) -> Result<f64> {
    let mut acc = 0.0;
    for (u, tar) in hats[1..].iter().zip(&u_tar[1..]) {
        acc += grid::l2_norm(&u.sub(tar)?).powi(2);
    }
    Ok(dt * acc)
}

/// Monte Carlo value of `J` on an ensemble generated with control `u_ctrl`.
/// The tracking integral uses the right-endpoint rule on the scheme grid.
pub fn cost_j(trajs: &[Trajectory], u_ctrl: &Field, spec: &CostSpec) -> Result<CostBreakdown> {
    let first = trajs.first().ok_or(Error::EmptyEnsemble)?;
    let p = first.config().p;
    let mut tracking = 0.0;
    let mut terminal = 0.0;
    for t in trajs {
        if t.hats().len() != spec.u_tar.len() {
            return Err(Error::Inconsistent(format!(
                "target has {} time points, trajectory has {}",
                spec.u_tar.len(),
                t.hats().len()
            )));
        }
        tracking += tracking_term(t.hats(), t.dt(), &spec.u_tar)?;
        terminal += spec.psi.value(&t.hats()[t.n_steps()]);
    }
    let n = trajs.len() as f64;
    let tracking = tracking / n;
    let terminal = terminal / n;
    let control = grid::w1p_norm_pow(u_ctrl, p)?;
    Ok(CostBreakdown {
        tracking,
        control,
        terminal,
        total: tracking + control + terminal,
    })
}

/// Named families of smooth basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisPreset {
    /// `sin(iπx)` (times `sin(jπy)` in 2D), `1 ≤ i, j ≤ modes`.
    SineModes { modes: usize },
    /// `cos(iπx)` (times `cos(jπy)` in 2D), `0 ≤ i, j < modes`.
    CosineModes { modes: usize },
}

/// Linearly independent control directions `φ_j`; `U(c) = Σ c_j φ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBasis {
    fields: Vec<Field>,
}

impl ControlBasis {
    /// Rejects empty, mixed-grid or (numerically) dependent families.
    pub fn new(fields: Vec<Field>) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::param("basis", "must not be empty"))?;
        if fields.iter().any(|f| f.grid() != first.grid()) {
            return Err(Error::GridMismatch);
        }
        let m = fields.len();
        let mut gram = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let g = grid::l2_inner(&fields[i], &fields[j])?;
                gram[(i, j)] = g;
                gram[(j, i)] = g;
            }
        }
        let scale = (0..m).map(|i| gram[(i, i)]).fold(0.0, f64::max);
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::param("basis", "Gram matrix is not positive definite"))?;
        let min_pivot = chol
            .l()
            .diagonal()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b * b));
        if !(min_pivot > 1e-12 * scale) {
            return Err(Error::param("basis", "functions are numerically dependent"));
        }
        Ok(Self { fields })
    }

    pub fn preset(grid: Grid, preset: BasisPreset) -> Result<Self> {
        use std::f64::consts::PI;
        let (range, space, trig): (Vec<usize>, Space, fn(f64) -> f64) = match preset {
            BasisPreset::SineModes { modes } => {
                ((1..=modes).collect(), Space::ZeroBoundary, f64::sin)
            }
            BasisPreset::CosineModes { modes } => {
                ((0..modes).collect(), Space::FreeBoundary, f64::cos)
            }
        };
        let mut fields = Vec::new();
        if grid.dim() == 1 {
            for &i in &range {
                fields.push(Field::from_fn(grid, space, |x| trig(i as f64 * PI * x[0])));
            }
        } else {
            for &j in &range {
                for &i in &range {
                    fields.push(Field::from_fn(grid, space, |x| {
                        trig(i as f64 * PI * x[0]) * trig(j as f64 * PI * x[1])
                    }));
                }
            }
        }
        Self::new(fields)
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn grid(&self) -> &Grid {
        self.fields[0].grid()
    }

    pub fn combine(&self, coeffs: &[f64]) -> Result<Field> {
        if coeffs.len() != self.fields.len() {
            return Err(Error::param(
                "coeffs",
                format!(
                    "expected {} coefficients, got {}",
                    self.fields.len(),
                    coeffs.len()
                ),
            ));
        }
        let space = if self.fields.iter().all(|f| f.space() == Space::ZeroBoundary) {
            Space::ZeroBoundary
        } else {
            Space::FreeBoundary
        };
        let mut values = vec![0.0; self.grid().n_nodes()];
        for (c, f) in coeffs.iter().zip(&self.fields) {
            for (v, x) in values.iter_mut().zip(f.values()) {
                *v += c * x;
            }
        }
        Ok(Field::from_raw(*self.grid(), values, space))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaaOptions {
    /// Objective evaluations, including the one at `coeffs = 0`.
    pub budget: usize,
    pub restarts: usize,
    /// Initial simplex edge length.
    pub initial_step: f64,
    /// Simplex diameter below which a run counts as converged.
    pub x_tol: f64,
}

impl Default for SaaOptions {
    fn default() -> Self {
        Self {
            budget: 200,
            restarts: 3,
            initial_step: 0.5,
            x_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaaResult {
    pub best_coeffs: Vec<f64>,
    pub best_j: f64,
    pub best_breakdown: Option<CostBreakdown>,
    /// Best value found after each evaluation.
    #[serde(rename = "J_history")]
    pub j_history: Vec<f64>,
    pub n_paths: usize,
    pub common_seeds: Vec<u64>,
    pub evaluations: usize,
    /// Candidates whose step solve failed and were scored `+∞`.
    pub failed_evaluations: usize,
}

struct Objective<'a> {
    model: &'a LevyModel,
    cfg: &'a SchemeConfig,
    u0: &'a Field,
    spec: &'a CostSpec,
    basis: &'a ControlBasis,
    seeds: &'a [u64],
    budget: usize,
    history: Vec<f64>,
    best: (Vec<f64>, f64, Option<CostBreakdown>),
    failed: usize,
}

impl Objective<'_> {
    fn exhausted(&self) -> bool {
        self.history.len() >= self.budget
    }

    fn eval(&mut self, c: &[f64]) -> Result<f64> {
        let u = self.basis.combine(c)?;
        let (value, breakdown) =
            match simulate_ensemble(self.u0, &u, self.model, self.cfg, self.seeds) {
                Ok(trajs) => {
                    let b = cost_j(&trajs, &u, self.spec)?;
                    (b.total, Some(b))
                }
                Err(Error::NonConvergence { .. }) => {
                    self.failed += 1;
                    (f64::INFINITY, None)
                }
                Err(e) => return Err(e),
            };
        if value < self.best.1 {
            self.best = (c.to_vec(), value, breakdown);
        }
        self.history.push(self.best.1);
        Ok(value)
    }
}

/// Sample-average minimisation of `J` over `U = Σ c_j φ_j` by a restarted
/// Nelder-Mead search. Every candidate is evaluated on the same noise paths,
/// one per seed, and `coeffs = 0` is always evaluated first.
pub fn saa_minimize(
    model: &LevyModel,
    cfg: &SchemeConfig,
    u0: &Field,
    spec: &CostSpec,
    basis: &ControlBasis,
    seeds: &[u64],
    opts: &SaaOptions,
) -> Result<SaaResult> {
    let dim = basis.len();
    if seeds.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if opts.budget < dim + 1 {
        return Err(Error::param(
            "budget",
            format!(
                "need at least {} evaluations for {dim} coefficients",
                dim + 1
            ),
        ));
    }
    if !(opts.initial_step > 0.0) {
        return Err(Error::param("initial_step", "must be positive"));
    }
    if spec.u_tar.len() != cfg.n_steps + 1 {
        return Err(Error::Inconsistent(format!(
            "target has {} time points, scheme has {}",
            spec.u_tar.len(),
            cfg.n_steps + 1
        )));
    }

    let mut obj = Objective {
        model,
        cfg,
        u0,
        spec,
        basis,
        seeds,
        budget: opts.budget,
        history: Vec::with_capacity(opts.budget),
        best: (vec![0.0; dim], f64::INFINITY, None),
        failed: 0,
    };
    let origin = vec![0.0; dim];
    obj.eval(&origin)?;

    let mut step = opts.initial_step;
    for _ in 0..=opts.restarts {
        if obj.exhausted() {
            break;
        }
        let start = obj.best.0.clone();
        let start_value = obj.best.1;
        nelder_mead(&mut obj, &start, start_value, step, opts.x_tol)?;
        step *= 0.5;
    }

    let evaluations = obj.history.len();
    Ok(SaaResult {
        best_coeffs: obj.best.0,
        best_j: obj.best.1,
        best_breakdown: obj.best.2,
        j_history: obj.history,
        n_paths: seeds.len(),
        common_seeds: seeds.to_vec(),
        evaluations,
        failed_evaluations: obj.failed,
    })
}

fn nelder_mead(
    obj: &mut Objective,
    start: &[f64],
    start_value: f64,
    step: f64,
    x_tol: f64,
) -> Result<()> {
    let dim = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.to_vec(), start_value)];
    for i in 0..dim {
        if obj.exhausted() {
            return Ok(());
        }
        let mut x = start.to_vec();
        x[i] += step;
        let f = obj.eval(&x)?;
        simplex.push((x, f));
    }

    let point = |c: &[f64], x: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(x).map(|(a, b)| a + t * (b - a)).collect()
    };

    while !obj.exhausted() {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < x_tol {
            break;
        }
        let worst = simplex[dim].clone();
        let centroid: Vec<f64> = (0..dim)
            .map(|i| simplex[..dim].iter().map(|(x, _)| x[i]).sum::<f64>() / dim as f64)
            .collect();

        let reflected = point(&centroid, &worst.0, -1.0);
        let fr = obj.eval(&reflected)?;
        if fr < simplex[0].1 {
            if obj.exhausted() {
                simplex[dim] = (reflected, fr);
                break;
            }
            let expanded = point(&centroid, &worst.0, -2.0);
            let fe = obj.eval(&expanded)?;
            simplex[dim] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
            continue;
        }
        if obj.exhausted() {
            break;
        }
        let (contracted, fc) = if fr < worst.1 {
            let x = point(&centroid, &worst.0, -0.5);
            let f = obj.eval(&x)?;
            (x, f)
        } else {
            let x = point(&centroid, &worst.0, 0.5);
            let f = obj.eval(&x)?;
            (x, f)
        };
        if fc < worst.1.min(fr) {
            simplex[dim] = (contracted, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            if obj.exhausted() {
                return Ok(());
            }
            let x = point(&best, &entry.0, 0.5);
            let f = obj.eval(&x)?;
            *entry = (x, f);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{LevyMeasure, NoiseCoefficient};
    use crate::scheme::simulate_path;

    fn quiet_model() -> LevyModel {
        LevyModel::new(LevyMeasure::point(1.0, 1.0), NoiseCoefficient::Zero, 0.5).unwrap()
    }

    #[test]
    fn payoff_lipschitz_constant_holds_on_random_pairs() {
        let grid = Grid::new(2, 6).unwrap();
        let psi = TerminalPayoff::ClippedL2 {
            weight: 2.0,
            cap: 0.3,
        };
        let ratio = psi.check_lipschitz(grid, 500, 5).unwrap();
        assert!(ratio <= 2.0 + 1e-12 && ratio > 0.5);
        assert_eq!(
            TerminalPayoff::Zero.check_lipschitz(grid, 10, 5).unwrap(),
            0.0
        );
    }

    #[test]
    fn dependent_basis_is_rejected() {
        let grid = Grid::new(1, 10).unwrap();
        let a = Field::from_fn(grid, Space::FreeBoundary, |x| x[0]);
        let b = a.scaled(2.0);
        assert!(ControlBasis::new(vec![a.clone(), b]).is_err());
        assert!(ControlBasis::new(vec![]).is_err());
        assert_eq!(
            ControlBasis::preset(grid, BasisPreset::CosineModes { modes: 3 })
                .unwrap()
                .len(),
            3
        );
        assert_eq!(
            ControlBasis::preset(
                Grid::new(2, 8).unwrap(),
                BasisPreset::SineModes { modes: 2 }
            )
            .unwrap()
            .len(),
            4
        );
    }

    #[test]
    fn tracking_of_constant_state_is_horizon_times_distance() {
        let grid = Grid::new(1, 10).unwrap();
        let u = Field::from_fn(grid, Space::ZeroBoundary, |x| x[0] * (1.0 - x[0]));
        let tar = Field::from_fn(grid, Space::ZeroBoundary, |x| {
            (std::f64::consts::PI * x[0]).sin()
        });
        let n = 8;
        let dt = 0.125;
        let hats = vec![u.clone(); n + 1];
        let got = tracking_term(&hats, dt, &vec![tar.clone(); n + 1]).unwrap();
        let want = n as f64 * dt * grid::l2_norm(&u.sub(&tar).unwrap()).powi(2);
        assert!((got - want).abs() <= 1e-14 * want);
    }

    #[test]
    fn control_term_alone_on_zero_dynamics() {
        let grid = Grid::new(1, 10).unwrap();
        let z = Field::zeros(grid, Space::ZeroBoundary);
        let cfg = SchemeConfig::new(3.0, 0.1, 5).unwrap();
        let trajs = vec![simulate_path(&z, &z, &quiet_model(), &cfg, 1).unwrap()];
        let spec = CostSpec::constant(z.clone(), 5, TerminalPayoff::Zero).unwrap();
        let one = Field::from_fn(grid, Space::FreeBoundary, |_| 1.0);
        let j = cost_j(&trajs, &one, &spec).unwrap();
        assert_eq!(j.tracking, 0.0);
        assert!((j.total - 1.0).abs() < 1e-12);
        let bad = CostSpec::constant(z, 4, TerminalPayoff::Zero).unwrap();
        assert!(matches!(
            cost_j(&trajs, &one, &bad),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn zero_problem_is_solved_at_the_origin() {
        let grid = Grid::new(1, 8).unwrap();
        let z = Field::zeros(grid, Space::ZeroBoundary);
        let cfg = SchemeConfig::new(3.0, 0.1, 4).unwrap();
        let spec = CostSpec::constant(z.clone(), 4, TerminalPayoff::Zero).unwrap();
        let basis = ControlBasis::preset(grid, BasisPreset::SineModes { modes: 2 }).unwrap();
        let opts = SaaOptions {
            budget: 30,
            ..Default::default()
        };
        let r = saa_minimize(&quiet_model(), &cfg, &z, &spec, &basis, &[1, 2], &opts).unwrap();
        assert_eq!(r.best_j, 0.0);
        assert!(r.best_coeffs.iter().all(|c| *c == 0.0));
        assert_eq!(r.j_history.len(), 30);
        assert!(r.j_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn budget_below_simplex_size_is_rejected() {
        let grid = Grid::new(1, 8).unwrap();
        let z = Field::zeros(grid, Space::ZeroBoundary);
        let cfg = SchemeConfig::new(3.0, 0.1, 4).unwrap();
        let spec = CostSpec::constant(z.clone(), 4, TerminalPayoff::Zero).unwrap();
        let basis = ControlBasis::preset(grid, BasisPreset::SineModes { modes: 3 }).unwrap();
        let opts = SaaOptions {
            budget: 3,
            ..Default::default()
        };
        assert!(saa_minimize(&quiet_model(), &cfg, &z, &spec, &basis, &[1], &opts).is_err());
        let opts = SaaOptions::default();
        assert!(saa_minimize(&quiet_model(), &cfg, &z, &spec, &basis, &[], &opts).is_err());
    }
}
