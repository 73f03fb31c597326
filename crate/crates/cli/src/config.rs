//! Run configuration: a TOML file describing the grid, scheme, noise,
//! initial data, cost and per-command options.

use std::path::{Path, PathBuf};

use plevy::control::{BasisPreset, ControlBasis, CostSpec, TerminalPayoff};
use plevy::estimates::{simulate_ensemble, AldousOptions};
use plevy::grid::{Field, Grid, Space};
use plevy::levy::{LevyMeasure, LevyModel, NoiseCoefficient};
use plevy::rng::path_seeds;
use plevy::scheme::{ControlProjection, FluxModel, SchemeConfig, SolverOptions};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub scheme: SchemeSection,
    pub levy: LevySection,
    pub initial: InitialSection,
    #[serde(default)]
    pub cost: CostSection,
    pub run: RunSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub converge: ConvergeSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub n_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub p: f64,
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default = "default_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_iters")]
    pub newton_max_iters: usize,
    #[serde(default)]
    pub control_projection: ControlProjection,
    #[serde(default)]
    pub flux: FluxModel,
}

fn default_tol() -> f64 {
    SolverOptions::default().tol
}

fn default_max_iters() -> usize {
    SolverOptions::default().max_iters
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevySection {
    pub lambda_star: f64,
    /// Small-jump cutoff; overrides the one inside a power-law measure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub measure: LevyMeasure,
    pub eta: NoiseCoefficient,
}

/// Nodal initial datum `u0`, always projected onto the zero-boundary space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDatum {
    Zero,
    /// `amplitude · Π_i sin(π x_i)`
    Sine {
        amplitude: f64,
    },
    /// `amplitude · exp(-|x - center|² / width²)` with the same center on every axis.
    Bump {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// CSV file with a `value` column listing every node in row-major order.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisPreset>,
    /// Empty means the zero control.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub u0: InitialDatum,
    #[serde(default)]
    pub control: ControlSection,
}

/// Target profile `u_tar` of the tracking term.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetPreset {
    #[default]
    Zero,
    /// Time-constant `amplitude · Π_i sin(π x_i)`.
    Sine { amplitude: f64 },
    /// Mean trajectory of the control `Σ coeffs_j φ_j` on the run's seeds.
    Planted { coeffs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    #[serde(default)]
    pub target: TargetPreset,
    #[serde(default = "default_psi")]
    pub psi: TerminalPayoff,
}

fn default_psi() -> TerminalPayoff {
    TerminalPayoff::ClippedL2 {
        weight: 1.0,
        cap: 1.0,
    }
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            target: TargetPreset::Zero,
            psi: default_psi(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Increment lengths as multiples of `dt`; those above `T/2` are dropped.
    #[serde(default = "default_theta_multiples")]
    pub theta_multiples: Vec<usize>,
    /// Start times of the increments; defaults to `0, T/4, T/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taus: Option<Vec<f64>>,
    #[serde(default = "default_dual_iters")]
    pub dual_iters: usize,
    #[serde(default = "default_isometry_samples")]
    pub isometry_samples: usize,
    /// Step of the isometry check; defaults to the scheme step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isometry_dt: Option<f64>,
    /// Paths of the uniqueness check; defaults to `run.n_paths`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniqueness_paths: Option<usize>,
    /// The second initial datum is `uniqueness_scale · u0`.
    #[serde(default = "default_uniqueness_scale")]
    pub uniqueness_scale: f64,
    /// Constant against which the energy statistics are flagged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_c: Option<f64>,
}

fn default_theta_multiples() -> Vec<usize> {
    vec![32, 16, 8, 4, 2]
}

fn default_dual_iters() -> usize {
    30
}

fn default_isometry_samples() -> usize {
    100_000
}

fn default_uniqueness_scale() -> f64 {
    2.0
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            theta_multiples: default_theta_multiples(),
            taus: None,
            dual_iters: default_dual_iters(),
            isometry_samples: default_isometry_samples(),
            isometry_dt: None,
            uniqueness_paths: None,
            uniqueness_scale: default_uniqueness_scale(),
            reference_c: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_initial_step")]
    pub initial_step: f64,
}

fn default_budget() -> usize {
    200
}

fn default_restarts() -> usize {
    3
}

fn default_initial_step() -> f64 {
    0.5
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self {
            budget: default_budget(),
            restarts: default_restarts(),
            initial_step: default_initial_step(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    /// Step sizes of a `dt` sweep when none are given on the command line.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dts: Vec<f64>,
    /// Cutoffs of an `eps` sweep when none are given on the command line.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eps: Vec<f64>,
    /// The self-convergence reference runs at `min(dt) / refine`.
    #[serde(default = "default_refine")]
    pub refine: usize,
    #[serde(default = "default_gap_min_slope")]
    pub gap_min_slope: f64,
}

fn default_refine() -> usize {
    32
}

fn default_gap_min_slope() -> f64 {
    0.8
}

impl Default for ConvergeSection {
    fn default() -> Self {
        Self {
            dts: Vec::new(),
            eps: Vec::new(),
            refine: default_refine(),
            gap_min_slope: default_gap_min_slope(),
        }
    }
}

/// Everything a command needs, built and validated from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub grid: Grid,
    pub scheme: SchemeConfig,
    pub model: LevyModel,
    pub u0: Field,
    pub basis: Option<ControlBasis>,
    pub control: Field,
    pub seeds: Vec<u64>,
}

impl RunConfig {
    /// Reads a config file; relative data paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let InitialDatum::File { path: data } = &mut cfg.initial.u0 {
            if data.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                *data = base.join(&*data);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.scheme.newton_tol,
            max_iters: self.scheme.newton_max_iters,
        }
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig, CliError> {
        let mut cfg = SchemeConfig::new(self.scheme.p, self.scheme.dt, self.scheme.n_steps)
            .map_err(CliError::invalid)?
            .with_flux(self.scheme.flux);
        cfg.solver = self.solver_options();
        cfg.projection = self.scheme.control_projection;
        cfg.validate().map_err(CliError::invalid)?;
        Ok(cfg)
    }

    pub fn levy_model(&self) -> Result<LevyModel, CliError> {
        let mut measure = self.levy.measure.clone();
        if let Some(eps) = self.levy.eps {
            match measure {
                LevyMeasure::PowerLaw { .. } => measure = measure.with_truncation(eps),
                LevyMeasure::PointMasses { .. } => {
                    return Err(CliError::Config(
                        "levy.eps applies only to a power_law measure".into(),
                    ))
                }
            }
        }
        LevyModel::new(measure, self.levy.eta, self.levy.lambda_star).map_err(CliError::invalid)
    }

    /// Validates every section and builds the simulation inputs.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let grid = Grid::new(self.grid.dim, self.grid.n_cells).map_err(CliError::invalid)?;
        let scheme = self.scheme_config()?;
        let model = self.levy_model()?;
        let u0 = self.initial_datum(grid)?;
        let basis = self
            .initial
            .control
            .basis
            .map(|b| ControlBasis::preset(grid, b))
            .transpose()
            .map_err(CliError::invalid)?;
        let control = combine(basis.as_ref(), &self.initial.control.coeffs, grid)?;
        if self.run.n_paths == 0 {
            return Err(CliError::Config("run.n_paths must be positive".into()));
        }
        self.cost.psi.validate().map_err(CliError::invalid)?;
        Ok(Resolved {
            grid,
            scheme,
            model,
            u0,
            basis,
            control,
            seeds: path_seeds(self.run.seed, self.run.n_paths),
        })
    }

    fn initial_datum(&self, grid: Grid) -> Result<Field, CliError> {
        let sine = |a: f64| {
            Field::from_fn(grid, Space::ZeroBoundary, |x| {
                a * (0..grid.dim())
                    .map(|i| (std::f64::consts::PI * x[i]).sin())
                    .product::<f64>()
            })
        };
        let field = match &self.initial.u0 {
            InitialDatum::Zero => Field::zeros(grid, Space::ZeroBoundary),
            InitialDatum::Sine { amplitude } => sine(*amplitude),
            InitialDatum::Bump {
                amplitude,
                center,
                width,
            } => {
                if !(*width > 0.0) {
                    return Err(CliError::Config("initial.u0.width must be positive".into()));
                }
                Field::from_fn(grid, Space::FreeBoundary, |x| {
                    let r2: f64 = (0..grid.dim()).map(|i| (x[i] - center).powi(2)).sum();
                    amplitude * (-r2 / (width * width)).exp()
                })
                .project_zero_boundary()
            }
            InitialDatum::File { path } => read_nodal_csv(path, grid)?,
        };
        if let Some(k) = field.values().iter().position(|v| !v.is_finite()) {
            return Err(CliError::invalid(plevy::Error::Assumption {
                assumption: plevy::Assumption::A1,
                reason: format!("u0 is not finite at node {k}"),
            }));
        }
        Ok(field)
    }

    /// Increment lengths `θ = m · dt` with `θ ≤ T/2`, largest first.
    pub fn theta_grid(&self) -> Result<Vec<f64>, CliError> {
        let t_final = self.scheme.dt * self.scheme.n_steps as f64;
        let mut multiples = self.verify.theta_multiples.clone();
        multiples.sort_unstable_by(|a, b| b.cmp(a));
        multiples.dedup();
        let thetas: Vec<f64> = multiples
            .into_iter()
            .filter(|&m| m > 0)
            .map(|m| m as f64 * self.scheme.dt)
            .filter(|&th| th <= 0.5 * t_final * (1.0 + 1e-12))
            .collect();
        if thetas.len() < 4 {
            return Err(CliError::Config(format!(
                "verify.theta_multiples leaves {} increment lengths within T/2 = {}; need at least 4",
                thetas.len(),
                0.5 * t_final
            )));
        }
        Ok(thetas)
    }

    pub fn aldous_options(&self) -> AldousOptions {
        let t_final = self.scheme.dt * self.scheme.n_steps as f64;
        let mut opts = AldousOptions::for_horizon(t_final);
        if let Some(taus) = &self.verify.taus {
            opts.taus = taus.clone();
        }
        opts.dual_iters = self.verify.dual_iters;
        opts
    }

    /// Builds the cost specification, simulating the planted control when asked.
    pub fn cost_spec(&self, r: &Resolved) -> Result<CostSpec, CliError> {
        let n_steps = r.scheme.n_steps;
        let psi = self.cost.psi;
        match &self.cost.target {
            TargetPreset::Zero => {
                CostSpec::constant(Field::zeros(r.grid, Space::ZeroBoundary), n_steps, psi)
                    .map_err(CliError::invalid)
            }
            TargetPreset::Sine { amplitude } => {
                let a = *amplitude;
                let target = Field::from_fn(r.grid, Space::ZeroBoundary, |x| {
                    a * (0..r.grid.dim())
                        .map(|i| (std::f64::consts::PI * x[i]).sin())
                        .product::<f64>()
                });
                CostSpec::constant(target, n_steps, psi).map_err(CliError::invalid)
            }
            TargetPreset::Planted { coeffs } => {
                if r.basis.is_none() {
                    return Err(CliError::Config(
                        "cost.target planted needs initial.control.basis".into(),
                    ));
                }
                let planted = combine(r.basis.as_ref(), coeffs, r.grid)?;
                let trajs = simulate_ensemble(&r.u0, &planted, &r.model, &r.scheme, &r.seeds)?;
                CostSpec::from_ensemble(&trajs, psi).map_err(CliError::Run)
            }
        }
    }
}

fn combine(basis: Option<&ControlBasis>, coeffs: &[f64], grid: Grid) -> Result<Field, CliError> {
    match basis {
        Some(b) if coeffs.is_empty() => b.combine(&vec![0.0; b.len()]).map_err(CliError::invalid),
        Some(b) => b.combine(coeffs).map_err(CliError::invalid),
        None if coeffs.is_empty() => Ok(Field::zeros(grid, Space::ZeroBoundary)),
        None => Err(CliError::Config(
            "initial.control.coeffs given without initial.control.basis".into(),
        )),
    }
}

#[derive(Deserialize)]
struct NodalRow {
    value: f64,
}

fn read_nodal_csv(path: &Path, grid: Grid) -> Result<Field, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let values = reader
        .deserialize::<NodalRow>()
        .map(|row| row.map(|r| r.value))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if values.len() != grid.n_nodes() {
        return Err(CliError::Config(format!(
            "{} lists {} values, the grid has {} nodes",
            path.display(),
            values.len(),
            grid.n_nodes()
        )));
    }
    Ok(Field::new(grid, values, Space::FreeBoundary)
        .map_err(CliError::invalid)?
        .project_zero_boundary())
}
