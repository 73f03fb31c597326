use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field violates its space: {0}")]
    InvalidField(String),

    /// A modelling hypothesis on the flux, noise coefficient or Lévy measure failed.
    #[error("assumption {assumption} violated: {reason}")]
    Assumption {
        assumption: Assumption,
        reason: String,
    },

    #[error("truncated Lévy measure has infinite mass: {0}")]
    InfiniteMass(String),

    #[error(
        "nonlinear solve did not converge{} after {iterations} iterations (residual {residual:.3e})",
        step.map(|k| format!(" at step {k}")).unwrap_or_default()
    )]
    NonConvergence {
        /// Index `k` of the state `û_k` being computed; `0` is the initial approximation.
        step: Option<usize>,
        iterations: usize,
        residual: f64,
    },

    #[error("time {t} outside [0, {t_final}]")]
    TimeOutOfRange { t: f64, t_final: f64 },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Attach a time-step index to a solver failure.
    pub fn at_step(self, k: usize) -> Self {
        match self {
            Error::NonConvergence {
                iterations,
                residual,
                ..
            } => Error::NonConvergence {
                step: Some(k),
                iterations,
                residual,
            },
            other => other,
        }
    }
}

/// The model hypotheses checked when a configuration is loaded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// Initial datum is square integrable (finite nodal values).
    A1,
    /// Flux is Lipschitz with `f(0) = 0`.
    A2,
    /// Noise coefficient vanishes at zero and is `λ*`-Lipschitz with `0 < λ* < 1`.
    A3,
    /// Lévy measure integrates `1 ∧ z²`.
    A4,
    /// Exponent of the p-Laplacian exceeds two.
    Exponent,
}

impl std::fmt::Display for Assumption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Assumption::A1 => "A1 (initial datum in L2)",
            Assumption::A2 => "A2 (Lipschitz flux with f(0)=0)",
            Assumption::A3 => {
                "A3 (noise coefficient: eta(0;z)=0, Lipschitz constant lambda* in (0,1))"
            }
            Assumption::A4 => "A4 (Levy measure integrates 1 ^ z^2)",
            Assumption::Exponent => "p > 2",
        };
        f.write_str(s)
    }
}
