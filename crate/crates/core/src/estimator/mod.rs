//! Least-squares log-density gradient estimation.
//!
//! Everything a solver needs is in [`SufficientStats`]: per dimension,
//! `G_j = (1/n) Σ ψ_j(x_i) ψ_j(x_i)ᵀ` and `h_j = (1/n) Σ ∂_jψ_j(x_i)`.
//! The multi-task objective over the stacked coefficients is
//!
//! ```text
//! J(θ) = Σ_j (θ_jᵀ G_j θ_j + 2 θ_jᵀ h_j + λ ‖θ_j‖²) + ½ γ Σ_{j,j'} γ_{j,j'} ‖θ_j − θ_{j'}‖²
//! ```
//!
//! with `γ = 0` decoupling into independent ridge problems and `γ → ∞`
//! forcing a single shared coefficient vector.

mod format;
mod model;
mod solvers;
mod stats;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use format::{load_model, read_model, save_model, write_model, MODEL_FORMAT_VERSION};
pub use model::GradientModel;
pub use solvers::{
    common_objective, mt_objective, single_objective, solve_common, solve_mt_analytic,
    solve_mt_bcd, solve_mt_dense, solve_single, BcdOptions, BcdSolution, SpectralStats,
    DENSE_SIZE_LIMIT,
};
pub use stats::{compute_stats, compute_stats_rows, SufficientStats};

/// Which parameterization the coefficients were fitted under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Per-dimension coefficients coupled by `γ` (single-task at `γ = 0`).
    MultiTask,
    /// One coefficient vector shared by every dimension, with ridge `λ`.
    Common,
}

/// Coefficients, `d × b`; row `j` is `θ_j`.
pub type Theta = DMatrix<f64>;

/// Multi-task weight. `Infinite` stands for the fully shared limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "f64", from = "f64")]
pub enum Gamma {
    Finite(f64),
    Infinite,
}

impl Gamma {
    /// Checked constructor; `f64::INFINITY` maps to [`Gamma::Infinite`].
    pub fn new(v: f64) -> Result<Self> {
        if v.is_nan() || v < 0.0 {
            Err(Error::invalid(format!("gamma must be >= 0, got {v}")))
        } else {
            Ok(v.into())
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Gamma::Finite(g) => g,
            Gamma::Infinite => f64::INFINITY,
        }
    }

    pub fn is_zero(self) -> bool {
        self == Gamma::Finite(0.0)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Gamma::Finite(g) => Some(g),
            Gamma::Infinite => None,
        }
    }
}

impl From<f64> for Gamma {
    fn from(v: f64) -> Self {
        if v == f64::INFINITY {
            Gamma::Infinite
        } else {
            Gamma::Finite(v)
        }
    }
}

impl From<Gamma> for f64 {
    fn from(g: Gamma) -> f64 {
        g.as_f64()
    }
}

impl PartialOrd for Gamma {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.as_f64().partial_cmp(&other.as_f64())
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Finite(g) => write!(f, "{g}"),
            Gamma::Infinite => f.write_str("inf"),
        }
    }
}

/// Tied bandwidth `σ`, tied ridge `λ`, multi-task weight `γ` and the task
/// similarity matrix `Γ` (symmetric, nonnegative, zero diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub sigma: f64,
    pub lambda: f64,
    pub gamma: Gamma,
    similarity: DMatrix<f64>,
}

impl HyperParams {
    pub fn new(sigma: f64, lambda: f64, gamma: Gamma, similarity: DMatrix<f64>) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        if let Gamma::Finite(g) = gamma {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(Error::invalid(format!("gamma must be >= 0, got {g}")));
            }
        }
        validate_similarity(&similarity)?;
        Ok(Self {
            sigma,
            lambda,
            gamma,
            similarity,
        })
    }

    /// `γ_{j,j'} = 1` for all `j ≠ j'`.
    pub fn uniform(sigma: f64, lambda: f64, gamma: Gamma, d: usize) -> Result<Self> {
        Self::new(sigma, lambda, gamma, uniform_similarity(d))
    }

    pub fn similarity(&self) -> &DMatrix<f64> {
        &self.similarity
    }

    pub fn dim(&self) -> usize {
        self.similarity.nrows()
    }

    pub fn with_gamma(&self, gamma: Gamma) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }
}

pub fn uniform_similarity(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if i == j { 0.0 } else { 1.0 })
}

fn validate_similarity(s: &DMatrix<f64>) -> Result<()> {
    if s.nrows() != s.ncols() || s.nrows() == 0 {
        return Err(Error::invalid("similarity matrix must be square and nonempty"));
    }
    for i in 0..s.nrows() {
        if s[(i, i)] != 0.0 {
            return Err(Error::invalid("similarity matrix must have a zero diagonal"));
        }
        for j in 0..s.ncols() {
            let v = s[(i, j)];
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid("similarity entries must be finite and >= 0"));
            }
            if v != s[(j, i)] {
                return Err(Error::invalid("similarity matrix must be symmetric"));
            }
        }
    }
    Ok(())
}

/// The common off-diagonal value when every `γ_{j,j'}` (`j ≠ j'`) is equal.
pub(crate) fn uniform_value(s: &DMatrix<f64>) -> Option<f64> {
    let d = s.nrows();
    if d < 2 {
        return Some(0.0);
    }
    let c = s[(0, 1)];
    let uniform = (0..d).all(|i| (0..d).all(|j| i == j || s[(i, j)] == c));
    uniform.then_some(c)
}
