use nalgebra::DMatrix;

use super::{HyperParams, Theta};
use crate::basis::BasisSpec;
use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use super::Estimator;

/// A fitted gradient field `ĝ_j(x) = θ_jᵀ ψ_j(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientModel {
    basis: BasisSpec,
    theta: Theta,
    hyper: Option<(HyperParams, Estimator)>,
}

/// Per-point kernel sums used by the fixed-point mode-seeking update:
/// `Σ_k θ_j⁽ᵏ⁾ φ_j⁽ᵏ⁾(x)` and `Σ_k θ_j⁽ᵏ⁾ c_k⁽ʲ⁾ φ_j⁽ᵏ⁾(x)` for every `j`.
pub(crate) struct KernelSums {
    pub weight: Vec<f64>,
    pub weighted_center: Vec<f64>,
}

impl GradientModel {
    pub fn new(basis: BasisSpec, theta: Theta) -> Result<Self> {
        if theta.shape() != (basis.dim(), basis.num_basis()) {
            return Err(Error::invalid(format!(
                "theta is {}×{}, basis needs {}×{}",
                theta.nrows(),
                theta.ncols(),
                basis.dim(),
                basis.num_basis()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta has non-finite entries"));
        }
        Ok(Self {
            basis,
            theta,
            hyper: None,
        })
    }

    /// Records the hyperparameters the coefficients were fitted with.
    pub fn with_hyper(mut self, hp: HyperParams, estimator: Estimator) -> Self {
        self.hyper = Some((hp, estimator));
        self
    }

    pub fn zeros(basis: BasisSpec) -> Self {
        let theta = Theta::zeros(basis.dim(), basis.num_basis());
        Self {
            basis,
            theta,
            hyper: None,
        }
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    pub fn hyper(&self) -> Option<&(HyperParams, Estimator)> {
        self.hyper.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `(ĝ(x), (∂_j ĝ_j(x))_j)`, sharing kernel evaluations.
    pub fn gradient_and_divergence(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(self.dim(), x.len())?;
        let d = self.dim();
        let sq = self.basis.sq_distances_unchecked(x);
        let (mut phi, mut psi, mut dpsi) = (Vec::new(), Vec::new(), Vec::new());
        let mut g = Vec::with_capacity(d);
        let mut dg = Vec::with_capacity(d);
        let mut last_sigma = f64::NAN;
        for j in 0..d {
            if self.basis.bandwidth(j) != last_sigma {
                self.basis.kernel_from_sq(j, &sq, &mut phi);
                last_sigma = self.basis.bandwidth(j);
            }
            self.basis.fill_derivatives(j, x, &phi, &mut psi, &mut dpsi);
            let row = self.theta.row(j);
            g.push(row.iter().zip(&psi).map(|(t, p)| t * p).sum());
            dg.push(row.iter().zip(&dpsi).map(|(t, p)| t * p).sum());
        }
        Ok((g, dg))
    }

    /// `ĝ(x)`, the estimated `∇log p(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.gradient_and_divergence(x)?.0)
    }

    /// `ĝ` at every row of `points`, as an `n × d` matrix.
    pub fn evaluate_batch(&self, points: &Dataset) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), points.d())?;
        let mut out = DMatrix::zeros(points.n(), self.dim());
        for (i, x) in points.rows().enumerate() {
            for (j, v) in self.evaluate(x)?.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    /// `θ_jᵀ φ_j(x)`: the log-density surrogate whose `x⁽ʲ⁾`-derivative is `ĝ_j`.
    pub fn log_density_partial(&self, j: usize, x: &[f64]) -> Result<f64> {
        let phi = self.basis.phi(j, x)?;
        Ok(self.theta.row(j).iter().zip(&phi).map(|(t, p)| t * p).sum())
    }

    pub(crate) fn kernel_sums(&self, x: &[f64]) -> KernelSums {
        let d = self.dim();
        let sq = self.basis.sq_distances_unchecked(x);
        let mut phi = Vec::new();
        let mut weight = Vec::with_capacity(d);
        let mut weighted_center = Vec::with_capacity(d);
        let mut last_sigma = f64::NAN;
        let centers = self.basis.centers();
        for j in 0..d {
            if self.basis.bandwidth(j) != last_sigma {
                self.basis.kernel_from_sq(j, &sq, &mut phi);
                last_sigma = self.basis.bandwidth(j);
            }
            let (mut w, mut wc) = (0.0, 0.0);
            for (k, (&t, &p)) in self.theta.row(j).iter().zip(&phi).enumerate() {
                w += t * p;
                wc += t * p * centers.center(k)[j];
            }
            weight.push(w);
            weighted_center.push(wc);
        }
        KernelSums {
            weight,
            weighted_center,
        }
    }
}
