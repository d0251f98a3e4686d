//! Gaussian kernel vector `φ` and its partial derivatives.
//!
//! For center `c_k` and dimension `j` (bandwidth `σ_j`), with
//! `e = exp(−‖x − c_k‖² / (2σ_j²))` and `u = c_k⁽ʲ⁾ − x⁽ʲ⁾`:
//!
//! * `φ⁽ᵏ⁾     = e`
//! * `ψ_j⁽ᵏ⁾   = ∂_j φ⁽ᵏ⁾   = (u / σ_j²) e`
//! * `∂_j ψ_j⁽ᵏ⁾ = ∂_j² φ⁽ᵏ⁾ = (u² / σ_j⁴ − 1 / σ_j²) e`

use rand::seq::index;

use crate::data::{seeded_rng, Dataset, Stream};
use crate::error::{check_dim, Error, Result};

/// Kernel centers, one per row (`b × d`, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Centers {
    values: Vec<f64>,
    b: usize,
    d: usize,
}

impl Centers {
    pub fn from_row_major(b: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if b == 0 || d == 0 {
            return Err(Error::invalid("need at least one center of dimension >= 1"));
        }
        check_dim(b * d, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("center coordinates must be finite"));
        }
        Ok(Self { values, b, d })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * d);
        for r in rows {
            check_dim(d, r.as_ref().len())?;
            values.extend_from_slice(r.as_ref());
        }
        Self::from_row_major(rows.len(), d, values)
    }

    pub fn len(&self) -> usize {
        self.b
    }

    pub fn is_empty(&self) -> bool {
        self.b == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn center(&self, k: usize) -> &[f64] {
        &self.values[k * self.d..(k + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Uses one bandwidth for every dimension.
    pub fn with_bandwidth(self, sigma: f64) -> Result<BasisSpec> {
        let d = self.d;
        BasisSpec::new(self, vec![sigma; d])
    }
}

/// `b = min(b_max, n)` distinct data rows, drawn uniformly without replacement
/// in random order.
pub fn select_centers(data: &Dataset, b_max: usize, seed: u64) -> Result<Centers> {
    if b_max == 0 {
        return Err(Error::invalid("b_max must be >= 1"));
    }
    let b = b_max.min(data.n());
    let picks = index::sample(&mut seeded_rng(seed, Stream::Centers), data.n(), b);
    let mut values = Vec::with_capacity(b * data.d());
    for i in picks.iter() {
        values.extend_from_slice(data.row(i));
    }
    Centers::from_row_major(b, data.d(), values)
}

/// Centers plus per-dimension bandwidths `σ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    centers: Centers,
    bandwidths: Vec<f64>,
}

/// `φ_j`, `ψ_j` and `∂_jψ_j` at one point, sharing the kernel evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisValues {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub dpsi: Vec<f64>,
}

impl BasisSpec {
    pub fn new(centers: Centers, bandwidths: Vec<f64>) -> Result<Self> {
        check_dim(centers.dim(), bandwidths.len())?;
        if bandwidths.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("bandwidths must be positive and finite"));
        }
        Ok(Self {
            centers,
            bandwidths,
        })
    }

    pub fn centers(&self) -> &Centers {
        &self.centers
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn bandwidth(&self, j: usize) -> f64 {
        self.bandwidths[j]
    }

    pub fn num_basis(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers.dim()
    }

    /// `‖x − c_k‖²` for every center.
    pub fn sq_distances(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.sq_distances_unchecked(x))
    }

    pub(crate) fn sq_distances_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.centers
            .as_slice()
            .chunks_exact(self.dim())
            .map(|c| c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect()
    }

    /// Kernel values for dimension `j` given precomputed squared distances.
    pub(crate) fn kernel_from_sq(&self, j: usize, sq: &[f64], out: &mut Vec<f64>) {
        let inv = 1.0 / (2.0 * self.bandwidths[j] * self.bandwidths[j]);
        out.clear();
        out.extend(sq.iter().map(|&s| (-s * inv).exp()));
    }

    fn check(&self, j: usize, x: &[f64]) -> Result<()> {
        if j >= self.dim() {
            return Err(Error::invalid(format!(
                "dimension index {j} out of range for d = {}",
                self.dim()
            )));
        }
        check_dim(self.dim(), x.len())
    }

    pub fn phi(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check(j, x)?;
        let mut out = Vec::new();
        self.kernel_from_sq(j, &self.sq_distances_unchecked(x), &mut out);
        Ok(out)
    }

    pub fn psi(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval(j, x)?.psi)
    }

    pub fn dpsi(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval(j, x)?.dpsi)
    }

    pub fn eval(&self, j: usize, x: &[f64]) -> Result<BasisValues> {
        self.check(j, x)?;
        let mut phi = Vec::new();
        self.kernel_from_sq(j, &self.sq_distances_unchecked(x), &mut phi);
        let mut psi = Vec::with_capacity(phi.len());
        let mut dpsi = Vec::with_capacity(phi.len());
        self.fill_derivatives(j, x, &phi, &mut psi, &mut dpsi);
        Ok(BasisValues { phi, psi, dpsi })
    }

    pub(crate) fn fill_derivatives(
        &self,
        j: usize,
        x: &[f64],
        phi: &[f64],
        psi: &mut Vec<f64>,
        dpsi: &mut Vec<f64>,
    ) {
        let s2 = self.bandwidths[j] * self.bandwidths[j];
        let inv_s2 = 1.0 / s2;
        let inv_s4 = inv_s2 * inv_s2;
        psi.clear();
        dpsi.clear();
        for (k, &e) in phi.iter().enumerate() {
            let u = self.centers.center(k)[j] - x[j];
            psi.push(u * inv_s2 * e);
            dpsi.push((u * u * inv_s4 - inv_s2) * e);
        }
    }
}
