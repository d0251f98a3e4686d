use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::BasisSpec;
use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};

/// Per-dimension `G_j` (symmetric PSD, `b × b`) and `h_j` (`b`), averaged over `n` points.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub g: Vec<DMatrix<f64>>,
    pub h: Vec<DVector<f64>>,
    pub n: usize,
}

impl SufficientStats {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn num_basis(&self) -> usize {
        self.h.first().map_or(0, |h| h.len())
    }

    /// Statistics of the points in `total` that are not in `part`, where
    /// `part` was computed on a subset of the points behind `total`.
    pub fn complement(total: &Self, part: &Self) -> Result<Self> {
        if part.n >= total.n {
            return Err(Error::invalid("complement of a full partition is empty"));
        }
        let (nt, np) = (total.n as f64, part.n as f64);
        let rest = nt - np;
        let g = total
            .g
            .iter()
            .zip(&part.g)
            .map(|(gt, gp)| (gt * nt - gp * np) / rest)
            .collect();
        let h = total
            .h
            .iter()
            .zip(&part.h)
            .map(|(ht, hp)| (ht * nt - hp * np) / rest)
            .collect();
        Ok(Self {
            g,
            h,
            n: total.n - part.n,
        })
    }

    /// Pools statistics of disjoint point sets.
    pub fn pool(parts: &[Self]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty)?;
        let n: usize = parts.iter().map(|p| p.n).sum();
        let mut g: Vec<DMatrix<f64>> = first.g.iter().map(|m| m * 0.0).collect();
        let mut h: Vec<DVector<f64>> = first.h.iter().map(|v| v * 0.0).collect();
        for p in parts {
            let w = p.n as f64 / n as f64;
            for j in 0..g.len() {
                g[j] += &p.g[j] * w;
                h[j] += &p.h[j] * w;
            }
        }
        Ok(Self { g, h, n })
    }

    /// The in-sample score `Σ_j θ_jᵀ G_j θ_j + 2 θ_jᵀ h_j` of coefficients `theta`.
    pub fn score(&self, theta: &super::Theta) -> f64 {
        (0..self.dim())
            .map(|j| {
                let t = theta.row(j).transpose();
                (t.transpose() * &self.g[j] * &t)[(0, 0)] + 2.0 * t.dot(&self.h[j])
            })
            .sum()
    }
}

pub fn compute_stats(data: &Dataset, basis: &BasisSpec) -> Result<SufficientStats> {
    let rows: Vec<usize> = (0..data.n()).collect();
    compute_stats_rows(data, &rows, basis)
}

/// Statistics over the listed rows only.
pub fn compute_stats_rows(
    data: &Dataset,
    rows: &[usize],
    basis: &BasisSpec,
) -> Result<SufficientStats> {
    check_dim(basis.dim(), data.d())?;
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    let (n, b, d) = (rows.len(), basis.num_basis(), basis.dim());
    let sq: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| basis.sq_distances_unchecked(data.row(i)))
        .collect();

    // Kernel values depend on j only through σ_j; tied bandwidths share one table.
    let mut kernels: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
    for j in 0..d {
        let s = basis.bandwidth(j);
        if kernels.iter().all(|(t, _)| *t != s) {
            let table = sq
                .iter()
                .map(|row| {
                    let mut e = Vec::with_capacity(b);
                    basis.kernel_from_sq(j, row, &mut e);
                    e
                })
                .collect();
            kernels.push((s, table));
        }
    }

    let per_dim: Vec<(DMatrix<f64>, DVector<f64>)> = (0..d)
        .into_par_iter()
        .map(|j| {
            let s = basis.bandwidth(j);
            let table = &kernels.iter().find(|(t, _)| *t == s).expect("table").1;
            let mut psi_mat = DMatrix::zeros(n, b);
            let mut h = DVector::zeros(b);
            let (mut psi, mut dpsi) = (Vec::with_capacity(b), Vec::with_capacity(b));
            for (r, &i) in rows.iter().enumerate() {
                basis.fill_derivatives(j, data.row(i), &table[r], &mut psi, &mut dpsi);
                for k in 0..b {
                    psi_mat[(r, k)] = psi[k];
                    h[k] += dpsi[k];
                }
            }
            let g = psi_mat.tr_mul(&psi_mat) / n as f64;
            let g = (&g + g.transpose()) * 0.5;
            (g, h / n as f64)
        })
        .collect();

    let (g, h) = per_dim.into_iter().unzip();
    Ok(SufficientStats { g, h, n })
}
