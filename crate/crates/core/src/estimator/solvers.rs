use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{uniform_value, Gamma, HyperParams, SufficientStats, Theta};
use crate::error::{check_dim, Error, Result};

/// Largest `d·b` for which the analytic solver will materialize the dense
/// `db × db` system. Uniform similarities never need it.
pub const DENSE_SIZE_LIMIT: usize = 4000;

fn chol(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::Singular(what.to_string()))
}

fn shifted(g: &DMatrix<f64>, shift: f64) -> DMatrix<f64> {
    let mut m = g.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += shift;
    }
    m
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

/// `θ_j = −(G_j + λI)⁻¹ h_j`, independently per dimension.
pub fn solve_single(stats: &SufficientStats, lambda: f64) -> Result<Theta> {
    check_lambda(lambda)?;
    let (d, b) = (stats.dim(), stats.num_basis());
    let mut theta = Theta::zeros(d, b);
    for j in 0..d {
        let f = chol(shifted(&stats.g[j], lambda), &format!("G_{j} + λI"))?;
        let t = f.solve(&(-&stats.h[j]));
        theta.set_row(j, &t.transpose());
    }
    Ok(theta)
}

/// One vector shared by all dimensions: `θ' = −(Σ G_j + λI)⁻¹ Σ h_j`.
pub fn solve_common(stats: &SufficientStats, lambda: f64) -> Result<Theta> {
    check_lambda(lambda)?;
    let (d, b) = (stats.dim(), stats.num_basis());
    let g_sum = stats.g.iter().fold(DMatrix::zeros(b, b), |acc, g| acc + g);
    let h_sum = stats.h.iter().fold(DVector::zeros(b), |acc, h| acc + h);
    let t = chol(shifted(&g_sum, lambda), "Σ G_j + λI")?.solve(&(-h_sum));
    Ok(Theta::from_fn(d, b, |_, k| t[k]))
}

fn check_hp(stats: &SufficientStats, hp: &HyperParams) -> Result<()> {
    check_dim(stats.dim(), hp.dim())
}

/// Exact minimizer of the multi-task objective.
///
/// * `γ = 0` is [`solve_single`].
/// * `γ = ∞` is [`solve_common`] with ridge `d·λ` (requires a connected similarity graph).
/// * Uniform similarities reduce to one `b × b` system through the spectral route.
/// * Otherwise the dense `db × db` system is solved, up to [`DENSE_SIZE_LIMIT`].
pub fn solve_mt_analytic(stats: &SufficientStats, hp: &HyperParams) -> Result<Theta> {
    check_hp(stats, hp)?;
    let d = stats.dim();
    match hp.gamma {
        Gamma::Infinite => {
            if !connected(hp.similarity()) {
                return Err(Error::invalid(
                    "gamma = inf needs a connected similarity graph",
                ));
            }
            solve_common(stats, d as f64 * hp.lambda)
        }
        g if g.is_zero() => solve_single(stats, hp.lambda),
        Gamma::Finite(_) => {
            if uniform_value(hp.similarity()).is_some() {
                SpectralStats::new(stats).solve(hp)
            } else if d * stats.num_basis() <= DENSE_SIZE_LIMIT {
                solve_mt_dense(stats, hp)
            } else {
                Err(Error::invalid(format!(
                    "d·b = {} exceeds the dense limit {DENSE_SIZE_LIMIT}; use the bcd solver",
                    d * stats.num_basis()
                )))
            }
        }
    }
}

/// `θ = −(G + C⊗I_b)⁻¹ h` with `C = λI + γ diag(Γ 1) − γΓ`, materialized densely.
pub fn solve_mt_dense(stats: &SufficientStats, hp: &HyperParams) -> Result<Theta> {
    check_hp(stats, hp)?;
    let gamma = hp
        .gamma
        .finite()
        .ok_or_else(|| Error::invalid("dense solve needs a finite gamma"))?;
    let (d, b) = (stats.dim(), stats.num_basis());
    let sim = hp.similarity();
    let mut big = DMatrix::zeros(d * b, d * b);
    let mut rhs = DVector::zeros(d * b);
    for j in 0..d {
        let row_sum: f64 = (0..d).filter(|&t| t != j).map(|t| sim[(j, t)]).sum();
        big.view_mut((j * b, j * b), (b, b)).copy_from(&stats.g[j]);
        for t in 0..d {
            let c = if t == j {
                hp.lambda + gamma * row_sum
            } else {
                -gamma * sim[(j, t)]
            };
            if c != 0.0 {
                for k in 0..b {
                    big[(j * b + k, t * b + k)] += c;
                }
            }
        }
        rhs.rows_mut(j * b, b).copy_from(&(-&stats.h[j]));
    }
    let sol = chol(big, "G + C⊗I")?.solve(&rhs);
    Ok(Theta::from_fn(d, b, |j, k| sol[j * b + k]))
}

fn connected(sim: &DMatrix<f64>) -> bool {
    let d = sim.nrows();
    let mut seen = vec![false; d];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for t in 0..d {
            if !seen[t] && sim[(i, t)] > 0.0 {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[derive(Debug, Clone)]
struct Eig {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
    proj_h: DVector<f64>,
}

impl Eig {
    fn new(g: &DMatrix<f64>, h: &DVector<f64>) -> Self {
        let e = g.clone().symmetric_eigen();
        let values = e.eigenvalues.map(|v| v.max(0.0));
        let proj_h = e.eigenvectors.tr_mul(h);
        Self {
            vectors: e.eigenvectors,
            values,
            proj_h,
        }
    }

    fn check_shift(&self, alpha: f64, what: &str) -> Result<()> {
        let floor = 1e-14 * self.values.max().max(1.0);
        if self.values.min() + alpha <= floor {
            Err(Error::Singular(what.to_string()))
        } else {
            Ok(())
        }
    }

    /// `U diag(v) Uᵀ`.
    fn reconstruct(&self, diag: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (c, &v) in self.values.iter().enumerate() {
            scaled.column_mut(c).scale_mut(diag(v));
        }
        scaled * self.vectors.transpose()
    }
}

/// Eigendecompositions of every `G_j` and of `Σ G_j`, reused across `(λ, γ)`.
///
/// Cross-validation solves the same statistics for many regularization values;
/// after the one-off `O(d b³)` decomposition each single-task or shared solve
/// costs `O(d b²)`, and a uniform-similarity multi-task solve one `b × b`
/// factorization plus `O(d b³)` accumulation.
#[derive(Debug, Clone)]
pub struct SpectralStats {
    dims: Vec<Eig>,
    common: Eig,
    b: usize,
}

impl SpectralStats {
    pub fn new(stats: &SufficientStats) -> Self {
        let b = stats.num_basis();
        let dims = stats
            .g
            .iter()
            .zip(&stats.h)
            .map(|(g, h)| Eig::new(g, h))
            .collect();
        let g_sum = stats.g.iter().fold(DMatrix::zeros(b, b), |acc, g| acc + g);
        let h_sum = stats.h.iter().fold(DVector::zeros(b), |acc, h| acc + h);
        Self {
            dims,
            common: Eig::new(&g_sum, &h_sum),
            b,
        }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn solve_single(&self, lambda: f64) -> Result<Theta> {
        check_lambda(lambda)?;
        let mut theta = Theta::zeros(self.dim(), self.b);
        for (j, e) in self.dims.iter().enumerate() {
            e.check_shift(lambda, &format!("G_{j} + λI"))?;
            let t = &e.vectors * e.proj_h.zip_map(&e.values, |p, v| -p / (v + lambda));
            theta.set_row(j, &t.transpose());
        }
        Ok(theta)
    }

    pub fn solve_common(&self, lambda: f64) -> Result<Theta> {
        check_lambda(lambda)?;
        let e = &self.common;
        e.check_shift(lambda, "Σ G_j + λI")?;
        let t = &e.vectors * e.proj_h.zip_map(&e.values, |p, v| -p / (v + lambda));
        Ok(Theta::from_fn(self.dim(), self.b, |_, k| t[k]))
    }

    /// Same contract as [`solve_mt_analytic`], for uniform similarities only.
    ///
    /// With `γ_{j,j'} = c` the stationarity conditions read
    /// `A_j θ_j = γc S − h_j`, `A_j = G_j + (λ + γcd) I`, `S = Σ θ_j`. Summing over
    /// `j` gives `(Σ_j U_j diag((D_j + λ)/(d(D_j + α))) U_jᵀ) S = −Σ_j A_j⁻¹ h_j`
    /// with `α = λ + γcd`, an SPD `b × b` system free of cancellation.
    pub fn solve(&self, hp: &HyperParams) -> Result<Theta> {
        check_dim(self.dim(), hp.dim())?;
        let c = uniform_value(hp.similarity())
            .ok_or_else(|| Error::invalid("spectral multi-task route needs uniform similarities"))?;
        let d = self.dim();
        let lambda = hp.lambda;
        check_lambda(lambda)?;
        let gc = match hp.gamma {
            Gamma::Infinite if c > 0.0 || d == 1 => return self.solve_common(d as f64 * lambda),
            Gamma::Infinite => return Err(Error::invalid("gamma = inf needs c > 0")),
            Gamma::Finite(g) => g * c,
        };
        if gc == 0.0 || d == 1 {
            return self.solve_single(lambda);
        }
        let df = d as f64;
        let alpha = lambda + gc * df;
        let mut m = DMatrix::zeros(self.b, self.b);
        let mut r = DVector::zeros(self.b);
        for e in &self.dims {
            m += e.reconstruct(|v| (v + lambda) / (df * (v + alpha)));
            r -= &e.vectors * e.proj_h.zip_map(&e.values, |p, v| p / (v + alpha));
        }
        let s = chol(m, "multi-task consensus system")?.solve(&r);
        let mut theta = Theta::zeros(d, self.b);
        for (j, e) in self.dims.iter().enumerate() {
            let proj_s = e.vectors.tr_mul(&s);
            let coef = proj_s
                .zip_zip_map(&e.proj_h, &e.values, |ps, ph, v| (gc * ps - ph) / (v + alpha));
            let t = &e.vectors * coef;
            theta.set_row(j, &t.transpose());
        }
        Ok(theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcdOptions {
    /// Stop once both the largest coefficient change in a sweep and the
    /// estimated remaining distance to the fixed point are below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Record the objective before the first sweep and after every sweep.
    pub record_objective: bool,
}

impl Default for BcdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_sweeps: 1000,
            record_objective: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcdSolution {
    pub theta: Theta,
    pub sweeps: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

impl BcdSolution {
    /// The coefficients, or [`Error::NotConverged`] when the sweep budget ran out.
    pub fn into_converged(self) -> Result<Theta> {
        if self.converged {
            Ok(self.theta)
        } else {
            Err(Error::NotConverged {
                sweeps: self.sweeps,
            })
        }
    }
}

/// Cyclic block coordinate descent on the multi-task objective.
///
/// Each block update is the exact minimizer over `θ_j`:
/// `θ_j ← (G_j + λI + γ s_j I)⁻¹ (−h_j + γ Σ_{j'≠j} γ_{j,j'} θ_{j'})`, `s_j = Σ_{j'≠j} γ_{j,j'}`,
/// so the objective never increases and the fixed point is the analytic solution.
///
/// Let `Δ_k` be the largest change in sweep `k` and `ρ` the largest ratio
/// `Δ_i / Δ_{i−1}` over the last eight sweeps. The distance to the fixed
/// point is then about `Δ_k ρ / (1 − ρ)`, which far exceeds
/// `Δ_k` when `λ` is small and `γ` large. Convergence requires both to be
/// below `tol`, or `Δ_k` to reach the rounding floor of the coefficients.
pub fn solve_mt_bcd(
    stats: &SufficientStats,
    hp: &HyperParams,
    init: Option<&Theta>,
    opts: &BcdOptions,
) -> Result<BcdSolution> {
    check_hp(stats, hp)?;
    check_lambda(hp.lambda)?;
    let gamma = hp
        .gamma
        .finite()
        .ok_or_else(|| Error::invalid("bcd needs a finite gamma; use solve_common for gamma = inf"))?;
    if !(opts.tol > 0.0) || opts.max_sweeps == 0 {
        return Err(Error::invalid("bcd needs tol > 0 and max_sweeps >= 1"));
    }
    let (d, b) = (stats.dim(), stats.num_basis());
    let sim = hp.similarity();
    let factors = (0..d)
        .map(|j| {
            let s: f64 = (0..d).filter(|&t| t != j).map(|t| sim[(j, t)]).sum();
            chol(
                shifted(&stats.g[j], hp.lambda + gamma * s),
                &format!("block {j}"),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut theta = match init {
        Some(t) => {
            if t.shape() != (d, b) {
                return Err(Error::DimensionMismatch {
                    expected: d * b,
                    found: t.len(),
                });
            }
            t.clone()
        }
        None => Theta::zeros(d, b),
    };
    let mut trace = Vec::new();
    if opts.record_objective {
        trace.push(mt_objective(stats, hp, &theta));
    }

    let mut rhs = DVector::zeros(b);
    let mut prev_change = f64::INFINITY;
    // Ratios of the last few sweeps; the largest one is used as `ρ`.
    let mut ratios = [f64::INFINITY; 8];
    for sweep in 1..=opts.max_sweeps {
        let mut max_change = 0.0f64;
        for j in 0..d {
            rhs.copy_from(&stats.h[j]);
            rhs.neg_mut();
            for t in 0..d {
                let w = sim[(j, t)];
                if t != j && w != 0.0 {
                    for k in 0..b {
                        rhs[k] += gamma * w * theta[(t, k)];
                    }
                }
            }
            let new = factors[j].solve(&rhs);
            for k in 0..b {
                max_change = max_change.max((new[k] - theta[(j, k)]).abs());
                theta[(j, k)] = new[k];
            }
        }
        if opts.record_objective {
            trace.push(mt_objective(stats, hp, &theta));
        }
        ratios[sweep % ratios.len()] = max_change / prev_change;
        let rho = ratios.iter().fold(0.0f64, |m, &r| m.max(r));
        let remaining = if rho < 1.0 {
            max_change * rho / (1.0 - rho)
        } else {
            f64::INFINITY
        };
        prev_change = max_change;
        let floor = 64.0 * f64::EPSILON * theta.amax();
        let at_first = sweep == 1 && init.is_some();
        if max_change <= floor || (max_change < opts.tol && (remaining < opts.tol || at_first)) {
            return Ok(BcdSolution {
                theta,
                sweeps: sweep,
                converged: true,
                objective_trace: trace,
            });
        }
    }
    Ok(BcdSolution {
        theta,
        sweeps: opts.max_sweeps,
        converged: false,
        objective_trace: trace,
    })
}

fn quad_terms(stats: &SufficientStats, lambda: f64, theta: &Theta) -> f64 {
    (0..stats.dim())
        .map(|j| {
            let t = theta.row(j).transpose();
            let gt = &stats.g[j] * &t;
            t.dot(&gt) + 2.0 * t.dot(&stats.h[j]) + lambda * t.norm_squared()
        })
        .sum()
}

/// The multi-task objective. With `γ = ∞` the coupling is 0 when every row
/// of `theta` agrees and `+∞` otherwise.
pub fn mt_objective(stats: &SufficientStats, hp: &HyperParams, theta: &Theta) -> f64 {
    let d = stats.dim();
    let sim = hp.similarity();
    let mut coupling = 0.0;
    for j in 0..d {
        for t in 0..d {
            if t != j && sim[(j, t)] != 0.0 {
                coupling += sim[(j, t)] * (theta.row(j) - theta.row(t)).norm_squared();
            }
        }
    }
    let penalty = match hp.gamma {
        Gamma::Finite(g) => 0.5 * g * coupling,
        Gamma::Infinite if coupling == 0.0 => 0.0,
        Gamma::Infinite => f64::INFINITY,
    };
    quad_terms(stats, hp.lambda, theta) + penalty
}

pub fn single_objective(stats: &SufficientStats, lambda: f64, theta: &Theta) -> f64 {
    quad_terms(stats, lambda, theta)
}

/// Objective of the shared-coefficient problem at `shared` (length `b`).
pub fn common_objective(stats: &SufficientStats, lambda: f64, shared: &DVector<f64>) -> f64 {
    let mut total = lambda * shared.norm_squared();
    for j in 0..stats.dim() {
        total += shared.dot(&(&stats.g[j] * shared)) + 2.0 * shared.dot(&stats.h[j]);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::uniform_similarity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_stats(g: &[f64], h: &[f64]) -> SufficientStats {
        SufficientStats {
            g: g.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect(),
            h: h.iter().map(|&v| DVector::from_element(1, v)).collect(),
            n: 1,
        }
    }

    /// Wishart-like `G_j` plus Gaussian `h_j`.
    pub(crate) fn random_stats(rng: &mut ChaCha8Rng, d: usize, b: usize) -> SufficientStats {
        let m = 3 * b;
        let mut g = Vec::new();
        let mut h = Vec::new();
        for _ in 0..d {
            let a = DMatrix::from_fn(m, b, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let gj = a.tr_mul(&a) / m as f64;
            g.push((&gj + gj.transpose()) * 0.5);
            h.push(DVector::from_fn(b, |_, _| rng.random::<f64>() * 2.0 - 1.0));
        }
        SufficientStats { g, h, n: m }
    }

    #[test]
    fn scalar_single_solves() {
        let s = scalar_stats(&[1.0], &[1.0]);
        assert_eq!(solve_single(&s, 0.0).unwrap()[(0, 0)], -1.0);
        assert!((solve_single(&s, 1.0).unwrap()[(0, 0)] + 0.5).abs() < 1e-15);
        let spectral = SpectralStats::new(&s);
        assert!((spectral.solve_single(1.0).unwrap()[(0, 0)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn singular_at_zero_lambda() {
        let s = scalar_stats(&[0.0], &[1.0]);
        let err = solve_single(&s, 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
        assert!(err.to_string().contains("lambda > 0"));
        assert!(SpectralStats::new(&s).solve_single(0.0).is_err());
        assert!(solve_single(&s, 1e-3).is_ok());
    }

    #[test]
    fn common_hand_example() {
        let s = scalar_stats(&[1.0, 1.0], &[1.0, -1.0]);
        let t = solve_common(&s, 0.0).unwrap();
        assert_eq!(t[(0, 0)], 0.0);
        assert_eq!(t[(1, 0)], 0.0);
    }

    #[test]
    fn common_in_one_dimension_is_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_stats(&mut rng, 1, 6);
        let a = solve_common(&s, 0.1).unwrap();
        let b = solve_single(&s, 0.1).unwrap();
        assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn mt_hand_example() {
        // [[2,-1],[-1,2]] θ = [-1, 1]
        let s = scalar_stats(&[1.0, 1.0], &[1.0, -1.0]);
        let hp = HyperParams::uniform(1.0, 0.0, Gamma::Finite(1.0), 2).unwrap();
        for theta in [
            solve_mt_dense(&s, &hp).unwrap(),
            solve_mt_analytic(&s, &hp).unwrap(),
            solve_mt_bcd(&s, &hp, None, &BcdOptions::default())
                .unwrap()
                .into_converged()
                .unwrap(),
        ] {
            assert!((theta[(0, 0)] + 1.0 / 3.0).abs() < 1e-9);
            assert!((theta[(1, 0)] - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn residuals_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let s = random_stats(&mut rng, 3, 7);
            let t = solve_single(&s, 0.05).unwrap();
            for j in 0..3 {
                let tj = t.row(j).transpose();
                let r = shifted(&s.g[j], 0.05) * &tj + &s.h[j];
                assert!(r.amax() < 1e-10);
            }
        }
    }

    #[test]
    fn spectral_and_dense_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(d, b) in &[(2, 3), (4, 9), (6, 5)] {
            let s = random_stats(&mut rng, d, b);
            let spectral = SpectralStats::new(&s);
            for &lambda in &[1e-5, 1e-2, 1.0] {
                for &gamma in &[0.0, 0.1, 10.0, 1000.0] {
                    let hp = HyperParams::uniform(1.0, lambda, Gamma::Finite(gamma), d).unwrap();
                    let dense = solve_mt_dense(&s, &hp).unwrap();
                    let fast = spectral.solve(&hp).unwrap();
                    let scale = dense.amax().max(1.0);
                    assert!((&dense - &fast).amax() / scale < 1e-8, "d={d} λ={lambda} γ={gamma}");
                }
                let single = solve_single(&s, lambda).unwrap();
                assert!((single - spectral.solve_single(lambda).unwrap()).amax() < 1e-8);
                let common = solve_common(&s, lambda).unwrap();
                assert!((common - spectral.solve_common(lambda).unwrap()).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn scaled_uniform_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_stats(&mut rng, 3, 4);
        let sim = uniform_similarity(3) * 0.5;
        let hp = HyperParams::new(1.0, 0.01, Gamma::Finite(2.0), sim).unwrap();
        let a = solve_mt_dense(&s, &hp).unwrap();
        let b = SpectralStats::new(&s).solve(&hp).unwrap();
        assert!((a - b).amax() < 1e-9);
    }

    #[test]
    fn general_similarity_uses_dense_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_stats(&mut rng, 3, 4);
        let sim = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 2.0, 0.0]);
        let hp = HyperParams::new(1.0, 0.01, Gamma::Finite(0.7), sim).unwrap();
        let a = solve_mt_analytic(&s, &hp).unwrap();
        let bcd = solve_mt_bcd(&s, &hp, None, &BcdOptions::default()).unwrap();
        assert!(bcd.converged);
        assert!((a - bcd.theta).amax() < 1e-7);
        assert!(SpectralStats::new(&s).solve(&hp).is_err());
    }

    #[test]
    fn infinite_gamma_needs_connected_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_stats(&mut rng, 3, 4);
        let sim = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let hp = HyperParams::new(1.0, 0.01, Gamma::Infinite, sim).unwrap();
        assert!(solve_mt_analytic(&s, &hp).is_err());
        let hp = HyperParams::uniform(1.0, 0.01, Gamma::Infinite, 3).unwrap();
        let t = solve_mt_analytic(&s, &hp).unwrap();
        assert!((solve_common(&s, 0.03).unwrap() - t).amax() < 1e-12);
    }

    #[test]
    fn bcd_decoupled_converges_in_one_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random_stats(&mut rng, 4, 5);
        let hp = HyperParams::uniform(1.0, 0.1, Gamma::Finite(0.0), 4).unwrap();
        let sol = solve_mt_bcd(&s, &hp, None, &BcdOptions::default()).unwrap();
        // The first sweep lands on the solution; the second confirms no change.
        assert!(sol.converged && sol.sweeps <= 2);
        assert!((sol.theta - solve_single(&s, 0.1).unwrap()).amax() < 1e-12);
    }

    #[test]
    fn bcd_warm_start_at_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_stats(&mut rng, 3, 6);
        let hp = HyperParams::uniform(1.0, 0.1, Gamma::Finite(1.0), 3).unwrap();
        let exact = solve_mt_analytic(&s, &hp).unwrap();
        let sol = solve_mt_bcd(&s, &hp, Some(&exact), &BcdOptions::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.sweeps, 1);
    }

    #[test]
    fn bcd_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_stats(&mut rng, 4, 6);
        let hp = HyperParams::uniform(1.0, 1e-3, Gamma::Finite(10.0), 4).unwrap();
        let opts = BcdOptions {
            max_sweeps: 2,
            ..Default::default()
        };
        let sol = solve_mt_bcd(&s, &hp, None, &opts).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.sweeps, 2);
        assert!(sol.theta.amax() > 0.0);
        assert!(matches!(sol.into_converged(), Err(Error::NotConverged { sweeps: 2 })));
    }

    #[test]
    fn bcd_rejects_infinite_gamma() {
        let s = scalar_stats(&[1.0, 1.0], &[1.0, -1.0]);
        let hp = HyperParams::uniform(1.0, 0.1, Gamma::Infinite, 2).unwrap();
        assert!(solve_mt_bcd(&s, &hp, None, &BcdOptions::default()).is_err());
    }

    fn directional_check(f: impl Fn(&Theta) -> f64, theta: &Theta, rng: &mut ChaCha8Rng) {
        let base = f(theta);
        for _ in 0..20 {
            let dir = Theta::from_fn(theta.nrows(), theta.ncols(), |_, _| rng.random::<f64>() - 0.5);
            let dir = &dir / dir.norm();
            assert!(f(&(theta + &dir * 1e-3)) >= base - 1e-9);
            assert!(f(&(theta - &dir * 1e-3)) >= base - 1e-9);
        }
    }

    #[test]
    fn solutions_are_minimizers() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..5 {
            let s = random_stats(&mut rng, 3, 5);
            let single = solve_single(&s, 0.01).unwrap();
            directional_check(|t| single_objective(&s, 0.01, t), &single, &mut rng);

            let hp = HyperParams::uniform(1.0, 0.01, Gamma::Finite(0.5), 3).unwrap();
            let mt = solve_mt_analytic(&s, &hp).unwrap();
            directional_check(|t| mt_objective(&s, &hp, t), &mt, &mut rng);

            let common = solve_common(&s, 0.01).unwrap().row(0).transpose();
            let base = common_objective(&s, 0.01, &common);
            for _ in 0..20 {
                let dir = DVector::from_fn(5, |_, _| rng.random::<f64>() - 0.5).normalize();
                assert!(common_objective(&s, 0.01, &(&common + &dir * 1e-3)) >= base - 1e-9);
            }
        }
    }

    #[test]
    fn mt_gradient_vanishes_by_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_stats(&mut rng, 3, 4);
        let sim = DMatrix::from_row_slice(3, 3, &[0.0, 0.3, 1.0, 0.3, 0.0, 2.0, 1.0, 2.0, 0.0]);
        let hp = HyperParams::new(1.0, 0.05, Gamma::Finite(1.5), sim).unwrap();
        let theta = solve_mt_analytic(&s, &hp).unwrap();
        let h = 1e-6;
        for idx in 0..theta.len() {
            let mut p = theta.clone();
            let mut m = theta.clone();
            p[idx] += h;
            m[idx] -= h;
            let grad = (mt_objective(&s, &hp, &p) - mt_objective(&s, &hp, &m)) / (2.0 * h);
            assert!(grad.abs() < 1e-8, "component {idx}: {grad}");
        }
    }

    #[test]
    fn coupling_shrinks_with_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = random_stats(&mut rng, 4, 6);
        let spread = |t: &Theta| {
            let mut acc = 0.0;
            for a in 0..4 {
                for b in a + 1..4 {
                    acc += (t.row(a) - t.row(b)).norm_squared();
                }
            }
            acc
        };
        let mut last = f64::INFINITY;
        for &g in &[0.0, 0.1, 1.0, 10.0, 100.0] {
            let hp = HyperParams::uniform(1.0, 0.01, Gamma::Finite(g), 4).unwrap();
            let v = spread(&solve_mt_analytic(&s, &hp).unwrap());
            assert!(v <= last + 1e-12);
            last = v;
        }
    }
}
