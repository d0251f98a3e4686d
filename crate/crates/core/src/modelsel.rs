//! K-fold cross-validation of the held-out gradient score over `(σ, λ, γ)` grids.
//!
//! Kernel centers are drawn once from the full dataset and shared by every
//! fold and grid point. Statistics depend only on `σ`, so per `σ` the full-data
//! and per-fold statistics are computed once; training statistics of a fold
//! are the full-data statistics with the fold's removed, and the held-out
//! score of coefficients `θ` is `Σ_j θ_jᵀ G_j^F θ_j + 2 θ_jᵀ h_j^F`, which is
//! the score of the fitted model on the fold's points.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::basis::{select_centers, BasisSpec, Centers};
use crate::data::{make_folds, Dataset, FoldPartition};
use crate::error::{Error, Result};
use crate::estimator::{
    compute_stats, compute_stats_rows, solve_common, solve_mt_analytic, solve_mt_bcd,
    uniform_value, BcdOptions, Gamma, GradientModel, HyperParams, SpectralStats, SufficientStats,
    Theta,
};
use crate::metrics::lsldg_score;

pub use crate::estimator::Estimator;

/// Candidate values for each hyperparameter, ascending and duplicate-free.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    sigmas: Vec<f64>,
    lambdas: Vec<f64>,
    gammas: Vec<Gamma>,
}

fn check_ascending(name: &str, v: &[f64], min_ok: impl Fn(f64) -> bool) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(format!("{name} grid is empty")));
    }
    if let Some(bad) = v.iter().find(|&&x| !min_ok(x)) {
        return Err(Error::invalid(format!("{name} grid has invalid value {bad}")));
    }
    if v.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid(format!(
            "{name} grid must be strictly ascending"
        )));
    }
    Ok(())
}

fn powers_of_ten(exponents: impl IntoIterator<Item = f64>) -> Vec<f64> {
    exponents.into_iter().map(|e| 10f64.powf(e)).collect()
}

impl Grid {
    pub fn new(sigmas: Vec<f64>, lambdas: Vec<f64>, gammas: Vec<Gamma>) -> Result<Self> {
        check_ascending("sigma", &sigmas, |s| s > 0.0 && s.is_finite())?;
        check_ascending("lambda", &lambdas, |l| l >= 0.0 && l.is_finite())?;
        let g: Vec<f64> = gammas.iter().map(|g| g.as_f64()).collect();
        check_ascending("gamma", &g, |g| g >= 0.0)?;
        Ok(Self {
            sigmas,
            lambdas,
            gammas,
        })
    }

    /// Grids of the gradient-estimation experiments: five bandwidths and five
    /// ridge values on log scales, and nine multi-task weights including `∞`.
    pub fn gradient_experiment() -> Self {
        let gammas = [0.0, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0]
            .into_iter()
            .map(Gamma::Finite)
            .chain([Gamma::Infinite])
            .collect();
        Self::new(
            powers_of_ten([-1.0, -0.25, 0.5, 1.25, 2.0]),
            powers_of_ten([-2.0, -1.25, -0.5, 0.25, 1.0]),
            gammas,
        )
        .expect("preset grid is valid")
    }

    /// Grids of the clustering experiments: ten bandwidths in `[0.1, 10]`,
    /// ridge `10⁻⁵ … 10⁻¹`, multi-task weights `0, 10⁻⁵ … 10², ∞`.
    pub fn clustering() -> Self {
        let gammas = std::iter::once(Gamma::Finite(0.0))
            .chain(powers_of_ten((-5..=2).map(f64::from)).into_iter().map(Gamma::Finite))
            .chain([Gamma::Infinite])
            .collect();
        Self::new(
            powers_of_ten((0..10).map(|i| -1.0 + 2.0 * i as f64 / 9.0)),
            powers_of_ten((-5..=-1).map(f64::from)),
            gammas,
        )
        .expect("preset grid is valid")
    }

    pub fn with_gammas(&self, gammas: Vec<Gamma>) -> Result<Self> {
        Self::new(self.sigmas.clone(), self.lambdas.clone(), gammas)
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn gammas(&self) -> &[Gamma] {
        &self.gammas
    }

    pub fn len(&self) -> usize {
        self.sigmas.len() * self.lambdas.len() * self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Solver {
    /// Exact solve; never iterates.
    #[default]
    Analytic,
    /// Block coordinate descent, warm-started along each `γ` path.
    Bcd(BcdOptions),
}

/// How grid values of `λ` and `γ` map onto the penalties of the objective.
///
/// The basis carries a `1/σ²` factor, so the coefficient norm of a given
/// gradient field grows like `σ⁴`. `KernelScale` reads grid penalties in
/// units of the unnormalized kernel derivative `(c − x)·φ`, i.e. the solver
/// sees `λ/σ⁴` and `γ/σ⁴`; this keeps a fixed grid meaningful across
/// bandwidths spanning several decades.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyUnits {
    /// Grid values are the penalties on `θ` as they are.
    #[default]
    Coefficient,
    KernelScale,
}

impl PenaltyUnits {
    pub const NAMES: [&'static str; 2] = ["coefficient", "kernel"];

    pub fn name(self) -> &'static str {
        match self {
            PenaltyUnits::Coefficient => Self::NAMES[0],
            PenaltyUnits::KernelScale => Self::NAMES[1],
        }
    }

    /// Penalties handed to the solver for grid values `(λ, γ)` at bandwidth `sigma`.
    pub fn effective(self, sigma: f64, lambda: f64, gamma: Gamma) -> (f64, Gamma) {
        match self {
            PenaltyUnits::Coefficient => (lambda, gamma),
            PenaltyUnits::KernelScale => {
                let s4 = sigma.powi(4);
                let g = match gamma {
                    Gamma::Finite(g) => Gamma::Finite(g / s4),
                    Gamma::Infinite => Gamma::Infinite,
                };
                (lambda / s4, g)
            }
        }
    }

    /// Solver hyperparameters for a grid point.
    pub fn hyper(
        self,
        sigma: f64,
        lambda: f64,
        gamma: Gamma,
        similarity: DMatrix<f64>,
    ) -> Result<HyperParams> {
        let (l, g) = self.effective(sigma, lambda, gamma);
        HyperParams::new(sigma, l, g, similarity)
    }
}

impl std::str::FromStr for PenaltyUnits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coefficient" => Ok(PenaltyUnits::Coefficient),
            "kernel" => Ok(PenaltyUnits::KernelScale),
            other => Err(Error::invalid(format!(
                "unknown penalty units '{other}' (expected one of: {})",
                Self::NAMES.join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectConfig {
    /// Number of folds.
    pub k: usize,
    /// Seeds both the center draw and the fold assignment.
    pub seed: u64,
    pub solver: Solver,
    /// Number of kernel centers is `min(b_max, n)`.
    pub b_max: usize,
    pub estimator: Estimator,
    /// Task similarity; `None` means `γ_{j,j'} = 1` for all `j ≠ j'`.
    pub similarity: Option<DMatrix<f64>>,
    pub penalty: PenaltyUnits,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 0,
            solver: Solver::Analytic,
            b_max: 50,
            estimator: Estimator::MultiTask,
            similarity: None,
            penalty: PenaltyUnits::Coefficient,
        }
    }
}

/// Cross-validated score of one grid point, in grid units.
#[derive(Debug, Clone, PartialEq)]
pub struct CvEntry {
    pub sigma: f64,
    pub lambda: f64,
    /// `∞` for the common estimator, whose ridge is `λ` as given.
    pub gamma: Gamma,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvFailure {
    pub sigma: f64,
    pub lambda: f64,
    pub gamma: Gamma,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    /// Successful grid points in `(σ, λ, γ)` lexicographic order.
    pub entries: Vec<CvEntry>,
    pub failures: Vec<CvFailure>,
    chosen: usize,
    k: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub penalty: PenaltyUnits,
}

/// The first entry with the smallest mean; earlier entries win ties.
fn argmin<'a>(entries: impl Iterator<Item = (usize, &'a CvEntry)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in entries {
        if best.is_none_or(|(_, m)| e.mean < m) {
            best = Some((i, e.mean));
        }
    }
    best.map(|(i, _)| i)
}

impl CvReport {
    pub fn chosen(&self) -> &CvEntry {
        &self.entries[self.chosen]
    }

    pub fn folds(&self) -> usize {
        self.k
    }

    /// The best entry among those with multi-task weight `gamma`.
    pub fn best_for_gamma(&self, gamma: Gamma) -> Option<&CvEntry> {
        argmin(
            self.entries
                .iter()
                .enumerate()
                .filter(|(_, e)| e.gamma == gamma),
        )
        .map(|i| &self.entries[i])
    }

    /// `sigma,lambda,gamma,fold,score`: one row per fold (1-based) then a
    /// `mean` row, per grid point. Failed points are omitted.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let wrap = |e: csv::Error| Error::invalid(format!("writing CV report: {e}"));
        out.write_record(["sigma", "lambda", "gamma", "fold", "score"])
            .map_err(wrap)?;
        for e in &self.entries {
            let (s, l, g) = (e.sigma.to_string(), e.lambda.to_string(), e.gamma.to_string());
            for (f, v) in e.fold_scores.iter().enumerate() {
                out.write_record([&s, &l, &g, &(f + 1).to_string(), &v.to_string()])
                    .map_err(wrap)?;
            }
            out.write_record([&s, &l, &g, "mean", &e.mean.to_string()])
                .map_err(wrap)?;
        }
        out.flush().map_err(|e| Error::invalid(format!("writing CV report: {e}")))?;
        Ok(())
    }
}

fn triple_context(sigma: f64, lambda: f64, gamma: Gamma) -> String {
    format!("sigma={sigma}, lambda={lambda}, gamma={gamma}")
}

fn hyper(sigma: f64, lambda: f64, gamma: Gamma, sim: &DMatrix<f64>) -> Result<HyperParams> {
    HyperParams::new(sigma, lambda, gamma, sim.clone())
}

/// Coefficients for `hp` from precomputed statistics.
fn solve(
    stats: &SufficientStats,
    hp: &HyperParams,
    estimator: Estimator,
    solver: &Solver,
    init: Option<&Theta>,
) -> Result<Theta> {
    match (estimator, solver, hp.gamma) {
        (Estimator::Common, _, _) => solve_common(stats, hp.lambda),
        (_, Solver::Analytic, _) | (_, Solver::Bcd(_), Gamma::Infinite) => {
            solve_mt_analytic(stats, hp)
        }
        (_, Solver::Bcd(opts), _) => solve_mt_bcd(stats, hp, init, opts)?.into_converged(),
    }
}

/// Fits a model on `data` with fixed basis and hyperparameters.
pub fn fit(
    data: &Dataset,
    basis: &BasisSpec,
    hp: &HyperParams,
    estimator: Estimator,
    solver: &Solver,
) -> Result<GradientModel> {
    let stats = compute_stats(data, basis)?;
    let theta = solve(&stats, hp, estimator, solver, None)
        .map_err(|e| e.context(triple_context(hp.sigma, hp.lambda, hp.gamma)))?;
    Ok(GradientModel::new(basis.clone(), theta)?.with_hyper(hp.clone(), estimator))
}

/// Fits a multi-task model on `train` and scores it on `holdout`.
pub fn cv_score(
    train: &Dataset,
    holdout: &Dataset,
    basis: &BasisSpec,
    hp: &HyperParams,
    solver: &Solver,
) -> Result<f64> {
    let model = fit(train, basis, hp, Estimator::MultiTask, solver)?;
    lsldg_score(&model, holdout)
}

type TripleResult = (f64, f64, Gamma, Result<Vec<f64>>);

/// Per-fold held-out scores for every `(λ, γ)` at one bandwidth.
fn evaluate_sigma(
    data: &Dataset,
    centers: &Centers,
    folds: &FoldPartition,
    sigma: f64,
    grid: &Grid,
    cfg: &SelectConfig,
    sim: &DMatrix<f64>,
) -> Vec<TripleResult> {
    let gammas: Vec<Gamma> = match cfg.estimator {
        Estimator::MultiTask => grid.gammas.clone(),
        Estimator::Common => vec![Gamma::Infinite],
    };
    let fail_all = |e: Error| -> Vec<TripleResult> {
        let msg = e.to_string();
        grid.lambdas
            .iter()
            .flat_map(|&l| gammas.iter().map(move |&g| (l, g)))
            .map(|(l, g)| (sigma, l, g, Err(Error::AllFailed(msg.clone()))))
            .collect()
    };
    let basis = match centers.clone().with_bandwidth(sigma) {
        Ok(b) => b,
        Err(e) => return fail_all(e),
    };
    let total = match compute_stats(data, &basis) {
        Ok(t) => t,
        Err(e) => return fail_all(e),
    };

    // One column of scores per fold, rows in (λ, γ) order.
    let per_fold: Vec<Vec<Result<f64>>> = (0..folds.k())
        .into_par_iter()
        .map(|f| {
            let held = compute_stats_rows(data, &folds.fold(f), &basis)?;
            let train = SufficientStats::complement(&total, &held)?;
            let spectral = (matches!(cfg.solver, Solver::Analytic)
                && (cfg.estimator == Estimator::Common || uniform_value(sim).is_some()))
            .then(|| SpectralStats::new(&train));
            let mut scores = Vec::with_capacity(grid.lambdas.len() * gammas.len());
            for &lambda in &grid.lambdas {
                let mut warm: Option<Theta> = None;
                for &gamma in &gammas {
                    let hp = cfg.penalty.hyper(sigma, lambda, gamma, sim.clone());
                    let theta = hp.and_then(|hp| {
                        match (&spectral, cfg.estimator) {
                            (Some(s), Estimator::Common) => s.solve_common(hp.lambda),
                            (Some(s), Estimator::MultiTask) => s.solve(&hp),
                            (None, est) => solve(&train, &hp, est, &cfg.solver, warm.as_ref()),
                        }
                    });
                    scores.push(theta.map(|t| {
                        let score = held.score(&t);
                        if gamma.finite().is_some() {
                            warm = Some(t);
                        }
                        score
                    }));
                }
            }
            Ok(scores)
        })
        .map(|r: Result<Vec<Result<f64>>>| {
            r.unwrap_or_else(|e| {
                let n = grid.lambdas.len() * gammas.len();
                let msg = e.to_string();
                (0..n).map(|_| Err(Error::AllFailed(msg.clone()))).collect()
            })
        })
        .collect();

    let mut out = Vec::with_capacity(grid.lambdas.len() * gammas.len());
    let mut row = 0;
    for &lambda in &grid.lambdas {
        for &gamma in &gammas {
            let scores: Result<Vec<f64>> = per_fold
                .iter()
                .map(|col| match &col[row] {
                    Ok(v) if v.is_finite() => Ok(*v),
                    Ok(v) => Err(Error::AllFailed(format!("non-finite score {v}"))),
                    Err(e) => Err(Error::AllFailed(e.to_string())),
                })
                .collect();
            out.push((sigma, lambda, gamma, scores));
            row += 1;
        }
    }
    out
}

/// Cross-validates every grid point and refits the best one on all of `data`.
///
/// For the common estimator the `γ` list is ignored and entries carry `γ = ∞`.
pub fn select(data: &Dataset, grid: &Grid, cfg: &SelectConfig) -> Result<(CvReport, GradientModel)> {
    let sim = match &cfg.similarity {
        Some(s) => {
            if s.nrows() != data.d() {
                return Err(Error::DimensionMismatch {
                    expected: data.d(),
                    found: s.nrows(),
                });
            }
            s.clone()
        }
        None => crate::estimator::uniform_similarity(data.d()),
    };
    // Validates the similarity once, up front.
    hyper(grid.sigmas[0], grid.lambdas[0], Gamma::Finite(0.0), &sim)?;
    let centers = select_centers(data, cfg.b_max, cfg.seed)?;
    let folds = make_folds(data.n(), cfg.k, cfg.seed)?;

    let results: Vec<TripleResult> = grid
        .sigmas
        .par_iter()
        .map(|&sigma| evaluate_sigma(data, &centers, &folds, sigma, grid, cfg, &sim))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (sigma, lambda, gamma, r) in results {
        match r {
            Ok(fold_scores) => {
                let mean = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
                entries.push(CvEntry {
                    sigma,
                    lambda,
                    gamma,
                    fold_scores,
                    mean,
                });
            }
            Err(e) => failures.push(CvFailure {
                sigma,
                lambda,
                gamma,
                message: e.to_string(),
            }),
        }
    }
    let chosen = argmin(entries.iter().enumerate()).ok_or_else(|| {
        let list: Vec<String> = failures
            .iter()
            .map(|f| format!("({}): {}", triple_context(f.sigma, f.lambda, f.gamma), f.message))
            .collect();
        Error::AllFailed(list.join("\n"))
    })?;
    let report = CvReport {
        entries,
        failures,
        chosen,
        k: cfg.k,
        seed: cfg.seed,
        estimator: cfg.estimator,
        penalty: cfg.penalty,
    };
    let best = report.chosen();
    let basis = centers.with_bandwidth(best.sigma)?;
    let hp = cfg.penalty.hyper(best.sigma, best.lambda, best.gamma, sim)?;
    let model = fit(data, &basis, &hp, cfg.estimator, &cfg.solver)?;
    Ok((report, model))
}
