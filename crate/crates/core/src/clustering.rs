//! Mode-seeking clustering.
//!
//! Every data point is moved uphill by a fixed-point map until it stops; points
//! whose terminals lie within `merge_radius` of each other (transitively) form
//! one cluster. Setting `ĝ_j(x) = 0` in the fitted gradient model and solving
//! for `x⁽ʲ⁾` gives the update
//!
//! ```text
//! x⁽ʲ⁾ ← Σ_k θ_j⁽ᵏ⁾ c_k⁽ʲ⁾ φ_j⁽ᵏ⁾(x) / Σ_k θ_j⁽ᵏ⁾ φ_j⁽ᵏ⁾(x)
//! ```
//!
//! and the kernel density gives the classical mean shift `x ← Σ_i w_i(x) x_i`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::estimator::{Gamma, GradientModel};
use crate::kde::{kde_select_bandwidth, BandwidthSelection, KdeModel};
use crate::modelsel::{select, CvReport, Estimator, Grid, PenaltyUnits, SelectConfig, Solver};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeekConfig {
    pub max_iters: usize,
    /// A trajectory stops once `‖x_{t+1} − x_t‖∞` falls below this.
    pub step_tol: f64,
    pub merge_radius: f64,
    /// Smallest admissible `|Σ_k θ_j⁽ᵏ⁾ φ_j⁽ᵏ⁾(x)|` in the gradient update.
    pub denominator_floor: f64,
}

impl SeekConfig {
    pub fn new(max_iters: usize, step_tol: f64, merge_radius: f64, denominator_floor: f64) -> Result<Self> {
        let cfg = Self {
            max_iters,
            step_tol,
            merge_radius,
            denominator_floor,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults with `merge_radius` set to 1% of the median pairwise distance.
    pub fn for_data(data: &Dataset) -> Self {
        let median = median_pairwise_distance(data);
        Self {
            max_iters: 1000,
            step_tol: 1e-6,
            merge_radius: if median > 0.0 { 1e-2 * median } else { 1e-6 },
            denominator_floor: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if self.max_iters == 0 || !ok(self.step_tol) || !ok(self.merge_radius) || !ok(self.denominator_floor) {
            return Err(Error::invalid(
                "seek config needs max_iters >= 1 and positive finite tolerances",
            ));
        }
        Ok(())
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn median_pairwise_distance(data: &Dataset) -> f64 {
    let n = data.n();
    let mut d: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |k| (i, k)))
        .map(|(i, k)| distance(data.row(i), data.row(k)))
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if d.len() % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// One fixed-point step driven by a gradient model.
pub fn lsldg_update(model: &GradientModel, x: &[f64], denominator_floor: f64) -> Result<Vec<f64>> {
    check_dim(model.dim(), x.len())?;
    let sums = model.kernel_sums(x);
    sums.weight
        .iter()
        .zip(&sums.weighted_center)
        .enumerate()
        .map(|(j, (&w, &wc))| {
            if w.abs() < denominator_floor || !w.is_finite() {
                Err(Error::DegenerateUpdate { dim: j })
            } else {
                Ok(wc / w)
            }
        })
        .collect()
}

/// One mean-shift step: the softmax-weighted mean of the training points.
pub fn mean_shift_update(model: &KdeModel, x: &[f64]) -> Result<Vec<f64>> {
    model.weighted_mean(x)
}

/// A map iterated from every start point.
pub trait FixedPointMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
}

pub struct LsldgMap<'a> {
    pub model: &'a GradientModel,
    pub denominator_floor: f64,
}

impl FixedPointMap for LsldgMap<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        lsldg_update(self.model, x, self.denominator_floor)
    }
}

impl FixedPointMap for KdeModel {
    fn dim(&self) -> usize {
        KdeModel::dim(self)
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        mean_shift_update(self, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeekOutcome {
    pub terminals: Vec<Vec<f64>>,
    /// Successful update applications per point.
    pub iterations: Vec<usize>,
    /// Ascending indices of points that hit `max_iters` or a degenerate update.
    pub unconverged: Vec<usize>,
}

struct Trajectory {
    end: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn run<M: FixedPointMap + ?Sized>(
    map: &M,
    start: &[f64],
    cfg: &SeekConfig,
    mut visit: impl FnMut(&[f64]),
) -> Trajectory {
    let mut x = start.to_vec();
    visit(&x);
    for it in 1..=cfg.max_iters {
        let next = match map.apply(&x) {
            Ok(next) if next.iter().all(|v| v.is_finite()) => next,
            _ => {
                return Trajectory {
                    end: x,
                    iterations: it - 1,
                    converged: false,
                }
            }
        };
        let step = max_abs_diff(&next, &x);
        x = next;
        visit(&x);
        if step < cfg.step_tol {
            return Trajectory {
                end: x,
                iterations: it,
                converged: true,
            };
        }
    }
    Trajectory {
        end: x,
        iterations: cfg.max_iters,
        converged: false,
    }
}

/// Iterates `map` from every row of `starts`, in parallel.
pub fn seek_modes<M: FixedPointMap + ?Sized>(map: &M, starts: &Dataset, cfg: &SeekConfig) -> Result<SeekOutcome> {
    cfg.validate()?;
    check_dim(map.dim(), starts.d())?;
    let runs: Vec<Trajectory> = (0..starts.n())
        .into_par_iter()
        .map(|i| run(map, starts.row(i), cfg, |_| {}))
        .collect();
    let unconverged = runs
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.converged)
        .map(|(i, _)| i)
        .collect();
    let iterations = runs.iter().map(|t| t.iterations).collect();
    let terminals = runs.into_iter().map(|t| t.end).collect();
    Ok(SeekOutcome {
        terminals,
        iterations,
        unconverged,
    })
}

/// Every iterate of one trajectory, starting with `start` itself.
pub fn trajectory<M: FixedPointMap + ?Sized>(map: &M, start: &[f64], cfg: &SeekConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    check_dim(map.dim(), start.len())?;
    let mut path = Vec::new();
    run(map, start, cfg, |x| path.push(x.to_vec()));
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    /// Label of every point, in `0..modes.len()`.
    pub labels: Vec<usize>,
    pub modes: Vec<Vec<f64>>,
    pub iterations: Vec<usize>,
    pub unconverged: Vec<usize>,
}

impl ClusteringResult {
    pub fn num_clusters(&self) -> usize {
        self.modes.len()
    }

    /// `index,label,iterations,converged`, one row per point.
    pub fn write_points_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let wrap = |e: csv::Error| Error::invalid(format!("writing clustering result: {e}"));
        out.write_record(["index", "label", "iterations", "converged"]).map_err(wrap)?;
        for (i, (&l, &it)) in self.labels.iter().zip(&self.iterations).enumerate() {
            let converged = self.unconverged.binary_search(&i).is_err();
            out.write_record([i.to_string(), l.to_string(), it.to_string(), converged.to_string()])
                .map_err(wrap)?;
        }
        out.flush().map_err(|e| Error::invalid(format!("writing clustering result: {e}")))
    }

    /// `label,x1,…,xd`, one row per mode.
    pub fn write_modes_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let wrap = |e: csv::Error| Error::invalid(format!("writing modes: {e}"));
        let d = self.modes.first().map_or(0, Vec::len);
        let header: Vec<String> = std::iter::once("label".to_string())
            .chain((1..=d).map(|j| format!("x{j}")))
            .collect();
        out.write_record(&header).map_err(wrap)?;
        for (l, m) in self.modes.iter().enumerate() {
            let row: Vec<String> = std::iter::once(l.to_string())
                .chain(m.iter().map(|v| v.to_string()))
                .collect();
            out.write_record(&row).map_err(wrap)?;
        }
        out.flush().map_err(|e| Error::invalid(format!("writing modes: {e}")))
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage grouping of converged terminals; unconverged points join
/// the nearest mode but stay listed. With no converged point at all, every
/// terminal takes part in the grouping.
pub fn merge_and_label(outcome: &SeekOutcome, merge_radius: f64) -> Result<ClusteringResult> {
    if !(merge_radius > 0.0) {
        return Err(Error::invalid("merge_radius must be positive"));
    }
    let t = &outcome.terminals;
    let n = t.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    let mut is_member = vec![true; n];
    if outcome.unconverged.len() < n {
        for &i in &outcome.unconverged {
            is_member[i] = false;
        }
    }
    let members: Vec<usize> = (0..n).filter(|&i| is_member[i]).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    for (a, &i) in members.iter().enumerate() {
        for &k in &members[a + 1..] {
            if distance(&t[i], &t[k]) <= merge_radius {
                let (ri, rk) = (find(&mut parent, i), find(&mut parent, k));
                if ri != rk {
                    parent[ri.max(rk)] = ri.min(rk);
                }
            }
        }
    }

    let d = t[0].len();
    let mut label_of_root = vec![usize::MAX; n];
    let mut labels = vec![0; n];
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for &i in &members {
        let r = find(&mut parent, i);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = sums.len();
            sums.push(vec![0.0; d]);
            counts.push(0);
        }
        let l = label_of_root[r];
        labels[i] = l;
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(&t[i]) {
            *s += v;
        }
    }
    let modes: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect();
    for i in (0..n).filter(|&i| !is_member[i]) {
        labels[i] = modes
            .iter()
            .enumerate()
            .min_by(|a, b| distance(&t[i], a.1).total_cmp(&distance(&t[i], b.1)))
            .map(|(l, _)| l)
            .expect("at least one mode");
    }
    Ok(ClusteringResult {
        labels,
        modes,
        iterations: outcome.iterations.clone(),
        unconverged: outcome.unconverged.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClusterMethod {
    /// Gradient clustering with the multi-task estimator.
    MtLsldgc,
    /// Gradient clustering with independent dimensions (`γ = 0`).
    SLsldgc,
    /// Gradient clustering with one shared coefficient vector.
    CLsldgc,
    MeanShift,
}

impl ClusterMethod {
    pub const ALL: [ClusterMethod; 4] = [
        ClusterMethod::MtLsldgc,
        ClusterMethod::SLsldgc,
        ClusterMethod::CLsldgc,
        ClusterMethod::MeanShift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClusterMethod::MtLsldgc => "mtlsldgc",
            ClusterMethod::SLsldgc => "slsldgc",
            ClusterMethod::CLsldgc => "clsldgc",
            ClusterMethod::MeanShift => "meanshift",
        }
    }
}

impl fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClusterMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|m| m.name()).collect();
                Error::invalid(format!("unknown clustering method '{s}'; expected one of {}", names.join(", ")))
            })
    }
}

/// Model-selection inputs for [`cluster`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSelection {
    /// `(σ, λ, γ)` candidates for the gradient methods. The single-task method
    /// uses only `γ = 0`; the shared method ignores `γ`.
    pub grid: Grid,
    /// Mean-shift bandwidth candidates.
    pub bandwidths: Vec<f64>,
    pub k: usize,
    pub b_max: usize,
    pub solver: Solver,
    pub penalty: PenaltyUnits,
}

impl Default for ClusterSelection {
    fn default() -> Self {
        let grid = Grid::clustering();
        Self {
            bandwidths: grid.sigmas().to_vec(),
            grid,
            k: 5,
            b_max: 50,
            solver: Solver::Analytic,
            penalty: PenaltyUnits::Coefficient,
        }
    }
}

#[derive(Debug, Clone)]
pub enum FittedField {
    Gradient { model: GradientModel, report: CvReport },
    Kde { model: KdeModel, selection: BandwidthSelection },
}

#[derive(Debug, Clone)]
pub struct ClusterOutput {
    pub result: ClusteringResult,
    pub fitted: FittedField,
}

/// Selects and fits the method's model on `data`, then seeks modes from every point.
pub fn cluster(
    data: &Dataset,
    method: ClusterMethod,
    selection: &ClusterSelection,
    cfg: &SeekConfig,
    seed: u64,
) -> Result<ClusterOutput> {
    cfg.validate()?;
    let (outcome, fitted) = match method {
        ClusterMethod::MeanShift => {
            let sel = kde_select_bandwidth(data, &selection.bandwidths, selection.k, seed)?;
            let model = KdeModel::new(data.clone(), sel.sigma)?;
            let outcome = seek_modes(&model, data, cfg)?;
            (outcome, FittedField::Kde { model, selection: sel })
        }
        _ => {
            let (grid, estimator) = match method {
                ClusterMethod::SLsldgc => (
                    selection.grid.with_gammas(vec![Gamma::Finite(0.0)])?,
                    Estimator::MultiTask,
                ),
                ClusterMethod::CLsldgc => (selection.grid.clone(), Estimator::Common),
                _ => (selection.grid.clone(), Estimator::MultiTask),
            };
            let sc = SelectConfig {
                k: selection.k,
                seed,
                solver: selection.solver,
                b_max: selection.b_max,
                estimator,
                similarity: None,
                penalty: selection.penalty,
            };
            let (report, model) = select(data, &grid, &sc)?;
            let map = LsldgMap {
                model: &model,
                denominator_floor: cfg.denominator_floor,
            };
            let outcome = seek_modes(&map, data, cfg)?;
            (outcome, FittedField::Gradient { model, report })
        }
    };
    let result = merge_and_label(&outcome, cfg.merge_radius)?;
    Ok(ClusterOutput { result, fitted })
}
