//! Repeated-run experiments.
//!
//! A gradient experiment draws, per dimensionality `d` and repetition `r`, a
//! training and a test set with seeds derived from `seed + r`, fits every
//! requested estimator by cross-validation on the training set and records
//! its test score. When the multi-task method is run, its CV report also
//! yields one model per `γ` (best `σ, λ` at that `γ`, refit on the training
//! set); the score of each minus the `γ = 0` score is the relative score.
//!
//! A clustering experiment draws labeled mixture data, clusters it with every
//! requested method and records the adjusted Rand index.
//!
//! Files written to the output directory:
//!
//! | file | rows |
//! |------|------|
//! | `runs.csv` | one per `(d, r, method)`; the value is the test score or the ARI |
//! | `summary.csv` | one per `(d, method)`: mean and standard error over repetitions |
//! | `gamma_runs.csv` | gradient only: one per `(d, r, γ)` |
//! | `relative.csv` | gradient only: mean relative score per `(d, γ)` |
//! | `clusters.csv` | clustering only: cluster and unconverged counts per run |
//! | `relative.svg` / `ari.svg` | plots of the above |
//!
//! The summaries are pure functions of the per-run files, see [`summarize`]
//! and [`summarize_relative`].

use std::fs;
use std::path::Path;

use lsldg_core::basis::select_centers;
use lsldg_core::clustering::{cluster, ClusterMethod, ClusterSelection};
use lsldg_core::data::{derive_seed, generate, generate_labeled, Family, SyntheticSpec};
use lsldg_core::estimator::{uniform_similarity, Gamma};
use lsldg_core::metrics::{ari, test_score};
use lsldg_core::modelsel::{fit, select, CvReport, Estimator};
use rayon::prelude::*;

use crate::commands::{family, parse, resolve_seek, resolve_selection, FitMethod, Selection};
use crate::config::{ConfigFile, SeekSection};
use crate::error::{CliError, CliResult};
use crate::{plot, ExperimentArgs, SeekArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Gradient,
    Clustering,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Gradient(FitMethod),
    Cluster(ClusterMethod),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gradient(m) => m.name(),
            Method::Cluster(m) => m.name(),
        }
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub family: Family,
    pub dims: Vec<usize>,
    pub n: usize,
    /// Test-set size of gradient experiments.
    pub n_test: usize,
    pub repetitions: usize,
    /// `selection.seed` is the base seed.
    pub selection: Selection,
    pub methods: Vec<Method>,
    pub seek: SeekArgs,
    pub bandwidths: Option<Vec<f64>>,
    pub standard_errors: bool,
    pub plot: bool,
}

fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| file.clone())
}

impl ExperimentConfig {
    pub fn resolve(args: &ExperimentArgs, file: &ConfigFile) -> CliResult<Self> {
        let ex = &file.experiment;
        let kind = match pick(&args.kind, &ex.kind).as_deref().unwrap_or("gradient") {
            "gradient" => Kind::Gradient,
            "clustering" => Kind::Clustering,
            other => {
                return Err(CliError::usage(format!(
                    "unknown experiment kind '{other}'; expected gradient or clustering"
                )))
            }
        };
        let (default_family, default_n, preset) = match kind {
            Kind::Gradient => ("single_gaussian", 30, "gradient"),
            Kind::Clustering => ("three_gaussian_mixture", 300, "clustering"),
        };
        let mut fit_section = file.fit.clone();
        fit_section.seed = fit_section.seed.or(ex.seed);
        let selection = resolve_selection(&args.select, &fit_section, preset)?;

        let methods = match pick(&args.methods, &ex.methods) {
            Some(names) => names
                .iter()
                .map(|s| match kind {
                    Kind::Gradient => parse::<FitMethod>("method", s).map(Method::Gradient),
                    Kind::Clustering => Ok(Method::Cluster(s.parse()?)),
                })
                .collect::<CliResult<Vec<_>>>()?,
            None => match kind {
                Kind::Gradient => FitMethod::ALL.into_iter().map(Method::Gradient).collect(),
                Kind::Clustering => ClusterMethod::ALL.into_iter().map(Method::Cluster).collect(),
            },
        };
        if methods.is_empty() {
            return Err(CliError::usage("no methods requested"));
        }
        if methods.contains(&Method::Gradient(FitMethod::MultiTask))
            && !selection.grid.gammas().iter().any(|g| g.is_zero())
        {
            return Err(CliError::usage(
                "the gamma grid must contain 0: relative scores are measured against it",
            ));
        }

        let repetitions = pick(&args.repetitions, &ex.repetitions).unwrap_or(20);
        let standard_errors = !args.no_standard_errors && ex.standard_errors.unwrap_or(true);
        if repetitions == 0 {
            return Err(CliError::usage("repetitions must be at least 1"));
        }
        if standard_errors && repetitions < 2 {
            return Err(CliError::usage(
                "standard errors need at least 2 repetitions; pass --no-standard-errors or set standard_errors = false",
            ));
        }
        let dims = pick(&args.dims, &ex.dims).unwrap_or_else(|| vec![10]);
        if dims.is_empty() || dims.contains(&0) {
            return Err(CliError::usage("dims must be a nonempty list of positive integers"));
        }
        let seek = merge_seek(&args.seek, &file.seek);
        Ok(Self {
            kind,
            family: family(pick(&args.family, &ex.family).as_deref().unwrap_or(default_family))?,
            dims,
            n: pick(&args.n, &ex.n).unwrap_or(default_n),
            n_test: pick(&args.n_test, &ex.n_test).unwrap_or(1000),
            repetitions,
            selection,
            methods,
            seek,
            bandwidths: pick(&args.bandwidths, &file.cluster.bandwidths),
            standard_errors,
            plot: !args.no_plot && ex.plot.unwrap_or(true),
        })
    }
}

fn merge_seek(a: &SeekArgs, s: &SeekSection) -> SeekArgs {
    SeekArgs {
        max_iters: a.max_iters.or(s.max_iters),
        step_tol: a.step_tol.or(s.step_tol),
        merge_radius: a.merge_radius.or(s.merge_radius),
        denominator_floor: a.denominator_floor.or(s.denominator_floor),
    }
}

/// One `(d, repetition, method)` outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub d: usize,
    pub rep: usize,
    pub seed: u64,
    pub method: String,
    pub value: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaRow {
    pub d: usize,
    pub rep: usize,
    pub gamma: Gamma,
    pub score: Option<f64>,
    /// `score − score(γ = 0)`.
    pub relative: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRow {
    pub d: usize,
    pub rep: usize,
    pub method: String,
    pub clusters: usize,
    pub unconverged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub d: usize,
    pub method: String,
    pub ok: usize,
    pub failed: usize,
    pub mean: Option<f64>,
    pub se: Option<f64>,
}

impl SummaryRow {
    pub fn complete(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeRow {
    pub d: usize,
    pub gamma: Gamma,
    pub runs: usize,
    pub mean: Option<f64>,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub runs: Vec<RunRow>,
    pub gamma_runs: Vec<GammaRow>,
    pub clusters: Vec<ClusterRow>,
    pub summary: Vec<SummaryRow>,
    pub relative: Vec<RelativeRow>,
}

/// `(mean, standard error)`; the error is `sd / √n` with the `n − 1` variance.
pub fn mean_se(values: &[f64], with_se: bool) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let se = (with_se && values.len() >= 2).then(|| {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    });
    (Some(mean), se)
}

/// Groups runs by `(d, method)` in order of first appearance.
pub fn summarize(runs: &[RunRow], with_se: bool) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, &str)> = Vec::new();
    for r in runs {
        if !keys.contains(&(r.d, r.method.as_str())) {
            keys.push((r.d, &r.method));
        }
    }
    keys.into_iter()
        .map(|(d, m)| {
            let group: Vec<&RunRow> = runs.iter().filter(|r| r.d == d && r.method == m).collect();
            let values: Vec<f64> = group.iter().filter_map(|r| r.value).collect();
            let (mean, se) = mean_se(&values, with_se);
            SummaryRow {
                d,
                method: m.to_string(),
                ok: values.len(),
                failed: group.len() - values.len(),
                mean,
                se,
            }
        })
        .collect()
}

/// Groups relative scores by `(d, γ)` in order of first appearance.
pub fn summarize_relative(rows: &[GammaRow], with_se: bool) -> Vec<RelativeRow> {
    let mut keys: Vec<(usize, Gamma)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.d, r.gamma)) {
            keys.push((r.d, r.gamma));
        }
    }
    keys.into_iter()
        .map(|(d, gamma)| {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.d == d && r.gamma == gamma)
                .filter_map(|r| r.relative)
                .collect();
            let (mean, se) = mean_se(&values, with_se);
            RelativeRow {
                d,
                gamma,
                runs: values.len(),
                mean,
                se,
            }
        })
        .collect()
}

fn data_seed(seed: u64, d: usize, which: u64) -> u64 {
    derive_seed(seed, ((d as u64) << 8) | which)
}

struct JobOutput {
    runs: Vec<RunRow>,
    gamma_runs: Vec<GammaRow>,
    clusters: Vec<ClusterRow>,
}

fn gradient_job(cfg: &ExperimentConfig, d: usize, rep: usize) -> JobOutput {
    let seed = cfg.selection.seed.wrapping_add(rep as u64);
    let row = |method: &str, r: Result<f64, String>| RunRow {
        d,
        rep,
        seed,
        method: method.to_string(),
        value: r.as_ref().ok().copied(),
        error: r.err(),
    };
    let drawn = generate(&SyntheticSpec::new(cfg.family.clone(), d, cfg.n, data_seed(seed, d, 1))).and_then(|train| {
        let test = generate(&SyntheticSpec::new(cfg.family.clone(), d, cfg.n_test, data_seed(seed, d, 2)))?;
        Ok((train, test))
    });
    let (train, test) = match drawn {
        Ok(t) => t,
        Err(e) => {
            let msg = e.to_string();
            return JobOutput {
                runs: cfg.methods.iter().map(|m| row(m.name(), Err(msg.clone()))).collect(),
                gamma_runs: Vec::new(),
                clusters: Vec::new(),
            };
        }
    };
    let mut sel = cfg.selection.clone();
    sel.seed = seed;

    let mut runs = Vec::new();
    let mut mt_report: Option<CvReport> = None;
    for &m in &cfg.methods {
        let Method::Gradient(fm) = m else { continue };
        let result = fm
            .grid(&sel.grid)
            .map_err(|e| e.to_string())
            .and_then(|grid| select(&train, &grid, &sel.config(fm.estimator())).map_err(|e| e.to_string()))
            .and_then(|(report, model)| {
                let s = test_score(&model, &test).map_err(|e| e.to_string())?;
                if fm == FitMethod::MultiTask {
                    mt_report = Some(report);
                }
                Ok(s)
            });
        runs.push(row(fm.name(), result));
    }

    let mut gamma_runs = Vec::new();
    if cfg.methods.contains(&Method::Gradient(FitMethod::MultiTask)) {
        let per_gamma: Vec<(Gamma, Result<f64, String>)> = sel
            .grid
            .gammas()
            .iter()
            .map(|&gamma| {
                let r = (|| {
                    let report = mt_report.as_ref().ok_or("multi-task selection failed")?;
                    let best = report
                        .best_for_gamma(gamma)
                        .ok_or("every grid point at this gamma failed")?;
                    let basis = select_centers(&train, sel.b_max, seed)
                        .and_then(|c| c.with_bandwidth(best.sigma))
                        .map_err(|e| e.to_string())?;
                    let hp = sel
                        .penalty
                        .hyper(best.sigma, best.lambda, gamma, uniform_similarity(d))
                        .map_err(|e| e.to_string())?;
                    let model = fit(&train, &basis, &hp, Estimator::MultiTask, &sel.solver).map_err(|e| e.to_string())?;
                    test_score(&model, &test).map_err(|e| e.to_string())
                })();
                (gamma, r.map_err(|e: String| e))
            })
            .collect();
        let reference = per_gamma
            .iter()
            .find(|(g, _)| g.is_zero())
            .and_then(|(_, r)| r.as_ref().ok().copied());
        for (gamma, r) in per_gamma {
            gamma_runs.push(GammaRow {
                d,
                rep,
                gamma,
                score: r.as_ref().ok().copied(),
                relative: match (&r, reference) {
                    (Ok(s), Some(base)) => Some(s - base),
                    _ => None,
                },
                error: r.err(),
            });
        }
    }
    JobOutput {
        runs,
        gamma_runs,
        clusters: Vec::new(),
    }
}

fn clustering_job(cfg: &ExperimentConfig, d: usize, rep: usize) -> JobOutput {
    let seed = cfg.selection.seed.wrapping_add(rep as u64);
    let mut out = JobOutput {
        runs: Vec::new(),
        gamma_runs: Vec::new(),
        clusters: Vec::new(),
    };
    let drawn = generate_labeled(&SyntheticSpec::new(cfg.family.clone(), d, cfg.n, data_seed(seed, d, 1)));
    for &m in &cfg.methods {
        let Method::Cluster(cm) = m else { continue };
        let result = (|| -> CliResult<(f64, usize, usize)> {
            let (data, truth) = drawn.as_ref().map_err(|e| CliError::usage(e.to_string()))?;
            let seek = resolve_seek(&cfg.seek, &SeekSection::default(), data)?;
            let selection = ClusterSelection {
                grid: cfg.selection.grid.clone(),
                bandwidths: cfg
                    .bandwidths
                    .clone()
                    .unwrap_or_else(|| cfg.selection.grid.sigmas().to_vec()),
                k: cfg.selection.k,
                b_max: cfg.selection.b_max,
                solver: cfg.selection.solver,
                penalty: cfg.selection.penalty,
            };
            let res = cluster(data, cm, &selection, &seek, seed)?.result;
            Ok((ari(&res.labels, truth)?, res.num_clusters(), res.unconverged.len()))
        })();
        if let Ok((_, clusters, unconverged)) = &result {
            out.clusters.push(ClusterRow {
                d,
                rep,
                method: cm.name().to_string(),
                clusters: *clusters,
                unconverged: *unconverged,
            });
        }
        out.runs.push(RunRow {
            d,
            rep,
            seed,
            method: cm.name().to_string(),
            value: result.as_ref().ok().map(|r| r.0),
            error: result.err().map(|e| e.to_string()),
        });
    }
    out
}

/// Runs every `(d, repetition)` job (in parallel) and summarizes, in a fixed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> ExperimentOutput {
    let jobs: Vec<(usize, usize)> = cfg
        .dims
        .iter()
        .flat_map(|&d| (0..cfg.repetitions).map(move |r| (d, r)))
        .collect();
    let results: Vec<JobOutput> = jobs
        .par_iter()
        .map(|&(d, r)| match cfg.kind {
            Kind::Gradient => gradient_job(cfg, d, r),
            Kind::Clustering => clustering_job(cfg, d, r),
        })
        .collect();
    let mut out = ExperimentOutput::default();
    for j in results {
        out.runs.extend(j.runs);
        out.gamma_runs.extend(j.gamma_runs);
        out.clusters.extend(j.clusters);
    }
    out.summary = summarize(&out.runs, cfg.standard_errors);
    out.relative = summarize_relative(&out.gamma_runs, cfg.standard_errors);
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let wrap = |e: csv::Error| CliError::usage(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_outputs(out: &ExperimentOutput, cfg: &ExperimentConfig, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let metric = match cfg.kind {
        Kind::Gradient => "test_score",
        Kind::Clustering => "ari",
    };
    write_table(
        &dir.join("runs.csv"),
        &["d", "rep", "seed", "method", "metric", "value", "error"],
        out.runs.iter().map(|r| {
            vec![
                r.d.to_string(),
                r.rep.to_string(),
                r.seed.to_string(),
                r.method.clone(),
                metric.to_string(),
                opt(r.value),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )?;
    write_table(
        &dir.join("summary.csv"),
        &["d", "method", "metric", "runs", "failed", "complete", "mean", "se"],
        out.summary.iter().map(|s| {
            vec![
                s.d.to_string(),
                s.method.clone(),
                metric.to_string(),
                s.ok.to_string(),
                s.failed.to_string(),
                s.complete().to_string(),
                opt(s.mean),
                opt(s.se),
            ]
        }),
    )?;
    match cfg.kind {
        Kind::Gradient if !out.gamma_runs.is_empty() => {
            write_table(
                &dir.join("gamma_runs.csv"),
                &["d", "rep", "gamma", "score", "relative", "error"],
                out.gamma_runs.iter().map(|g| {
                    vec![
                        g.d.to_string(),
                        g.rep.to_string(),
                        g.gamma.to_string(),
                        opt(g.score),
                        opt(g.relative),
                        g.error.clone().unwrap_or_default(),
                    ]
                }),
            )?;
            write_table(
                &dir.join("relative.csv"),
                &["d", "gamma", "runs", "mean", "se"],
                out.relative.iter().map(|r| {
                    vec![r.d.to_string(), r.gamma.to_string(), r.runs.to_string(), opt(r.mean), opt(r.se)]
                }),
            )?;
            if cfg.plot {
                plot::relative_scores(&out.relative, cfg.selection.grid.gammas(), &dir.join("relative.svg"))?;
            }
        }
        Kind::Gradient => {}
        Kind::Clustering => {
            write_table(
                &dir.join("clusters.csv"),
                &["d", "rep", "method", "clusters", "unconverged"],
                out.clusters.iter().map(|c| {
                    vec![
                        c.d.to_string(),
                        c.rep.to_string(),
                        c.method.clone(),
                        c.clusters.to_string(),
                        c.unconverged.to_string(),
                    ]
                }),
            )?;
            if cfg.plot {
                plot::ari_by_dimension(&out.summary, &dir.join("ari.svg"))?;
            }
        }
    }
    Ok(())
}

fn reader(path: &Path) -> CliResult<csv::Reader<fs::File>> {
    csv::Reader::from_path(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> CliResult<Option<T>> {
    let s = rec.get(i).unwrap_or("");
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| CliError::usage(format!("{}: bad field '{s}'", path.display())))
}

fn need<T>(v: Option<T>, path: &Path) -> CliResult<T> {
    v.ok_or_else(|| CliError::usage(format!("{}: missing required field", path.display())))
}

/// Reads back a `runs.csv`.
pub fn read_runs_csv(path: &Path) -> CliResult<Vec<RunRow>> {
    let mut rows = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let error: Option<String> = field(&rec, 6, path)?;
        rows.push(RunRow {
            d: need(field(&rec, 0, path)?, path)?,
            rep: need(field(&rec, 1, path)?, path)?,
            seed: need(field(&rec, 2, path)?, path)?,
            method: need(field(&rec, 3, path)?, path)?,
            value: field(&rec, 5, path)?,
            error,
        });
    }
    Ok(rows)
}

/// Reads back a `gamma_runs.csv`.
pub fn read_gamma_runs_csv(path: &Path) -> CliResult<Vec<GammaRow>> {
    let mut rows = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let g: f64 = need(field(&rec, 2, path)?, path)?;
        rows.push(GammaRow {
            d: need(field(&rec, 0, path)?, path)?,
            rep: need(field(&rec, 1, path)?, path)?,
            gamma: Gamma::new(g)?,
            score: field(&rec, 3, path)?,
            relative: field(&rec, 4, path)?,
            error: field(&rec, 5, path)?,
        });
    }
    Ok(rows)
}

pub fn cmd_experiment(args: &ExperimentArgs) -> CliResult<()> {
    let file = ConfigFile::load_optional(args.config.as_deref())?;
    let cfg = ExperimentConfig::resolve(args, &file)?;
    let dir = args
        .out_dir
        .clone()
        .or(file.output.dir.clone())
        .ok_or_else(|| CliError::usage("missing output directory: pass --out-dir"))?;
    let out = match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?
            .install(|| run_experiment(&cfg)),
        None => run_experiment(&cfg),
    };
    write_outputs(&out, &cfg, &dir)?;
    let failed: usize = out.summary.iter().map(|s| s.failed).sum();
    for s in &out.summary {
        eprintln!(
            "d={} {}: mean {} se {} ({} runs{})",
            s.d,
            s.method,
            opt(s.mean),
            opt(s.se),
            s.ok,
            if s.complete() { String::new() } else { format!(", {} failed", s.failed) }
        );
    }
    if failed > 0 && out.summary.iter().all(|s| s.ok == 0) {
        return Err(CliError::Numerical("every run failed".into()));
    }
    Ok(())
}
