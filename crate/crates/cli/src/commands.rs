//! The `generate`, `fit`, `score` and `cluster` subcommands, and the
//! flag-over-config resolution they share with `experiment`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lsldg_core::clustering::{cluster as run_clustering, ClusterMethod, ClusterSelection, FittedField, SeekConfig};
use lsldg_core::data::{
    generate_labeled, load_csv, save_csv, standardize, Dataset, Family, Standardization, SyntheticSpec,
};
use lsldg_core::estimator::{load_model, save_model, BcdOptions, Gamma};
use lsldg_core::metrics::{ari, test_score};
use lsldg_core::modelsel::{select, Estimator, Grid, PenaltyUnits, SelectConfig, Solver};

use crate::config::{ConfigFile, DataSection, FitSection, SeekSection};
use crate::error::{CliError, CliResult};
use crate::{ClusterArgs, DataArgs, FitArgs, GenerateArgs, ScoreArgs, SeekArgs, SelectArgs};

pub(crate) fn parse<T: FromStr>(what: &str, s: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse()
        .map_err(|e| CliError::usage(format!("invalid {what} '{s}': {e}")))
}

pub(crate) fn family(s: &str) -> CliResult<Family> {
    parse("family", s)
}

/// Gradient estimators selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitMethod {
    /// Multi-task, `γ` cross-validated.
    MultiTask,
    /// Independent dimensions, `γ = 0`.
    Single,
    /// One shared coefficient vector.
    Common,
}

impl FitMethod {
    pub const ALL: [FitMethod; 3] = [FitMethod::MultiTask, FitMethod::Single, FitMethod::Common];

    pub fn name(self) -> &'static str {
        match self {
            FitMethod::MultiTask => "mt",
            FitMethod::Single => "s",
            FitMethod::Common => "c",
        }
    }

    pub fn estimator(self) -> Estimator {
        match self {
            FitMethod::Common => Estimator::Common,
            _ => Estimator::MultiTask,
        }
    }

    /// The grid this method searches, derived from the full grid.
    pub fn grid(self, full: &Grid) -> CliResult<Grid> {
        match self {
            FitMethod::Single => Ok(full.with_gammas(vec![Gamma::Finite(0.0)])?),
            _ => Ok(full.clone()),
        }
    }
}

impl FromStr for FitMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        FitMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| "expected one of mt, s, c".to_string())
    }
}

/// Hyperparameter search settings after applying flags over config.
#[derive(Debug, Clone)]
pub struct Selection {
    pub grid: Grid,
    pub solver: Solver,
    pub k: usize,
    pub seed: u64,
    pub b_max: usize,
    pub penalty: PenaltyUnits,
}

impl Selection {
    pub fn config(&self, estimator: Estimator) -> SelectConfig {
        SelectConfig {
            k: self.k,
            seed: self.seed,
            solver: self.solver,
            b_max: self.b_max,
            estimator,
            similarity: None,
            penalty: self.penalty,
        }
    }
}

pub(crate) fn resolve_selection(args: &SelectArgs, sec: &FitSection, default_preset: &str) -> CliResult<Selection> {
    let preset = args.grid.as_deref().or(sec.grid.as_deref()).unwrap_or(default_preset);
    // Each preset's penalties are calibrated in its own units.
    let (base, preset_units) = match preset {
        "gradient" => (Grid::gradient_experiment(), PenaltyUnits::KernelScale),
        "clustering" => (Grid::clustering(), PenaltyUnits::Coefficient),
        other => {
            return Err(CliError::usage(format!(
                "unknown grid preset '{other}'; expected gradient or clustering"
            )))
        }
    };
    let sigmas = args.sigmas.clone().or(sec.sigmas.clone()).unwrap_or(base.sigmas().to_vec());
    let lambdas = args.lambdas.clone().or(sec.lambdas.clone()).unwrap_or(base.lambdas().to_vec());
    let gammas = match args.gammas.clone().or(sec.gammas.clone()) {
        Some(g) => g.into_iter().map(Gamma::new).collect::<Result<_, _>>()?,
        None => base.gammas().to_vec(),
    };
    let grid = Grid::new(sigmas, lambdas, gammas)?;

    let bcd = BcdOptions {
        tol: args.bcd_tol.or(sec.bcd_tol).unwrap_or(BcdOptions::default().tol),
        max_sweeps: args
            .bcd_max_sweeps
            .or(sec.bcd_max_sweeps)
            .unwrap_or(BcdOptions::default().max_sweeps),
        record_objective: false,
    };
    let solver = match args.solver.as_deref().or(sec.solver.as_deref()).unwrap_or("analytic") {
        "analytic" => Solver::Analytic,
        "bcd" => Solver::Bcd(bcd),
        other => {
            return Err(CliError::usage(format!(
                "unknown solver '{other}'; expected analytic or bcd"
            )))
        }
    };
    Ok(Selection {
        grid,
        solver,
        k: args.folds.or(sec.folds).unwrap_or(5),
        seed: args.seed.or(sec.seed).unwrap_or(0),
        b_max: args.b_max.or(sec.b_max).unwrap_or(50),
        penalty: args
            .penalty_units
            .as_deref()
            .or(sec.penalty_units.as_deref())
            .map_or(Ok(preset_units), str::parse)?,
    })
}

pub(crate) fn resolve_seek(args: &SeekArgs, sec: &SeekSection, data: &Dataset) -> CliResult<SeekConfig> {
    let d = SeekConfig::for_data(data);
    Ok(SeekConfig::new(
        args.max_iters.or(sec.max_iters).unwrap_or(d.max_iters),
        args.step_tol.or(sec.step_tol).unwrap_or(d.step_tol),
        args.merge_radius.or(sec.merge_radius).unwrap_or(d.merge_radius),
        args.denominator_floor.or(sec.denominator_floor).unwrap_or(d.denominator_floor),
    )?)
}

/// Loads the CSV if one is named, else draws the synthetic source, then
/// standardizes when asked.
pub(crate) fn load_data(args: &DataArgs, sec: &DataSection) -> CliResult<(Dataset, Option<Standardization>)> {
    let data = match args.data.as_ref().or(sec.csv.as_ref()) {
        Some(path) => load_csv(path, args.header || sec.header.unwrap_or(false))?,
        None => {
            let name = args.family.as_deref().or(sec.family.as_deref()).ok_or_else(|| {
                CliError::usage("no input data: pass --data <csv> or a synthetic --family")
            })?;
            let spec = SyntheticSpec::new(
                family(name)?,
                args.d.or(sec.d).ok_or_else(|| CliError::usage("synthetic data needs --dim"))?,
                args.n.or(sec.n).ok_or_else(|| CliError::usage("synthetic data needs --n"))?,
                args.data_seed.or(sec.seed).unwrap_or(0),
            );
            generate_labeled(&spec)?.0
        }
    };
    if args.standardize || sec.standardize.unwrap_or(false) {
        let (z, t) = standardize(&data)?;
        Ok((z, Some(t)))
    } else {
        Ok((data, None))
    }
}

fn required(path: Option<&PathBuf>, what: &str) -> CliResult<PathBuf> {
    path.cloned()
        .ok_or_else(|| CliError::usage(format!("missing output path: pass {what}")))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn generate(args: &GenerateArgs) -> CliResult<()> {
    let cfg = ConfigFile::load_optional(args.config.as_deref())?;
    let name = args
        .family
        .as_deref()
        .or(cfg.data.family.as_deref())
        .ok_or_else(|| CliError::usage("missing --family"))?;
    let spec = SyntheticSpec::new(
        family(name)?,
        args.d.or(cfg.data.d).ok_or_else(|| CliError::usage("missing --dim"))?,
        args.n.or(cfg.data.n).ok_or_else(|| CliError::usage("missing --n"))?,
        args.seed.or(cfg.data.seed).unwrap_or(0),
    );
    let out = required(args.out.as_ref().or(cfg.output.path.as_ref()), "--out")?;
    let (data, labels) = generate_labeled(&spec)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    save_csv(&data, &out)?;
    let meta = format!(
        "family = \"{}\"\nd = {}\nn = {}\nseed = {}\n",
        spec.family, spec.d, spec.n, spec.seed
    );
    write_file(&with_suffix(&out, ".meta.toml"), meta)?;
    if let Some(path) = &args.labels_out {
        write_file(path, labels_csv(&labels))?;
    }
    eprintln!("wrote {} ({} x {})", out.display(), data.n(), data.d());
    Ok(())
}

pub(crate) fn labels_csv(labels: &[usize]) -> String {
    let mut s = String::from("label\n");
    for l in labels {
        s.push_str(&format!("{l}\n"));
    }
    s
}

/// One nonnegative integer per line; a non-numeric first line is a header.
pub fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<usize>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => {}
            Err(_) => {
                return Err(CliError::usage(format!(
                    "{}: line {}: '{line}' is not a label",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

fn transform_csv(t: &Standardization) -> String {
    let mut s = String::from("column,mean,scale\n");
    for (j, (m, sc)) in t.means.iter().zip(&t.scales).enumerate() {
        s.push_str(&format!("{},{m},{sc}\n", j + 1));
    }
    s
}

fn read_transform(path: &Path) -> CliResult<Standardization> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (mut means, mut scales) = (Vec::new(), Vec::new());
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(CliError::usage(format!("{}: malformed line '{line}'", path.display())));
        }
        means.push(parse("mean", f[1])?);
        scales.push(parse("scale", f[2])?);
    }
    Ok(Standardization { means, scales })
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let cfg = ConfigFile::load_optional(args.config.as_deref())?;
    let method: FitMethod = parse("method", args.method.as_deref().or(cfg.fit.method.as_deref()).unwrap_or("mt"))?;
    let sel = resolve_selection(&args.select, &cfg.fit, "gradient")?;
    let out = required(args.out.as_ref().or(cfg.output.path.as_ref()), "--out")?;
    let report_path = args
        .report
        .clone()
        .or(cfg.output.report.clone())
        .unwrap_or_else(|| with_suffix(&out, ".cv.csv"));
    let (data, transform) = load_data(&args.data, &cfg.data)?;

    let (report, model) = select(&data, &method.grid(&sel.grid)?, &sel.config(method.estimator()))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    save_model(&model, &out)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write_file(&report_path, buf)?;
    if let Some(t) = &transform {
        write_file(&with_suffix(&out, ".transform.csv"), transform_csv(t))?;
    }
    let c = report.chosen();
    eprintln!(
        "chose sigma={} lambda={} gamma={} (cv score {}); {} of {} grid points failed",
        c.sigma,
        c.lambda,
        c.gamma,
        c.mean,
        report.failures.len(),
        report.failures.len() + report.entries.len()
    );
    Ok(())
}

pub fn score(args: &ScoreArgs) -> CliResult<()> {
    let cfg = ConfigFile::load_optional(args.config.as_deref())?;
    let model = load_model(&args.model)?;
    let (mut data, _) = load_data(&args.data, &cfg.data)?;
    if let Some(path) = &args.transform {
        data = read_transform(path)?.apply(&data)?;
    }
    if data.d() != model.dim() {
        return Err(CliError::usage(format!(
            "model has dimension {}, data has {}",
            model.dim(),
            data.d()
        )));
    }
    let s = test_score(&model, &data)?;
    let row = format!("n,d,score\n{},{},{s}\n", data.n(), data.d());
    match args.out.as_ref().or(cfg.output.path.as_ref()) {
        Some(path) => write_file(path, row),
        None => {
            print!("{row}");
            Ok(())
        }
    }
}

pub fn cluster(args: &ClusterArgs) -> CliResult<()> {
    let cfg = ConfigFile::load_optional(args.config.as_deref())?;
    let method: ClusterMethod = args
        .method
        .as_deref()
        .or(cfg.cluster.method.as_deref())
        .unwrap_or("mtlsldgc")
        .parse()?;
    let sel = resolve_selection(&args.select, &cfg.fit, "clustering")?;
    let out_dir = required(args.out_dir.as_ref().or(cfg.output.dir.as_ref()), "--out-dir")?;
    let (data, _) = load_data(&args.data, &cfg.data)?;
    let truth = match args.labels.as_ref().or(cfg.cluster.labels.as_ref()) {
        Some(p) => {
            let l = read_labels(p)?;
            if l.len() != data.n() {
                return Err(CliError::usage(format!(
                    "{} has {} labels for {} samples",
                    p.display(),
                    l.len(),
                    data.n()
                )));
            }
            Some(l)
        }
        None => None,
    };
    let seek = resolve_seek(&args.seek, &cfg.seek, &data)?;
    let selection = ClusterSelection {
        bandwidths: args
            .bandwidths
            .clone()
            .or(cfg.cluster.bandwidths.clone())
            .unwrap_or_else(|| sel.grid.sigmas().to_vec()),
        grid: sel.grid,
        k: sel.k,
        b_max: sel.b_max,
        penalty: sel.penalty,
        solver: sel.solver,
    };
    let output = run_clustering(&data, method, &selection, &seek, sel.seed)?;
    let res = &output.result;

    let mut points = Vec::new();
    res.write_points_csv(&mut points)?;
    write_file(&out_dir.join("points.csv"), points)?;
    let mut modes = Vec::new();
    res.write_modes_csv(&mut modes)?;
    write_file(&out_dir.join("modes.csv"), modes)?;
    if let FittedField::Gradient { model, report } = &output.fitted {
        save_model(model, out_dir.join("model.toml"))?;
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        write_file(&out_dir.join("cv.csv"), buf)?;
    }
    let mut msg = format!(
        "{method}: {} clusters, {} unconverged points",
        res.num_clusters(),
        res.unconverged.len()
    );
    if let Some(truth) = truth {
        let a = ari(&res.labels, &truth)?;
        write_file(
            &out_dir.join("ari.csv"),
            format!("method,ari,clusters,unconverged\n{method},{a},{},{}\n", res.num_clusters(), res.unconverged.len()),
        )?;
        msg.push_str(&format!(", ARI {a}"));
    }
    eprintln!("{msg}");
    Ok(())
}
