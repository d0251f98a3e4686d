//! The TOML run configuration shared by every subcommand.
//!
//! Each subcommand reads the sections it needs and ignores the rest; any
//! command-line flag overrides the matching key. Unknown keys are rejected so
//! typos do not silently fall back to defaults.
//!
//! ```toml
//! [data]
//! csv = "train.csv"          # or a synthetic source:
//! family = "single_gaussian" # single_gaussian | double_gaussian | three_gaussian_mixture
//! d = 10
//! n = 30
//! seed = 1
//! header = false
//! standardize = false
//!
//! [fit]
//! method = "mt"              # mt | s | c
//! solver = "analytic"        # analytic | bcd
//! folds = 5
//! seed = 0
//! b_max = 50
//! grid = "gradient"          # preset: gradient | clustering
//! sigmas = [0.5, 1.0]        # explicit lists replace the preset's
//! lambdas = [0.01, 0.1]
//! gammas = [0.0, 1.0, inf]
//! bcd_tol = 1e-9
//! bcd_max_sweeps = 1000
//! penalty_units = "kernel"     # or "coefficient"; default follows the preset
//!
//! [seek]
//! max_iters = 1000
//! step_tol = 1e-6
//! merge_radius = 0.05        # default: 1% of the median pairwise distance
//! denominator_floor = 1e-12
//!
//! [cluster]
//! method = "mtlsldgc"        # mtlsldgc | slsldgc | clsldgc | meanshift
//! labels = "truth.csv"
//! bandwidths = [0.1, 1.0]    # mean-shift candidates
//!
//! [experiment]
//! kind = "gradient"          # gradient | clustering
//! family = "single_gaussian"
//! dims = [2, 10, 20]
//! n = 30
//! n_test = 1000
//! repetitions = 20
//! seed = 0
//! methods = ["mt", "s", "c"]
//! standard_errors = true
//! plot = true
//!
//! [output]
//! path = "out.csv"           # file output of generate, fit (model), score
//! report = "cv.csv"          # CV table of fit
//! dir = "results"            # directory output of cluster and experiment
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub data: DataSection,
    pub fit: FitSection,
    pub seek: SeekSection,
    pub cluster: ClusterSection,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub csv: Option<PathBuf>,
    pub family: Option<String>,
    pub d: Option<usize>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub header: Option<bool>,
    pub standardize: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub method: Option<String>,
    pub solver: Option<String>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub b_max: Option<usize>,
    pub grid: Option<String>,
    pub sigmas: Option<Vec<f64>>,
    pub lambdas: Option<Vec<f64>>,
    pub gammas: Option<Vec<f64>>,
    pub bcd_tol: Option<f64>,
    pub bcd_max_sweeps: Option<usize>,
    pub penalty_units: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeekSection {
    pub max_iters: Option<usize>,
    pub step_tol: Option<f64>,
    pub merge_radius: Option<f64>,
    pub denominator_floor: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub method: Option<String>,
    pub labels: Option<PathBuf>,
    pub bandwidths: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: Option<String>,
    pub family: Option<String>,
    pub dims: Option<Vec<usize>>,
    pub n: Option<usize>,
    pub n_test: Option<usize>,
    pub repetitions: Option<usize>,
    pub seed: Option<u64>,
    pub methods: Option<Vec<String>>,
    pub standard_errors: Option<bool>,
    pub plot: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub dir: Option<PathBuf>,
}

impl ConfigFile {
    /// Parses a config file. Relative paths inside it are resolved against
    /// the file's own directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.data.csv,
            &mut cfg.cluster.labels,
            &mut cfg.output.path,
            &mut cfg.output.report,
            &mut cfg.output.dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load_optional(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
