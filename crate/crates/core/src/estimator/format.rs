//! Plain-text model files.
//!
//! A model file is TOML:
//!
//! ```toml
//! format = "lsldg-gradient-model"
//! version = 1
//! d = 2
//! b = 3
//! bandwidths = [0.5, 0.5]
//! centers = [[0.1, 0.2], [0.3, -1.0], [2.0, 0.0]]   # b rows of length d
//! theta = [[1.0, 2.0, 3.0], [0.0, -1.0, 4.0]]       # d rows of length b
//!
//! [hyperparameters]            # optional
//! estimator = "multi_task"     # or "common"
//! sigma = 0.5
//! lambda = 0.01
//! gamma = inf                  # any float >= 0, or inf
//! similarity = [[0.0, 1.0], [1.0, 0.0]]
//! ```
//!
//! Floats are written in shortest round-trip form, so loading a saved model
//! reproduces every coefficient bit for bit.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Estimator, Gamma, GradientModel, HyperParams, Theta};
use crate::basis::{BasisSpec, Centers};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "lsldg-gradient-model";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    d: usize,
    b: usize,
    bandwidths: Vec<f64>,
    centers: Vec<Vec<f64>>,
    theta: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hyperparameters: Option<HyperFile>,
}

#[derive(Serialize, Deserialize)]
struct HyperFile {
    estimator: Estimator,
    sigma: f64,
    lambda: f64,
    gamma: Gamma,
    similarity: Vec<Vec<f64>>,
}

pub fn write_model(model: &GradientModel) -> Result<String> {
    let basis = model.basis();
    let (d, b) = (basis.dim(), basis.num_basis());
    let file = ModelFile {
        format: FORMAT_TAG.into(),
        version: MODEL_FORMAT_VERSION,
        d,
        b,
        bandwidths: basis.bandwidths().to_vec(),
        centers: (0..b).map(|k| basis.centers().center(k).to_vec()).collect(),
        theta: (0..d)
            .map(|j| model.theta().row(j).iter().copied().collect())
            .collect(),
        hyperparameters: model.hyper().map(|(hp, est)| HyperFile {
            estimator: *est,
            sigma: hp.sigma,
            lambda: hp.lambda,
            gamma: hp.gamma,
            similarity: (0..d)
                .map(|j| hp.similarity().row(j).iter().copied().collect())
                .collect(),
        }),
    };
    toml::to_string(&file).map_err(|e| Error::ModelFormat(e.to_string()))
}

pub fn read_model(text: &str) -> Result<GradientModel> {
    let file: ModelFile = toml::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    if file.format != FORMAT_TAG {
        return Err(Error::ModelFormat(format!(
            "unexpected format tag {:?}",
            file.format
        )));
    }
    if file.version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported version {} (this build reads {MODEL_FORMAT_VERSION})",
            file.version
        )));
    }
    let (d, b) = (file.d, file.b);
    let shape_err = |what: &str| Error::ModelFormat(format!("{what} does not match d = {d}, b = {b}"));
    if file.centers.len() != b || file.centers.iter().any(|r| r.len() != d) {
        return Err(shape_err("centers"));
    }
    if file.theta.len() != d || file.theta.iter().any(|r| r.len() != b) {
        return Err(shape_err("theta"));
    }
    let centers = Centers::from_row_major(b, d, file.centers.concat())?;
    let basis = BasisSpec::new(centers, file.bandwidths)?;
    let theta = Theta::from_fn(d, b, |j, k| file.theta[j][k]);
    let model = GradientModel::new(basis, theta)?;
    match file.hyperparameters {
        None => Ok(model),
        Some(h) => {
            if h.similarity.len() != d || h.similarity.iter().any(|r| r.len() != d) {
                return Err(shape_err("similarity"));
            }
            let sim = DMatrix::from_fn(d, d, |i, j| h.similarity[i][j]);
            let hp = HyperParams::new(h.sigma, h.lambda, h.gamma, sim)?;
            Ok(model.with_hyper(hp, h.estimator))
        }
    }
}

pub fn save_model(model: &GradientModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_model(model)?).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GradientModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_model(&text)
}
