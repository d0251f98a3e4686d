//! Datasets, CSV I/O, synthetic generators, fold partitions and seeded randomness.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Independent random streams derived from one user seed.
///
/// Every stochastic operation takes an explicit seed and picks a stream, so
/// drawing centers never perturbs the fold assignment and vice versa.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Generate = 1,
    Centers = 2,
    Folds = 3,
    Train = 4,
    Test = 5,
    Bandwidth = 6,
}

/// ChaCha8 keyed by `seed` on the given stream. Identical on every platform.
pub fn seeded_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed for a child computation, e.g. repetition `r` of an experiment.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
}

/// An `n × d` sample matrix stored row-major. Entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    n: usize,
    d: usize,
    column_names: Option<Vec<String>>,
    provenance: Option<Provenance>,
}

impl Dataset {
    pub fn from_row_major(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Empty);
        }
        if values.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: pos / d + 1,
                column: pos % d + 1,
                message: "non-finite value".into(),
            });
        }
        Ok(Self {
            values,
            n,
            d,
            column_names: None,
            provenance: None,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty)?;
        let d = first.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::RaggedRow {
                    row: i + 1,
                    expected: d,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_row_major(rows.len(), d, values)
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: names.len(),
            });
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn with_provenance(mut self, generator: impl Into<String>, seed: u64) -> Self {
        self.provenance = Some(Provenance {
            generator: generator.into(),
            seed,
        });
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// The rows at `indices`, in that order. Column names carry over.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::invalid(format!("row index {i} out of range")));
            }
            values.extend_from_slice(self.row(i));
        }
        let mut out = Self::from_row_major(indices.len(), self.d, values)?;
        out.column_names = self.column_names.clone();
        Ok(out)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }
}

/// Reads a comma-separated numeric table. Errors name the 1-based line and column.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, has_header)
}

pub fn read_csv<R: std::io::Read>(reader: R, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let names = if has_header {
        let header = rdr.headers().map_err(csv_error)?;
        Some(header.iter().map(str::to_owned).collect::<Vec<_>>())
    } else {
        None
    };
    let line_offset = usize::from(has_header);

    let mut values = Vec::new();
    let mut d = names.as_ref().map(Vec::len);
    let mut n = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = i + 1 + line_offset;
        let width = *d.get_or_insert(record.len());
        if record.len() != width {
            return Err(Error::RaggedRow {
                row: line,
                expected: width,
                found: record.len(),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row: line,
                column: c + 1,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    column: c + 1,
                    message: "non-finite value".into(),
                });
            }
            values.push(v);
        }
        n += 1;
    }
    let d = d.ok_or(Error::Empty)?;
    let data = Dataset::from_row_major(n, d, values)?;
    match names {
        Some(names) => data.with_column_names(names),
        None => Ok(data),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        row,
        column: 0,
        message: e.to_string(),
    }
}

/// Writes the dataset with shortest round-trip float formatting, so
/// `load_csv(save_csv(x)) == x` exactly.
pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_csv(data, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_csv<W: Write>(data: &Dataset, w: &mut W) -> std::io::Result<()> {
    if let Some(names) = data.column_names() {
        writeln!(w, "{}", names.join(","))?;
    }
    for row in data.rows() {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b",")?;
            }
            first = false;
            write!(w, "{v}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// A Gaussian mixture with explicit parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `N(0, diag(1,…,1,5,…,5))`, the first `⌈d/2⌉` variances equal to 1.
    SingleGaussian,
    /// `½ N(0, I) + ½ N((5,0,…,0), I)`.
    DoubleGaussian,
    /// Three isotropic components with variance `1/√(2π)`, weights 0.4/0.3/0.3,
    /// means `(0,2,0…)`, `(−2,−2,0…)`, `(2,−2,0…)`.
    ThreeGaussianMixture,
    CustomGaussianMixture(MixtureParams),
}

impl Family {
    pub const NAMES: [&'static str; 4] = [
        "single_gaussian",
        "double_gaussian",
        "three_gaussian_mixture",
        "custom_gaussian_mixture",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Family::SingleGaussian => Self::NAMES[0],
            Family::DoubleGaussian => Self::NAMES[1],
            Family::ThreeGaussianMixture => Self::NAMES[2],
            Family::CustomGaussianMixture(_) => Self::NAMES[3],
        }
    }

    /// The family as a mixture in dimension `d`.
    pub fn mixture(&self, d: usize) -> Result<MixtureParams> {
        let diag = |vars: Vec<f64>| -> Vec<Vec<f64>> {
            let mut m = vec![vec![0.0; d]; d];
            for (i, v) in vars.into_iter().enumerate() {
                m[i][i] = v;
            }
            m
        };
        let point = |head: &[f64]| -> Vec<f64> {
            let mut p = vec![0.0; d];
            p[..head.len()].copy_from_slice(head);
            p
        };
        if d == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        match self {
            Family::SingleGaussian => {
                let ones = d.div_ceil(2);
                let vars = (0..d).map(|j| if j < ones { 1.0 } else { 5.0 }).collect();
                Ok(MixtureParams {
                    weights: vec![1.0],
                    means: vec![vec![0.0; d]],
                    covariances: vec![diag(vars)],
                })
            }
            Family::DoubleGaussian => Ok(MixtureParams {
                weights: vec![0.5, 0.5],
                means: vec![vec![0.0; d], point(&[5.0])],
                covariances: vec![diag(vec![1.0; d]), diag(vec![1.0; d])],
            }),
            Family::ThreeGaussianMixture => {
                if d < 2 {
                    return Err(Error::invalid(
                        "three_gaussian_mixture needs d >= 2 (component means use two coordinates)",
                    ));
                }
                let var = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
                Ok(MixtureParams {
                    weights: vec![0.4, 0.3, 0.3],
                    means: vec![point(&[0.0, 2.0]), point(&[-2.0, -2.0]), point(&[2.0, -2.0])],
                    covariances: vec![diag(vec![var; d]); 3],
                })
            }
            Family::CustomGaussianMixture(p) => Ok(p.clone()),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    /// Parses the three parameter-free families; `custom_gaussian_mixture`
    /// needs explicit parameters and must be built directly.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_gaussian" => Ok(Family::SingleGaussian),
            "double_gaussian" => Ok(Family::DoubleGaussian),
            "three_gaussian_mixture" => Ok(Family::ThreeGaussianMixture),
            other => Err(Error::invalid(format!(
                "unknown family {other:?}; valid families: {}",
                Family::NAMES.join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub family: Family,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(family: Family, d: usize, n: usize, seed: u64) -> Self {
        Self { family, d, n, seed }
    }
}

struct Component {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
}

fn validated_components(p: &MixtureParams, d: usize) -> Result<Vec<Component>> {
    let k = p.weights.len();
    if k == 0 || p.means.len() != k || p.covariances.len() != k {
        return Err(Error::invalid(
            "mixture needs equally many weights, means and covariances (at least one)",
        ));
    }
    if p.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::invalid("mixing coefficients must be nonnegative"));
    }
    let total: f64 = p.weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "mixing coefficients sum to {total}, expected 1"
        )));
    }
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        if p.means[c].len() != d || p.covariances[c].len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.means[c].len().min(p.covariances[c].len()),
            });
        }
        let mut cov = DMatrix::zeros(d, d);
        for (i, row) in p.covariances[c].iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                cov[(i, j)] = v;
            }
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (cov[(i, j)], cov[(j, i)]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::invalid(format!("covariance {c} is not symmetric")));
                }
            }
        }
        let chol = nalgebra::Cholesky::new(cov)
            .ok_or_else(|| Error::invalid(format!("covariance {c} is not positive definite")))?;
        out.push(Component {
            mean: DVector::from_column_slice(&p.means[c]),
            chol: chol.l(),
        });
    }
    Ok(out)
}

/// Draws `n` i.i.d. samples and the index of the component each came from.
pub fn generate_labeled(spec: &SyntheticSpec) -> Result<(Dataset, Vec<usize>)> {
    if spec.n == 0 {
        return Err(Error::Empty);
    }
    let mix = spec.family.mixture(spec.d)?;
    let comps = validated_components(&mix, spec.d)?;
    let mut rng = seeded_rng(spec.seed, Stream::Generate);
    let d = spec.d;
    let mut values = Vec::with_capacity(spec.n * d);
    let mut labels = Vec::with_capacity(spec.n);
    let mut z = DVector::zeros(d);
    for _ in 0..spec.n {
        let c = pick_component(&mix.weights, rng.random::<f64>());
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        let x = &comps[c].mean + &comps[c].chol * &z;
        values.extend(x.iter());
        labels.push(c);
    }
    let data = Dataset::from_row_major(spec.n, d, values)?
        .with_provenance(spec.family.name(), spec.seed);
    Ok((data, labels))
}

pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    generate_labeled(spec).map(|(data, _)| data)
}

fn pick_component(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (c, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return c;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Fold membership, 0-based. Fold sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPartition {
    assignments: Vec<usize>,
    k: usize,
}

impl FoldPartition {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn fold(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == f)
            .collect()
    }

    /// Every index not in fold `f`.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != f)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPartition> {
    if k < 2 {
        return Err(Error::invalid(format!("fold count must be >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::invalid(format!(
            "fold count {k} exceeds sample count {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed, Stream::Folds));
    let mut assignments = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPartition { assignments, k })
}

/// Per-column affine map to zero mean and unit sample standard deviation
/// (`n − 1` denominator).
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        self.map(data, |v, m, s| (v - m) / s)
    }

    pub fn invert(&self, data: &Dataset) -> Result<Dataset> {
        self.map(data, |v, m, s| v * s + m)
    }

    fn map(&self, data: &Dataset, f: impl Fn(f64, f64, f64) -> f64) -> Result<Dataset> {
        crate::error::check_dim(self.means.len(), data.d())?;
        let d = data.d();
        let values = data
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, self.means[i % d], self.scales[i % d]))
            .collect();
        let mut out = Dataset::from_row_major(data.n(), d, values)?;
        out.column_names = data.column_names.clone();
        Ok(out)
    }
}

pub fn standardize(data: &Dataset) -> Result<(Dataset, Standardization)> {
    let n = data.n();
    if n < 2 {
        return Err(Error::invalid("standardization needs at least two rows"));
    }
    let mut means = Vec::with_capacity(data.d());
    let mut scales = Vec::with_capacity(data.d());
    for j in 0..data.d() {
        let mean = data.column(j).sum::<f64>() / n as f64;
        let var = data.column(j).map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let scale = var.sqrt();
        if !(scale > 0.0) || scale <= 1e-300 {
            return Err(Error::ZeroVariance { column: j + 1 });
        }
        means.push(mean);
        scales.push(scale);
    }
    let t = Standardization { means, scales };
    Ok((t.apply(data)?, t))
}
