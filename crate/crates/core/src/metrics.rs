//! Held-out gradient score and the adjusted Rand index.

use std::collections::HashMap;

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::estimator::GradientModel;

/// `Σ_j [ (1/n) Σ_i ĝ_j(x_i)² + (2/n) Σ_i ∂_j ĝ_j(x_i) ]` over the rows of `points`.
///
/// Equals the squared-error risk of `ĝ` minus a constant that depends only on
/// the data density; smaller is better. For a Gaussian with covariance `Σ`
/// its infimum is `−trace(Σ⁻¹)`.
pub fn lsldg_score(model: &GradientModel, points: &Dataset) -> Result<f64> {
    check_dim(model.dim(), points.d())?;
    let d = model.dim();
    let mut sq = vec![0.0; d];
    let mut div = vec![0.0; d];
    for x in points.rows() {
        let (g, dg) = model.gradient_and_divergence(x)?;
        for j in 0..d {
            sq[j] += g[j] * g[j];
            div[j] += dg[j];
        }
    }
    let n = points.n() as f64;
    Ok((0..d).map(|j| sq[j] / n + 2.0 * div[j] / n).sum())
}

/// Test score `J_te` of a fitted model on held-out samples.
pub fn test_score(model: &GradientModel, test: &Dataset) -> Result<f64> {
    lsldg_score(model, test)
}

/// Cluster labels for `n ≥ 1` points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPartition {
    labels: Vec<usize>,
}

impl LabeledPartition {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty);
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn pairs(c: u64) -> u64 {
    c * c.saturating_sub(1) / 2
}

/// Hubert–Arabie adjusted Rand index.
///
/// Pair counts are accumulated in exact integer arithmetic. When the
/// expected and maximum index coincide (both partitions trivial in the same
/// way) the result is 1 for identical partitions and 0 otherwise.
pub fn adjusted_rand_index(a: &LabeledPartition, b: &LabeledPartition) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    let n = a.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: u64 = table.values().map(|&c| pairs(c)).sum();
    let sum_a: u64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: u64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    let same_partition = table.len() == rows.len() && table.len() == cols.len();
    if total == 0 {
        return Ok(if same_partition { 1.0 } else { 0.0 });
    }
    // (index − E) / (M − E) scaled by 2·total, so only the final division rounds.
    let (index, sa, sb, t) = (index as i128, sum_a as i128, sum_b as i128, total as i128);
    let num = 2 * (index * t - sa * sb);
    let den = (sa + sb) * t - 2 * sa * sb;
    if den == 0 {
        return Ok(if same_partition { 1.0 } else { 0.0 });
    }
    Ok(num as f64 / den as f64)
}

/// Convenience wrapper over raw label slices.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    adjusted_rand_index(
        &LabeledPartition::new(a.to_vec())?,
        &LabeledPartition::new(b.to_vec())?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Centers;
    use crate::data::{generate, Family, SyntheticSpec};
    use proptest::prelude::*;

    /// All-pairs Rand counting, independent of the contingency table.
    fn brute_force_ari(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut in_a, mut in_b) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                both += f64::from(u8::from(sa && sb));
                in_a += f64::from(u8::from(sa));
                in_b += f64::from(u8::from(sb));
            }
        }
        let total = (n * (n - 1) / 2) as f64;
        let expected = in_a * in_b / total;
        let max = 0.5 * (in_a + in_b);
        if max == expected {
            return f64::NAN;
        }
        (both - expected) / (max - expected)
    }

    #[test]
    fn worked_examples() {
        assert_eq!(ari(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), -0.5);
    }

    #[test]
    fn degenerate_partitions() {
        assert_eq!(ari(&[0, 1, 2], &[5, 4, 3]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(ari(&[7], &[3]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 0], &[0, 1, 2]).unwrap(), 0.0);
        assert!(ari(&[0, 1], &[0]).is_err());
        assert!(ari(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn matches_pair_counting(
            (a, b) in (2usize..=50).prop_flat_map(|n| (
                prop::collection::vec(0usize..5, n),
                prop::collection::vec(0usize..5, n),
            ))
        ) {
            let fast = ari(&a, &b).unwrap();
            let slow = brute_force_ari(&a, &b);
            if slow.is_nan() {
                prop_assert!(fast == 0.0 || fast == 1.0);
            } else {
                prop_assert!((fast - slow).abs() < 1e-12);
            }
            prop_assert_eq!(fast, ari(&b, &a).unwrap());
            let relabeled: Vec<usize> = a.iter().map(|&l| 10 - l).collect();
            prop_assert!((ari(&relabeled, &b).unwrap() - fast).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_model_scores_zero() {
        let data = generate(&SyntheticSpec::new(Family::SingleGaussian, 2, 30, 1)).unwrap();
        let basis = Centers::from_rows(&[[0.0, 0.0], [1.0, 1.0]])
            .unwrap()
            .with_bandwidth(1.0)
            .unwrap();
        assert_eq!(test_score(&GradientModel::zeros(basis), &data).unwrap(), 0.0);
    }
}
