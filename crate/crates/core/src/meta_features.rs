//! Dataset meta-features and per-feature encodings.
//!
//! A feature's encoding is the meta-feature vector of the dataset it lives in
//! followed by a normalized histogram of its values. Encodings are the keys
//! of the recommendation matrix.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::stats;

pub const META_FEATURE_COUNT: usize = 13;

/// Default number of histogram bins in a feature encoding.
pub const DEFAULT_BINS: usize = 10;

/// Bin count used by the information-theoretic meta-features.
const INFO_BINS: usize = 10;

pub const META_FEATURE_NAMES: [&str; META_FEATURE_COUNT] = [
    "log10_instances",
    "log10_features",
    "n_classes",
    "feature_instance_ratio",
    "mean_feature_mean",
    "mean_feature_std",
    "mean_skewness",
    "mean_excess_kurtosis",
    "mean_abs_correlation",
    "class_entropy_norm",
    "mean_feature_entropy_norm",
    "mean_mutual_information_norm",
    "majority_class_fraction",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatureVector {
    pub values: Vec<f64>,
}

impl MetaFeatureVector {
    pub fn names() -> &'static [&'static str] {
        &META_FEATURE_NAMES
    }
}

/// Meta-features of the owning dataset followed by `histogram_bins`
/// normalized histogram entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoding {
    pub values: Vec<f64>,
    pub dataset: String,
    pub feature: String,
    pub histogram_bins: usize,
}

impl FeatureEncoding {
    pub fn histogram(&self) -> &[f64] {
        &self.values[self.values.len() - self.histogram_bins..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEncoding {
    pub values: Vec<f64>,
}

fn bin_of(v: f64, lo: f64, width: f64, bins: usize) -> usize {
    (((v - lo) / width).floor() as usize).min(bins - 1)
}

fn bin_counts(x: &[f64], bins: usize) -> Option<Vec<usize>> {
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let width = (hi - lo) / bins as f64;
    if !width.is_finite() || width <= 0.0 {
        return None;
    }
    let mut counts = vec![0usize; bins];
    for &v in x {
        counts[bin_of(v, lo, width, bins)] += 1;
    }
    Some(counts)
}

/// Bin index of every value under a uniform `bins`-bin partition of the
/// value range; a constant vector maps entirely to bin 0.
fn bin_assignments(x: &[f64], bins: usize) -> Vec<usize> {
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let width = (hi - lo) / bins as f64;
    if !width.is_finite() || width <= 0.0 {
        return vec![0; x.len()];
    }
    x.iter().map(|&v| bin_of(v, lo, width, bins)).collect()
}

/// Uniform-width histogram over `[min x, max x]` with the last bin closed on
/// the right, normalized by the number of values. Constant input gives the
/// all-zero vector.
pub fn feature_histogram(x: &[f64], bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::BadBins(bins));
    }
    if x.is_empty() {
        return Err(Error::EmptyFeature);
    }
    let n = x.len() as f64;
    Ok(match bin_counts(x, bins) {
        Some(counts) => counts.into_iter().map(|c| c as f64 / n).collect(),
        None => vec![0.0; bins],
    })
}

fn mutual_information(a: &[usize], a_card: usize, b: &[usize], b_card: usize) -> f64 {
    let mut joint = vec![0usize; a_card * b_card];
    let mut ma = vec![0usize; a_card];
    let mut mb = vec![0usize; b_card];
    for (&i, &j) in a.iter().zip(b) {
        joint[i * b_card + j] += 1;
        ma[i] += 1;
        mb[j] += 1;
    }
    (stats::entropy_counts(&ma) + stats::entropy_counts(&mb) - stats::entropy_counts(&joint)).max(0.0)
}

/// The fixed list of 13 general, statistical and information-theoretic
/// meta-features, in [`META_FEATURE_NAMES`] order.
pub fn extract_meta_features(d: &Dataset) -> MetaFeatureVector {
    let n = d.n_instances();
    let p = d.n_features();
    let feats = d.features();

    let means: Vec<f64> = feats.iter().map(|c| stats::mean(c)).collect();
    let stds: Vec<f64> = feats.iter().map(|c| stats::std_dev(c)).collect();
    let skews: Vec<f64> = feats.iter().map(|c| stats::skewness(c)).collect();
    let kurts: Vec<f64> = feats.iter().map(|c| stats::excess_kurtosis(c)).collect();

    let mut corrs = Vec::with_capacity(p * p.saturating_sub(1) / 2);
    for a in 0..p {
        for b in (a + 1)..p {
            corrs.push(stats::pearson(&feats[a], &feats[b]).abs());
        }
    }

    let class_counts = d.class_counts();
    let class_entropy = stats::entropy_counts(&class_counts);
    let m = d.n_classes();

    let mut entropies = Vec::with_capacity(p);
    let mut infos = Vec::with_capacity(p);
    for col in feats {
        let h = match bin_counts(col, INFO_BINS) {
            Some(counts) => stats::entropy_counts(&counts) / (INFO_BINS as f64).ln(),
            None => 0.0,
        };
        entropies.push(h);
        let mi = mutual_information(&bin_assignments(col, INFO_BINS), INFO_BINS, d.labels(), m);
        infos.push(if class_entropy > 0.0 { mi / class_entropy } else { 0.0 });
    }

    let majority = class_counts.iter().copied().max().unwrap_or(0);
    let values = vec![
        (n as f64).log10(),
        (p as f64).log10(),
        m as f64,
        p as f64 / n as f64,
        stats::mean(&means),
        stats::mean(&stds),
        stats::mean(&skews),
        stats::mean(&kurts),
        stats::mean(&corrs),
        class_entropy / (m as f64).ln(),
        stats::mean(&entropies),
        stats::mean(&infos),
        majority as f64 / n as f64,
    ];
    MetaFeatureVector { values: values.into_iter().map(finite_or_zero).collect() }
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

/// Encodes feature `j` using precomputed meta-features of `d`.
pub fn encode_feature_with(meta: &MetaFeatureVector, d: &Dataset, j: usize, bins: usize) -> Result<FeatureEncoding> {
    if j >= d.n_features() {
        return Err(Error::UnknownFeature(format!("#{j}")));
    }
    let mut values = meta.values.clone();
    values.extend(feature_histogram(d.feature(j), bins)?);
    Ok(FeatureEncoding {
        values,
        dataset: d.name().to_string(),
        feature: d.feature_name(j).to_string(),
        histogram_bins: bins,
    })
}

pub fn encode_feature(d: &Dataset, j: usize, bins: usize) -> Result<FeatureEncoding> {
    encode_feature_with(&extract_meta_features(d), d, j, bins)
}

pub fn encode_dataset(d: &Dataset) -> DatasetEncoding {
    DatasetEncoding { values: extract_meta_features(d).values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand::seq::SliceRandom;
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats = (0..p)
            .map(|j| (format!("x{j}"), (0..n).map(|_| rng.random::<f64>() * (j + 1) as f64).collect()))
            .collect();
        let tokens: Vec<String> = (0..n).map(|i| format!("c{}", i % 2)).collect();
        Dataset::from_tokens("r", feats, &tokens, "y").unwrap()
    }

    #[test]
    fn histogram_examples() {
        assert_eq!(feature_histogram(&[0.0, 0.5, 1.0, 1.5], 2).unwrap(), vec![0.5, 0.5]);
        assert_eq!(feature_histogram(&[3.0; 4], 10).unwrap(), vec![0.0; 10]);
        let grid: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(feature_histogram(&grid, 10).unwrap(), vec![0.1; 10]);
    }

    #[test]
    fn histogram_errors() {
        assert!(matches!(feature_histogram(&[], 10), Err(Error::EmptyFeature)));
        assert!(matches!(feature_histogram(&[1.0], 1), Err(Error::BadBins(1))));
    }

    #[test]
    fn general_meta_features() {
        let d = random_dataset(100, 4, 1);
        let mf = extract_meta_features(&d);
        assert_eq!(mf.values.len(), META_FEATURE_COUNT);
        assert_eq!(mf.values[0], 2.0);
        assert_eq!(mf.values[1], 4f64.log10());
        assert_eq!(mf.values[2], 2.0);
        assert_eq!(mf.values[3], 0.04);
        // balanced binary labels
        assert!((mf.values[9] - 1.0).abs() < 1e-15);
        assert_eq!(mf.values[12], 0.5);
    }

    #[test]
    fn constant_features_degenerate() {
        let tokens = ["a", "b", "a", "b"];
        let d = Dataset::from_tokens("c", vec![("x".into(), vec![1.0; 4]), ("z".into(), vec![5.0; 4])], &tokens, "y")
            .unwrap();
        let mf = extract_meta_features(&d);
        assert_eq!(mf.values[5], 0.0);
        assert_eq!(mf.values[8], 0.0);
        assert_eq!(mf.values[10], 0.0);
        assert_eq!(mf.values[11], 0.0);
        assert!(mf.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn single_feature_has_zero_correlation_entry() {
        let d = random_dataset(20, 1, 3);
        assert_eq!(extract_meta_features(&d).values[8], 0.0);
    }

    #[test]
    fn encodings_share_meta_prefix() {
        let d = random_dataset(50, 3, 2);
        let e0 = encode_feature(&d, 0, 10).unwrap();
        let e1 = encode_feature(&d, 1, 10).unwrap();
        assert_eq!(e0.values.len(), 23);
        assert_eq!(e0.values[..13], e1.values[..13]);
        assert!((e0.histogram().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_feature_encoding_has_zero_histogram() {
        let tokens = ["a", "b", "a", "b"];
        let d = Dataset::from_tokens("c", vec![("x".into(), vec![1.0; 4])], &tokens, "y").unwrap();
        assert_eq!(encode_feature(&d, 0, 10).unwrap().histogram(), &[0.0; 10]);
    }

    #[test]
    fn dataset_encoding_is_meta_vector() {
        let d = random_dataset(30, 3, 9);
        assert_eq!(encode_dataset(&d).values, extract_meta_features(&d).values);
        assert_eq!(encode_dataset(&d), encode_dataset(&d));
    }

    #[test]
    fn row_permutation_invariance() {
        let d = random_dataset(80, 5, 4);
        let mut rows: Vec<usize> = (0..80).collect();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(11));
        let shuffled = d.select_rows(&rows);
        assert_eq!(encode_dataset(&d), encode_dataset(&shuffled));
        for j in 0..5 {
            assert_eq!(encode_feature(&d, j, 10).unwrap().values, encode_feature(&shuffled, j, 10).unwrap().values);
        }
    }

    #[test]
    fn column_permutation_invariance() {
        let d = random_dataset(60, 4, 5);
        let permuted = d.select_features(&[2, 0, 3, 1]);
        let a = extract_meta_features(&d).values;
        let b = extract_meta_features(&permuted).values;
        assert_eq!(a, b);
    }
}
