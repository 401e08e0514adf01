//! Stratified cross-validation of built-in classifiers on original and
//! engineered data.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_folds, Dataset, Imputer};
use crate::error::{Error, Result};
use crate::pipeline::{transform_dataset, PipelineConfig};
use crate::transforms::{ScalerKind, ScalerParams};
use crate::trm::Trm;

/// Built-in learning algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Classifier {
    /// k-nearest neighbors with Euclidean distance.
    Knn { k: usize },
    /// Multinomial logistic regression fitted by full-batch gradient descent.
    LogReg,
    /// Gaussian naive Bayes.
    Gnb,
}

impl Classifier {
    pub const DEFAULTS: [Classifier; 3] = [Classifier::Knn { k: 5 }, Classifier::LogReg, Classifier::Gnb];
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classifier::Knn { k } => write!(f, "knn{k}"),
            Classifier::LogReg => f.write_str("logreg"),
            Classifier::Gnb => f.write_str("gnb"),
        }
    }
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(Classifier::LogReg),
            "gnb" => Ok(Classifier::Gnb),
            _ => s
                .strip_prefix("knn")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k > 0)
                .map(|k| Classifier::Knn { k })
                .ok_or_else(|| Error::InvalidConfig(format!("unknown classifier `{s}`"))),
        }
    }
}

const LOGREG_EPOCHS: usize = 500;
const LOGREG_RATE: f64 = 0.1;
const LOGREG_L2: f64 = 1e-4;
const GNB_VAR_FLOOR: f64 = 1e-9;

fn rows(d: &Dataset) -> Vec<Vec<f64>> {
    (0..d.n_instances()).map(|i| d.row(i)).collect()
}

fn knn_predict(train: &[Vec<f64>], labels: &[usize], n_classes: usize, query: &[f64], k: usize) -> usize {
    let mut dist: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let neighbors = &dist[..k.min(dist.len())];
    let mut votes = vec![0usize; n_classes];
    for &(_, i) in neighbors {
        votes[labels[i]] += 1;
    }
    let top = *votes.iter().max().expect("at least one class");
    // among tied classes, the one owning the nearest neighbor wins
    neighbors.iter().map(|&(_, i)| labels[i]).find(|&c| votes[c] == top).expect("a neighbor has the top vote")
}

struct LogReg {
    /// `weights[c]` holds the bias followed by one weight per feature.
    weights: Vec<Vec<f64>>,
}

fn softmax_scores(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let z: Vec<f64> = w.iter().map(|wc| wc[0] + wc[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).collect();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

impl LogReg {
    fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize) -> LogReg {
        let p = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let mut w = vec![vec![0.0; p + 1]; n_classes];
        for _ in 0..LOGREG_EPOCHS {
            let mut grad = vec![vec![0.0; p + 1]; n_classes];
            for (xi, &yi) in x.iter().zip(y) {
                let probs = softmax_scores(&w, xi);
                for (c, g) in grad.iter_mut().enumerate() {
                    let err = probs[c] - if c == yi { 1.0 } else { 0.0 };
                    g[0] += err;
                    for (gj, xj) in g[1..].iter_mut().zip(xi) {
                        *gj += err * xj;
                    }
                }
            }
            for (wc, gc) in w.iter_mut().zip(&grad) {
                wc[0] -= LOGREG_RATE * gc[0] / n;
                for (wj, gj) in wc[1..].iter_mut().zip(&gc[1..]) {
                    *wj -= LOGREG_RATE * (gj / n + LOGREG_L2 * *wj);
                }
            }
        }
        LogReg { weights: w }
    }

    fn predict(&self, x: &[f64]) -> usize {
        argmax(&softmax_scores(&self.weights, x))
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = i;
        }
    }
    best
}

struct Gnb {
    log_prior: Vec<f64>,
    mean: Vec<Vec<f64>>,
    var: Vec<Vec<f64>>,
}

impl Gnb {
    fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Gnb {
        let p = x.first().map_or(0, Vec::len);
        let mut count = vec![0usize; n_classes];
        let mut mean = vec![vec![0.0; p]; n_classes];
        for (xi, &c) in x.iter().zip(y) {
            count[c] += 1;
            for (m, v) in mean[c].iter_mut().zip(xi) {
                *m += v;
            }
        }
        for (m, &n) in mean.iter_mut().zip(&count) {
            m.iter_mut().for_each(|v| *v /= n.max(1) as f64);
        }
        let mut var = vec![vec![0.0; p]; n_classes];
        for (xi, &c) in x.iter().zip(y) {
            for ((s, v), m) in var[c].iter_mut().zip(xi).zip(&mean[c]) {
                *s += (v - m) * (v - m);
            }
        }
        for (s, &n) in var.iter_mut().zip(&count) {
            s.iter_mut().for_each(|v| *v = (*v / n.max(1) as f64).max(GNB_VAR_FLOOR));
        }
        let total = x.len() as f64;
        let log_prior = count.iter().map(|&n| if n == 0 { f64::NEG_INFINITY } else { (n as f64 / total).ln() }).collect();
        Gnb { log_prior, mean, var }
    }

    fn predict(&self, x: &[f64]) -> usize {
        let scores: Vec<f64> = (0..self.log_prior.len())
            .map(|c| {
                self.log_prior[c]
                    + x.iter()
                        .zip(&self.mean[c])
                        .zip(&self.var[c])
                        .map(|((v, m), s)| -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + (v - m) * (v - m) / s))
                        .sum::<f64>()
            })
            .collect();
        argmax(&scores)
    }
}

/// Fits `clf` on `train` and predicts the labels of `test`.
pub fn fit_predict(clf: Classifier, train: &Dataset, test: &Dataset) -> Result<Vec<usize>> {
    if train.n_features() != test.n_features() {
        return Err(Error::LengthMismatch { left: train.n_features(), right: test.n_features() });
    }
    if train.n_instances() == 0 {
        return Err(Error::TooFewSamples { n: 0, min: 1 });
    }
    let x = rows(train);
    let y = train.labels();
    let m = train.n_classes();
    let queries = rows(test);
    Ok(match clf {
        Classifier::Knn { k } => queries.iter().map(|q| knn_predict(&x, y, m, q, k)).collect(),
        Classifier::LogReg => {
            let model = LogReg::fit(&x, y, m);
            queries.iter().map(|q| model.predict(q)).collect()
        }
        Classifier::Gnb => {
            let model = Gnb::fit(&x, y, m);
            queries.iter().map(|q| model.predict(q)).collect()
        }
    })
}

pub fn accuracy(predicted: &[usize], actual: &[usize]) -> f64 {
    if actual.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(actual).filter(|(a, b)| a == b).count() as f64 / actual.len() as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Code paths that fit state from data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Impute,
    BaselineScaler,
    Pipeline,
    Classifier,
}

/// Called with the original row ids of every dataset that enters a fitting
/// code path.
pub type Observer<'a> = &'a (dyn Fn(Stage, &[usize]) + Sync);

fn no_observer(_: Stage, _: &[usize]) {}

/// Mean stratified `k`-fold accuracy of `clf` on `d`. Imputation is fitted
/// per fold on training rows.
pub fn evaluate(d: &Dataset, clf: Classifier, k: usize, seed: u64) -> Result<f64> {
    let plan = stratified_folds(d, k, seed)?;
    let folds = (0..k)
        .into_par_iter()
        .map(|f| -> Result<f64> {
            let train = d.select_rows(&plan.train_indices(f));
            let test = d.select_rows(plan.test_indices(f));
            let imputer = Imputer::fit(&train)?;
            let (train, test) = (imputer.apply(&train), imputer.apply(&test));
            Ok(accuracy(&fit_predict(clf, &train, &test)?, test.labels()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&folds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub pipeline: PipelineConfig,
    pub folds: usize,
    pub seed: u64,
    pub classifiers: Vec<Classifier>,
    /// Scaler fitted on training folds of the original data; `None` leaves
    /// the original features unscaled.
    pub baseline_scaler: Option<ScalerKind>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            pipeline: PipelineConfig::default(),
            folds: 5,
            seed: 0,
            classifiers: Classifier::DEFAULTS.to_vec(),
            baseline_scaler: None,
        }
    }
}

impl Serialize for Classifier {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Classifier {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub classifier: Classifier,
    pub original: f64,
    pub engineered: f64,
    pub delta: f64,
    pub original_folds: Vec<f64>,
    pub engineered_folds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub folds: usize,
    pub seed: u64,
    pub n_features_original: usize,
    /// Engineered feature count of each fold.
    pub n_features_engineered: Vec<usize>,
    pub rows: Vec<ReportRow>,
    pub improved_any: bool,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width table, one line per classifier.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<24} {:<10} {:>10} {:>10} {:>10}", "dataset", "classifier", "original", "engineered", "delta");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<24} {:<10} {:>10.4} {:>10.4} {:>+10.4}",
                truncate(&self.dataset, 24),
                r.classifier.to_string(),
                r.original,
                r.engineered,
                r.delta
            );
        }
        let _ = writeln!(s, "improved_any: {}", self.improved_any);
        s
    }
}

fn truncate(s: &str, width: usize) -> String {
    s.chars().take(width).collect()
}

struct FoldOutcome {
    original: Vec<f64>,
    engineered: Vec<f64>,
    n_engineered: usize,
}

fn run_fold(d: &Dataset, train_idx: &[usize], test_idx: &[usize], trm: &Trm, cfg: &CompareConfig, observe: Observer) -> Result<FoldOutcome> {
    let train = d.select_rows(train_idx);
    let test = d.select_rows(test_idx);
    observe(Stage::Impute, train.row_ids());
    let imputer = Imputer::fit(&train)?;
    let (train, test) = (imputer.apply(&train), imputer.apply(&test));

    let (base_train, base_test) = match cfg.baseline_scaler {
        Some(kind) => {
            observe(Stage::BaselineScaler, train.row_ids());
            let params = ScalerParams::fit(kind, train.features());
            let names = |d: &Dataset| -> Vec<String> { (0..d.n_features()).map(|j| d.feature_name(j).to_string()).collect() };
            let scale = |d: &Dataset| -> Result<Dataset> {
                d.with_features(names(d).into_iter().zip(params.transform(d.features())?).collect())
            };
            (scale(&train)?, scale(&test)?)
        }
        None => (train.clone(), test.clone()),
    };

    observe(Stage::Pipeline, train.row_ids());
    let engineered = transform_dataset(&train, trm, &cfg.pipeline)?;
    let eng_train = engineered.output.clone();
    let eng_test = engineered.plan().apply(&test)?;

    let mut original = Vec::with_capacity(cfg.classifiers.len());
    let mut eng = Vec::with_capacity(cfg.classifiers.len());
    for &clf in &cfg.classifiers {
        observe(Stage::Classifier, base_train.row_ids());
        original.push(accuracy(&fit_predict(clf, &base_train, &base_test)?, base_test.labels()));
        observe(Stage::Classifier, eng_train.row_ids());
        eng.push(accuracy(&fit_predict(clf, &eng_train, &eng_test)?, eng_test.labels()));
    }
    Ok(FoldOutcome { original, engineered: eng, n_engineered: eng_train.n_features() })
}

/// Cross-validates every configured classifier on the original data and on
/// data engineered inside each fold from training rows only.
pub fn compare(d: &Dataset, trm: &Trm, cfg: &CompareConfig) -> Result<EvalReport> {
    compare_observed(d, trm, cfg, &no_observer)
}

/// [`compare`] with an observer of every fitting step.
pub fn compare_observed(d: &Dataset, trm: &Trm, cfg: &CompareConfig, observe: Observer) -> Result<EvalReport> {
    if cfg.classifiers.is_empty() {
        return Err(Error::InvalidConfig("no classifiers configured".into()));
    }
    cfg.pipeline.validate()?;
    let plan = stratified_folds(d, cfg.folds, cfg.seed)?;
    let outcomes = (0..cfg.folds)
        .into_par_iter()
        .map(|f| run_fold(d, &plan.train_indices(f), plan.test_indices(f), trm, cfg, observe))
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<ReportRow> = cfg
        .classifiers
        .iter()
        .enumerate()
        .map(|(c, &classifier)| {
            let original_folds: Vec<f64> = outcomes.iter().map(|o| o.original[c]).collect();
            let engineered_folds: Vec<f64> = outcomes.iter().map(|o| o.engineered[c]).collect();
            let (original, engineered) = (mean(&original_folds), mean(&engineered_folds));
            ReportRow { classifier, original, engineered, delta: engineered - original, original_folds, engineered_folds }
        })
        .collect();
    let improved_any = rows.iter().any(|r| r.delta > 0.0);
    Ok(EvalReport {
        dataset: d.name().to_string(),
        folds: cfg.folds,
        seed: cfg.seed,
        n_features_original: d.n_features(),
        n_features_engineered: outcomes.iter().map(|o| o.n_engineered).collect(),
        rows,
        improved_any,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta_features::{encode_dataset, encode_feature, DEFAULT_BINS};
    use crate::transforms::{BinaryOp, TransformId};
    use crate::trm::{Fingerprint, TrmRecord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Mutex;

    fn clusters(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let off = if c == 0 { -10.0 } else { 10.0 };
            a.push(off + rng.random_range(-1.0..1.0));
            b.push(off + rng.random_range(-1.0..1.0));
            y.push(format!("c{c}"));
        }
        Dataset::from_tokens("clusters", vec![("a".into(), a), ("b".into(), b)], &y, "y").unwrap()
    }

    fn product(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<&str> = x1.iter().zip(&x2).map(|(a, b)| if a * b > 0.0 { "p" } else { "n" }).collect();
        Dataset::from_tokens("product", vec![("x1".into(), x1), ("x2".into(), x2)], &y, "y").unwrap()
    }

    #[test]
    fn separable_clusters_are_learned() {
        let d = clusters(100, 1);
        for clf in Classifier::DEFAULTS {
            assert_eq!(evaluate(&d, clf, 5, 0).unwrap(), 1.0, "{clf}");
        }
    }

    #[test]
    fn one_nearest_neighbor_memorizes() {
        let d = clusters(40, 2);
        let pred = fit_predict(Classifier::Knn { k: 1 }, &d, &d).unwrap();
        assert_eq!(accuracy(&pred, d.labels()), 1.0);
    }

    #[test]
    fn shuffled_labels_give_majority_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200;
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let z: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<&str> = (0..n).map(|_| if rng.random::<f64>() < 0.7 { "maj" } else { "min" }).collect();
        let d = Dataset::from_tokens("noise", vec![("x".into(), x), ("z".into(), z)], &y, "y").unwrap();
        let majority = *d.class_counts().iter().max().unwrap() as f64 / n as f64;
        for clf in Classifier::DEFAULTS {
            let acc = evaluate(&d, clf, 5, 0).unwrap();
            assert!((acc - majority).abs() <= 0.1, "{clf}: {acc} vs {majority}");
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let d = product(120, 4);
        for clf in Classifier::DEFAULTS {
            assert_eq!(evaluate(&d, clf, 5, 9).unwrap(), evaluate(&d, clf, 5, 9).unwrap());
        }
    }

    #[test]
    fn classifier_tokens() {
        for clf in Classifier::DEFAULTS {
            assert_eq!(clf.to_string().parse::<Classifier>().unwrap(), clf);
        }
        assert_eq!(Classifier::DEFAULTS[0].to_string(), "knn5");
        assert!("svm".parse::<Classifier>().is_err());
        assert!("knn0".parse::<Classifier>().is_err());
    }

    #[test]
    fn knn_ties_go_to_nearest() {
        let train = vec![vec![0.0], vec![1.0], vec![-1.5], vec![2.0]];
        // two votes each; class 1 owns the nearest point
        assert_eq!(knn_predict(&train, &[0, 1, 0, 1], 2, &[0.9], 4), 1);
        // equidistant points: the lower index is nearer
        assert_eq!(knn_predict(&[vec![1.0], vec![-1.0]], &[1, 0], 2, &[0.0], 1), 1);
    }

    fn product_trm(d: &Dataset) -> Trm {
        let e1 = encode_feature(d, 0, DEFAULT_BINS).unwrap();
        let e2 = encode_feature(d, 1, DEFAULT_BINS).unwrap();
        let recs = vec![
            TrmRecord::binary(&e1, &e2, BinaryOp::Multiply, (0.5, 0.5), "product"),
            TrmRecord::scaler(&encode_dataset(d), TransformId::Scaler(ScalerKind::Standard), "product"),
        ];
        Trm::new(recs, Fingerprint::new(DEFAULT_BINS)).unwrap()
    }

    #[test]
    fn identity_pipeline_has_zero_deltas() {
        let d = product(100, 5);
        let trm = product_trm(&d);
        let cfg = CompareConfig {
            pipeline: PipelineConfig {
                tau: 2.0,
                select: 1.0,
                force_scaler: Some(ScalerKind::MinMax),
                ..PipelineConfig::default()
            },
            baseline_scaler: Some(ScalerKind::MinMax),
            ..CompareConfig::default()
        };
        let report = compare(&d, &trm, &cfg).unwrap();
        assert!(report.rows.iter().all(|r| r.delta == 0.0), "{}", report.to_table());
        assert!(!report.improved_any);
    }

    #[test]
    fn product_feature_helps_logistic_regression() {
        let d = product(200, 6);
        let trm = product_trm(&d);
        let cfg = CompareConfig {
            pipeline: PipelineConfig { select: 1.0, tau: 0.0, depth: 1, ..PipelineConfig::default() },
            baseline_scaler: Some(ScalerKind::Standard),
            ..CompareConfig::default()
        };
        let report = compare(&d, &trm, &cfg).unwrap();
        let logreg = report.rows.iter().find(|r| r.classifier == Classifier::LogReg).unwrap();
        assert!(logreg.delta > 0.0, "{}", report.to_table());
        assert!(report.improved_any);
        for r in &report.rows {
            assert_eq!(r.original, mean(&r.original_folds));
            assert!((0.0..=1.0).contains(&r.engineered));
        }
    }

    #[test]
    fn fitting_never_sees_test_rows() {
        let d = product(100, 7);
        let trm = product_trm(&d);
        let cfg = CompareConfig {
            pipeline: PipelineConfig { select: 0.5, tau: 0.0, ..PipelineConfig::default() },
            baseline_scaler: Some(ScalerKind::Robust),
            ..CompareConfig::default()
        };
        let seen: Mutex<Vec<(Stage, Vec<usize>)>> = Mutex::new(Vec::new());
        let observe = |stage: Stage, ids: &[usize]| seen.lock().unwrap().push((stage, ids.to_vec()));
        compare_observed(&d, &trm, &cfg, &observe).unwrap();
        let plan = stratified_folds(&d, cfg.folds, cfg.seed).unwrap();
        let calls = seen.into_inner().unwrap();
        assert_eq!(calls.len(), cfg.folds * (3 + 2 * cfg.classifiers.len()));
        for (stage, ids) in &calls {
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            assert!((0..cfg.folds).any(|f| plan.train_indices(f) == sorted), "{stage:?} saw test rows");
        }
    }

    #[test]
    fn report_renders() {
        let d = product(60, 8);
        let report = compare(&d, &product_trm(&d), &CompareConfig::default()).unwrap();
        let table = report.to_table();
        assert_eq!(table.lines().count(), 2 + report.rows.len());
        let back: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }
}
