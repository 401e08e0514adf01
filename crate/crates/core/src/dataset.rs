//! Tabular classification datasets: CSV ingestion, preprocessing and
//! stratified fold planning.
//!
//! Features are stored column-major. A missing cell is `NaN` until
//! [`preprocess`] imputes it; non-numeric columns carry no values at all and
//! are dropped by preprocessing.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of non-empty cells that must parse as finite reals for a column
/// to be considered numeric.
pub const NUMERIC_CELL_FRACTION: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn numeric(name: impl Into<String>) -> Self {
        Column { name: name.into(), kind: ColumnKind::Numeric }
    }
}

/// A feature matrix bound to a class-label target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    columns: Vec<Column>,
    /// One vector per column, each of length `n_instances`.
    values: Vec<Vec<f64>>,
    labels: Vec<usize>,
    classes: Vec<String>,
    target_name: String,
    /// Position of each row in the originally loaded dataset; survives
    /// subsetting so fitted state can be audited for leakage.
    row_ids: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset of numeric features. `labels[i]` indexes `classes`.
    pub fn new(
        name: impl Into<String>,
        features: Vec<(String, Vec<f64>)>,
        labels: Vec<usize>,
        classes: Vec<String>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        let n = labels.len();
        let mut columns = Vec::with_capacity(features.len());
        let mut values = Vec::with_capacity(features.len());
        for (col_name, col) in features {
            if col.len() != n {
                return Err(Error::LengthMismatch { left: col.len(), right: n });
            }
            columns.push(Column::numeric(col_name));
            values.push(col);
        }
        if classes.len() < 2 {
            return Err(Error::TooFewClasses(classes.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(Error::InvalidDataset(format!("label id {bad} has no class name")));
        }
        Ok(Dataset {
            name: name.into(),
            columns,
            values,
            labels,
            classes,
            target_name: target_name.into(),
            row_ids: (0..n).collect(),
        })
    }

    /// Builds a dataset from label tokens, assigning class ids in order of
    /// first appearance.
    pub fn from_tokens<S: AsRef<str>>(
        name: impl Into<String>,
        features: Vec<(String, Vec<f64>)>,
        tokens: &[S],
        target_name: impl Into<String>,
    ) -> Result<Self> {
        let (labels, classes) = encode_labels(tokens);
        if classes.len() < 2 {
            return Err(Error::TooFewClasses(classes.len()));
        }
        Dataset::new(name, features, labels, classes, target_name)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn n_instances(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn feature(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    pub fn feature_name(&self, j: usize) -> &str {
        &self.columns[j].name
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.classes
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn has_missing(&self) -> bool {
        self.columns
            .iter()
            .zip(&self.values)
            .any(|(c, v)| c.kind == ColumnKind::Numeric && v.iter().any(|x| x.is_nan()))
    }

    /// Row `i` as a dense vector over all columns.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|c| c[i]).collect()
    }

    /// Keeps the given rows (in the given order), preserving row provenance.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            columns: self.columns.clone(),
            values: self.values.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            classes: self.classes.clone(),
            target_name: self.target_name.clone(),
            row_ids: rows.iter().map(|&r| self.row_ids[r]).collect(),
        }
    }

    /// Keeps the given feature columns, in the given order.
    pub fn select_features(&self, cols: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            values: cols.iter().map(|&j| self.values[j].clone()).collect(),
            labels: self.labels.clone(),
            classes: self.classes.clone(),
            target_name: self.target_name.clone(),
            row_ids: self.row_ids.clone(),
        }
    }

    /// Same rows and target, different numeric feature columns.
    pub fn with_features(&self, features: Vec<(String, Vec<f64>)>) -> Result<Dataset> {
        let n = self.n_instances();
        let mut columns = Vec::with_capacity(features.len());
        let mut values = Vec::with_capacity(features.len());
        for (name, col) in features {
            if col.len() != n {
                return Err(Error::LengthMismatch { left: col.len(), right: n });
            }
            columns.push(Column::numeric(name));
            values.push(col);
        }
        Ok(Dataset {
            name: self.name.clone(),
            columns,
            values,
            labels: self.labels.clone(),
            classes: self.classes.clone(),
            target_name: self.target_name.clone(),
            row_ids: self.row_ids.clone(),
        })
    }

    /// Same features, replaced labels (class names kept).
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Dataset> {
        if labels.len() != self.n_instances() {
            return Err(Error::LengthMismatch { left: labels.len(), right: self.n_instances() });
        }
        if labels.iter().any(|&l| l >= self.classes.len()) {
            return Err(Error::InvalidDataset("label id out of range".into()));
        }
        Ok(Dataset { labels, ..self.clone() })
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Dataset {
        self.name = name.into();
        self
    }
}

fn encode_labels<S: AsRef<str>>(tokens: &[S]) -> (Vec<usize>, Vec<String>) {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut classes = Vec::new();
    let labels = tokens
        .iter()
        .map(|t| {
            let t = t.as_ref();
            *ids.entry(t).or_insert_with(|| {
                classes.push(t.to_string());
                classes.len() - 1
            })
        })
        .collect();
    (labels, classes)
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Loads a CSV file with a header row, binding `target` as the label column.
pub fn load_csv(path: impl AsRef<Path>, target: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    load_csv_reader(file, &name, target)
}

/// Same as [`load_csv`] over any reader.
pub fn load_csv_reader<R: Read>(reader: R, name: &str, target: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 1, message: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let target_idx =
        header.iter().position(|h| h == target).ok_or_else(|| Error::MissingTarget(target.into()))?;

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (i, rec) in rdr.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        if rec[target_idx].trim().is_empty() {
            return Err(Error::Parse { row, message: "empty target cell".into() });
        }
        for (j, field) in rec.iter().enumerate() {
            cells[j].push(field.to_string());
        }
    }

    let tokens: Vec<String> = cells[target_idx].iter().map(|t| t.trim().to_string()).collect();
    let numeric_target: Option<Vec<f64>> = tokens.iter().map(|t| parse_cell(t)).collect();
    if let Some(vals) = numeric_target {
        if vals.iter().any(|v| v.fract() != 0.0) {
            return Err(Error::RegressionTarget(target.into()));
        }
    }
    let (labels, classes) = encode_labels(&tokens);
    if classes.len() < 2 {
        return Err(Error::TooFewClasses(classes.len()));
    }

    let n = labels.len();
    let mut columns = Vec::new();
    let mut values = Vec::new();
    for (j, col) in cells.into_iter().enumerate() {
        if j == target_idx {
            continue;
        }
        let non_empty: Vec<&str> = col.iter().map(|c| c.trim()).filter(|c| !c.is_empty()).collect();
        let parsed = non_empty.iter().filter(|c| parse_cell(c).is_some()).count();
        let numeric = non_empty.is_empty()
            || parsed as f64 >= NUMERIC_CELL_FRACTION * non_empty.len() as f64;
        let kind = if numeric {
            ColumnKind::Numeric
        } else {
            let mut distinct: Vec<&str> = non_empty.clone();
            distinct.sort_unstable();
            distinct.dedup();
            if distinct.len() <= 20.max(non_empty.len() / 10) {
                ColumnKind::Categorical
            } else {
                ColumnKind::Text
            }
        };
        let col_values = if numeric {
            col.iter().map(|c| parse_cell(c).unwrap_or(f64::NAN)).collect()
        } else {
            vec![f64::NAN; n]
        };
        columns.push(Column { name: header[j].clone(), kind });
        values.push(col_values);
    }

    Ok(Dataset {
        name: name.to_string(),
        columns,
        values,
        labels,
        classes,
        target_name: target.to_string(),
        row_ids: (0..n).collect(),
    })
}

/// Writes features (shortest round-trip decimal form) followed by the class
/// label column.
pub fn write_csv_writer<W: std::io::Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::InvalidDataset(format!("csv write failed: {e}"));
    let mut header: Vec<&str> = d.columns.iter().map(|c| c.name.as_str()).collect();
    header.push(&d.target_name);
    w.write_record(&header).map_err(to_err)?;
    for i in 0..d.n_instances() {
        let mut row: Vec<String> = d.values.iter().map(|c| c[i].to_string()).collect();
        row.push(d.classes[d.labels[i]].clone());
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::InvalidDataset(format!("csv write failed: {e}")))
}

pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_writer(d, std::io::BufWriter::new(file))
}

/// Column selection and mean imputation learned from one dataset, applicable
/// to another with the same schema (e.g. a held-out fold).
#[derive(Debug, Clone, PartialEq)]
pub struct Imputer {
    keep: Vec<usize>,
    means: Vec<f64>,
}

impl Imputer {
    pub fn fit(d: &Dataset) -> Result<Imputer> {
        let mut keep = Vec::new();
        let mut means = Vec::new();
        for (j, col) in d.columns.iter().enumerate() {
            if col.kind != ColumnKind::Numeric {
                continue;
            }
            let observed: Vec<f64> = d.values[j].iter().copied().filter(|v| !v.is_nan()).collect();
            if observed.is_empty() {
                continue;
            }
            keep.push(j);
            means.push(observed.iter().sum::<f64>() / observed.len() as f64);
        }
        if keep.is_empty() {
            return Err(Error::NoNumericFeatures);
        }
        Ok(Imputer { keep, means })
    }

    pub fn kept_columns(&self) -> &[usize] {
        &self.keep
    }

    pub fn apply(&self, d: &Dataset) -> Dataset {
        let mut out = d.select_features(&self.keep);
        for (col, &mean) in out.values.iter_mut().zip(&self.means) {
            for v in col.iter_mut().filter(|v| v.is_nan()) {
                *v = mean;
            }
        }
        out
    }
}

/// Drops non-numeric and entirely missing columns, then replaces each
/// missing cell by the mean of its column's observed values.
pub fn preprocess(d: &Dataset) -> Result<Dataset> {
    Ok(Imputer::fit(d)?.apply(d))
}

/// A partition of instance indices into `k` stratified folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != fold)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        train.sort_unstable();
        train
    }
}

/// Splits instances into `k` folds whose per-class counts differ from
/// `count / k` by less than one instance.
///
/// Each class is shuffled with a seeded generator and dealt round-robin; the
/// dealing position carries over between classes so fold sizes stay balanced.
pub fn stratified_folds(d: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::BadFoldCount(k));
    }
    let counts = d.class_counts();
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 && count < k {
            return Err(Error::ClassTooSmall { class: d.classes[c].clone(), count, k });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for c in 0..d.n_classes() {
        let mut members: Vec<usize> = (0..d.n_instances()).filter(|&i| d.labels[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { k, folds, seed })
}
