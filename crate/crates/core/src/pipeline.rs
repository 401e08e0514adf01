//! End-to-end transformation: causal pre-selection, depth-bounded unary and
//! binary feature construction driven by recommendation-matrix lookups, and
//! a final dataset-level scaler.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal::{fit_dag, rank_features, select_top, DagOptions, WeightedDag};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::meta_features::{encode_dataset, encode_feature_with, extract_meta_features, DEFAULT_BINS};
use crate::scaler::DEFAULT_GAMMA;
use crate::stats;
use crate::transforms::{eval_expr, ScalerKind, ScalerParams, TransformExpr, TransformId};
use crate::trm::{Trm, DEFAULT_TAU};

/// Correlation magnitude above which a candidate counts as a duplicate.
pub const DEDUP_CORRELATION: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Number of construction rounds.
    pub depth: usize,
    /// Fraction of original features kept by causal selection.
    pub select: f64,
    /// Minimum similarity for a unary or binary recommendation.
    pub tau: f64,
    /// Generated columns are capped at `ceil(cap_factor * n_original)`.
    pub cap_factor: f64,
    pub seed: u64,
    /// Outlier threshold of the scaler decision, used when training matrices.
    pub gamma: f64,
    /// Histogram bins of feature encodings; must match the matrix.
    pub bins: usize,
    pub dag: DagOptions,
    /// Scaler applied regardless of the matrix recommendation.
    pub force_scaler: Option<ScalerKind>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            depth: 2,
            select: 0.8,
            tau: DEFAULT_TAU,
            cap_factor: 2.0,
            seed: 0,
            gamma: DEFAULT_GAMMA,
            bins: DEFAULT_BINS,
            dag: DagOptions::default(),
            force_scaler: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        if !(self.select > 0.0 && self.select <= 1.0) {
            return Err(Error::BadThreshold(self.select));
        }
        if !self.tau.is_finite() {
            return bad(format!("tau must be finite, got {}", self.tau));
        }
        if !(self.cap_factor > 0.0 && self.cap_factor.is_finite()) {
            return bad(format!("cap_factor must be positive, got {}", self.cap_factor));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.bins < 2 {
            return Err(Error::BadBins(self.bins));
        }
        Ok(())
    }

    pub fn cap(&self, n_original: usize) -> usize {
        (self.cap_factor * n_original as f64).ceil() as usize
    }
}

/// Non-fatal conditions met while transforming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PipelineWarning {
    /// Accepted candidates were dropped because the generated-column cap was
    /// reached.
    CapExceededWarning { cap: usize, dropped: usize },
    /// Structure learning stopped above its acyclicity tolerance; the pruned
    /// last iterate was used for selection.
    DagNotConverged { h: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub name: String,
    pub order: usize,
    pub round: usize,
    pub transform: TransformId,
    pub similarity: f64,
    pub swapped: bool,
    /// Provenance of the matched matrix record.
    pub source: String,
}

/// Machine-readable account of a transformation, written as a JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub dataset: String,
    pub n_original: usize,
    pub selected: Vec<String>,
    pub causal_ranking: Option<Vec<(String, f64)>>,
    pub generated: Vec<LineageEntry>,
    pub rejected_duplicates: usize,
    pub cap: usize,
    pub scaler: ScalerKind,
    pub scaler_similarity: Option<f64>,
    pub warnings: Vec<PipelineWarning>,
}

impl Lineage {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lineage serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFeature {
    pub expr: TransformExpr,
    pub values: Vec<f64>,
}

/// Everything needed to replay a transformation on new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformPlan {
    pub selected: Vec<String>,
    pub exprs: Vec<String>,
    pub scaler: ScalerParams,
}

impl TransformPlan {
    /// Selects, generates and scales the features of `d` using the fitted
    /// state of the plan; nothing is refitted.
    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        let idx = self
            .selected
            .iter()
            .map(|name| d.feature_index(name).ok_or_else(|| Error::UnknownFeature(name.clone())))
            .collect::<Result<Vec<_>>>()?;
        let base = d.select_features(&idx);
        let mut columns: Vec<(String, Vec<f64>)> =
            (0..base.n_features()).map(|j| (base.feature_name(j).to_string(), base.feature(j).to_vec())).collect();
        for text in &self.exprs {
            let expr: TransformExpr = text.parse()?;
            columns.push((text.clone(), eval_expr(&expr, &base)?));
        }
        let (names, values): (Vec<String>, Vec<Vec<f64>>) = columns.into_iter().unzip();
        let scaled = self.scaler.transform(&values)?;
        d.with_features(names.into_iter().zip(scaled).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineeredDataset {
    /// Causally selected original columns, in their original order.
    pub base: Dataset,
    /// Generated columns before scaling.
    pub generated: Vec<GeneratedFeature>,
    pub scaler: ScalerParams,
    /// Final scaled dataset: base columns then generated columns.
    pub output: Dataset,
    pub dag: Option<WeightedDag>,
    pub lineage: Lineage,
}

impl EngineeredDataset {
    pub fn plan(&self) -> TransformPlan {
        TransformPlan {
            selected: (0..self.base.n_features()).map(|j| self.base.feature_name(j).to_string()).collect(),
            exprs: self.generated.iter().map(|g| g.expr.to_string()).collect(),
            scaler: self.scaler.clone(),
        }
    }

    /// Unscaled base and generated columns.
    pub fn unscaled(&self) -> Vec<Vec<f64>> {
        let mut cols: Vec<Vec<f64>> = self.base.features().to_vec();
        cols.extend(self.generated.iter().map(|g| g.values.clone()));
        cols
    }
}

/// Accepts a candidate unless it is constant, an exact copy of an existing
/// column, or correlated beyond [`DEDUP_CORRELATION`] with one.
pub fn dedup_check(candidate: &[f64], existing: &[&[f64]]) -> bool {
    if stats::is_constant(candidate) {
        return false;
    }
    !existing.iter().any(|col| *col == candidate || stats::pearson(candidate, col).abs() > DEDUP_CORRELATION)
}

fn causal_selection(d: &Dataset, cfg: &PipelineConfig, warnings: &mut Vec<PipelineWarning>) -> Result<(Vec<usize>, Option<WeightedDag>)> {
    if cfg.select >= 1.0 {
        return Ok(((0..d.n_features()).collect(), None));
    }
    let dag = match fit_dag(d, &cfg.dag) {
        Ok(g) => g,
        Err(Error::NonConvergence { h, last }) => {
            warnings.push(PipelineWarning::DagNotConverged { h });
            *last
        }
        Err(e) => return Err(e),
    };
    let mut selected = select_top(&rank_features(&dag), cfg.select)?;
    selected.sort_unstable();
    Ok((selected, Some(dag)))
}

struct Builder<'a> {
    trm: &'a Trm,
    cfg: &'a PipelineConfig,
    current: Dataset,
    exprs: Vec<TransformExpr>,
    generated: Vec<GeneratedFeature>,
    lineage: Vec<LineageEntry>,
    cap: usize,
    dropped: usize,
    duplicates: usize,
}

struct Candidate {
    expr: TransformExpr,
    values: Vec<f64>,
    entry: LineageEntry,
}

impl Builder<'_> {
    fn offer(&mut self, c: Candidate) -> Result<()> {
        let existing: Vec<&[f64]> = self.current.features().iter().map(Vec::as_slice).collect();
        if !dedup_check(&c.values, &existing) {
            self.duplicates += 1;
            return Ok(());
        }
        if self.generated.len() >= self.cap {
            self.dropped += 1;
            return Ok(());
        }
        let mut cols: Vec<(String, Vec<f64>)> = (0..self.current.n_features())
            .map(|j| (self.current.feature_name(j).to_string(), self.current.feature(j).to_vec()))
            .collect();
        cols.push((c.entry.name.clone(), c.values.clone()));
        self.current = self.current.with_features(cols)?;
        self.exprs.push(c.expr.clone());
        self.generated.push(GeneratedFeature { expr: c.expr, values: c.values });
        self.lineage.push(c.entry);
        Ok(())
    }

    fn round(&mut self, round: usize, seen_unary: &mut HashSet<String>, seen_pairs: &mut HashSet<(String, String)>) -> Result<()> {
        let trm = self.trm;
        let tau = self.cfg.tau;
        let bins = self.cfg.bins;
        let meta = extract_meta_features(&self.current);
        let snapshot = self.current.n_features();

        let fresh: Vec<usize> = (0..snapshot).filter(|&j| seen_unary.insert(self.current.feature_name(j).to_string())).collect();
        let current = &self.current;
        let exprs = &self.exprs;
        let unary = fresh
            .par_iter()
            .map(|&j| -> Result<Option<Candidate>> {
                let e = encode_feature_with(&meta, current, j, bins)?;
                let Some(m) = trm.lookup_unary(&e, tau)? else { return Ok(None) };
                let TransformId::Unary(op) = m.transform else { unreachable!() };
                let expr = TransformExpr::unary(op, exprs[j].clone());
                let values = current.feature(j).iter().map(|&v| op.eval(v)).collect();
                let entry = LineageEntry {
                    name: expr.to_string(),
                    order: expr.order(),
                    round,
                    transform: m.transform,
                    similarity: m.similarity,
                    swapped: false,
                    source: trm.records()[m.record].source.clone(),
                };
                Ok(Some(Candidate { expr, values, entry }))
            })
            .collect::<Result<Vec<_>>>()?;
        for c in unary.into_iter().flatten() {
            self.offer(c)?;
        }

        let pool = self.current.n_features();
        let fresh_pairs: Vec<(usize, usize)> = (0..pool)
            .flat_map(|a| (a + 1..pool).map(move |b| (a, b)))
            .filter(|&(a, b)| {
                let (na, nb) = (self.current.feature_name(a), self.current.feature_name(b));
                let key = if na <= nb { (na.to_string(), nb.to_string()) } else { (nb.to_string(), na.to_string()) };
                seen_pairs.insert(key)
            })
            .collect();
        let current = &self.current;
        let exprs = &self.exprs;
        let encodings = (0..pool).map(|j| encode_feature_with(&meta, current, j, bins)).collect::<Result<Vec<_>>>()?;
        let binary = fresh_pairs
            .par_iter()
            .map(|&(a, b)| -> Result<Option<Candidate>> {
                let Some(m) = trm.lookup_binary(&encodings[a], &encodings[b], tau)? else { return Ok(None) };
                let (x, y) = if m.swapped { (b, a) } else { (a, b) };
                let expr = TransformExpr::binary(m.op, exprs[x].clone(), exprs[y].clone());
                let values = current.feature(x).iter().zip(current.feature(y)).map(|(&u, &v)| m.op.eval(u, v)).collect();
                let entry = LineageEntry {
                    name: expr.to_string(),
                    order: expr.order(),
                    round,
                    transform: TransformId::Binary(m.op),
                    similarity: m.similarity,
                    swapped: m.swapped,
                    source: trm.records()[m.record].source.clone(),
                };
                Ok(Some(Candidate { expr, values, entry }))
            })
            .collect::<Result<Vec<_>>>()?;
        for c in binary.into_iter().flatten() {
            self.offer(c)?;
        }
        Ok(())
    }
}

/// Engineers `d` with recommendations from `trm`.
///
/// Each round first looks up a unary transform for every feature present at
/// the start of the round, then a binary transform for every unordered pair
/// of the features present after the unary phase. A feature or pair is
/// looked up at most once over all rounds. Candidates pass the duplicate
/// filter and then the cap, in lookup order. Finally the scaler recommended
/// for the engineered dataset is fitted and applied to all columns.
pub fn transform_dataset(d: &Dataset, trm: &Trm, cfg: &PipelineConfig) -> Result<EngineeredDataset> {
    cfg.validate()?;
    let fp = trm.fingerprint();
    if fp.bins != cfg.bins {
        return Err(Error::ConfigMismatch { expected: format!("{} bins", cfg.bins), found: format!("{} bins", fp.bins) });
    }
    if d.n_features() == 0 {
        return Err(Error::NoNumericFeatures);
    }
    let mut warnings = Vec::new();
    let (selected, dag) = causal_selection(d, cfg, &mut warnings)?;
    let causal_ranking = dag.as_ref().map(|g| {
        rank_features(g).entries.iter().map(|&(i, m)| (d.feature_name(i).to_string(), m)).collect()
    });
    let base = d.select_features(&selected);
    let cap = cfg.cap(d.n_features());

    let mut builder = Builder {
        trm,
        cfg,
        current: base.clone(),
        exprs: (0..base.n_features()).map(|j| TransformExpr::feature(base.feature_name(j))).collect(),
        generated: Vec::new(),
        lineage: Vec::new(),
        cap,
        dropped: 0,
        duplicates: 0,
    };
    let mut seen_unary = HashSet::new();
    let mut seen_pairs = HashSet::new();
    for round in 1..=cfg.depth {
        builder.round(round, &mut seen_unary, &mut seen_pairs)?;
    }
    if builder.dropped > 0 {
        warnings.push(PipelineWarning::CapExceededWarning { cap, dropped: builder.dropped });
    }

    let unscaled = builder.current;
    let (kind, scaler_similarity) = match cfg.force_scaler {
        Some(kind) => (kind, None),
        None => {
            let m = trm.lookup_scaler(&encode_dataset(&unscaled))?;
            let TransformId::Scaler(kind) = m.transform else { unreachable!() };
            (kind, Some(m.similarity))
        }
    };
    let params = ScalerParams::fit(kind, unscaled.features());
    let scaled = params.transform(unscaled.features())?;
    let names: Vec<String> = (0..unscaled.n_features()).map(|j| unscaled.feature_name(j).to_string()).collect();
    let output = unscaled.with_features(names.into_iter().zip(scaled).collect())?;

    let lineage = Lineage {
        dataset: d.name().to_string(),
        n_original: d.n_features(),
        selected: (0..base.n_features()).map(|j| base.feature_name(j).to_string()).collect(),
        causal_ranking,
        generated: builder.lineage,
        rejected_duplicates: builder.duplicates,
        cap,
        scaler: kind,
        scaler_similarity,
        warnings,
    };
    Ok(EngineeredDataset { base, generated: builder.generated, scaler: params, output, dag, lineage })
}

/// Checks that every generated column equals its expression evaluated on the
/// selected originals, bit for bit.
pub fn verify_lineage(e: &EngineeredDataset) -> Result<bool> {
    for g in &e.generated {
        let again = eval_expr(&g.expr, &e.base)?;
        if again.len() != g.values.len() || again.iter().zip(&g.values).any(|(a, b)| a.to_bits() != b.to_bits()) {
            return Ok(false);
        }
    }
    Ok(true)
}
