//! The transformation recommendation matrix: encodings of past features
//! paired with the transformation that raised their information with the
//! target, queried by cosine similarity.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::meta_features::{
    encode_dataset, encode_feature_with, extract_meta_features, DatasetEncoding, FeatureEncoding, DEFAULT_BINS,
    META_FEATURE_COUNT, META_FEATURE_NAMES,
};
use crate::mic::{mic_labels, MicConfig};
use crate::scaler::{recommend_scaler, DEFAULT_GAMMA};
use crate::transforms::{BinaryOp, TransformId, UnaryOp, REGISTRY_VERSION};

/// Version of the on-disk format written by [`save_trm`].
pub const FORMAT_VERSION: u32 = 1;

const MAGIC: &str = "featcraft-trm";

/// Default minimum cosine similarity for unary and binary recommendations.
pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Unary,
    Binary,
    Scaler,
}

impl RecordKind {
    fn token(self) -> &'static str {
        match self {
            RecordKind::Unary => "unary",
            RecordKind::Binary => "binary",
            RecordKind::Scaler => "scaler",
        }
    }
}

/// One stored outcome. Encodings are raw (not normalized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrmRecord {
    pub kind: RecordKind,
    pub enc_a: Vec<f64>,
    pub enc_b: Option<Vec<f64>>,
    pub transform: TransformId,
    pub gain_a: Option<f64>,
    pub gain_b: Option<f64>,
    pub source: String,
}

impl TrmRecord {
    pub fn unary(enc: &FeatureEncoding, op: UnaryOp, gain: f64, source: impl Into<String>) -> Self {
        TrmRecord {
            kind: RecordKind::Unary,
            enc_a: enc.values.clone(),
            enc_b: None,
            transform: TransformId::Unary(op),
            gain_a: Some(gain),
            gain_b: None,
            source: source.into(),
        }
    }

    pub fn binary(
        a: &FeatureEncoding,
        b: &FeatureEncoding,
        op: BinaryOp,
        gains: (f64, f64),
        source: impl Into<String>,
    ) -> Self {
        TrmRecord {
            kind: RecordKind::Binary,
            enc_a: a.values.clone(),
            enc_b: Some(b.values.clone()),
            transform: TransformId::Binary(op),
            gain_a: Some(gains.0),
            gain_b: Some(gains.1),
            source: source.into(),
        }
    }

    pub fn scaler(enc: &DatasetEncoding, transform: TransformId, source: impl Into<String>) -> Self {
        TrmRecord {
            kind: RecordKind::Scaler,
            enc_a: enc.values.clone(),
            enc_b: None,
            transform,
            gain_a: None,
            gain_b: None,
            source: source.into(),
        }
    }

    fn check(&self, fp: &Fingerprint) -> Result<()> {
        let feature_len = fp.encoding_len();
        let ok = match self.kind {
            RecordKind::Unary => {
                matches!(self.transform, TransformId::Unary(_))
                    && self.enc_a.len() == feature_len
                    && self.enc_b.is_none()
                    && self.gain_a.is_some_and(|g| g > 0.0)
                    && self.gain_b.is_none()
            }
            RecordKind::Binary => {
                matches!(self.transform, TransformId::Binary(_))
                    && self.enc_a.len() == feature_len
                    && self.enc_b.as_ref().is_some_and(|b| b.len() == feature_len)
                    && self.gain_a.is_some_and(|g| g > 0.0)
                    && self.gain_b.is_some_and(|g| g > 0.0)
            }
            RecordKind::Scaler => {
                matches!(self.transform, TransformId::Scaler(_))
                    && self.enc_a.len() == fp.meta_features
                    && self.enc_b.is_none()
                    && self.gain_a.is_none()
                    && self.gain_b.is_none()
            }
        };
        let finite = self.enc_a.iter().chain(self.enc_b.iter().flatten()).all(|v| v.is_finite());
        if ok && finite {
            Ok(())
        } else {
            Err(Error::CorruptFile(format!("malformed {} record `{}`", self.kind.token(), self.source)))
        }
    }
}

/// Encoding layout shared by every record of a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub meta_features: usize,
    pub bins: usize,
    pub registry_version: u32,
}

impl Fingerprint {
    pub fn new(bins: usize) -> Self {
        Fingerprint { meta_features: META_FEATURE_COUNT, bins, registry_version: REGISTRY_VERSION }
    }

    pub fn encoding_len(&self) -> usize {
        self.meta_features + self.bins
    }
}

impl std::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "p={} s={} registry={}", self.meta_features, self.bins, self.registry_version)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trm {
    records: Vec<TrmRecord>,
    norm_stats: Vec<(f64, f64)>,
    fingerprint: Fingerprint,
    normalized: Vec<Vec<f64>>,
}

/// Value of a component that did not vary across the stored encodings.
const FLAT_COMPONENT: f64 = 0.5;

fn normalize_with(stats: &[(f64, f64)], v: &[f64]) -> Vec<f64> {
    v.iter()
        .zip(stats)
        .map(|(&x, &(lo, hi))| if hi > lo { ((x - lo) / (hi - lo)).clamp(0.0, 1.0) } else { FLAT_COMPONENT })
        .collect()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Nearest record for a unary or scaler query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub transform: TransformId,
    pub similarity: f64,
    pub record: usize,
}

/// Nearest record for a binary query; `swapped` means the arguments must be
/// exchanged before applying the transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryMatch {
    pub op: BinaryOp,
    pub swapped: bool,
    pub similarity: f64,
    pub record: usize,
}

impl Trm {
    /// Builds a matrix, computing normalization statistics over every stored
    /// encoding. Dataset encodings contribute to the meta-feature components.
    pub fn new(records: Vec<TrmRecord>, fingerprint: Fingerprint) -> Result<Trm> {
        for r in &records {
            r.check(&fingerprint)?;
        }
        let len = fingerprint.encoding_len();
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); len];
        for r in &records {
            for enc in std::iter::once(&r.enc_a).chain(r.enc_b.iter()) {
                for (b, &v) in bounds.iter_mut().zip(enc) {
                    b.0 = b.0.min(v);
                    b.1 = b.1.max(v);
                }
            }
        }
        let norm_stats = bounds.into_iter().map(|(lo, hi)| if lo <= hi { (lo, hi) } else { (0.0, 0.0) }).collect();
        Ok(Self::assemble(records, norm_stats, fingerprint))
    }

    fn assemble(records: Vec<TrmRecord>, norm_stats: Vec<(f64, f64)>, fingerprint: Fingerprint) -> Trm {
        let normalized = records
            .iter()
            .map(|r| {
                let mut v = normalize_with(&norm_stats, &r.enc_a);
                if let Some(b) = &r.enc_b {
                    v.extend(normalize_with(&norm_stats, b));
                }
                v
            })
            .collect();
        Trm { records, norm_stats, fingerprint, normalized }
    }

    pub fn records(&self) -> &[TrmRecord] {
        &self.records
    }

    pub fn norm_stats(&self) -> &[(f64, f64)] {
        &self.norm_stats
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn count(&self, kind: RecordKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }

    /// Min-max normalization by the stored statistics, clipped to `[0, 1]`.
    /// Components that were constant across the stored encodings map to 0.5.
    pub fn normalize(&self, v: &[f64]) -> Vec<f64> {
        normalize_with(&self.norm_stats, v)
    }

    fn check_feature(&self, e: &FeatureEncoding) -> Result<()> {
        let fp = self.fingerprint;
        if e.histogram_bins != fp.bins || e.values.len() != fp.encoding_len() {
            return Err(Error::ConfigMismatch {
                expected: format!("{} bins, {} components", fp.bins, fp.encoding_len()),
                found: format!("{} bins, {} components", e.histogram_bins, e.values.len()),
            });
        }
        if self.records.is_empty() {
            return Err(Error::EmptyTrm);
        }
        Ok(())
    }

    /// Best record of `kind` by similarity to any of `queries`; the first
    /// record and the first query win ties.
    fn best(&self, kind: RecordKind, queries: &[&[f64]]) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, _) in self.records.iter().enumerate().filter(|(_, r)| r.kind == kind) {
            for (q, query) in queries.iter().enumerate() {
                let s = cosine(query, &self.normalized[i]);
                if best.is_none_or(|b| s > b.2) {
                    best = Some((i, q, s));
                }
            }
        }
        best
    }

    /// Most similar unary record, if its similarity reaches `tau`.
    pub fn lookup_unary(&self, e: &FeatureEncoding, tau: f64) -> Result<Option<Match>> {
        self.check_feature(e)?;
        let q = self.normalize(&e.values);
        if q.iter().all(|&v| v == 0.0) {
            return Ok(None);
        }
        Ok(self
            .best(RecordKind::Unary, &[&q])
            .filter(|b| b.2 >= tau)
            .map(|(i, _, similarity)| Match { transform: self.records[i].transform, similarity, record: i }))
    }

    /// Most similar binary record over both argument orders, if its
    /// similarity reaches `tau`. The stored order wins ties.
    pub fn lookup_binary(&self, ei: &FeatureEncoding, ej: &FeatureEncoding, tau: f64) -> Result<Option<BinaryMatch>> {
        self.check_feature(ei)?;
        self.check_feature(ej)?;
        let (ni, nj) = (self.normalize(&ei.values), self.normalize(&ej.values));
        let forward: Vec<f64> = ni.iter().chain(&nj).copied().collect();
        if forward.iter().all(|&v| v == 0.0) {
            return Ok(None);
        }
        let swapped: Vec<f64> = nj.iter().chain(&ni).copied().collect();
        Ok(self.best(RecordKind::Binary, &[&forward, &swapped]).filter(|b| b.2 >= tau).map(|(i, q, similarity)| {
            let TransformId::Binary(op) = self.records[i].transform else { unreachable!("checked on construction") };
            BinaryMatch { op, swapped: q == 1, similarity, record: i }
        }))
    }

    /// Nearest scaler record; no threshold applies.
    pub fn lookup_scaler(&self, de: &DatasetEncoding) -> Result<Match> {
        let p = self.fingerprint.meta_features;
        if de.values.len() != p {
            return Err(Error::ConfigMismatch { expected: format!("{p} meta-features"), found: de.values.len().to_string() });
        }
        let q = normalize_with(&self.norm_stats[..p], &de.values);
        self.best(RecordKind::Scaler, &[&q])
            .map(|(i, _, similarity)| Match { transform: self.records[i].transform, similarity, record: i })
            .ok_or(Error::EmptyTrm)
    }
}

/// Settings of [`train_trm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrmConfig {
    pub bins: usize,
    pub mic: MicConfig,
    pub gamma: f64,
}

impl Default for TrmConfig {
    fn default() -> Self {
        TrmConfig { bins: DEFAULT_BINS, mic: MicConfig::default(), gamma: DEFAULT_GAMMA }
    }
}

fn train_dataset(d: &Dataset, cfg: &TrmConfig) -> Result<Vec<TrmRecord>> {
    let meta = extract_meta_features(d);
    let p = d.n_features();
    let labels = d.labels();
    let encodings = (0..p).map(|j| encode_feature_with(&meta, d, j, cfg.bins)).collect::<Result<Vec<_>>>()?;
    let base = (0..p).into_par_iter().map(|j| mic_labels(d.feature(j), labels, &cfg.mic)).collect::<Result<Vec<_>>>()?;

    let unary = (0..p)
        .into_par_iter()
        .map(|j| -> Result<Option<TrmRecord>> {
            let x = d.feature(j);
            let mut best: Option<(UnaryOp, f64)> = None;
            for &op in UnaryOp::ALL {
                let t: Vec<f64> = x.iter().map(|&v| op.eval(v)).collect();
                let gain = mic_labels(&t, labels, &cfg.mic)? - base[j];
                if best.is_none_or(|b| gain > b.1) {
                    best = Some((op, gain));
                }
            }
            Ok(best
                .filter(|b| b.1 > 0.0)
                .map(|(op, gain)| TrmRecord::unary(&encodings[j], op, gain, format!("{}/{}", d.name(), d.feature_name(j)))))
        })
        .collect::<Result<Vec<_>>>()?;

    let pairs: Vec<(usize, usize, BinaryOp)> = (0..p)
        .flat_map(|i| (i + 1..p).flat_map(move |j| BinaryOp::ALL.iter().map(move |&op| (i, j, op))))
        .collect();
    let binary = pairs
        .into_par_iter()
        .map(|(i, j, op)| -> Result<Option<TrmRecord>> {
            let t: Vec<f64> = d.feature(i).iter().zip(d.feature(j)).map(|(&a, &b)| op.eval(a, b)).collect();
            let score = mic_labels(&t, labels, &cfg.mic)?;
            let gains = (score - base[i], score - base[j]);
            Ok((gains.0 > 0.0 && gains.1 > 0.0).then(|| {
                let source = format!("{}/{},{}", d.name(), d.feature_name(i), d.feature_name(j));
                TrmRecord::binary(&encodings[i], &encodings[j], op, gains, source)
            }))
        })
        .collect::<Result<Vec<_>>>()?;

    let decision = recommend_scaler(d, cfg.gamma)?;
    let scaler = TrmRecord::scaler(&encode_dataset(d), TransformId::Scaler(decision.choice), d.name());

    let mut records: Vec<TrmRecord> = unary.into_iter().flatten().collect();
    records.extend(binary.into_iter().flatten());
    records.push(scaler);
    Ok(records)
}

/// Trains a matrix over preprocessed datasets. Records appear in corpus
/// order; within a dataset unary records come first, then binary records by
/// feature pair and operator, then the scaler record.
pub fn train_trm(corpus: &[Dataset], cfg: &TrmConfig) -> Result<Trm> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    cfg.mic.validate()?;
    if cfg.bins < 2 {
        return Err(Error::BadBins(cfg.bins));
    }
    let per_dataset = corpus.par_iter().map(|d| train_dataset(d, cfg)).collect::<Result<Vec<_>>>()?;
    Trm::new(per_dataset.into_iter().flatten().collect(), Fingerprint::new(cfg.bins))
}

fn join_floats(v: &[f64]) -> String {
    let mut s = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{x:?}");
    }
    s
}

fn opt_float(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:?}"))
}

/// Renders the matrix in the versioned text format. The last line holds a
/// SHA-256 checksum of every preceding byte.
pub fn to_text(trm: &Trm) -> String {
    let fp = trm.fingerprint;
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(s, "fingerprint {fp}");
    let _ = writeln!(s, "meta {}", META_FEATURE_NAMES.join(","));
    let norm: Vec<String> = trm.norm_stats.iter().map(|(lo, hi)| format!("{lo:?}:{hi:?}")).collect();
    let _ = writeln!(s, "norm {}", norm.join(" "));
    let _ = writeln!(s, "records {}", trm.records.len());
    for r in &trm.records {
        let source = serde_json::to_string(&r.source).expect("string serialization is infallible");
        let enc_b = r.enc_b.as_deref().map_or_else(|| "-".to_string(), join_floats);
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.kind.token(),
            r.transform,
            opt_float(r.gain_a),
            opt_float(r.gain_b),
            join_floats(&r.enc_a),
            enc_b,
            source
        );
    }
    let digest = Sha256::digest(s.as_bytes());
    let _ = writeln!(s, "checksum {}", hex(&digest));
    s
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptFile(msg.into())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| corrupt(format!("bad number `{s}`")))
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_f64).collect()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == "-" {
        Ok(None)
    } else {
        parse_f64(s).map(Some)
    }
}

fn field<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    line.and_then(|l| l.strip_prefix(key)).and_then(|l| l.strip_prefix(' ')).ok_or_else(|| corrupt(format!("missing `{key}` line")))
}

/// Parses the text format, checking version, checksum and every field.
pub fn from_text(text: &str) -> Result<Trm> {
    let first = text.lines().next().ok_or_else(|| corrupt("empty file"))?;
    let version = first.strip_prefix(MAGIC).and_then(|r| r.strip_prefix(' ')).ok_or_else(|| corrupt("not a matrix file"))?;
    if version != FORMAT_VERSION.to_string() {
        return Err(Error::VersionMismatch { expected: FORMAT_VERSION, found: version.to_string() });
    }
    let body = text.strip_suffix('\n').ok_or_else(|| corrupt("truncated file"))?;
    let split = body.rfind('\n').ok_or_else(|| corrupt("truncated file"))? + 1;
    let (covered, last) = body.split_at(split);
    let expected = last.strip_prefix("checksum ").ok_or_else(|| corrupt("missing checksum"))?;
    if hex(&Sha256::digest(covered.as_bytes())) != expected {
        return Err(corrupt("checksum mismatch"));
    }

    let mut lines = covered.lines().skip(1);
    let fp_text = field(lines.next(), "fingerprint")?;
    let mut fp_parts = fp_text.split(' ');
    let mut fp_num = |key: &str| -> Result<usize> {
        fp_parts
            .next()
            .and_then(|p| p.strip_prefix(key))
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| corrupt(format!("bad fingerprint `{fp_text}`")))
    };
    let meta_features = fp_num("p=")?;
    let bins = fp_num("s=")?;
    let registry_version = fp_num("registry=")? as u32;
    let fingerprint = Fingerprint { meta_features, bins, registry_version };
    if meta_features != META_FEATURE_COUNT || registry_version != REGISTRY_VERSION {
        return Err(Error::ConfigMismatch { expected: Fingerprint::new(bins).to_string(), found: fingerprint.to_string() });
    }
    if field(lines.next(), "meta")? != META_FEATURE_NAMES.join(",") {
        return Err(corrupt("meta-feature names differ"));
    }
    let norm_stats = field(lines.next(), "norm")?
        .split(' ')
        .map(|pair| {
            let (lo, hi) = pair.split_once(':').ok_or_else(|| corrupt(format!("bad norm entry `{pair}`")))?;
            Ok((parse_f64(lo)?, parse_f64(hi)?))
        })
        .collect::<Result<Vec<_>>>()?;
    if norm_stats.len() != fingerprint.encoding_len() {
        return Err(corrupt("norm statistics have the wrong length"));
    }
    let count: usize = field(lines.next(), "records")?.parse().map_err(|_| corrupt("bad record count"))?;

    let mut records = Vec::with_capacity(count);
    for line in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        let [kind, transform, gain_a, gain_b, enc_a, enc_b, source] = cols[..] else {
            return Err(corrupt(format!("record has {} fields", cols.len())));
        };
        let kind = match kind {
            "unary" => RecordKind::Unary,
            "binary" => RecordKind::Binary,
            "scaler" => RecordKind::Scaler,
            other => return Err(corrupt(format!("unknown record kind `{other}`"))),
        };
        let record = TrmRecord {
            kind,
            enc_a: parse_floats(enc_a)?,
            enc_b: if enc_b == "-" { None } else { Some(parse_floats(enc_b)?) },
            transform: transform.parse().map_err(|_| corrupt(format!("unknown transform `{transform}`")))?,
            gain_a: parse_opt(gain_a)?,
            gain_b: parse_opt(gain_b)?,
            source: serde_json::from_str(source).map_err(|_| corrupt("bad source field"))?,
        };
        record.check(&fingerprint)?;
        records.push(record);
    }
    if records.len() != count {
        return Err(corrupt(format!("expected {count} records, found {}", records.len())));
    }
    Ok(Trm::assemble(records, norm_stats, fingerprint))
}

pub fn save_trm(trm: &Trm, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_text(trm)).map_err(|e| Error::io(path, e))
}

pub fn load_trm(path: impl AsRef<Path>) -> Result<Trm> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| corrupt("file is not UTF-8"))?;
    from_text(&text)
}
