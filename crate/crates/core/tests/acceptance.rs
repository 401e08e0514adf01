//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use featcraft::causal::{acyclicity, fit_dag_columns};
use featcraft::dataset::Imputer;
use featcraft::mic::mic_exact;
use featcraft::scaler::{recommend_scaler_columns, DEFAULT_GAMMA};
use featcraft::transforms::eval_expr;
use featcraft::trm::{Fingerprint, RecordKind};
use featcraft::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

// 1. Heuristic MIC never exceeds the exhaustive grid search and agrees with
// it on noiseless monotone pairs. For n <= 12 the budget admits only 2x2
// grids, so a monotone pair scores 1 exactly when n is even and
// H(floor(n/2)/n) / ln 2 otherwise.
const MIC_TOL: f64 = 1e-9;

fn monotone_ceiling(n: usize) -> f64 {
    let p = (n / 2) as f64 / n as f64;
    -(p * p.ln() + (1.0 - p) * (1.0 - p).ln()) / 2f64.ln()
}

fn mic_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = MicConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut violations = 0;
    let mut pairs = 0;
    for _ in 0..240 {
        let n = rng.random_range(4..=12);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v + 0.3 * rng.random_range(-1.0..1.0)).collect();
        let h = mic(&x, &y, &cfg).unwrap();
        let e = mic_exact(&x, &y, &cfg).unwrap();
        pairs += 1;
        if h > e + MIC_TOL {
            violations += 1;
        }
    }
    let mut monotone_bad = 0;
    let mut monotone_ones = 0;
    for _ in 0..40 {
        let n = rng.random_range(4..=12);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = x.iter().map(|v: &f64| v.exp() + v).collect();
        let h = mic(&x, &y, &cfg).unwrap();
        let e = mic_exact(&x, &y, &cfg).unwrap();
        pairs += 1;
        let want = monotone_ceiling(n);
        if (h - e).abs() > MIC_TOL || (h - want).abs() > MIC_TOL {
            monotone_bad += 1;
        }
        if n % 2 == 0 && (h - 1.0).abs() <= MIC_TOL && (e - 1.0).abs() <= MIC_TOL {
            monotone_ones += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        violations == 0 && monotone_bad == 0 && monotone_ones > 0 && elapsed < Duration::from_secs(60),
        format!(
            "{pairs} pairs, {violations} above oracle, {monotone_bad} monotone disagreements, \
             {monotone_ones} even-n monotone pairs at 1.0, {elapsed:.2?}"
        ),
    )
}

// 2. MIC is unchanged by strictly increasing maps of one argument.
fn mic_rank_invariance() -> Outcome {
    let cfg = MicConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let maps: [fn(f64) -> f64; 3] = [|v| 3.0 * v + 1.0, f64::exp, |v| v * v * v];
    let mut worst = 0.0f64;
    for p in 0..100 {
        let x: Vec<f64> = (0..100).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = match p % 3 {
            0 => x.iter().map(|v| v.sin() + 0.2 * gaussian(&mut rng)).collect(),
            1 => x.iter().map(|v| v * v + 0.5 * gaussian(&mut rng)).collect(),
            _ => (0..100).map(|_| gaussian(&mut rng)).collect(),
        };
        let base = mic(&x, &y, &cfg).unwrap();
        for f in maps {
            let fx: Vec<f64> = x.iter().map(|&v| f(v)).collect();
            worst = worst.max((mic(&fx, &y, &cfg).unwrap() - base).abs());
        }
    }
    outcome(worst <= 1e-9, format!("max deviation {worst:e}"))
}

// 3. Analytic acyclicity gradient against central differences.
fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let step = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let w = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let (_, grad) = acyclicity(&w).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let mut plus = w.clone();
                plus[(i, j)] += step;
                let mut minus = w.clone();
                minus[(i, j)] -= step;
                let fd = (acyclicity(&plus).unwrap().0 - acyclicity(&minus).unwrap().0) / (2.0 * step);
                let a = grad[(i, j)];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
    }
    outcome(worst <= 1e-4, format!("max relative error {worst:e}"))
}

// 4. Structure recovery on a linear SEM with a sink target.
const SEM_EDGES: [(usize, usize, f64); 5] = [(0, 1, 1.0), (0, 2, -1.0), (1, 3, 0.8), (3, 5, 1.5), (2, 5, 1.0)];
const SEM_TOP: usize = 3;

fn sem_columns(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![vec![0.0; n]; 6];
    for i in 0..n {
        for v in 0..6 {
            let mut x = gaussian(&mut rng);
            for &(p, c, w) in &SEM_EDGES {
                if c == v {
                    x += w * cols[p][i];
                }
            }
            cols[v][i] = x;
        }
    }
    cols
}

fn shd(learned: &[(usize, usize)], truth: &[(usize, usize)]) -> usize {
    let mut d = 0;
    for &(a, b) in truth {
        if !learned.contains(&(a, b)) {
            d += 1;
        }
    }
    for &(a, b) in learned {
        if !truth.contains(&(a, b)) && !truth.contains(&(b, a)) {
            d += 1;
        }
    }
    d
}

fn causal_recovery() -> (Outcome, String) {
    let start = Instant::now();
    let cols = sem_columns(500, 404);
    let names = (0..6).map(|i| format!("x{i}")).collect();
    let g = fit_dag_columns(&cols, names, &DagOptions::default()).unwrap();
    let learned: Vec<(usize, usize)> = g.edges().iter().map(|&(a, b, _)| (a, b)).collect();
    let truth: Vec<(usize, usize)> = SEM_EDGES.iter().map(|&(a, b, _)| (a, b)).collect();
    let distance = shd(&learned, &truth);
    let ranking = rank_features(&g);
    let top = ranking.order()[0];
    let elapsed = start.elapsed();
    let report = format!("{:?}\n{:?}\n{:?}", g.weights, ranking.entries, g.h);
    (
        outcome(
            distance <= 2 && top == SEM_TOP && elapsed < Duration::from_secs(30),
            format!("SHD {distance}, top feature x{top}, {elapsed:.2?}"),
        ),
        report,
    )
}

// 5. Scaler choice in the three synthetic regimes.
fn regime(kind: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 300;
    (0..3)
        .map(|_| match kind {
            0 => (0..n)
                .map(|_| {
                    if rng.random::<f64>() < 0.2 {
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        sign * rng.random_range(8.0..12.0)
                    } else {
                        gaussian(&mut rng)
                    }
                })
                .collect(),
            1 => (0..n).map(|_| gaussian(&mut rng)).collect(),
            _ => (0..n).map(|_| rng.random_range(0.0..1.0)).collect(),
        })
        .collect()
}

fn scaler_regimes() -> (Outcome, String) {
    let expected = [ScalerKind::Robust, ScalerKind::Standard, ScalerKind::MinMax];
    let labels = ["outliers", "normal", "uniform"];
    let mut hits = [0usize; 3];
    let mut report = String::new();
    for (kind, want) in expected.iter().enumerate() {
        for seed in 0..10 {
            let decision = recommend_scaler_columns(&regime(kind, 500 + seed), DEFAULT_GAMMA).unwrap();
            report.push_str(&format!("{decision:?}\n"));
            if decision.choice == *want {
                hits[kind] += 1;
            }
        }
    }
    let detail = labels.iter().zip(hits).map(|(l, h)| format!("{l} {h}/10")).collect::<Vec<_>>().join(", ");
    (outcome(hits.iter().all(|&h| h >= 9), detail), report)
}

// 6 and 7. End-to-end comparison and bit-exact lineage replay.
fn read_target_map(dir: &Path) -> BTreeMap<String, String> {
    std::fs::read_to_string(dir.join("targets.txt"))
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(f, t)| (f.trim().to_string(), t.trim().to_string()))
        .collect()
}

fn bundled_datasets() -> (Trm, Vec<Dataset>, bool) {
    let corpus_dir = data_dir().join("corpus");
    let corpus: Vec<Dataset> =
        read_target_map(&corpus_dir).iter().map(|(f, t)| load_csv(corpus_dir.join(f), t).unwrap()).collect();
    let trm = train_trm(&corpus, &TrmConfig::default()).unwrap();
    let mut eval = vec![load_csv(data_dir().join("wine.csv"), "cultivar").unwrap()];
    let mut files_match = true;
    for generated in featcraft::synth::bundled().unwrap() {
        let loaded = load_csv(data_dir().join(format!("{}.csv", generated.name())), "class").unwrap();
        files_match &= loaded.features() == generated.features() && loaded.labels() == generated.labels();
        eval.push(loaded);
    }
    let corpus_names: Vec<&str> = corpus.iter().map(|d| d.name()).collect();
    files_match &= eval.iter().all(|d| !corpus_names.contains(&d.name()));
    (trm, eval, files_match)
}

fn end_to_end(trm: &Trm, datasets: &[Dataset], files_match: bool) -> (Outcome, String) {
    let start = Instant::now();
    let cfg = CompareConfig::default();
    let mut report = String::new();
    let mut summary = Vec::new();
    let mut all = files_match;
    for d in datasets {
        let r = compare(d, trm, &cfg).unwrap();
        let best = r.rows.iter().map(|row| row.delta).fold(f64::NEG_INFINITY, f64::max);
        summary.push(format!("{} {} (best delta {best:+.4})", r.dataset, r.improved_any));
        all &= r.improved_any;
        report.push_str(&r.to_json());
    }
    let elapsed = start.elapsed();
    summary.push(format!("{elapsed:.2?}"));
    if !files_match {
        summary.push("bundled files differ from generators".into());
    }
    (outcome(all && elapsed < Duration::from_secs(300), summary.join(", ")), report)
}

fn lineage_replay(trm: &Trm, datasets: &[Dataset]) -> Outcome {
    let cfg = CompareConfig::default();
    let mut outputs = 0;
    let mut columns = 0;
    let mut mismatches = 0;
    for d in datasets {
        let plan = stratified_folds(d, cfg.folds, cfg.seed).unwrap();
        for f in 0..cfg.folds {
            let train = d.select_rows(&plan.train_indices(f));
            let train = Imputer::fit(&train).unwrap().apply(&train);
            let e = transform_dataset(&train, trm, &cfg.pipeline).unwrap();
            let lineage: Lineage = serde_json::from_str(&e.lineage.to_json()).unwrap();
            let unscaled = e.unscaled();
            let generated = &unscaled[e.base.n_features()..];
            outputs += 1;
            if lineage.generated.len() != generated.len() {
                mismatches += 1;
                continue;
            }
            for (entry, values) in lineage.generated.iter().zip(generated) {
                let expr: TransformExpr = entry.name.parse().unwrap();
                let again = eval_expr(&expr, &e.base).unwrap();
                columns += 1;
                if again.len() != values.len() || again.iter().zip(values).any(|(a, b)| a.to_bits() != b.to_bits()) {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(mismatches == 0 && columns > 0, format!("{outputs} outputs, {columns} generated columns, {mismatches} mismatches"))
}

// 9. Persistence of a large matrix.
fn random_record(rng: &mut ChaCha8Rng, fp: &Fingerprint, i: usize) -> TrmRecord {
    let len = fp.encoding_len();
    let mut enc = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-50.0..50.0)).collect() };
    let (a, b, m) = (enc(len), enc(len), enc(fp.meta_features));
    let gain = |rng: &mut ChaCha8Rng| rng.random_range(1e-6..1.0);
    match i % 3 {
        0 => TrmRecord {
            kind: RecordKind::Unary,
            enc_a: a,
            enc_b: None,
            transform: TransformId::Unary(UnaryOp::ALL[i % UnaryOp::ALL.len()]),
            gain_a: Some(gain(rng)),
            gain_b: None,
            source: format!("ds{i}/\"f\"\t{i}"),
        },
        1 => TrmRecord {
            kind: RecordKind::Binary,
            enc_a: a,
            enc_b: Some(b),
            transform: TransformId::Binary(BinaryOp::ALL[i % BinaryOp::ALL.len()]),
            gain_a: Some(gain(rng)),
            gain_b: Some(gain(rng)),
            source: format!("ds{i}/a,b"),
        },
        _ => TrmRecord {
            kind: RecordKind::Scaler,
            enc_a: m,
            enc_b: None,
            transform: TransformId::Scaler(ScalerKind::ALL[i % ScalerKind::ALL.len()]),
            gain_a: None,
            gain_b: None,
            source: format!("ds{i}"),
        },
    }
}

fn persistence() -> Outcome {
    let fp = Fingerprint::new(10);
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let records: Vec<TrmRecord> = (0..1000).map(|i| random_record(&mut rng, &fp, i)).collect();
    let trm = Trm::new(records, fp).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.trm");
    save_trm(&trm, &path).unwrap();
    let loaded = load_trm(&path).unwrap();
    let lossless = loaded.records() == trm.records() && loaded.fingerprint() == trm.fingerprint();

    let bytes = std::fs::read(&path).unwrap();
    let mut rejected = 0;
    let positions = [bytes.len() / 5, bytes.len() / 2, bytes.len() * 4 / 5];
    for &pos in &positions {
        let mut bad = bytes.clone();
        bad[pos] = if bad[pos] == b'7' { b'3' } else { b'7' };
        let bad_path = dir.path().join(format!("bad{pos}.trm"));
        std::fs::write(&bad_path, &bad).unwrap();
        if matches!(load_trm(&bad_path), Err(Error::CorruptFile(_))) {
            rejected += 1;
        }
    }
    outcome(
        lossless && rejected == positions.len(),
        format!("1000 records lossless={lossless}, corrupted files rejected {rejected}/{}", positions.len()),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 mic oracle equivalence", mic_oracle()));
    results.push(("2 mic rank invariance", mic_rank_invariance()));
    results.push(("3 acyclicity gradient", gradient_check()));

    let (c4, r4) = causal_recovery();
    results.push(("4 causal recovery", c4));
    let (c5, r5) = scaler_regimes();
    results.push(("5 scaler decision matrix", c5));
    let (trm, datasets, files_match) = bundled_datasets();
    let (c6, r6) = end_to_end(&trm, &datasets, files_match);
    results.push(("6 end-to-end improvement", c6));
    results.push(("7 lineage replay", lineage_replay(&trm, &datasets)));

    let (_, r4b) = causal_recovery();
    let (_, r5b) = scaler_regimes();
    let (trm_b, datasets_b, files_b) = bundled_datasets();
    let (_, r6b) = end_to_end(&trm_b, &datasets_b, files_b);
    let same = [(r4 == r4b), (r5 == r5b), (r6 == r6b)];
    results.push((
        "8 determinism",
        outcome(same.iter().all(|&s| s), format!("reports identical: causal {}, scaler {}, compare {}", same[0], same[1], same[2])),
    ));
    results.push(("9 matrix persistence", persistence()));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
