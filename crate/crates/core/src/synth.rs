//! Seeded synthetic datasets with planted non-linear structure, used as a
//! training corpus for recommendation matrices and as evaluation targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};

use crate::dataset::Dataset;
use crate::error::Result;

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn lognormal(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    let dist = LogNormal::new(0.0, sigma).expect("valid parameters");
    (0..n).map(|_| dist.sample(rng)).collect()
}

fn labels(flags: impl Iterator<Item = bool>) -> Vec<&'static str> {
    flags.map(|f| if f { "pos" } else { "neg" }).collect()
}

fn build(name: &str, cols: Vec<(&str, Vec<f64>)>, tokens: &[&str]) -> Result<Dataset> {
    let feats = cols.into_iter().map(|(n, v)| (n.to_string(), v)).collect();
    Dataset::from_tokens(name, feats, tokens, "class")
}

/// Seed of the bundled training corpus.
pub const CORPUS_SEED: u64 = 7;

/// The two bundled synthetic evaluation datasets, as written under `data/`.
pub fn bundled() -> Result<Vec<Dataset>> {
    Ok(vec![sign_product(400, 2, 11)?, log_product(400, 12)?])
}

/// `class = [x1 * x2 > 0]` with `x1, x2 ~ U(-1, 1)` and `noise` extra
/// uniform columns.
pub fn sign_product(n: usize, noise: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x1 = uniform(&mut rng, n, -1.0, 1.0);
    let x2 = uniform(&mut rng, n, -1.0, 1.0);
    let y = labels(x1.iter().zip(&x2).map(|(a, b)| a * b > 0.0));
    let mut cols = vec![("x1", x1), ("x2", x2)];
    let names = ["n1", "n2", "n3", "n4", "n5", "n6"];
    for name in names.iter().take(noise) {
        cols.push((name, uniform(&mut rng, n, -1.0, 1.0)));
    }
    build("sign_product", cols, &y)
}

/// Multiplicative structure over skewed positive inputs:
/// `class = [ln x1 + ln x2 > 0]`, i.e. `x1 * x2 > 1`, with lognormal
/// `x1, x2` and one lognormal noise column.
pub fn log_product(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x1 = lognormal(&mut rng, n, 1.0);
    let x2 = lognormal(&mut rng, n, 1.0);
    let x3 = lognormal(&mut rng, n, 1.0);
    let y = labels(x1.iter().zip(&x2).map(|(a, b)| a.ln() + b.ln() > 0.0));
    build("log_product", vec![("x1", x1), ("x2", x2), ("x3", x3)], &y)
}

/// Mixed structures for training a recommendation matrix. None of these
/// datasets coincides with the evaluation generators' seeds or shapes.
pub fn training_corpus(seed: u64) -> Result<Vec<Dataset>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next = || rng.random::<u64>();
    let mut corpus = Vec::new();

    for (i, n) in [240usize, 320].into_iter().enumerate() {
        let mut r = ChaCha8Rng::seed_from_u64(next());
        let a = uniform(&mut r, n, -2.0, 2.0);
        let b = uniform(&mut r, n, -1.0, 3.0);
        let c = normal(&mut r, n);
        let y = labels(a.iter().zip(&b).map(|(a, b)| a * (b - 1.0) > 0.0));
        corpus.push(build(&format!("corpus_signs{i}"), vec![("a", a), ("b", b), ("c", c)], &y)?);
    }

    for (i, n) in [260usize, 300].into_iter().enumerate() {
        let mut r = ChaCha8Rng::seed_from_u64(next());
        let a = lognormal(&mut r, n, 0.8);
        let b = lognormal(&mut r, n, 1.2);
        let c = lognormal(&mut r, n, 1.0);
        let d = uniform(&mut r, n, 0.0, 1.0);
        let y = labels(a.iter().zip(&b).map(|(a, b)| a * b > 1.0));
        corpus.push(build(&format!("corpus_mult{i}"), vec![("a", a), ("b", b), ("c", c), ("d", d)], &y)?);
    }

    for (i, n) in [250usize, 280].into_iter().enumerate() {
        let mut r = ChaCha8Rng::seed_from_u64(next());
        let a = lognormal(&mut r, n, 1.0);
        let b = lognormal(&mut r, n, 1.0);
        let c = normal(&mut r, n);
        let y = labels(a.iter().zip(&b).map(|(a, b)| a / b > 1.0));
        corpus.push(build(&format!("corpus_ratio{i}"), vec![("a", a), ("b", b), ("c", c)], &y)?);
    }

    {
        let n = 300;
        let mut r = ChaCha8Rng::seed_from_u64(next());
        let a = normal(&mut r, n);
        let b = uniform(&mut r, n, -1.0, 1.0);
        let c = normal(&mut r, n);
        let y = labels(a.iter().zip(&b).map(|(a, b)| a * a + b > 1.0));
        corpus.push(build("corpus_square", vec![("a", a), ("b", b), ("c", c)], &y)?);
    }

    {
        let n = 300;
        let mut r = ChaCha8Rng::seed_from_u64(next());
        let a = normal(&mut r, n);
        let b = normal(&mut r, n);
        let c = uniform(&mut r, n, 0.0, 4.0);
        let tokens: Vec<&str> = a
            .iter()
            .zip(&b)
            .map(|(a, b)| {
                let s = a - b;
                if s < -0.7 {
                    "low"
                } else if s > 0.7 {
                    "high"
                } else {
                    "mid"
                }
            })
            .collect();
        corpus.push(build("corpus_diff", vec![("a", a), ("b", b), ("c", c)], &tokens)?);
    }

    {
        let n = 280;
        let mut r = ChaCha8Rng::seed_from_u64(next());
        let a = normal(&mut r, n);
        let b: Vec<f64> = a.iter().map(|v| 0.5 * v + 0.5 * Distribution::<f64>::sample(&StandardNormal, &mut r)).collect();
        let c = uniform(&mut r, n, -3.0, 3.0);
        let y = labels(a.iter().zip(&c).map(|(a, c)| a.abs() > 0.8 || c.abs() > 2.5));
        corpus.push(build("corpus_abs", vec![("a", a), ("b", b), ("c", c)], &y)?);
    }
    Ok(corpus)
}
