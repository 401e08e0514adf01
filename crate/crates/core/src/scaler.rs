//! Dataset-level scaler choice: the outlier fraction decides robust scaling,
//! a Shapiro–Wilk normality test decides standard scaling, and min-max
//! scaling is the fallback.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::stats;
use crate::transforms::ScalerKind;

/// Default outlier-fraction threshold above which robust scaling is chosen.
pub const DEFAULT_GAMMA: f64 = 0.05;

/// Significance level of the normality test.
pub const NORMALITY_ALPHA: f64 = 0.05;

/// Largest sample the Shapiro–Wilk approximation covers; bigger samples are
/// subsampled with a fixed seed.
pub const SW_MAX_SAMPLES: usize = 5000;

const SUBSAMPLE_SEED: u64 = 0x5ca1e;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerDecision {
    pub choice: ScalerKind,
    pub outlier_fraction: f64,
    /// Median per-column Shapiro–Wilk p-value; absent when the outlier test
    /// already decided.
    pub sw_p: Option<f64>,
}

/// Fraction of cells outside their column's Tukey fences
/// `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`.
pub fn outlier_proportion(columns: &[Vec<f64>]) -> f64 {
    let mut outliers = 0usize;
    let mut total = 0usize;
    for col in columns {
        total += col.len();
        if col.is_empty() || stats::is_constant(col) {
            continue;
        }
        let s = stats::sorted(col);
        let q1 = stats::quantile_sorted(&s, 0.25);
        let q3 = stats::quantile_sorted(&s, 0.75);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        outliers += col.iter().filter(|&&v| v < lo || v > hi).count();
    }
    if total == 0 {
        0.0
    } else {
        outliers as f64 / total as f64
    }
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

/// Shapiro–Wilk `(W, p)` by Royston's approximation (AS R94).
pub fn shapiro_wilk(x: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n < 3 {
        return Err(Error::TooFewSamples { n, min: 3 });
    }
    let sample: Vec<f64> = if n > SW_MAX_SAMPLES {
        let mut rng = ChaCha8Rng::seed_from_u64(SUBSAMPLE_SEED);
        let mut idx = rand::seq::index::sample(&mut rng, n, SW_MAX_SAMPLES).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| x[i]).collect()
    } else {
        x.to_vec()
    };
    let s = stats::sorted(&sample);
    let n = s.len();
    let ssq = {
        let m = stats::mean(&s);
        let mut d: Vec<f64> = s.iter().map(|v| (v - m) * (v - m)).collect();
        d.sort_by(f64::total_cmp);
        d.iter().sum::<f64>()
    };
    if stats::is_constant(&s) || ssq.is_nan() || ssq <= 0.0 {
        return Err(Error::DegenerateSample);
    }

    let a = coefficients(n);
    let num: f64 = a.iter().zip(&s).map(|(a, x)| a * x).sum();
    let w = (num * num / ssq).min(1.0);
    Ok((w, p_value(w, n)))
}

/// Antisymmetric weights for the ascending order statistics.
fn coefficients(n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n];
    if n == 3 {
        a[0] = -std::f64::consts::FRAC_1_SQRT_2;
        a[2] = std::f64::consts::FRAC_1_SQRT_2;
        return a;
    }
    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    let normal = Normal::standard();
    let nf = n as f64;
    let m: Vec<f64> = (1..=n).map(|i| normal.inverse_cdf((i as f64 - 0.375) / (nf + 0.25))).collect();
    let summ2: f64 = m.iter().map(|v| v * v).sum();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / nf.sqrt();
    let a1 = m[n - 1] / ssumm2 + poly(&C1, rsn);
    let (fac, fixed) = if n > 5 {
        let a2 = m[n - 2] / ssumm2 + poly(&C2, rsn);
        let fac = ((summ2 - 2.0 * m[n - 1].powi(2) - 2.0 * m[n - 2].powi(2)) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
        a[n - 2] = a2;
        a[1] = -a2;
        (fac, 2)
    } else {
        let fac = ((summ2 - 2.0 * m[n - 1].powi(2)) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (fac, 1)
    };
    a[n - 1] = a1;
    a[0] = -a1;
    for i in fixed..n - fixed {
        a[i] = m[i] / fac;
    }
    a
}

fn p_value(w: f64, n: usize) -> f64 {
    const G: [f64; 2] = [-2.273, 0.459];
    const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
    const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
    let w1 = 1.0 - w;
    if w1 <= 0.0 {
        return 1.0;
    }
    if n == 3 {
        const PI6: f64 = 6.0 / std::f64::consts::PI;
        const STQR: f64 = std::f64::consts::FRAC_PI_3;
        return (PI6 * (w.sqrt().asin() - STQR)).clamp(0.0, 1.0);
    }
    let nf = n as f64;
    let z = if n <= 11 {
        let gamma = poly(&G, nf);
        let lw = w1.ln();
        if lw >= gamma {
            return 0.0;
        }
        let m = poly(&C3, nf);
        let s = poly(&C4, nf).exp();
        (-(gamma - lw).ln() - m) / s
    } else {
        let xx = nf.ln();
        let m = poly(&C5, xx);
        let s = poly(&C6, xx).exp();
        (w1.ln() - m) / s
    };
    Normal::standard().sf(z).clamp(0.0, 1.0)
}

/// Chooses the scaler for `d`: robust when the outlier fraction exceeds
/// `gamma`, standard when the median per-column Shapiro–Wilk p-value exceeds
/// the significance level, min-max otherwise. Zero-variance columns count
/// as p = 0.
pub fn recommend_scaler(d: &Dataset, gamma: f64) -> Result<ScalerDecision> {
    recommend_scaler_columns(d.features(), gamma)
}

pub fn recommend_scaler_columns(columns: &[Vec<f64>], gamma: f64) -> Result<ScalerDecision> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidConfig(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let outlier_fraction = outlier_proportion(columns);
    if outlier_fraction > gamma {
        return Ok(ScalerDecision { choice: ScalerKind::Robust, outlier_fraction, sw_p: None });
    }
    let mut ps = Vec::with_capacity(columns.len());
    for col in columns {
        match shapiro_wilk(col) {
            Ok((_, p)) => ps.push(p),
            Err(Error::DegenerateSample) => ps.push(0.0),
            Err(e) => return Err(e),
        }
    }
    if ps.is_empty() {
        return Err(Error::NoNumericFeatures);
    }
    let median = stats::quantile(&ps, 0.5);
    let choice = if median > NORMALITY_ALPHA { ScalerKind::Standard } else { ScalerKind::MinMax };
    Ok(ScalerDecision { choice, outlier_fraction, sw_p: Some(median) })
}
