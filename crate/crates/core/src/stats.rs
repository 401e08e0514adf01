//! Descriptive statistics shared across modules.
//!
//! Moment helpers sort their input before accumulating so results are
//! bit-identical under any permutation of the rows.

pub fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    sorted(x).iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    central_moment(x, 2).sqrt()
}

fn central_moment(x: &[f64], order: i32) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let s = sorted(x);
    let m = s.iter().sum::<f64>() / s.len() as f64;
    s.iter().map(|v| (v - m).powi(order)).sum::<f64>() / s.len() as f64
}

pub fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

/// Population skewness; 0 for constant input.
pub fn skewness(x: &[f64]) -> f64 {
    let m2 = central_moment(x, 2);
    if is_constant(x) || m2 <= 0.0 {
        return 0.0;
    }
    central_moment(x, 3) / m2.powf(1.5)
}

/// Population excess kurtosis; 0 for constant input.
pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let m2 = central_moment(x, 2);
    if is_constant(x) || m2 <= 0.0 {
        return 0.0;
    }
    central_moment(x, 4) / (m2 * m2) - 3.0
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    if x.len() < 2 || is_constant(x) || is_constant(y) {
        return 0.0;
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n - 1) q`), on already sorted data.
pub fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    assert!(!s.is_empty(), "quantile of empty slice");
    let h = (s.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

pub fn quantile(x: &[f64], q: f64) -> f64 {
    quantile_sorted(&sorted(x), q)
}

/// Shannon entropy (nats) of a count vector.
pub fn entropy_counts(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.ln()
        })
        .sum()
}
