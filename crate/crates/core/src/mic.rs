//! Maximal Information Coefficient.
//!
//! [`mic`] is the grid-search approximation: one axis is equipartitioned,
//! the other is optimized by dynamic programming over clumps of consecutive
//! points, and both orientations are tried. Every quantity it computes
//! depends only on the ordering of the values (ties kept together), so the
//! score is invariant under strictly increasing maps of either variable.
//!
//! [`mic_exact`] enumerates every grid and is only usable for tiny samples;
//! it exists to check the approximation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicConfig {
    /// Grid budget exponent, `B(n) = max(n^alpha, 4)`.
    pub alpha: f64,
    /// Clump expansion factor: at most `c * x` superclumps when optimizing
    /// a partition into `x` columns.
    pub c: usize,
}

impl Default for MicConfig {
    fn default() -> Self {
        MicConfig { alpha: 0.6, c: 15 }
    }
}

impl MicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("mic alpha must be in (0, 1], got {}", self.alpha)));
        }
        if self.c < 1 {
            return Err(Error::InvalidConfig("mic c must be at least 1".into()));
        }
        Ok(())
    }

    /// Maximum number of grid cells for `n` points. The floor of 4 keeps the
    /// 2x2 grid available for small samples.
    pub fn budget(&self, n: usize) -> usize {
        ((n as f64).powf(self.alpha).floor() as usize).max(4)
    }
}

pub const MIN_SAMPLES: usize = 4;
pub const EXACT_MAX_SAMPLES: usize = 12;

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples { n: x.len(), min: MIN_SAMPLES });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteTransformOutput);
    }
    Ok(())
}

/// Points sorted along one variable, with runs of equal values grouped.
struct Axis {
    order: Vec<usize>,
    /// `(start, len)` of each tie group within `order`.
    groups: Vec<(usize, usize)>,
}

impl Axis {
    fn new(v: &[f64]) -> Axis {
        let mut order: Vec<usize> = (0..v.len()).collect();
        // stable: ties keep input order
        order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut groups = Vec::new();
        let mut start = 0;
        for i in 1..=order.len() {
            if i == order.len() || v[order[i]] != v[order[start]] {
                groups.push((start, i - start));
                start = i;
            }
        }
        Axis { order, groups }
    }

    /// Assigns each point to one of at most `rows` rows of roughly equal
    /// size without splitting tie groups. Returns per-point rows and the
    /// number of rows used.
    fn equipartition(&self, rows: usize) -> (Vec<usize>, usize) {
        let n = self.order.len();
        let mut assign = vec![0usize; n];
        let mut desired = n as f64 / rows as f64;
        let mut row = 0usize;
        let mut size = 0usize;
        for &(start, len) in &self.groups {
            let grown = (size as f64 + len as f64 - desired).abs();
            let now = (size as f64 - desired).abs();
            if size > 0 && grown >= now && row + 1 < rows {
                row += 1;
                size = 0;
                desired = (n - start) as f64 / (rows - row) as f64;
            }
            for &p in &self.order[start..start + len] {
                assign[p] = row;
            }
            size += len;
        }
        (assign, row + 1)
    }
}

/// Row counts of a contiguous run of points along the optimized axis.
struct Clump {
    counts: Vec<usize>,
    total: usize,
}

/// Merges consecutive tie groups whose points all fall in the same row;
/// a tie group that spans several rows forms a clump of its own.
fn clumps(axis: &Axis, rows: &[usize], q: usize) -> Vec<Clump> {
    let mut out: Vec<Clump> = Vec::new();
    let mut last_pure: Option<usize> = None;
    for &(start, len) in &axis.groups {
        let pts = &axis.order[start..start + len];
        let first = rows[pts[0]];
        let pure = pts.iter().all(|&p| rows[p] == first);
        if pure && last_pure == Some(first) {
            let c = out.last_mut().expect("pure run has a clump");
            c.counts[first] += len;
            c.total += len;
            continue;
        }
        let mut counts = vec![0usize; q];
        for &p in pts {
            counts[rows[p]] += 1;
        }
        out.push(Clump { counts, total: len });
        last_pure = if pure { Some(first) } else { None };
    }
    out
}

/// Coarsens `clumps` into at most `limit` superclumps of roughly equal size,
/// using the same greedy rule as [`Axis::equipartition`].
fn superclumps(clumps: Vec<Clump>, limit: usize, q: usize) -> Vec<Clump> {
    if clumps.len() <= limit {
        return clumps;
    }
    let n: usize = clumps.iter().map(|c| c.total).sum();
    let mut out = vec![Clump { counts: vec![0; q], total: 0 }];
    let mut desired = n as f64 / limit as f64;
    let mut seen = 0usize;
    for c in clumps {
        let size = out.last().map_or(0, |s| s.total);
        let grown = (size as f64 + c.total as f64 - desired).abs();
        let now = (size as f64 - desired).abs();
        if size > 0 && grown >= now && out.len() < limit {
            out.push(Clump { counts: vec![0; q], total: 0 });
            desired = (n - seen) as f64 / (limit - out.len() + 1) as f64;
        }
        let last = out.last_mut().expect("at least one superclump");
        for (a, b) in last.counts.iter_mut().zip(&c.counts) {
            *a += b;
        }
        last.total += c.total;
        seen += c.total;
    }
    out
}

/// `sum_r c_r ln(total / c_r)`: n times the conditional row entropy of one
/// column.
fn column_cost(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 * (t / c as f64).ln()).sum()
}

/// Best mutual information (nats) between the fixed rows and a partition of
/// the clumps into at most `l` columns, for `l = 1..=max_cols` (index 0 is
/// `l = 1`).
fn optimize_columns(clumps: &[Clump], q: usize, max_cols: usize, n: usize) -> Vec<f64> {
    let k = clumps.len();
    let mut cum = vec![vec![0usize; q]; k + 1];
    for (t, c) in clumps.iter().enumerate() {
        for r in 0..q {
            cum[t + 1][r] = cum[t][r] + c.counts[r];
        }
    }
    let row_totals = &cum[k];
    let h_rows = column_cost(row_totals, n) / n as f64;

    // cost[s][t]: clumps s..t (exclusive) merged into one column
    let mut cost = vec![vec![0.0f64; k + 1]; k + 1];
    let mut buf = vec![0usize; q];
    for s in 0..k {
        for t in (s + 1)..=k {
            for r in 0..q {
                buf[r] = cum[t][r] - cum[s][r];
            }
            let total: usize = buf.iter().sum();
            cost[s][t] = column_cost(&buf, total);
        }
    }

    let mut best_prev: Vec<f64> = (0..=k).map(|t| cost[0][t]).collect();
    let mut out = Vec::with_capacity(max_cols);
    let mut running = best_prev[k];
    out.push(h_rows - running / n as f64);
    for l in 2..=max_cols {
        let mut best = vec![f64::INFINITY; k + 1];
        if l <= k {
            for t in l..=k {
                let mut m = f64::INFINITY;
                for s in (l - 1)..t {
                    let v = best_prev[s] + cost[s][t];
                    if v < m {
                        m = v;
                    }
                }
                best[t] = m;
            }
            running = running.min(best[k]);
        }
        out.push((h_rows - running / n as f64).max(0.0));
        best_prev = best;
    }
    out
}

/// Max normalized score over grids whose rows equipartition `rows_axis` and
/// whose columns are optimized along `cols_axis`.
fn orientation_score(cols_axis: &Axis, rows_axis: &Axis, budget: usize, c: usize) -> f64 {
    let n = cols_axis.order.len();
    let max_rows = (budget / 2).min(rows_axis.groups.len());
    let mut best = 0.0f64;
    for rows in 2..=max_rows {
        let max_cols = budget / rows;
        if max_cols < 2 {
            break;
        }
        let (assign, q) = rows_axis.equipartition(rows);
        if q < 2 {
            continue;
        }
        let cl = superclumps(clumps(cols_axis, &assign, q), c * max_cols, q);
        let infos = optimize_columns(&cl, q, max_cols, n);
        for cols in 2..=max_cols {
            let score = infos[cols - 1] / (cols.min(rows) as f64).ln();
            if score > best {
                best = score;
            }
        }
    }
    best
}

/// Approximate MIC of two equally long samples, in `[0, 1]`.
pub fn mic(x: &[f64], y: &[f64], cfg: &MicConfig) -> Result<f64> {
    check_inputs(x, y)?;
    let ax = Axis::new(x);
    let ay = Axis::new(y);
    if ax.groups.len() < 2 || ay.groups.len() < 2 {
        return Ok(0.0);
    }
    let budget = cfg.budget(x.len());
    let a = orientation_score(&ax, &ay, budget, cfg.c);
    let b = orientation_score(&ay, &ax, budget, cfg.c);
    Ok(a.max(b).clamp(0.0, 1.0))
}

/// MIC between a feature and integer class labels.
pub fn mic_labels(x: &[f64], labels: &[usize], cfg: &MicConfig) -> Result<f64> {
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    mic(x, &y, cfg)
}

/// `MIC(t(x), y) - MIC(x, y)` against class labels.
pub fn mic_gain(transformed: &[f64], x: &[f64], labels: &[usize], cfg: &MicConfig) -> Result<f64> {
    if transformed.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteTransformOutput);
    }
    Ok(mic_labels(transformed, labels, cfg)? - mic_labels(x, labels, cfg)?)
}

/// All ways to cut `groups` ordered tie groups into contiguous intervals,
/// as per-group interval ids, bucketed by interval count.
fn interval_assignments(groups: usize) -> Vec<(usize, Vec<usize>)> {
    let gaps = groups - 1;
    (0u32..(1u32 << gaps))
        .map(|mask| {
            let mut ids = Vec::with_capacity(groups);
            let mut cur = 0;
            ids.push(0);
            for g in 0..gaps {
                if mask & (1 << g) != 0 {
                    cur += 1;
                }
                ids.push(cur);
            }
            (cur + 1, ids)
        })
        .collect()
}

fn distinct_rank(v: &[f64]) -> (Vec<usize>, usize) {
    let mut vals: Vec<f64> = v.to_vec();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    let ranks = v.iter().map(|a| vals.iter().position(|b| b == a).expect("present")).collect();
    (ranks, vals.len())
}

/// Exact maximum of normalized mutual information over every grid with at
/// least two rows and columns and at most `B(n)` cells. Exponential in `n`.
pub fn mic_exact(x: &[f64], y: &[f64], cfg: &MicConfig) -> Result<f64> {
    check_inputs(x, y)?;
    let n = x.len();
    if n > EXACT_MAX_SAMPLES {
        return Err(Error::TooLarge { n, max: EXACT_MAX_SAMPLES });
    }
    let budget = cfg.budget(n);
    let (rx, gx) = distinct_rank(x);
    let (ry, gy) = distinct_rank(y);
    if gx < 2 || gy < 2 {
        return Ok(0.0);
    }
    let px = interval_assignments(gx);
    let py = interval_assignments(gy);
    let mut best = 0.0f64;
    for (kx, ix) in px.iter().filter(|(k, _)| *k >= 2) {
        for (ky, iy) in py.iter().filter(|(k, _)| *k >= 2 && kx * k <= budget) {
            let mut table = vec![vec![0f64; *ky]; *kx];
            for p in 0..n {
                table[ix[rx[p]]][iy[ry[p]]] += 1.0;
            }
            let nf = n as f64;
            let row: Vec<f64> = table.iter().map(|r| r.iter().sum::<f64>() / nf).collect();
            let col: Vec<f64> = (0..*ky).map(|j| table.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
            let mut info = 0.0;
            for i in 0..*kx {
                for j in 0..*ky {
                    let pij = table[i][j] / nf;
                    if pij > 0.0 {
                        info += pij * (pij / (row[i] * col[j])).ln();
                    }
                }
            }
            let score = info / ((*kx).min(*ky) as f64).ln();
            if score > best {
                best = score;
            }
        }
    }
    Ok(best.clamp(0.0, 1.0))
}
