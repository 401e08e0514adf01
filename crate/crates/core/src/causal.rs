//! Causal feature selection: a linear structural equation model over
//! features and target learned under a smooth acyclicity constraint, then a
//! ranking of features by the magnitude of their direct edge into the target.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::stats;

/// Options of the structure learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagOptions {
    /// L1 weight on edge magnitudes.
    pub lambda: f64,
    /// Edges with `|w| < omega` are pruned from the result.
    pub omega: f64,
    pub h_tol: f64,
    pub max_outer: usize,
    pub rho_max: f64,
    pub max_inner: usize,
    /// Relative extra L1 weight on edges from a later to an earlier column.
    /// Standardized data leaves edge direction unidentified; this breaks the
    /// symmetry in favor of column order.
    pub order_bias: f64,
}

impl Default for DagOptions {
    fn default() -> Self {
        DagOptions {
            lambda: 0.1,
            omega: 0.3,
            h_tol: 1e-8,
            max_outer: 100,
            rho_max: 1e16,
            max_inner: 2000,
            order_bias: 0.01,
        }
    }
}

/// Weighted adjacency over features and the target (the last node).
/// `weights[a][b]` is the linear effect of node `a` on node `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDag {
    pub weights: Vec<Vec<f64>>,
    pub node_names: Vec<String>,
    pub omega: f64,
    /// Acyclicity residual of the unpruned solution.
    pub h: f64,
}

impl WeightedDag {
    pub fn n_nodes(&self) -> usize {
        self.node_names.len()
    }

    pub fn target(&self) -> usize {
        self.n_nodes() - 1
    }

    pub fn n_features(&self) -> usize {
        self.n_nodes() - 1
    }

    /// Nonzero edges as `(from, to, weight)` in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (a, row) in self.weights.iter().enumerate() {
            for (b, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    out.push((a, b, w));
                }
            }
        }
        out
    }

    /// Topological-sort check on the nonzero entries.
    pub fn is_acyclic(&self) -> bool {
        find_cycle(&self.weights).is_none()
    }

    /// Graphviz rendering of the pruned graph.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph causal {\n");
        for (i, name) in self.node_names.iter().enumerate() {
            let shape = if i == self.target() { "doublecircle" } else { "ellipse" };
            let _ = writeln!(s, "  n{i} [label={name:?}, shape={shape}];");
        }
        for (a, b, w) in self.edges() {
            let _ = writeln!(s, "  n{a} -> n{b} [label=\"{w:.3}\"];");
        }
        s.push_str("}\n");
        s
    }
}

/// Features ordered by non-increasing effect magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalRanking {
    pub entries: Vec<(usize, f64)>,
}

impl CausalRanking {
    pub fn order(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.0).collect()
    }
}

/// `h(W) = tr(exp(W∘W)) - d` and its gradient `2 exp(W∘W)ᵀ ∘ W`.
pub fn acyclicity(w: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    if w.nrows() != w.ncols() {
        return Err(Error::NonSquare { rows: w.nrows(), cols: w.ncols() });
    }
    Ok(acyclicity_unchecked(w))
}

fn acyclicity_unchecked(w: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let e = w.component_mul(w).exp();
    let h = (e.trace() - w.nrows() as f64).max(0.0);
    let grad = e.transpose().component_mul(w) * 2.0;
    (h, grad)
}

fn standardize(x: &[f64]) -> Vec<f64> {
    let m = stats::mean(x);
    let sd = stats::std_dev(x);
    if sd > 0.0 {
        x.iter().map(|v| (v - m) / sd).collect()
    } else {
        vec![0.0; x.len()]
    }
}

struct Problem {
    cov: DMatrix<f64>,
    mask: DMatrix<f64>,
    l1: DMatrix<f64>,
}

impl Problem {
    /// Least-squares loss `(1/2n)‖Z − ZW‖²` written through `C = ZᵀZ/n`.
    fn loss(&self, w: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let d = w.nrows();
        let r = DMatrix::<f64>::identity(d, d) - w;
        let cr = &self.cov * &r;
        (0.5 * r.component_mul(&cr).sum(), -cr)
    }

    fn smooth(&self, w: &DMatrix<f64>, rho: f64, alpha: f64) -> (f64, DMatrix<f64>, f64) {
        let (l, gl) = self.loss(w);
        let (h, gh) = acyclicity_unchecked(w);
        let f = l + alpha * h + 0.5 * rho * h * h;
        let g = (gl + gh * (alpha + rho * h)).component_mul(&self.mask);
        (f, g, h)
    }

    fn prox(&self, v: &DMatrix<f64>, step: f64) -> DMatrix<f64> {
        v.zip_zip_map(&self.l1, &self.mask, |x, l, m| {
            let t = step * l;
            m * x.signum() * (x.abs() - t).max(0.0)
        })
    }

    fn l1_norm(&self, w: &DMatrix<f64>) -> f64 {
        w.zip_map(&self.l1, |x, l| x.abs() * l).sum()
    }

    /// Proximal gradient with Barzilai–Borwein steps and backtracking on the
    /// augmented Lagrangian for fixed `(rho, alpha)`.
    fn inner(&self, start: &DMatrix<f64>, rho: f64, alpha: f64, max_iter: usize) -> DMatrix<f64> {
        let mut w = start.clone();
        let (mut f, mut g, _) = self.smooth(&w, rho, alpha);
        let mut step = 1.0 / (1.0 + rho).min(1e6);
        for _ in 0..max_iter {
            let obj = f + self.l1_norm(&w);
            let mut accepted = None;
            for _ in 0..60 {
                let cand = self.prox(&(&w - &g * step), step);
                let diff = &cand - &w;
                let (fc, gc, _) = self.smooth(&cand, rho, alpha);
                let bound = f + g.dot(&diff) + diff.norm_squared() / (2.0 * step);
                if fc.is_finite() && fc <= bound + 1e-12 * f.abs().max(1.0) {
                    accepted = Some((cand, diff, fc, gc));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, diff, fc, gc)) = accepted else { break };
            let new_obj = fc + self.l1_norm(&cand);
            let converged = diff.amax() <= 1e-8 * cand.amax().max(1.0)
                || (obj - new_obj).abs() <= 1e-14 * obj.abs().max(1.0);
            let dg = &gc - &g;
            let sy = diff.dot(&dg);
            w = cand;
            f = fc;
            g = gc;
            if converged {
                break;
            }
            step = if sy > 0.0 { (diff.norm_squared() / sy).clamp(1e-12, 1e6) } else { step * 2.0 };
        }
        w
    }
}

/// Returns one cycle as a node sequence, if the graph of nonzero entries has any.
fn find_cycle(w: &[Vec<f64>]) -> Option<Vec<usize>> {
    let n = w.len();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    let mut parent = vec![usize::MAX; n];
    for root in 0..n {
        if state[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        state[root] = 1;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if let Some(v) = (*next..n).find(|&v| w[u][v] != 0.0) {
                *next = v + 1;
                match state[v] {
                    0 => {
                        state[v] = 1;
                        parent[v] = u;
                        stack.push((v, 0));
                    }
                    1 => {
                        let mut cycle = vec![v];
                        let mut x = u;
                        while x != v {
                            cycle.push(x);
                            x = parent[x];
                        }
                        cycle.reverse();
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                state[u] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// Zeroes small entries, then removes the weakest edge of any remaining
/// cycle until the graph is acyclic.
fn prune(w: &mut [Vec<f64>], omega: f64) {
    for row in w.iter_mut() {
        for v in row.iter_mut() {
            if v.abs() < omega {
                *v = 0.0;
            }
        }
    }
    while let Some(cycle) = find_cycle(w) {
        let k = cycle.len();
        let (a, b) = (0..k)
            .map(|i| (cycle[i], cycle[(i + 1) % k]))
            .min_by(|&(a, b), &(c, d)| w[a][b].abs().total_cmp(&w[c][d].abs()))
            .expect("cycle is non-empty");
        w[a][b] = 0.0;
    }
}

/// Learns a weighted DAG from standardized columns. The last column is the
/// target, which is constrained to have no outgoing edges.
pub fn fit_dag_columns(columns: &[Vec<f64>], names: Vec<String>, opts: &DagOptions) -> Result<WeightedDag> {
    let d = columns.len();
    if d < 2 || names.len() != d {
        return Err(Error::InvalidDataset("structure learning needs at least one feature and a target".into()));
    }
    let n = columns[0].len();
    if n < 2 {
        return Err(Error::TooFewSamples { n, min: 2 });
    }
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::LengthMismatch { left: c.len(), right: n });
    }
    let z: Vec<Vec<f64>> = columns.iter().map(|c| standardize(c)).collect();
    let cov = DMatrix::from_fn(d, d, |a, b| {
        let mut terms: Vec<f64> = z[a].iter().zip(&z[b]).map(|(x, y)| x * y).collect();
        terms.sort_by(f64::total_cmp);
        terms.iter().sum::<f64>() / n as f64
    });
    let target = d - 1;
    let mask = DMatrix::from_fn(d, d, |a, b| if a == b || a == target { 0.0 } else { 1.0 });
    let l1 = DMatrix::from_fn(d, d, |a, b| opts.lambda * if a > b { 1.0 + opts.order_bias } else { 1.0 });
    let problem = Problem { cov, mask, l1 };

    let mut w = DMatrix::<f64>::zeros(d, d);
    let (mut rho, mut alpha, mut h) = (1.0, 0.0, f64::INFINITY);
    for _ in 0..opts.max_outer {
        let mut next;
        let mut h_next;
        loop {
            next = problem.inner(&w, rho, alpha, opts.max_inner);
            h_next = acyclicity_unchecked(&next).0;
            if h_next > 0.25 * h && rho < opts.rho_max {
                rho *= 10.0;
            } else {
                break;
            }
        }
        w = next;
        h = h_next;
        alpha += rho * h;
        if h <= opts.h_tol || rho >= opts.rho_max {
            break;
        }
    }

    let mut weights: Vec<Vec<f64>> = (0..d).map(|a| (0..d).map(|b| w[(a, b)]).collect()).collect();
    prune(&mut weights, opts.omega);
    let dag = WeightedDag { weights, node_names: names, omega: opts.omega, h };
    if h > opts.h_tol {
        return Err(Error::NonConvergence { h, last: Box::new(dag) });
    }
    Ok(dag)
}

/// Fits the feature/target graph of `d`, with integer-coded labels as the
/// sink node.
pub fn fit_dag(d: &Dataset, opts: &DagOptions) -> Result<WeightedDag> {
    let mut columns: Vec<Vec<f64>> = d.features().to_vec();
    columns.push(d.labels().iter().map(|&l| l as f64).collect());
    let mut names: Vec<String> = (0..d.n_features()).map(|j| d.feature_name(j).to_string()).collect();
    names.push(d.target_name().to_string());
    fit_dag_columns(&columns, names, opts)
}

/// Ranks features by `|W[i][target]|`, ties by ascending index.
pub fn rank_features(g: &WeightedDag) -> CausalRanking {
    let t = g.target();
    let mut entries: Vec<(usize, f64)> = (0..g.n_features()).map(|i| (i, g.weights[i][t].abs())).collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    CausalRanking { entries }
}

/// The first `ceil(s * n)` ranked features, at least one.
pub fn select_top(r: &CausalRanking, s: f64) -> Result<Vec<usize>> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::BadThreshold(s));
    }
    let n = r.entries.len();
    let k = ((s * n as f64).ceil() as usize).clamp(1, n.max(1));
    Ok(r.entries.iter().take(k).map(|e| e.0).collect())
}
