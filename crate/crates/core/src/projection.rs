//! Two-dimensional projections of soft-label clouds: classical MDS, IsoMap,
//! exact t-SNE and Laplacian-eigenmap spectral embedding. Distances are
//! Euclidean throughout.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, bail_shape, Error, Result};
use crate::linalg::{eigh, euclidean_distances};
use crate::rng;
use crate::tensor::Tensor;

/// Largest point count fed to the `O(m²)` methods.
pub const SUBSAMPLE_CAP: usize = 1000;
pub const DEFAULT_NEIGHBORS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMethod {
    Mds,
    Isomap,
    Tsne,
    Spectral,
}

impl ProjectionMethod {
    pub const ALL: [ProjectionMethod; 4] =
        [ProjectionMethod::Mds, ProjectionMethod::Isomap, ProjectionMethod::Tsne, ProjectionMethod::Spectral];

    pub fn id(self) -> &'static str {
        match self {
            ProjectionMethod::Mds => "mds",
            ProjectionMethod::Isomap => "isomap",
            ProjectionMethod::Tsne => "tsne",
            ProjectionMethod::Spectral => "spectral",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding2D {
    /// `m × 2`.
    pub coords: Tensor,
    pub method: ProjectionMethod,
    /// Row indices into the projected point set.
    pub sample_ids: Vec<usize>,
    pub subsample_seed: u64,
    /// Set when the spectrum does not pin the coordinates down (repeated
    /// eigenvalues).
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub learning_rate: f64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            learning_rate: 200.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub cap: usize,
    pub neighbors: usize,
    pub tsne: TsneConfig,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self { cap: SUBSAMPLE_CAP, neighbors: DEFAULT_NEIGHBORS, tsne: TsneConfig::default() }
    }
}

/// Sorted indices of a seeded uniform subsample of size `min(n, cap)`.
pub fn subsample(n: usize, cap: usize, seed: u64) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let mut r = rng::seeded(seed);
    let mut idx = rand::seq::index::sample(&mut r, n, cap).into_vec();
    idx.sort_unstable();
    idx
}

fn check_points(points: &Tensor) -> Result<(usize, usize)> {
    if points.shape().len() != 2 {
        bail_shape!("expected m × d points, got {:?}", points.shape());
    }
    Ok((points.rows(), points.row_len()))
}

/// Flips each column so that its largest-magnitude entry is positive.
fn fix_signs(coords: &mut [f64], m: usize) {
    for c in 0..2 {
        let mut best = 0.0f64;
        for i in 0..m {
            let v = coords[i * 2 + c];
            if v.abs() > best.abs() {
                best = v;
            }
        }
        if best < 0.0 {
            for i in 0..m {
                coords[i * 2 + c] = -coords[i * 2 + c];
            }
        }
    }
}

/// Top two coordinates of classical scaling on a distance matrix
/// (row-major `m × m`).
pub fn classical_mds(d: &[f64], m: usize) -> Result<Tensor> {
    if m == 0 || d.len() != m * m {
        bail_shape!("expected a non-empty {}×{} distance matrix", m, m);
    }
    let mut b: Vec<f64> = d.iter().map(|v| v * v).collect();
    let row_means: Vec<f64> = (0..m).map(|i| b[i * m..(i + 1) * m].iter().sum::<f64>() / m as f64).collect();
    let grand = row_means.iter().sum::<f64>() / m as f64;
    for i in 0..m {
        for j in 0..m {
            // Symmetric by construction: the same expression for (i, j) and (j, i).
            let v = b[i * m + j] - row_means[i] - row_means[j] + grand;
            b[i * m + j] = -0.5 * v;
        }
    }
    for i in 0..m {
        for j in 0..i {
            let avg = 0.5 * (b[i * m + j] + b[j * m + i]);
            b[i * m + j] = avg;
            b[j * m + i] = avg;
        }
    }
    let e = eigh(&b, m)?;
    let mut coords = vec![0.0; m * 2];
    for c in 0..2.min(m) {
        let scale = libm::sqrt(e.values[c].max(0.0));
        for i in 0..m {
            coords[i * 2 + c] = e.vectors[c][i] * scale;
        }
    }
    fix_signs(&mut coords, m);
    Tensor::new(vec![m, 2], coords)
}

/// Symmetric k-nearest-neighbour adjacency: `i ~ j` when either is among
/// the other's `k` nearest (ties to the lower index).
pub fn knn_graph(dist: &[f64], m: usize, k: usize) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); m];
    for i in 0..m {
        let mut others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| dist[i * m + a].total_cmp(&dist[i * m + b]).then(a.cmp(&b)));
        for &j in others.iter().take(k) {
            adj[i].push((j, dist[i * m + j]));
            adj[j].push((i, dist[i * m + j]));
        }
    }
    for list in &mut adj {
        list.sort_by_key(|e| e.0);
        list.dedup_by_key(|e| e.0);
    }
    adj
}

fn components(adj: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let m = adj.len();
    let mut seen = vec![false; m];
    let mut sizes = Vec::new();
    for s in 0..m {
        if seen[s] {
            continue;
        }
        let mut stack = vec![s];
        seen[s] = true;
        let mut size = 0;
        while let Some(u) = stack.pop() {
            size += 1;
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

fn require_connected(adj: &[Vec<(usize, f64)>]) -> Result<()> {
    let sizes = components(adj);
    if sizes.len() > 1 {
        return Err(Error::DisconnectedGraph(sizes));
    }
    Ok(())
}

#[derive(PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// All-pairs shortest paths by Dijkstra from every source.
pub fn geodesic_distances(adj: &[Vec<(usize, f64)>]) -> Result<Vec<f64>> {
    require_connected(adj)?;
    let m = adj.len();
    let mut out = vec![f64::INFINITY; m * m];
    for s in 0..m {
        let row = &mut out[s * m..(s + 1) * m];
        row[s] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((Dist(0.0), s)));
        while let Some(Reverse((Dist(du), u))) = heap.pop() {
            if du > row[u] {
                continue;
            }
            for &(v, w) in &adj[u] {
                let nd = du + w;
                if nd < row[v] {
                    row[v] = nd;
                    heap.push(Reverse((Dist(nd), v)));
                }
            }
        }
    }
    // Path sums can differ in the last bit between directions.
    for i in 0..m {
        for j in 0..i {
            let v = out[i * m + j].min(out[j * m + i]);
            out[i * m + j] = v;
            out[j * m + i] = v;
        }
    }
    Ok(out)
}

/// MDS on geodesic distances of the k-NN graph. With `k ≥ m − 1` the graph
/// is complete and the Euclidean distances are used as they are.
pub fn isomap(points: &Tensor, k: usize) -> Result<Tensor> {
    let (m, d) = check_points(points)?;
    if k == 0 {
        bail_arg!("IsoMap needs at least one neighbour");
    }
    let dist = euclidean_distances(points.data(), m, d);
    if k + 1 >= m {
        return classical_mds(&dist, m);
    }
    let geo = geodesic_distances(&knn_graph(&dist, m, k))?;
    classical_mds(&geo, m)
}

/// Unnormalised Laplacian `D − W` of the symmetrised k-NN graph with
/// weights `½(A + Aᵀ)` for the 0/1 neighbour matrix `A`.
pub fn knn_laplacian(points: &Tensor, k: usize) -> Result<Vec<f64>> {
    let (m, _) = check_points(points)?;
    let w = knn_affinity(points, k)?;
    let mut l: Vec<f64> = w.iter().map(|v| -v).collect();
    for i in 0..m {
        l[i * m + i] = w[i * m..(i + 1) * m].iter().sum();
    }
    Ok(l)
}

fn knn_affinity(points: &Tensor, k: usize) -> Result<Vec<f64>> {
    let (m, d) = check_points(points)?;
    if k == 0 || k >= m {
        bail_arg!("need 1 ≤ k < m, got k = {} for m = {}", k, m);
    }
    let dist = euclidean_distances(points.data(), m, d);
    let mut w = vec![0.0; m * m];
    for i in 0..m {
        let mut others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| dist[i * m + a].total_cmp(&dist[i * m + b]).then(a.cmp(&b)));
        for &j in others.iter().take(k) {
            w[i * m + j] += 0.5;
            w[j * m + i] += 0.5;
        }
    }
    Ok(w)
}

/// Relative gap under which neighbouring eigenvalues count as repeated.
const DEGENERACY_TOLERANCE: f64 = 1e-9;

/// Laplacian eigenmap: eigenvectors 2 and 3 of the symmetric normalised
/// Laplacian, rescaled by `D^{-1/2}`. Returns the coordinates and whether
/// the needed eigenvalues are repeated.
pub fn spectral_embedding(points: &Tensor, k: usize) -> Result<(Tensor, bool)> {
    let (m, _) = check_points(points)?;
    if m < 3 {
        bail_arg!("spectral embedding needs at least 3 points");
    }
    let w = knn_affinity(points, k)?;
    let adj: Vec<Vec<(usize, f64)>> =
        (0..m).map(|i| (0..m).filter(|&j| w[i * m + j] > 0.0).map(|j| (j, 1.0)).collect()).collect();
    require_connected(&adj)?;
    let inv_sqrt: Vec<f64> = (0..m).map(|i| 1.0 / libm::sqrt(w[i * m..(i + 1) * m].iter().sum::<f64>())).collect();
    // Largest eigenpairs of D^{-1/2} W D^{-1/2} are the smallest of L_sym.
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            a[i * m + j] = w[i * m + j] * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let e = eigh(&a, m)?;
    let gap = |x: f64, y: f64| (x - y).abs() <= DEGENERACY_TOLERANCE * (1.0 + x.abs());
    let degenerate =
        gap(e.values[1], e.values[2]) || (m > 3 && gap(e.values[2], e.values[3])) || gap(e.values[0], e.values[1]);
    let mut coords = vec![0.0; m * 2];
    for (c, v) in e.vectors[1..3].iter().enumerate() {
        for i in 0..m {
            coords[i * 2 + c] = v[i] * inv_sqrt[i];
        }
    }
    fix_signs(&mut coords, m);
    Ok((Tensor::new(vec![m, 2], coords)?, degenerate))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TsneResult {
    pub coords: Tensor,
    /// KL(P‖Q) after every iteration, against the unexaggerated P.
    pub kl_history: Vec<f64>,
}

const PERPLEXITY_TOLERANCE: f64 = 1e-5;
const PERPLEXITY_STEPS: usize = 100;

/// Conditional affinities with per-point bandwidths matched to the target
/// perplexity, then symmetrised and normalised.
fn joint_probabilities(dist2: &[f64], m: usize, perplexity: f64) -> Vec<f64> {
    let target = libm::log(perplexity);
    let mut p = vec![0.0; m * m];
    for i in 0..m {
        let row = &dist2[i * m..(i + 1) * m];
        let (mut beta, mut lo, mut hi) = (1.0, f64::NEG_INFINITY, f64::INFINITY);
        let out = &mut p[i * m..(i + 1) * m];
        for _ in 0..PERPLEXITY_STEPS {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..m {
                out[j] = if j == i { 0.0 } else { libm::exp(-row[j] * beta) };
                sum += out[j];
                weighted += row[j] * out[j];
            }
            if sum == 0.0 {
                sum = 1e-300;
            }
            let entropy = libm::log(sum) + beta * weighted / sum;
            for v in out.iter_mut() {
                *v /= sum;
            }
            let diff = entropy - target;
            if diff.abs() < PERPLEXITY_TOLERANCE {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
            }
        }
    }
    let mut joint = vec![0.0; m * m];
    let norm = 2.0 * m as f64;
    for i in 0..m {
        for j in 0..m {
            joint[i * m + j] = ((p[i * m + j] + p[j * m + i]) / norm).max(1e-12);
        }
    }
    joint
}

/// Exact t-SNE with early exaggeration, momentum and adaptive gains.
pub fn tsne(points: &Tensor, cfg: &TsneConfig, seed: u64) -> Result<TsneResult> {
    let (m, d) = check_points(points)?;
    if cfg.perplexity.is_nan() || cfg.perplexity <= 0.0 || cfg.perplexity >= m as f64 {
        bail_arg!("perplexity must lie in (0, m = {}), got {}", m, cfg.perplexity);
    }
    if !(cfg.learning_rate > 0.0 && cfg.early_exaggeration >= 1.0) {
        bail_arg!("invalid t-SNE schedule");
    }
    let dist = euclidean_distances(points.data(), m, d);
    let dist2: Vec<f64> = dist.iter().map(|v| v * v).collect();
    let p = joint_probabilities(&dist2, m, cfg.perplexity);

    let mut r = rng::seeded(seed);
    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<f64> = (0..m * 2).map(|_| init.sample(&mut r)).collect();
    let mut update = vec![0.0; m * 2];
    let mut gains = vec![1.0; m * 2];
    let mut num = vec![0.0; m * m];
    let mut grad = vec![0.0; m * 2];
    let mut kl_history = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let exaggerate = it < cfg.exaggeration_iterations;
        let exaggeration = if exaggerate { cfg.early_exaggeration } else { 1.0 };
        let momentum = if exaggerate { 0.5 } else { 0.8 };

        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                let v = if i == j {
                    0.0
                } else {
                    let dx = y[i * 2] - y[j * 2];
                    let dy = y[i * 2 + 1] - y[j * 2 + 1];
                    1.0 / (1.0 + dx * dx + dy * dy)
                };
                num[i * m + j] = v;
                total += v;
            }
        }
        let mut kl = 0.0;
        for i in 0..m {
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..m {
                if i == j {
                    continue;
                }
                let q = (num[i * m + j] / total).max(1e-12);
                let pij = p[i * m + j];
                kl += pij * libm::log(pij / q);
                let f = (exaggeration * pij - q) * num[i * m + j];
                gx += f * (y[i * 2] - y[j * 2]);
                gy += f * (y[i * 2 + 1] - y[j * 2 + 1]);
            }
            grad[i * 2] = 4.0 * gx;
            grad[i * 2 + 1] = 4.0 * gy;
        }
        kl_history.push(kl);

        for ((g, u), (gain, yi)) in grad.iter().zip(update.iter_mut()).zip(gains.iter_mut().zip(y.iter_mut())) {
            *gain = if (*g > 0.0) != (*u > 0.0) { *gain + 0.2 } else { *gain * 0.8 };
            *gain = f64::max(*gain, 0.01);
            *u = momentum * *u - cfg.learning_rate * *gain * g;
            *yi += *u;
        }
        for c in 0..2 {
            let mean = (0..m).map(|i| y[i * 2 + c]).sum::<f64>() / m as f64;
            for i in 0..m {
                y[i * 2 + c] -= mean;
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("t-SNE"));
        }
    }
    Ok(TsneResult { coords: Tensor::new(vec![m, 2], y)?, kl_history })
}

/// Mean silhouette coefficient of `coords` (`m × 2` or any width) under the
/// given labels. Points in singleton clusters score 0.
pub fn silhouette(coords: &Tensor, labels: &[usize]) -> Result<f64> {
    let (m, d) = check_points(coords)?;
    if labels.len() != m {
        bail_shape!("{} labels for {} points", labels.len(), m);
    }
    let k = labels.iter().max().map_or(0, |&v| v + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        bail_arg!("silhouette needs at least two clusters");
    }
    let dist = euclidean_distances(coords.data(), m, d);
    let mut total = 0.0;
    for i in 0..m {
        let mut sums = vec![0.0; k];
        for j in 0..m {
            sums[labels[j]] += dist[i * m + j];
        }
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / m as f64)
}

/// Subsamples `points` (`n × d`) to `cfg.cap` rows with `seed` and runs
/// `method` on the subsample. t-SNE uses `seed` for its initialisation too.
pub fn project(points: &Tensor, method: ProjectionMethod, cfg: &ProjectionConfig, seed: u64) -> Result<Embedding2D> {
    let (n, _) = check_points(points)?;
    let sample_ids = subsample(n, cfg.cap.max(1), seed);
    let sub = points.select_rows(&sample_ids)?;
    let mut degenerate = false;
    let coords = match method {
        ProjectionMethod::Mds => {
            let (m, d) = check_points(&sub)?;
            classical_mds(&euclidean_distances(sub.data(), m, d), m)?
        }
        ProjectionMethod::Isomap => isomap(&sub, cfg.neighbors)?,
        ProjectionMethod::Tsne => tsne(&sub, &cfg.tsne, seed)?.coords,
        ProjectionMethod::Spectral => {
            let (c, deg) = spectral_embedding(&sub, cfg.neighbors.min(sample_ids.len().saturating_sub(1)))?;
            degenerate = deg;
            c
        }
    };
    Ok(Embedding2D { coords, method, sample_ids, subsample_seed: seed, degenerate })
}
