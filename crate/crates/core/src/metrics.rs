//! Reconstruction error, k-means and external clustering indices.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::DenseTensor;

/// `||xhat - xref||_F^2 / ||xref||_F^2`.
pub fn nmse(xhat: &DenseTensor, xref: &DenseTensor) -> Result<f64> {
    if xhat.shape() != xref.shape() {
        return Err(Error::Size(format!(
            "nmse inputs differ in shape: {:?} vs {:?}",
            xhat.shape(),
            xref.shape()
        )));
    }
    let den = xref.squared_norm();
    if den == 0.0 {
        return Err(Error::DegenerateInput("nmse reference has zero norm".into()));
    }
    let num: f64 = xhat
        .data()
        .iter()
        .zip(xref.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub assignment: Vec<usize>,
    /// Row-major `k x d`.
    pub centroids: Vec<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per point (ties to the lower index) and the total squared distance.
fn assign(points: &[f64], d: usize, centroids: &[f64], assignment: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (p, slot) in points.chunks(d).zip(assignment.iter_mut()) {
        let (best, dist) =
            centroids
                .chunks(d)
                .map(|c| sq_dist(p, c))
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (j, dist)| if dist < acc.1 { (j, dist) } else { acc },
                );
        *slot = best;
        inertia += dist;
    }
    inertia
}

fn kmeans_pp(points: &[f64], n: usize, d: usize, k: usize, rng: &mut SeededRng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k * d);
    let first = rng.below(n);
    centroids.extend_from_slice(&points[first * d..(first + 1) * d]);
    let mut dist: Vec<f64> = points.chunks(d).map(|p| sq_dist(p, &centroids[..d])).collect();
    for _ in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.below(n)
        };
        let c = points[pick * d..(pick + 1) * d].to_vec();
        for (p, slot) in points.chunks(d).zip(dist.iter_mut()) {
            *slot = slot.min(sq_dist(p, &c));
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

fn lloyd(points: &[f64], n: usize, d: usize, k: usize, max_iter: usize, rng: &mut SeededRng) -> ClusteringResult {
    let mut centroids = kmeans_pp(points, n, d, k, rng);
    let mut assignment = vec![usize::MAX; n];
    let mut next = vec![0usize; n];
    let mut trace = Vec::new();
    let mut inertia = assign(points, d, &centroids, &mut next);
    trace.push(inertia);
    for _ in 0..max_iter {
        if next == assignment {
            break;
        }
        assignment.copy_from_slice(&next);
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.chunks(d).zip(&assignment) {
            counts[a] += 1;
            for (s, x) in sums[a * d..(a + 1) * d].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for t in 0..d {
                    centroids[j * d + t] = sums[j * d + t] / counts[j] as f64;
                }
            }
        }
        // Empty clusters take the point farthest from its own centroid.
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..n)
                    .map(|i| {
                        let a = assignment[i];
                        (i, sq_dist(&points[i * d..(i + 1) * d], &centroids[a * d..(a + 1) * d]))
                    })
                    .fold((0, -1.0), |acc, (i, dist)| if dist > acc.1 { (i, dist) } else { acc })
                    .0;
                let p = points[far * d..(far + 1) * d].to_vec();
                centroids[j * d..(j + 1) * d].copy_from_slice(&p);
                assignment[far] = j;
            }
        }
        inertia = assign(points, d, &centroids, &mut next);
        trace.push(inertia);
    }
    ClusteringResult {
        assignment: next,
        centroids,
        inertia,
        inertia_trace: trace,
    }
}

/// k-means with k-means++ seeding; best inertia over `restarts` runs.
///
/// `points` is an `n x d` matrix (any tensor whose mode 0 indexes points is
/// accepted and flattened per point). Lloyd iterations stop at an
/// assignment fixpoint or after `max_iter` updates. A cluster that empties
/// is re-seeded at the point farthest from its current centroid.
pub fn kmeans(points: &DenseTensor, k: usize, restarts: usize, max_iter: usize, seed: u64) -> Result<ClusteringResult> {
    let n = points.shape()[0];
    let d = points.len() / n;
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} must lie in 1..={n}")));
    }
    if restarts == 0 {
        return Err(Error::Config("at least one restart is required".into()));
    }
    let mut rng = SeededRng::new(seed);
    let mut best: Option<ClusteringResult> = None;
    for _ in 0..restarts {
        let r = lloyd(points.data(), n, d, k, max_iter, &mut rng);
        if best.as_ref().is_none_or(|b| r.inertia < b.inertia) {
            best = Some(r);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Contingency table between two labelings (rows: `pred` ids, cols: `truth` ids).
struct Contingency {
    table: Vec<Vec<usize>>,
    n: usize,
}

fn relabel(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = std::collections::BTreeMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

impl Contingency {
    fn new(pred: &[usize], truth: &[usize], min_len: usize) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Size(format!(
                "label vectors differ in length: {} vs {}",
                pred.len(),
                truth.len()
            )));
        }
        if pred.len() < min_len {
            return Err(Error::Config(format!(
                "need at least {min_len} labelled samples, got {}",
                pred.len()
            )));
        }
        let (p, r) = relabel(pred);
        let (t, c) = relabel(truth);
        let mut table = vec![vec![0usize; c]; r];
        for (&i, &j) in p.iter().zip(&t) {
            table[i][j] += 1;
        }
        Ok(Self { table, n: pred.len() })
    }

    fn row_sums(&self) -> Vec<usize> {
        self.table.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<usize> {
        let cols = self.table.first().map_or(0, Vec::len);
        (0..cols).map(|j| self.table.iter().map(|r| r[j]).sum()).collect()
    }
}

/// Maximum-weight assignment on a rectangular weight matrix (Hungarian method).
/// Returns, for each row, the matched column (or `None` when rows exceed columns).
pub(crate) fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let max_w = weights.iter().flatten().cloned().fold(0.0f64, f64::max);
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            max_w - weights[i][j]
        } else {
            max_w
        }
    };
    // Potentials-based O(n^3) algorithm, 1-indexed with a virtual column 0.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for (j, &i) in p.iter().enumerate().skip(1) {
        if (1..=rows).contains(&i) && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// Best fraction of agreeing samples over one-to-one cluster-to-class matchings.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth, 1)?;
    let weights: Vec<Vec<f64>> = c.table.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect();
    let matched: usize = max_weight_assignment(&weights)
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| c.table[i][j]))
        .sum();
    Ok(matched as f64 / c.n as f64)
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index (pair-counting form).
///
/// When the expected and maximum indices coincide (both labelings trivial
/// in the same way) the score is 1.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth, 2)?;
    let index: f64 = c.table.iter().flatten().map(|&x| comb2(x)).sum();
    let a: f64 = c.row_sums().into_iter().map(comb2).sum();
    let b: f64 = c.col_sums().into_iter().map(comb2).sum();
    let expected = a * b / comb2(c.n);
    let max = 0.5 * (a + b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    counts
        .iter()
        .filter(|&&x| x > 0)
        .map(|&x| {
            let p = x as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

/// Normalised mutual information with the geometric-mean normalisation.
///
/// Two single-cluster labelings score 1; if only one is single-cluster the score is 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth, 2)?;
    let (rows, cols) = (c.row_sums(), c.col_sums());
    let (hp, ht) = (entropy(&rows, c.n), entropy(&cols, c.n));
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let n = c.n as f64;
    let mut mi = 0.0;
    for (i, row) in c.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

/// Fraction of samples that belong to their cluster's majority class.
pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth, 2)?;
    let hits: usize = c.table.iter().map(|r| r.iter().copied().max().unwrap_or(0)).sum();
    Ok(hits as f64 / c.n as f64)
}

/// All four external indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusteringScores {
    pub accuracy: f64,
    pub ari: f64,
    pub nmi: f64,
    pub purity: f64,
}

impl ClusteringScores {
    pub fn compute(pred: &[usize], truth: &[usize]) -> Result<Self> {
        Ok(Self {
            accuracy: clustering_accuracy(pred, truth)?,
            ari: ari(pred, truth)?,
            nmi: nmi(pred, truth)?,
            purity: purity(pred, truth)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> DenseTensor {
        DenseTensor::from_data(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn nmse_cases() {
        let x = DenseTensor::random_normal(&[3, 4], 1).unwrap();
        assert_eq!(nmse(&x, &x).unwrap(), 0.0);
        assert_eq!(nmse(&DenseTensor::zeros(&[3, 4]).unwrap(), &x).unwrap(), 1.0);
        assert!((nmse(&x.scale(2.0), &x).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            nmse(&x, &DenseTensor::zeros(&[3, 4]).unwrap()),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn kmeans_k_equals_n() {
        let pts = t(&[4, 2], &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 5.0, 5.0]);
        let r = kmeans(&pts, 4, 3, 50, 1).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut a = r.assignment.clone();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn kmeans_single_cluster_is_mean() {
        let pts = t(&[3, 2], &[0.0, 0.0, 3.0, 0.0, 0.0, 3.0]);
        let r = kmeans(&pts, 1, 1, 50, 1).unwrap();
        assert!((r.centroids[0] - 1.0).abs() < 1e-15 && (r.centroids[1] - 1.0).abs() < 1e-15);
        assert!(kmeans(&pts, 4, 1, 10, 1).is_err());
    }

    #[test]
    fn accuracy_by_hand() {
        assert_eq!(clustering_accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(clustering_accuracy(&[2, 0, 1], &[0, 1, 2]).unwrap(), 1.0);
        let a = clustering_accuracy(&[0, 0, 1, 1, 1, 1], &[0, 0, 0, 1, 1, 1]).unwrap();
        assert!((a - 5.0 / 6.0).abs() < 1e-15);
        assert!(clustering_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn trivial_partitions() {
        let truth = [0, 0, 1, 1, 2, 2];
        assert_eq!(ari(&truth, &truth).unwrap(), 1.0);
        assert!((nmi(&truth, &truth).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(purity(&truth, &truth).unwrap(), 1.0);
        let one = [7; 6];
        assert_eq!(ari(&one, &truth).unwrap(), 0.0);
        assert!((purity(&one, &truth).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(nmi(&one, &truth).unwrap(), 0.0);
        assert!(ari(&[0], &[0]).is_err());
        assert!(nmi(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn hungarian_rectangular() {
        let w = vec![vec![1.0, 5.0, 0.0], vec![4.0, 4.0, 0.0]];
        assert_eq!(max_weight_assignment(&w), vec![Some(1), Some(0)]);
        let tall = vec![vec![1.0], vec![3.0], vec![2.0]];
        assert_eq!(max_weight_assignment(&tall), vec![None, Some(0), None]);
    }
}
