//! Satisfaction and silhouette-based clusterization.
//!
//! Satisfaction of a user is the negated mean distance to the content it
//! actually consumed. Clusterization is the mean silhouette of the user
//! opinions under the k-means clustering whose k maximises that mean.

use std::ops::RangeInclusive;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::opinion::{euclidean, Opinions};
use crate::seed;

pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_TOL: f64 = 1e-6;
pub const KMEANS_RESTARTS: usize = 3;
pub const MAX_SELECTED_K: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary {
            mean: 0.0,
            variance: 0.0,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Summary { mean, variance }
}

/// `-(1/T) Σ_t ‖u_i^t - c_{j(i,t)}^t‖` given the per-step distances.
pub fn user_satisfaction(distances: &[f64]) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::EmptyLog);
    }
    Ok(-distances.iter().sum::<f64>() / distances.len() as f64)
}

/// Mean and variance over users of [`user_satisfaction`].
pub fn global_satisfaction<L: AsRef<[f64]>>(logs: &[L]) -> Result<Summary> {
    let len = logs.first().map(|l| l.as_ref().len()).ok_or(Error::EmptyLog)?;
    let sats = logs
        .iter()
        .map(|l| {
            let l = l.as_ref();
            if l.len() != len {
                return Err(Error::DimensionMismatch {
                    expected: len,
                    found: l.len(),
                });
            }
            user_satisfaction(l)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&sats))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Opinions,
    pub labels: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub distortion: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &Opinions) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.rows().enumerate() {
        let d = sq_dist(point, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init<R: Rng + ?Sized>(points: &Opinions, k: usize, rng: &mut R) -> Opinions {
    let n = points.len();
    let mut centroids = Opinions::zeros(k, points.dim());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = points.rows().map(|p| sq_dist(p, points.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let x = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|&w| {
                    acc += w;
                    x < acc
                })
                .unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(n - 1))
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (w, p) in d2.iter_mut().zip(points.rows()) {
            *w = w.min(sq_dist(p, points.row(pick)));
        }
    }
    centroids
}

/// Lloyd's algorithm from a k-means++ start.
///
/// Stops when no centroid moves by `tol` or more, or after `max_iter`
/// rounds. A cluster that empties is re-seeded with the point farthest from
/// its current centroid.
pub fn kmeans<R: Rng + ?Sized>(
    points: &Opinions,
    k: usize,
    rng: &mut R,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidClusterCount { k, n });
    }
    let dim = points.dim();
    let mut centroids = plus_plus_init(points, k, rng);
    let mut labels = vec![0usize; n];
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut dists = vec![0.0; n];
        for (i, p) in points.rows().enumerate() {
            let (c, d) = nearest(p, &centroids);
            labels[i] = c;
            dists[i] = d;
        }

        let mut sums = Opinions::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (p, &l) in points.rows().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums.row_mut(l).iter_mut().zip(p) {
                *s += v;
            }
        }

        let mut taken = vec![false; n];
        let mut shift = 0.0f64;
        for (c, &count) in counts.iter().enumerate() {
            let new: Vec<f64> = if count > 0 {
                sums.row(c).iter().map(|s| s / count as f64).collect()
            } else {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("k <= n leaves an untaken point");
                taken[far] = true;
                dists[far] = 0.0;
                points.row(far).to_vec()
            };
            shift = shift.max(sq_dist(&new, centroids.row(c)).sqrt());
            centroids.row_mut(c).copy_from_slice(&new);
        }
        if shift < tol {
            break;
        }
    }

    let mut distortion = 0.0;
    for (i, p) in points.rows().enumerate() {
        let (c, d) = nearest(p, &centroids);
        labels[i] = c;
        distortion += d;
    }
    Ok(ClusterModel {
        k,
        centroids,
        labels,
        distortion,
        iterations,
    })
}

/// Best of `restarts` k-means runs by distortion, each on its own stream.
pub fn kmeans_restarts(points: &Opinions, k: usize, seed: u64, restarts: usize) -> Result<ClusterModel> {
    let mut best: Option<ClusterModel> = None;
    for r in 0..restarts.max(1) {
        let mut rng = seed::rng(seed, &[k as u64, r as u64]);
        let model = kmeans(points, k, &mut rng, KMEANS_MAX_ITER, KMEANS_TOL)?;
        if best.as_ref().is_none_or(|b| model.distortion < b.distortion) {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn score(a: f64, b: f64) -> f64 {
    let denom = a.max(b);
    if denom > 0.0 {
        (b - a) / denom
    } else {
        0.0
    }
}

fn cluster_sizes(labels: &[usize]) -> Vec<usize> {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes
}

/// Silhouette of point `i`: `(b - a) / max(a, b)`.
///
/// Members of singleton clusters score 0, as do points with `a = b = 0`.
pub fn silhouette(i: usize, points: &Opinions, labels: &[usize]) -> Result<f64> {
    if labels.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: labels.len(),
        });
    }
    if i >= points.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: points.len(),
        });
    }
    let sizes = cluster_sizes(labels);
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::TooFewClusters);
    }
    let own = labels[i];
    if sizes[own] == 1 {
        return Ok(0.0);
    }
    let mut sums = vec![0.0; sizes.len()];
    for (j, p) in points.rows().enumerate() {
        if j != i {
            sums[labels[j]] += euclidean(points.row(i), p);
        }
    }
    let a = sums[own] / (sizes[own] - 1) as f64;
    let b = (0..sizes.len())
        .filter(|&c| c != own && sizes[c] > 0)
        .map(|c| sums[c] / sizes[c] as f64)
        .fold(f64::INFINITY, f64::min);
    Ok(score(a, b))
}

/// Silhouettes of every point under several labelings at once; each pairwise
/// distance is computed a single time. Labelings with fewer than two
/// non-empty clusters yield `None`.
pub fn silhouettes_many(points: &Opinions, labelings: &[&[usize]]) -> Vec<Option<Vec<f64>>> {
    let n = points.len();
    let sizes: Vec<Vec<usize>> = labelings.iter().map(|l| cluster_sizes(l)).collect();
    let valid: Vec<bool> = sizes
        .iter()
        .map(|s| s.iter().filter(|&&c| c > 0).count() >= 2)
        .collect();
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.len();
            Some(o)
        })
        .collect();
    let width: usize = sizes.iter().map(Vec::len).sum();

    let per_point: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0; width];
            let pi = points.row(i);
            for (j, pj) in points.rows().enumerate() {
                if j == i {
                    continue;
                }
                let d = euclidean(pi, pj);
                for (l, labels) in labelings.iter().enumerate() {
                    sums[offsets[l] + labels[j]] += d;
                }
            }
            labelings
                .iter()
                .enumerate()
                .map(|(l, labels)| {
                    if !valid[l] {
                        return f64::NAN;
                    }
                    let s = &sizes[l];
                    let own = labels[i];
                    if s[own] == 1 {
                        return 0.0;
                    }
                    let row = &sums[offsets[l]..offsets[l] + s.len()];
                    let a = row[own] / (s[own] - 1) as f64;
                    let b = (0..s.len())
                        .filter(|&c| c != own && s[c] > 0)
                        .map(|c| row[c] / s[c] as f64)
                        .fold(f64::INFINITY, f64::min);
                    score(a, b)
                })
                .collect()
        })
        .collect();

    (0..labelings.len())
        .map(|l| valid[l].then(|| per_point.iter().map(|row| row[l]).collect()))
        .collect()
}

pub fn mean_silhouette(points: &Opinions, labels: &[usize]) -> Result<f64> {
    if labels.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: labels.len(),
        });
    }
    let s = silhouettes_many(points, &[labels])
        .pop()
        .flatten()
        .ok_or(Error::TooFewClusters)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clusterization {
    /// Mean silhouette under the selected clustering.
    pub value: f64,
    pub chosen_k: usize,
    pub model: ClusterModel,
    pub silhouettes: Vec<f64>,
    /// Variance of the per-user silhouettes.
    pub variance: f64,
}

/// Default k range: `2..=min(10, N-1)`, widened to `2..=2` for two points.
pub fn default_k_range(n: usize) -> RangeInclusive<usize> {
    2..=MAX_SELECTED_K.min(n.saturating_sub(1)).max(2).min(n)
}

/// Runs k-means for each k in the range and keeps the clustering with the
/// highest mean silhouette. Ties go to the smaller k.
pub fn global_clusterization(
    points: &Opinions,
    k_range: Option<RangeInclusive<usize>>,
    seed: u64,
) -> Result<Clusterization> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidClusterCount { k: 2, n });
    }
    let range = k_range.unwrap_or_else(|| default_k_range(n));
    if *range.start() < 1 || *range.end() > n || range.is_empty() {
        return Err(Error::InvalidClusterCount {
            k: *range.end(),
            n,
        });
    }
    // cluster in a canonical (lexicographic) order so that the result does
    // not depend on how the caller ordered the points
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points
            .row(a)
            .iter()
            .zip(points.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sorted = Opinions::from_flat(
        points.dim(),
        order.iter().flat_map(|&i| points.row(i).iter().copied()).collect(),
    )?;
    let models = range
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| {
            let mut m = kmeans_restarts(&sorted, k, seed, KMEANS_RESTARTS)?;
            let mut labels = vec![0; n];
            for (pos, &i) in order.iter().enumerate() {
                labels[i] = m.labels[pos];
            }
            m.labels = labels;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let labelings: Vec<&[usize]> = models.iter().map(|m| m.labels.as_slice()).collect();
    let all = silhouettes_many(points, &labelings);

    let mut best: Option<(f64, usize)> = None;
    for (idx, s) in all.iter().enumerate() {
        if let Some(s) = s {
            let mean = s.iter().sum::<f64>() / n as f64;
            if best.is_none_or(|(m, _)| mean > m) {
                best = Some((mean, idx));
            }
        }
    }

    match best {
        Some((value, idx)) => {
            let silhouettes = all[idx].clone().expect("selected labeling is valid");
            let variance = summarize(&silhouettes).variance;
            let model = models.into_iter().nth(idx).expect("index from enumerate");
            Ok(Clusterization {
                value,
                chosen_k: model.k,
                model,
                silhouettes,
                variance,
            })
        }
        // every clustering collapsed onto one group (e.g. identical points)
        None => {
            let model = kmeans_restarts(points, 1, seed, 1)?;
            Ok(Clusterization {
                value: 0.0,
                chosen_k: 1,
                model,
                silhouettes: vec![0.0; n],
                variance: 0.0,
            })
        }
    }
}
