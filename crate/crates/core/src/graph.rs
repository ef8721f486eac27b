//! Directed, weighted social network.
//!
//! An edge `j -> i` with weight `A_ij` means user `j` influences user `i`.
//! Self-influence `A_ii` is kept apart from the edge lists, so traversal never
//! has to skip self-loops.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Row sums may exceed one by this much before construction fails.
const ROW_SLACK: f64 = 1e-12;

/// Tolerance used by [`validate_rows`].
pub const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InEdge {
    pub source: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SocialGraph {
    self_weights: Vec<f64>,
    /// Incoming edges per target, sorted by source.
    in_edges: Vec<Vec<InEdge>>,
    /// Targets per source, sorted.
    out_edges: Vec<Vec<usize>>,
}

impl SocialGraph {
    /// Builds a graph from `(source, target, weight)` triples.
    pub fn new<I>(n_users: usize, edges: I, self_weights: Vec<f64>) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if self_weights.len() != n_users {
            return Err(Error::DimensionMismatch {
                expected: n_users,
                found: self_weights.len(),
            });
        }
        for (i, &w) in self_weights.iter().enumerate() {
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::InvalidWeight(format!(
                    "self weight of user {i} must lie in (0, 1], got {w}"
                )));
            }
        }

        let mut in_edges = vec![Vec::new(); n_users];
        for (source, target, weight) in edges {
            for idx in [source, target] {
                if idx >= n_users {
                    return Err(Error::IndexOutOfRange {
                        index: idx,
                        len: n_users,
                    });
                }
            }
            if source == target {
                return Err(Error::InvalidWeight(format!(
                    "self-loop on user {source} belongs in the self weights"
                )));
            }
            if !(weight >= 0.0 && weight.is_finite()) {
                return Err(Error::InvalidWeight(format!(
                    "edge {source} -> {target} has weight {weight}"
                )));
            }
            in_edges[target].push(InEdge { source, weight });
        }

        let mut out_edges = vec![Vec::new(); n_users];
        for (target, list) in in_edges.iter_mut().enumerate() {
            list.sort_by_key(|e| e.source);
            if let Some(w) = list.windows(2).find(|w| w[0].source == w[1].source) {
                return Err(Error::DuplicateEdge {
                    from: w[0].source,
                    target,
                });
            }
            let row: f64 = self_weights[target] + list.iter().map(|e| e.weight).sum::<f64>();
            if row > 1.0 + ROW_SLACK {
                return Err(Error::InvalidWeight(format!(
                    "row of user {target} sums to {row} > 1"
                )));
            }
            for e in list.iter() {
                out_edges[e.source].push(target);
            }
        }
        // targets were visited in ascending order, so each list is sorted

        Ok(Self {
            self_weights,
            in_edges,
            out_edges,
        })
    }

    /// Same topology with new weights. `in_weights[i]` follows the order of
    /// [`Self::in_edges`]`(i)`.
    pub fn reweighted(&self, self_weights: Vec<f64>, in_weights: &[Vec<f64>]) -> Result<Self> {
        if in_weights.len() != self.n_users() {
            return Err(Error::DimensionMismatch {
                expected: self.n_users(),
                found: in_weights.len(),
            });
        }
        let mut edges = Vec::with_capacity(self.n_edges());
        for (target, (list, weights)) in self.in_edges.iter().zip(in_weights).enumerate() {
            if list.len() != weights.len() {
                return Err(Error::DimensionMismatch {
                    expected: list.len(),
                    found: weights.len(),
                });
            }
            edges.extend(list.iter().zip(weights).map(|(e, &w)| (e.source, target, w)));
        }
        Self::new(self.n_users(), edges, self_weights)
    }

    pub fn n_users(&self) -> usize {
        self.self_weights.len()
    }

    pub fn n_edges(&self) -> usize {
        self.in_edges.iter().map(Vec::len).sum()
    }

    pub fn self_weight(&self, i: usize) -> f64 {
        self.self_weights[i]
    }

    pub fn self_weights(&self) -> &[f64] {
        &self.self_weights
    }

    pub fn in_edges(&self, i: usize) -> &[InEdge] {
        &self.in_edges[i]
    }

    pub fn out_neighbours(&self, i: usize) -> &[usize] {
        &self.out_edges[i]
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_edges[i].len()
    }

    /// `Σ_{j≠i} A_ij`.
    pub fn neighbour_mass(&self, i: usize) -> f64 {
        self.in_edges[i].iter().map(|e| e.weight).sum()
    }

    pub fn has_edge(&self, source: usize, target: usize) -> bool {
        self.in_edges
            .get(target)
            .is_some_and(|l| l.binary_search_by_key(&source, |e| e.source).is_ok())
    }

    /// All edges as `(source, target, weight)`, ordered by target then source.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.in_edges
            .iter()
            .enumerate()
            .flat_map(|(t, l)| l.iter().map(move |e| (e.source, t, e.weight)))
    }

    /// Users with a directed path of at most `d` edges into `i`, including
    /// `i` itself. Sorted ascending.
    pub fn d_hop_influencers(&self, i: usize, d: usize) -> Result<Vec<usize>> {
        let n = self.n_users();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        let mut dist = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        dist[i] = 0;
        queue.push_back(i);
        let mut found = vec![i];
        while let Some(v) = queue.pop_front() {
            if dist[v] == d {
                continue;
            }
            for e in &self.in_edges[v] {
                if dist[e.source] == usize::MAX {
                    dist[e.source] = dist[v] + 1;
                    found.push(e.source);
                    queue.push_back(e.source);
                }
            }
        }
        found.sort_unstable();
        Ok(found)
    }

    /// Mean number of incoming edges per user, self-loops excluded.
    pub fn average_in_degree(&self) -> f64 {
        if self.n_users() == 0 {
            return 0.0;
        }
        self.n_edges() as f64 / self.n_users() as f64
    }
}

/// Per-user outcome of the combined row-stochasticity check
/// `A_ii + Σ_j A_ij + B_i = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RowReport {
    pub row_ok: Vec<bool>,
    pub max_residual: f64,
}

impl RowReport {
    pub fn passed(&self) -> bool {
        self.row_ok.iter().all(|&ok| ok)
    }

    pub fn failing_users(&self) -> Vec<usize> {
        self.row_ok
            .iter()
            .enumerate()
            .filter_map(|(i, &ok)| (!ok).then_some(i))
            .collect()
    }
}

/// Checks that social and recommender influence together form a stochastic
/// row for every user. A missing `B_i` counts as a failure.
pub fn validate_rows(graph: &SocialGraph, recommender_influence: &[f64]) -> RowReport {
    let mut max_residual = 0.0f64;
    let row_ok = (0..graph.n_users())
        .map(|i| match recommender_influence.get(i) {
            Some(&b) => {
                let residual = (graph.self_weight(i) + graph.neighbour_mass(i) + b - 1.0).abs();
                max_residual = max_residual.max(residual);
                residual <= ROW_TOLERANCE
            }
            None => {
                max_residual = f64::INFINITY;
                false
            }
        })
        .collect();
    RowReport {
        row_ok,
        max_residual,
    }
}
