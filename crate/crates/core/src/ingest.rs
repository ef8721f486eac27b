//! Real social graphs: SNAP-style edge lists, spectral community detection
//! and community-seeded opinions.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::metrics::{kmeans_restarts, KMEANS_RESTARTS};
use crate::opinion::Opinions;
use crate::seed::{self, tag};

/// Undirected graph with nodes remapped to `0..n` in ascending order of
/// their original ids.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeList {
    pub node_ids: Vec<u64>,
    /// Unique pairs with `a < b`.
    pub edges: Vec<(usize, usize)>,
}

impl EdgeList {
    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let mut ids = BTreeSet::new();
        let mut raw = Vec::new();
        for (a, b) in pairs {
            if a == b {
                continue;
            }
            ids.insert(a);
            ids.insert(b);
            raw.push((a, b));
        }
        let index: BTreeMap<u64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let edges: BTreeSet<(usize, usize)> = raw
            .into_iter()
            .map(|(a, b)| {
                let (a, b) = (index[&a], index[&b]);
                (a.min(b), a.max(b))
            })
            .collect();
        Self {
            node_ids: ids.into_iter().collect(),
            edges: edges.into_iter().collect(),
        }
    }

    /// Each undirected edge becomes a pair of directed influence edges with
    /// zero weight; self weights are one until parameters are sampled.
    pub fn to_topology(&self) -> Result<SocialGraph> {
        let n = self.n_nodes();
        let edges = self.edges.iter().flat_map(|&(a, b)| [(a, b, 0.0), (b, a, 0.0)]);
        SocialGraph::new(n, edges, vec![1.0; n])
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn write_node_map(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "original_id,index")?;
        for (i, id) in self.node_ids.iter().enumerate() {
            writeln!(out, "{id},{i}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Reads whitespace-separated integer pairs, one per line. Blank lines and
/// lines starting with `#` or `%` are skipped; extra columns are ignored.
pub fn load_edge_list(path: &Path) -> Result<EdgeList> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut pairs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let mut fields = trimmed.split_whitespace();
        let mut next = || -> Result<u64> {
            let f = fields.next().ok_or_else(|| parse_err("expected two node ids".into()))?;
            f.parse().map_err(|e| parse_err(format!("bad node id {f:?}: {e}")))
        };
        let a = next()?;
        let b = next()?;
        pairs.push((a, b));
    }
    let list = EdgeList::from_pairs(pairs);
    if list.edges.is_empty() {
        return Err(Error::EmptyEdgeList(path.to_path_buf()));
    }
    Ok(list)
}

pub const EIGEN_TOL: f64 = 1e-6;
pub const EIGEN_MAX_ITER: usize = 2000;

/// Leading `k` eigenpairs of `I + D^{-1/2} A D^{-1/2}`, that is `2I - L` for
/// the normalized Laplacian `L`, so the returned vectors span the bottom of
/// the spectrum of `L`.
///
/// Block power iteration with Rayleigh-Ritz on a slightly wider block than
/// requested; converged once every wanted Ritz pair has residual below
/// [`EIGEN_TOL`].
pub fn laplacian_eigenvectors(adj: &[Vec<usize>], k: usize, seed_value: u64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = adj.len();
    if k == 0 || k > n {
        return Err(Error::InvalidClusterCount { k, n });
    }
    let inv_sqrt: Vec<f64> = adj
        .iter()
        .map(|a| if a.is_empty() { 0.0 } else { 1.0 / (a.len() as f64).sqrt() })
        .collect();
    let apply = |x: &DMatrix<f64>| -> DMatrix<f64> {
        let mut y = x.clone();
        for c in 0..x.ncols() {
            let col = x.column(c);
            for i in 0..n {
                let s: f64 = adj[i].iter().map(|&j| inv_sqrt[j] * col[j]).sum();
                y[(i, c)] += inv_sqrt[i] * s;
            }
        }
        y
    };

    let block = (2 * k + 4).min(n);
    let mut rng = seed::rng(seed_value, &[tag::COMMUNITIES, 1]);
    let mut x = DMatrix::from_fn(n, block, |_, _| rng.random::<f64>() - 0.5);
    x = x.qr().q();
    let mut residual = f64::INFINITY;
    for _ in 0..EIGEN_MAX_ITER {
        let y = apply(&x);
        let q = y.qr().q();
        let aq = apply(&q);
        let h = q.transpose() * &aq;
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let v = DMatrix::from_fn(block, block, |r, c| eig.eigenvectors[(r, order[c])]);
        let values: Vec<f64> = order.iter().map(|&o| eig.eigenvalues[o]).collect();
        x = &q * &v;
        let ax = &aq * &v;
        residual = (0..k)
            .map(|c| (ax.column(c) - x.column(c) * values[c]).norm())
            .fold(0.0, f64::max);
        if residual < EIGEN_TOL {
            return Ok((values[..k].to_vec(), x.columns(0, k).into_owned()));
        }
    }
    Err(Error::NoConvergence {
        iterations: EIGEN_MAX_ITER,
        residual,
    })
}

/// Spectral clustering into `k` communities: bottom-`k` eigenvectors of the
/// normalized Laplacian, rows normalized to unit length, then k-means.
/// Labels are renumbered by first appearance in node order.
pub fn spectral_communities(adj: &[Vec<usize>], k: usize, seed_value: u64) -> Result<Vec<usize>> {
    let n = adj.len();
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let (_, vectors) = laplacian_eigenvectors(adj, k, seed_value)?;
    let mut data = Vec::with_capacity(n * k);
    for i in 0..n {
        let row = vectors.row(i);
        let norm = row.norm();
        data.extend(row.iter().map(|v| if norm > 0.0 { v / norm } else { 0.0 }));
    }
    let embedding = Opinions::from_flat(k, data)?;
    let model = kmeans_restarts(
        &embedding,
        k,
        seed::derive(seed_value, &[tag::COMMUNITIES, 2]),
        KMEANS_RESTARTS,
    )?;
    Ok(canonical_labels(&model.labels))
}

pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// One centre per community drawn uniformly from `[0, 1]^n_topics`; each
/// member starts at its centre plus Gaussian noise of standard deviation
/// `sigma`, clamped to `[-1, 1]`.
pub fn init_opinions_from_communities<R: Rng + ?Sized>(
    labels: &[usize],
    n_communities: usize,
    n_topics: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<Opinions> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_communities) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: n_communities,
        });
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be non-negative, got {sigma}")));
    }
    let noise = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidParameter(format!("sigma = {sigma}: {e}")))?;
    let centres: Vec<f64> = (0..n_communities * n_topics).map(|_| rng.random::<f64>()).collect();
    let data = labels
        .iter()
        .flat_map(|&l| centres[l * n_topics..(l + 1) * n_topics].iter().copied())
        .map(|c| (c + noise.sample(rng)).clamp(-1.0, 1.0))
        .collect();
    Opinions::from_flat(n_topics, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cliques(size: u64, bridged: bool) -> EdgeList {
        let mut pairs = Vec::new();
        for base in [0, size] {
            for a in 0..size {
                for b in a + 1..size {
                    pairs.push((base + a, base + b));
                }
            }
        }
        if bridged {
            pairs.push((0, size));
        }
        EdgeList::from_pairs(pairs)
    }

    #[test]
    fn parses_comments_duplicates_and_self_loops() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        std::fs::write(&path, "# header\n\n10 20\n20 10\n10 10\n30\t10 extra\n% note\n").unwrap();
        let list = load_edge_list(&path).unwrap();
        assert_eq!(list.node_ids, vec![10, 20, 30]);
        assert_eq!(list.edges, vec![(0, 1), (0, 2)]);
        let g = list.to_topology().unwrap();
        assert_eq!(g.n_edges(), 4);
        assert!(g.has_edge(1, 0) && g.has_edge(0, 1));
    }

    #[test]
    fn parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        std::fs::write(&path, "1 2\n3 x\n").unwrap();
        match load_edge_list(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, "# nothing\n").unwrap();
        assert!(matches!(load_edge_list(&path), Err(Error::EmptyEdgeList(_))));
    }

    #[test]
    fn node_map_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let list = EdgeList::from_pairs([(7, 3), (3, 9)]);
        let path = dir.path().join("map.csv");
        list.write_node_map(&path).unwrap();
        assert_eq!(std::fs::read_to_string(path).unwrap(), "original_id,index\n3,0\n7,1\n9,2\n");
    }

    #[test]
    fn eigenpairs_of_a_cycle() {
        // normalized adjacency of C_n has eigenvalues cos(2πj/n)
        let n = 12;
        let list = EdgeList::from_pairs((0..n).map(|i| (i, (i + 1) % n)));
        let (values, vectors) = laplacian_eigenvectors(&list.adjacency(), 1, 0).unwrap();
        assert!((values[0] - 2.0).abs() < 1e-9);
        let first = vectors[(0, 0)];
        assert!(vectors.iter().all(|v| (v - first).abs() < 1e-6));
    }

    #[test]
    fn splits_two_cliques() {
        for bridged in [false, true] {
            let list = two_cliques(10, bridged);
            let labels = spectral_communities(&list.adjacency(), 2, 1).unwrap();
            assert!(labels[..10].iter().all(|&l| l == 0));
            assert!(labels[10..].iter().all(|&l| l == 1));
        }
    }

    #[test]
    fn relabelling_nodes_keeps_partition() {
        let list = two_cliques(8, true);
        let shifted = EdgeList::from_pairs(
            list.edges
                .iter()
                .map(|&(a, b)| (1000 + 16 - a as u64, 1000 + 16 - b as u64)),
        );
        let a = spectral_communities(&list.adjacency(), 2, 5).unwrap();
        let b = spectral_communities(&shifted.adjacency(), 2, 5).unwrap();
        // node i in `list` is node 15 - i in `shifted`
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(a[i] == a[j], b[15 - i] == b[15 - j]);
            }
        }
    }

    #[test]
    fn community_opinions_cluster_and_stay_in_box() {
        let mut rng = seed::rng(3, &[0]);
        let labels: Vec<usize> = (0..400).map(|i| i % 4).collect();
        let ops = init_opinions_from_communities(&labels, 4, 2, 0.15, &mut rng).unwrap();
        assert!(ops.first_outside_unit_box().is_none());
        for c in 0..4 {
            let members: Vec<usize> = (0..400).filter(|i| i % 4 == c).collect();
            let mean = ops.mean_of(&members);
            let sd: f64 = (members
                .iter()
                .map(|&i| crate::opinion::euclidean(ops.row(i), &mean).powi(2))
                .sum::<f64>()
                / (2.0 * members.len() as f64))
                .sqrt();
            assert!((0.1..0.2).contains(&sd), "{sd}");
        }
        assert!(init_opinions_from_communities(&[0, 5], 2, 2, 0.1, &mut rng).is_err());
        assert!(init_opinions_from_communities(&[0], 1, 2, -1.0, &mut rng).is_err());
    }

    #[test]
    fn single_community_is_trivial() {
        let list = two_cliques(4, false);
        assert_eq!(spectral_communities(&list.adjacency(), 1, 0).unwrap(), vec![0; 8]);
    }
}
