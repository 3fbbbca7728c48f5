//! Network topologies and consensus weight matrices.
//!
//! Graphs are undirected and simple. Weight matrices are symmetric, doubly
//! stochastic, with strictly positive diagonal entries bounded away from 1,
//! built with the Metropolis rule from node degrees.
//!
//! Randomness: all generators take a 64-bit seed and draw node `i`'s data
//! from sub-stream `i` of a ChaCha8 stream cipher RNG seeded with that seed
//! (stream `n` is reserved for instance-global draws). Generation is
//! bit-reproducible for a fixed seed.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::{Error, Result};

/// Returns the RNG for sub-stream `stream` of the generator seeded by `seed`.
pub(crate) fn substream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// An undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub n: usize,
    /// Unordered node pairs, stored with `i < j`, sorted, deduplicated.
    pub edges: Vec<(usize, usize)>,
    /// Unit-square positions when the graph came from the geometric model.
    pub coordinates: Option<Vec<[f64; 2]>>,
}

impl Topology {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut edges: Vec<(usize, usize)> = edges
            .into_iter()
            .map(|(i, j)| if i < j { (i, j) } else { (j, i) })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        for &(i, j) in &edges {
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop at node {i}")));
            }
            if j >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i},{j}) references node >= n={n}"
                )));
            }
        }
        Ok(Topology {
            n,
            edges,
            coordinates: None,
        })
    }

    /// Adjacency lists (open neighborhoods).
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == i || b == i)
            .count()
    }
}

/// Places `n` nodes i.i.d. uniform on the unit square and connects pairs at
/// Euclidean distance at most `r = sqrt(ln(n)/n)`. Deterministic per seed;
/// node `i`'s position comes from sub-stream `i`.
pub fn generate_random_geometric(n: usize, seed: u64) -> Topology {
    assert!(n >= 1, "node count must be positive");
    let coords: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let mut rng = substream_rng(seed, i as u64);
            [rng.gen::<f64>(), rng.gen::<f64>()]
        })
        .collect();
    let r = ((n as f64).ln() / n as f64).sqrt();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            if (dx * dx + dy * dy).sqrt() <= r {
                edges.push((i, j));
            }
        }
    }
    Topology {
        n,
        edges,
        coordinates: Some(coords),
    }
}

/// Geometric draws are re-tried with seed+1, seed+2, ... until connected,
/// up to 100 attempts.
pub fn generate_connected_geometric(n: usize, seed: u64) -> Result<Topology> {
    const MAX_ATTEMPTS: usize = 100;
    for attempt in 0..MAX_ATTEMPTS {
        let t = generate_random_geometric(n, seed.wrapping_add(attempt as u64));
        if is_connected(&t) {
            return Ok(t);
        }
    }
    Err(Error::ConnectivityExhausted {
        seed,
        attempts: MAX_ATTEMPTS,
    })
}

/// Breadth-first reachability from node 0.
pub fn is_connected(t: &Topology) -> bool {
    if t.n == 0 {
        return true;
    }
    let adj = t.neighbors();
    let mut seen = vec![false; t.n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == t.n
}

/// Symmetric doubly stochastic consensus weights on a topology.
///
/// Off-diagonal support equals the edge set; rows sum to one; the diagonal
/// lies strictly inside (0, 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub n: usize,
    /// `w_ii` per node.
    pub diag: Vec<f64>,
    /// Neighbor lists with `w_ij`, mirrored for both endpoints.
    pub neighbors: Vec<Vec<(usize, f64)>>,
    pub w_min: f64,
    pub w_max: f64,
    pub lambda_1: f64,
    pub lambda_n: f64,
}

impl WeightMatrix {
    /// Builds a weight matrix from explicit diagonal and edge weights.
    ///
    /// Validates row sums and symmetry of the input but, unlike
    /// [`metropolis_weights`], tolerates `w_ii = 1` so that single-node and
    /// other degenerate instances can be constructed in tests.
    pub fn from_parts(n: usize, diag: Vec<f64>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if diag.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: diag.len(),
            });
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidParameter(format!("bad edge ({i},{j})")));
            }
            if w <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "non-positive weight on edge ({i},{j})"
                )));
            }
            neighbors[i].push((j, w));
            neighbors[j].push((i, w));
        }
        for nb in &mut neighbors {
            nb.sort_unstable_by_key(|&(j, _)| j);
        }
        for i in 0..n {
            let row: f64 = diag[i] + neighbors[i].iter().map(|&(_, w)| w).sum::<f64>();
            if (row - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "row {i} sums to {row}, expected 1"
                )));
            }
            if diag[i] <= 0.0 || diag[i] > 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "diagonal entry w_{i}{i} = {} outside (0,1]",
                    diag[i]
                )));
            }
        }
        let w_min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let w_max = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut wm = WeightMatrix {
            n,
            diag,
            neighbors,
            w_min,
            w_max,
            lambda_1: f64::NAN,
            lambda_n: f64::NAN,
        };
        let (l1, ln) = extreme_eigenvalues(&wm);
        wm.lambda_1 = l1;
        wm.lambda_n = ln;
        Ok(wm)
    }

    /// Dense `n x n` form, for oracles and eigen-solves at desk scale.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            m[(i, i)] = self.diag[i];
            for &(j, w) in &self.neighbors[i] {
                m[(i, j)] = w;
            }
        }
        m
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.neighbors[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or(0.0, |&(_, w)| w)
    }
}

/// Metropolis weights: `w_ij = 1 / (2 max{d_i, d_j} + 1)` on edges,
/// `w_ii = 1 - sum_j w_ij`.
///
/// Rejects disconnected topologies and single-node graphs (for which
/// `w_ii = 1` would sit on the boundary of the admissible range).
pub fn metropolis_weights(t: &Topology) -> Result<WeightMatrix> {
    if t.n < 2 {
        return Err(Error::InvalidParameter(
            "Metropolis weights need at least 2 nodes".into(),
        ));
    }
    if !is_connected(t) {
        return Err(Error::Disconnected);
    }
    let adj = t.neighbors();
    let deg: Vec<usize> = adj.iter().map(Vec::len).collect();
    let edges: Vec<(usize, usize, f64)> = t
        .edges
        .iter()
        .map(|&(i, j)| (i, j, 1.0 / (2.0 * deg[i].max(deg[j]) as f64 + 1.0)))
        .collect();
    let mut diag = vec![1.0; t.n];
    for &(i, j, w) in &edges {
        diag[i] -= w;
        diag[j] -= w;
    }
    WeightMatrix::from_parts(t.n, diag, &edges)
}

/// Largest and smallest eigenvalues of the dense symmetric weight matrix.
pub fn extreme_eigenvalues(w: &WeightMatrix) -> (f64, f64) {
    let eig = w.to_dense().symmetric_eigen();
    let l1 = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ln = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    (l1, ln)
}
