//! The penalty objective, its gradient, and the block-sparse Hessian
//! splitting `hess Phi = A_k - G`.
//!
//! `Phi(x) = alpha * sum_i f_i(x_i) + 1/2 x'(I - Z)x` with `Z = W (x) I`.
//! The quadratic disagreement term is always evaluated through the edge
//! difference identity `x'(I - Z)x = sum_{i,j in E} w_ij ||x_i - x_j||^2`,
//! so nothing larger than `O(|E| p)` is ever stored.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::graph::WeightMatrix;
use crate::problems::CostModel;
use crate::{Error, Result};

/// A vector in `R^{np}` stored as `n` blocks of `p`-vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    pub blocks: Vec<DVector<f64>>,
}

impl BlockVector {
    pub fn zeros(n: usize, p: usize) -> Self {
        BlockVector {
            blocks: vec![DVector::zeros(p); n],
        }
    }

    pub fn from_blocks(blocks: Vec<DVector<f64>>) -> Self {
        BlockVector { blocks }
    }

    /// Consensus point: every block equals `c`.
    pub fn consensus(n: usize, c: &DVector<f64>) -> Self {
        BlockVector {
            blocks: vec![c.clone(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn p(&self) -> usize {
        self.blocks.first().map_or(0, DVector::len)
    }

    /// Euclidean norm of the flattened vector.
    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(DVector::norm_squared)
            .sum::<f64>()
            .sqrt()
    }

    /// Block norm `sum_i ||x_i||_2`.
    pub fn block_norm(&self) -> f64 {
        self.blocks.iter().map(DVector::norm).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.amax())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn dot(&self, other: &BlockVector) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    /// `self + t * other`, allocation-free in the blocks.
    pub fn axpy(&mut self, t: f64, other: &BlockVector) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.axpy(t, b, 1.0);
        }
    }

    pub fn scale(&self, t: f64) -> BlockVector {
        BlockVector {
            blocks: self.blocks.iter().map(|b| b * t).collect(),
        }
    }

    pub fn sub(&self, other: &BlockVector) -> BlockVector {
        BlockVector {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn flatten(&self) -> DVector<f64> {
        let p = self.p();
        let mut out = DVector::zeros(self.n() * p);
        for (i, b) in self.blocks.iter().enumerate() {
            out.rows_mut(i * p, p).copy_from(b);
        }
        out
    }

    pub fn from_flat(v: &DVector<f64>, n: usize, p: usize) -> Self {
        assert_eq!(v.len(), n * p);
        BlockVector {
            blocks: (0..n).map(|i| v.rows(i * p, p).into_owned()).collect(),
        }
    }
}

/// The penalty reformulation `Phi` of a cost model over a weight matrix.
pub struct PenaltyModel<'a> {
    pub problem: &'a dyn CostModel,
    pub weights: &'a WeightMatrix,
    pub alpha: f64,
    pub theta: f64,
}

impl<'a> PenaltyModel<'a> {
    pub fn new(
        problem: &'a dyn CostModel,
        weights: &'a WeightMatrix,
        alpha: f64,
        theta: f64,
    ) -> Result<Self> {
        if alpha <= 0.0 {
            return Err(Error::InvalidParameter("alpha must be positive".into()));
        }
        if theta < 0.0 {
            return Err(Error::InvalidParameter("theta must be nonnegative".into()));
        }
        if problem.n() != weights.n {
            return Err(Error::DimensionMismatch {
                expected: weights.n,
                got: problem.n(),
            });
        }
        Ok(PenaltyModel {
            problem,
            weights,
            alpha,
            theta,
        })
    }

    pub fn n(&self) -> usize {
        self.weights.n
    }

    pub fn p(&self) -> usize {
        self.problem.p()
    }
}

/// `Phi(x) = alpha sum_i f_i(x_i) + 1/2 sum_{edges} w_ij ||x_i - x_j||^2`.
pub fn phi_value(model: &PenaltyModel, x: &BlockVector) -> f64 {
    assert_eq!(x.n(), model.n());
    let costs: f64 = (0..model.n())
        .map(|i| model.problem.value(i, &x.blocks[i]))
        .sum();
    let mut penalty = 0.0;
    for i in 0..model.n() {
        for &(j, w) in &model.weights.neighbors[i] {
            if j > i {
                penalty += w * (&x.blocks[i] - &x.blocks[j]).norm_squared();
            }
        }
    }
    model.alpha * costs + 0.5 * penalty
}

/// Block `i` of the gradient: `alpha grad f_i(x_i) + sum_j w_ij (x_i - x_j)`.
pub fn phi_gradient(model: &PenaltyModel, x: &BlockVector) -> BlockVector {
    assert_eq!(x.n(), model.n());
    let blocks = (0..model.n())
        .map(|i| {
            let mut g = model.problem.gradient(i, &x.blocks[i]) * model.alpha;
            for &(j, w) in &model.weights.neighbors[i] {
                g.axpy(w, &(&x.blocks[i] - &x.blocks[j]), 1.0);
            }
            g
        })
        .collect();
    BlockVector { blocks }
}

enum BlockSolver {
    Chol(Cholesky<f64, Dyn>),
    // eigen fallback when Cholesky hits roundoff on a barely-PD block
    Eig {
        q: DMatrix<f64>,
        inv_eig: DVector<f64>,
    },
}

impl BlockSolver {
    fn new(a: &DMatrix<f64>, index: usize) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if let Some(c) = Cholesky::new(a.clone()) {
            return Ok(BlockSolver::Chol(c));
        }
        let eig = a.clone().symmetric_eigen();
        if eig.eigenvalues.min() <= 0.0 {
            return Err(Error::NotPositiveDefinite { index });
        }
        Ok(BlockSolver::Eig {
            q: eig.eigenvectors,
            inv_eig: eig.eigenvalues.map(|v| 1.0 / v),
        })
    }

    fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            BlockSolver::Chol(c) => c.solve(v),
            BlockSolver::Eig { q, inv_eig } => {
                let y = q.transpose() * v;
                q * y.component_mul(inv_eig)
            }
        }
    }
}

/// The splitting `hess = A - G`: block-diagonal `A` with per-node `p x p`
/// blocks, and `G` described by per-node scalars `g_ii` and per-edge
/// scalars `g_ij` (each standing for a scalar multiple of `I`).
pub struct Splitting {
    pub p: usize,
    pub a_blocks: Vec<DMatrix<f64>>,
    solvers: Vec<BlockSolver>,
    /// `g_ii` per node.
    pub g_diag: Vec<f64>,
    /// Neighbor lists `(j, g_ij)`, mirrored.
    pub g_neighbors: Vec<Vec<(usize, f64)>>,
}

impl Splitting {
    pub fn from_parts(
        p: usize,
        a_blocks: Vec<DMatrix<f64>>,
        g_diag: Vec<f64>,
        g_neighbors: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let solvers = a_blocks
            .iter()
            .enumerate()
            .map(|(i, a)| BlockSolver::new(a, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Splitting {
            p,
            a_blocks,
            solvers,
            g_diag,
            g_neighbors,
        })
    }

    pub fn n(&self) -> usize {
        self.a_blocks.len()
    }

    /// Per-block solve `A_i y_i = v_i`.
    pub fn apply_a_inverse(&self, v: &BlockVector) -> BlockVector {
        BlockVector {
            blocks: v
                .blocks
                .iter()
                .zip(&self.solvers)
                .map(|(b, s)| s.solve(b))
                .collect(),
        }
    }

    pub fn apply_a(&self, v: &BlockVector) -> BlockVector {
        BlockVector {
            blocks: v
                .blocks
                .iter()
                .zip(&self.a_blocks)
                .map(|(b, a)| a * b)
                .collect(),
        }
    }

    /// Block `i` of `G v`: `g_ii v_i + sum_{j in O_i} g_ij v_j`.
    pub fn apply_g(&self, v: &BlockVector) -> BlockVector {
        let blocks = (0..self.n())
            .map(|i| {
                let mut out = &v.blocks[i] * self.g_diag[i];
                for &(j, g) in &self.g_neighbors[i] {
                    out.axpy(g, &v.blocks[j], 1.0);
                }
                out
            })
            .collect();
        BlockVector { blocks }
    }

    /// Hessian-vector product via the splitting identity `(A - G) v`.
    pub fn hessian_vec(&self, v: &BlockVector) -> BlockVector {
        let mut out = self.apply_a(v);
        out.axpy(-1.0, &self.apply_g(v));
        out
    }
}

/// Builds the DQN splitting at `x`:
/// `A_i = alpha hess f_i(x_i) + (1+theta)(1 - w_ii) I`,
/// `g_ii = theta (1 - w_ii)`, `g_ij = w_ij`.
pub fn build_splitting(model: &PenaltyModel, x: &BlockVector) -> Result<Splitting> {
    let (n, p) = (model.n(), model.p());
    assert_eq!(x.n(), n);
    let mut a_blocks = Vec::with_capacity(n);
    let mut g_diag = Vec::with_capacity(n);
    for i in 0..n {
        let shift = (1.0 + model.theta) * (1.0 - model.weights.diag[i]);
        let mut a = model.problem.hessian(i, &x.blocks[i]) * model.alpha;
        for k in 0..p {
            a[(k, k)] += shift;
        }
        a_blocks.push(a);
        g_diag.push(model.theta * (1.0 - model.weights.diag[i]));
    }
    Splitting::from_parts(p, a_blocks, g_diag, model.weights.neighbors.clone())
}

/// Block norm of a dense `np x np` matrix partitioned into `p x p` blocks:
/// `max_j sum_i ||M_ij||_2` (spectral norms). Test-and-oracle scale only.
pub fn block_norm_mat(m: &DMatrix<f64>, p: usize) -> f64 {
    assert_eq!(m.nrows() % p, 0);
    assert_eq!(m.ncols() % p, 0);
    let n_rows = m.nrows() / p;
    let n_cols = m.ncols() / p;
    (0..n_cols)
        .map(|j| {
            (0..n_rows)
                .map(|i| spectral_norm(&m.view((i * p, j * p), (p, p)).into_owned()))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Largest singular value of a small matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    // for symmetric blocks this equals the max |eigenvalue|; SVD covers both
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// `(mu_tilde, L_tilde) = (alpha mu, alpha L + 2 (1 - w_min))` — the strong
/// convexity and gradient Lipschitz constants of `Phi`.
pub fn tilde_constants(alpha: f64, mu: f64, lipschitz: f64, w_min: f64) -> (f64, f64) {
    (alpha * mu, alpha * lipschitz + 2.0 * (1.0 - w_min))
}
