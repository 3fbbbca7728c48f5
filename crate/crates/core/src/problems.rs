//! Synthetic local costs and their oracles.
//!
//! Every problem exposes per-node value/gradient/Hessian oracles together
//! with global strong convexity and Lipschitz constants `(mu, L)` such that
//! `mu I <= hess f_i(x) <= L I` everywhere.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use crate::graph::substream_rng;
use crate::{Error, Result};

/// Per-node cost oracle with global convexity constants.
pub trait CostModel: Sync {
    fn n(&self) -> usize;
    /// Variable dimension.
    fn p(&self) -> usize;
    fn value(&self, i: usize, x: &DVector<f64>) -> f64;
    fn gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64>;
    /// Strong convexity modulus.
    fn mu(&self) -> f64;
    /// Gradient Lipschitz constant.
    fn lipschitz(&self) -> f64;
}

/// The pair `(mu, L)`.
pub fn convexity_constants(problem: &dyn CostModel) -> (f64, f64) {
    (problem.mu(), problem.lipschitz())
}

fn check_dim(p: usize, x: &DVector<f64>) {
    assert_eq!(x.len(), p, "expected a {p}-vector, got length {}", x.len());
}

// ---------------------------------------------------------------------------
// Quadratic costs: f_i(x) = 1/2 (x - a_i)' B_i (x - a_i)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    pub b: Vec<DMatrix<f64>>,
    pub a: Vec<DVector<f64>>,
    mu: f64,
    lipschitz: f64,
}

impl QuadraticProblem {
    pub fn new(b: Vec<DMatrix<f64>>, a: Vec<DVector<f64>>) -> Result<Self> {
        if b.len() != a.len() || b.is_empty() {
            return Err(Error::InvalidParameter("mismatched node data".into()));
        }
        let mut mu = f64::INFINITY;
        let mut l = 0.0f64;
        for m in &b {
            let eig = m.clone().symmetric_eigen();
            for &v in eig.eigenvalues.iter() {
                mu = mu.min(v);
                l = l.max(v);
            }
        }
        if mu <= 0.0 {
            return Err(Error::InvalidParameter("B_i not positive definite".into()));
        }
        Ok(QuadraticProblem {
            b,
            a,
            mu,
            lipschitz: l,
        })
    }
}

impl CostModel for QuadraticProblem {
    fn n(&self) -> usize {
        self.b.len()
    }
    fn p(&self) -> usize {
        self.a[0].len()
    }
    fn value(&self, i: usize, x: &DVector<f64>) -> f64 {
        check_dim(self.p(), x);
        let d = x - &self.a[i];
        0.5 * d.dot(&(&self.b[i] * &d))
    }
    fn gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        check_dim(self.p(), x);
        &self.b[i] * (x - &self.a[i])
    }
    fn hessian(&self, i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        self.b[i].clone()
    }
    fn mu(&self) -> f64 {
        self.mu
    }
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// Generates n quadratics: `B_i = Q_i Diag(c_i) Q_i'` where `Q_i` is the
/// eigenvector matrix of a symmetrized standard-normal draw, `c_i` entries
/// i.i.d. uniform on [1, 101], and `a_i` entries i.i.d. uniform on [1, 11].
/// `(mu, L)` come exactly from the sampled `c_i` entries. Node `i` draws
/// from sub-stream `i`.
pub fn generate_quadratic(n: usize, p: usize, seed: u64) -> QuadraticProblem {
    assert!(n >= 1 && p >= 1);
    let mut b = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut mu = f64::INFINITY;
    let mut l = 0.0f64;
    for i in 0..n {
        let mut rng = substream_rng(seed, i as u64);
        let raw = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
        let sym = (&raw + raw.transpose()) * 0.5;
        let q = sym.symmetric_eigen().eigenvectors;
        let c = DVector::from_fn(p, |_, _| rng.gen_range(1.0..=101.0));
        mu = mu.min(c.min());
        l = l.max(c.max());
        let bi = &q * DMatrix::from_diagonal(&c) * q.transpose();
        // symmetrize away the last-bit roundoff of the triple product
        b.push((&bi + bi.transpose()) * 0.5);
        a.push(DVector::from_fn(p, |_, _| rng.gen_range(1.0..=11.0)));
    }
    QuadraticProblem {
        b,
        a,
        mu,
        lipschitz: l,
    }
}

// ---------------------------------------------------------------------------
// Logistic costs: f_i(x) = sum_j log(1 + exp(-b_ij (x1' a_ij + x0)))
//                          + (tau/n) ||x||^2,  x = (x1, x0)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LogisticProblem {
    /// `features[i][j]` is a `(p-1)`-vector.
    pub features: Vec<Vec<DVector<f64>>>,
    /// Labels in {-1, +1}.
    pub labels: Vec<Vec<f64>>,
    pub tau: f64,
    p: usize,
    mu: f64,
    lipschitz: f64,
}

fn softplus(t: f64) -> f64 {
    // log(1 + e^t), overflow-safe
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticProblem {
    pub fn new(features: Vec<Vec<DVector<f64>>>, labels: Vec<Vec<f64>>, tau: f64) -> Result<Self> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::InvalidParameter("mismatched node data".into()));
        }
        if tau <= 0.0 {
            return Err(Error::InvalidParameter("tau must be positive".into()));
        }
        for (fs, ls) in features.iter().zip(&labels) {
            if fs.len() != ls.len() {
                return Err(Error::InvalidParameter("features/labels mismatch".into()));
            }
            if ls.iter().any(|&b| b != 1.0 && b != -1.0) {
                return Err(Error::InvalidParameter("labels must be +/-1".into()));
            }
        }
        let n = features.len();
        let p = features[0][0].len() + 1;
        let mu = 2.0 * tau / n as f64;
        // sigma(1-sigma) <= 1/4, augmented feature (a_ij, 1)
        let max_row: f64 = features
            .iter()
            .map(|fs| fs.iter().map(|a| a.norm_squared() + 1.0).sum::<f64>())
            .fold(0.0, f64::max);
        let lipschitz = mu + 0.25 * max_row;
        Ok(LogisticProblem {
            features,
            labels,
            tau,
            p,
            mu,
            lipschitz,
        })
    }

    /// Margin `b_ij (x1' a_ij + x0)` of sample `j` at node `i`.
    fn margin(&self, i: usize, j: usize, x: &DVector<f64>) -> f64 {
        let p = self.p;
        let x1 = x.rows(0, p - 1);
        self.labels[i][j] * (self.features[i][j].dot(&x1.into_owned()) + x[p - 1])
    }

    /// Augmented feature (a_ij, 1) scaled by the label.
    fn signed_feature(&self, i: usize, j: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.p);
        v.rows_mut(0, self.p - 1).copy_from(&self.features[i][j]);
        v[self.p - 1] = 1.0;
        v * self.labels[i][j]
    }
}

impl CostModel for LogisticProblem {
    fn n(&self) -> usize {
        self.features.len()
    }
    fn p(&self) -> usize {
        self.p
    }
    fn value(&self, i: usize, x: &DVector<f64>) -> f64 {
        check_dim(self.p, x);
        let loss: f64 = (0..self.labels[i].len())
            .map(|j| softplus(-self.margin(i, j, x)))
            .sum();
        loss + self.tau / self.n() as f64 * x.norm_squared()
    }
    fn gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        check_dim(self.p, x);
        let mut g = x * (2.0 * self.tau / self.n() as f64);
        for j in 0..self.labels[i].len() {
            let m = self.margin(i, j, x);
            g -= self.signed_feature(i, j) * sigmoid(-m);
        }
        g
    }
    fn hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        check_dim(self.p, x);
        let mut h = DMatrix::identity(self.p, self.p) * (2.0 * self.tau / self.n() as f64);
        for j in 0..self.labels[i].len() {
            let m = self.margin(i, j, x);
            let s = sigmoid(m);
            let v = self.signed_feature(i, j);
            h += &v * v.transpose() * (s * (1.0 - s));
        }
        h
    }
    fn mu(&self) -> f64 {
        self.mu
    }
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// Generates a logistic classification instance: features and the hidden
/// true vector are standard normal, labels follow the noisy sign rule
/// `b_ij = sign(x1*' a_ij + x0* + eps_ij)` with `eps_ij ~ N(0, noise_sd^2)`.
/// Node `i` draws from sub-stream `i`; the true vector from sub-stream `n`.
pub fn generate_logistic(
    n: usize,
    j_samples: usize,
    p: usize,
    seed: u64,
    tau: f64,
    noise_sd: f64,
) -> Result<LogisticProblem> {
    assert!(n >= 1 && j_samples >= 1 && p >= 2);
    if tau <= 0.0 || noise_sd < 0.0 {
        return Err(Error::InvalidParameter("need tau > 0, noise_sd >= 0".into()));
    }
    let mut grng = substream_rng(seed, n as u64);
    let x_true = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut grng));
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = substream_rng(seed, i as u64);
        let mut fs = Vec::with_capacity(j_samples);
        let mut ls = Vec::with_capacity(j_samples);
        for _ in 0..j_samples {
            let a = DVector::from_fn(p - 1, |_, _| StandardNormal.sample(&mut rng));
            let eps: f64 = StandardNormal.sample(&mut rng);
            let eps = eps * noise_sd;
            let z = x_true.rows(0, p - 1).dot(&a) + x_true[p - 1] + eps;
            ls.push(if z >= 0.0 { 1.0 } else { -1.0 });
            fs.push(a);
        }
        features.push(fs);
        labels.push(ls);
    }
    LogisticProblem::new(features, labels, tau)
}

// ---------------------------------------------------------------------------
// Lossless JSON serialization (row-major matrices, hex-encoded f64 bits)
// ---------------------------------------------------------------------------

fn f64_to_hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn f64_from_hex(s: &str) -> Result<f64> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| Error::Format(format!("bad hex float: {s}")))
}

fn vec_to_hex(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::String(f64_to_hex(x))).collect())
}

fn vec_from_hex(v: &Value) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| Error::Format("expected array".into()))?
        .iter()
        .map(|e| {
            e.as_str()
                .ok_or_else(|| Error::Format("expected hex string".into()))
                .and_then(f64_from_hex)
        })
        .collect()
}

impl QuadraticProblem {
    pub fn to_json(&self) -> Value {
        json!({
            "kind": "quadratic",
            "n": self.n(),
            "p": self.p(),
            "nodes": (0..self.n()).map(|i| json!({
                "b": vec_to_hex(self.b[i].transpose().as_slice()), // row-major
                "a": vec_to_hex(self.a[i].as_slice()),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let p = v["p"].as_u64().ok_or_else(|| Error::Format("missing p".into()))? as usize;
        let nodes = v["nodes"]
            .as_array()
            .ok_or_else(|| Error::Format("missing nodes".into()))?;
        let mut b = Vec::new();
        let mut a = Vec::new();
        for node in nodes {
            let bv = vec_from_hex(&node["b"])?;
            b.push(DMatrix::from_row_slice(p, p, &bv));
            a.push(DVector::from_vec(vec_from_hex(&node["a"])?));
        }
        QuadraticProblem::new(b, a)
    }
}

impl LogisticProblem {
    pub fn to_json(&self) -> Value {
        json!({
            "kind": "logistic",
            "n": self.n(),
            "p": self.p(),
            "tau": f64_to_hex(self.tau),
            "nodes": (0..self.n()).map(|i| json!({
                "features": self.features[i].iter()
                    .map(|a| vec_to_hex(a.as_slice())).collect::<Vec<_>>(),
                "labels": self.labels[i].clone(),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let tau = f64_from_hex(
            v["tau"]
                .as_str()
                .ok_or_else(|| Error::Format("missing tau".into()))?,
        )?;
        let nodes = v["nodes"]
            .as_array()
            .ok_or_else(|| Error::Format("missing nodes".into()))?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for node in nodes {
            let fs: Result<Vec<DVector<f64>>> = node["features"]
                .as_array()
                .ok_or_else(|| Error::Format("missing features".into()))?
                .iter()
                .map(|f| vec_from_hex(f).map(DVector::from_vec))
                .collect();
            features.push(fs?);
            labels.push(
                node["labels"]
                    .as_array()
                    .ok_or_else(|| Error::Format("missing labels".into()))?
                    .iter()
                    .map(|l| l.as_f64().unwrap_or(f64::NAN))
                    .collect(),
            );
        }
        LogisticProblem::new(features, labels, tau)
    }
}
