//! The DQN-type directions embedded in the proximal method of multipliers
//! (PMM-DQN-0/1/2). Unlike the penalty solvers, these converge to the exact
//! consensus minimizer of the aggregate cost: the dual variable absorbs the
//! consensus violation instead of leaving an `O(alpha)` bias.
//!
//! The primal subproblem at round `k` is approximated by one Newton-like
//! step with the splitting `A_hat - G_hat` of the augmented Hessian
//! `hess F + beta (I - Z) + eps I`; the dual then moves along `(I - Z) x`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::graph::WeightMatrix;
use crate::penalty::{BlockVector, Splitting};
use crate::problems::CostModel;
use crate::trace::{relative_error, Trace, TraceRow};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PmmVariant {
    Pmm0,
    Pmm1,
    Pmm2,
}

impl PmmVariant {
    pub fn name(&self) -> &'static str {
        match self {
            PmmVariant::Pmm0 => "pmm-dqn-0",
            PmmVariant::Pmm1 => "pmm-dqn-1",
            PmmVariant::Pmm2 => "pmm-dqn-2",
        }
    }

    /// p-vectors each node transmits per round (x and d, plus u for PMM-DQN-2).
    pub fn comms_per_iter(&self) -> u64 {
        match self {
            PmmVariant::Pmm0 | PmmVariant::Pmm1 => 2,
            PmmVariant::Pmm2 => 3,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PmmConfig {
    pub variant: PmmVariant,
    /// Dual step size / augmentation weight.
    pub beta: f64,
    /// Proximal constant.
    pub eps_pmm: f64,
    pub theta: f64,
    /// Safeguard radius for the diagonal correction; `+inf` disables it.
    pub rho: f64,
    /// Scale the dual update by `beta` instead of 1 (alternative form of
    /// the derivation; off by default).
    pub dual_beta_scaling: bool,
    pub max_iter: usize,
    /// Stop when the relative error against the reference drops here.
    pub stop_tol: f64,
}

impl PmmConfig {
    pub fn new(variant: PmmVariant, beta: f64, max_iter: usize) -> Self {
        PmmConfig {
            variant,
            beta,
            eps_pmm: 10.0,
            theta: 0.0,
            rho: f64::INFINITY,
            dual_beta_scaling: false,
            max_iter,
            stop_tol: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta <= 0.0 {
            return Err(Error::InvalidParameter("beta must be positive".into()));
        }
        if self.eps_pmm <= 0.0 {
            return Err(Error::InvalidParameter("eps_pmm must be positive".into()));
        }
        if self.theta < 0.0 {
            return Err(Error::InvalidParameter("theta must be nonnegative".into()));
        }
        Ok(())
    }

    /// The diagonal-correction Taylor expansion is justified when
    /// `beta > max(0, L - eps_pmm) / 2`.
    pub fn taylor_valid(&self, lipschitz: f64) -> bool {
        self.beta > 0.5 * (lipschitz - self.eps_pmm).max(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct PmmState {
    pub x_hat: BlockVector,
    pub q_hat: BlockVector,
    pub frozen_lambda: Option<Vec<DVector<f64>>>,
    pub k: usize,
    pub comm_vectors_per_node: u64,
}

impl PmmState {
    /// Algorithm start: primal and dual both zero.
    pub fn zeros(n: usize, p: usize) -> Self {
        PmmState {
            x_hat: BlockVector::zeros(n, p),
            q_hat: BlockVector::zeros(n, p),
            frozen_lambda: None,
            k: 0,
            comm_vectors_per_node: 0,
        }
    }
}

/// The augmented-Hessian splitting at `x_hat`:
/// `A_hat_i = hess f_i(x_hat_i) + (beta (1+theta)(1-w_ii) + eps_pmm) I`,
/// `g_hat_ii = beta theta (1-w_ii)`, `g_hat_ij = beta w_ij`.
pub fn pmm_splitting(
    problem: &dyn CostModel,
    weights: &WeightMatrix,
    x_hat: &BlockVector,
    config: &PmmConfig,
) -> Result<Splitting> {
    let (n, p) = (problem.n(), problem.p());
    let mut a_blocks = Vec::with_capacity(n);
    let mut g_diag = Vec::with_capacity(n);
    let mut g_neighbors = Vec::with_capacity(n);
    for i in 0..n {
        let shift = config.beta * (1.0 + config.theta) * (1.0 - weights.diag[i]) + config.eps_pmm;
        let mut a = problem.hessian(i, &x_hat.blocks[i]);
        for k in 0..p {
            a[(k, k)] += shift;
        }
        a_blocks.push(a);
        g_diag.push(config.beta * config.theta * (1.0 - weights.diag[i]));
        g_neighbors.push(
            weights.neighbors[i]
                .iter()
                .map(|&(j, w)| (j, config.beta * w))
                .collect(),
        );
    }
    Splitting::from_parts(p, a_blocks, g_diag, g_neighbors)
}

/// Block `i` of `(I - Z) v`: `(1 - w_ii) v_i - sum_j w_ij v_j`, equal to
/// `sum_j w_ij (v_i - v_j)`.
pub fn laplacian_apply(weights: &WeightMatrix, v: &BlockVector) -> BlockVector {
    let blocks = (0..weights.n)
        .map(|i| {
            let mut out = &v.blocks[i] * (1.0 - weights.diag[i]);
            for &(j, w) in &weights.neighbors[i] {
                out.axpy(-w, &v.blocks[j], 1.0);
            }
            out
        })
        .collect();
    BlockVector::from_blocks(blocks)
}

/// The primal gradient of the augmented Lagrangian at `(x_hat, q_hat)`:
/// block `i` is `grad f_i(x_hat_i) + beta sum_j w_ij (x_hat_i - x_hat_j) + q_hat_i`.
pub fn pmm_gradient(
    problem: &dyn CostModel,
    weights: &WeightMatrix,
    x_hat: &BlockVector,
    q_hat: &BlockVector,
    beta: f64,
) -> BlockVector {
    let mut g = laplacian_apply(weights, x_hat).scale(beta);
    for i in 0..problem.n() {
        g.blocks[i] += problem.gradient(i, &x_hat.blocks[i]) + &q_hat.blocks[i];
    }
    g
}

/// PMM-DQN-2's diagonal correction. With `c = beta + eps_pmm` and
/// `u_hat = G_hat d_hat`, node `i` solves coordinate-wise
/// `lambda u = -[(1/c + beta w_ii / c^2) I - hess f_i / c^2] u_i
///             - (beta / c^2) sum_j w_ij u_j`,
/// with the same zero-entry convention and `[-rho, rho]` projection as the
/// penalty-side correction.
pub fn compute_lambda_pmm2(
    problem: &dyn CostModel,
    weights: &WeightMatrix,
    split: &Splitting,
    x_hat: &BlockVector,
    d_hat: &BlockVector,
    config: &PmmConfig,
) -> Vec<DVector<f64>> {
    let u = split.apply_g(d_hat);
    let zero_tol = 1e-12 * u.max_abs().max(1.0);
    let c = config.beta + config.eps_pmm;
    let c2 = c * c;
    let n = problem.n();
    let mut lambdas = Vec::with_capacity(n);
    for i in 0..n {
        let hess = problem.hessian(i, &x_hat.blocks[i]);
        let wii = weights.diag[i];
        let mut r = (&hess * &u.blocks[i]) / c2 - &u.blocks[i] * (1.0 / c + config.beta * wii / c2);
        for &(j, wij) in &weights.neighbors[i] {
            r.axpy(-config.beta * wij / c2, &u.blocks[j], 1.0);
        }
        let lam = DVector::from_fn(problem.p(), |l, _| {
            let ul = u.blocks[i][l];
            if ul.abs() < zero_tol {
                return 0.0;
            }
            let v = r[l] / ul;
            if !v.is_finite() {
                0.0
            } else if config.rho.is_finite() {
                v.clamp(-config.rho, config.rho)
            } else {
                v
            }
        });
        lambdas.push(lam);
    }
    lambdas
}

/// One PMM-DQN round: Newton-like primal step at unit step size, then the
/// dual ascent along the consensus violation of the new primal point.
pub fn pmm_step(
    problem: &dyn CostModel,
    weights: &WeightMatrix,
    config: &PmmConfig,
    state: &mut PmmState,
) -> Result<()> {
    let split = pmm_splitting(problem, weights, &state.x_hat, config)?;
    let grad = pmm_gradient(problem, weights, &state.x_hat, &state.q_hat, config.beta);
    let d = split.apply_a_inverse(&grad);

    let mut comms = config.variant.comms_per_iter();
    let lambda: Option<Vec<DVector<f64>>> = match config.variant {
        PmmVariant::Pmm0 => None,
        PmmVariant::Pmm1 => {
            if state.frozen_lambda.is_none() {
                comms += 1; // the one-off u-exchange of the initial correction
                state.frozen_lambda = Some(compute_lambda_pmm2(
                    problem,
                    weights,
                    &split,
                    &state.x_hat,
                    &d,
                    config,
                ));
            }
            state.frozen_lambda.clone()
        }
        PmmVariant::Pmm2 => Some(compute_lambda_pmm2(
            problem,
            weights,
            &split,
            &state.x_hat,
            &d,
            config,
        )),
    };

    // s = -(I - L G) d
    let s = match &lambda {
        None => d.scale(-1.0),
        Some(lam) => {
            let u = split.apply_g(&d);
            BlockVector::from_blocks(
                d.blocks
                    .iter()
                    .zip(&u.blocks)
                    .zip(lam)
                    .map(|((di, ui), li)| li.component_mul(ui) - di)
                    .collect(),
            )
        }
    };

    state.x_hat.axpy(1.0, &s);
    if !state.x_hat.is_finite() {
        return Err(Error::Diverged {
            solver: config.variant.name().into(),
            iteration: state.k,
        });
    }
    let c_dual = if config.dual_beta_scaling {
        config.beta
    } else {
        1.0
    };
    state
        .q_hat
        .axpy(c_dual, &laplacian_apply(weights, &state.x_hat));
    state.comm_vectors_per_node += comms;
    state.k += 1;
    Ok(())
}

fn aggregate_value(problem: &dyn CostModel, x: &BlockVector) -> f64 {
    (0..problem.n()).map(|i| problem.value(i, &x.blocks[i])).sum()
}

/// Runs PMM-DQN from the all-zeros primal/dual pair. The trace's `phi`
/// column holds the aggregate cost `F(x_hat)` (there is no penalty
/// objective here) and `grad_norm` the augmented-Lagrangian primal
/// gradient norm.
pub fn pmm_run(
    problem: &dyn CostModel,
    weights: &WeightMatrix,
    config: &PmmConfig,
    reference: Option<&DVector<f64>>,
) -> Result<(PmmState, Trace)> {
    config.validate()?;
    let start = Instant::now();
    let mut state = PmmState::zeros(problem.n(), problem.p());
    let mut trace = Trace::default();
    if matches!(config.variant, PmmVariant::Pmm1 | PmmVariant::Pmm2)
        && !config.taylor_valid(problem.lipschitz())
    {
        trace.warnings.push(format!(
            "diagonal correction outside its validity range: beta = {} <= max(0, L - eps_pmm)/2 = {}",
            config.beta,
            0.5 * (problem.lipschitz() - config.eps_pmm).max(0.0)
        ));
    }

    loop {
        let grad = pmm_gradient(problem, weights, &state.x_hat, &state.q_hat, config.beta);
        let rel_err = match reference {
            Some(y) => relative_error(&state.x_hat, y)?,
            None => f64::NAN,
        };
        trace.rows.push(TraceRow {
            k: state.k,
            rel_err,
            phi: aggregate_value(problem, &state.x_hat),
            grad_norm: grad.norm(),
            comms: state.comm_vectors_per_node,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });

        if state.k >= config.max_iter || (reference.is_some() && rel_err <= config.stop_tol) {
            break;
        }
        pmm_step(problem, weights, config, &mut state)?;
    }
    Ok((state, trace))
}

/// Dense `(I - Z)` for test oracles.
pub fn laplacian_dense(weights: &WeightMatrix, p: usize) -> DMatrix<f64> {
    let np = weights.n * p;
    DMatrix::identity(np, np) - weights.to_dense().kronecker(&DMatrix::identity(p, p))
}
