//! The DGD baseline, the DQN family (diagonal Hessian-inverse correction)
//! and the NN-0/1/2 baselines, with the safeguard and step-size rules of
//! the underlying convergence theory.
//!
//! One iteration is a synchronous round: every node refreshes its block of
//! the direction from neighbor data, then applies the common step size.
//! Communication is accounted as p-vectors transmitted per node.

use std::time::Instant;

use nalgebra::DVector;

use crate::graph::WeightMatrix;
use crate::penalty::{build_splitting, phi_gradient, phi_value, BlockVector, PenaltyModel, Splitting};
use crate::problems::CostModel;
use crate::trace::{relative_error, Trace, TraceRow};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Dgd,
    Dqn0,
    Dqn1,
    Dqn2,
    Nn0,
    Nn1,
    Nn2,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Dgd => "dgd",
            Variant::Dqn0 => "dqn-0",
            Variant::Dqn1 => "dqn-1",
            Variant::Dqn2 => "dqn-2",
            Variant::Nn0 => "nn-0",
            Variant::Nn1 => "nn-1",
            Variant::Nn2 => "nn-2",
        }
    }

    /// p-vectors each node transmits per iteration.
    pub fn comms_per_iter(&self) -> u64 {
        match self {
            Variant::Dgd | Variant::Dqn0 | Variant::Nn0 => 1,
            Variant::Dqn1 | Variant::Nn1 => 2,
            Variant::Dqn2 | Variant::Nn2 => 3,
        }
    }

    pub fn is_nn(&self) -> bool {
        matches!(self, Variant::Nn0 | Variant::Nn1 | Variant::Nn2)
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DqnConfig {
    pub variant: Variant,
    /// Penalty parameter of the reformulation.
    pub alpha: f64,
    /// Hessian splitting parameter; NN variants require `theta = 1`.
    pub theta: f64,
    /// Step size.
    pub epsilon: f64,
    /// Safeguard radius for the diagonal correction; `+inf` disables it.
    pub rho: f64,
    /// Descent margin used by the theoretical parameter rules.
    pub delta: f64,
    pub max_iter: usize,
    /// Stop when the gradient norm of `Phi` drops to this level.
    pub stop_tol: f64,
    /// Optional early stop on relative error against the reference.
    pub stop_rel_err: Option<f64>,
}

impl DqnConfig {
    /// Practical defaults: `delta = 0`, `epsilon = 1`, `theta = 0`,
    /// safeguard disabled (quadratic-cost regime).
    pub fn practical(variant: Variant, alpha: f64, max_iter: usize) -> Self {
        DqnConfig {
            variant,
            alpha,
            theta: if variant.is_nn() { 1.0 } else { 0.0 },
            epsilon: 1.0,
            rho: f64::INFINITY,
            delta: 0.0,
            max_iter,
            stop_tol: 0.0,
            stop_rel_err: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 {
            return Err(Error::InvalidParameter("alpha must be positive".into()));
        }
        if self.theta < 0.0 {
            return Err(Error::InvalidParameter("theta must be nonnegative".into()));
        }
        if self.epsilon < 0.0 {
            return Err(Error::InvalidParameter("epsilon must be nonnegative".into()));
        }
        if self.rho.is_nan() || self.rho < 0.0 {
            return Err(Error::InvalidParameter("rho must be >= 0 or +inf".into()));
        }
        if self.variant.is_nn() && self.theta != 1.0 {
            return Err(Error::InvalidParameter(
                "NN variants use the theta = 1 splitting".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DqnState {
    pub x: BlockVector,
    /// DQN-1's frozen diagonal correction (diagonal entries per node).
    pub frozen_lambda: Option<Vec<DVector<f64>>>,
    pub k: usize,
    pub comm_vectors_per_node: u64,
}

/// One DGD step: `x_i^+ = sum_{j in closed nbhd} w_ij x_j - alpha grad f_i(x_i)`,
/// identically `x - grad Phi(x)`.
pub fn dgd_step(model: &PenaltyModel, x: &BlockVector) -> BlockVector {
    let mut next = x.clone();
    next.axpy(-1.0, &phi_gradient(model, x));
    next
}

fn direction_from_d(
    split: &Splitting,
    d: &BlockVector,
    lambda: Option<&[DVector<f64>]>,
) -> BlockVector {
    match lambda {
        None => d.scale(-1.0),
        Some(lam) => {
            let u = split.apply_g(d);
            BlockVector::from_blocks(
                d.blocks
                    .iter()
                    .zip(&u.blocks)
                    .zip(lam)
                    .map(|((di, ui), li)| li.component_mul(ui) - di)
                    .collect(),
            )
        }
    }
}

/// The DQN direction `s = -(I - L G) A^{-1} grad`, with diagonal `L` given
/// as per-node diagonal entries (`None` means `L = 0`).
pub fn dqn_direction(
    split: &Splitting,
    grad: &BlockVector,
    lambda: Option<&[DVector<f64>]>,
) -> BlockVector {
    let d = split.apply_a_inverse(grad);
    direction_from_d(split, &d, lambda)
}

/// The NN-`ell` direction: the order-`ell` truncated Neumann series
/// `s = -[sum_{m=0..ell} (A^{-1} G)^m] A^{-1} grad`, for a splitting built
/// with `theta = 1`.
pub fn nn_direction(split: &Splitting, grad: &BlockVector, ell: usize) -> BlockVector {
    assert!(ell <= 2, "NN-ell implemented for ell in {{0,1,2}}");
    let mut term = split.apply_a_inverse(grad);
    let mut sum = term.clone();
    for _ in 0..ell {
        term = split.apply_a_inverse(&split.apply_g(&term));
        sum.axpy(1.0, &term);
    }
    sum.scale(-1.0)
}

/// DQN-2's diagonal correction: per node, per coordinate,
/// `lambda = r / u` where `u = G d` and
/// `r_i = -[(1 + w_ii) I - alpha hess f_i(x_i)] u_i - sum_j w_ij u_j`.
///
/// Coordinates where `|u|` falls below `1e-12 * max(1, ||u||_inf)` get
/// `lambda = 0` (the locally safe DQN-0 reduction). Entries are projected
/// onto `[-rho, rho]` when the safeguard is finite.
pub fn compute_lambda_dqn2(
    model: &PenaltyModel,
    split: &Splitting,
    x: &BlockVector,
    d: &BlockVector,
    rho: f64,
) -> Vec<DVector<f64>> {
    let u = split.apply_g(d);
    let zero_tol = 1e-12 * u.max_abs().max(1.0);
    let n = model.n();
    let mut lambdas = Vec::with_capacity(n);
    for i in 0..n {
        let hess = model.problem.hessian(i, &x.blocks[i]);
        let wii = model.weights.diag[i];
        // r_i = -[(1+w_ii) I - alpha hess] u_i - sum_j w_ij u_j
        let mut r = model.alpha * (&hess * &u.blocks[i]) - &u.blocks[i] * (1.0 + wii);
        for &(j, wij) in &model.weights.neighbors[i] {
            r.axpy(-wij, &u.blocks[j], 1.0);
        }
        let lam = DVector::from_fn(model.p(), |l, _| {
            let ul = u.blocks[i][l];
            if ul.abs() < zero_tol {
                return 0.0;
            }
            let v = r[l] / ul;
            if !v.is_finite() {
                0.0
            } else if rho.is_finite() {
                v.clamp(-rho, rho)
            } else {
                v
            }
        });
        lambdas.push(lam);
    }
    lambdas
}

// ---------------------------------------------------------------------------
// Parameter rules from the convergence theory
// ---------------------------------------------------------------------------

/// The largest safeguard radius that keeps every direction `delta`-descent:
/// `rho = [alpha mu + (1+theta)(1-w_max)] / [(1-w_min)(1+theta)]
///        * (1/(alpha L + (1+theta)(1-w_min)) - delta)`.
pub fn safeguard_rho(
    alpha: f64,
    mu: f64,
    lipschitz: f64,
    w_min: f64,
    w_max: f64,
    theta: f64,
    delta: f64,
) -> Result<f64> {
    let sup = 1.0 / (alpha * lipschitz + (1.0 + theta) * (1.0 - w_min));
    if delta < 0.0 || delta >= sup {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in [0, {sup}), got {delta}"
        )));
    }
    Ok((alpha * mu + (1.0 + theta) * (1.0 - w_max)) / ((1.0 - w_min) * (1.0 + theta))
        * (sup - delta))
}

/// The direction-to-gradient bound
/// `beta = (1 + rho (1+theta)(1-w_min)) / (alpha mu + (1+theta)(1-w_max))`.
pub fn direction_bound_beta(
    alpha: f64,
    mu: f64,
    w_min: f64,
    w_max: f64,
    theta: f64,
    rho: f64,
) -> f64 {
    (1.0 + rho * (1.0 + theta) * (1.0 - w_min)) / (alpha * mu + (1.0 + theta) * (1.0 - w_max))
}

/// Theoretical step size and guaranteed linear factor.
#[derive(Debug, Clone, Copy)]
pub struct TheoreticalStep {
    pub beta: f64,
    pub epsilon: f64,
    /// Guaranteed per-iteration factor on `Phi(x^k) - Phi*`, in (0,1).
    pub xi: f64,
}

/// `epsilon = delta / (beta^2 L_tilde)` with the guaranteed factor
/// `xi = 1 - delta^2 mu_tilde / (2 L_tilde beta^2)`.
#[allow(clippy::too_many_arguments)]
pub fn theoretical_step(
    alpha: f64,
    mu: f64,
    lipschitz: f64,
    w_min: f64,
    w_max: f64,
    theta: f64,
    delta: f64,
    rho: f64,
) -> Result<TheoreticalStep> {
    if delta <= 0.0 {
        return Err(Error::InvalidParameter(
            "theoretical step size needs delta > 0".into(),
        ));
    }
    let beta = direction_bound_beta(alpha, mu, w_min, w_max, theta, rho);
    let (mu_tilde, l_tilde) = crate::penalty::tilde_constants(alpha, mu, lipschitz, w_min);
    let epsilon = delta / (beta * beta * l_tilde);
    let xi = 1.0 - delta * delta * mu_tilde / (2.0 * l_tilde * beta * beta);
    Ok(TheoreticalStep { beta, epsilon, xi })
}

/// Strict upper bound on `rho` under which the step is an inexact Newton
/// step with residual factor `t < 1` at unit step size:
/// `rho < alpha mu / [(1+theta)(1-w_min)(alpha L + 2(1+theta)(1-w_min))]`.
pub fn residual_rho_bound(alpha: f64, mu: f64, lipschitz: f64, w_min: f64, theta: f64) -> f64 {
    alpha * mu
        / ((1.0 + theta)
            * (1.0 - w_min)
            * (alpha * lipschitz + 2.0 * (1.0 + theta) * (1.0 - w_min)))
}

/// `gamma = (1+theta)(1-w_min) / (alpha mu + (1+theta)(1-w_min))`, the
/// block-norm bound on `G A^{-1}`.
pub fn gamma_bound(alpha: f64, mu: f64, w_min: f64, theta: f64) -> f64 {
    let g = (1.0 + theta) * (1.0 - w_min);
    g / (alpha * mu + g)
}

/// Inexact-Newton residual factor
/// `t = gamma + rho gamma (alpha L + 2(1+theta)(1-w_min))`.
pub fn inexact_newton_t(
    alpha: f64,
    mu: f64,
    lipschitz: f64,
    w_min: f64,
    theta: f64,
    rho: f64,
) -> f64 {
    let gamma = gamma_bound(alpha, mu, w_min, theta);
    gamma + rho * gamma * (alpha * lipschitz + 2.0 * (1.0 + theta) * (1.0 - w_min))
}

/// The penalty-parameter ceiling for safeguard-free DQN-2:
/// `alpha < min{(1 + lambda_n)/L, w_min/(2L), 2 mu / L^2}`.
pub fn dqn2_alpha_condition(mu: f64, lipschitz: f64, w_min: f64, lambda_n: f64) -> f64 {
    ((1.0 + lambda_n) / lipschitz)
        .min(w_min / (2.0 * lipschitz))
        .min(2.0 * mu / (lipschitz * lipschitz))
}

/// `h(alpha) = 1 - 2 alpha mu + alpha^2 L^2`, the residual factor of the
/// safeguard-free DQN-2 step.
pub fn h_alpha(mu: f64, lipschitz: f64, alpha: f64) -> f64 {
    1.0 - 2.0 * alpha * mu + alpha * alpha * lipschitz * lipschitz
}

// ---------------------------------------------------------------------------
// Solver loop
// ---------------------------------------------------------------------------

/// Per-iteration snapshot handed to an observer before the step is applied.
pub struct IterationRecord<'a> {
    pub k: usize,
    pub x: &'a BlockVector,
    pub grad: &'a BlockVector,
    pub direction: &'a BlockVector,
    /// Splitting used to form the direction; absent for DGD.
    pub splitting: Option<&'a Splitting>,
}

/// Runs the configured variant from `x0`. The reference solution (the exact
/// minimizer of the aggregate cost) feeds the relative-error trace column.
pub fn dqn_run(
    problem: &dyn CostModel,
    weights: &WeightMatrix,
    config: &DqnConfig,
    x0: BlockVector,
    reference: Option<&DVector<f64>>,
) -> Result<(DqnState, Trace)> {
    dqn_run_observed(problem, weights, config, x0, reference, |_| {})
}

/// `dqn_run` with a per-iteration observer (used by the verification suites
/// to check descent, direction-bound and residual properties in-loop).
pub fn dqn_run_observed(
    problem: &dyn CostModel,
    weights: &WeightMatrix,
    config: &DqnConfig,
    x0: BlockVector,
    reference: Option<&DVector<f64>>,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<(DqnState, Trace)> {
    config.validate()?;
    let model = PenaltyModel::new(problem, weights, config.alpha, config.theta)?;
    let start = Instant::now();
    let mut state = DqnState {
        x: x0,
        frozen_lambda: None,
        k: 0,
        comm_vectors_per_node: 0,
    };
    let mut trace = Trace::default();

    loop {
        let grad = phi_gradient(&model, &state.x);
        let grad_norm = grad.norm();
        let rel_err = match reference {
            Some(y) => relative_error(&state.x, y)?,
            None => f64::NAN,
        };
        trace.rows.push(TraceRow {
            k: state.k,
            rel_err,
            phi: phi_value(&model, &state.x),
            grad_norm,
            comms: state.comm_vectors_per_node,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });

        if grad_norm <= config.stop_tol
            || state.k >= config.max_iter
            || config.stop_rel_err.is_some_and(|tol| rel_err <= tol)
        {
            break;
        }

        let mut comms = config.variant.comms_per_iter();
        let (direction, splitting) = match config.variant {
            Variant::Dgd => (grad.scale(-1.0), None),
            Variant::Dqn0 => {
                let split = build_splitting(&model, &state.x)?;
                let s = dqn_direction(&split, &grad, None);
                (s, Some(split))
            }
            Variant::Dqn1 => {
                let split = build_splitting(&model, &state.x)?;
                let d = split.apply_a_inverse(&grad);
                if state.frozen_lambda.is_none() {
                    // first iteration: one DQN-2 computation, then frozen;
                    // costs the extra u-exchange
                    comms += 1;
                    state.frozen_lambda = Some(compute_lambda_dqn2(
                        &model, &split, &state.x, &d, config.rho,
                    ));
                }
                let s = direction_from_d(&split, &d, state.frozen_lambda.as_deref());
                (s, Some(split))
            }
            Variant::Dqn2 => {
                let split = build_splitting(&model, &state.x)?;
                let d = split.apply_a_inverse(&grad);
                let lam = compute_lambda_dqn2(&model, &split, &state.x, &d, config.rho);
                let s = direction_from_d(&split, &d, Some(&lam));
                (s, Some(split))
            }
            Variant::Nn0 | Variant::Nn1 | Variant::Nn2 => {
                let ell = match config.variant {
                    Variant::Nn0 => 0,
                    Variant::Nn1 => 1,
                    _ => 2,
                };
                let split = build_splitting(&model, &state.x)?;
                let s = nn_direction(&split, &grad, ell);
                (s, Some(split))
            }
        };

        observer(&IterationRecord {
            k: state.k,
            x: &state.x,
            grad: &grad,
            direction: &direction,
            splitting: splitting.as_ref(),
        });

        state.x.axpy(config.epsilon, &direction);
        if !state.x.is_finite() {
            return Err(Error::Diverged {
                solver: config.variant.name().into(),
                iteration: state.k,
            });
        }
        state.comm_vectors_per_node += comms;
        state.k += 1;
    }

    Ok((state, trace))
}
