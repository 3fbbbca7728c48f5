//! Experiment plumbing: reference oracles, experiment configuration,
//! preset studies, the PMM beta sweep, and trace/manifest emission.
//!
//! Everything is seeded from the config, so a run is reproducible from its
//! manifest alone. CSVs carry the trace schema of [`crate::trace`]; the
//! `wall_ms` column is the only nondeterministic field.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::dqn::{
    direction_bound_beta, dqn2_alpha_condition, dqn_run, gamma_bound, h_alpha, inexact_newton_t,
    safeguard_rho, theoretical_step, DqnConfig, Variant,
};
use crate::graph::{generate_connected_geometric, metropolis_weights, WeightMatrix};
use crate::penalty::{phi_gradient, phi_value, tilde_constants, BlockVector, PenaltyModel};
use crate::pmm::{laplacian_dense, pmm_run, PmmConfig, PmmVariant};
use crate::problems::{generate_logistic, generate_quadratic, CostModel};
use crate::trace::Trace;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Reference oracles
// ---------------------------------------------------------------------------

fn aggregate_value(problem: &dyn CostModel, y: &DVector<f64>) -> f64 {
    (0..problem.n()).map(|i| problem.value(i, y)).sum()
}

fn aggregate_gradient(problem: &dyn CostModel, y: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(problem.p());
    for i in 0..problem.n() {
        g += problem.gradient(i, y);
    }
    g
}

fn spd_solve(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = h.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    h.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::InvalidParameter("singular Newton system".into()))
}

/// The exact minimizer of the aggregate cost `f = sum_i f_i` (the target of
/// the relative-error metric): damped Newton from zero, stopping when the
/// gradient norm falls to `1e-12` relative to its initial scale. For
/// quadratics the first step is the dense normal-equations solve and the
/// rest is iterative refinement.
pub fn exact_solution(problem: &dyn CostModel) -> Result<DVector<f64>> {
    let p = problem.p();
    let mut y = DVector::zeros(p);
    let tol = 1e-12 * aggregate_gradient(problem, &y).norm().max(1.0);
    for _ in 0..200 {
        let grad = aggregate_gradient(problem, &y);
        if grad.norm() <= tol {
            return Ok(y);
        }
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..problem.n() {
            hess += problem.hessian(i, &y);
        }
        let step = spd_solve(&hess, &(-&grad))?;
        let f0 = aggregate_value(problem, &y);
        // Newton decrement below the value's roundoff: numerically converged
        if step.dot(&grad).abs() <= 1e-15 * f0.abs().max(1.0) {
            return Ok(y);
        }
        // halve until the value decreases (strong convexity guarantees
        // acceptance at some t > 0)
        let mut t = 1.0;
        while t > 1e-14 && aggregate_value(problem, &(&y + &step * t)) > f0 {
            t *= 0.5;
        }
        if t <= 1e-14 {
            // numerical floor: no descent representable
            return Ok(y);
        }
        y += step * t;
    }
    Err(Error::NewtonFailed { iterations: 200 })
}

/// The minimizer of the penalty objective `Phi` (the saturation point of
/// the DQN/NN family): damped Newton on the stacked `np`-dimensional
/// system with the dense Hessian `alpha hess F + (I - Z)`.
pub fn penalty_solution(model: &PenaltyModel) -> Result<BlockVector> {
    let (n, p) = (model.n(), model.p());
    let laplacian = laplacian_dense(model.weights, p);
    let mut x = BlockVector::zeros(n, p);
    let tol = 1e-12 * phi_gradient(model, &x).norm().max(1.0);
    for _ in 0..200 {
        let grad = phi_gradient(model, &x);
        if grad.norm() <= tol {
            return Ok(x);
        }
        let mut hess = laplacian.clone();
        for i in 0..n {
            let hi = model.problem.hessian(i, &x.blocks[i]) * model.alpha;
            for a in 0..p {
                for b in 0..p {
                    hess[(i * p + a, i * p + b)] += hi[(a, b)];
                }
            }
        }
        let step = spd_solve(&hess, &(-grad.flatten()))?;
        let step = BlockVector::from_flat(&step, n, p);
        let f0 = phi_value(model, &x);
        // Newton decrement below the value's roundoff: numerically converged
        if step.dot(&grad).abs() <= 1e-15 * f0.abs().max(1.0) {
            return Ok(x);
        }
        let mut t = 1.0;
        let mut trial;
        loop {
            trial = x.clone();
            trial.axpy(t, &step);
            if phi_value(model, &trial) <= f0 || t <= 1e-14 {
                break;
            }
            t *= 0.5;
        }
        if t <= 1e-14 && phi_value(model, &trial) > f0 {
            return Ok(x);
        }
        x = trial;
    }
    Err(Error::NewtonFailed { iterations: 200 })
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GraphSpec {
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Quadratic,
    Logistic,
}

fn default_samples() -> usize {
    2
}
fn default_tau() -> f64 {
    1.0
}
fn default_noise_sd() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub p: usize,
    pub seed: u64,
    /// Data samples per node (logistic only).
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Regularization constant (logistic only).
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Label-noise standard deviation (logistic only).
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
}

impl ProblemSpec {
    pub fn build(&self, n: usize) -> Result<Box<dyn CostModel>> {
        Ok(match self.kind {
            ProblemKind::Quadratic => Box::new(generate_quadratic(n, self.p, self.seed)),
            ProblemKind::Logistic => Box::new(generate_logistic(
                n,
                self.samples,
                self.p,
                self.seed,
                self.tau,
                self.noise_sd,
            )?),
        })
    }
}

/// Safeguard policy for a DQN solver entry.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Safeguard {
    /// Off for quadratics and for DQN-0/2; the descent-preserving radius at
    /// `delta = 0` for DQN-1 on non-quadratic costs.
    #[default]
    Auto,
    Off,
    Rho(f64),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DqnSolverSpec {
    pub variant: Variant,
    /// Defaults to `1/(100 L)`.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Defaults to 0 for DQN/DGD and 1 for NN.
    #[serde(default)]
    pub theta: Option<f64>,
    /// Step size, default 1.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub safeguard: Safeguard,
    #[serde(default)]
    pub label: Option<String>,
}

impl DqnSolverSpec {
    pub fn new(variant: Variant) -> Self {
        DqnSolverSpec {
            variant,
            alpha: None,
            theta: None,
            epsilon: None,
            delta: None,
            safeguard: Safeguard::Auto,
            label: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PmmSolverSpec {
    pub variant: PmmVariant,
    /// Dual step size, default 1.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub eps_pmm: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub dual_beta_scaling: bool,
    #[serde(default)]
    pub label: Option<String>,
}

impl PmmSolverSpec {
    pub fn new(variant: PmmVariant) -> Self {
        PmmSolverSpec {
            variant,
            beta: None,
            eps_pmm: None,
            theta: None,
            rho: None,
            dual_beta_scaling: false,
            label: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum SolverSpec {
    Dqn(DqnSolverSpec),
    Pmm(PmmSolverSpec),
}

impl SolverSpec {
    pub fn label(&self) -> String {
        match self {
            SolverSpec::Dqn(s) => s.label.clone().unwrap_or_else(|| s.variant.name().into()),
            SolverSpec::Pmm(s) => s.label.clone().unwrap_or_else(|| s.variant.name().into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub graph: GraphSpec,
    pub problem: ProblemSpec,
    pub solvers: Vec<SolverSpec>,
    pub max_iter: usize,
    /// Early stop on relative error against the exact solution.
    #[serde(default)]
    pub stop_rel_err: Option<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(Error::InvalidParameter(
                "experiment needs at least one solver".into(),
            ));
        }
        if self.problem.kind == ProblemKind::Logistic && self.problem.p < 2 {
            return Err(Error::InvalidParameter(
                "logistic problems need p >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Instantiates a DQN solver entry against a concrete problem/network.
pub fn resolve_dqn_config(
    spec: &DqnSolverSpec,
    problem: &dyn CostModel,
    weights: &WeightMatrix,
    kind: ProblemKind,
    max_iter: usize,
    stop_rel_err: Option<f64>,
) -> Result<DqnConfig> {
    let theta = spec
        .theta
        .unwrap_or(if spec.variant.is_nn() { 1.0 } else { 0.0 });
    let alpha = spec.alpha.unwrap_or(1.0 / (100.0 * problem.lipschitz()));
    let rho = match spec.safeguard {
        Safeguard::Off => f64::INFINITY,
        Safeguard::Rho(r) => r,
        Safeguard::Auto => {
            if kind != ProblemKind::Quadratic && spec.variant == Variant::Dqn1 {
                safeguard_rho(
                    alpha,
                    problem.mu(),
                    problem.lipschitz(),
                    weights.w_min,
                    weights.w_max,
                    theta,
                    0.0,
                )?
            } else {
                f64::INFINITY
            }
        }
    };
    Ok(DqnConfig {
        variant: spec.variant,
        alpha,
        theta,
        epsilon: spec.epsilon.unwrap_or(1.0),
        rho,
        delta: spec.delta.unwrap_or(0.0),
        max_iter,
        stop_tol: 0.0,
        stop_rel_err,
    })
}

pub fn resolve_pmm_config(
    spec: &PmmSolverSpec,
    max_iter: usize,
    stop_rel_err: Option<f64>,
) -> PmmConfig {
    PmmConfig {
        variant: spec.variant,
        beta: spec.beta.unwrap_or(1.0),
        eps_pmm: spec.eps_pmm.unwrap_or(10.0),
        theta: spec.theta.unwrap_or(0.0),
        rho: spec.rho.unwrap_or(f64::INFINITY),
        dual_beta_scaling: spec.dual_beta_scaling,
        max_iter,
        stop_tol: stop_rel_err.unwrap_or(0.0),
    }
}

// ---------------------------------------------------------------------------
// Derived constants & manifest
// ---------------------------------------------------------------------------

/// Constants of the convergence theory evaluated for one experiment, using
/// the first DQN entry's `(alpha, theta)` (or the defaults) and the
/// mid-range `delta`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DerivedConstants {
    pub mu: f64,
    pub lipschitz: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub lambda_1: f64,
    pub lambda_n: f64,
    pub alpha: f64,
    pub theta: f64,
    pub mu_tilde: f64,
    pub l_tilde: f64,
    pub delta: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub beta_dir: f64,
    pub xi: f64,
    pub gamma: f64,
    pub t: f64,
    pub h_alpha: f64,
    pub alpha_max_exact: f64,
    pub y_star: Vec<f64>,
}

pub fn derive_constants(
    config: &ExperimentConfig,
    problem: &dyn CostModel,
    weights: &WeightMatrix,
    y_star: &DVector<f64>,
) -> Result<DerivedConstants> {
    let (mu, l) = (problem.mu(), problem.lipschitz());
    let (alpha, theta) = config
        .solvers
        .iter()
        .find_map(|s| match s {
            SolverSpec::Dqn(d) if !d.variant.is_nn() => Some((
                d.alpha.unwrap_or(1.0 / (100.0 * l)),
                d.theta.unwrap_or(0.0),
            )),
            _ => None,
        })
        .unwrap_or((1.0 / (100.0 * l), 0.0));
    let delta = 1.0 / (2.0 * (alpha * l + (1.0 + theta) * (1.0 - weights.w_min)));
    let rho = safeguard_rho(alpha, mu, l, weights.w_min, weights.w_max, theta, delta)?;
    let ts = theoretical_step(alpha, mu, l, weights.w_min, weights.w_max, theta, delta, rho)?;
    let (mu_tilde, l_tilde) = tilde_constants(alpha, mu, l, weights.w_min);
    Ok(DerivedConstants {
        mu,
        lipschitz: l,
        w_min: weights.w_min,
        w_max: weights.w_max,
        lambda_1: weights.lambda_1,
        lambda_n: weights.lambda_n,
        alpha,
        theta,
        mu_tilde,
        l_tilde,
        delta,
        rho,
        epsilon: ts.epsilon,
        beta_dir: direction_bound_beta(alpha, mu, weights.w_min, weights.w_max, theta, rho),
        xi: ts.xi,
        gamma: gamma_bound(alpha, mu, weights.w_min, theta),
        t: inexact_newton_t(alpha, mu, l, weights.w_min, theta, rho),
        h_alpha: h_alpha(mu, l, alpha),
        alpha_max_exact: dqn2_alpha_condition(mu, l, weights.w_min, weights.lambda_n),
        y_star: y_star.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub derived: DerivedConstants,
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

pub struct SolverRun {
    pub label: String,
    pub trace: Trace,
    pub csv_path: PathBuf,
}

pub struct ExperimentOutput {
    pub out_dir: PathBuf,
    pub runs: Vec<SolverRun>,
    pub manifest: Manifest,
    pub y_star: DVector<f64>,
}

/// Runs every configured solver from the zero initial vector and writes one
/// CSV per solver plus `manifest.json` into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    config.validate()?;
    let topo = generate_connected_geometric(config.graph.n, config.graph.seed)?;
    let weights = metropolis_weights(&topo)?;
    let problem = config.problem.build(config.graph.n)?;
    let y_star = exact_solution(problem.as_ref())?;
    let derived = derive_constants(config, problem.as_ref(), &weights, &y_star)?;

    fs::create_dir_all(out_dir)?;
    let mut runs = Vec::with_capacity(config.solvers.len());
    let mut used_labels: Vec<String> = Vec::new();
    for spec in &config.solvers {
        let mut label = spec.label();
        let dupes = used_labels.iter().filter(|l| **l == label).count();
        used_labels.push(label.clone());
        if dupes > 0 {
            label = format!("{label}-{}", dupes + 1);
        }
        let trace = match spec {
            SolverSpec::Dqn(d) => {
                let solver_config = resolve_dqn_config(
                    d,
                    problem.as_ref(),
                    &weights,
                    config.problem.kind,
                    config.max_iter,
                    config.stop_rel_err,
                )?;
                let x0 = BlockVector::zeros(config.graph.n, config.problem.p);
                dqn_run(problem.as_ref(), &weights, &solver_config, x0, Some(&y_star))
                    .map(|(_, t)| t)
            }
            SolverSpec::Pmm(p) => {
                let solver_config = resolve_pmm_config(p, config.max_iter, config.stop_rel_err);
                pmm_run(problem.as_ref(), &weights, &solver_config, Some(&y_star))
                    .map(|(_, t)| t)
            }
        }
        .map_err(|e| Error::Solver {
            context: label.clone(),
            source: Box::new(e),
        })?;
        let csv_path = out_dir.join(format!("{label}.csv"));
        fs::write(&csv_path, trace.to_csv_string())?;
        runs.push(SolverRun {
            label,
            trace,
            csv_path,
        });
    }

    let manifest = Manifest {
        config: config.clone(),
        derived,
    };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(ExperimentOutput {
        out_dir: out_dir.to_path_buf(),
        runs,
        manifest,
        y_star,
    })
}

// ---------------------------------------------------------------------------
// Beta sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SweepPoint {
    pub beta: f64,
    /// Final relative error; `inf` when the run diverged.
    pub rel_err: f64,
    pub iterations: usize,
}

/// `10^lo, 10^(lo+step), ..., 10^hi`.
pub fn log_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let e = lo + step * k as f64;
        if e > hi + 1e-12 {
            break;
        }
        out.push(10f64.powf(e));
        k += 1;
    }
    out
}

/// The half-decade grid `{10^-4, 10^-3.5, ..., 10^4}`.
pub fn half_decade_grid() -> Vec<f64> {
    log_grid(-4.0, 4.0, 0.5)
}

/// Runs one PMM variant across the beta grid, recording the final relative
/// error for each point; divergence counts as `inf` rather than aborting
/// the sweep.
pub fn sweep_beta(
    problem: &dyn CostModel,
    weights: &WeightMatrix,
    base: &PmmConfig,
    grid: &[f64],
    reference: &DVector<f64>,
) -> Vec<SweepPoint> {
    grid.iter()
        .map(|&beta| {
            let config = PmmConfig {
                beta,
                ..base.clone()
            };
            match pmm_run(problem, weights, &config, Some(reference)) {
                Ok((state, trace)) => SweepPoint {
                    beta,
                    rel_err: trace.final_rel_err(),
                    iterations: state.k,
                },
                Err(_) => SweepPoint {
                    beta,
                    rel_err: f64::INFINITY,
                    iterations: 0,
                },
            }
        })
        .collect()
}

pub fn best_beta(points: &[SweepPoint]) -> Option<SweepPoint> {
    points
        .iter()
        .copied()
        .filter(|pt| pt.rel_err.is_finite())
        .min_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

fn dqn_nn_suite() -> Vec<SolverSpec> {
    [
        Variant::Dgd,
        Variant::Dqn0,
        Variant::Dqn1,
        Variant::Dqn2,
        Variant::Nn0,
        Variant::Nn1,
        Variant::Nn2,
    ]
    .into_iter()
    .map(|v| SolverSpec::Dqn(DqnSolverSpec::new(v)))
    .collect()
}

/// The six DQN/NN variants with an explicit penalty parameter override.
fn variant_suite(alpha: f64) -> Vec<SolverSpec> {
    [
        Variant::Dqn0,
        Variant::Dqn1,
        Variant::Dqn2,
        Variant::Nn0,
        Variant::Nn1,
        Variant::Nn2,
    ]
    .into_iter()
    .map(|v| {
        SolverSpec::Dqn(DqnSolverSpec {
            alpha: Some(alpha),
            ..DqnSolverSpec::new(v)
        })
    })
    .collect()
}

fn pmm_comparison_suite() -> Vec<SolverSpec> {
    let mut solvers: Vec<SolverSpec> = [Variant::Dqn0, Variant::Dqn1, Variant::Dqn2]
        .into_iter()
        .map(|v| SolverSpec::Dqn(DqnSolverSpec::new(v)))
        .collect();
    solvers.extend(
        [PmmVariant::Pmm0, PmmVariant::Pmm1, PmmVariant::Pmm2]
            .into_iter()
            .map(|v| {
                // the beta-scaled dual ascent is the form that converges at
                // practical rates; beta = 100 sits mid-grid and satisfies
                // the correction's validity condition on these instances
                SolverSpec::Pmm(PmmSolverSpec {
                    beta: Some(100.0),
                    dual_beta_scaling: true,
                    ..PmmSolverSpec::new(v)
                })
            }),
    );
    solvers
}

/// Named desk-scale convergence studies: `fig1`
/// (n=30 quadratic p=4), `fig2` (n=400 quadratic p=3), `fig3` (n=30
/// logistic p=4), `fig4` (n=200 logistic p=4), `fig5`/`fig6` (n=30
/// quadratic, PMM-DQN vs DQN).
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let quadratic = |p, seed| ProblemSpec {
        kind: ProblemKind::Quadratic,
        p,
        seed,
        samples: default_samples(),
        tau: default_tau(),
        noise_sd: default_noise_sd(),
    };
    let logistic = |p, seed| ProblemSpec {
        kind: ProblemKind::Logistic,
        p,
        seed,
        samples: 2,
        tau: default_tau(),
        noise_sd: 0.1,
    };
    let config = |name: &str, n, seed, problem, solvers| ExperimentConfig {
        name: name.into(),
        graph: GraphSpec { n, seed },
        problem,
        solvers,
        max_iter: 10_000,
        stop_rel_err: Some(1e-8),
    };
    Ok(match name {
        "fig1" => {
            // a small penalty parameter pushes the saturation floor below
            // 1e-4, so the DQN-vs-NN iteration comparison is visible before
            // the curves flatten; the budget covers the slowest variant
            let mut c = config("fig1", 30, 1, quadratic(4, 1), variant_suite(5e-7));
            c.max_iter = 400_000;
            c.stop_rel_err = Some(1e-4);
            c
        }
        "fig2" => config("fig2", 400, 2, quadratic(3, 2), dqn_nn_suite()),
        "fig3" => {
            // alpha = 2.5e-4 keeps the penalty floor below 1e-3 while the
            // unsafeguarded DQN-1 iteration still diverges on this instance
            let mut c = config("fig3", 30, 1, logistic(4, 1), variant_suite(2.5e-4));
            c.max_iter = 100_000;
            c.stop_rel_err = Some(1e-3);
            c
        }
        "fig4" => config("fig4", 200, 4, logistic(4, 4), dqn_nn_suite()),
        "fig5" => config("fig5", 30, 5, quadratic(4, 5), pmm_comparison_suite()),
        "fig6" => config("fig6", 30, 6, quadratic(4, 6), pmm_comparison_suite()),
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown preset `{other}` (expected fig1..fig6)"
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::tests::two_node;
    use tempfile::tempdir;

    #[test]
    fn exact_solution_two_node() {
        let (q, _) = two_node();
        let y = exact_solution(&q).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-12);
        // self-check: aggregate gradient vanishes
        assert!(aggregate_gradient(&q, &y).norm() < 1e-10);
    }

    #[test]
    fn exact_solution_common_minimizer() {
        let q = crate::problems::QuadraticProblem::new(
            vec![
                DMatrix::from_element(1, 1, 3.0),
                DMatrix::from_element(1, 1, 7.0),
            ],
            vec![DVector::from_element(1, 4.0), DVector::from_element(1, 4.0)],
        )
        .unwrap();
        let y = exact_solution(&q).unwrap();
        assert!((y[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_solution_two_node() {
        let (q, w) = two_node();
        let model = PenaltyModel::new(&q, &w, 0.1, 0.0).unwrap();
        let x = penalty_solution(&model).unwrap();
        assert!((x.blocks[0][0] - 5.0 / 3.0).abs() < 1e-10);
        assert!((x.blocks[1][0] - 13.0 / 6.0).abs() < 1e-10);
        assert!(phi_gradient(&model, &x).norm() < 1e-9);
    }

    #[test]
    fn penalty_solution_approaches_exact_as_alpha_vanishes() {
        let (q, w) = two_node();
        let model = PenaltyModel::new(&q, &w, 1e-6, 0.0).unwrap();
        let x = penalty_solution(&model).unwrap();
        for b in &x.blocks {
            assert!((b[0] - 2.0).abs() < 1e-4);
        }
    }

    #[test]
    fn exact_solution_logistic_gradient_check() {
        let l = generate_logistic(6, 2, 3, 9, 1.0, 0.1).unwrap();
        let y = exact_solution(&l).unwrap();
        assert!(aggregate_gradient(&l, &y).norm() < 1e-10);
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            name: "small".into(),
            graph: GraphSpec { n: 8, seed: 3 },
            problem: ProblemSpec {
                kind: ProblemKind::Quadratic,
                p: 2,
                seed: 3,
                samples: 2,
                tau: 1.0,
                noise_sd: 0.1,
            },
            solvers: dqn_nn_suite(),
            max_iter: 40,
            stop_rel_err: None,
        }
    }

    fn strip_wall(csv: &str) -> String {
        csv.lines()
            .map(|l| l.rsplit_once(',').unwrap().0)
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn experiment_writes_one_csv_per_solver_and_manifest() {
        let dir = tempdir().unwrap();
        let out = run_experiment(&small_config(), dir.path()).unwrap();
        assert_eq!(out.runs.len(), 7);
        for run in &out.runs {
            assert!(run.csv_path.exists(), "{}", run.label);
        }
        assert!(dir.path().join("manifest.json").exists());
        assert!(dir.path().join("dgd.csv").exists());
        assert!(dir.path().join("dqn-2.csv").exists());
    }

    #[test]
    fn experiment_is_deterministic_modulo_wall_time() {
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        let config = small_config();
        run_experiment(&config, d1.path()).unwrap();
        run_experiment(&config, d2.path()).unwrap();
        for name in ["dgd.csv", "dqn-0.csv", "dqn-1.csv", "dqn-2.csv", "nn-2.csv"] {
            let a = fs::read_to_string(d1.path().join(name)).unwrap();
            let b = fs::read_to_string(d2.path().join(name)).unwrap();
            assert_eq!(strip_wall(&a), strip_wall(&b), "{name}");
        }
    }

    #[test]
    fn manifest_replay_reproduces_the_run() {
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        run_experiment(&small_config(), d1.path()).unwrap();
        let manifest = load_manifest(&d1.path().join("manifest.json")).unwrap();
        assert_eq!(manifest.config, small_config());
        run_experiment(&manifest.config, d2.path()).unwrap();
        let a = fs::read_to_string(d1.path().join("dqn-1.csv")).unwrap();
        let b = fs::read_to_string(d2.path().join("dqn-1.csv")).unwrap();
        assert_eq!(strip_wall(&a), strip_wall(&b));
    }

    #[test]
    fn duplicate_solver_labels_are_suffixed() {
        let dir = tempdir().unwrap();
        let mut config = small_config();
        config.solvers = vec![
            SolverSpec::Dqn(DqnSolverSpec::new(Variant::Dqn0)),
            SolverSpec::Dqn(DqnSolverSpec {
                alpha: Some(1e-4),
                ..DqnSolverSpec::new(Variant::Dqn0)
            }),
        ];
        config.max_iter = 5;
        let out = run_experiment(&config, dir.path()).unwrap();
        assert_eq!(out.runs[0].label, "dqn-0");
        assert_eq!(out.runs[1].label, "dqn-0-2");
    }

    #[test]
    fn auto_safeguard_policy() {
        let topo = generate_connected_geometric(8, 3).unwrap();
        let w = metropolis_weights(&topo).unwrap();
        let quad = generate_quadratic(8, 2, 3);
        let logi = generate_logistic(8, 2, 2, 3, 1.0, 0.1).unwrap();
        let spec1 = DqnSolverSpec::new(Variant::Dqn1);
        let spec2 = DqnSolverSpec::new(Variant::Dqn2);
        let c = resolve_dqn_config(&spec1, &quad, &w, ProblemKind::Quadratic, 10, None).unwrap();
        assert!(c.rho.is_infinite());
        let c = resolve_dqn_config(&spec1, &logi, &w, ProblemKind::Logistic, 10, None).unwrap();
        assert!(c.rho.is_finite() && c.rho > 0.0);
        let c = resolve_dqn_config(&spec2, &logi, &w, ProblemKind::Logistic, 10, None).unwrap();
        assert!(c.rho.is_infinite());
        // alpha default
        assert!((c.alpha - 1.0 / (100.0 * logi.lipschitz())).abs() < 1e-18);
    }

    #[test]
    fn grid_matches_half_decade_spec() {
        let g = half_decade_grid();
        assert_eq!(g.len(), 17);
        assert!((g[0] - 1e-4).abs() < 1e-16);
        assert!((g[8] - 1.0).abs() < 1e-12);
        assert!((g[16] - 1e4).abs() < 1e-8);
    }

    #[test]
    fn sweep_tolerates_divergence_and_picks_best() {
        let (q, w) = two_node();
        let y = DVector::from_element(1, 2.0);
        let base = PmmConfig {
            stop_tol: 1e-10,
            ..PmmConfig::new(PmmVariant::Pmm0, 1.0, 400)
        };
        let points = sweep_beta(&q, &w, &base, &log_grid(-2.0, 2.0, 1.0), &y);
        assert_eq!(points.len(), 5);
        let best = best_beta(&points).unwrap();
        assert!(best.rel_err <= 1e-8);
    }

    #[test]
    fn presets_have_stated_shapes() {
        let fig1 = preset("fig1").unwrap();
        assert_eq!(fig1.graph.n, 30);
        assert_eq!(fig1.problem.p, 4);
        assert_eq!(fig1.problem.kind, ProblemKind::Quadratic);
        assert_eq!(fig1.solvers.len(), 6);
        assert_eq!(fig1.stop_rel_err, Some(1e-4));
        let fig4 = preset("fig4").unwrap();
        assert_eq!(fig4.graph.n, 200);
        assert_eq!(fig4.problem.kind, ProblemKind::Logistic);
        let fig5 = preset("fig5").unwrap();
        assert_eq!(fig5.solvers.len(), 6);
        assert!(preset("fig9").is_err());
    }
}
