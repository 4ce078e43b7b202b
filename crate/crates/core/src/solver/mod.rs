//! Douglas-Rachford splitting for the monotone inclusion of a conic QP,
//! and the gradient-step variant that replaces the linear solve with
//! descent steps on `½‖(I+M)ũ − (w − q)‖²`.
//!
//! Both solvers share the same driver: one call to an iteration kernel per
//! outer step, the fixed-point residual `‖w⁺ − w‖₂` as the stopping test,
//! and a divergence guard.

mod dr;
mod drgd;
mod oracle;

pub use dr::{dr_iteration, dr_solve, DrWorkspace};
pub use drgd::{drgd_iteration, drgd_solve, exact_linesearch_step, step_cap};
pub use oracle::{dr_operator_apply, gradient_step_map, reflected_phi, wolfe_check, WolfeOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{quality, ModelError, MonotoneData, QualityMetrics};
use crate::sparse::{norm_inf, SparseError};

/// `‖w‖∞` beyond which a run is declared divergent.
const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("warm start has length {got}, expected {expected}")]
    WarmStart { expected: usize, got: usize },
    #[error("line search called with a zero direction")]
    ZeroDirection,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

pub type Result<T> = std::result::Result<T, SolverError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepMode {
    /// `η* = ‖t‖² / ‖(I+M)t‖²`, the minimizer along `−t`.
    ExactLineSearch,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub step_mode: StepMode,
    pub steps_per_iter: usize,
    /// The gradient step is capped at `safeguard_rho / σ²_max(I+M)`.
    pub safeguard_rho: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub record_history: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 50_000,
            step_mode: StepMode::ExactLineSearch,
            steps_per_iter: 1,
            safeguard_rho: 0.99,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            record_history: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SolverError::Config(msg.to_string()));
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        if self.steps_per_iter == 0 {
            return bad("steps_per_iter must be at least 1");
        }
        if !(self.safeguard_rho > 0.0 && self.safeguard_rho < 1.0) {
            return bad("safeguard_rho must lie in (0, 1)");
        }
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < 0.5 && 0.5 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return bad("Wolfe constants must satisfy 0 < c1 < 1/2 < c2 < 1");
        }
        if let StepMode::Fixed(eta) = self.step_mode {
            if !(eta > 0.0 && eta.is_finite()) {
                return bad("fixed step must be positive and finite");
            }
        }
        Ok(())
    }
}

/// Iterates `(ũ, u, w)`, each of length `n + m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateState {
    pub u_tilde: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

impl IterateState {
    /// `w⁰ = 0, ũ⁰ = 0`.
    pub fn cold(dim: usize) -> Self {
        Self { u_tilde: vec![0.0; dim], u: vec![0.0; dim], w: vec![0.0; dim] }
    }

    fn check(&self, dim: usize) -> Result<()> {
        for v in [&self.u_tilde, &self.u, &self.w] {
            if v.len() != dim {
                return Err(SolverError::WarmStart { expected: dim, got: v.len() });
            }
        }
        Ok(())
    }
}

/// State whose first linear solve reproduces `û = (x, y)` exactly:
/// `w⁰ = (I+M)û + q`, `ũ⁰ = û`, `u⁰ = Π(û)`.
pub fn warm_start_from_solution(data: &MonotoneData, x: &[f64], y: &[f64]) -> Result<IterateState> {
    data.check_len("warm start", x.len() + y.len())?;
    if x.len() != data.n {
        return Err(SolverError::WarmStart { expected: data.n, got: x.len() });
    }
    let u_hat: Vec<f64> = x.iter().chain(y).copied().collect();
    let mut w = data.i_plus_m.spmv(&u_hat)?;
    for (wi, qi) in w.iter_mut().zip(&data.q) {
        *wi += qi;
    }
    Ok(IterateState { u: data.project(&u_hat), u_tilde: u_hat, w })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Error,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterations: usize,
    pub state: IterateState,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub metrics: QualityMetrics,
    /// `‖w^{k+1} − w^k‖₂` per iteration.
    pub residual_history: Option<Vec<f64>>,
    /// Every gradient step length taken (DR-GD only).
    pub step_sizes: Option<Vec<f64>>,
    pub diagnostic: Option<String>,
}

impl SolveReport {
    pub fn final_residual(&self) -> Option<f64> {
        self.residual_history.as_ref().and_then(|h| h.last().copied())
    }
}

/// Runs `iterate` until the residual drops to `cfg.tol`.
///
/// On `MaxIter` the report carries the iterate with the smallest residual.
fn drive(
    data: &MonotoneData,
    cfg: &SolverConfig,
    mut state: IterateState,
    mut iterate: impl FnMut(&mut IterateState, Option<&mut Vec<f64>>) -> Result<f64>,
) -> Result<SolveReport> {
    let mut history = cfg.record_history.then(Vec::new);
    let mut steps = cfg.record_history.then(Vec::new);
    let mut best: Option<(f64, usize, IterateState)> = None;
    let mut status = SolveStatus::MaxIter;
    let mut diagnostic = None;
    let mut iterations = 0;

    for k in 1..=cfg.max_iter {
        let res = iterate(&mut state, steps.as_mut())?;
        iterations = k;
        if let Some(h) = history.as_mut() {
            h.push(res);
        }
        let w_inf = norm_inf(&state.w);
        if !res.is_finite() || !w_inf.is_finite() || state.u_tilde.iter().any(|v| !v.is_finite()) {
            status = SolveStatus::Error;
            diagnostic = Some(format!("non-finite iterate at iteration {k}"));
            break;
        }
        if w_inf > DIVERGENCE_BOUND {
            status = SolveStatus::Error;
            diagnostic = Some(format!("‖w‖∞ = {w_inf:e} exceeds {DIVERGENCE_BOUND:e} at iteration {k}"));
            break;
        }
        if res <= cfg.tol {
            status = SolveStatus::Converged;
            break;
        }
        if best.as_ref().is_none_or(|(r, _, _)| res < *r) {
            best = Some((res, k, state.clone()));
        }
    }

    if status == SolveStatus::MaxIter {
        if let Some((_, k, s)) = best {
            state = s;
            diagnostic = Some(format!("best residual at iteration {k}"));
        }
    }
    let (x, y) = state.u.split_at(data.n);
    let metrics = quality(&data.problem, x, y, None)?;
    Ok(SolveReport {
        status,
        iterations,
        x: x.to_vec(),
        y: y.to_vec(),
        state,
        metrics,
        residual_history: history,
        step_sizes: steps,
        diagnostic,
    })
}
