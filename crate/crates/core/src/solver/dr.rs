use super::{drive, IterateState, Result, SolveReport, SolverConfig};
use crate::model::MonotoneData;
use crate::sparse::Factorization;

/// Factorization of `I + M` plus scratch buffers, built once per problem.
#[derive(Debug, Clone)]
pub struct DrWorkspace {
    factor: Factorization,
    rhs: Vec<f64>,
    work: Vec<f64>,
}

impl DrWorkspace {
    pub fn new(data: &MonotoneData) -> Result<Self> {
        let dim = data.dim();
        Ok(Self { factor: Factorization::new(&data.i_plus_m)?, rhs: vec![0.0; dim], work: vec![0.0; dim] })
    }
}

/// One step of splitting:
///
/// ```text
/// ũ⁺ = (I+M)⁻¹(w − q)
/// u⁺ = Π(2ũ⁺ − w)
/// w⁺ = w + (u⁺ − ũ⁺)
/// ```
///
/// Returns `‖w⁺ − w‖₂`.
pub fn dr_iteration(data: &MonotoneData, ws: &mut DrWorkspace, state: &mut IterateState) -> Result<f64> {
    for ((r, w), q) in ws.rhs.iter_mut().zip(&state.w).zip(&data.q) {
        *r = w - q;
    }
    ws.factor.solve_into(&ws.rhs, &mut state.u_tilde, &mut ws.work)?;
    Ok(reflect_and_update(data, state))
}

/// Shared tail of both algorithms: the projection and the `w` update.
pub(super) fn reflect_and_update(data: &MonotoneData, state: &mut IterateState) -> f64 {
    for ((u, ut), w) in state.u.iter_mut().zip(&state.u_tilde).zip(&state.w) {
        *u = 2.0 * ut - w;
    }
    data.project_in_place(&mut state.u);
    let mut sq = 0.0;
    for ((w, u), ut) in state.w.iter_mut().zip(&state.u).zip(&state.u_tilde) {
        let d = u - ut;
        *w += d;
        sq += d * d;
    }
    sq.sqrt()
}

/// Splitting with a single up-front factorization. `warm = None` starts from
/// `w⁰ = 0`.
pub fn dr_solve(data: &MonotoneData, cfg: &SolverConfig, warm: Option<&IterateState>) -> Result<SolveReport> {
    cfg.validate()?;
    let state = match warm {
        Some(s) => {
            s.check(data.dim())?;
            s.clone()
        }
        None => IterateState::cold(data.dim()),
    };
    let mut ws = DrWorkspace::new(data)?;
    drive(data, cfg, state, |s, _| dr_iteration(data, &mut ws, s))
}
