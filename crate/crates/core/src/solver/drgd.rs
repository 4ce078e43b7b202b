use super::dr::reflect_and_update;
use super::{drive, IterateState, Result, SolveReport, SolverConfig, SolverError, StepMode};
use crate::model::MonotoneData;
use crate::sparse::dot;

/// `η̄ = ρ / σ²_max(I+M)`.
///
/// The general cap is `ρ·μ/σ²_max` with `μ` the strong-monotonicity constant
/// of `I + M`; since `M + Mᵀ ⪰ 0`, `μ ≥ 1`.
pub fn step_cap(data: &MonotoneData, rho: f64) -> f64 {
    let s = data.sigma_max();
    rho / (s * s)
}

/// Minimizer of `η ↦ f(ũ − ηt)` for `f(ũ) = ½‖(I+M)ũ − r‖²`, i.e.
/// `‖t‖² / ‖(I+M)t‖²`. Independent of `r` because `t` is the gradient.
pub fn exact_linesearch_step(t: &[f64], data: &MonotoneData) -> Result<f64> {
    data.check_len("direction", t.len())?;
    let tt = dot(t, t);
    if tt == 0.0 {
        return Err(SolverError::ZeroDirection);
    }
    let bt = data.i_plus_m.spmv(t)?;
    Ok(tt / dot(&bt, &bt))
}

/// One outer step of the gradient variant: `cfg.steps_per_iter` descent steps
/// on `ũ`, then the same projection and `w` update as splitting.
///
/// A zero gradient gives a zero step (logged as `η = 0`) and the outer
/// iteration proceeds.
pub fn drgd_iteration(
    data: &MonotoneData,
    cfg: &SolverConfig,
    state: &mut IterateState,
    mut step_log: Option<&mut Vec<f64>>,
) -> Result<f64> {
    let b = &data.i_plus_m;
    let cap = step_cap(data, cfg.safeguard_rho);
    let dim = data.dim();
    let mut r = vec![0.0; dim];
    let mut t = vec![0.0; dim];
    let mut bt = vec![0.0; dim];
    for _ in 0..cfg.steps_per_iter {
        b.spmv_into(&state.u_tilde, &mut r)?;
        for ((ri, w), q) in r.iter_mut().zip(&state.w).zip(&data.q) {
            *ri -= w - q;
        }
        b.spmv_t_into(&r, &mut t)?;
        let tt = dot(&t, &t);
        let eta = if tt == 0.0 {
            0.0
        } else {
            let raw = match cfg.step_mode {
                StepMode::ExactLineSearch => {
                    b.spmv_into(&t, &mut bt)?;
                    tt / dot(&bt, &bt)
                }
                StepMode::Fixed(eta) => eta,
            };
            raw.min(cap)
        };
        for (u, ti) in state.u_tilde.iter_mut().zip(&t) {
            *u -= eta * ti;
        }
        if let Some(log) = step_log.as_deref_mut() {
            log.push(eta);
        }
    }
    Ok(reflect_and_update(data, state))
}

/// Gradient-step splitting; no factorization anywhere. `warm = None` starts
/// from `w⁰ = 0, ũ⁰ = 0`.
pub fn drgd_solve(data: &MonotoneData, cfg: &SolverConfig, warm: Option<&IterateState>) -> Result<SolveReport> {
    cfg.validate()?;
    let state = match warm {
        Some(s) => {
            s.check(data.dim())?;
            s.clone()
        }
        None => IterateState::cold(data.dim()),
    };
    drive(data, cfg, state, |s, log| drgd_iteration(data, cfg, s, log))
}

#[cfg(test)]
mod tests {
    use super::super::tests::one_var;
    use super::super::SolveStatus;
    use super::*;
    use crate::model::{ConeSpec, ConicQp};
    use crate::sparse::CsrMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data_with(p: CsrMatrix, a: CsrMatrix, cone: ConeSpec) -> MonotoneData {
        let (n, m) = (p.nrows(), a.nrows());
        let qp = ConicQp::new(p, vec![0.0; n], a, vec![0.0; m], cone).unwrap();
        MonotoneData::assemble(&qp).unwrap()
    }

    #[test]
    fn one_variable_closed_form() {
        let r = drgd_solve(&one_var(), &SolverConfig::default(), None).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4);
        assert!((r.y[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn exact_step_identity_operator() {
        // P = 0 and no constraints: I + M = I.
        let data = data_with(CsrMatrix::zeros(2, 2), CsrMatrix::zeros(0, 2), ConeSpec::new(0, 0));
        assert_eq!(exact_linesearch_step(&[0.3, -1.0], &data).unwrap(), 1.0);
    }

    #[test]
    fn exact_step_scaled_identity() {
        // P = I gives I + M = diag(2, 2).
        let data = data_with(CsrMatrix::identity(2), CsrMatrix::zeros(0, 2), ConeSpec::new(0, 0));
        assert_eq!(exact_linesearch_step(&[1.0, 0.0], &data).unwrap(), 0.25);
    }

    #[test]
    fn exact_step_rejects_zero() {
        assert!(matches!(exact_linesearch_step(&[0.0, 0.0], &one_var()), Err(SolverError::ZeroDirection)));
    }

    #[test]
    fn exact_step_beats_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = CsrMatrix::diagonal(&[1.0, 0.5, 2.0]);
        let a = CsrMatrix::from_dense(2, 3, &[1.0, -1.0, 0.5, 0.0, 2.0, 1.0]).unwrap();
        let data = data_with(p, a, ConeSpec::new(1, 1));
        let b = &data.i_plus_m;
        let f = |u: &[f64], r: &[f64]| {
            let bu = b.spmv(u).unwrap();
            0.5 * bu.iter().zip(r).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
        };
        let u: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let res: Vec<f64> = b.spmv(&u).unwrap().iter().zip(&r).map(|(x, y)| x - y).collect();
        let t = b.spmv_t(&res).unwrap();
        let eta = exact_linesearch_step(&t, &data).unwrap();
        let at = |e: f64| f(&u.iter().zip(&t).map(|(x, g)| x - e * g).collect::<Vec<_>>(), &r);
        let best = at(eta);
        for _ in 0..50 {
            let probe = rng.random_range(0.0..3.0 * eta);
            assert!(best <= at(probe) + 1e-14);
        }
    }

    #[test]
    fn exact_step_never_below_inverse_sigma_squared() {
        // ‖Bt‖ ≤ σ‖t‖, so η* ≥ 1/σ² and the cap always binds.
        let data = data_with(
            CsrMatrix::diagonal(&[1.0, 3.0]),
            CsrMatrix::from_dense(1, 2, &[1.0, 1.0]).unwrap(),
            ConeSpec::new(0, 1),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let t: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eta = exact_linesearch_step(&t, &data).unwrap();
            assert!(eta >= step_cap(&data, 0.99));
        }
    }

    #[test]
    fn more_gradient_steps_track_dr_more_closely() {
        let cfg = |k| SolverConfig { steps_per_iter: k, ..Default::default() };
        let data = one_var();
        let one = drgd_solve(&data, &cfg(1), None).unwrap();
        let ten = drgd_solve(&data, &cfg(10), None).unwrap();
        assert!(ten.iterations <= one.iterations);
    }

    #[test]
    fn zero_gradient_takes_zero_step() {
        let data = one_var();
        let mut s = IterateState::cold(2);
        // ũ = (I+M)⁻¹(w − q) already: w = q, ũ = 0.
        s.w = data.q.clone();
        let mut log = vec![];
        let cfg = SolverConfig { steps_per_iter: 2, ..Default::default() };
        drgd_iteration(&data, &cfg, &mut s, Some(&mut log)).unwrap();
        assert_eq!(log, vec![0.0, 0.0]);
        assert_eq!(s.u_tilde, vec![0.0, 0.0]);
    }

    #[test]
    fn step_sizes_recorded_and_capped() {
        let cfg = SolverConfig { record_history: true, ..Default::default() };
        let data = one_var();
        let r = drgd_solve(&data, &cfg, None).unwrap();
        let steps = r.step_sizes.unwrap();
        assert_eq!(steps.len(), r.iterations);
        let cap = step_cap(&data, 0.99);
        assert!(steps.iter().all(|&e| e <= cap));
    }
}
