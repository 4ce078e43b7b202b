//! Operator-form expressions of the gradient variant, kept separate from the
//! solver kernels so they can serve as independent checks.

use serde::{Deserialize, Serialize};

use super::Result;
use crate::model::MonotoneData;
use crate::sparse::dot;

/// `Φ(w) = (I − ηBᵀB)ũ_prev + ηBᵀ(w − q)` with `B = I + M`: one gradient step
/// from `ũ_prev`, written as an affine map of `w`.
pub fn gradient_step_map(data: &MonotoneData, eta: f64, u_tilde_prev: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    data.check_len("u_tilde_prev", u_tilde_prev.len())?;
    data.check_len("w", w.len())?;
    let b = &data.i_plus_m;
    let btb_u = b.spmv_t(&b.spmv(u_tilde_prev)?)?;
    let shifted: Vec<f64> = w.iter().zip(&data.q).map(|(w, q)| w - q).collect();
    let bt_w = b.spmv_t(&shifted)?;
    Ok(u_tilde_prev.iter().zip(&btb_u).zip(&bt_w).map(|((u, g), h)| (u - eta * g) + eta * h).collect())
}

/// `(2Φ − Id)w`.
pub fn reflected_phi(data: &MonotoneData, eta: f64, u_tilde_prev: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let phi = gradient_step_map(data, eta, u_tilde_prev, w)?;
    Ok(phi.iter().zip(w).map(|(p, w)| 2.0 * p - w).collect())
}

/// `T(w) = ½(w + C(2Φ − Id)w)` with the reflection `C = 2Π − Id`.
pub fn dr_operator_apply(data: &MonotoneData, eta: f64, u_tilde_prev: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let z = reflected_phi(data, eta, u_tilde_prev, w)?;
    let pz = data.project(&z);
    Ok(w.iter().zip(&z).zip(&pz).map(|((w, z), p)| 0.5 * (w + (2.0 * p - z))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WolfeOutcome {
    pub sufficient_decrease: bool,
    pub curvature: bool,
    /// `f(ũ) − f(ũ⁺)`.
    pub decrease: f64,
    /// `c₁η‖∇f(ũ)‖²`.
    pub decrease_bound: f64,
    /// `∇f(ũ⁺)ᵀ∇f(ũ)`.
    pub curvature_lhs: f64,
    /// `c₂‖∇f(ũ)‖²`.
    pub curvature_rhs: f64,
}

impl WolfeOutcome {
    pub fn passed(&self) -> bool {
        self.sufficient_decrease && self.curvature
    }
}

/// Both Wolfe conditions for `f(ũ) = ½‖(I+M)ũ − (w − q)‖²` along `−∇f(ũ)`.
#[allow(clippy::too_many_arguments)]
pub fn wolfe_check(
    data: &MonotoneData,
    w: &[f64],
    u_tilde: &[f64],
    u_tilde_next: &[f64],
    eta: f64,
    c1: f64,
    c2: f64,
) -> Result<WolfeOutcome> {
    data.check_len("w", w.len())?;
    let target: Vec<f64> = w.iter().zip(&data.q).map(|(w, q)| w - q).collect();
    let eval = |u: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut r = data.i_plus_m.spmv(u)?;
        for (ri, ti) in r.iter_mut().zip(&target) {
            *ri -= ti;
        }
        Ok((0.5 * dot(&r, &r), data.i_plus_m.spmv_t(&r)?))
    };
    let (f0, g0) = eval(u_tilde)?;
    let (f1, g1) = eval(u_tilde_next)?;
    let gg = dot(&g0, &g0);
    let decrease = f0 - f1;
    let decrease_bound = c1 * eta * gg;
    let curvature_lhs = dot(&g1, &g0);
    let curvature_rhs = c2 * gg;
    Ok(WolfeOutcome {
        sufficient_decrease: decrease >= decrease_bound,
        curvature: curvature_lhs <= curvature_rhs,
        decrease,
        decrease_bound,
        curvature_lhs,
        curvature_rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::one_var;
    use super::super::{drgd_iteration, exact_linesearch_step, step_cap, IterateState, SolverConfig, StepMode};
    use super::*;
    use crate::model::{ConeSpec, ConicQp};
    use crate::sparse::{norm2, CsrMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> MonotoneData {
        let p = CsrMatrix::from_dense(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.5]).unwrap();
        let a = CsrMatrix::from_dense(3, 3, &[1.0, 1.0, 0.0, -1.0, 0.0, 2.0, 0.0, 0.3, 1.0]).unwrap();
        let qp = ConicQp::new(p, vec![1.0, -1.0, 0.5], a, vec![0.5, 1.0, -0.2], ConeSpec::new(1, 2)).unwrap();
        MonotoneData::assemble(&qp).unwrap()
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    fn gradient(data: &MonotoneData, w: &[f64], u: &[f64]) -> Vec<f64> {
        let mut r = data.i_plus_m.spmv(u).unwrap();
        for ((ri, w), q) in r.iter_mut().zip(w).zip(&data.q) {
            *ri -= w - q;
        }
        data.i_plus_m.spmv_t(&r).unwrap()
    }

    #[test]
    fn operator_matches_solver_update() {
        let data = small();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let eta = 0.7 * step_cap(&data, 0.99);
        let cfg = SolverConfig { step_mode: StepMode::Fixed(eta), ..Default::default() };
        for _ in 0..100 {
            let ut = rand_vec(&mut rng, 6);
            let w = rand_vec(&mut rng, 6);
            let expected = dr_operator_apply(&data, eta, &ut, &w).unwrap();
            let mut s = IterateState { u_tilde: ut, u: vec![0.0; 6], w };
            drgd_iteration(&data, &cfg, &mut s, None).unwrap();
            for (a, b) in s.w.iter().zip(&expected) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn free_cone_hand_expansion() {
        // P = I, c = 0, no constraints: B = 2I, C is the whole space, so
        // Φ(w) = (1 − 4η)ũ + 2ηw and T(w) = Φ(w).
        let qp = ConicQp::new(CsrMatrix::identity(2), vec![0.0; 2], CsrMatrix::zeros(0, 2), vec![], ConeSpec::new(0, 0))
            .unwrap();
        let data = MonotoneData::assemble(&qp).unwrap();
        let (eta, ut, w) = (0.1, [1.0, -2.0], [0.5, 3.0]);
        let t = dr_operator_apply(&data, eta, &ut, &w).unwrap();
        for i in 0..2 {
            let hand = (1.0 - 4.0 * eta) * ut[i] + 2.0 * eta * w[i];
            assert!((t[i] - hand).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_step_is_projection_only() {
        let data = small();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ut = rand_vec(&mut rng, 6);
        let w = rand_vec(&mut rng, 6);
        let t = dr_operator_apply(&data, 0.0, &ut, &w).unwrap();
        let z: Vec<f64> = ut.iter().zip(&w).map(|(u, w)| 2.0 * u - w).collect();
        let pz = data.project(&z);
        for i in 0..6 {
            assert!((t[i] - (w[i] + pz[i] - ut[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_step_satisfies_wolfe() {
        let data = small();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let w = rand_vec(&mut rng, 6);
            let ut = rand_vec(&mut rng, 6);
            let g = gradient(&data, &w, &ut);
            let eta = exact_linesearch_step(&g, &data).unwrap();
            let next: Vec<f64> = ut.iter().zip(&g).map(|(u, g)| u - eta * g).collect();
            let out = wolfe_check(&data, &w, &ut, &next, eta, 1e-4, 0.9).unwrap();
            assert!(out.passed(), "{out:?}");
        }
    }

    #[test]
    fn zero_step_decrease_holds_with_equality() {
        let data = small();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = rand_vec(&mut rng, 6);
        let ut = rand_vec(&mut rng, 6);
        let out = wolfe_check(&data, &w, &ut, &ut, 0.0, 1e-4, 0.9).unwrap();
        assert!(out.sufficient_decrease);
        assert_eq!(out.decrease, 0.0);
        // With a nonzero gradient, ∇f(ũ)ᵀ∇f(ũ) = ‖∇f‖² > c₂‖∇f‖²: curvature rejects η = 0.
        assert!(!out.curvature);
    }

    #[test]
    fn zero_step_at_stationary_point_passes() {
        let data = one_var();
        let w = data.q.clone();
        let out = wolfe_check(&data, &w, &[0.0, 0.0], &[0.0, 0.0], 0.0, 1e-4, 0.9).unwrap();
        assert!(out.passed());
    }

    #[test]
    fn oversized_step_fails_decrease() {
        let data = small();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cap = step_cap(&data, 0.99);
        let w = rand_vec(&mut rng, 6);
        let ut = rand_vec(&mut rng, 6);
        let g = gradient(&data, &w, &ut);
        let eta = 100.0 * cap;
        let next: Vec<f64> = ut.iter().zip(&g).map(|(u, g)| u - eta * g).collect();
        assert!(!wolfe_check(&data, &w, &ut, &next, eta, 1e-4, 0.9).unwrap().sufficient_decrease);
    }

    #[test]
    fn reflected_map_nonexpansive_under_cap() {
        let data = small();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let eta = step_cap(&data, 0.99);
        let ut = rand_vec(&mut rng, 6);
        for _ in 0..100 {
            let w1 = rand_vec(&mut rng, 6);
            let w2 = rand_vec(&mut rng, 6);
            let r1 = reflected_phi(&data, eta, &ut, &w1).unwrap();
            let r2 = reflected_phi(&data, eta, &ut, &w2).unwrap();
            let d: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| a - b).collect();
            let d0: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a - b).collect();
            assert!(norm2(&d) <= norm2(&d0) * (1.0 + 1e-10));
        }
    }
}
