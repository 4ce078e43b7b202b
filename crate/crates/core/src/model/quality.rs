use serde::{Deserialize, Serialize};

use super::{dims, ConicQp, Result};
use crate::sparse::{dot, norm_inf};

/// KKT residuals and objective of a primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityMetrics {
    pub objective: f64,
    /// `‖s‖∞` over the zero-cone block, with `s = b - Ax`.
    pub max_eq_viol: f64,
    /// `‖min(s, 0)‖∞` over the nonnegative block.
    pub max_ineq_viol: f64,
    /// `‖Px + Aᵀy + c‖∞`.
    pub dual_residual_inf: f64,
    /// `|sᵀy|` over the nonnegative block.
    pub complementarity: f64,
    pub l2_to_reference: Option<f64>,
}

impl QualityMetrics {
    pub fn max_violation(&self) -> f64 {
        self.max_eq_viol.max(self.max_ineq_viol)
    }
}

pub fn quality(cqp: &ConicQp, x: &[f64], y: &[f64], reference: Option<(&[f64], &[f64])>) -> Result<QualityMetrics> {
    dims("x", cqp.n(), x.len())?;
    dims("y", cqp.m(), y.len())?;
    let ax = cqp.a.spmv(x)?;
    let s: Vec<f64> = cqp.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let (s_zero, s_nonneg) = s.split_at(cqp.cone.zero);
    let y_nonneg = &y[cqp.cone.zero..];

    let px = cqp.p.spmv(x)?;
    let aty = cqp.a.spmv_t(y)?;
    let dual: Vec<f64> = px.iter().zip(&aty).zip(&cqp.c).map(|((p, a), c)| p + a + c).collect();

    let l2_to_reference = match reference {
        Some((xr, yr)) => {
            dims("reference x", cqp.n(), xr.len())?;
            dims("reference y", cqp.m(), yr.len())?;
            let dx: Vec<f64> = x.iter().zip(xr).map(|(a, b)| a - b).collect();
            let dy: Vec<f64> = y.iter().zip(yr).map(|(a, b)| a - b).collect();
            Some((dot(&dx, &dx) + dot(&dy, &dy)).sqrt())
        }
        None => None,
    };

    Ok(QualityMetrics {
        objective: 0.5 * dot(x, &px) + dot(&cqp.c, x),
        max_eq_viol: norm_inf(s_zero),
        max_ineq_viol: s_nonneg.iter().fold(0.0, |m, &v| m.max((-v).max(0.0))),
        dual_residual_inf: norm_inf(&dual),
        complementarity: dot(s_nonneg, y_nonneg).abs(),
        l2_to_reference,
    })
}
