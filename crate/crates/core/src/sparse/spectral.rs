use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dot, norm2, CsrMatrix};

/// Start-vector seed; fixed so step-size caps are reproducible.
const START_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub sigma_max: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

/// Largest singular value of `a` by power iteration on `AᵀA`.
///
/// Stops when the eigenvalue estimate changes by less than `tol` relative.
/// The Rayleigh quotient never exceeds the true `σ²_max`, so the estimate
/// approaches from below.
pub fn estimate_sigma_max(a: &CsrMatrix, tol: f64, max_iter: usize) -> SpectralEstimate {
    assert!(tol > 0.0, "tolerance must be positive");
    let n = a.ncols();
    if n == 0 || a.nnz() == 0 {
        return SpectralEstimate { sigma_max: 0.0, iterations_used: 0, converged: true };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut av = vec![0.0; a.nrows()];
    let mut atav = vec![0.0; n];
    let mut lambda = 0.0;
    for it in 1..=max_iter {
        a.spmv_into(&v, &mut av).expect("conforming");
        a.spmv_t_into(&av, &mut atav).expect("conforming");
        let next = dot(&v, &atav);
        let norm = norm2(&atav);
        if norm == 0.0 {
            return SpectralEstimate { sigma_max: 0.0, iterations_used: it, converged: true };
        }
        for (vi, wi) in v.iter_mut().zip(&atav) {
            *vi = wi / norm;
        }
        let change = (next - lambda).abs();
        lambda = next;
        if it > 1 && change <= tol * lambda.abs() {
            return SpectralEstimate { sigma_max: lambda.sqrt(), iterations_used: it, converged: true };
        }
    }
    SpectralEstimate { sigma_max: lambda.max(0.0).sqrt(), iterations_used: max_iter, converged: false }
}
