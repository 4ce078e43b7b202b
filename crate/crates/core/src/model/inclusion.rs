use super::{dims, ConeSpec, ConicQp, Result};
use crate::sparse::{estimate_sigma_max, CsrMatrix, SpectralEstimate};

const SPECTRAL_TOL: f64 = 1e-10;
const SPECTRAL_MAX_ITER: usize = 50_000;

/// Operator data for `0 ∈ Mu + q + N_C(u)` with `u = (x, y)`,
/// `M = [[P, Aᵀ], [-A, 0]]`, `q = (c, b)` and `C = Rⁿ × K*`.
#[derive(Debug, Clone)]
pub struct MonotoneData {
    pub problem: ConicQp,
    pub m_op: CsrMatrix,
    pub i_plus_m: CsrMatrix,
    pub q: Vec<f64>,
    pub cone: ConeSpec,
    pub n: usize,
    pub m: usize,
    /// Cached largest singular value of `I + M`.
    pub spectral: SpectralEstimate,
}

impl MonotoneData {
    pub fn assemble(cqp: &ConicQp) -> Result<Self> {
        cqp.validate()?;
        let (n, m) = (cqp.n(), cqp.m());
        let mut t = Vec::with_capacity(cqp.p.nnz() + 2 * cqp.a.nnz());
        t.extend(cqp.p.triplets());
        for (r, j, v) in cqp.a.triplets() {
            t.push((j, n + r, v));
            t.push((n + r, j, -v));
        }
        let m_op = CsrMatrix::from_triplets(n + m, n + m, &t)?;
        let i_plus_m = m_op.add(&CsrMatrix::identity(n + m))?;
        let spectral = estimate_sigma_max(&i_plus_m, SPECTRAL_TOL, SPECTRAL_MAX_ITER);
        let q = cqp.c.iter().chain(&cqp.b).copied().collect();
        Ok(Self { problem: cqp.clone(), m_op, i_plus_m, q, cone: cqp.cone, n, m, spectral })
    }

    /// Length of `u = (x, y)`.
    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn sigma_max(&self) -> f64 {
        self.spectral.sigma_max
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        project_cone_dual(v, self.n, &self.cone)
    }

    pub fn project_in_place(&self, v: &mut [f64]) {
        for vi in &mut v[self.nonneg_range()] {
            *vi = vi.max(0.0);
        }
    }

    /// Coordinates of `u` dual to the nonnegative cone block.
    pub fn nonneg_range(&self) -> std::ops::Range<usize> {
        let start = self.n + self.cone.zero;
        start..start + self.cone.nonneg
    }

    pub fn check_len(&self, what: &'static str, len: usize) -> Result<()> {
        dims(what, self.dim(), len)
    }
}

/// Projection onto `C = Rⁿ × Free^{zero} × R₊^{nonneg}`.
pub fn project_cone_dual(v: &[f64], n: usize, cone: &ConeSpec) -> Vec<f64> {
    assert_eq!(v.len(), n + cone.rows(), "vector length must be n + m");
    let start = n + cone.zero;
    v.iter()
        .enumerate()
        .map(|(i, &x)| if i >= start { x.max(0.0) } else { x })
        .collect()
}
