//! Problem representations and the standard → conic transformation.
//!
//! A [`StandardQp`] carries equalities, inequalities and variable bounds
//! separately. [`to_conic`] merges them into a single `Ax + s = b` system
//! with `s` in a product of a zero cone (equalities) and a nonnegative cone
//! (everything else).

mod inclusion;
pub mod io;
mod quality;

pub use inclusion::{project_cone_dual, MonotoneData};
pub use quality::{quality, QualityMetrics};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparse::{dot, CsrMatrix, SparseError};

/// Random probes used for the PSD check on `P`.
const PSD_PROBES: usize = 20;
const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("P is not symmetric")]
    NotSymmetric,
    #[error("P is not positive semidefinite (probe curvature {0:e})")]
    NotPsd(f64),
    #[error("lower bound exceeds upper bound for variable {0}")]
    InvalidBounds(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// `min ½xᵀPx + cᵀx  s.t.  A_eq x = b_eq,  G x ≤ h,  l ≤ x ≤ u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardQp {
    pub p: CsrMatrix,
    pub c: Vec<f64>,
    pub a_eq: CsrMatrix,
    pub b_eq: Vec<f64>,
    pub g: CsrMatrix,
    pub h: Vec<f64>,
    /// Entries may be `-inf`.
    pub lower: Vec<f64>,
    /// Entries may be `+inf`.
    pub upper: Vec<f64>,
}

impl StandardQp {
    /// Problem with no constraints at all.
    pub fn unconstrained(p: CsrMatrix, c: Vec<f64>) -> Self {
        let n = c.len();
        Self {
            p,
            c,
            a_eq: CsrMatrix::zeros(0, n),
            b_eq: vec![],
            g: CsrMatrix::zeros(0, n),
            h: vec![],
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m_eq(&self) -> usize {
        self.b_eq.len()
    }

    pub fn m_ineq(&self) -> usize {
        self.h.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let px = self.p.spmv(x).expect("x has length n");
        0.5 * dot(x, &px) + dot(&self.c, x)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        dims("P rows", n, self.p.nrows())?;
        dims("P cols", n, self.p.ncols())?;
        dims("A_eq rows", self.m_eq(), self.a_eq.nrows())?;
        dims("A_eq cols", n, self.a_eq.ncols())?;
        dims("G rows", self.m_ineq(), self.g.nrows())?;
        dims("G cols", n, self.g.ncols())?;
        dims("lower bounds", n, self.lower.len())?;
        dims("upper bounds", n, self.upper.len())?;
        finite("c", &self.c)?;
        finite("b_eq", &self.b_eq)?;
        finite("h", &self.h)?;
        finite("P", self.p.values())?;
        finite("A_eq", self.a_eq.values())?;
        finite("G", self.g.values())?;
        for (j, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(ModelError::InvalidBounds(j));
            }
        }
        check_psd(&self.p)
    }
}

/// Sizes of the zero-cone block (first) and nonnegative block (second).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub zero: usize,
    pub nonneg: usize,
}

impl ConeSpec {
    pub fn new(zero: usize, nonneg: usize) -> Self {
        Self { zero, nonneg }
    }

    pub fn rows(&self) -> usize {
        self.zero + self.nonneg
    }
}

/// `min ½xᵀPx + cᵀx  s.t.  Ax + s = b,  s ∈ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicQp {
    pub p: CsrMatrix,
    pub c: Vec<f64>,
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub cone: ConeSpec,
}

impl ConicQp {
    pub fn new(p: CsrMatrix, c: Vec<f64>, a: CsrMatrix, b: Vec<f64>, cone: ConeSpec) -> Result<Self> {
        let qp = Self { p, c, a, b, cone };
        qp.validate()?;
        Ok(qp)
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let px = self.p.spmv(x).expect("x has length n");
        0.5 * dot(x, &px) + dot(&self.c, x)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        dims("P rows", n, self.p.nrows())?;
        dims("P cols", n, self.p.ncols())?;
        dims("A rows", self.m(), self.a.nrows())?;
        dims("A cols", n, self.a.ncols())?;
        dims("cone rows", self.m(), self.cone.rows())?;
        check_psd(&self.p)
    }
}

/// Where a conic constraint row came from in the standard form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowOrigin {
    Equality(usize),
    /// `A_eq[i] x ≤ b_eq[i]` half of a split equality.
    EqualityUpper(usize),
    /// `-A_eq[i] x ≤ -b_eq[i]` half of a split equality.
    EqualityLower(usize),
    Inequality(usize),
    LowerBound(usize),
    UpperBound(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EqualityEncoding {
    /// Equalities go to the zero cone.
    #[default]
    ZeroCone,
    /// Each equality becomes two opposite inequalities in the nonnegative
    /// cone, so the cone is purely `R₊^m`.
    PairedInequalities,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicForm {
    pub qp: ConicQp,
    /// One entry per conic row.
    pub origin: Vec<RowOrigin>,
}

pub fn to_conic(qp: &StandardQp) -> Result<ConicForm> {
    to_conic_with(qp, EqualityEncoding::ZeroCone)
}

/// Row order: equalities, then `G x ≤ h`, then finite lower bounds
/// (`-x_j ≤ -l_j`) by variable index, then finite upper bounds (`x_j ≤ u_j`).
pub fn to_conic_with(qp: &StandardQp, encoding: EqualityEncoding) -> Result<ConicForm> {
    qp.validate()?;
    let n = qp.n();
    let mut triplets = Vec::with_capacity(2 * qp.a_eq.nnz() + qp.g.nnz() + 2 * n);
    let mut b = Vec::new();
    let mut origin = Vec::new();
    let mut push_row = |entries: &mut dyn Iterator<Item = (usize, f64)>, rhs: f64, from: RowOrigin| {
        let row = b.len();
        triplets.extend(entries.map(|(j, v)| (row, j, v)));
        b.push(rhs);
        origin.push(from);
    };

    let zero = match encoding {
        EqualityEncoding::ZeroCone => {
            for i in 0..qp.m_eq() {
                push_row(&mut qp.a_eq.row(i), qp.b_eq[i], RowOrigin::Equality(i));
            }
            qp.m_eq()
        }
        EqualityEncoding::PairedInequalities => {
            for i in 0..qp.m_eq() {
                push_row(&mut qp.a_eq.row(i), qp.b_eq[i], RowOrigin::EqualityUpper(i));
                push_row(&mut qp.a_eq.row(i).map(|(j, v)| (j, -v)), -qp.b_eq[i], RowOrigin::EqualityLower(i));
            }
            0
        }
    };
    for i in 0..qp.m_ineq() {
        push_row(&mut qp.g.row(i), qp.h[i], RowOrigin::Inequality(i));
    }
    for (j, &l) in qp.lower.iter().enumerate() {
        if l.is_finite() {
            push_row(&mut std::iter::once((j, -1.0)), -l, RowOrigin::LowerBound(j));
        }
    }
    for (j, &u) in qp.upper.iter().enumerate() {
        if u.is_finite() {
            push_row(&mut std::iter::once((j, 1.0)), u, RowOrigin::UpperBound(j));
        }
    }

    let m = b.len();
    let a = CsrMatrix::from_triplets(m, n, &triplets)?;
    let cone = ConeSpec::new(zero, m - zero);
    Ok(ConicForm { qp: ConicQp { p: qp.p.clone(), c: qp.c.clone(), a, b, cone }, origin })
}

fn dims(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(ModelError::Dimension { what, expected, got })
    }
}

fn finite(what: &'static str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite(what))
    }
}

/// Exact symmetry plus `xᵀPx ≥ -tol‖x‖²` on seeded random probes.
fn check_psd(p: &CsrMatrix) -> Result<()> {
    if !p.is_symmetric() {
        return Err(ModelError::NotSymmetric);
    }
    let n = p.nrows();
    if n == 0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut px = vec![0.0; n];
    for _ in 0..PSD_PROBES {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        p.spmv_into(&x, &mut px)?;
        let curv = dot(&x, &px);
        if curv < -PSD_TOL * dot(&x, &x) {
            return Err(ModelError::NotPsd(curv));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_qp(n: usize, lower: Vec<f64>, upper: Vec<f64>) -> StandardQp {
        let mut qp = StandardQp::unconstrained(CsrMatrix::identity(n), vec![0.0; n]);
        qp.lower = lower;
        qp.upper = upper;
        qp
    }

    #[test]
    fn equalities_only() {
        let mut qp = StandardQp::unconstrained(CsrMatrix::identity(3), vec![1.0, 0.0, -1.0]);
        qp.a_eq = CsrMatrix::from_dense(2, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        qp.b_eq = vec![1.0, 2.0];
        let form = to_conic(&qp).unwrap();
        assert_eq!(form.qp.cone, ConeSpec::new(2, 0));
        assert_eq!(form.origin, vec![RowOrigin::Equality(0), RowOrigin::Equality(1)]);
    }

    #[test]
    fn infinite_bounds_dropped() {
        let qp = box_qp(2, vec![0.0, f64::NEG_INFINITY], vec![1.0, f64::INFINITY]);
        let form = to_conic(&qp).unwrap();
        assert_eq!(form.qp.cone, ConeSpec::new(0, 2));
        assert_eq!(form.origin, vec![RowOrigin::LowerBound(0), RowOrigin::UpperBound(0)]);
        assert_eq!(form.qp.b, vec![-0.0, 1.0]);
        assert_eq!(form.qp.a.to_dense(), vec![-1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn qp_rhs_shape_counts() {
        // n=4, two equalities, two inequalities, box [-1,1]^4:
        // 2 zero rows; 2 + 4 lower + 4 upper nonnegative rows.
        let mut qp = box_qp(4, vec![-1.0; 4], vec![1.0; 4]);
        qp.a_eq = CsrMatrix::from_dense(2, 4, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        qp.b_eq = vec![0.0, 0.0];
        qp.g = CsrMatrix::from_dense(2, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        qp.h = vec![1.0, 1.0];
        let form = to_conic(&qp).unwrap();
        assert_eq!(form.qp.cone, ConeSpec::new(2, 10));
        assert_eq!(form.qp.m(), 12);
    }

    #[test]
    fn paired_inequality_encoding() {
        let mut qp = box_qp(2, vec![f64::NEG_INFINITY; 2], vec![f64::INFINITY; 2]);
        qp.a_eq = CsrMatrix::from_dense(1, 2, &[1.0, 2.0]).unwrap();
        qp.b_eq = vec![3.0];
        let form = to_conic_with(&qp, EqualityEncoding::PairedInequalities).unwrap();
        assert_eq!(form.qp.cone, ConeSpec::new(0, 2));
        assert_eq!(form.qp.b, vec![3.0, -3.0]);
        assert_eq!(form.qp.a.to_dense(), vec![1.0, 2.0, -1.0, -2.0]);
    }

    #[test]
    fn validation_errors() {
        let qp = box_qp(2, vec![1.0, 0.0], vec![0.0, 1.0]);
        assert_eq!(qp.validate(), Err(ModelError::InvalidBounds(0)));

        let p = CsrMatrix::from_dense(2, 2, &[1.0, 2.0, 0.0, 1.0]).unwrap();
        let qp = StandardQp::unconstrained(p, vec![0.0; 2]);
        assert_eq!(qp.validate(), Err(ModelError::NotSymmetric));

        let p = CsrMatrix::diagonal(&[1.0, -1.0]);
        let qp = StandardQp::unconstrained(p, vec![0.0; 2]);
        assert!(matches!(qp.validate(), Err(ModelError::NotPsd(_))));

        let mut qp = box_qp(2, vec![0.0; 2], vec![1.0; 2]);
        qp.h = vec![1.0];
        assert!(matches!(qp.validate(), Err(ModelError::Dimension { .. })));
    }

    #[test]
    fn conic_objective_matches_standard() {
        let p = CsrMatrix::from_dense(2, 2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let mut qp = StandardQp::unconstrained(p, vec![-1.0, 3.0]);
        qp.lower = vec![0.0, -2.0];
        let form = to_conic(&qp).unwrap();
        for x in [[0.3, -0.7], [10.0, 2.0], [-1.5, 0.0]] {
            assert_eq!(form.qp.objective(&x), qp.objective(&x));
        }
    }
}
