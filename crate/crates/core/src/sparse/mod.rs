//! Compressed sparse row matrices and the kernels the solvers are built on.
//!
//! Everything here is immutable after construction. Products are exact
//! (no dropping of small entries) and dimension checks are explicit.

mod lu;
mod ordering;
mod spectral;

pub use lu::Factorization;
pub use ordering::minimum_degree;
pub use spectral::{estimate_sigma_max, SpectralEstimate};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),
    #[error("duplicate entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("matrix must be square, got {nrows}x{ncols}")]
    NotSquare { nrows: usize, ncols: usize },
    #[error("matrix is singular (pivot {pivot:e} at step {step})")]
    Singular { step: usize, pivot: f64 },
}

pub type Result<T> = std::result::Result<T, SparseError>;

/// Row-compressed sparse matrix.
///
/// Column indices are strictly increasing inside each row, so every
/// `(row, col)` position is stored at most once.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, validating every invariant.
    pub fn try_new(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        data: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != nrows + 1 {
            return Err(SparseError::InvalidStructure(format!(
                "indptr has length {}, expected {}",
                indptr.len(),
                nrows + 1
            )));
        }
        if indptr[0] != 0 {
            return Err(SparseError::InvalidStructure("indptr must start at 0".into()));
        }
        if indptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(SparseError::InvalidStructure("indptr must be non-decreasing".into()));
        }
        let nnz = indptr[nrows];
        if indices.len() != nnz || data.len() != nnz {
            return Err(SparseError::InvalidStructure(format!(
                "{} indices and {} values for {} stored entries",
                indices.len(),
                data.len(),
                nnz
            )));
        }
        for row in 0..nrows {
            let cols = &indices[indptr[row]..indptr[row + 1]];
            for (k, &col) in cols.iter().enumerate() {
                if col >= ncols {
                    return Err(SparseError::InvalidStructure(format!(
                        "column index {col} out of range in row {row}"
                    )));
                }
                if k > 0 && cols[k - 1] >= col {
                    if cols[k - 1] == col {
                        return Err(SparseError::DuplicateEntry { row, col });
                    }
                    return Err(SparseError::InvalidStructure(format!(
                        "column indices not increasing in row {row}"
                    )));
                }
            }
        }
        Ok(Self { nrows, ncols, indptr, indices, data })
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order.
    /// Repeated positions are rejected.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(SparseError::InvalidStructure(format!(
                    "triplet ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut entries = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            entries[next[r]] = (c, v);
            next[r] += 1;
        }
        for row in 0..nrows {
            let slot = &mut entries[indptr[row]..indptr[row + 1]];
            slot.sort_by_key(|e| e.0);
            if let Some(w) = slot.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(SparseError::DuplicateEntry { row, col: w[0].0 });
            }
        }
        let (indices, data) = entries.into_iter().unzip();
        Ok(Self { nrows, ncols, indptr, indices, data })
    }

    /// Builds a matrix from a dense row-major slice, storing only nonzeros.
    pub fn from_dense(nrows: usize, ncols: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != nrows * ncols {
            return Err(SparseError::DimensionMismatch { expected: nrows * ncols, got: dense.len() });
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in dense.chunks(ncols.max(1)).take(nrows) {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        // `chunks` yields nothing when ncols == 0.
        indptr.resize(nrows + 1, indices.len());
        Ok(Self { nrows, ncols, indptr, indices, data })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), data: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: diag.to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Stored entries of one row as `(col, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.data[span].iter().copied())
    }

    /// All stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Value at `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.data[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// Applies `f` to every stored value, keeping the sparsity pattern.
    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out.data[k] = f(i, self.indices[k], self.data[k]);
            }
        }
        out
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map_values(|_, _, v| alpha * v)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.nrows * self.ncols];
        for (i, j, v) in self.triplets() {
            dense[i * self.ncols + j] = v;
        }
        dense
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut data = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                indices[next[j]] = i;
                data[next[j]] = v;
                next[j] += 1;
            }
        }
        Self { nrows: self.ncols, ncols: self.nrows, indptr, indices, data }
    }

    /// Entrywise sum; the pattern is the union of both patterns.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(SparseError::DimensionMismatch {
                expected: self.nrows * self.ncols,
                got: other.nrows * other.ncols,
            });
        }
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut data = Vec::with_capacity(self.nnz() + other.nnz());
        indptr.push(0);
        for i in 0..self.nrows {
            let mut a = self.row(i).peekable();
            let mut b = other.row(i).peekable();
            loop {
                let (j, v) = match (a.peek(), b.peek()) {
                    (None, None) => break,
                    (Some(&x), None) => {
                        a.next();
                        x
                    }
                    (None, Some(&y)) => {
                        b.next();
                        y
                    }
                    (Some(&x), Some(&y)) => {
                        if x.0 < y.0 {
                            a.next();
                            x
                        } else if y.0 < x.0 {
                            b.next();
                            y
                        } else {
                            a.next();
                            b.next();
                            (x.0, x.1 + y.1)
                        }
                    }
                };
                indices.push(j);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Self { nrows: self.nrows, ncols: self.ncols, indptr, indices, data })
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        check_len(self.ncols, x.len())?;
        check_len(self.nrows, y.len())?;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            *yi = acc;
        }
        Ok(())
    }

    /// `y = Aᵀ x` computed by scattering rows, without forming the transpose.
    pub fn spmv_t(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.ncols];
        self.spmv_t_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_t_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        check_len(self.nrows, x.len())?;
        check_len(self.ncols, y.len())?;
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for k in self.indptr[i]..self.indptr[i + 1] {
                y[self.indices[k]] += self.data[k] * xi;
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.is_square() && *self == self.transpose()
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(SparseError::DimensionMismatch { expected, got })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_by_two() -> CsrMatrix {
        CsrMatrix::from_dense(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn identity_spmv() {
        let y = CsrMatrix::identity(3).spmv(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_matrix_spmv() {
        let y = CsrMatrix::zeros(4, 3).spmv(&[1.0, -2.0, 3.5]).unwrap();
        assert_eq!(y, vec![0.0; 4]);
    }

    #[test]
    fn hand_products() {
        assert_eq!(two_by_two().spmv(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
        assert_eq!(two_by_two().spmv_t(&[1.0, 1.0]).unwrap(), vec![4.0, 6.0]);
        assert_eq!(CsrMatrix::identity(3).spmv_t(&[4.0, 5.0, 6.0]).unwrap(), vec![4.0, 5.0, 6.0]);
    }

    #[test]
    fn spmv_t_matches_dense_transpose() {
        #[rustfmt::skip]
        let dense = [
            1.0, 0.0, -2.0,
            0.0, 3.0, 0.0,
            4.0, 0.5, 0.0,
            0.0, 0.0, 7.0,
            -1.0, 2.0, 3.0,
        ];
        let a = CsrMatrix::from_dense(5, 3, &dense).unwrap();
        let y = [0.3, -1.0, 2.0, 0.25, -0.5];
        let mut expected = [0.0; 3];
        for i in 0..5 {
            for j in 0..3 {
                expected[j] += dense[i * 3 + j] * y[i];
            }
        }
        let got = a.spmv_t(&y).unwrap();
        for j in 0..3 {
            assert!((got[j] - expected[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        assert_eq!(
            two_by_two().spmv(&[1.0]),
            Err(SparseError::DimensionMismatch { expected: 2, got: 1 })
        );
        assert!(two_by_two().spmv_t(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn duplicates_rejected() {
        let err = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0)]).unwrap_err();
        assert_eq!(err, SparseError::DuplicateEntry { row: 0, col: 1 });
        let err = CsrMatrix::try_new(1, 3, vec![0, 2], vec![1, 1], vec![1.0, 1.0]).unwrap_err();
        assert_eq!(err, SparseError::DuplicateEntry { row: 0, col: 1 });
    }

    #[test]
    fn invalid_structure_rejected() {
        assert!(CsrMatrix::try_new(2, 2, vec![0, 1], vec![0], vec![1.0]).is_err());
        assert!(CsrMatrix::try_new(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(CsrMatrix::try_new(1, 3, vec![0, 2], vec![2, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::try_new(2, 2, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn add_merges_patterns() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 2.0)]).unwrap();
        let b = CsrMatrix::from_triplets(2, 2, &[(0, 0, 3.0), (0, 1, 5.0)]).unwrap();
        assert_eq!(a.add(&b).unwrap().to_dense(), vec![4.0, 5.0, 2.0, 0.0]);
    }

    fn arb_matrix() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
        (1usize..7, 1usize..7).prop_flat_map(|(r, c)| {
            let cell = prop_oneof![Just(0.0), -10.0..10.0f64];
            (Just(r), Just(c), proptest::collection::vec(cell, r * c))
        })
    }

    proptest! {
        #[test]
        fn adjoint_identity((r, c, dense) in arb_matrix(), seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let a = CsrMatrix::from_dense(r, c, &dense).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..r).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs = dot(&a.spmv_t(&y).unwrap(), &x);
            let rhs = dot(&y, &a.spmv(&x).unwrap());
            let scale = 1.0f64.max(lhs.abs()).max(rhs.abs());
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }

        #[test]
        fn transpose_is_involution((r, c, dense) in arb_matrix()) {
            let a = CsrMatrix::from_dense(r, c, &dense).unwrap();
            prop_assert_eq!(a.transpose().transpose(), a);
        }
    }
}
