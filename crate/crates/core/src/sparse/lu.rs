//! Left-looking sparse LU (Gilbert-Peierls) with threshold partial pivoting.
//!
//! Columns are pre-ordered by minimum degree on the symmetrized pattern.
//! Rows are chosen by partial pivoting, preferring the diagonal entry when it
//! is within [`DIAGONAL_PREFERENCE`] of the column maximum so the fill-reducing
//! order survives for the diagonally strong matrices the solvers produce.

use super::{minimum_degree, CsrMatrix, Result, SparseError};

const DIAGONAL_PREFERENCE: f64 = 0.1;
/// A pivot smaller than this times the largest matrix entry is treated as zero.
const SINGULAR_RTOL: f64 = 1e-14;

/// Reusable factorization `P A Q = L U`.
#[derive(Debug, Clone)]
pub struct Factorization {
    n: usize,
    // L: unit lower triangular, column-compressed, diagonal stored first.
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    // U: upper triangular, column-compressed, diagonal stored last.
    up: Vec<usize>,
    ui: Vec<usize>,
    ux: Vec<f64>,
    /// Row `i` of the input becomes row `pinv[i]` of `L U`.
    pinv: Vec<usize>,
    /// Column `k` of `L U` is column `q[k]` of the input.
    q: Vec<usize>,
}

impl Factorization {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(SparseError::NotSquare { nrows: a.nrows(), ncols: a.ncols() });
        }
        let n = a.nrows();
        let q = minimum_degree(a);
        // CSR of the transpose is CSC of `a`.
        let csc = a.transpose();
        let (ap, ai, ax) = (csc.indptr(), csc.indices(), csc.values());
        let floor = SINGULAR_RTOL * a.max_abs();

        const UNSET: usize = usize::MAX;
        let mut pinv = vec![UNSET; n];
        let mut lp = Vec::with_capacity(n + 1);
        let mut up = Vec::with_capacity(n + 1);
        let mut li = Vec::with_capacity(a.nnz() * 2);
        let mut lx = Vec::with_capacity(a.nnz() * 2);
        let mut ui = Vec::with_capacity(a.nnz() * 2);
        let mut ux = Vec::with_capacity(a.nnz() * 2);
        lp.push(0);
        up.push(0);

        let mut x = vec![0.0; n];
        let mut reach = vec![0usize; n];
        let mut stack = vec![0usize; n];
        let mut pstack = vec![0usize; n];
        let mut marked = vec![false; n];

        for (k, &col) in q.iter().enumerate() {
            // Symbolic: rows reachable from the pattern of A(:, col) through L.
            let mut top = n;
            for &start in &ai[ap[col]..ap[col + 1]] {
                if marked[start] {
                    continue;
                }
                let mut head = 0;
                stack[0] = start;
                loop {
                    let j = stack[head];
                    let lcol = pinv[j];
                    if !marked[j] {
                        marked[j] = true;
                        pstack[head] = if lcol == UNSET { 0 } else { lp[lcol] };
                    }
                    let end = if lcol == UNSET { 0 } else { lp[lcol + 1] };
                    let mut descended = false;
                    for p in pstack[head]..end {
                        let i = li[p];
                        if marked[i] {
                            continue;
                        }
                        pstack[head] = p;
                        head += 1;
                        stack[head] = i;
                        descended = true;
                        break;
                    }
                    if !descended {
                        top -= 1;
                        reach[top] = j;
                        if head == 0 {
                            break;
                        }
                        head -= 1;
                    }
                }
            }

            // Numeric: x = L \ A(:, col) restricted to the reach.
            for p in ap[col]..ap[col + 1] {
                x[ai[p]] = ax[p];
            }
            for &j in &reach[top..] {
                let lcol = pinv[j];
                if lcol == UNSET {
                    continue;
                }
                let xj = x[j];
                for p in lp[lcol] + 1..lp[lcol + 1] {
                    x[li[p]] -= lx[p] * xj;
                }
            }

            let mut ipiv = UNSET;
            let mut amax = -1.0f64;
            for &i in &reach[top..] {
                if pinv[i] == UNSET {
                    if x[i].abs() > amax {
                        amax = x[i].abs();
                        ipiv = i;
                    }
                } else {
                    ui.push(pinv[i]);
                    ux.push(x[i]);
                }
            }
            if ipiv == UNSET || !(amax > floor) || !amax.is_finite() {
                return Err(SparseError::Singular { step: k, pivot: amax.max(0.0) });
            }
            if pinv[col] == UNSET && marked[col] && x[col].abs() >= DIAGONAL_PREFERENCE * amax {
                ipiv = col;
            }
            let pivot = x[ipiv];
            ui.push(k);
            ux.push(pivot);
            up.push(ui.len());
            pinv[ipiv] = k;
            li.push(ipiv);
            lx.push(1.0);
            for &i in &reach[top..] {
                if pinv[i] == UNSET {
                    li.push(i);
                    lx.push(x[i] / pivot);
                }
                x[i] = 0.0;
                marked[i] = false;
            }
            lp.push(li.len());
        }
        for i in li.iter_mut() {
            *i = pinv[*i];
        }
        Ok(Self { n, lp, li, lx, up, ui, ux, pinv, q })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries in `L` and `U` together.
    pub fn fill(&self) -> usize {
        self.lx.len() + self.ux.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.n];
        let mut work = vec![0.0; self.n];
        self.solve_into(b, &mut x, &mut work)?;
        Ok(x)
    }

    /// Solves `A x = b` using caller-provided scratch of length `n`.
    pub fn solve_into(&self, b: &[f64], x: &mut [f64], work: &mut [f64]) -> Result<()> {
        for len in [b.len(), x.len(), work.len()] {
            if len != self.n {
                return Err(SparseError::DimensionMismatch { expected: self.n, got: len });
            }
        }
        let y = work;
        for (i, &bi) in b.iter().enumerate() {
            y[self.pinv[i]] = bi;
        }
        for k in 0..self.n {
            let yk = y[k];
            if yk != 0.0 {
                for p in self.lp[k] + 1..self.lp[k + 1] {
                    y[self.li[p]] -= self.lx[p] * yk;
                }
            }
        }
        for k in (0..self.n).rev() {
            let diag = self.up[k + 1] - 1;
            y[k] /= self.ux[diag];
            let yk = y[k];
            if yk != 0.0 {
                for p in self.up[k]..diag {
                    y[self.ui[p]] -= self.ux[p] * yk;
                }
            }
        }
        for (k, &col) in self.q.iter().enumerate() {
            x[col] = y[k];
        }
        Ok(())
    }
}
