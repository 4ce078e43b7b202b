use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DataError, DatasetBundle, Family, GenSpec, Result};
use crate::model::StandardQp;
use crate::sparse::{norm_inf, CsrMatrix};

/// Probability that a sampled matrix entry is kept.
const DENSITY: f64 = 0.5;
/// Witness points are drawn from `[-WITNESS_HALF, WITNESS_HALF]^n`.
const WITNESS_HALF: f64 = 0.5;
const P_DIAG_RANGE: (f64, f64) = (0.5, 2.0);
const P_DIAG_FLOOR: f64 = 1e-6;
const WITNESS_TOL: f64 = 1e-9;

/// Stream 0 holds the shared base; sample `i` draws from stream `i + 1`, so
/// every sample depends only on `(seed, i)`.
fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Dense Gaussian draw with each entry kept with probability [`DENSITY`].
/// Empty rows get one entry so no constraint is vacuous.
fn sparse_gaussian(rng: &mut ChaCha8Rng, nrows: usize, ncols: usize) -> CsrMatrix {
    let mut t = Vec::new();
    for i in 0..nrows {
        let start = t.len();
        for j in 0..ncols {
            let v = normal(rng);
            if rng.random_bool(DENSITY) {
                t.push((i, j, v));
            }
        }
        if t.len() == start && ncols > 0 {
            t.push((i, rng.random_range(0..ncols), normal(rng)));
        }
    }
    CsrMatrix::from_triplets(nrows, ncols, &t).expect("generated triplets are unique and in range")
}

fn sparse_gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v = normal(rng);
            if rng.random_bool(DENSITY) {
                v
            } else {
                0.0
            }
        })
        .collect()
}

fn witness(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-WITNESS_HALF..WITNESS_HALF)).collect()
}

/// Shared data of the QP families plus the base witness.
struct BaseQp {
    qp: StandardQp,
    x0: Vec<f64>,
}

fn base_qp(spec: &GenSpec) -> Result<BaseQp> {
    let n = spec.size;
    if n == 0 || n % 2 != 0 {
        return Err(DataError::InvalidSpec(format!("n must be even and positive, got {n}")));
    }
    let half = n / 2;
    let mut rng = rng_for(spec.seed, 0);
    let diag: Vec<f64> = (0..n).map(|_| rng.random_range(P_DIAG_RANGE.0..P_DIAG_RANGE.1)).collect();
    let c = sparse_gaussian_vec(&mut rng, n);
    let a_eq = sparse_gaussian(&mut rng, half, n);
    let g = sparse_gaussian(&mut rng, half, n);
    // Gx ≤ h holds with slack `margin` on the whole witness box.
    let h: Vec<f64> =
        (0..half).map(|i| WITNESS_HALF * g.row(i).map(|(_, v)| v.abs()).sum::<f64>() + spec.margin).collect();
    let x0 = witness(&mut rng, n);
    let b_eq = a_eq.spmv(&x0)?;
    let qp = StandardQp {
        p: CsrMatrix::diagonal(&diag),
        c,
        a_eq,
        b_eq,
        g,
        h,
        lower: vec![-1.0; n],
        upper: vec![1.0; n],
    };
    Ok(BaseQp { qp, x0 })
}

/// Checks `x` against every constraint of `qp`.
pub fn check_witness(qp: &StandardQp, x: &[f64]) -> bool {
    let eq = qp.a_eq.spmv(x).expect("witness has length n");
    let scale = 1.0f64.max(norm_inf(&qp.b_eq));
    let eq_ok = eq.iter().zip(&qp.b_eq).all(|(a, b)| (a - b).abs() <= WITNESS_TOL * scale);
    let gx = qp.g.spmv(x).expect("witness has length n");
    let ineq_ok = gx.iter().zip(&qp.h).all(|(g, h)| g <= h);
    let bounds_ok = x.iter().zip(qp.lower.iter().zip(&qp.upper)).all(|(v, (l, u))| l <= v && v <= u);
    eq_ok && ineq_ok && bounds_ok
}

fn finish(spec: &GenSpec, instances: Vec<(StandardQp, Vec<f64>)>) -> Result<DatasetBundle> {
    let mut out = Vec::with_capacity(instances.len());
    for (i, (qp, x)) in instances.into_iter().enumerate() {
        if !check_witness(&qp, &x) {
            return Err(DataError::Infeasible { index: i });
        }
        qp.validate()?;
        out.push(qp);
    }
    Ok(DatasetBundle::new(spec.clone(), out))
}

fn check_count(spec: &GenSpec) -> Result<()> {
    if spec.count == 0 {
        return Err(DataError::InvalidSpec("count must be at least 1".into()));
    }
    Ok(())
}

/// One base problem per seed; samples differ only in `b_eq = A_eq x₀` with a
/// fresh witness `x₀` each.
pub fn gen_qp_rhs(spec: &GenSpec) -> Result<DatasetBundle> {
    check_count(spec)?;
    let base = base_qp(spec)?;
    let n = spec.size;
    let samples = (0..spec.count)
        .map(|i| {
            let mut rng = rng_for(spec.seed, i as u64 + 1);
            let x0 = witness(&mut rng, n);
            let mut qp = base.qp.clone();
            qp.b_eq = qp.a_eq.spmv(&x0)?;
            Ok((qp, x0))
        })
        .collect::<Result<Vec<_>>>()?;
    finish(spec, samples)
}

/// Every nonzero of `P, c, A_eq, G, h` scaled by an independent factor in
/// `[1 − w, 1 + w]`; `b_eq` is then recomputed as `A_eq x₀` at the base
/// witness, and any `h_i` the perturbation pushed below `(G x₀)_i` is raised
/// back to `(G x₀)_i + (1 − w)·margin`.
pub fn gen_qp_perturbed(spec: &GenSpec) -> Result<DatasetBundle> {
    check_count(spec)?;
    let w = spec.perturbation;
    if !(0.0..1.0).contains(&w) {
        return Err(DataError::InvalidSpec(format!("perturbation half-width must lie in [0, 1), got {w}")));
    }
    let base = base_qp(spec)?;
    let samples = (0..spec.count)
        .map(|i| {
            let mut rng = rng_for(spec.seed, i as u64 + 1);
            let mut factor = || if w == 0.0 { 1.0 } else { rng.random_range(1.0 - w..=1.0 + w) };
            let b = &base.qp;
            let upper_p = b.p.map_values(|i, j, v| if i <= j { v * factor() } else { v });
            let p = upper_p.map_values(|i, j, v| {
                if i > j {
                    upper_p.get(j, i)
                } else if i == j {
                    v.max(P_DIAG_FLOOR)
                } else {
                    v
                }
            });
            let c: Vec<f64> = b.c.iter().map(|&v| if v != 0.0 { v * factor() } else { v }).collect();
            let a_eq = b.a_eq.map_values(|_, _, v| v * factor());
            let g = b.g.map_values(|_, _, v| v * factor());
            let h_scaled: Vec<f64> = b.h.iter().map(|&v| v * factor()).collect();
            let gx = g.spmv(&base.x0)?;
            let h = h_scaled.iter().zip(&gx).map(|(&h, &gx)| if gx <= h { h } else { gx + (1.0 - w) * spec.margin }).collect();
            let b_eq = a_eq.spmv(&base.x0)?;
            let qp = StandardQp { p, c, a_eq, b_eq, g, h, lower: b.lower.clone(), upper: b.upper.clone() };
            Ok((qp, base.x0.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    finish(spec, samples)
}

/// `min xᵀDx + yᵀy − μᵀx/γ  s.t.  y = Fᵀx, 1ᵀx = 1, 0 ≤ x ≤ 1` over `z = (x, y)`.
///
/// `P = 2·blkdiag(D, I)` and `c = (−μ/γ, 0)`. The upper bound `x ≤ 1` is
/// implied by the other constraints and only fixes the row count at `2n`.
pub fn portfolio_qp(f: &CsrMatrix, d: &[f64], mu: &[f64], gamma: f64) -> Result<StandardQp> {
    let (n, k) = (f.nrows(), f.ncols());
    if d.len() != n || mu.len() != n || !(gamma > 0.0) {
        return Err(DataError::InvalidSpec("portfolio data: D, μ must have length n and γ > 0".into()));
    }
    let nz = n + k;
    let diag: Vec<f64> = d.iter().map(|v| 2.0 * v).chain(std::iter::repeat_n(2.0, k)).collect();
    let mut c: Vec<f64> = mu.iter().map(|m| -m / gamma).collect();
    c.resize(nz, 0.0);
    // Row r < k: y_r − F[:, r]ᵀx = 0; row k: 1ᵀx = 1.
    let mut t = Vec::with_capacity(f.nnz() + k + n);
    for (i, r, v) in f.triplets() {
        t.push((r, i, -v));
    }
    for r in 0..k {
        t.push((r, n + r, 1.0));
    }
    for j in 0..n {
        t.push((k, j, 1.0));
    }
    let a_eq = CsrMatrix::from_triplets(k + 1, nz, &t)?;
    let mut b_eq = vec![0.0; k + 1];
    b_eq[k] = 1.0;
    let mut lower = vec![0.0; n];
    lower.resize(nz, f64::NEG_INFINITY);
    let mut upper = vec![1.0; n];
    upper.resize(nz, f64::INFINITY);
    Ok(StandardQp { p: CsrMatrix::diagonal(&diag), c, a_eq, b_eq, g: CsrMatrix::zeros(0, nz), h: vec![], lower, upper })
}

/// Uniform allocation `x = 1/n`, `y = Fᵀx`.
pub fn portfolio_witness(f: &CsrMatrix) -> Vec<f64> {
    let n = f.nrows();
    let x = vec![1.0 / n as f64; n];
    let y = f.spmv_t(&x).expect("x has length n");
    x.into_iter().chain(y).collect()
}

/// Every sample is an independent draw of `F`, `D`, `μ` with `n = 10k`
/// assets, `F_ij ~ N(0, 1)` at 50% density, `D_ii ~ U[0, √k]`,
/// `μ_i ~ N(0, 1)`, `γ = 1`.
pub fn gen_portfolio(spec: &GenSpec) -> Result<DatasetBundle> {
    check_count(spec)?;
    let k = spec.size;
    if k == 0 {
        return Err(DataError::InvalidSpec("k must be at least 1".into()));
    }
    let n = 10 * k;
    let samples = (0..spec.count)
        .map(|i| {
            let mut rng = rng_for(spec.seed, i as u64 + 1);
            let f = sparse_gaussian(&mut rng, n, k);
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..(k as f64).sqrt())).collect();
            let mu: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
            let qp = portfolio_qp(&f, &d, &mu, 1.0)?;
            Ok((qp, portfolio_witness(&f)))
        })
        .collect::<Result<Vec<_>>>()?;
    finish(spec, samples)
}

pub fn generate(spec: &GenSpec) -> Result<DatasetBundle> {
    match spec.family {
        Family::QpRhs => gen_qp_rhs(spec),
        Family::QpPerturbed => gen_qp_perturbed(spec),
        Family::Portfolio => gen_portfolio(spec),
    }
}
