use ndarray::{Array1, Array2, Axis, Zip};

use super::{NetError, NetParams, Result, Theta};
use crate::model::MonotoneData;
use crate::sparse::CsrMatrix;

/// Activations of one layer, kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    /// `ũ^ℓ`, the layer input; also the first inner iterate.
    pub ut_in: Array2<f64>,
    /// `w^ℓ`.
    pub w_in: Array2<f64>,
    /// Gate `σ(w U_η + 1 b_ηᵀ)`.
    pub gate: Array2<f64>,
    /// Inner iterates after each gradient step; the last one is `ũ^{ℓ+1}`.
    pub ut_steps: Vec<Array2<f64>>,
    /// Gradient `g` at each inner step.
    pub grads: Vec<Array2<f64>>,
    /// Projection input `2ũ^{ℓ+1}V_ũ − w V_w`.
    pub pre_proj: Array2<f64>,
    /// `u^{ℓ+1}`.
    pub u_out: Array2<f64>,
}

impl LayerCache {
    pub fn ut_out(&self) -> &Array2<f64> {
        self.ut_steps.last().expect("at least one inner step")
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub layers: Vec<LayerCache>,
    /// `u^L P_u`.
    pub output: Vec<f64>,
    pub unroll_steps: usize,
}

impl ForwardCache {
    /// `u^L` (or `u⁰` for a net without layers).
    pub fn u_last(&self) -> &Array2<f64> {
        &self.layers.last().expect("at least one layer").u_out
    }
}

/// `B X` with `B` sparse and `X` dense, column by column.
pub(crate) fn spmm(b: &CsrMatrix, x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((b.nrows(), x.ncols()));
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        for (j, v) in b.row(i) {
            row.scaled_add(v, &x.row(j));
        }
    }
    out
}

/// `Bᵀ X` without forming the transpose.
pub(crate) fn spmm_t(b: &CsrMatrix, x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((b.ncols(), x.ncols()));
    for i in 0..b.nrows() {
        let xi = x.row(i);
        for (j, v) in b.row(i) {
            out.row_mut(j).scaled_add(v, &xi);
        }
    }
    out
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn broadcast(v: &[f64], d: usize) -> Array2<f64> {
    Array2::from_shape_fn((v.len(), d), |(i, _)| v[i])
}

fn check_finite(a: &Array2<f64>, layer: usize) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NetError::NonFinite { layer })
    }
}

/// Runs the network; returns `(x̂, ŷ)` and the activations.
///
/// Initial state: `ũ⁰ = 0`, `u⁰ = Π(−q)1ᵀ`, `w⁰ = q1ᵀ + u⁰`.
pub fn forward(data: &MonotoneData, params: &NetParams, unroll_steps: usize) -> Result<(Vec<f64>, Vec<f64>, ForwardCache)> {
    if unroll_steps == 0 {
        return Err(NetError::Invalid("unroll_steps must be at least 1".into()));
    }
    params.check_shapes()?;
    let d = params.d;
    let dim = data.dim();
    let b = &data.i_plus_m;
    let q = broadcast(&data.q, d);
    let neg_q: Vec<f64> = data.q.iter().map(|v| -v).collect();
    let u0 = broadcast(&data.project(&neg_q), d);
    let mut w = &q + &u0;
    let mut ut = Array2::<f64>::zeros((dim, d));
    let nonneg = data.nonneg_range();

    let mut layers = Vec::with_capacity(params.num_layers());
    for (l, (theta, &eta)) in params.theta.layers.iter().zip(&params.eta).enumerate() {
        let w_shift = w.dot(&theta.u_w) - &q;
        let mut z = w.dot(&theta.u_eta);
        z += &theta.b_eta.view().insert_axis(Axis(0));
        let gate = z.mapv(sigmoid);

        let mut x = ut.clone();
        let mut ut_steps = Vec::with_capacity(unroll_steps);
        let mut grads = Vec::with_capacity(unroll_steps);
        for _ in 0..unroll_steps {
            let v = x.dot(&theta.u_ut);
            let r = spmm(b, &v) - &w_shift;
            let g = spmm_t(b, &r);
            let mut next = v;
            Zip::from(&mut next).and(&gate).and(&g).for_each(|n, &s, &g| *n -= eta * (s * g));
            grads.push(g);
            ut_steps.push(next.clone());
            x = next;
        }
        check_finite(&x, l)?;

        let pre_proj = 2.0 * x.dot(&theta.v_ut) - w.dot(&theta.v_w);
        let mut u_out = pre_proj.clone();
        u_out.slice_mut(ndarray::s![nonneg.clone(), ..]).mapv_inplace(|v| v.max(0.0));
        let w_next = w.dot(&theta.w_w) + (u_out.dot(&theta.w_u) - x.dot(&theta.w_ut));
        check_finite(&w_next, l)?;

        layers.push(LayerCache { ut_in: ut, w_in: w, gate, ut_steps, grads, pre_proj, u_out });
        ut = x;
        w = w_next;
    }
    let last = &layers.last().ok_or_else(|| NetError::Invalid("network has no layers".into()))?.u_out;
    let output = last.dot(&params.theta.p_u).to_vec();
    let (xh, yh) = output.split_at(data.n);
    let (xh, yh) = (xh.to_vec(), yh.to_vec());
    Ok((xh, yh, ForwardCache { layers, output, unroll_steps }))
}

/// Gradient of `½‖u^L P_u − (x*, y*)‖²` with respect to every trained tensor.
pub fn backward(data: &MonotoneData, params: &NetParams, cache: &ForwardCache, label: (&[f64], &[f64])) -> Result<Theta> {
    let (lx, ly) = label;
    if lx.len() != data.n || ly.len() != data.m {
        return Err(NetError::Shape {
            what: "label".into(),
            expected: format!("({}, {})", data.n, data.m),
            got: format!("({}, {})", lx.len(), ly.len()),
        });
    }
    let out_bar: Vec<f64> = cache.output.iter().zip(lx.iter().chain(ly)).map(|(o, t)| o - t).collect();
    backward_from_output(data, params, cache, &out_bar)
}

/// Reverse pass seeded with `∂loss/∂(u^L P_u)`.
pub fn backward_from_output(data: &MonotoneData, params: &NetParams, cache: &ForwardCache, out_bar: &[f64]) -> Result<Theta> {
    let d = params.d;
    let dim = data.dim();
    if cache.layers.len() != params.num_layers() || out_bar.len() != dim {
        return Err(NetError::Shape {
            what: "forward cache".into(),
            expected: format!("{} layers, {dim} rows", params.num_layers()),
            got: format!("{} layers, {} rows", cache.layers.len(), out_bar.len()),
        });
    }
    let b = &data.i_plus_m;
    let nonneg = data.nonneg_range();
    let mut grad = Theta::zeros(params.num_layers(), d);

    let out_bar = Array1::from(out_bar.to_vec());
    let u_last = cache.u_last();
    grad.p_u = u_last.t().dot(&out_bar);
    let mut u_bar: Array2<f64> = out_bar.view().insert_axis(Axis(1)).dot(&params.theta.p_u.view().insert_axis(Axis(0)));
    let mut ut_bar = Array2::<f64>::zeros((dim, d));
    let mut w_bar = Array2::<f64>::zeros((dim, d));

    for (l, lc) in cache.layers.iter().enumerate().rev() {
        let th = &params.theta.layers[l];
        let gl = &mut grad.layers[l];
        let eta = params.eta[l];
        let x_out = lc.ut_out();
        let w = &lc.w_in;

        // w⁺ = w W_w + u⁺ W_u − ũ⁺ W_ũ
        let wn_bar = w_bar;
        let mut w_in_bar = wn_bar.dot(&th.w_w.t());
        gl.w_w = w.t().dot(&wn_bar);
        u_bar += &wn_bar.dot(&th.w_u.t());
        gl.w_u = lc.u_out.t().dot(&wn_bar);
        let mut x_bar = ut_bar - wn_bar.dot(&th.w_ut.t());
        gl.w_ut = -x_out.t().dot(&wn_bar);

        // u⁺ = Π(a); the subgradient at a = 0 is taken as 0.
        let mut a_bar = u_bar;
        Zip::from(a_bar.slice_mut(ndarray::s![nonneg.clone(), ..]))
            .and(lc.pre_proj.slice(ndarray::s![nonneg.clone(), ..]))
            .for_each(|ab, &a| {
                if a <= 0.0 {
                    *ab = 0.0;
                }
            });

        // a = 2 ũ⁺ V_ũ − w V_w
        x_bar += &(2.0 * a_bar.dot(&th.v_ut.t()));
        gl.v_ut = 2.0 * x_out.t().dot(&a_bar);
        w_in_bar -= &a_bar.dot(&th.v_w.t());
        gl.v_w = -w.t().dot(&a_bar);

        // Inner gradient steps in reverse: x_{j+1} = x_j U_ũ − η s ⊙ g_j,
        // g_j = Bᵀ(B x_j U_ũ − w').
        let mut gate_bar = Array2::<f64>::zeros((dim, d));
        let mut w_shift_bar = Array2::<f64>::zeros((dim, d));
        let mut u_ut_grad = Array2::<f64>::zeros((d, d));
        for j in (0..cache.unroll_steps).rev() {
            let g = &lc.grads[j];
            let x_prev = if j == 0 { &lc.ut_in } else { &lc.ut_steps[j - 1] };
            let mut g_bar = Array2::<f64>::zeros((dim, d));
            Zip::from(&mut gate_bar).and(&mut g_bar).and(&x_bar).and(g).and(&lc.gate).for_each(|sb, gb, &xb, &g, &s| {
                *sb -= eta * xb * g;
                *gb = -eta * s * xb;
            });
            let r_bar = spmm(b, &g_bar);
            let v_bar = &x_bar + &spmm_t(b, &r_bar);
            w_shift_bar -= &r_bar;
            u_ut_grad += &x_prev.t().dot(&v_bar);
            x_bar = v_bar.dot(&th.u_ut.t());
        }
        gl.u_ut = u_ut_grad;

        // s = σ(w U_η + 1 b_ηᵀ)
        let mut z_bar = gate_bar;
        Zip::from(&mut z_bar).and(&lc.gate).for_each(|zb, &s| *zb *= s * (1.0 - s));
        w_in_bar += &z_bar.dot(&th.u_eta.t());
        gl.u_eta = w.t().dot(&z_bar);
        gl.b_eta = z_bar.sum_axis(Axis(0));

        // w' = w U_w − q 1ᵀ
        w_in_bar += &w_shift_bar.dot(&th.u_w.t());
        gl.u_w = w.t().dot(&w_shift_bar);

        ut_bar = x_bar;
        w_bar = w_in_bar;
        u_bar = Array2::zeros((dim, d));
    }
    for l in &mut grad.layers {
        for m in [&mut l.u_ut, &mut l.u_w, &mut l.u_eta, &mut l.v_ut, &mut l.v_w, &mut l.w_w, &mut l.w_u, &mut l.w_ut] {
            if !m.is_standard_layout() {
                *m = m.as_standard_layout().into_owned();
            }
        }
    }
    Ok(grad)
}
