//! Unrolled gradient-step splitting network.
//!
//! Every state array is `(n + m) × d`: one row per primal-dual coordinate
//! and `d` channels. Each layer performs a gated gradient step on `ũ`, the
//! projection, and the `w` update, with `d × d` channel-mixing matrices in
//! place of the scalars of the solver iteration.

mod checkpoint;
mod forward;
mod train;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use forward::{backward, backward_from_output, forward, ForwardCache, LayerCache};
pub use train::{
    adam_step, batch_gradient, evaluate_loss, train, AdamState, EpochLog, LrFallback, Sample, TrainConfig, TrainOutcome,
};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::MonotoneData;
use crate::solver::step_cap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("network expects {expected} rows, problem has {got}")]
    Rows { expected: usize, got: usize },
    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: usize },
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape { what: String, expected: String, got: String },
    #[error("{0}")]
    Invalid(String),
    #[error("batch of {preds} predictions against {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
}

pub type Result<T> = std::result::Result<T, NetError>;

/// Learnable parameters of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub u_ut: Array2<f64>,
    pub u_w: Array2<f64>,
    pub u_eta: Array2<f64>,
    /// Gate bias, broadcast over rows.
    pub b_eta: Array1<f64>,
    pub v_ut: Array2<f64>,
    pub v_w: Array2<f64>,
    pub w_w: Array2<f64>,
    pub w_u: Array2<f64>,
    pub w_ut: Array2<f64>,
}

impl LayerParams {
    pub fn zeros(d: usize) -> Self {
        let z = || Array2::zeros((d, d));
        Self {
            u_ut: z(),
            u_w: z(),
            u_eta: z(),
            b_eta: Array1::zeros(d),
            v_ut: z(),
            v_w: z(),
            w_w: z(),
            w_u: z(),
            w_ut: z(),
        }
    }

    fn tensors(&self) -> [&[f64]; 9] {
        fn s(a: &Array2<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        [
            s(&self.u_ut),
            s(&self.u_w),
            s(&self.u_eta),
            s(&self.v_ut),
            s(&self.v_w),
            s(&self.w_w),
            s(&self.w_u),
            s(&self.w_ut),
            self.b_eta.as_slice().expect("standard layout"),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 9] {
        let Self { u_ut, u_w, u_eta, b_eta, v_ut, v_w, w_w, w_u, w_ut } = self;
        [
            u_ut.as_slice_mut(),
            u_w.as_slice_mut(),
            u_eta.as_slice_mut(),
            v_ut.as_slice_mut(),
            v_w.as_slice_mut(),
            w_w.as_slice_mut(),
            w_u.as_slice_mut(),
            w_ut.as_slice_mut(),
            b_eta.as_slice_mut(),
        ]
        .map(|s| s.expect("standard layout"))
    }
}

/// Names of the nine per-layer tensors in [`Theta::tensors`] order.
pub const LAYER_TENSOR_NAMES: [&str; 9] = ["U_ut", "U_w", "U_eta", "V_ut", "V_w", "W_w", "W_u", "W_ut", "b_eta"];

/// Everything trained: per-layer parameters and the output map `P_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub layers: Vec<LayerParams>,
    /// `d × 1` output map, stored as a vector.
    pub p_u: Array1<f64>,
}

impl Theta {
    pub fn zeros(layers: usize, d: usize) -> Self {
        Self { layers: (0..layers).map(|_| LayerParams::zeros(d)).collect(), p_u: Array1::zeros(d) }
    }

    /// All tensors in a fixed order: layer by layer, then `P_u`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.layers.iter().flat_map(|l| l.tensors()).collect();
        out.push(self.p_u.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect();
        out.push(self.p_u.as_slice_mut().expect("standard layout"));
        out
    }

    /// Human-readable name of tensor `k` in [`Theta::tensors`] order.
    pub fn tensor_name(&self, k: usize) -> String {
        let per = LAYER_TENSOR_NAMES.len();
        if k / per < self.layers.len() {
            format!("layer {} {}", k / per, LAYER_TENSOR_NAMES[k % per])
        } else {
            "P_u".to_string()
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Theta) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= alpha);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub d: usize,
    pub theta: Theta,
    /// Fixed step prior `η^ℓ` per layer.
    pub eta: Vec<f64>,
}

impl NetParams {
    pub fn num_layers(&self) -> usize {
        self.theta.layers.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        if self.eta.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(NetError::Invalid("step priors must be positive and finite".into()));
        }
        if !self.theta.is_finite() {
            return Err(NetError::Invalid("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Tensor and prior shapes only; values are not inspected.
    pub fn check_shapes(&self) -> Result<()> {
        let d = self.d;
        if self.eta.len() != self.num_layers() {
            return Err(NetError::Shape {
                what: "eta".into(),
                expected: self.num_layers().to_string(),
                got: self.eta.len().to_string(),
            });
        }
        for (l, layer) in self.theta.layers.iter().enumerate() {
            for (name, t) in LAYER_TENSOR_NAMES.iter().zip(layer.tensors()) {
                let expected = if *name == "b_eta" { d } else { d * d };
                if t.len() != expected {
                    return Err(NetError::Shape {
                        what: format!("layer {l} {name}"),
                        expected: expected.to_string(),
                        got: t.len().to_string(),
                    });
                }
            }
        }
        if self.theta.p_u.len() != d {
            return Err(NetError::Shape { what: "P_u".into(), expected: d.to_string(), got: self.theta.p_u.len().to_string() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitScheme {
    /// Mixing matrices `I + N(0, std²)`, gate weights `N(0, std²)`, `b_η = 0`,
    /// `P_u = 1/d`: the untrained net is a perturbed copy of the solver.
    AlgorithmConsistent { noise_std: f64 },
    /// Every weight `N(0, 2/d)`, `b_η = 0`.
    Random,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::AlgorithmConsistent { noise_std: 0.01 }
    }
}

pub fn init_params(layers: usize, d: usize, seed: u64, scheme: InitScheme, eta_prior: f64) -> Result<NetParams> {
    if layers == 0 || d == 0 {
        return Err(NetError::Invalid("need at least one layer and one channel".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (std, eye, p_u) = match scheme {
        InitScheme::AlgorithmConsistent { noise_std } => (noise_std, 1.0, 1.0 / d as f64),
        InitScheme::Random => ((2.0 / d as f64).sqrt(), 0.0, f64::NAN),
    };
    let normal = Normal::new(0.0, std).map_err(|e| NetError::Invalid(e.to_string()))?;
    let mut mat = |diag: f64| Array2::from_shape_fn((d, d), |(i, j)| normal.sample(&mut rng) + if i == j { diag } else { 0.0 });
    let layer_list = (0..layers)
        .map(|_| LayerParams {
            u_ut: mat(eye),
            u_w: mat(eye),
            u_eta: mat(0.0),
            b_eta: Array1::zeros(d),
            v_ut: mat(eye),
            v_w: mat(eye),
            w_w: mat(eye),
            w_u: mat(eye),
            w_ut: mat(eye),
        })
        .collect();
    let p_u = if p_u.is_nan() { Array1::from_shape_fn(d, |_| normal.sample(&mut rng)) } else { Array1::from_elem(d, p_u) };
    let params = NetParams { d, theta: Theta { layers: layer_list, p_u }, eta: vec![eta_prior; layers] };
    params.validate()?;
    Ok(params)
}

/// Single-channel parameters under which `L` layers reproduce `L` fixed-step
/// solver iterations: every mixing scalar 1, `U_η = b_η = 0` so the gate is ½,
/// and `η^ℓ = 2η`.
pub fn emulation_params(data: &MonotoneData, eta: f64, layers: usize) -> Result<NetParams> {
    let cap = step_cap(data, 1.0);
    if !(eta > 0.0 && eta < cap) {
        return Err(NetError::Invalid(format!("step {eta} outside (0, {cap})")));
    }
    let one = || Array2::from_elem((1, 1), 1.0);
    let layer = LayerParams {
        u_ut: one(),
        u_w: one(),
        u_eta: Array2::zeros((1, 1)),
        b_eta: Array1::zeros(1),
        v_ut: one(),
        v_w: one(),
        w_w: one(),
        w_u: one(),
        w_ut: one(),
    };
    Ok(NetParams {
        d: 1,
        theta: Theta { layers: vec![layer; layers], p_u: Array1::from_elem(1, 1.0) },
        eta: vec![2.0 * eta; layers],
    })
}

/// `½ · mean_i (‖x̂_i − x*_i‖² + ‖ŷ_i − y*_i‖²)` over the batch.
pub fn loss(preds: &[(&[f64], &[f64])], labels: &[(&[f64], &[f64])]) -> Result<f64> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(NetError::LengthMismatch { preds: preds.len(), labels: labels.len() });
    }
    let mut total = 0.0;
    for ((px, py), (lx, ly)) in preds.iter().zip(labels) {
        if px.len() != lx.len() || py.len() != ly.len() {
            return Err(NetError::Shape {
                what: "prediction".into(),
                expected: format!("({}, {})", lx.len(), ly.len()),
                got: format!("({}, {})", px.len(), py.len()),
            });
        }
        total += sq_dist(px, lx) + sq_dist(py, ly);
    }
    Ok(0.5 * total / preds.len() as f64)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
