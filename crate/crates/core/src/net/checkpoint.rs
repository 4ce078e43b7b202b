use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{LayerParams, NetParams, Theta, LAYER_TENSOR_NAMES};

pub const CHECKPOINT_FORMAT: &str = "drgd-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: corrupt checkpoint at line {line}, column {column}: {message}")]
    Corrupt { path: String, line: usize, column: usize, message: String },
    #[error("{path}: checkpoint {format} v{found} is not {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}")]
    Version { path: String, format: String, found: u32 },
    #[error("{path}: checkpoint holds L={layers}, d={d} but L={expected_layers}, d={expected_d} was requested")]
    Shape { path: String, layers: usize, d: usize, expected_layers: usize, expected_d: usize },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

/// Trained parameters plus the forward-pass setting they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetParams,
    pub unroll_steps: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    #[serde(rename = "U_ut")]
    u_ut: Vec<f64>,
    #[serde(rename = "U_w")]
    u_w: Vec<f64>,
    #[serde(rename = "U_eta")]
    u_eta: Vec<f64>,
    #[serde(rename = "V_ut")]
    v_ut: Vec<f64>,
    #[serde(rename = "V_w")]
    v_w: Vec<f64>,
    #[serde(rename = "W_w")]
    w_w: Vec<f64>,
    #[serde(rename = "W_u")]
    w_u: Vec<f64>,
    #[serde(rename = "W_ut")]
    w_ut: Vec<f64>,
    b_eta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    layers: usize,
    d: usize,
    unroll_steps: usize,
    eta: Vec<f64>,
    /// Row-major `d × d` matrices.
    params: Vec<LayerFile>,
    #[serde(rename = "P_u")]
    p_u: Vec<f64>,
}

fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let p = &ckpt.params;
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        layers: p.num_layers(),
        d: p.d,
        unroll_steps: ckpt.unroll_steps,
        eta: p.eta.clone(),
        params: p
            .theta
            .layers
            .iter()
            .map(|l| LayerFile {
                u_ut: flat(&l.u_ut),
                u_w: flat(&l.u_w),
                u_eta: flat(&l.u_eta),
                v_ut: flat(&l.v_ut),
                v_w: flat(&l.v_w),
                w_w: flat(&l.w_w),
                w_u: flat(&l.w_u),
                w_ut: flat(&l.w_ut),
                b_eta: l.b_eta.to_vec(),
            })
            .collect(),
        p_u: p.theta.p_u.to_vec(),
    };
    let text = serde_json::to_string(&file).expect("checkpoint always serializes");
    fs::write(path, text).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io { path: name.clone(), source })?;
    let corrupt = |e: serde_json::Error| CheckpointError::Corrupt {
        path: name.clone(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    };
    // The header is checked first so a newer layout reports its version
    // rather than a field error.
    let header: Header = serde_json::from_str(&text).map_err(corrupt)?;
    if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { path: name, format: header.format, found: header.version });
    }
    let file: CheckpointFile = serde_json::from_str(&text).map_err(corrupt)?;
    let invalid = |message: String| CheckpointError::Invalid { path: name.clone(), message };
    let d = file.d;
    if file.params.len() != file.layers {
        return Err(invalid(format!("header says {} layers, found {}", file.layers, file.params.len())));
    }
    let mat = |v: Vec<f64>, what: &str, l: usize| {
        Array2::from_shape_vec((d, d), v).map_err(|_| invalid(format!("layer {l} {what} is not {d}x{d}")))
    };
    let mut layers = Vec::with_capacity(file.layers);
    for (l, f) in file.params.into_iter().enumerate() {
        let names = LAYER_TENSOR_NAMES;
        if f.b_eta.len() != d {
            return Err(invalid(format!("layer {l} b_eta has length {}", f.b_eta.len())));
        }
        layers.push(LayerParams {
            u_ut: mat(f.u_ut, names[0], l)?,
            u_w: mat(f.u_w, names[1], l)?,
            u_eta: mat(f.u_eta, names[2], l)?,
            v_ut: mat(f.v_ut, names[3], l)?,
            v_w: mat(f.v_w, names[4], l)?,
            w_w: mat(f.w_w, names[5], l)?,
            w_u: mat(f.w_u, names[6], l)?,
            w_ut: mat(f.w_ut, names[7], l)?,
            b_eta: Array1::from(f.b_eta),
        });
    }
    if file.unroll_steps == 0 {
        return Err(invalid("unroll_steps must be at least 1".into()));
    }
    let params = NetParams { d, theta: Theta { layers, p_u: Array1::from(file.p_u) }, eta: file.eta };
    params.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(Checkpoint { params, unroll_steps: file.unroll_steps })
}

/// Loads a checkpoint and checks it has `layers` layers of width `d`.
pub fn load_checkpoint_for(path: &Path, layers: usize, d: usize) -> Result<Checkpoint, CheckpointError> {
    let c = load_checkpoint(path)?;
    if c.params.num_layers() != layers || c.params.d != d {
        return Err(CheckpointError::Shape {
            path: path.display().to_string(),
            layers: c.params.num_layers(),
            d: c.params.d,
            expected_layers: layers,
            expected_d: d,
        });
    }
    Ok(c)
}
