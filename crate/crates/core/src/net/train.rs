use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::{backward, forward};
use super::{init_params, InitScheme, NetError, NetParams, Result, Theta};
use crate::datagen::DatasetBundle;
use crate::model::io::Label;
use crate::model::MonotoneData;

/// Raises the learning rate once after `after_epochs` epochs without a
/// validation improvement; the patience counter restarts at the switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrFallback {
    pub learning_rate: f64,
    pub after_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub eta_prior: f64,
    pub unroll_steps: usize,
    pub layers: usize,
    pub d: usize,
    pub init: InitScheme,
    pub lr_fallback: Option<LrFallback>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            eta_prior: 0.1,
            unroll_steps: 1,
            layers: 4,
            d: 128,
            init: InitScheme::default(),
            lr_fallback: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NetError::Invalid(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 || self.unroll_steps == 0 || self.layers == 0 || self.d == 0 {
            return bad("batch_size, unroll_steps, layers and d must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("need 0 <= beta < 1 and eps > 0");
        }
        if !(self.eta_prior > 0.0 && self.eta_prior.is_finite()) {
            return bad("eta_prior must be positive");
        }
        if let Some(f) = self.lr_fallback {
            if !(f.learning_rate > 0.0 && f.learning_rate.is_finite()) || f.after_epochs == 0 {
                return bad("fallback needs a positive learning rate and after_epochs >= 1");
            }
        }
        Ok(())
    }
}

/// Adam first and second moments plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Theta,
    pub v: Theta,
    pub t: u64,
}

impl AdamState {
    pub fn new(like: &Theta) -> Self {
        let d = like.p_u.len();
        Self { m: Theta::zeros(like.layers.len(), d), v: Theta::zeros(like.layers.len(), d), t: 0 }
    }
}

/// One bias-corrected Adam update of `theta` in place.
pub fn adam_step(theta: &mut Theta, grads: &Theta, state: &mut AdamState, lr: f64, cfg: &TrainConfig) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let params = theta.tensors_mut();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, g), m), v) in params.into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

/// A labeled training sample.
pub type Sample<'a> = (&'a MonotoneData, &'a Label);

fn sample_loss(data: &MonotoneData, params: &NetParams, steps: usize, label: &Label) -> Result<f64> {
    let (x, y, _) = forward(data, params, steps)?;
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    Ok(0.5 * (d(&x, &label.x) + d(&y, &label.y)))
}

/// Mean loss and its gradient over `batch`.
///
/// Samples are processed in parallel; per-sample gradients are summed in
/// batch order so the result does not depend on scheduling.
pub fn batch_gradient(batch: &[Sample<'_>], params: &NetParams, steps: usize) -> Result<(f64, Theta)> {
    if batch.is_empty() {
        return Err(NetError::LengthMismatch { preds: 0, labels: 0 });
    }
    let per: Vec<Result<(f64, Theta)>> = batch
        .par_iter()
        .map(|(data, label)| {
            let (x, y, cache) = forward(data, params, steps)?;
            let g = backward(data, params, &cache, (&label.x, &label.y))?;
            let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
            Ok((0.5 * (d(&x, &label.x) + d(&y, &label.y)), g))
        })
        .collect();
    let mut total = Theta::zeros(params.num_layers(), params.d);
    let mut loss = 0.0;
    for r in per {
        let (l, g) = r?;
        loss += l;
        total.axpy(1.0, &g);
    }
    let k = batch.len() as f64;
    total.scale(1.0 / k);
    Ok((loss / k, total))
}

/// Mean loss over `samples`.
pub fn evaluate_loss(samples: &[Sample<'_>], params: &NetParams, steps: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(NetError::LengthMismatch { preds: 0, labels: 0 });
    }
    let per: Vec<Result<f64>> = samples.par_iter().map(|(d, l)| sample_loss(d, params, steps, l)).collect();
    let mut total = 0.0;
    for l in per {
        total += l?;
    }
    Ok(total / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Set on the single row whose parameters were kept.
    pub best: bool,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetParams,
    pub log: Vec<EpochLog>,
    /// `None` when no epoch beat the initial parameters.
    pub best_epoch: Option<usize>,
    pub init_val_loss: f64,
}

impl TrainOutcome {
    /// Writes the log as CSV with columns `epoch,train_loss,val_loss,best_flag,lr`.
    pub fn write_log_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_loss", "val_loss", "best_flag", "lr"])?;
        for e in &self.log {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.to_string(),
                u8::from(e.best).to_string(),
                e.lr.to_string(),
            ])?;
        }
        w.flush()
    }
}

fn samples<'a>(data: &'a [MonotoneData], labels: &'a [Label], idx: &[usize]) -> Vec<Sample<'a>> {
    idx.iter().map(|&i| (&data[i], &labels[i])).collect()
}

/// Trains on the bundle's train split with early stopping on the validation
/// split. `observer` sees every epoch's log row and the current parameters.
pub fn train(
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochLog, &NetParams),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let labels = bundle.labels.as_ref().ok_or_else(|| NetError::Invalid("bundle has no labels".into()))?;
    let split = bundle.split.as_ref().ok_or_else(|| NetError::Invalid("bundle has no split".into()))?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(NetError::Invalid("train and validation splits must be non-empty".into()));
    }
    let data: Vec<MonotoneData> = (0..bundle.len())
        .into_par_iter()
        .map(|i| bundle.monotone(i).map_err(|e| NetError::Invalid(format!("instance {i}: {e}"))))
        .collect::<Result<_>>()?;
    let val = samples(&data, labels, &split.val);

    let mut params = init_params(cfg.layers, cfg.d, cfg.seed, cfg.init, cfg.eta_prior)?;
    let mut adam = AdamState::new(&params.theta);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order = split.train.clone();

    let init_val_loss = evaluate_loss(&val, &params, cfg.unroll_steps)?;
    let mut best = (init_val_loss, params.clone(), None);
    let mut lr = cfg.learning_rate;
    let mut fallback = cfg.lr_fallback;
    let mut stale = 0;
    let mut log = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut train_total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = samples(&data, labels, chunk);
            let (l, g) = batch_gradient(&batch, &params, cfg.unroll_steps)?;
            adam_step(&mut params.theta, &g, &mut adam, lr, cfg);
            train_total += l * chunk.len() as f64;
        }
        let train_loss = train_total / order.len() as f64;
        let val_loss = evaluate_loss(&val, &params, cfg.unroll_steps)?;
        let row = EpochLog { epoch, train_loss, val_loss, best: false, lr };
        observer(&row, &params);
        log.push(row);

        if val_loss < best.0 {
            best = (val_loss, params.clone(), Some(epoch));
            stale = 0;
        } else {
            stale += 1;
        }
        if let Some(f) = fallback {
            if stale >= f.after_epochs {
                lr = f.learning_rate;
                fallback = None;
                stale = 0;
                continue;
            }
        }
        if stale >= cfg.patience {
            break;
        }
    }
    let (_, params, best_epoch) = best;
    if let Some(e) = best_epoch {
        log[e - 1].best = true;
    }
    Ok(TrainOutcome { params, log, best_epoch, init_val_loss })
}
