use std::f64::consts::PI;

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{metric_collaborative, metric_discriminative};
use super::objective::famae_loss;
use super::params::{lit, EncoderParameters, Real};
use super::{FamaeError, ModelConfig};
use crate::data::{ItemTable, Window};
use crate::rng::{derive_seed, stream_rng};

const SHUFFLE_STREAM: u64 = 20;
const BATCH_STREAM: u64 = 21;

/// Optimizer and loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    /// Cutoff of the validation recall used for early stopping.
    pub eval_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 256,
            epochs: 50,
            patience: 3,
            eval_k: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FamaeError> {
        let bad = |m: &str| Err(FamaeError::Config(m.into()));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight decay must be finite and non-negative");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.eval_k == 0 {
            return bad("eval_k must be positive");
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
}

impl<T: Real> AdamW<T> {
    pub fn new(len: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        self.step += 1;
        let b1: T = lit(self.beta1);
        let b2: T = lit(self.beta2);
        let c1: T = lit(1.0 - self.beta1.powi(self.step));
        let c2: T = lit(1.0 - self.beta2.powi(self.step));
        let eps: T = lit(self.eps);
        let lr_t: T = lit(lr);
        let decay: T = lit(lr * self.weight_decay);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] = params[i] - decay * params[i] - lr_t * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Cosine decay from `base` at step 0 towards 0 at `total`.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    base * 0.5 * (1.0 + (PI * step as f64 / total as f64).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive evaluations without a strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn update(&mut self, metric: f64) -> StopDecision {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    /// Validation recall with all target fields masked.
    pub metric1: Option<f64>,
    /// Validation recall with only the item ID masked.
    pub metric2: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParameters<f32>,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were returned, when validation was available.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Trains a fresh encoder on `train_windows`, selecting the epoch with the best validation
/// collaborative recall. Without validation windows the final parameters are returned.
pub fn train(
    items: &ItemTable,
    train_windows: &[Window],
    valid_windows: &[Window],
    model: &ModelConfig,
    cfg: &TrainConfig,
    max_len: usize,
) -> Result<TrainOutcome, FamaeError> {
    cfg.validate()?;
    let sizes = items.schema().vocab_sizes;
    let mut params = EncoderParameters::<f32>::init(model, &sizes, max_len)?;
    let mut log = Vec::new();
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            params,
            log,
            best_epoch: None,
            stopped_early: false,
        });
    }
    if train_windows.is_empty() {
        return Err(FamaeError::EmptySplit);
    }
    let batches_per_epoch = train_windows.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let mut opt = AdamW::new(params.len(), cfg);
    let mut stopper = EarlyStopping::new(cfg.patience.max(1));
    let mut best: Option<(usize, EncoderParameters<f32>)> = None;
    let mut step = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_windows.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut stream_rng(model.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut lr = cfg.lr;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Window> = idx.iter().map(|&i| train_windows[i].clone()).collect();
            let seed = derive_seed(model.seed, &[BATCH_STREAM, epoch as u64, b as u64]);
            let diverged = |window: usize, params: &EncoderParameters<f32>| FamaeError::Diverged {
                epoch,
                window,
                last_good: Box::new(params.clone()),
            };
            let lg = match famae_loss(&params, items, &batch, seed) {
                Ok(lg) => lg,
                Err(FamaeError::NonFiniteLoss { window }) => return Err(diverged(idx[window], &params)),
                Err(e) => return Err(e),
            };
            if !lg.loss.is_finite() || lg.grad.iter().any(|g| !g.is_finite()) {
                return Err(diverged(idx[0], &params));
            }
            lr = cosine_lr(cfg.lr, step, total_steps);
            opt.step(&mut params.values, &lg.grad, lr);
            step += 1;
            loss_sum += f64::from(lg.loss) * batch.len() as f64;
        }
        let loss = loss_sum / train_windows.len() as f64;
        let (metric1, metric2) = if valid_windows.is_empty() {
            (None, None)
        } else {
            (
                Some(metric_collaborative(&params, items, valid_windows, cfg.eval_k)?),
                Some(metric_discriminative(&params, items, valid_windows, cfg.eval_k)?),
            )
        };
        info!("epoch {epoch}: loss {loss:.5}, metric1 {metric1:?}, metric2 {metric2:?}");
        log.push(EpochLog {
            epoch,
            loss,
            lr,
            metric1,
            metric2,
        });
        if let Some(m) = metric1 {
            match stopper.update(m) {
                StopDecision::Improved => best = Some((epoch, params.clone())),
                StopDecision::Continue => {}
                StopDecision::Stop => {
                    stopped_early = epoch < cfg.epochs;
                    break;
                }
            }
        }
    }
    let (best_epoch, params) = match best {
        Some((e, p)) => (Some(e), p),
        None => (None, params),
    };
    Ok(TrainOutcome {
        params,
        log,
        best_epoch,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_three_stops_after_four_worsening_evaluations() {
        let mut s = EarlyStopping::new(3);
        let metrics = [0.5, 0.4, 0.3, 0.2, 0.1, 0.0];
        let mut evaluations = 0;
        for m in metrics {
            evaluations += 1;
            if s.update(m) == StopDecision::Stop {
                break;
            }
        }
        assert_eq!(evaluations, 4);
        assert_eq!(s.best(), Some(0.5));
    }

    #[test]
    fn improvement_resets_patience() {
        let mut s = EarlyStopping::new(2);
        assert_eq!(s.update(0.1), StopDecision::Improved);
        assert_eq!(s.update(0.1), StopDecision::Continue);
        assert_eq!(s.update(0.2), StopDecision::Improved);
        assert_eq!(s.update(0.0), StopDecision::Continue);
        assert_eq!(s.update(0.0), StopDecision::Stop);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(1e-3, 0, 10), 1e-3);
        assert!((cosine_lr(1e-3, 5, 10) - 5e-4).abs() < 1e-15);
        assert!(cosine_lr(1e-3, 10, 10).abs() < 1e-15);
    }

    #[test]
    fn adamw_first_step_moves_by_lr() {
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut opt = AdamW::<f64>::new(2, &cfg);
        let mut p = vec![1.0, -1.0];
        opt.step(&mut p, &[0.5, -2.0], 0.1);
        // Bias-corrected first step is lr * sign(g) up to eps.
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 0.9).abs() < 1e-6, "{p:?}");
    }

    #[test]
    fn decoupled_decay_shrinks_without_gradient() {
        let cfg = TrainConfig {
            weight_decay: 0.5,
            ..TrainConfig::default()
        };
        let mut opt = AdamW::<f64>::new(1, &cfg);
        let mut p = vec![2.0];
        opt.step(&mut p, &[0.0], 0.1);
        assert!((p[0] - 1.9).abs() < 1e-12);
    }
}
