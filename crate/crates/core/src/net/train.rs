//! Minibatch training loop with Adam or plain SGD, global-norm clipping,
//! and early stopping on validation accuracy.
//!
//! Determinism: initialization, epoch shuffles, and dropout masks all
//! derive from the config seed. Per-sample gradients are computed in
//! parallel but reduced strictly in batch order, so two runs with the
//! same seed produce byte-identical parameters regardless of thread
//! count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::market::LabeledWindow;

use super::{
    backward_params_only, bce_loss, clip_gradients, evaluate, forward, he_normal_init, mix_seed,
    GradTarget, Mode, NetError, NetworkArchitecture, ParameterSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Optimizer {
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    Sgd,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    /// Global-norm bound applied to each batch gradient; None disables.
    pub clip_norm: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many consecutive epochs without a strict
    /// improvement in validation accuracy; None trains to the last epoch.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            optimizer: Optimizer::default(),
            learning_rate: 1e-3,
            clip_norm: None,
            batch_size: 64,
            epochs: 30,
            patience: Some(5),
            seed: 0,
        }
    }
}

/// Per-epoch training diagnostics. Train loss and accuracy are running
/// minibatch statistics (train mode, masks applied); validation metrics
/// come from a full eval-mode pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Index into `epochs` of the snapshot the returned parameters come
    /// from; None when no validation set was given (last epoch wins).
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParameterSet,
    pub history: TrainHistory,
}

pub fn train(
    arch: &NetworkArchitecture,
    train_set: &[LabeledWindow],
    val_set: &[LabeledWindow],
    cfg: &TrainingConfig,
) -> Result<TrainOutcome, NetError> {
    if train_set.is_empty() {
        return Err(NetError::Config("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(NetError::Config("batch_size must be positive".into()));
    }
    if cfg.epochs == 0 {
        return Err(NetError::Config("epochs must be positive".into()));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate >= 0.0) {
        return Err(NetError::Config(format!(
            "learning rate {} must be finite and non-negative",
            cfg.learning_rate
        )));
    }
    for w in train_set.iter().chain(val_set) {
        let (h, wd, c) = w.tensor.shape();
        if h != arch.input_side || wd != arch.input_side || c != arch.input_channels {
            return Err(NetError::Shape(format!(
                "window {} tensor {h}x{wd}x{c} does not match architecture input {side}x{side}x{ch}",
                w.window_id,
                side = arch.input_side,
                ch = arch.input_channels
            )));
        }
    }

    let mut params = he_normal_init(arch, cfg.seed)?;
    let flat_len = params.flat_len();
    let mut adam_m = vec![0.0f64; flat_len];
    let mut adam_v = vec![0.0f64; flat_len];
    let mut grad_flat: Vec<f64> = Vec::with_capacity(flat_len);
    let mut step_count = 0u64;

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ParameterSet)> = None;
    let mut stale_epochs = 0usize;

    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 0x50FF, epoch as u64]));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<(ParameterSet, f64, bool)> = batch
                .par_iter()
                .map(|&wi| {
                    let w = &train_set[wi];
                    let mode = Mode::Train {
                        dropout_seed: mix_seed(&[cfg.seed, 0xD8, epoch as u64, w.window_id]),
                    };
                    let label = f64::from(w.label);
                    let cache = forward(arch, &params, &w.tensor, mode)?;
                    let loss = bce_loss(cache.prob, label);
                    let grads =
                        backward_params_only(arch, &params, &cache, GradTarget::Loss { label })?;
                    let hit = (cache.prob > 0.5) == (w.label == 1);
                    Ok((grads, loss, hit))
                })
                .collect::<Result<Vec<_>, NetError>>()?;

            let mut batch_grad = params.zeros_like();
            for (grads, loss, hit) in &results {
                if !loss.is_finite() {
                    return Err(NetError::NonFinite(format!(
                        "training loss at epoch {epoch}, batch {step}"
                    )));
                }
                batch_grad.add_scaled(grads, 1.0);
                loss_sum += loss;
                correct += usize::from(*hit);
            }
            batch_grad.scale(1.0 / results.len() as f64);
            if !batch_grad.iter_all_finite() {
                return Err(NetError::NonFinite(format!(
                    "batch gradient at epoch {epoch}, batch {step}"
                )));
            }
            if let Some(bound) = cfg.clip_norm {
                clip_gradients(&mut batch_grad, bound);
            }

            step_count += 1;
            batch_grad.write_flat(&mut grad_flat);
            match cfg.optimizer {
                Optimizer::Adam { beta1, beta2, epsilon } => {
                    let bc1 = 1.0 - beta1.powi(step_count as i32);
                    let bc2 = 1.0 - beta2.powi(step_count as i32);
                    params.visit_flat_mut(|k, w| {
                        let g = grad_flat[k];
                        adam_m[k] = beta1 * adam_m[k] + (1.0 - beta1) * g;
                        adam_v[k] = beta2 * adam_v[k] + (1.0 - beta2) * g * g;
                        let m_hat = adam_m[k] / bc1;
                        let v_hat = adam_v[k] / bc2;
                        *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                    });
                }
                Optimizer::Sgd => {
                    params.visit_flat_mut(|k, w| {
                        *w -= cfg.learning_rate * grad_flat[k];
                    });
                }
            }
        }

        let (val_loss, val_acc) = if val_set.is_empty() {
            (None, None)
        } else {
            let m = evaluate(arch, &params, val_set)?;
            (Some(m.loss), Some(m.accuracy))
        };
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / n as f64,
            train_acc: correct as f64 / n as f64,
            val_loss,
            val_acc,
        });

        if let Some(acc) = val_acc {
            // Strict improvement required: accuracy ties keep the earlier
            // epoch's snapshot.
            let improved = best.as_ref().is_none_or(|(_, b, _)| acc > *b);
            if improved {
                best = Some((epoch, acc, params.clone()));
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if let Some(patience) = cfg.patience {
                    if stale_epochs >= patience {
                        break;
                    }
                }
            }
        }
    }

    let (best_epoch, final_params) = match best {
        Some((e, _, p)) => (Some(e), p),
        None => (None, params),
    };
    Ok(TrainOutcome {
        params: final_params,
        history: TrainHistory { epochs: history, best_epoch },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::DenseLayerSpec;
    use crate::tensor::Tensor3;

    fn logistic_arch() -> NetworkArchitecture {
        NetworkArchitecture {
            input_side: 2,
            input_channels: 1,
            conv: vec![],
            dense: vec![],
        }
    }

    fn mlp_arch() -> NetworkArchitecture {
        NetworkArchitecture {
            input_side: 2,
            input_channels: 1,
            conv: vec![],
            dense: vec![DenseLayerSpec { units: 6, dropout: 0.25 }],
        }
    }

    /// Separable toy set: label is 1 iff the cell values are positive.
    fn separable(n: usize) -> Vec<LabeledWindow> {
        (0..n)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let mag = 0.5 + (k % 5) as f64 * 0.3;
                LabeledWindow {
                    window_id: k as u64,
                    side: 2,
                    tensor: Tensor3::from_vec(2, 2, 1, vec![sign * mag; 4]),
                    label: u8::from(sign > 0.0),
                    trade_ids: vec![0; 4],
                }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_at_init() {
        let arch = mlp_arch();
        let data = separable(8);
        for optimizer in [Optimizer::Sgd, Optimizer::default()] {
            let cfg = TrainingConfig {
                optimizer,
                learning_rate: 0.0,
                epochs: 3,
                batch_size: 4,
                seed: 9,
                patience: None,
                ..TrainingConfig::default()
            };
            let out = train(&arch, &data, &[], &cfg).unwrap();
            let init = he_normal_init(&arch, 9).unwrap();
            assert_eq!(out.params, init);
        }
    }

    #[test]
    fn sgd_learns_a_separable_rule() {
        let arch = logistic_arch();
        let data = separable(16);
        let cfg = TrainingConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.5,
            epochs: 60,
            batch_size: 4,
            patience: None,
            seed: 1,
            ..TrainingConfig::default()
        };
        let out = train(&arch, &data, &[], &cfg).unwrap();
        let m = evaluate(&arch, &out.params, &data).unwrap();
        assert_eq!(m.accuracy, 1.0);
        let h = &out.history.epochs;
        assert!(h.last().unwrap().train_loss < h.first().unwrap().train_loss);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let arch = mlp_arch();
        let data = separable(12);
        let val = separable(6);
        let cfg = TrainingConfig {
            epochs: 5,
            batch_size: 3,
            seed: 33,
            clip_norm: Some(1.0),
            patience: None,
            ..TrainingConfig::default()
        };
        let a = train(&arch, &data, &val, &cfg).unwrap();
        let b = train(&arch, &data, &val, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
        let c = train(
            &arch,
            &data,
            &val,
            &TrainingConfig { seed: 34, ..cfg.clone() },
        )
        .unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn early_stopping_keeps_the_best_epoch_snapshot() {
        let arch = logistic_arch();
        let data = separable(16);
        let val = separable(8);
        let cfg = TrainingConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.5,
            epochs: 100,
            batch_size: 4,
            patience: Some(3),
            seed: 2,
            ..TrainingConfig::default()
        };
        let out = train(&arch, &data, &val, &cfg).unwrap();
        // The rule is learned quickly; once val accuracy saturates no
        // strict improvement is possible, so patience must fire early.
        assert!(out.history.epochs.len() < 100);
        let best = out.history.best_epoch.unwrap();
        let best_acc = out.history.epochs[best].val_acc.unwrap();
        let max_acc = out
            .history
            .epochs
            .iter()
            .filter_map(|e| e.val_acc)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best_acc, max_acc);
        // Returned parameters really are the snapshot from `best`.
        let m = evaluate(&arch, &out.params, &val).unwrap();
        assert_eq!(m.accuracy, best_acc);
        // First epoch attaining the max is the one kept.
        let first_attaining = out
            .history
            .epochs
            .iter()
            .position(|e| e.val_acc == Some(max_acc))
            .unwrap();
        assert_eq!(best, first_attaining);
    }

    #[test]
    fn shape_mismatched_windows_are_rejected_up_front() {
        let arch = logistic_arch();
        let mut data = separable(4);
        data[2].tensor = Tensor3::zeros(3, 3, 1);
        let cfg = TrainingConfig::default();
        assert!(train(&arch, &data, &[], &cfg).is_err());
    }
}
