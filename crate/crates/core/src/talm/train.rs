//! Adam training with early stopping on validation micro F1.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::input::PreparedTable;
use super::network::{forward, loss_and_gradients_with, masked_loss};
use super::params::{ModelConfig, ModelParameters};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::metrics::F1Counter;
use crate::table::{LabelClass, TagSequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables
    /// early stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    /// Probability of replacing an input token by `UNK` during training.
    pub word_dropout: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 30,
            patience: 3,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 1.0,
            word_dropout: 0.0,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.word_dropout) {
            return Err(Error::Config("word_dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// A table with per-token targets (`None` for unsupervised tokens).
#[derive(Clone, Debug)]
pub struct TrainingExample {
    pub tokens: PreparedTable,
    pub targets: Vec<Option<LabelClass>>,
}

impl TrainingExample {
    pub fn supervised_tokens(&self) -> usize {
        self.targets.iter().filter(|t| t.is_some()).count()
    }
}

/// A table with gold labels for some of its cells, keyed by token range.
#[derive(Clone, Debug)]
pub struct ValidationExample {
    pub tokens: PreparedTable,
    /// Gold labels of each evaluated cell, truncated like the tokens.
    pub gold: Vec<(std::ops::Range<usize>, TagSequence)>,
}

impl ValidationExample {
    fn targets(&self) -> Vec<Option<LabelClass>> {
        let mut t = vec![None; self.tokens.len()];
        for (range, tags) in &self.gold {
            for (slot, &l) in t[range.clone()].iter_mut().zip(tags.iter()) {
                *slot = Some(l);
            }
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: Option<f64>,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

struct Adam {
    m: ModelParameters,
    v: ModelParameters,
    step: i32,
}

impl Adam {
    fn new(params: &ModelParameters) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut ModelParameters, grads: &ModelParameters, cfg: &TrainConfig) {
        self.step += 1;
        let norm = grads
            .tensors()
            .iter()
            .flat_map(|(_, g)| g.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        let clip = if cfg.clip_norm > 0.0 && norm > cfg.clip_norm {
            cfg.clip_norm / norm
        } else {
            1.0
        };
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        let lr = cfg.learning_rate;
        for ((((_, p), (_, g)), (_, m)), (_, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.len() {
                let gi = g[i] * clip;
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.epsilon);
            }
        }
    }
}

fn validate_model(params: &ModelParameters, config: &ModelConfig, val: &[ValidationExample]) -> (f64, f64) {
    let mut counter = F1Counter::new();
    let mut loss = 0.0;
    let mut n = 0usize;
    for ex in val {
        let fwd = forward(params, config, &ex.tokens);
        for (range, gold) in &ex.gold {
            let pred: Vec<LabelClass> = range
                .clone()
                .map(|t| LabelClass::from_index(super::network::argmax(fwd.probs.row(t))).expect("label"))
                .collect();
            counter.add(&gold[..pred.len()], &pred).expect("aligned");
        }
        let targets = ex.targets();
        let count = targets.iter().filter(|t| t.is_some()).count();
        if let Some(l) = masked_loss(&fwd, &targets) {
            loss += l * count as f64;
            n += count;
        }
    }
    (counter.report().micro_f1, if n == 0 { 0.0 } else { loss / n as f64 })
}

/// Train from `initial` on `train`, one Adam step per table, tables shuffled
/// every epoch.
///
/// With a non-empty validation set, the run stops after `patience` epochs
/// without improvement and returns the best parameters seen. An epoch
/// improves when validation F1 rises, or stays equal while validation loss
/// falls. Without validation data every epoch runs and the final parameters
/// are returned.
pub fn fit(
    initial: ModelParameters,
    config: &ModelConfig,
    train: &[TrainingExample],
    val: &[ValidationExample],
    cfg: &TrainConfig,
) -> Result<(ModelParameters, TrainHistory)> {
    cfg.validate()?;
    let usable: Vec<&TrainingExample> = train.iter().filter(|e| e.supervised_tokens() > 0).collect();
    if usable.is_empty() {
        return Err(Error::validation("no supervised tokens to train on"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut params = initial;
    let mut adam = Adam::new(&params);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, f64, ModelParameters)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..usable.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut tokens = 0usize;
        for &i in &order {
            let ex = usable[i];
            let noisy;
            let input = if cfg.word_dropout > 0.0 {
                let mut t = ex.tokens.clone();
                for id in t.token_ids.iter_mut() {
                    if rng.random::<f64>() < cfg.word_dropout {
                        *id = Vocabulary::UNK;
                    }
                }
                noisy = t;
                &noisy
            } else {
                &ex.tokens
            };
            let (loss, grads) = loss_and_gradients_with(&params, config, input, &ex.targets, Some(&mut rng))
                .expect("example has supervised tokens");
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            let n = ex.supervised_tokens();
            total += loss * n as f64;
            tokens += n;
            adam.update(&mut params, &grads, cfg);
        }
        if !params.all_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: f64::NAN,
            });
        }
        let train_loss = total / tokens as f64;
        if val.is_empty() {
            history.epochs.push(EpochRecord {
                epoch,
                train_loss,
                val_f1: None,
                val_loss: None,
            });
            history.best_epoch = epoch;
            continue;
        }
        let (f1, vloss) = validate_model(&params, config, val);
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_f1: Some(f1),
            val_loss: Some(vloss),
        });
        let improved = match &best {
            None => true,
            Some((bf, bl, _)) => f1 > *bf || (f1 == *bf && vloss < *bl),
        };
        if improved {
            best = Some((f1, vloss, params.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    let out = match best {
        Some((_, _, p)) => p,
        None => params,
    };
    Ok((out, history))
}
