//! The training loop: weighted batches, Adam steps, per-epoch accuracy
//! tracking, and best-validation model selection.

use super::{
    adam_step, backward, forward, weighted_batch, AdamConfig, AdamState, LstmParams, ModelBundle,
    ModelConfig, NormStats,
};
use crate::error::{Error, Result};
use crate::preprocess::TrainingSequence;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_size: 2048, epochs: 100, adam: AdamConfig::default(), seed: 1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.adam.lr <= 0.0 {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Plain and class-balanced accuracy at a threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub plain: f64,
    pub balanced: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_acc: f64,
    pub train_bal_acc: f64,
    pub val_acc: f64,
    pub val_bal_acc: f64,
    pub train_loss: f64,
}

/// Accuracy of a bundle over a labelled set; balanced accuracy averages the
/// per-class recalls over the classes actually present.
pub fn evaluate_set(
    bundle: &ModelBundle,
    set: &[TrainingSequence],
    threshold: f64,
) -> Result<Accuracy> {
    if set.is_empty() {
        return Err(Error::Input("cannot evaluate an empty set".into()));
    }
    let mut correct = [0usize; 2];
    let mut total = [0usize; 2];
    for s in set {
        let p = forward(bundle, &s.features)?;
        let predicted: u8 = if p >= threshold { 1 } else { 0 };
        let class = s.label.min(1) as usize;
        total[class] += 1;
        if predicted == s.label {
            correct[class] += 1;
        }
    }
    let plain = (correct[0] + correct[1]) as f64 / set.len() as f64;
    let recalls: Vec<f64> = (0..2)
        .filter(|&c| total[c] > 0)
        .map(|c| correct[c] as f64 / total[c] as f64)
        .collect();
    let balanced = recalls.iter().sum::<f64>() / recalls.len() as f64;
    Ok(Accuracy { plain, balanced })
}

/// Train on the training split, select by validation balanced accuracy.
///
/// Deterministic for a fixed seed: parameter init, batch sampling, and all
/// arithmetic are sequential f64.
pub fn train(
    train_set: &[TrainingSequence],
    val_set: &[TrainingSequence],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(ModelBundle, Vec<EpochMetrics>)> {
    model_config.validate()?;
    train_config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Input("training split is empty".into()));
    }
    let norm = NormStats::fit(train_set)?;
    let params = LstmParams::init(model_config, train_config.seed);
    let mut bundle = ModelBundle::new(model_config.clone(), norm, params)?;

    if train_config.epochs == 0 {
        return Ok((bundle, Vec::new()));
    }

    let class0: Vec<usize> = (0..train_set.len()).filter(|&i| train_set[i].label == 0).collect();
    let class1: Vec<usize> = (0..train_set.len()).filter(|&i| train_set[i].label != 0).collect();
    if class0.is_empty() || class1.is_empty() {
        return Err(Error::Input(
            "training split has a single class; the weighted sampler degenerates".into(),
        ));
    }

    let mut sampler_rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    sampler_rng.set_stream(1);
    let steps_per_epoch = train_set.len().div_ceil(train_config.batch_size).max(1);
    let mut adam_state = AdamState::new(bundle.params.n_params());
    let mut metrics = Vec::with_capacity(train_config.epochs);
    let mut best: Option<(f64, LstmParams)> = None;

    for epoch in 1..=train_config.epochs {
        let mut loss_sum = 0.0;
        for _ in 0..steps_per_epoch {
            let indices =
                weighted_batch(&class0, &class1, train_config.batch_size, &mut sampler_rng)?;
            let batch: Vec<(&[Vec<f64>], f64)> = indices
                .iter()
                .map(|&i| (train_set[i].features.as_slice(), train_set[i].label as f64))
                .collect();
            let (grads, loss) = backward(&bundle, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Input(format!(
                    "training diverged at epoch {epoch}: loss is not finite"
                )));
            }
            adam_step(&mut bundle.params, &grads, &mut adam_state, &train_config.adam);
            loss_sum += loss;
        }
        let train_acc = evaluate_set(&bundle, train_set, bundle.threshold)?;
        let val_acc = if val_set.is_empty() {
            train_acc
        } else {
            evaluate_set(&bundle, val_set, bundle.threshold)?
        };
        metrics.push(EpochMetrics {
            epoch,
            train_acc: train_acc.plain,
            train_bal_acc: train_acc.balanced,
            val_acc: val_acc.plain,
            val_bal_acc: val_acc.balanced,
            train_loss: loss_sum / steps_per_epoch as f64,
        });
        if best.as_ref().map(|(b, _)| val_acc.balanced > *b).unwrap_or(true) {
            best = Some((val_acc.balanced, bundle.params.clone()));
        }
    }
    if let Some((_, params)) = best {
        bundle.params = params;
    }
    Ok((bundle, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::split;
    use rand::Rng;

    /// Label-0 windows carry a +5 sigma latency shift; everything else is
    /// shared noise.
    fn separable_toy(n0: usize, n1: usize, seed: u64) -> Vec<TrainingSequence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for i in 0..n0 + n1 {
            let label = if i < n0 { 0u8 } else { 1u8 };
            let shift = if label == 0 { 25.0 } else { 0.0 };
            let latency: Vec<f64> =
                (0..6).map(|_| 40.0 + rng.gen_range(-5.0..5.0) + shift).collect();
            let rsrp: Vec<f64> = (0..6).map(|_| -95.0 + rng.gen_range(-4.0..4.0)).collect();
            let sinr: Vec<f64> = (0..6).map(|_| 12.0 + rng.gen_range(-2.0..2.0)).collect();
            let rsrq: Vec<f64> = (0..6).map(|_| -10.0 + rng.gen_range(-1.0..1.0)).collect();
            out.push(TrainingSequence {
                wan_id: if i % 2 == 0 { "v00-a".into() } else { "v00-b".into() },
                t_start: i as i64 * 60,
                t_end: i as i64 * 60 + 50,
                label,
                features: vec![
                    vec![(i % 2) as f64; 6],
                    rsrp,
                    sinr,
                    rsrq,
                    latency,
                ],
            });
        }
        out
    }

    #[test]
    fn separable_toy_reaches_99_percent_within_20_epochs() {
        let data = separable_toy(60, 240, 11);
        let (train_set, val_set) = split(&data, 0.8, 5).unwrap();
        let config = TrainConfig {
            batch_size: 256,
            epochs: 20,
            adam: AdamConfig { lr: 0.05, ..AdamConfig::default() },
            seed: 2,
        };
        let (_, metrics) = train(&train_set, &val_set, &ModelConfig::default(), &config).unwrap();
        let best = metrics.iter().map(|m| m.val_bal_acc).fold(0.0, f64::max);
        assert!(best >= 0.99, "best validation balanced accuracy {best}");
    }

    #[test]
    fn zero_epochs_returns_initialized_bundle_and_no_metrics() {
        let data = separable_toy(5, 20, 3);
        let config = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let (bundle, metrics) = train(&data, &[], &ModelConfig::default(), &config).unwrap();
        assert!(metrics.is_empty());
        assert_eq!(bundle.params, LstmParams::init(&ModelConfig::default(), config.seed));
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable_toy(20, 80, 7);
        let (train_set, val_set) = split(&data, 0.8, 1).unwrap();
        let config = TrainConfig {
            batch_size: 64,
            epochs: 3,
            adam: AdamConfig { lr: 0.01, ..AdamConfig::default() },
            seed: 4,
        };
        let model_config = ModelConfig::default();
        let (b1, m1) = train(&train_set, &val_set, &model_config, &config).unwrap();
        let (b2, m2) = train(&train_set, &val_set, &model_config, &config).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn single_class_training_set_is_rejected() {
        let data = separable_toy(0, 30, 1);
        let err = train(&data, &[], &ModelConfig::default(), &TrainConfig::default());
        assert!(err.is_err());
    }

    #[test]
    fn initial_loss_on_balanced_batches_is_near_ln2() {
        let data = separable_toy(64, 64, 13);
        let norm = NormStats::fit(&data).unwrap();
        let config = ModelConfig::default();
        let bundle =
            ModelBundle::new(config.clone(), norm, LstmParams::init(&config, 21)).unwrap();
        let batch: Vec<(&[Vec<f64>], f64)> =
            data.iter().map(|s| (s.features.as_slice(), s.label as f64)).collect();
        let (_, loss) = backward(&bundle, &batch).unwrap();
        assert!(
            (loss - std::f64::consts::LN_2).abs() < 0.05,
            "initial balanced loss {loss}"
        );
    }
}
