//! From-scratch LSTM classifier: a single LSTM layer followed by two linear
//! layers with a sigmoid output, trained with Adam on binary cross entropy
//! under an inverse-class-frequency batch sampler.
//!
//! Everything runs in `f64` and is deterministic under a fixed seed. The
//! analytic backward pass is checked against central finite differences.

mod adam;
mod backward;
mod forward;
mod io;
mod sampler;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use backward::{backward, finite_difference_max_error, gradient_check};
pub use forward::{bce_loss, forward, sigmoid, BCE_CLAMP};
pub use io::{load_model, save_model, MODEL_VERSION};
pub use sampler::{item_weights, weighted_batch, weighted_sample};
pub use train::{evaluate_set, train, Accuracy, EpochMetrics, TrainConfig};

use crate::error::{Error, Result};
use crate::preprocess::{TrainingSequence, FEATURE_ROWS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Network dimensions. The reference configuration is 5 features × 6 steps
/// into a hidden state of 2, then 2 → 8 → 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_size: usize,
    pub seq_len: usize,
    pub hidden_size: usize,
    pub fc1_out: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { input_size: FEATURE_ROWS, seq_len: 6, hidden_size: 2, fc1_out: 8 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.seq_len == 0 || self.hidden_size == 0 || self.fc1_out == 0 {
            return Err(Error::Config("model dimensions must all be >= 1".into()));
        }
        Ok(())
    }
}

/// LSTM gate weights plus the two dense layers.
///
/// Gate rows are blocked in the order input, forget, candidate, output;
/// block `g` occupies rows `g*hidden .. (g+1)*hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmBlock {
    /// (4·hidden) × input
    pub w_ih: Vec<Vec<f64>>,
    /// (4·hidden) × hidden
    pub w_hh: Vec<Vec<f64>>,
    /// 4·hidden
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseBlock {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// All trainable parameters. Doubles as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub lstm: LstmBlock,
    pub fc1: DenseBlock,
    pub fc2: DenseBlock,
}

impl LstmParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (i, h, f) = (config.input_size, config.hidden_size, config.fc1_out);
        LstmParams {
            lstm: LstmBlock {
                w_ih: vec![vec![0.0; i]; 4 * h],
                w_hh: vec![vec![0.0; h]; 4 * h],
                b: vec![0.0; 4 * h],
            },
            fc1: DenseBlock { w: vec![vec![0.0; h]; f], b: vec![0.0; f] },
            fc2: DenseBlock { w: vec![vec![0.0; f]; 1], b: vec![0.0; 1] },
        }
    }

    /// Seeded uniform init in [-k, k], k = 1/sqrt(hidden_size).
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let k = 1.0 / (config.hidden_size as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(config);
        params.for_each_mut(|p| *p = rng.gen_range(-k..=k));
        params
    }

    pub fn n_params(&self) -> usize {
        let mut n = 0;
        let mut clone = self.clone();
        clone.for_each_mut(|_| n += 1);
        n
    }

    /// Visit every parameter in a fixed order (lstm w_ih, w_hh, b, fc1 w, b,
    /// fc2 w, b; row-major within each).
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for row in &mut self.lstm.w_ih {
            row.iter_mut().for_each(&mut f);
        }
        for row in &mut self.lstm.w_hh {
            row.iter_mut().for_each(&mut f);
        }
        self.lstm.b.iter_mut().for_each(&mut f);
        for row in &mut self.fc1.w {
            row.iter_mut().for_each(&mut f);
        }
        self.fc1.b.iter_mut().for_each(&mut f);
        for row in &mut self.fc2.w {
            row.iter_mut().for_each(&mut f);
        }
        self.fc2.b.iter_mut().for_each(&mut f);
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        let mut clone = self.clone();
        clone.for_each_mut(|p| flat.push(*p));
        flat
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        self.for_each_mut(|p| *p = *it.next().expect("flat vector as long as params"));
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        let mut clone = self.clone();
        clone.for_each_mut(|p| ok &= p.is_finite());
        ok
    }

    /// Verify shapes against a config, naming the offending field.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let (i, h, f) = (config.input_size, config.hidden_size, config.fc1_out);
        let expect = |name: &str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Model(format!(
                    "{name} has shape {}x{}, expected {}x{} for hidden_size {h}",
                    got.0, got.1, want.0, want.1
                )))
            }
        };
        let dims = |m: &Vec<Vec<f64>>| (m.len(), m.first().map(Vec::len).unwrap_or(0));
        expect("lstm.w_ih", dims(&self.lstm.w_ih), (4 * h, i))?;
        expect("lstm.w_hh", dims(&self.lstm.w_hh), (4 * h, h))?;
        if self.lstm.w_ih.iter().any(|r| r.len() != i)
            || self.lstm.w_hh.iter().any(|r| r.len() != h)
            || self.fc1.w.iter().any(|r| r.len() != h)
            || self.fc2.w.iter().any(|r| r.len() != f)
        {
            return Err(Error::Model("weight matrix rows are ragged".into()));
        }
        expect("lstm.b", (self.lstm.b.len(), 1), (4 * h, 1))?;
        expect("fc1.w", dims(&self.fc1.w), (f, h))?;
        expect("fc1.b", (self.fc1.b.len(), 1), (f, 1))?;
        expect("fc2.w", dims(&self.fc2.w), (1, f))?;
        expect("fc2.b", (self.fc2.b.len(), 1), (1, 1))?;
        Ok(())
    }
}

/// Per-feature z-score statistics, fitted on the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Identity normalization (mean 0, std 1).
    pub fn identity(n_features: usize) -> Self {
        NormStats { mean: vec![0.0; n_features], std: vec![1.0; n_features] }
    }

    /// Fit over every value of every sequence, per feature row.
    pub fn fit(sequences: &[TrainingSequence]) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::Input("cannot fit normalization on an empty set".into()));
        }
        let rows = sequences[0].features.len();
        let mut mean = vec![0.0; rows];
        let mut count = 0usize;
        for s in sequences {
            for (f, row) in s.features.iter().enumerate() {
                mean[f] += row.iter().sum::<f64>();
            }
            count += s.seq_len();
        }
        for m in &mut mean {
            *m /= count as f64;
        }
        let mut var = vec![0.0; rows];
        for s in sequences {
            for (f, row) in s.features.iter().enumerate() {
                var[f] += row.iter().map(|x| (x - mean[f]) * (x - mean[f])).sum::<f64>();
            }
        }
        let std = var
            .into_iter()
            .map(|v| (v / count as f64).sqrt().max(1e-8))
            .collect();
        Ok(NormStats { mean, std })
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.mean.len() != n_features || self.std.len() != n_features {
            return Err(Error::Model(format!(
                "norm has {} features, expected {n_features}",
                self.mean.len()
            )));
        }
        if self.std.iter().any(|&s| !(s > 0.0) || !s.is_finite())
            || self.mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::Model("norm statistics must be finite with std > 0".into()));
        }
        Ok(())
    }
}

/// A trained, servable model: dimensions, normalization, parameters, and the
/// decision threshold. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: u32,
    pub config: ModelConfig,
    pub norm: NormStats,
    pub threshold: f64,
    #[serde(flatten)]
    pub params: LstmParams,
}

impl ModelBundle {
    pub fn new(config: ModelConfig, norm: NormStats, params: LstmParams) -> Result<Self> {
        let bundle =
            ModelBundle { version: MODEL_VERSION, config, norm, threshold: 0.5, params };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "model version {} unsupported (expected {MODEL_VERSION})",
                self.version
            )));
        }
        self.config.validate()?;
        self.params.check_shapes(&self.config)?;
        self.norm.validate(self.config.input_size)?;
        if !self.params.all_finite() {
            return Err(Error::Model("parameters contain non-finite values".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Model("threshold must be in [0, 1]".into()));
        }
        Ok(())
    }
}
