//! Cleaning, downsampling, sequence assembly, and action-lag labelling.
//!
//! The stages are pure functions over per-modem series:
//!
//! 1. [`clean`]: drop out-of-range and geographically implausible records,
//!    forward-fill short gaps on the base grid, split on long ones.
//! 2. [`downsample`]: block-mean reduction by a factor of N (de-noising).
//! 3. [`assemble`]: tile (training) or slide (inference) length-L windows
//!    into 5×L feature matrices.
//! 4. [`label`]: mark windows that precede a restart action by the labelling
//!    lag as class 0 ("action needed"), everything else class 1.

mod dataset;
mod stages;

pub use dataset::{
    label, load_sequences, save_rejects, save_sequences, split, LabelSummary, TrainingSequence,
};
pub use stages::{assemble, clean, downsample, AssembleMode, CleanRecord, FeatureMatrix, Segment};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Number of feature rows in a window: wan indicator, rsrp, sinr, rsrq, latency.
pub const FEATURE_ROWS: usize = 5;

/// Fixed row order of every feature matrix.
pub const FEATURE_NAMES: [&str; FEATURE_ROWS] = ["wan", "rsrp", "sinr", "rsrq", "latency"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Downsampling factor N.
    pub n_downsample: usize,
    /// Sequence length L.
    pub seq_len: usize,
    /// Average delay between anomaly onset and the recorded action, seconds.
    pub label_lag_s: i64,
    /// Width of the positive labelling window, seconds.
    pub label_window_s: i64,
    /// Longest gap (in base-grid ticks) bridged by forward-fill.
    pub max_gap_fill: usize,
    /// Records farther than this from every site are outliers.
    pub geo_cutoff_km: f64,
    /// Base telemetry grid, seconds.
    pub sample_interval_s: i64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            n_downsample: 2,
            seq_len: 6,
            label_lag_s: 600,
            label_window_s: 300,
            max_gap_fill: 6,
            geo_cutoff_km: 30.0,
            sample_interval_s: 5,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_downsample < 1 {
            return Err(Error::Config("n_downsample must be >= 1".into()));
        }
        if self.seq_len < 1 {
            return Err(Error::Config("seq_len must be >= 1".into()));
        }
        if self.label_lag_s < 0 || self.label_window_s < 0 {
            return Err(Error::Config("label lag and window must be >= 0".into()));
        }
        if self.sample_interval_s < 1 {
            return Err(Error::Config("sample_interval_s must be >= 1".into()));
        }
        if self.geo_cutoff_km <= 0.0 {
            return Err(Error::Config("geo_cutoff_km must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-reason counts of records dropped by [`clean`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectionReport {
    counts: BTreeMap<String, u64>,
}

impl RejectionReport {
    pub fn bump(&mut self, reason: &str) {
        *self.counts.entry(reason.to_string()).or_default() += 1;
    }

    pub fn count(&self, reason: &str) -> u64 {
        self.counts.get(reason).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn merge(&mut self, other: &RejectionReport) {
        for (reason, n) in &other.counts {
            *self.counts.entry(reason.clone()).or_default() += n;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

use crate::telemetry::{ActionRecord, Partitions, SiteTopology};

/// Clean, downsample, and window every partition. Output is normalized by
/// (wan_id, t_start) so per-modem parallelism could never change it.
pub fn build_windows(
    partitions: &Partitions,
    topology: &SiteTopology,
    config: &PreprocessConfig,
    mode: AssembleMode,
) -> Result<(Vec<FeatureMatrix>, RejectionReport)> {
    config.validate()?;
    let mut windows = Vec::new();
    let mut report = RejectionReport::default();
    for (wan_id, samples) in partitions {
        let (segments, part_report) = clean(wan_id, samples, config, topology);
        report.merge(&part_report);
        for segment in &segments {
            let down = downsample(segment, config.n_downsample)?;
            windows.extend(assemble(&down, config.seq_len, mode));
        }
    }
    windows.sort_by(|a, b| (&a.wan_id, a.t_start).cmp(&(&b.wan_id, b.t_start)));
    Ok((windows, report))
}

/// The full training pipeline: windows in training mode plus labels.
pub fn build_training_set(
    partitions: &Partitions,
    actions: &[ActionRecord],
    topology: &SiteTopology,
    config: &PreprocessConfig,
) -> Result<(Vec<TrainingSequence>, RejectionReport, LabelSummary)> {
    let (windows, report) = build_windows(partitions, topology, config, AssembleMode::Training)?;
    let (sequences, summary) = label(windows, actions, config);
    Ok((sequences, report, summary))
}
