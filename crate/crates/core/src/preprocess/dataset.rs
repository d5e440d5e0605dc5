//! Labelling, train/validation splitting, and the sequence file format.

use super::stages::FeatureMatrix;
use super::{PreprocessConfig, RejectionReport, FEATURE_ROWS};
use crate::error::{Error, Result};
use crate::telemetry::ActionRecord;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// A labelled 5×L window. Label 0 means "action needed", 1 means normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSequence {
    pub wan_id: String,
    pub t_start: i64,
    pub t_end: i64,
    pub label: u8,
    /// 5 rows of L values; row order wan, rsrp, sinr, rsrq, latency.
    pub features: Vec<Vec<f64>>,
}

impl TrainingSequence {
    pub fn seq_len(&self) -> usize {
        self.features[0].len()
    }

    /// Feature column at one time step.
    pub fn column(&self, t: usize) -> [f64; FEATURE_ROWS] {
        [
            self.features[0][t],
            self.features[1][t],
            self.features[2][t],
            self.features[3][t],
            self.features[4][t],
        ]
    }
}

/// What [`label`] did.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSummary {
    pub positives: usize,
    pub negatives: usize,
    /// Actions whose wan_id never appears in the windows; ignored with a warning.
    pub ignored_actions: usize,
}

/// Label windows against the action log.
///
/// Each action at `t` marks the interval `[t - lag, t - lag + window]`;
/// any window of the same modem intersecting a marked interval gets label 0.
pub fn label(
    windows: Vec<FeatureMatrix>,
    actions: &[ActionRecord],
    config: &PreprocessConfig,
) -> (Vec<TrainingSequence>, LabelSummary) {
    let known: BTreeSet<&str> = windows.iter().map(|w| w.wan_id.as_str()).collect();
    let mut summary = LabelSummary::default();
    let mut marked: Vec<(&str, i64, i64)> = Vec::with_capacity(actions.len());
    for a in actions {
        if !known.contains(a.wan_id.as_str()) {
            summary.ignored_actions += 1;
            continue;
        }
        let anchor = a.time - config.label_lag_s;
        marked.push((a.wan_id.as_str(), anchor, anchor + config.label_window_s));
    }
    let mut sequences = Vec::with_capacity(windows.len());
    for w in windows {
        let positive = marked
            .iter()
            .any(|&(id, lo, hi)| id == w.wan_id && w.t_start <= hi && w.t_end >= lo);
        if positive {
            summary.positives += 1;
        } else {
            summary.negatives += 1;
        }
        sequences.push(TrainingSequence {
            wan_id: w.wan_id,
            t_start: w.t_start,
            t_end: w.t_end,
            label: if positive { 0 } else { 1 },
            features: w.rows,
        });
    }
    (sequences, summary)
}

/// Seeded stratified shuffle-split. Both parts keep at least one member of
/// every class that has two or more; output order is normalized by
/// (wan_id, t_start).
pub fn split(
    sequences: &[TrainingSequence],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<TrainingSequence>, Vec<TrainingSequence>)> {
    if sequences.is_empty() {
        return Err(Error::Input("cannot split an empty dataset".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!(
            "split ratio {ratio} must be strictly between 0 and 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..sequences.len())
            .filter(|&i| sequences[i].label == class)
            .collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = if n == 1 {
            1
        } else {
            ((ratio * n as f64).floor() as usize).clamp(1, n - 1)
        };
        for (k, &i) in idx.iter().enumerate() {
            if k < n_train {
                train.push(sequences[i].clone());
            } else {
                val.push(sequences[i].clone());
            }
        }
    }
    let key = |s: &TrainingSequence| (s.wan_id.clone(), s.t_start, s.t_end);
    train.sort_by_key(key);
    val.sort_by_key(key);
    Ok((train, val))
}

/// Write sequences as NDJSON, one object per line.
pub fn save_sequences(path: impl AsRef<Path>, sequences: &[TrainingSequence]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    for s in sequences {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_sequences(path: impl AsRef<Path>) -> Result<Vec<TrainingSequence>> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let mut sequences = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: TrainingSequence = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(format!("sequence line {}: {e}", i + 1)))?;
        if s.features.len() != FEATURE_ROWS || s.features.iter().any(|r| r.len() != s.seq_len()) {
            return Err(Error::Schema(format!("sequence line {}: ragged feature matrix", i + 1)));
        }
        sequences.push(s);
    }
    Ok(sequences)
}

/// Rejection report as `reason,count` CSV.
pub fn save_rejects(path: impl AsRef<Path>, report: &RejectionReport) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(out, "reason,count")?;
    for (reason, count) in report.iter() {
        writeln!(out, "{reason},{count}")?;
    }
    out.flush()?;
    Ok(())
}
