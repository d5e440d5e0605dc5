//! Offline classifier metrics, detection lead times, and the before/after
//! report renderer.

use super::{AbRun, OutageMetrics};
use crate::decision::DecisionEvent;
use crate::error::{Error, Result};
use crate::nn::{forward, ModelBundle};
use crate::preprocess::TrainingSequence;
use crate::sim::GroundTruthEvent;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Confusion-matrix metrics at a fixed threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierReport {
    /// confusion[actual][predicted], classes {0, 1}.
    pub confusion: [[u64; 2]; 2],
    pub precision: [f64; 2],
    pub recall: [f64; 2],
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub threshold: f64,
}

/// Score a labelled test set. `threshold` of `None` uses the bundle's.
pub fn classifier_report(
    bundle: &ModelBundle,
    test: &[TrainingSequence],
    threshold: Option<f64>,
) -> Result<ClassifierReport> {
    if test.is_empty() {
        return Err(Error::Input("classifier report needs a non-empty test set".into()));
    }
    let threshold = threshold.unwrap_or(bundle.threshold);
    let mut confusion = [[0u64; 2]; 2];
    for s in test {
        let p = forward(bundle, &s.features)?;
        let predicted = usize::from(p >= threshold);
        confusion[s.label.min(1) as usize][predicted] += 1;
    }
    let rate = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mut precision = [0.0; 2];
    let mut recall = [0.0; 2];
    for c in 0..2 {
        precision[c] = rate(confusion[c][c], confusion[0][c] + confusion[1][c]);
        recall[c] = rate(confusion[c][c], confusion[c][0] + confusion[c][1]);
    }
    let total: u64 = confusion.iter().flatten().sum();
    let accuracy = rate(confusion[0][0] + confusion[1][1], total);
    let present: Vec<f64> = (0..2)
        .filter(|&c| confusion[c][0] + confusion[c][1] > 0)
        .map(|c| recall[c])
        .collect();
    let balanced_accuracy = present.iter().sum::<f64>() / present.len() as f64;
    Ok(ClassifierReport { confusion, precision, recall, accuracy, balanced_accuracy, threshold })
}

/// Detection delay for one degradation event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeadTime {
    pub wan_id: String,
    pub onset: i64,
    /// First sub-threshold score at or after the onset (bounded by the drop
    /// when one happened); `None` when the event was never flagged.
    pub detected_at: Option<i64>,
}

impl LeadTime {
    pub fn lead_s(&self) -> Option<i64> {
        self.detected_at.map(|t| t - self.onset)
    }
}

/// Match scored events against ground truth: for each degradation, when did
/// the score first cross below the threshold?
pub fn lead_times(
    events: &[DecisionEvent],
    truth: &[GroundTruthEvent],
    threshold: f64,
) -> Vec<LeadTime> {
    truth
        .iter()
        .map(|event| {
            let horizon = event.drop_time.unwrap_or(i64::MAX);
            let detected_at = events
                .iter()
                .filter(|e| {
                    e.wan_id == event.wan_id
                        && e.score < threshold
                        && e.time >= event.onset
                        && e.time <= horizon
                })
                .map(|e| e.time)
                .min();
            LeadTime { wan_id: event.wan_id.clone(), onset: event.onset, detected_at }
        })
        .collect()
}

const REPORT_COLUMNS: [&str; 6] = [
    "One Modem Disconnected",
    "Two Modems Disconnected",
    "Network Disconnectivity",
    "Manual Actions Taken",
    "Automated Actions Taken",
    "Response Time",
];

fn mean_metrics(runs: &[AbRun], pick: impl Fn(&AbRun) -> &OutageMetrics) -> [f64; 6] {
    let n = runs.len().max(1) as f64;
    let mut sums = [0.0; 6];
    for run in runs {
        let m = pick(run);
        sums[0] += m.one_modem_disconnections as f64;
        sums[1] += m.dual_modem_disconnections as f64;
        sums[2] += m.network_disconnectivity_events as f64;
        sums[3] += m.manual_actions as f64;
        sums[4] += m.automated_actions as f64;
        sums[5] += m.mean_response_time_s;
    }
    sums.map(|s| s / n)
}

/// Plain-text before/after table, means over seeds with min/max shown for
/// the headline counts.
pub fn render_report(runs: &[AbRun]) -> String {
    let mut out = String::new();
    let mut seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    writeln!(out, "Network performance before and after model deployment").unwrap();
    if runs.is_empty() {
        writeln!(out, "(no scenario runs)").unwrap();
        return out;
    }
    let duration = runs[0].baseline.duration_s;
    writeln!(
        out,
        "Scenario duration {duration} s per arm; mean over {} seed(s) {seeds:?}",
        runs.len()
    )
    .unwrap();
    writeln!(out).unwrap();
    write!(out, "{:<14}", "").unwrap();
    for c in REPORT_COLUMNS {
        write!(out, "{c:>26}").unwrap();
    }
    writeln!(out).unwrap();
    for (name, values) in [
        ("Before LSTM", mean_metrics(runs, |r| &r.baseline)),
        ("After LSTM", mean_metrics(runs, |r| &r.treated)),
    ] {
        write!(out, "{name:<14}").unwrap();
        for (i, v) in values.into_iter().enumerate() {
            if i == 5 {
                write!(out, "{:>24} s", format!("{v:.1}")).unwrap();
            } else {
                write!(out, "{v:>26.2}").unwrap();
            }
        }
        writeln!(out).unwrap();
    }
    let dual_range = |pick: fn(&AbRun) -> u64| {
        let mut values: Vec<u64> = runs.iter().map(pick).collect();
        values.sort_unstable();
        (values[0], values[values.len() - 1])
    };
    let (b_lo, b_hi) = dual_range(|r| r.baseline.dual_modem_disconnections);
    let (t_lo, t_hi) = dual_range(|r| r.treated.dual_modem_disconnections);
    writeln!(out).unwrap();
    writeln!(
        out,
        "Two-modem episodes per seed: before min {b_lo} max {b_hi}, after min {t_lo} max {t_hi}"
    )
    .unwrap();
    writeln!(out, "Complaints-per-month has no simulator analogue and is omitted.").unwrap();
    out
}

/// Aggregate CSV: one row per arm, mean over seeds.
pub fn write_report_csv(path: impl AsRef<Path>, runs: &[AbRun]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(
        out,
        "arm,one_modem_disconnected,two_modems_disconnected,network_disconnectivity,\
         manual_actions_taken,automated_actions_taken,mean_response_time_s,duration_s,seeds"
    )?;
    if runs.is_empty() {
        out.flush()?;
        return Ok(());
    }
    let mut sorted: Vec<&AbRun> = runs.iter().collect();
    sorted.sort_by_key(|r| r.seed);
    let duration = sorted[0].baseline.duration_s;
    let owned: Vec<AbRun> = sorted.iter().map(|r| (*r).clone()).collect();
    for (arm, values) in [
        ("before_lstm", mean_metrics(&owned, |r| &r.baseline)),
        ("after_lstm", mean_metrics(&owned, |r| &r.treated)),
    ] {
        write!(out, "{arm}")?;
        for v in values {
            write!(out, ",{v}")?;
        }
        writeln!(out, ",{duration},{}", owned.len())?;
    }
    out.flush()?;
    Ok(())
}

/// Per-seed CSV detail, both arms.
pub fn write_detail_csv(path: impl AsRef<Path>, runs: &[AbRun]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(
        out,
        "seed,arm,one_modem_disconnected,two_modems_disconnected,network_disconnectivity,\
         manual_actions_taken,automated_actions_taken,mean_response_time_s,duration_s,\
         restarts_issued,cooldown_violations,sibling_violations,onsets_match"
    )?;
    let mut sorted: Vec<&AbRun> = runs.iter().collect();
    sorted.sort_by_key(|r| r.seed);
    for run in sorted {
        for (arm, m) in [("before_lstm", &run.baseline), ("after_lstm", &run.treated)] {
            writeln!(
                out,
                "{},{arm},{},{},{},{},{},{},{},{},{},{},{}",
                run.seed,
                m.one_modem_disconnections,
                m.dual_modem_disconnections,
                m.network_disconnectivity_events,
                m.manual_actions,
                m.automated_actions,
                m.mean_response_time_s,
                m.duration_s,
                run.safety.restarts_issued,
                run.safety.cooldown_violations,
                run.safety.sibling_violations,
                run.onsets_match,
            )?;
        }
    }
    out.flush()?;
    Ok(())
}
