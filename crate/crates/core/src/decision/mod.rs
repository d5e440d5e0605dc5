//! Streaming inference and the restart policy.
//!
//! The engine mirrors the offline pipeline record for record: the same
//! cleaning rules, the same forward-fill and segment-split behavior, the
//! same block-mean downsampling anchored at segment start, and stride-1
//! scoring on the downsampled grid. Replaying a telemetry file through
//! [`StreamEngine::ingest`] therefore produces exactly the scores the batch
//! pipeline computes.
//!
//! Scores are produced per sample, but restart decisions are evaluated when
//! a tick closes ([`StreamEngine::finish_tick`]), so the sibling guard sees
//! a complete same-tick view of both modems of a CPE. In live mode the tick
//! closes when a later timestamp arrives (watermark); in replay and
//! closed-loop runs the feeder closes it explicitly.

mod replay;

pub use replay::{
    run_replay, serve_stream, write_events, EnginePolicy, LineCommandEndpoint, ReplayStats,
};

use crate::error::{Error, Result};
use crate::nn::{forward, ModelBundle};
use crate::preprocess::{PreprocessConfig, RejectionReport};
use crate::sim::RestartStatus;
use crate::telemetry::{cpe_slot, nearest_site_km, sibling_wan_id, ActionRecord, ActionSource, ModemSample, SiteTopology};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};

/// Guard rails around an automated restart.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionPolicy {
    /// Score threshold; `None` uses the bundle's stored threshold.
    pub threshold: Option<f64>,
    /// Minimum spacing between actions on one modem, seconds.
    pub cooldown_s: i64,
    /// Never restart while the partner modem is not demonstrably healthy.
    pub sibling_guard: bool,
    /// Consecutive sub-threshold scores required before acting.
    pub consecutive_hits: usize,
}

impl Default for ActionPolicy {
    fn default() -> Self {
        ActionPolicy { threshold: None, cooldown_s: 600, sibling_guard: true, consecutive_hits: 2 }
    }
}

impl ActionPolicy {
    /// `restart_seconds` is the recovery time of the restart endpoint; the
    /// cooldown must cover it.
    pub fn validate(&self, restart_seconds: i64) -> Result<()> {
        if self.consecutive_hits < 1 {
            return Err(Error::Config("consecutive_hits must be >= 1".into()));
        }
        if self.cooldown_s < restart_seconds {
            return Err(Error::Config(format!(
                "cooldown_s ({}) must be >= the restart duration ({restart_seconds})",
                self.cooldown_s
            )));
        }
        if let Some(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config("threshold must be in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// What the engine decided after scoring a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    None,
    SuppressedCooldown,
    SuppressedSibling,
    RestartIssued,
    /// The restart endpoint was unreachable; cooldown still applies.
    RestartFailed,
}

/// One audit-trail entry: a score and what was done about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub wan_id: String,
    pub time: i64,
    pub score: f64,
    pub decision: Decision,
    /// [t_start, t_end] of the scored window on the downsampled grid.
    pub window: (i64, i64),
}

/// Where restart commands go.
pub trait RestartEndpoint {
    fn restart(&mut self, wan_id: &str, at: i64) -> Result<RestartStatus>;
}

/// Sink for environments without a command channel (pure replay).
pub struct NullEndpoint;

impl RestartEndpoint for NullEndpoint {
    fn restart(&mut self, _wan_id: &str, _at: i64) -> Result<RestartStatus> {
        Ok(RestartStatus::Ok)
    }
}

/// Health of the partner modem as seen at decision time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiblingStatus {
    /// Seen this tick with a healthy latest score.
    Healthy,
    /// Seen this tick but scoring below threshold (or not yet scoring).
    Unhealthy,
    /// Not seen this tick: offline or never observed.
    Disconnected,
}

/// The pure policy rule: restart iff the last `k` consecutive scores are all
/// below threshold, the cooldown has elapsed, and the sibling guard passes.
pub fn evaluate_policy(
    history: &[f64],
    policy: &ActionPolicy,
    threshold: f64,
    sibling: SiblingStatus,
    last_action_at: Option<i64>,
    now: i64,
) -> Decision {
    let k = policy.consecutive_hits;
    if history.len() < k || history.iter().rev().take(k).any(|&p| p >= threshold) {
        return Decision::None;
    }
    if let Some(at) = last_action_at {
        if now - at < policy.cooldown_s {
            return Decision::SuppressedCooldown;
        }
    }
    if policy.sibling_guard && sibling != SiblingStatus::Healthy {
        return Decision::SuppressedSibling;
    }
    Decision::RestartIssued
}

/// One downsampled point: timestamp plus (rsrp, sinr, rsrq, latency).
#[derive(Debug, Clone, Copy)]
struct DownPoint {
    time: i64,
    values: [f64; 4],
}

/// Per-modem streaming state.
#[derive(Debug, Default)]
struct WindowState {
    /// Partial downsampling block on the base grid.
    block: Vec<DownPoint>,
    /// Last L downsampled points.
    ring: VecDeque<DownPoint>,
    /// Recent scores within the current segment, most recent last.
    score_history: VecDeque<f64>,
    /// Last accepted (real, not synthetic) record.
    last_valid: Option<DownPoint>,
    /// Last arrival of any record, accepted or not.
    last_seen_time: Option<i64>,
    /// Last accepted sample time, for sibling freshness.
    last_sample_time: Option<i64>,
    latest_score: Option<f64>,
    last_action_at: Option<i64>,
}

/// A score computed during the current tick, awaiting policy evaluation.
#[derive(Debug, Clone)]
struct PendingScore {
    wan_id: String,
    time: i64,
    score: f64,
    window: (i64, i64),
}

/// The streaming decision service.
pub struct StreamEngine {
    bundle: ModelBundle,
    policy: ActionPolicy,
    pre: PreprocessConfig,
    topology: SiteTopology,
    threshold: f64,
    states: BTreeMap<String, WindowState>,
    pending: Vec<PendingScore>,
    actions: Vec<ActionRecord>,
    rejects: RejectionReport,
    out_of_order: u64,
}

impl StreamEngine {
    pub fn new(
        bundle: ModelBundle,
        policy: ActionPolicy,
        pre: PreprocessConfig,
        topology: SiteTopology,
    ) -> Result<Self> {
        bundle.validate()?;
        pre.validate()?;
        let threshold = policy.threshold.unwrap_or(bundle.threshold);
        if pre.seq_len != bundle.config.seq_len {
            return Err(Error::Config(format!(
                "preprocess seq_len {} does not match the model's {}",
                pre.seq_len, bundle.config.seq_len
            )));
        }
        Ok(StreamEngine {
            bundle,
            policy,
            pre,
            topology,
            threshold,
            states: BTreeMap::new(),
            pending: Vec::new(),
            actions: Vec::new(),
            rejects: RejectionReport::default(),
            out_of_order: 0,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn actions(&self) -> &[ActionRecord] {
        &self.actions
    }

    pub fn out_of_order(&self) -> u64 {
        self.out_of_order
    }

    pub fn rejects(&self) -> &RejectionReport {
        &self.rejects
    }

    /// Consume one sample: clean, fill, downsample, and score when a full
    /// window completes. Decisions are deferred to [`Self::finish_tick`].
    pub fn ingest(&mut self, sample: &ModemSample) {
        let state = self.states.entry(sample.wan_id.clone()).or_default();
        if let Some(last) = state.last_seen_time {
            if sample.time <= last {
                self.out_of_order += 1;
                return;
            }
        }
        state.last_seen_time = Some(sample.time);

        if let Some(feature) = sample.range_violation() {
            self.rejects.bump(&format!("range:{feature}"));
            return;
        }
        match nearest_site_km((sample.latitude, sample.longitude), &self.topology) {
            Ok(d) if d <= self.pre.geo_cutoff_km => {}
            _ => {
                self.rejects.bump("geo");
                return;
            }
        }

        let interval = self.pre.sample_interval_s;
        let point = DownPoint {
            time: sample.time,
            values: [sample.rsrp, sample.sinr, sample.rsrq, sample.latency_ms],
        };
        let mut fills: Vec<DownPoint> = Vec::new();
        if let Some(last) = state.last_valid {
            let dt = sample.time - last.time;
            let on_grid = dt % interval == 0;
            let gap_ticks = if on_grid { (dt / interval - 1) as usize } else { usize::MAX };
            if !on_grid || gap_ticks > self.pre.max_gap_fill {
                state.block.clear();
                state.ring.clear();
                state.score_history.clear();
            } else {
                for k in 1..=gap_ticks as i64 {
                    fills.push(DownPoint { time: last.time + k * interval, values: last.values });
                }
            }
        }
        state.last_valid = Some(point);
        state.last_sample_time = Some(sample.time);

        let wan_id = sample.wan_id.clone();
        for p in fills.into_iter().chain(std::iter::once(point)) {
            self.push_point(&wan_id, p, sample.time);
        }
    }

    fn push_point(&mut self, wan_id: &str, p: DownPoint, now: i64) {
        let n = self.pre.n_downsample;
        let l = self.pre.seq_len;
        let state = self.states.get_mut(wan_id).expect("state exists");
        state.block.push(p);
        if state.block.len() < n {
            return;
        }
        let time = state.block[0].time;
        let mut values = [0.0; 4];
        for b in &state.block {
            for (acc, v) in values.iter_mut().zip(b.values) {
                *acc += v;
            }
        }
        for v in &mut values {
            *v /= n as f64;
        }
        state.block.clear();
        state.ring.push_back(DownPoint { time, values });
        if state.ring.len() > l {
            state.ring.pop_front();
        }
        if state.ring.len() == l {
            let slot = cpe_slot(wan_id) as f64;
            let mut rows = vec![Vec::with_capacity(l); 5];
            for point in &state.ring {
                rows[0].push(slot);
                for (row, v) in rows[1..].iter_mut().zip(point.values) {
                    row.push(v);
                }
            }
            let span = (state.ring.front().unwrap().time, state.ring.back().unwrap().time);
            let score = forward(&self.bundle, &rows).expect("validated window is scorable");
            state.latest_score = Some(score);
            state.score_history.push_back(score);
            while state.score_history.len() > self.policy.consecutive_hits {
                state.score_history.pop_front();
            }
            self.pending.push(PendingScore {
                wan_id: wan_id.to_string(),
                time: now,
                score,
                window: span,
            });
        }
    }

    fn sibling_status(&self, wan_id: &str, now: i64) -> SiblingStatus {
        let Some(sibling_id) = sibling_wan_id(wan_id) else {
            return SiblingStatus::Disconnected;
        };
        let Some(sibling) = self.states.get(&sibling_id) else {
            return SiblingStatus::Disconnected;
        };
        // Fresh means heard from at this very tick.
        let fresh = sibling
            .last_sample_time
            .map(|t| now - t < self.pre.sample_interval_s)
            .unwrap_or(false);
        if !fresh {
            return SiblingStatus::Disconnected;
        }
        match sibling.latest_score {
            Some(p) if p >= self.threshold => SiblingStatus::Healthy,
            _ => SiblingStatus::Unhealthy,
        }
    }

    /// Close the tick: evaluate the policy for every score produced since
    /// the last close, issuing restarts through the endpoint. Events come
    /// back in (wan_id, window) order.
    pub fn finish_tick(
        &mut self,
        now: i64,
        endpoint: &mut dyn RestartEndpoint,
    ) -> Vec<DecisionEvent> {
        let mut pending = std::mem::take(&mut self.pending);
        pending.sort_by(|a, b| (&a.wan_id, a.window).cmp(&(&b.wan_id, b.window)));
        let mut events = Vec::with_capacity(pending.len());
        for p in pending {
            let state = &self.states[&p.wan_id];
            let history: Vec<f64> = state.score_history.iter().copied().collect();
            let sibling = self.sibling_status(&p.wan_id, now);
            let mut decision = evaluate_policy(
                &history,
                &self.policy,
                self.threshold,
                sibling,
                state.last_action_at,
                now,
            );
            if decision == Decision::RestartIssued {
                match endpoint.restart(&p.wan_id, now) {
                    Ok(_) => {
                        self.actions.push(ActionRecord {
                            wan_id: p.wan_id.clone(),
                            time: now,
                            source: ActionSource::Automated,
                        });
                    }
                    Err(_) => decision = Decision::RestartFailed,
                }
                // Cooldown applies even to ignored or failed attempts, so a
                // flapping link cannot cause a retry storm.
                self.states.get_mut(&p.wan_id).expect("state exists").last_action_at = Some(now);
            }
            events.push(DecisionEvent {
                wan_id: p.wan_id,
                time: p.time,
                score: p.score,
                decision,
                window: p.window,
            });
        }
        events
    }
}
