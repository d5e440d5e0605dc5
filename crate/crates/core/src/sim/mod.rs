//! Discrete-event generator of dual-modem vessel telemetry.
//!
//! Each vessel carries a CPE with two modems. A hidden per-modem state
//! machine drives what the telemetry looks like and when it goes silent:
//!
//! ```text
//! HEALTHY --hazard--> DEGRADED --dwell--> DROPPED -> RECONNECTING --reconnect_seconds--> HEALTHY
//!     \                  |
//!      \-- restart ------+--> RESTARTING --restart_seconds--> HEALTHY
//! ```
//!
//! Degradation onsets are pre-scheduled from the seed alone, so two runs of
//! the same scenario (with and without a restart policy) see the same event
//! stream and differ only in what happens after actions are applied.

mod protocol;
mod radio;
mod scenario;

pub use protocol::{handle_command_line, RestartCommand, RestartReply, RestartStatus};
pub use radio::roam_box;
pub use scenario::{
    run_scenario, OracleRestartPolicy, RestartRequest, Scenario, ScenarioOutcome, TickPolicy,
};

use crate::error::{Error, Result};
use crate::telemetry::SiteTopology;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Hidden connection phase of one modem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkPhase {
    Healthy,
    Degraded,
    /// Instantaneous: the tick at which a degraded link finally drops.
    Dropped,
    Reconnecting,
    Restarting,
}

/// Snapshot of one modem's hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkState {
    pub phase: LinkPhase,
    pub phase_entered_at: i64,
    pub serving_cell: String,
    pub degradation_onset: Option<i64>,
}

/// One exogenous degradation: when it starts and when the link would drop
/// if nothing intervenes. `drop_time` stays `None` when a restart preempts
/// the drop (or the modem was already offline when the event arrived).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthEvent {
    pub wan_id: String,
    pub onset: i64,
    pub drop_time: Option<i64>,
}

/// Why a modem went silent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutageKind {
    /// Link drop followed by the slow reconnection procedure.
    Drop,
    /// Commanded restart.
    Restart,
}

impl std::fmt::Display for OutageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutageKind::Drop => write!(f, "drop"),
            OutageKind::Restart => write!(f, "restart"),
        }
    }
}

/// An interval of silence for one modem, `[start, end)` in epoch seconds.
/// No samples are emitted strictly inside the interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outage {
    pub wan_id: String,
    pub start: i64,
    pub end: i64,
    pub kind: OutageKind,
}

/// Scenario parameters. All magnitudes are configurable defaults, not claims
/// about any real deployment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    /// Scenario length in seconds.
    pub duration_s: i64,
    /// Telemetry recording interval.
    pub sample_interval_s: i64,
    /// How long a dropped link takes to re-establish on its own.
    pub reconnect_seconds: i64,
    /// How long a commanded restart takes.
    pub restart_seconds: i64,
    /// Uniform bounds for the degraded dwell before the drop, seconds.
    pub degraded_dwell_bounds_s: (i64, i64),
    /// Per-tick probability of a new degradation event per modem.
    pub hazard_degrade: f64,
    pub n_vessels: usize,
    pub topology: SiteTopology,
    /// Epoch seconds of the first tick.
    pub start_time: i64,
    /// Latency drift per tick while degraded, ms.
    pub drift_latency_ms: f64,
    /// RSRQ drift per tick while degraded, dB (negative).
    pub drift_rsrq_db: f64,
    /// SINR drift per tick while degraded, dB (negative).
    pub drift_sinr_db: f64,
    /// Shadowing noise on RSRP, dB.
    pub shadow_sigma_db: f64,
    /// Latency jitter, ms.
    pub latency_jitter_ms: f64,
    /// Probability a sample is lost in collection (exercises gap padding).
    pub sample_loss_prob: f64,
    /// Probability of a bogus GPS fix far from the sites (exercises the
    /// geographic outlier filter).
    pub gps_glitch_prob: f64,
    pub vessel_speed_mps: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            duration_s: 86_400,
            sample_interval_s: 5,
            reconnect_seconds: 300,
            restart_seconds: 10,
            degraded_dwell_bounds_s: (300, 1200),
            hazard_degrade: 5e-4,
            n_vessels: 4,
            topology: SiteTopology::reference(),
            start_time: 1_700_000_000,
            drift_latency_ms: 2.0,
            drift_rsrq_db: -0.05,
            drift_sinr_db: -0.08,
            shadow_sigma_db: 2.0,
            latency_jitter_ms: 4.0,
            sample_loss_prob: 0.0,
            gps_glitch_prob: 0.0,
            vessel_speed_mps: 5.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.duration_s < 0 {
            return Err(Error::Config("duration_s must be >= 0".into()));
        }
        if self.sample_interval_s < 1 {
            return Err(Error::Config("sample_interval_s must be >= 1".into()));
        }
        if self.reconnect_seconds < 1 || self.restart_seconds < 1 {
            return Err(Error::Config("recovery durations must be >= 1 s".into()));
        }
        let (lo, hi) = self.degraded_dwell_bounds_s;
        if lo < self.sample_interval_s || hi < lo {
            return Err(Error::Config(format!(
                "degraded_dwell_bounds_s ({lo}, {hi}) must satisfy interval <= lo <= hi"
            )));
        }
        if !(0.0..=1.0).contains(&self.hazard_degrade) {
            return Err(Error::Config("hazard_degrade must be in [0, 1]".into()));
        }
        for (name, p) in [
            ("sample_loss_prob", self.sample_loss_prob),
            ("gps_glitch_prob", self.gps_glitch_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1]")));
            }
        }
        if self.topology.is_empty() {
            return Err(Error::Config("topology has no cells".into()));
        }
        if self.start_time <= 0 {
            return Err(Error::Config("start_time must be > 0".into()));
        }
        if self.vessel_speed_mps < 0.0 {
            return Err(Error::Config("vessel_speed_mps must be >= 0".into()));
        }
        Ok(())
    }

    /// WAN ids of every modem in the scenario, sorted.
    pub fn wan_ids(&self) -> Vec<String> {
        let mut ids = Vec::with_capacity(self.n_vessels * 2);
        for v in 0..self.n_vessels {
            ids.push(wan_id(v, 0));
            ids.push(wan_id(v, 1));
        }
        ids
    }
}

/// WAN id for a vessel/slot pair; the trailing letter is the CPE slot.
pub fn wan_id(vessel: usize, slot: u8) -> String {
    format!("v{vessel:02}-{}", if slot == 0 { 'a' } else { 'b' })
}

/// One pre-scheduled degradation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledDegradation {
    pub onset: i64,
    pub dwell_s: i64,
}

/// Per-modem degradation schedules, onsets strictly increasing.
pub type Schedule = BTreeMap<String, Vec<ScheduledDegradation>>;

/// Independent RNG streams per vessel so policy actions never shift the
/// randomness that drives the physical world.
pub(crate) fn stream_rng(seed: u64, vessel: usize, chan: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((vessel as u64) << 3 | chan);
    rng
}

pub(crate) mod channel {
    pub const MOVEMENT: u64 = 0;
    pub const SCHEDULE_A: u64 = 1;
    pub const SCHEDULE_B: u64 = 2;
    pub const NOISE_A: u64 = 3;
    pub const NOISE_B: u64 = 4;
    pub const LOSS_A: u64 = 5;
    pub const LOSS_B: u64 = 6;
}

/// Generate the degradation schedule for every modem from the seed alone.
///
/// Inter-onset gaps are geometric in ticks with success probability
/// `hazard_degrade`; dwells are uniform over the configured bounds, rounded
/// to the tick grid.
pub fn generate_schedule(config: &SimConfig) -> Schedule {
    let mut schedule = Schedule::new();
    let interval = config.sample_interval_s;
    let end = config.start_time + config.duration_s;
    let (lo, hi) = config.degraded_dwell_bounds_s;
    let (lo_t, hi_t) = (lo / interval, hi / interval);
    for vessel in 0..config.n_vessels {
        for slot in 0..2u8 {
            let id = wan_id(vessel, slot);
            let chan = if slot == 0 { channel::SCHEDULE_A } else { channel::SCHEDULE_B };
            let mut rng = stream_rng(config.seed, vessel, chan);
            let mut events = Vec::new();
            if config.hazard_degrade > 0.0 {
                let mut t = config.start_time;
                loop {
                    let gap_ticks = geometric_ticks(&mut rng, config.hazard_degrade);
                    t += gap_ticks * interval;
                    if t >= end {
                        break;
                    }
                    let dwell_ticks = rng.gen_range(lo_t..=hi_t).max(1);
                    events.push(ScheduledDegradation { onset: t, dwell_s: dwell_ticks * interval });
                }
            }
            schedule.insert(id, events);
        }
    }
    schedule
}

/// Number of Bernoulli(p) trials up to and including the first success.
fn geometric_ticks(rng: &mut ChaCha8Rng, p: f64) -> i64 {
    if p >= 1.0 {
        return 1;
    }
    let u: f64 = rng.gen();
    // Inverse CDF of the geometric distribution on {1, 2, ...}.
    (((1.0 - u).ln() / (1.0 - p).ln()).floor() as i64 + 1).max(1)
}
