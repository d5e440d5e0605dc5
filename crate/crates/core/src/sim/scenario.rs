//! The per-modem state machine, tick loop, and restart endpoint.

use super::protocol::RestartStatus;
use super::radio::{baseline_features, degraded_features, nearest_cell_idx, TickNoise, Vessel};
use super::{
    channel, generate_schedule, stream_rng, GroundTruthEvent, LinkPhase, LinkState, Outage,
    OutageKind, Schedule, SimConfig,
};
use crate::error::{Error, Result};
use crate::telemetry::{ModemSample, Partitions};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// A restart a policy wants applied this tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestartRequest {
    pub wan_id: String,
    pub time: i64,
}

/// A closed-loop policy attached to a running scenario. Called once per tick
/// with every sample emitted at that tick, after all of them are known, so a
/// policy sees a consistent same-tick view of both modems of a CPE.
pub trait TickPolicy {
    fn on_tick(&mut self, now: i64, samples: &[ModemSample]) -> Vec<RestartRequest>;
    fn on_ack(&mut self, _request: &RestartRequest, _status: RestartStatus) {}
}

/// Everything a finished scenario produced.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub samples: Partitions,
    pub truth: Vec<GroundTruthEvent>,
    pub outages: Vec<Outage>,
}

struct Modem {
    wan_id: String,
    vessel: usize,
    phase: LinkPhase,
    phase_entered_at: i64,
    /// Degraded: drop deadline. Reconnecting/Restarting: recovery end.
    phase_until: i64,
    degradation_onset: Option<i64>,
    truth_idx: Option<usize>,
    sched_pos: usize,
    rng_noise: ChaCha8Rng,
    rng_loss: ChaCha8Rng,
    open_outage: Option<(i64, OutageKind)>,
    serving_cell: usize,
}

/// A running scenario; step it tick by tick or drive it with [`run_scenario`].
pub struct Scenario {
    config: SimConfig,
    schedule: Schedule,
    modems: Vec<Modem>,
    by_id: BTreeMap<String, usize>,
    vessels: Vec<Vessel>,
    now: i64,
    end: i64,
    truth: Vec<GroundTruthEvent>,
    outages: Vec<Outage>,
    samples: Partitions,
}

impl Scenario {
    pub fn new(config: SimConfig) -> Result<Self> {
        let schedule = generate_schedule(&config);
        Self::with_schedule(config, schedule)
    }

    /// Build a scenario with an explicit degradation schedule (tests force
    /// exact onsets this way).
    pub fn with_schedule(config: SimConfig, schedule: Schedule) -> Result<Self> {
        config.validate()?;
        let mut modems = Vec::with_capacity(config.n_vessels * 2);
        let mut by_id = BTreeMap::new();
        let mut vessels = Vec::with_capacity(config.n_vessels);
        for v in 0..config.n_vessels {
            vessels.push(Vessel::new(
                &config.topology,
                stream_rng(config.seed, v, channel::MOVEMENT),
            ));
            for slot in 0..2u8 {
                let wan_id = super::wan_id(v, slot);
                let (noise_ch, loss_ch) = if slot == 0 {
                    (channel::NOISE_A, channel::LOSS_A)
                } else {
                    (channel::NOISE_B, channel::LOSS_B)
                };
                by_id.insert(wan_id.clone(), modems.len());
                modems.push(Modem {
                    wan_id,
                    vessel: v,
                    phase: LinkPhase::Healthy,
                    phase_entered_at: config.start_time,
                    phase_until: i64::MAX,
                    degradation_onset: None,
                    truth_idx: None,
                    sched_pos: 0,
                    rng_noise: stream_rng(config.seed, v, noise_ch),
                    rng_loss: stream_rng(config.seed, v, loss_ch),
                    open_outage: None,
                    serving_cell: 0,
                });
            }
        }
        let now = config.start_time;
        let end = config.start_time + (config.duration_s / config.sample_interval_s) * config.sample_interval_s;
        Ok(Scenario {
            config,
            schedule,
            modems,
            by_id,
            vessels,
            now,
            end,
            truth: Vec::new(),
            outages: Vec::new(),
            samples: Partitions::new(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// Time of the next tick to be emitted.
    pub fn now(&self) -> i64 {
        self.now
    }

    pub fn finished(&self) -> bool {
        self.now >= self.end
    }

    pub fn link_state(&self, wan_id: &str) -> Option<LinkState> {
        let m = &self.modems[*self.by_id.get(wan_id)?];
        Some(LinkState {
            phase: m.phase,
            phase_entered_at: m.phase_entered_at,
            serving_cell: self.config.topology.cells[m.serving_cell].cell_id.clone(),
            degradation_onset: m.degradation_onset,
        })
    }

    /// Advance one tick: resolve due transitions, fire scheduled onsets,
    /// emit this tick's samples, then move the vessels.
    pub fn step(&mut self) -> Vec<ModemSample> {
        if self.finished() {
            return Vec::new();
        }
        let t = self.now;
        self.advance_phases(t);
        let emitted = self.emit(t);
        for v in &mut self.vessels {
            v.advance(self.config.vessel_speed_mps, self.config.sample_interval_s);
        }
        self.now = t + self.config.sample_interval_s;
        emitted
    }

    fn advance_phases(&mut self, t: i64) {
        let reconnect = self.config.reconnect_seconds;
        for m in &mut self.modems {
            match m.phase {
                LinkPhase::Reconnecting | LinkPhase::Restarting => {
                    if t >= m.phase_until {
                        let (start, kind) = m.open_outage.take().expect("outage open while offline");
                        self.outages.push(Outage {
                            wan_id: m.wan_id.clone(),
                            start,
                            end: m.phase_until,
                            kind,
                        });
                        m.phase = LinkPhase::Healthy;
                        m.phase_entered_at = m.phase_until;
                        m.phase_until = i64::MAX;
                    }
                }
                LinkPhase::Degraded => {
                    if t >= m.phase_until {
                        // The link finally drops; the slow reconnection begins.
                        let drop_time = m.phase_until;
                        if let Some(idx) = m.truth_idx.take() {
                            self.truth[idx].drop_time = Some(drop_time);
                        }
                        m.open_outage = Some((drop_time, OutageKind::Drop));
                        m.phase = LinkPhase::Reconnecting;
                        m.phase_entered_at = drop_time;
                        m.phase_until = drop_time + reconnect;
                        m.degradation_onset = None;
                    }
                }
                LinkPhase::Healthy | LinkPhase::Dropped => {}
            }
            // Scheduled onsets are exogenous: always recorded, effective only
            // when they hit a healthy link.
            let events = self.schedule.get(&m.wan_id).map(|v| v.as_slice()).unwrap_or(&[]);
            while m.sched_pos < events.len() && events[m.sched_pos].onset <= t {
                let ev = events[m.sched_pos];
                m.sched_pos += 1;
                self.truth.push(GroundTruthEvent {
                    wan_id: m.wan_id.clone(),
                    onset: ev.onset,
                    drop_time: None,
                });
                if ev.onset == t && m.phase == LinkPhase::Healthy {
                    m.phase = LinkPhase::Degraded;
                    m.phase_entered_at = t;
                    m.phase_until = t + ev.dwell_s;
                    m.degradation_onset = Some(t);
                    m.truth_idx = Some(self.truth.len() - 1);
                }
            }
        }
    }

    fn emit(&mut self, t: i64) -> Vec<ModemSample> {
        let config = &self.config;
        let mut emitted = Vec::new();
        for m in &mut self.modems {
            // Draw every tick regardless of phase to keep streams aligned
            // across policy variants.
            let noise = TickNoise::draw(&mut m.rng_noise, config);
            let lost = m.rng_loss.gen::<f64>() < config.sample_loss_prob;
            let glitched = m.rng_loss.gen::<f64>() < config.gps_glitch_prob;
            if !matches!(m.phase, LinkPhase::Healthy | LinkPhase::Degraded) || lost {
                continue;
            }
            let vessel = &self.vessels[m.vessel];
            let (mut lat, mut lon) = (vessel.lat, vessel.lon);
            m.serving_cell = nearest_cell_idx(&config.topology, (lat, lon));
            let cell = &config.topology.cells[m.serving_cell];
            let dist =
                crate::telemetry::haversine_km((lat, lon), (cell.latitude, cell.longitude))
                    .unwrap_or(0.0);
            let mut features = baseline_features(dist, noise);
            if let Some(onset) = m.degradation_onset {
                let steps = (t - onset) / config.sample_interval_s;
                features = degraded_features(features, steps, config);
            }
            if glitched {
                lat = (lat + 0.8).min(89.9);
                lon += 0.8;
            }
            let (rsrp, sinr, rsrq, latency_ms) = features;
            let sample = ModemSample {
                wan_id: m.wan_id.clone(),
                carrier: cell.cell_id.clone(),
                rsrp,
                sinr,
                rsrq,
                latency_ms,
                time: t,
                latitude: lat,
                longitude: lon,
            };
            self.samples.entry(m.wan_id.clone()).or_default().push(sample.clone());
            emitted.push(sample);
        }
        emitted
    }

    /// Restart endpoint: command a modem restart at time `at`.
    ///
    /// Healthy and degraded links restart (clearing any degradation without
    /// a drop); links already offline acknowledge with `ignored`.
    pub fn apply_restart(&mut self, wan_id: &str, at: i64) -> Result<RestartStatus> {
        let idx = *self
            .by_id
            .get(wan_id)
            .ok_or_else(|| Error::NotFound(wan_id.to_string()))?;
        let m = &mut self.modems[idx];
        match m.phase {
            LinkPhase::Healthy | LinkPhase::Degraded => {
                // A preempted degradation never drops: its truth event keeps
                // drop_time = None.
                m.truth_idx = None;
                m.degradation_onset = None;
                m.open_outage = Some((at, OutageKind::Restart));
                m.phase = LinkPhase::Restarting;
                m.phase_entered_at = at;
                m.phase_until = at + self.config.restart_seconds;
                Ok(RestartStatus::Ok)
            }
            LinkPhase::Dropped | LinkPhase::Reconnecting | LinkPhase::Restarting => {
                Ok(RestartStatus::Ignored)
            }
        }
    }

    /// Finish bookkeeping and hand back the logs. Outages still open at the
    /// end of the scenario close at their natural recovery time.
    pub fn into_outcome(mut self) -> ScenarioOutcome {
        for m in &mut self.modems {
            if let Some((start, kind)) = m.open_outage.take() {
                self.outages.push(Outage {
                    wan_id: m.wan_id.clone(),
                    start,
                    end: m.phase_until,
                    kind,
                });
            }
        }
        self.outages.sort_by(|a, b| (&a.wan_id, a.start).cmp(&(&b.wan_id, b.start)));
        ScenarioOutcome { samples: self.samples, truth: self.truth, outages: self.outages }
    }
}

/// Run a scenario to completion, optionally closing the loop with a policy.
pub fn run_scenario(
    config: &SimConfig,
    mut policy: Option<&mut dyn TickPolicy>,
) -> Result<ScenarioOutcome> {
    let mut scenario = Scenario::new(config.clone())?;
    while !scenario.finished() {
        let now = scenario.now();
        let samples = scenario.step();
        if let Some(p) = policy.as_deref_mut() {
            for req in p.on_tick(now, &samples) {
                let status = match scenario.apply_restart(&req.wan_id, req.time) {
                    Ok(s) => s,
                    Err(Error::NotFound(_)) => RestartStatus::NotFound,
                    Err(e) => return Err(e),
                };
                p.on_ack(&req, status);
            }
        }
    }
    Ok(scenario.into_outcome())
}

/// Policy that restarts a modem the moment a scheduled degradation fires;
/// the upper bound any learned policy is measured against.
pub struct OracleRestartPolicy {
    pending: Vec<(i64, String)>,
    pos: usize,
}

impl OracleRestartPolicy {
    pub fn new(schedule: &Schedule) -> Self {
        let mut pending: Vec<(i64, String)> = schedule
            .iter()
            .flat_map(|(id, evs)| evs.iter().map(move |e| (e.onset, id.clone())))
            .collect();
        pending.sort();
        OracleRestartPolicy { pending, pos: 0 }
    }
}

impl TickPolicy for OracleRestartPolicy {
    fn on_tick(&mut self, now: i64, _samples: &[ModemSample]) -> Vec<RestartRequest> {
        let mut out = Vec::new();
        while self.pos < self.pending.len() && self.pending[self.pos].0 <= now {
            out.push(RestartRequest { wan_id: self.pending[self.pos].1.clone(), time: now });
            self.pos += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ScheduledDegradation;

    fn quiet_config() -> SimConfig {
        SimConfig {
            seed: 11,
            duration_s: 600,
            hazard_degrade: 0.0,
            n_vessels: 1,
            start_time: 100,
            ..SimConfig::default()
        }
    }

    fn forced(config: &SimConfig, wan_id: &str, onset: i64, dwell_s: i64) -> Schedule {
        let mut schedule: Schedule = config
            .wan_ids()
            .into_iter()
            .map(|id| (id, Vec::new()))
            .collect();
        schedule.insert(wan_id.into(), vec![ScheduledDegradation { onset, dwell_s }]);
        schedule
    }

    #[test]
    fn quiet_scenario_emits_full_grid_and_nothing_else() {
        let outcome = run_scenario(&quiet_config(), None).unwrap();
        assert_eq!(outcome.samples.len(), 2);
        for (_, samples) in &outcome.samples {
            assert_eq!(samples.len(), 120);
            for w in samples.windows(2) {
                assert_eq!(w[1].time - w[0].time, 5);
            }
        }
        assert!(outcome.truth.is_empty());
        assert!(outcome.outages.is_empty());
    }

    #[test]
    fn unattended_degradation_drops_and_reconnects_for_300s() {
        let config = SimConfig { duration_s: 3_000, ..quiet_config() };
        let schedule = forced(&config, "v00-a", 1_100, 600);
        let mut sc = Scenario::with_schedule(config, schedule).unwrap();
        while !sc.finished() {
            sc.step();
        }
        let outcome = sc.into_outcome();
        assert_eq!(outcome.truth.len(), 1);
        assert_eq!(outcome.truth[0].drop_time, Some(1_700));
        assert_eq!(
            outcome.outages,
            vec![Outage { wan_id: "v00-a".into(), start: 1_700, end: 2_000, kind: OutageKind::Drop }]
        );
        // Silence strictly inside the outage.
        for s in &outcome.samples["v00-a"] {
            assert!(s.time <= 1_700 - 5 || s.time >= 2_000, "sample at {}", s.time);
        }
    }

    #[test]
    fn oracle_restart_turns_the_drop_into_a_10s_outage() {
        let config = SimConfig { duration_s: 3_000, ..quiet_config() };
        let schedule = forced(&config, "v00-a", 1_100, 600);
        let mut oracle = OracleRestartPolicy::new(&schedule);
        let mut sc = Scenario::with_schedule(config, schedule).unwrap();
        while !sc.finished() {
            let now = sc.now();
            let samples = sc.step();
            for req in oracle.on_tick(now, &samples) {
                sc.apply_restart(&req.wan_id, req.time).unwrap();
            }
        }
        let outcome = sc.into_outcome();
        assert_eq!(outcome.truth.len(), 1);
        assert_eq!(outcome.truth[0].drop_time, None);
        assert_eq!(
            outcome.outages,
            vec![Outage {
                wan_id: "v00-a".into(),
                start: 1_100,
                end: 1_110,
                kind: OutageKind::Restart
            }]
        );
    }

    #[test]
    fn restart_while_degraded_runs_10s_then_healthy() {
        let config = SimConfig { duration_s: 3_000, ..quiet_config() };
        let schedule = forced(&config, "v00-a", 1_100, 600);
        let mut sc = Scenario::with_schedule(config, schedule).unwrap();
        while sc.now() <= 1_200 {
            sc.step();
        }
        assert_eq!(sc.link_state("v00-a").unwrap().phase, LinkPhase::Degraded);
        assert_eq!(sc.apply_restart("v00-a", 1_205).unwrap(), RestartStatus::Ok);
        assert_eq!(sc.link_state("v00-a").unwrap().phase, LinkPhase::Restarting);
        while sc.now() <= 1_215 {
            sc.step();
        }
        let state = sc.link_state("v00-a").unwrap();
        assert_eq!(state.phase, LinkPhase::Healthy);
        assert_eq!(state.phase_entered_at, 1_215);
        assert_eq!(state.degradation_onset, None);
    }

    #[test]
    fn restart_while_reconnecting_is_ignored_and_timer_unchanged() {
        let config = SimConfig { duration_s: 3_000, ..quiet_config() };
        let schedule = forced(&config, "v00-a", 1_100, 300);
        let mut sc = Scenario::with_schedule(config, schedule).unwrap();
        while sc.now() <= 1_400 {
            sc.step();
        }
        assert_eq!(sc.link_state("v00-a").unwrap().phase, LinkPhase::Reconnecting);
        assert_eq!(sc.apply_restart("v00-a", 1_405).unwrap(), RestartStatus::Ignored);
        while !sc.finished() {
            sc.step();
        }
        let outcome = sc.into_outcome();
        // The original reconnection window is untouched.
        assert_eq!(outcome.outages.len(), 1);
        assert_eq!(outcome.outages[0].start, 1_400);
        assert_eq!(outcome.outages[0].end, 1_700);
    }

    #[test]
    fn second_restart_one_second_later_is_ignored() {
        let mut sc = Scenario::new(SimConfig { duration_s: 3_000, ..quiet_config() }).unwrap();
        while sc.now() <= 500 {
            sc.step();
        }
        assert_eq!(sc.apply_restart("v00-a", 505).unwrap(), RestartStatus::Ok);
        assert_eq!(sc.apply_restart("v00-a", 506).unwrap(), RestartStatus::Ignored);
    }

    #[test]
    fn unknown_modem_is_not_found() {
        let mut sc = Scenario::new(quiet_config()).unwrap();
        assert!(matches!(sc.apply_restart("nope", 100), Err(Error::NotFound(_))));
    }

    #[test]
    fn identical_seeds_give_byte_identical_outcomes() {
        let config = SimConfig {
            duration_s: 4_000,
            hazard_degrade: 2e-3,
            sample_loss_prob: 0.01,
            gps_glitch_prob: 0.002,
            ..SimConfig::default()
        };
        let a = run_scenario(&config, None).unwrap();
        let b = run_scenario(&config, None).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.outages, b.outages);
    }

    #[test]
    fn drop_conservation_between_truth_and_outage_log() {
        let config = SimConfig { duration_s: 40_000, hazard_degrade: 2e-3, n_vessels: 2, ..SimConfig::default() };
        let outcome = run_scenario(&config, None).unwrap();
        let drops: Vec<_> = outcome.truth.iter().filter_map(|e| e.drop_time.map(|d| (&e.wan_id, d))).collect();
        assert!(!drops.is_empty());
        for (wan_id, drop_time) in drops {
            let matching: Vec<_> = outcome
                .outages
                .iter()
                .filter(|o| &o.wan_id == wan_id && o.start == drop_time)
                .collect();
            assert_eq!(matching.len(), 1);
            assert_eq!(matching[0].end - matching[0].start, 300);
            assert_eq!(matching[0].kind, OutageKind::Drop);
        }
    }

    #[test]
    fn no_samples_strictly_inside_any_outage() {
        let config = SimConfig { duration_s: 40_000, hazard_degrade: 2e-3, n_vessels: 2, ..SimConfig::default() };
        let outcome = run_scenario(&config, None).unwrap();
        assert!(!outcome.outages.is_empty());
        for o in &outcome.outages {
            for s in &outcome.samples[&o.wan_id] {
                assert!(
                    s.time <= o.start || s.time >= o.end,
                    "sample at {} inside outage [{}, {})",
                    s.time,
                    o.start,
                    o.end
                );
            }
        }
    }

    #[test]
    fn policy_and_baseline_arms_see_the_same_onsets() {
        let config = SimConfig { duration_s: 30_000, hazard_degrade: 2e-3, n_vessels: 2, ..SimConfig::default() };
        let baseline = run_scenario(&config, None).unwrap();
        let schedule = generate_schedule(&config);
        let mut oracle = OracleRestartPolicy::new(&schedule);
        let treated = run_scenario(&config, Some(&mut oracle)).unwrap();
        let onsets = |o: &ScenarioOutcome| {
            o.truth.iter().map(|e| (e.wan_id.clone(), e.onset)).collect::<Vec<_>>()
        };
        assert_eq!(onsets(&baseline), onsets(&treated));
        // The treated arm never reaches a drop.
        assert!(treated.truth.iter().all(|e| e.drop_time.is_none()));
        assert!(baseline.truth.iter().any(|e| e.drop_time.is_some()));
    }
}
