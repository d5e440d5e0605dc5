//! Feeding the engine: file replay, live NDJSON streams, and the adapter
//! that closes the loop against a running scenario.

use super::{Decision, DecisionEvent, NullEndpoint, RestartEndpoint, StreamEngine};
use crate::error::Result;
use crate::sim::{RestartRequest, RestartStatus, TickPolicy};
use crate::telemetry::{ActionRecord, ModemSample, Partitions};
use std::io::{BufRead, Write};

/// Replay recorded telemetry through the engine in tick batches (all samples
/// sharing a timestamp are ingested before the tick closes), exactly how the
/// live loop sees them.
pub fn run_replay(
    engine: &mut StreamEngine,
    partitions: &Partitions,
    endpoint: &mut dyn RestartEndpoint,
) -> Vec<DecisionEvent> {
    let mut feed: Vec<&ModemSample> = partitions.values().flatten().collect();
    feed.sort_by(|a, b| (a.time, &a.wan_id).cmp(&(b.time, &b.wan_id)));
    let mut events = Vec::new();
    let mut i = 0;
    while i < feed.len() {
        let t = feed[i].time;
        while i < feed.len() && feed[i].time == t {
            engine.ingest(feed[i]);
            i += 1;
        }
        events.extend(engine.finish_tick(t, endpoint));
    }
    events
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReplayStats {
    pub lines: u64,
    pub parse_errors: u64,
    pub events: u64,
    pub restarts_issued: u64,
}

/// Serve a newline-delimited JSON sample stream, writing one decision event
/// line per score. Ticks close on the watermark: the first line bearing a
/// later timestamp.
pub fn serve_stream<R: BufRead, W: Write>(
    engine: &mut StreamEngine,
    input: R,
    mut events_out: W,
    endpoint: &mut dyn RestartEndpoint,
) -> Result<ReplayStats> {
    let mut stats = ReplayStats::default();
    let mut current_tick: Option<i64> = None;
    let mut flush = |engine: &mut StreamEngine,
                     tick: i64,
                     out: &mut W,
                     stats: &mut ReplayStats|
     -> Result<()> {
        for event in engine.finish_tick(tick, endpoint) {
            stats.events += 1;
            if event.decision == Decision::RestartIssued {
                stats.restarts_issued += 1;
            }
            serde_json::to_writer(&mut *out, &event)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    };
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        let sample: ModemSample = match serde_json::from_str(&line) {
            Ok(s) => s,
            Err(_) => {
                stats.parse_errors += 1;
                continue;
            }
        };
        match current_tick {
            Some(t) if sample.time > t => {
                flush(engine, t, &mut events_out, &mut stats)?;
                current_tick = Some(sample.time);
            }
            None => current_tick = Some(sample.time),
            _ => {}
        }
        engine.ingest(&sample);
    }
    if let Some(t) = current_tick {
        flush(engine, t, &mut events_out, &mut stats)?;
    }
    Ok(stats)
}

/// Write decision events as NDJSON.
pub fn write_events<W: Write>(mut out: W, events: &[DecisionEvent]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Restart endpoint speaking the newline-delimited JSON command protocol:
/// sends `{"wan_id", "time"}`, reads `{"status"}`.
pub struct LineCommandEndpoint<R, W> {
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> LineCommandEndpoint<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        LineCommandEndpoint { reader, writer }
    }
}

impl<R: BufRead, W: Write> RestartEndpoint for LineCommandEndpoint<R, W> {
    fn restart(&mut self, wan_id: &str, at: i64) -> crate::error::Result<RestartStatus> {
        let command = crate::sim::RestartCommand { wan_id: wan_id.to_string(), time: at };
        serde_json::to_writer(&mut self.writer, &command)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(crate::error::Error::Input("command channel closed".into()));
        }
        let reply: crate::sim::RestartReply = serde_json::from_str(line.trim())?;
        Ok(reply.status)
    }
}

/// Adapter that runs the engine inside a scenario loop: samples in, restart
/// requests out. The scenario applies the requests and acknowledges.
pub struct EnginePolicy {
    engine: StreamEngine,
    events: Vec<DecisionEvent>,
    acks: Vec<(RestartRequest, RestartStatus)>,
}

impl EnginePolicy {
    pub fn new(engine: StreamEngine) -> Self {
        EnginePolicy { engine, events: Vec::new(), acks: Vec::new() }
    }

    pub fn events(&self) -> &[DecisionEvent] {
        &self.events
    }

    pub fn actions(&self) -> &[ActionRecord] {
        self.engine.actions()
    }

    pub fn into_events(self) -> Vec<DecisionEvent> {
        self.events
    }
}

impl TickPolicy for EnginePolicy {
    fn on_tick(&mut self, now: i64, samples: &[ModemSample]) -> Vec<RestartRequest> {
        for s in samples {
            self.engine.ingest(s);
        }
        let events = self.engine.finish_tick(now, &mut NullEndpoint);
        let requests = events
            .iter()
            .filter(|e| e.decision == Decision::RestartIssued)
            .map(|e| RestartRequest { wan_id: e.wan_id.clone(), time: now })
            .collect();
        self.events.extend(events);
        requests
    }

    fn on_ack(&mut self, request: &RestartRequest, status: RestartStatus) {
        self.acks.push((request.clone(), status));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::ActionPolicy;
    use crate::nn::forward;
    use crate::preprocess::{build_windows, AssembleMode, PreprocessConfig};
    use crate::sim::{run_scenario, SimConfig};
    use crate::telemetry::SiteTopology;
    use crate::testkit;
    use std::collections::BTreeMap;

    fn scenario_partitions() -> Partitions {
        let config = SimConfig {
            seed: 5,
            duration_s: 6_000,
            hazard_degrade: 1.5e-3,
            n_vessels: 2,
            sample_loss_prob: 0.01,
            ..SimConfig::default()
        };
        run_scenario(&config, None).unwrap().samples
    }

    #[test]
    fn replay_scores_equal_the_offline_pipeline_exactly() {
        let partitions = scenario_partitions();
        let pre = PreprocessConfig::default();
        let topo = SiteTopology::reference();
        let bundle = testkit::latency_detector_bundle();

        let (windows, _) = build_windows(&partitions, &topo, &pre, AssembleMode::Inference).unwrap();
        let mut offline: BTreeMap<(String, i64, i64), f64> = BTreeMap::new();
        for w in &windows {
            offline.insert(
                (w.wan_id.clone(), w.t_start, w.t_end),
                forward(&bundle, &w.rows).unwrap(),
            );
        }

        let mut engine = StreamEngine::new(
            bundle,
            ActionPolicy { sibling_guard: false, ..ActionPolicy::default() },
            pre,
            topo,
        )
        .unwrap();
        let events = run_replay(&mut engine, &partitions, &mut NullEndpoint);

        assert_eq!(events.len(), offline.len(), "score count mismatch");
        for e in &events {
            let key = (e.wan_id.clone(), e.window.0, e.window.1);
            let expected = offline.get(&key).expect("offline window for streamed score");
            assert_eq!(e.score.to_bits(), expected.to_bits(), "score mismatch at {key:?}");
        }
    }

    #[test]
    fn serve_stream_matches_replay() {
        let partitions = scenario_partitions();
        let mut feed: Vec<&ModemSample> = partitions.values().flatten().collect();
        feed.sort_by(|a, b| (a.time, &a.wan_id).cmp(&(b.time, &b.wan_id)));
        let mut ndjson = Vec::new();
        for s in &feed {
            serde_json::to_writer(&mut ndjson, s).unwrap();
            ndjson.push(b'\n');
        }

        let mk_engine = || {
            StreamEngine::new(
                testkit::latency_detector_bundle(),
                ActionPolicy::default(),
                PreprocessConfig::default(),
                SiteTopology::reference(),
            )
            .unwrap()
        };

        let mut via_replay = mk_engine();
        let replay_events = run_replay(&mut via_replay, &partitions, &mut NullEndpoint);

        let mut via_stream = mk_engine();
        let mut out = Vec::new();
        let stats =
            serve_stream(&mut via_stream, ndjson.as_slice(), &mut out, &mut NullEndpoint).unwrap();
        assert_eq!(stats.parse_errors, 0);
        assert_eq!(stats.lines as usize, feed.len());

        let streamed: Vec<DecisionEvent> = out
            .split(|&b| b == b'\n')
            .filter(|l| !l.is_empty())
            .map(|l| serde_json::from_slice(l).unwrap())
            .collect();
        assert_eq!(streamed, replay_events);
    }

    #[test]
    fn garbage_lines_are_counted_not_fatal() {
        let mut engine = StreamEngine::new(
            testkit::latency_detector_bundle(),
            ActionPolicy::default(),
            PreprocessConfig::default(),
            SiteTopology::reference(),
        )
        .unwrap();
        let input = b"not json\n{\"also\": \"wrong\"}\n" as &[u8];
        let mut out = Vec::new();
        let stats = serve_stream(&mut engine, input, &mut out, &mut NullEndpoint).unwrap();
        assert_eq!(stats.parse_errors, 2);
        assert_eq!(stats.events, 0);
    }

    #[test]
    fn engine_policy_restarts_degrading_modems_in_the_loop() {
        let sim = SimConfig {
            seed: 21,
            duration_s: 8_000,
            hazard_degrade: 0.0,
            n_vessels: 1,
            ..SimConfig::default()
        };
        let schedule: crate::sim::Schedule = [
            (
                "v00-a".to_string(),
                vec![crate::sim::ScheduledDegradation { onset: sim.start_time + 2_000, dwell_s: 1_200 }],
            ),
            ("v00-b".to_string(), vec![]),
        ]
        .into_iter()
        .collect();
        let engine = StreamEngine::new(
            testkit::latency_detector_bundle(),
            ActionPolicy::default(),
            PreprocessConfig::default(),
            SiteTopology::reference(),
        )
        .unwrap();
        let mut policy = EnginePolicy::new(engine);
        let mut scenario = crate::sim::Scenario::with_schedule(sim.clone(), schedule).unwrap();
        while !scenario.finished() {
            let now = scenario.now();
            let samples = scenario.step();
            for req in policy.on_tick(now, &samples) {
                let status = scenario.apply_restart(&req.wan_id, req.time).unwrap();
                policy.on_ack(&req, status);
            }
        }
        let outcome = scenario.into_outcome();
        // The degradation was preempted: restart outage, no drop.
        assert_eq!(outcome.truth.len(), 1);
        assert_eq!(outcome.truth[0].drop_time, None, "drop should have been preempted");
        assert_eq!(outcome.outages.len(), 1);
        assert_eq!(outcome.outages[0].kind, crate::sim::OutageKind::Restart);
        assert_eq!(outcome.outages[0].end - outcome.outages[0].start, 10);
        assert_eq!(policy.actions().len(), 1);
        assert_eq!(policy.acks.len(), 1);
        assert_eq!(policy.acks[0].1, RestartStatus::Ok);
    }
}
