//! Closed-loop A/B evaluation: the same seeded scenario with and without the
//! restart policy attached, reduced to before/after outage metrics.

mod report;

pub use report::{
    classifier_report, lead_times, render_report, write_detail_csv, write_report_csv,
    ClassifierReport, LeadTime,
};

use crate::decision::{ActionPolicy, Decision, DecisionEvent, EnginePolicy, StreamEngine};
use crate::error::Result;
use crate::nn::ModelBundle;
use crate::preprocess::PreprocessConfig;
use crate::sim::{run_scenario, GroundTruthEvent, Outage, OutageKind, SimConfig};
use crate::telemetry::sibling_wan_id;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Table-shaped counters for one scenario arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutageMetrics {
    /// Unplanned drops (one modem at a time).
    pub one_modem_disconnections: u64,
    /// Episodes with both modems of a CPE silent simultaneously.
    pub dual_modem_disconnections: u64,
    /// The vessel is offline exactly when both modems are; equal to the dual
    /// count in the two-modem model.
    pub network_disconnectivity_events: u64,
    pub manual_actions: u64,
    pub automated_actions: u64,
    /// Mean duration of the arm's recovery mechanism: commanded restarts
    /// where any were applied, otherwise the passive reconnections.
    pub mean_response_time_s: f64,
    pub duration_s: i64,
}

/// Reduce an outage log to metrics.
pub fn outage_metrics(
    outages: &[Outage],
    duration_s: i64,
    manual_actions: u64,
    automated_actions: u64,
) -> OutageMetrics {
    let one_modem =
        outages.iter().filter(|o| o.kind == OutageKind::Drop).count() as u64;
    let dual = dual_outage_episodes(outages);
    let restarts: Vec<i64> =
        outages.iter().filter(|o| o.kind == OutageKind::Restart).map(|o| o.end - o.start).collect();
    let drops: Vec<i64> =
        outages.iter().filter(|o| o.kind == OutageKind::Drop).map(|o| o.end - o.start).collect();
    let response = if !restarts.is_empty() { &restarts } else { &drops };
    let mean_response_time_s = if response.is_empty() {
        0.0
    } else {
        response.iter().sum::<i64>() as f64 / response.len() as f64
    };
    OutageMetrics {
        one_modem_disconnections: one_modem,
        dual_modem_disconnections: dual,
        network_disconnectivity_events: dual,
        manual_actions,
        automated_actions,
        mean_response_time_s,
        duration_s,
    }
}

/// Count episodes during which both modems of a CPE are silent at once.
/// Intervals are half-open, so touching boundaries do not overlap.
pub fn dual_outage_episodes(outages: &[Outage]) -> u64 {
    let mut by_pair: BTreeMap<String, [Vec<(i64, i64)>; 2]> = BTreeMap::new();
    for o in outages {
        let Some(sibling) = sibling_wan_id(&o.wan_id) else { continue };
        let slot = usize::from(o.wan_id > sibling);
        let key = if slot == 0 { o.wan_id.clone() } else { sibling };
        by_pair.entry(key).or_default()[slot].push((o.start, o.end));
    }
    let mut episodes = 0;
    for [a_side, b_side] in by_pair.values() {
        for &(a0, a1) in a_side {
            for &(b0, b1) in b_side {
                if a0.max(b0) < a1.min(b1) {
                    episodes += 1;
                }
            }
        }
    }
    episodes
}

/// Mechanical checks over one treated run's logs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub restarts_issued: u64,
    /// restart_issued within the cooldown of a prior action on the same modem.
    pub cooldown_violations: u64,
    /// restart_issued while the sibling had an outage active at that instant.
    pub sibling_violations: u64,
}

pub fn verify_safety(
    events: &[DecisionEvent],
    outages: &[Outage],
    policy: &ActionPolicy,
) -> SafetyReport {
    let mut report = SafetyReport::default();
    let mut last_issue: BTreeMap<&str, i64> = BTreeMap::new();
    for e in events {
        if e.decision != Decision::RestartIssued {
            continue;
        }
        report.restarts_issued += 1;
        if let Some(&prev) = last_issue.get(e.wan_id.as_str()) {
            if e.time - prev < policy.cooldown_s {
                report.cooldown_violations += 1;
            }
        }
        last_issue.insert(&e.wan_id, e.time);
        if let Some(sibling) = sibling_wan_id(&e.wan_id) {
            let overlapping = outages
                .iter()
                .any(|o| o.wan_id == sibling && o.start <= e.time && e.time < o.end);
            if overlapping {
                report.sibling_violations += 1;
            }
        }
    }
    report
}

/// One seed's before/after outcome.
#[derive(Debug, Clone)]
pub struct AbRun {
    pub seed: u64,
    pub baseline: OutageMetrics,
    pub treated: OutageMetrics,
    pub safety: SafetyReport,
    /// Both arms saw identical degradation onsets.
    pub onsets_match: bool,
    pub baseline_truth: Vec<GroundTruthEvent>,
    pub treated_outages: Vec<Outage>,
    pub treated_events: Vec<DecisionEvent>,
}

/// Run the identical scenario twice per seed: passive recovery vs the
/// trained policy closing the loop.
pub fn run_ab(
    sim: &SimConfig,
    bundle: &ModelBundle,
    policy: &ActionPolicy,
    pre: &PreprocessConfig,
    seeds: &[u64],
) -> Result<Vec<AbRun>> {
    policy.validate(sim.restart_seconds)?;
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let config = SimConfig { seed, ..sim.clone() };
        let baseline = run_scenario(&config, None)?;
        let engine = StreamEngine::new(
            bundle.clone(),
            policy.clone(),
            pre.clone(),
            config.topology.clone(),
        )?;
        let mut hook = EnginePolicy::new(engine);
        let treated = run_scenario(&config, Some(&mut hook))?;

        let onsets = |truth: &[GroundTruthEvent]| {
            truth.iter().map(|e| (e.wan_id.clone(), e.onset)).collect::<Vec<_>>()
        };
        let onsets_match = onsets(&baseline.truth) == onsets(&treated.truth);
        let events = hook.into_events();
        let automated =
            events.iter().filter(|e| e.decision == Decision::RestartIssued).count() as u64;
        let safety = verify_safety(&events, &treated.outages, policy);
        runs.push(AbRun {
            seed,
            baseline: outage_metrics(&baseline.outages, config.duration_s, 0, 0),
            treated: outage_metrics(&treated.outages, config.duration_s, 0, automated),
            safety,
            onsets_match,
            baseline_truth: baseline.truth,
            treated_outages: treated.outages,
            treated_events: events,
        });
    }
    Ok(runs)
}
