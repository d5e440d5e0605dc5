//! The per-series pipeline stages: clean, downsample, assemble.

use super::{PreprocessConfig, RejectionReport, FEATURE_ROWS};
use crate::error::{Error, Result};
use crate::telemetry::{cpe_slot, nearest_site_km, ModemSample, SiteTopology};

/// A cleaned record; `synthetic` marks forward-filled gap padding.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanRecord {
    pub sample: ModemSample,
    pub synthetic: bool,
}

/// A maximal contiguous run of cleaned records on the given grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub wan_id: String,
    pub interval_s: i64,
    pub records: Vec<CleanRecord>,
}

/// Drop invalid records, pad short gaps, and split on long ones.
///
/// Records outside the valid feature ranges are counted under
/// `range:<feature>`; records farther than the cutoff from every site under
/// `geo`. Gaps of at most `max_gap_fill` ticks are bridged by copying the
/// last valid record forward; anything longer starts a new segment.
pub fn clean(
    wan_id: &str,
    samples: &[ModemSample],
    config: &PreprocessConfig,
    topology: &SiteTopology,
) -> (Vec<Segment>, RejectionReport) {
    let mut report = RejectionReport::default();
    let mut valid = Vec::with_capacity(samples.len());
    for s in samples {
        if let Some(feature) = s.range_violation() {
            report.bump(&format!("range:{feature}"));
            continue;
        }
        match nearest_site_km((s.latitude, s.longitude), topology) {
            Ok(d) if d <= config.geo_cutoff_km => valid.push(s),
            _ => report.bump("geo"),
        }
    }

    let interval = config.sample_interval_s;
    let mut segments = Vec::new();
    let mut current: Vec<CleanRecord> = Vec::new();
    for s in valid {
        if let Some(last) = current.last().map(|r| r.sample.clone()) {
            let dt = s.time - last.time;
            debug_assert!(dt > 0, "input series must be strictly increasing in time");
            let on_grid = dt % interval == 0;
            let gap_ticks = if on_grid { (dt / interval - 1) as usize } else { usize::MAX };
            if !on_grid || gap_ticks > config.max_gap_fill {
                segments.push(std::mem::take(&mut current));
            } else {
                for k in 1..=gap_ticks as i64 {
                    let mut fill = last.clone();
                    fill.time += k * interval;
                    current.push(CleanRecord { sample: fill, synthetic: true });
                }
            }
        }
        current.push(CleanRecord { sample: s.clone(), synthetic: false });
    }
    if !current.is_empty() {
        segments.push(current);
    }
    let segments = segments
        .into_iter()
        .map(|records| Segment { wan_id: wan_id.to_string(), interval_s: interval, records })
        .collect();
    (segments, report)
}

/// Block-mean reduction by a factor of `n`; the block's timestamp is its
/// first record's, and a trailing partial block is dropped.
pub fn downsample(segment: &Segment, n: usize) -> Result<Segment> {
    if n < 1 {
        return Err(Error::Config("downsampling factor must be >= 1".into()));
    }
    if n == 1 {
        return Ok(segment.clone());
    }
    let blocks = segment.records.len() / n;
    let mut records = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let chunk = &segment.records[b * n..(b + 1) * n];
        let mean = |f: fn(&ModemSample) -> f64| {
            chunk.iter().map(|r| f(&r.sample)).sum::<f64>() / n as f64
        };
        let mut sample = chunk[0].sample.clone();
        sample.rsrp = mean(|s| s.rsrp);
        sample.sinr = mean(|s| s.sinr);
        sample.rsrq = mean(|s| s.rsrq);
        sample.latency_ms = mean(|s| s.latency_ms);
        records.push(CleanRecord { sample, synthetic: chunk.iter().any(|r| r.synthetic) });
    }
    Ok(Segment {
        wan_id: segment.wan_id.clone(),
        interval_s: segment.interval_s * n as i64,
        records,
    })
}

/// Windowing mode: non-overlapping tiles for training, stride-1 sliding
/// windows for serving.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssembleMode {
    Training,
    Inference,
}

/// A 5×L feature window with its time span.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub wan_id: String,
    pub t_start: i64,
    pub t_end: i64,
    /// Row order: wan indicator, rsrp, sinr, rsrq, latency.
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    /// Feature column at one time step.
    pub fn column(&self, t: usize) -> [f64; FEATURE_ROWS] {
        [
            self.rows[0][t],
            self.rows[1][t],
            self.rows[2][t],
            self.rows[3][t],
            self.rows[4][t],
        ]
    }

    pub fn seq_len(&self) -> usize {
        self.rows[0].len()
    }
}

fn window_matrix(wan_id: &str, slot: f64, records: &[CleanRecord]) -> FeatureMatrix {
    let l = records.len();
    let mut rows = vec![Vec::with_capacity(l); FEATURE_ROWS];
    for r in records {
        rows[0].push(slot);
        rows[1].push(r.sample.rsrp);
        rows[2].push(r.sample.sinr);
        rows[3].push(r.sample.rsrq);
        rows[4].push(r.sample.latency_ms);
    }
    FeatureMatrix {
        wan_id: wan_id.to_string(),
        t_start: records[0].sample.time,
        t_end: records[l - 1].sample.time,
        rows,
    }
}

/// Cut a downsampled segment into 5×L windows.
pub fn assemble(segment: &Segment, seq_len: usize, mode: AssembleMode) -> Vec<FeatureMatrix> {
    let slot = cpe_slot(&segment.wan_id) as f64;
    let n = segment.records.len();
    if seq_len == 0 || n < seq_len {
        return Vec::new();
    }
    match mode {
        AssembleMode::Training => (0..n / seq_len)
            .map(|w| window_matrix(&segment.wan_id, slot, &segment.records[w * seq_len..(w + 1) * seq_len]))
            .collect(),
        AssembleMode::Inference => (0..=n - seq_len)
            .map(|w| window_matrix(&segment.wan_id, slot, &segment.records[w..w + seq_len]))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_at(wan_id: &str, time: i64) -> ModemSample {
        ModemSample {
            wan_id: wan_id.into(),
            carrier: "S1C1".into(),
            rsrp: -95.0,
            sinr: 12.0,
            rsrq: -10.0,
            latency_ms: 40.0,
            time,
            latitude: 54.115,
            longitude: 2.035,
        }
    }

    fn grid(wan_id: &str, t0: i64, n: usize) -> Vec<ModemSample> {
        (0..n as i64).map(|k| sample_at(wan_id, t0 + 5 * k)).collect()
    }

    fn config() -> PreprocessConfig {
        PreprocessConfig::default()
    }

    fn topo() -> SiteTopology {
        SiteTopology::reference()
    }

    #[test]
    fn out_of_range_rsrp_is_dropped_with_reason() {
        let mut samples = grid("v00-a", 1000, 3);
        samples[1].rsrp = -150.0;
        let (segments, report) = clean("v00-a", &samples, &config(), &topo());
        assert_eq!(report.count("range:rsrp"), 1);
        // Dropping the middle record leaves a 1-tick gap, bridged by fill.
        assert_eq!(segments.len(), 1);
        assert_eq!(segments[0].records.len(), 3);
        assert!(segments[0].records[1].synthetic);
    }

    #[test]
    fn far_from_every_site_is_a_geo_outlier() {
        let mut samples = grid("v00-a", 1000, 2);
        // 50 km due north of the nearest site with a 30 km cutoff.
        samples[1].latitude = 54.565;
        let (segments, report) = clean("v00-a", &samples, &config(), &topo());
        assert_eq!(report.count("geo"), 1);
        assert_eq!(segments[0].records.len(), 1);
    }

    #[test]
    fn short_gap_forward_fills_long_gap_splits() {
        // Gap of 3 ticks: records at t=1000 and t=1020.
        let samples = vec![sample_at("v00-a", 1000), sample_at("v00-a", 1020)];
        let (segments, _) = clean("v00-a", &samples, &config(), &topo());
        assert_eq!(segments.len(), 1);
        let flags: Vec<bool> = segments[0].records.iter().map(|r| r.synthetic).collect();
        assert_eq!(flags, vec![false, true, true, true, false]);
        let times: Vec<i64> = segments[0].records.iter().map(|r| r.sample.time).collect();
        assert_eq!(times, vec![1000, 1005, 1010, 1015, 1020]);

        // Gap of 10 ticks: split into two segments, no synthetic records.
        let samples = vec![sample_at("v00-a", 1000), sample_at("v00-a", 1055)];
        let (segments, _) = clean("v00-a", &samples, &config(), &topo());
        assert_eq!(segments.len(), 2);
        assert!(segments.iter().all(|seg| seg.records.iter().all(|r| !r.synthetic)));
    }

    #[test]
    fn boundary_gap_of_max_gap_fill_is_bridged() {
        // Exactly 6 missing ticks (dt = 35 s).
        let samples = vec![sample_at("v00-a", 1000), sample_at("v00-a", 1035)];
        let (segments, _) = clean("v00-a", &samples, &config(), &topo());
        assert_eq!(segments.len(), 1);
        assert_eq!(segments[0].records.len(), 8);
        // One more tick splits.
        let samples = vec![sample_at("v00-a", 1000), sample_at("v00-a", 1040)];
        let (segments, _) = clean("v00-a", &samples, &config(), &topo());
        assert_eq!(segments.len(), 2);
    }

    #[test]
    fn off_grid_timestamp_splits() {
        let samples = vec![sample_at("v00-a", 1000), sample_at("v00-a", 1007)];
        let (segments, report) = clean("v00-a", &samples, &config(), &topo());
        assert_eq!(segments.len(), 2);
        assert_eq!(report.total(), 0);
    }

    #[test]
    fn all_rejected_series_yields_zero_segments() {
        let mut samples = grid("v00-a", 1000, 4);
        for s in &mut samples {
            s.latency_ms = -1.0;
        }
        let (segments, report) = clean("v00-a", &samples, &config(), &topo());
        assert!(segments.is_empty());
        assert_eq!(report.count("range:latency"), 4);
    }

    #[test]
    fn downsample_pairwise_means() {
        let mut samples = grid("v00-a", 1000, 4);
        for (s, lat) in samples.iter_mut().zip([40.0, 60.0, 30.0, 50.0]) {
            s.latency_ms = lat;
        }
        let (segments, _) = clean("v00-a", &samples, &config(), &topo());
        let down = downsample(&segments[0], 2).unwrap();
        let lats: Vec<f64> = down.records.iter().map(|r| r.sample.latency_ms).collect();
        assert_eq!(lats, vec![50.0, 40.0]);
        let times: Vec<i64> = down.records.iter().map(|r| r.sample.time).collect();
        assert_eq!(times, vec![1000, 1010]);
        assert_eq!(down.interval_s, 10);
    }

    #[test]
    fn downsample_n1_is_identity_and_n0_rejected() {
        let (segments, _) = clean("v00-a", &grid("v00-a", 1000, 7), &config(), &topo());
        assert_eq!(&downsample(&segments[0], 1).unwrap(), &segments[0]);
        assert!(downsample(&segments[0], 0).is_err());
    }

    #[test]
    fn downsample_drops_trailing_partial_block() {
        let (segments, _) = clean("v00-a", &grid("v00-a", 1000, 7), &config(), &topo());
        let down = downsample(&segments[0], 2).unwrap();
        assert_eq!(down.records.len(), 3);
    }

    #[test]
    fn assemble_counts_for_both_modes() {
        let (segments, _) = clean("v00-a", &grid("v00-a", 1000, 14), &config(), &topo());
        assert_eq!(assemble(&segments[0], 6, AssembleMode::Training).len(), 2);
        assert_eq!(assemble(&segments[0], 6, AssembleMode::Inference).len(), 9);
        let (short, _) = clean("v00-a", &grid("v00-a", 1000, 5), &config(), &topo());
        assert!(assemble(&short[0], 6, AssembleMode::Training).is_empty());
        assert!(assemble(&short[0], 6, AssembleMode::Inference).is_empty());
    }

    #[test]
    fn windows_have_fixed_rows_and_spans() {
        let (segments, _) = clean("v00-b", &grid("v00-b", 1000, 12), &config(), &topo());
        let down = downsample(&segments[0], 2).unwrap();
        let windows = assemble(&down, 6, AssembleMode::Training);
        assert_eq!(windows.len(), 1);
        let w = &windows[0];
        assert_eq!(w.rows.len(), 5);
        assert!(w.rows.iter().all(|r| r.len() == 6));
        // Slot indicator for a "-b" modem is 1 across the whole window.
        assert!(w.rows[0].iter().all(|&x| x == 1.0));
        assert_eq!(w.t_end - w.t_start, 5 * 10);
        assert_eq!(w.column(0), [1.0, -95.0, 12.0, -10.0, 40.0]);
    }

    #[test]
    fn synthetic_fill_never_crosses_a_split() {
        // Two runs separated by a long gap; fills stay within their run.
        let mut samples = grid("v00-a", 1000, 3);
        samples.extend(grid("v00-a", 2000, 3));
        samples.remove(1); // 1-tick hole inside the first run
        let (segments, _) = clean("v00-a", &samples, &config(), &topo());
        assert_eq!(segments.len(), 2);
        assert_eq!(segments[0].records.iter().filter(|r| r.synthetic).count(), 1);
        assert_eq!(segments[1].records.iter().filter(|r| r.synthetic).count(), 0);
    }
}
