//! Baseline radio model and vessel movement.
//!
//! Signal quality follows log-distance path loss to the serving cell plus
//! Gaussian shadowing; vessels follow seeded waypoint tracks inside the
//! topology's bounding area.

use super::SimConfig;
use crate::telemetry::{haversine_km, SiteTopology};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const METERS_PER_DEG_LAT: f64 = 111_320.0;

/// Margin added around the topology bounding box for vessel tracks, km.
const ROAM_MARGIN_KM: f64 = 2.5;

/// The (lat, lon) rectangle vessels roam in.
pub fn roam_box(topology: &SiteTopology) -> ((f64, f64), (f64, f64)) {
    let ((lat_lo, lat_hi), (lon_lo, lon_hi)) = topology
        .bounding_box()
        .unwrap_or(((54.1, 54.2), (2.0, 2.2)));
    let dlat = ROAM_MARGIN_KM / 111.32;
    let mid_lat = (lat_lo + lat_hi) / 2.0;
    let dlon = ROAM_MARGIN_KM / (111.32 * mid_lat.to_radians().cos());
    ((lat_lo - dlat, lat_hi + dlat), (lon_lo - dlon, lon_hi + dlon))
}

#[derive(Debug, Clone)]
pub(crate) struct Vessel {
    pub lat: f64,
    pub lon: f64,
    waypoint: (f64, f64),
    bounds: ((f64, f64), (f64, f64)),
    rng: ChaCha8Rng,
}

impl Vessel {
    pub fn new(topology: &SiteTopology, mut rng: ChaCha8Rng) -> Self {
        let bounds = roam_box(topology);
        let lat = rng.gen_range(bounds.0 .0..=bounds.0 .1);
        let lon = rng.gen_range(bounds.1 .0..=bounds.1 .1);
        let waypoint = (
            rng.gen_range(bounds.0 .0..=bounds.0 .1),
            rng.gen_range(bounds.1 .0..=bounds.1 .1),
        );
        Vessel { lat, lon, waypoint, bounds, rng }
    }

    /// Move toward the current waypoint for `dt` seconds at `speed` m/s,
    /// drawing a new waypoint on arrival.
    pub fn advance(&mut self, speed_mps: f64, dt_s: i64) {
        let step_m = speed_mps * dt_s as f64;
        let dlat_m = (self.waypoint.0 - self.lat) * METERS_PER_DEG_LAT;
        let dlon_m = (self.waypoint.1 - self.lon)
            * METERS_PER_DEG_LAT
            * self.lat.to_radians().cos();
        let dist_m = (dlat_m * dlat_m + dlon_m * dlon_m).sqrt();
        if dist_m <= step_m || dist_m < 1.0 {
            self.lat = self.waypoint.0;
            self.lon = self.waypoint.1;
            self.waypoint = (
                self.rng.gen_range(self.bounds.0 .0..=self.bounds.0 .1),
                self.rng.gen_range(self.bounds.1 .0..=self.bounds.1 .1),
            );
            return;
        }
        let f = step_m / dist_m;
        self.lat += f * dlat_m / METERS_PER_DEG_LAT;
        self.lon += f * dlon_m / (METERS_PER_DEG_LAT * self.lat.to_radians().cos());
    }
}

/// Index of the nearest cell to a position.
pub(crate) fn nearest_cell_idx(topology: &SiteTopology, p: (f64, f64)) -> usize {
    let mut best = (0usize, f64::INFINITY);
    for (i, c) in topology.cells.iter().enumerate() {
        let d = haversine_km(p, (c.latitude, c.longitude)).unwrap_or(f64::INFINITY);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Per-tick noise draws for one modem. Drawn unconditionally every tick so
/// the stream stays aligned whether or not a sample is emitted.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TickNoise {
    pub shadow_db: f64,
    pub sinr_db: f64,
    pub rsrq_db: f64,
    pub jitter_ms: f64,
}

impl TickNoise {
    pub fn draw(rng: &mut ChaCha8Rng, config: &SimConfig) -> Self {
        TickNoise {
            shadow_db: gaussian(rng) * config.shadow_sigma_db,
            sinr_db: gaussian(rng) * config.shadow_sigma_db * 0.5,
            rsrq_db: gaussian(rng) * config.shadow_sigma_db * 0.25,
            jitter_ms: gaussian(rng).abs() * config.latency_jitter_ms,
        }
    }
}

/// Standard normal via Box-Muller; consumes exactly two uniforms.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Baseline (healthy) feature values at `dist_km` from the serving cell.
pub(crate) fn baseline_features(dist_km: f64, noise: TickNoise) -> (f64, f64, f64, f64) {
    let d = dist_km.max(0.05);
    let rsrp = (-62.0 - 28.0 * (d / 0.1).log10() + noise.shadow_db).clamp(-138.0, -46.0);
    let sinr = ((rsrp + 112.0) / 2.4 + noise.sinr_db).clamp(-20.0, 38.0);
    let rsrq = (-8.0 - 0.35 * d + noise.rsrq_db).clamp(-22.0, -1.0);
    let latency = (38.0 + 0.5 * d + noise.jitter_ms).clamp(1.0, 9_000.0);
    (rsrp, sinr, rsrq, latency)
}

/// Superimpose the degradation signature `steps` ticks after onset.
pub(crate) fn degraded_features(
    base: (f64, f64, f64, f64),
    steps: i64,
    config: &SimConfig,
) -> (f64, f64, f64, f64) {
    let k = steps as f64;
    let (rsrp, sinr, rsrq, latency) = base;
    (
        rsrp,
        (sinr + config.drift_sinr_db * k).clamp(-22.9, 39.9),
        (rsrq + config.drift_rsrq_db * k).clamp(-23.9, -0.1),
        (latency + config.drift_latency_ms * k).clamp(0.1, 9_999.0),
    )
}
