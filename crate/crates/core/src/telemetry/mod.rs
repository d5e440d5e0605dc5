//! Domain types shared by every stage: per-modem telemetry records, restart
//! actions, the cell-site topology, and the dataset container.
//!
//! Times are integer UTC epoch seconds throughout; signal values are plain
//! `f64` in their natural units (dBm/dB/ms).

mod geo;
mod io;

pub use geo::{haversine_km, nearest_site_km, EARTH_RADIUS_KM};
pub use io::{
    load_actions, load_telemetry, load_topology, save_actions, save_telemetry, save_topology,
    LoadReport, RowError, ACTIONS_HEADER, TELEMETRY_HEADER, TOPOLOGY_HEADER,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One 5-second telemetry record exported by a CPE modem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModemSample {
    pub wan_id: String,
    pub carrier: String,
    #[serde(rename = "lte_rsrp")]
    pub rsrp: f64,
    #[serde(rename = "lte_sinr")]
    pub sinr: f64,
    #[serde(rename = "lte_rsrq")]
    pub rsrq: f64,
    pub latency_ms: f64,
    /// UTC epoch seconds.
    pub time: i64,
    pub latitude: f64,
    pub longitude: f64,
}

/// Valid post-cleaning value ranges per feature.
pub mod valid_range {
    pub const RSRP: (f64, f64) = (-140.0, -44.0);
    pub const RSRQ: (f64, f64) = (-24.0, 0.0);
    pub const SINR: (f64, f64) = (-23.0, 40.0);
    /// Latency is valid in `(0, 10000]` ms.
    pub const LATENCY_MS: (f64, f64) = (0.0, 10000.0);
}

impl ModemSample {
    /// First feature whose value falls outside its valid range, if any.
    pub fn range_violation(&self) -> Option<&'static str> {
        if !self.rsrp.is_finite() || self.rsrp < valid_range::RSRP.0 || self.rsrp > valid_range::RSRP.1 {
            return Some("rsrp");
        }
        if !self.sinr.is_finite() || self.sinr < valid_range::SINR.0 || self.sinr > valid_range::SINR.1 {
            return Some("sinr");
        }
        if !self.rsrq.is_finite() || self.rsrq < valid_range::RSRQ.0 || self.rsrq > valid_range::RSRQ.1 {
            return Some("rsrq");
        }
        if !self.latency_ms.is_finite()
            || self.latency_ms <= valid_range::LATENCY_MS.0
            || self.latency_ms > valid_range::LATENCY_MS.1
        {
            return Some("latency");
        }
        None
    }
}

/// Who triggered a modem restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionSource {
    Manual,
    Automated,
}

impl std::fmt::Display for ActionSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ActionSource::Manual => write!(f, "manual"),
            ActionSource::Automated => write!(f, "automated"),
        }
    }
}

/// A timestamped restart action; the labelling signal for training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub wan_id: String,
    pub time: i64,
    pub source: ActionSource,
}

/// One macro cell (a sector of a site).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub cell_id: String,
    pub site_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub azimuth_deg: f64,
}

/// The cell layout the vessels roam under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteTopology {
    pub cells: Vec<Cell>,
}

impl SiteTopology {
    /// The reference layout: 3 sites of 3 sectors each, 9 macro cells,
    /// spread over an offshore area of roughly 300 km².
    pub fn reference() -> Self {
        let sites = [
            ("S1", 54.115, 2.035),
            ("S2", 54.115, 2.225),
            ("S3", 54.215, 2.130),
        ];
        let mut cells = Vec::with_capacity(9);
        for (site_id, lat, lon) in sites {
            for (sector, az) in [(1u8, 0.0), (2, 120.0), (3, 240.0)] {
                cells.push(Cell {
                    cell_id: format!("{site_id}C{sector}"),
                    site_id: site_id.to_string(),
                    latitude: lat,
                    longitude: lon,
                    azimuth_deg: az,
                });
            }
        }
        SiteTopology { cells }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Axis-aligned bounding box of the cells: ((lat_min, lat_max), (lon_min, lon_max)).
    pub fn bounding_box(&self) -> Option<((f64, f64), (f64, f64))> {
        if self.cells.is_empty() {
            return None;
        }
        let mut lat = (f64::INFINITY, f64::NEG_INFINITY);
        let mut lon = (f64::INFINITY, f64::NEG_INFINITY);
        for c in &self.cells {
            lat = (lat.0.min(c.latitude), lat.1.max(c.latitude));
            lon = (lon.0.min(c.longitude), lon.1.max(c.longitude));
        }
        Some((lat, lon))
    }
}

/// Telemetry partitioned by modem; within a partition, time strictly increases.
pub type Partitions = BTreeMap<String, Vec<ModemSample>>;

/// Everything one training or evaluation run consumes.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Partitions,
    pub actions: Vec<ActionRecord>,
    pub topology: SiteTopology,
}

impl Default for SiteTopology {
    fn default() -> Self {
        SiteTopology { cells: Vec::new() }
    }
}

/// Slot of a modem within its dual-modem CPE, derived from the trailing
/// character of the WAN id (`…a`/`…0` → 0, `…b`/`…1` → 1). Ids outside the
/// pairing convention fall back to character parity so the mapping stays
/// total and deterministic.
pub fn cpe_slot(wan_id: &str) -> u8 {
    match wan_id.chars().last() {
        Some('a') | Some('A') | Some('0') => 0,
        Some('b') | Some('B') | Some('1') => 1,
        Some(c) => (c as u32 % 2) as u8,
        None => 0,
    }
}

/// WAN id of the partner modem on the same CPE, when the id follows the
/// pairing convention (trailing `a`/`b` or `0`/`1`).
pub fn sibling_wan_id(wan_id: &str) -> Option<String> {
    let mut chars: Vec<char> = wan_id.chars().collect();
    let last = chars.pop()?;
    let flipped = match last {
        'a' => 'b',
        'b' => 'a',
        'A' => 'B',
        'B' => 'A',
        '0' => '1',
        '1' => '0',
        _ => return None,
    };
    chars.push(flipped);
    Some(chars.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_follows_suffix_convention() {
        assert_eq!(cpe_slot("v03-a"), 0);
        assert_eq!(cpe_slot("v03-b"), 1);
        assert_eq!(cpe_slot("wan0"), 0);
        assert_eq!(cpe_slot("wan1"), 1);
    }

    #[test]
    fn sibling_flips_the_pair() {
        assert_eq!(sibling_wan_id("v03-a").as_deref(), Some("v03-b"));
        assert_eq!(sibling_wan_id("wan1").as_deref(), Some("wan0"));
        assert_eq!(sibling_wan_id("modemX"), None);
    }

    #[test]
    fn range_violation_names_the_feature() {
        let mut s = sample();
        assert_eq!(s.range_violation(), None);
        s.rsrp = -150.0;
        assert_eq!(s.range_violation(), Some("rsrp"));
        s.rsrp = -95.0;
        s.latency_ms = 0.0;
        assert_eq!(s.range_violation(), Some("latency"));
    }

    #[test]
    fn reference_topology_is_nine_cells_three_sites() {
        let topo = SiteTopology::reference();
        assert_eq!(topo.cells.len(), 9);
        let sites: std::collections::BTreeSet<_> =
            topo.cells.iter().map(|c| c.site_id.as_str()).collect();
        assert_eq!(sites.len(), 3);
    }

    fn sample() -> ModemSample {
        ModemSample {
            wan_id: "wan0".into(),
            carrier: "B3".into(),
            rsrp: -95.0,
            sinr: 12.0,
            rsrq: -10.0,
            latency_ms: 40.0,
            time: 1_700_000_000,
            latitude: 54.15,
            longitude: 2.1,
        }
    }
}
