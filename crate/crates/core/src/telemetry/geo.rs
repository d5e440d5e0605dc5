//! Great-circle geometry used for geographic outlier filtering.

use super::SiteTopology;
use crate::error::{Error, Result};

/// Conventional mean Earth radius.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance in km between two (latitude, longitude) points in
/// degrees, on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    for &(lat, lon) in &[a, b] {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Domain(format!(
                "coordinates out of range: ({lat}, {lon})"
            )));
        }
    }
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin())
}

/// Distance in km from `p` to the closest cell of the topology.
pub fn nearest_site_km(p: (f64, f64), topology: &SiteTopology) -> Result<f64> {
    if topology.is_empty() {
        return Err(Error::Config("topology has no cells".into()));
    }
    let mut best = f64::INFINITY;
    for cell in &topology.cells {
        best = best.min(haversine_km(p, (cell.latitude, cell.longitude))?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::Cell;
    use proptest::prelude::*;

    #[test]
    fn coincident_points_are_zero() {
        assert_eq!(haversine_km((54.0, 2.0), (54.0, 2.0)).unwrap(), 0.0);
    }

    #[test]
    fn tenth_degree_of_latitude() {
        // Independently evaluated haversine on the 6371 km sphere.
        let d = haversine_km((0.0, 0.0), (0.1, 0.0)).unwrap();
        assert!((d - 11.119492664455874).abs() < 1e-9, "got {d}");
    }

    #[test]
    fn symmetric_under_swap() {
        let a = (54.0, 2.0);
        let b = (54.0, 2.3);
        let d1 = haversine_km(a, b).unwrap();
        let d2 = haversine_km(b, a).unwrap();
        assert_eq!(d1, d2);
        assert!((d1 - 19.607606743676033).abs() < 1e-9);
    }

    #[test]
    fn rejects_out_of_range_coordinates() {
        assert!(haversine_km((91.0, 0.0), (0.0, 0.0)).is_err());
        assert!(haversine_km((0.0, 0.0), (0.0, -181.0)).is_err());
    }

    #[test]
    fn nearest_site_over_three_cells_is_the_brute_force_min() {
        let topo = three_cell_topology();
        let p = (54.15, 2.08);
        let brute = topo
            .cells
            .iter()
            .map(|c| haversine_km(p, (c.latitude, c.longitude)).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(nearest_site_km(p, &topo).unwrap(), brute);
    }

    #[test]
    fn nearest_site_zero_at_cell_location() {
        let topo = three_cell_topology();
        let c = &topo.cells[1];
        assert_eq!(
            nearest_site_km((c.latitude, c.longitude), &topo).unwrap(),
            0.0
        );
    }

    #[test]
    fn nearest_site_singleton_equals_haversine() {
        let mut topo = three_cell_topology();
        topo.cells.truncate(1);
        let p = (54.2, 2.2);
        let c = &topo.cells[0];
        assert_eq!(
            nearest_site_km(p, &topo).unwrap(),
            haversine_km(p, (c.latitude, c.longitude)).unwrap()
        );
    }

    #[test]
    fn empty_topology_is_a_configuration_error() {
        let topo = SiteTopology { cells: vec![] };
        assert!(nearest_site_km((54.0, 2.0), &topo).is_err());
    }

    fn three_cell_topology() -> SiteTopology {
        let mk = |id: &str, lat: f64, lon: f64| Cell {
            cell_id: id.into(),
            site_id: id.into(),
            latitude: lat,
            longitude: lon,
            azimuth_deg: 0.0,
        };
        SiteTopology {
            cells: vec![
                mk("A", 54.115, 2.035),
                mk("B", 54.115, 2.225),
                mk("C", 54.215, 2.130),
            ],
        }
    }

    proptest! {
        #[test]
        fn triangle_inequality(
            lat_a in -89.0..89.0f64, lon_a in -179.0..179.0f64,
            lat_b in -89.0..89.0f64, lon_b in -179.0..179.0f64,
            lat_c in -89.0..89.0f64, lon_c in -179.0..179.0f64,
        ) {
            let a = (lat_a, lon_a);
            let b = (lat_b, lon_b);
            let c = (lat_c, lon_c);
            let ab = haversine_km(a, b).unwrap();
            let bc = haversine_km(b, c).unwrap();
            let ac = haversine_km(a, c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
        }
    }
}
