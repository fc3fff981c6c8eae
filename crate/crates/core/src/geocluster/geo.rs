use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Longitude/latitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }

    /// Unit-sphere Cartesian coordinates. Chord length between unit vectors
    /// is monotone in great-circle distance.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (lat, lon) = (self.lat.to_radians(), self.lon.to_radians());
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }

    /// Offset by `east_km` / `north_km` using the local latitude cosine.
    pub fn offset_km(&self, east_km: f64, north_km: f64) -> GeoPoint {
        let dlat = (north_km / EARTH_RADIUS_KM).to_degrees();
        let dlon = (east_km / (EARTH_RADIUS_KM * self.lat.to_radians().cos())).to_degrees();
        GeoPoint::new(self.lon + dlon, self.lat + dlat)
    }
}

/// Great-circle distance on a sphere of radius 6371 km.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Squared unit-sphere chord length corresponding to `km`.
pub(crate) fn chord2_for_km(km: f64) -> f64 {
    let c = 2.0 * (km / (2.0 * EARTH_RADIUS_KM)).min(std::f64::consts::FRAC_PI_2).sin();
    c * c
}

pub(crate) fn chord2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_points_are_zero() {
        let p = GeoPoint::new(114.05, 22.54);
        assert_eq!(haversine_km(p, p), 0.0);
    }

    #[test]
    fn one_degree_of_latitude() {
        // R * pi / 180 with R = 6371.0
        let expected = 6371.0 * std::f64::consts::PI / 180.0;
        let d = haversine_km(GeoPoint::new(0.0, 0.0), GeoPoint::new(0.0, 1.0));
        assert!((d - expected).abs() < 1e-9);
        assert!((d - 111.19).abs() < 0.01);
    }

    #[test]
    fn symmetric_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = GeoPoint::new(rng.random_range(-180.0..180.0), rng.random_range(-90.0..90.0));
            let b = GeoPoint::new(rng.random_range(-180.0..180.0), rng.random_range(-90.0..90.0));
            assert_eq!(haversine_km(a, b), haversine_km(b, a));
        }
    }

    #[test]
    fn chord_is_monotone_in_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let o = GeoPoint::new(104.06, 30.67);
        let u = o.unit_vector();
        for _ in 0..200 {
            let p = o.offset_km(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            let d = haversine_km(o, p);
            let c2 = chord2(&u, &p.unit_vector());
            assert!((c2 - chord2_for_km(d)).abs() <= 1e-12 * c2.max(1e-12));
        }
    }

    #[test]
    fn offset_is_locally_metric() {
        let o = GeoPoint::new(114.0, 22.5);
        let d = haversine_km(o, o.offset_km(3.0, 4.0));
        assert!((d - 5.0).abs() < 1e-3);
    }
}
