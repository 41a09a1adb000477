//! Spherical geometry helpers.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub lat: f64,
    pub lon: f64,
}

impl Coordinate {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Coordinate { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }

    /// Point reached by moving `east_m` meters east and `north_m` meters north,
    /// using the local equirectangular approximation.
    pub fn offset_m(&self, east_m: f64, north_m: f64) -> Coordinate {
        let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
        let dlon = (east_m / (EARTH_RADIUS_M * self.lat.to_radians().cos())).to_degrees();
        Coordinate::new(self.lat + dlat, self.lon + dlon)
    }

    /// Unit vector on the sphere; chord length between unit vectors is a
    /// monotone function of great-circle distance.
    pub(crate) fn unit_vector(&self) -> [f64; 3] {
        let (slat, clat) = self.lat.to_radians().sin_cos();
        let (slon, clon) = self.lon.to_radians().sin_cos();
        [clat * clon, clat * slon, slat]
    }
}

/// Great-circle distance in meters by the haversine formula.
pub fn haversine(a: Coordinate, b: Coordinate) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Great-circle distance recovered from the straight-line chord between two
/// unit vectors.
pub(crate) fn chord_to_meters(chord: f64) -> f64 {
    2.0 * EARTH_RADIUS_M * (chord / 2.0).min(1.0).asin()
}

/// Equirectangular projection to planar meters about `origin`.
#[derive(Debug, Clone, Copy)]
pub struct LocalProjection {
    origin: Coordinate,
    cos_lat: f64,
}

impl LocalProjection {
    pub fn new(origin: Coordinate) -> Self {
        LocalProjection {
            origin,
            cos_lat: origin.lat.to_radians().cos(),
        }
    }

    /// Returns (east, north) in meters.
    pub fn project(&self, c: Coordinate) -> (f64, f64) {
        let x = (c.lon - self.origin.lon).to_radians() * self.cos_lat * EARTH_RADIUS_M;
        let y = (c.lat - self.origin.lat).to_radians() * EARTH_RADIUS_M;
        (x, y)
    }
}

/// Arithmetic mean of coordinates (plain degree averaging, valid at city scale).
pub fn mean_coordinate(points: impl IntoIterator<Item = Coordinate>) -> Option<Coordinate> {
    let mut n = 0usize;
    let (mut lat, mut lon) = (0.0, 0.0);
    for p in points {
        lat += p.lat;
        lon += p.lon;
        n += 1;
    }
    (n > 0).then(|| Coordinate::new(lat / n as f64, lon / n as f64))
}
