//! Great-circle geometry on a spherical Earth and a lat/lon bucket grid for
//! nearest-agency lookups.
//!
//! All distances are statute miles on a sphere of radius
//! [`EARTH_RADIUS_MILES`]. Distances are great-circle, not road distances.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Mean Earth radius in statute miles.
pub const EARTH_RADIUS_MILES: f64 = 3958.7613;

/// Length of one degree of arc along a meridian.
pub const MILES_PER_DEGREE: f64 = EARTH_RADIUS_MILES * PI / 180.0;

/// A validated WGS84 coordinate in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(latitude_deg: f64, longitude_deg: f64) -> Result<Self> {
        let ok = latitude_deg.is_finite()
            && longitude_deg.is_finite()
            && (-90.0..=90.0).contains(&latitude_deg)
            && (-180.0..=180.0).contains(&longitude_deg);
        if !ok {
            return Err(Error::InvalidCoordinate {
                latitude: latitude_deg,
                longitude: longitude_deg,
            });
        }
        Ok(Self {
            lat: latitude_deg,
            lon: longitude_deg,
        })
    }

    pub fn latitude_deg(&self) -> f64 {
        self.lat
    }

    pub fn longitude_deg(&self) -> f64 {
        self.lon
    }
}

/// Great-circle distance by the haversine formula.
pub fn haversine_miles(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi_a = a.lat.to_radians();
    let phi_b = b.lat.to_radians();
    let half_dphi = ((b.lat - a.lat).to_radians() * 0.5).sin();
    let half_dlambda = ((b.lon - a.lon).to_radians() * 0.5).sin();
    // squares make the result independent of argument order
    let h = half_dphi * half_dphi + (phi_a.cos() * phi_b.cos()) * (half_dlambda * half_dlambda);
    2.0 * EARTH_RADIUS_MILES * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Point reached by travelling `distance_miles` from `origin` along the
/// great circle with initial bearing `bearing_deg` (clockwise from north).
pub fn destination(origin: GeoPoint, bearing_deg: f64, distance_miles: f64) -> GeoPoint {
    let delta = distance_miles / EARTH_RADIUS_MILES;
    let theta = bearing_deg.to_radians();
    let phi1 = origin.lat.to_radians();
    let lambda1 = origin.lon.to_radians();

    let sin_phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).clamp(-1.0, 1.0);
    let phi2 = sin_phi2.asin();
    let lambda2 = lambda1
        + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * sin_phi2);

    let mut lon = lambda2.to_degrees();
    while lon > 180.0 {
        lon -= 360.0;
    }
    while lon < -180.0 {
        lon += 360.0;
    }
    GeoPoint {
        lat: phi2.to_degrees().clamp(-90.0, 90.0),
        lon,
    }
}

/// Uniform lat/lon bucket index over a fixed set of points.
///
/// Cells are `cell_size_miles` tall; their longitude width in degrees matches
/// their latitude height, so queries widen the longitude span by the cap's
/// true longitudinal extent at the query latitude. Immutable once built.
#[derive(Debug, Clone)]
pub struct SpatialGrid<Id> {
    cell_size_miles: f64,
    cell_deg: f64,
    n_lat: i64,
    n_lon: i64,
    cells: HashMap<(i64, i64), Vec<(Id, GeoPoint)>>,
    len: usize,
}

impl<Id: Clone + Ord> SpatialGrid<Id> {
    pub fn build(agencies: &[(Id, GeoPoint)], cell_size_miles: f64) -> Result<Self> {
        if agencies.is_empty() {
            return Err(Error::InvalidArgument("cannot build a grid over zero agencies".into()));
        }
        if !(cell_size_miles.is_finite() && cell_size_miles > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cell size must be positive, got {cell_size_miles}"
            )));
        }
        let cell_deg = (cell_size_miles / MILES_PER_DEGREE).min(360.0);
        let n_lat = ((180.0 / cell_deg).ceil() as i64).max(1);
        let n_lon = ((360.0 / cell_deg).ceil() as i64).max(1);
        let mut grid = Self {
            cell_size_miles,
            cell_deg,
            n_lat,
            n_lon,
            cells: HashMap::new(),
            len: agencies.len(),
        };
        for (id, p) in agencies {
            let key = (grid.lat_cell(p.lat), grid.lon_cell(p.lon));
            grid.cells.entry(key).or_default().push((id.clone(), *p));
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cell_size_miles(&self) -> f64 {
        self.cell_size_miles
    }

    /// Every stored entry, in unspecified order.
    pub fn entries(&self) -> impl Iterator<Item = &(Id, GeoPoint)> {
        self.cells.values().flatten()
    }

    fn lat_cell(&self, lat: f64) -> i64 {
        (((lat + 90.0) / self.cell_deg).floor() as i64).clamp(0, self.n_lat - 1)
    }

    fn lon_cell(&self, lon: f64) -> i64 {
        (((lon + 180.0) / self.cell_deg).floor() as i64).rem_euclid(self.n_lon)
    }

    /// Calls `f` on every entry that could lie within `radius_miles` of `p`.
    /// Never misses an entry inside the radius; may include some outside.
    fn for_each_candidate<'a, F: FnMut(&'a Id, GeoPoint)>(
        &'a self,
        p: GeoPoint,
        radius_miles: f64,
        mut f: F,
    ) {
        let delta = radius_miles / EARTH_RADIUS_MILES;
        if delta >= PI / 2.0 {
            for (id, q) in self.entries() {
                f(id, *q);
            }
            return;
        }
        // half a cell of slack absorbs rounding at cell boundaries
        let slack = 0.5 * self.cell_deg;
        let dlat = delta.to_degrees() + slack;
        let lat_lo = self.lat_cell(p.lat - dlat);
        let lat_hi = self.lat_cell(p.lat + dlat);

        let phi = p.lat.to_radians();
        let full_ring = phi.abs() + delta >= PI / 2.0 - 1e-12;
        // first cell and width of the longitude window, which may wrap
        let (lon_lo, lon_span) = if full_ring {
            (0, self.n_lon)
        } else {
            let dlon = (delta.sin() / phi.cos()).min(1.0).asin().to_degrees() + slack;
            let lo = ((p.lon - dlon + 180.0) / self.cell_deg).floor() as i64;
            let hi = ((p.lon + dlon + 180.0) / self.cell_deg).floor() as i64;
            (lo.rem_euclid(self.n_lon), (hi - lo + 1).min(self.n_lon))
        };

        let window = (lat_hi - lat_lo + 1).saturating_mul(lon_span);
        if window as usize > self.cells.len() {
            // fewer occupied cells than cells in the window: test each one
            for (&(lat_c, lon_c), bucket) in &self.cells {
                let lon_in = (lon_c - lon_lo).rem_euclid(self.n_lon) < lon_span;
                if (lat_lo..=lat_hi).contains(&lat_c) && lon_in {
                    for (id, q) in bucket {
                        f(id, *q);
                    }
                }
            }
            return;
        }
        for lat_c in lat_lo..=lat_hi {
            for off in 0..lon_span {
                let lon_c = (lon_lo + off) % self.n_lon;
                if let Some(bucket) = self.cells.get(&(lat_c, lon_c)) {
                    for (id, q) in bucket {
                        f(id, *q);
                    }
                }
            }
        }
    }

    /// Superset of the entries within `radius_miles` of `p`.
    pub fn candidates(&self, p: GeoPoint, radius_miles: f64) -> Vec<(Id, GeoPoint)> {
        let mut out = Vec::new();
        self.for_each_candidate(p, radius_miles, |id, q| out.push((id.clone(), q)));
        out
    }

    /// Entries within `radius_miles` of `p` (inclusive).
    pub fn within(&self, p: GeoPoint, radius_miles: f64) -> Vec<(Id, GeoPoint)> {
        let mut out = Vec::new();
        self.for_each_candidate(p, radius_miles, |id, q| {
            if haversine_miles(p, q) <= radius_miles {
                out.push((id.clone(), q));
            }
        });
        out
    }

    /// Closest entry to `p`; equidistant entries resolve to the smallest id.
    pub fn nearest(&self, p: GeoPoint) -> (Id, f64) {
        let mut radius = self.cell_size_miles;
        loop {
            let mut best: Option<(f64, &Id)> = None;
            self.for_each_candidate(p, radius, |id, q| {
                let d = haversine_miles(p, q);
                let better = match best {
                    None => true,
                    Some((bd, bid)) => d < bd || (d == bd && id < bid),
                };
                if better {
                    best = Some((d, id));
                }
            });
            let exhaustive = radius / EARTH_RADIUS_MILES >= PI / 2.0;
            if let Some((d, id)) = best {
                if d <= radius || exhaustive {
                    return (id.clone(), d);
                }
            }
            radius *= 2.0;
        }
    }
}

/// Free-function form of [`SpatialGrid::build`].
pub fn build_grid<Id: Clone + Ord>(
    agencies: &[(Id, GeoPoint)],
    cell_size_miles: f64,
) -> Result<SpatialGrid<Id>> {
    SpatialGrid::build(agencies, cell_size_miles)
}

/// Free-function form of [`SpatialGrid::nearest`].
pub fn nearest_agency<Id: Clone + Ord>(p: GeoPoint, grid: &SpatialGrid<Id>) -> (Id, f64) {
    grid.nearest(p)
}
