//! Hazard models: gridded intensity fields, the latitude rule for
//! geomagnetic storms, spatial probing, and intensity-unit conversion.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::model::GeoPoint;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Kilometers per degree of latitude on the sphere used throughout.
pub const KM_PER_DEG: f64 = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;

/// Alignment tolerance when snapping sample coordinates to the grid, in
/// degrees. Covers decimal-to-binary rounding of well-formed input without
/// accepting genuinely misplaced samples.
const SNAP_TOL_DEG: f64 = 1e-9;

/// Distance comparisons treat the boundary as inclusive; the guard absorbs
/// floating-point rounding in the haversine evaluation.
const DIST_TOL_KM: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum HazardError {
    #[error("grid resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("sample ({lat}, {lon}) is not aligned to the {res} degree grid")]
    Misaligned { lat: f64, lon: f64, res: f64 },
    #[error("coordinate ({lat}, {lon}) outside valid range")]
    OutOfRange { lat: f64, lon: f64 },
    #[error("intensity value {0} is not finite")]
    BadValue(f64),
    #[error("probe radius must be positive and finite, got {0}")]
    BadProbeRadius(f64),
    #[error("peak ground acceleration must be positive, got {0}")]
    NonPositivePga(f64),
    #[error("unknown direction {0:?}: expected \"above\" or \"below\"")]
    BadDirection(String),
}

pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let s = (dphi / 2.0).sin().powi(2)
        + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * s.sqrt().min(1.0).asin()
}

/// Inclusive radius test shared by every spatial probe.
pub fn within_km(a: GeoPoint, b: GeoPoint, radius_km: f64) -> bool {
    haversine_km(a, b) <= radius_km + DIST_TOL_KM
}

/// A sparse raster of intensity samples at cell centers on a regular
/// latitude/longitude grid. Cells are keyed by integer multiples of the
/// resolution; inserting a duplicate cell keeps the maximum value.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityGrid {
    resolution_deg: f64,
    units: String,
    /// lat band index -> (lon index -> value). BTreeMaps keep iteration
    /// order canonical without extra sorting.
    cells: BTreeMap<i32, BTreeMap<i32, f64>>,
    n_cells: usize,
    /// Number of longitude steps in a full circle, when the resolution
    /// divides 360 evenly; enables antimeridian wraparound in probes.
    lon_period: Option<i32>,
}

impl IntensityGrid {
    pub fn new(resolution_deg: f64, units: &str) -> Result<Self, HazardError> {
        if !resolution_deg.is_finite() || resolution_deg <= 0.0 {
            return Err(HazardError::BadResolution(resolution_deg));
        }
        let steps = 360.0 / resolution_deg;
        let lon_period = if (steps - steps.round()).abs() < 1e-6 && steps.round() >= 2.0 {
            Some(steps.round() as i32)
        } else {
            None
        };
        Ok(IntensityGrid {
            resolution_deg,
            units: units.to_string(),
            cells: BTreeMap::new(),
            n_cells: 0,
            lon_period,
        })
    }

    pub fn resolution_deg(&self) -> f64 {
        self.resolution_deg
    }

    pub fn units(&self) -> &str {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.n_cells
    }

    pub fn is_empty(&self) -> bool {
        self.n_cells == 0
    }

    fn snap(&self, coord: f64) -> Result<i32, ()> {
        let steps = coord / self.resolution_deg;
        let idx = steps.round();
        if (coord - idx * self.resolution_deg).abs() > SNAP_TOL_DEG {
            return Err(());
        }
        Ok(idx as i32)
    }

    fn wrap_lon(&self, j: i32) -> i32 {
        match self.lon_period {
            Some(n) => {
                let half = n / 2;
                (j + half).rem_euclid(n) - half
            }
            None => j,
        }
    }

    pub fn cell_center(&self, i: i32, j: i32) -> GeoPoint {
        GeoPoint {
            lat: i as f64 * self.resolution_deg,
            lon: j as f64 * self.resolution_deg,
        }
    }

    /// Adds one sample. Duplicate cells merge by keeping the maximum, so a
    /// grid assembled from overlapping tiles stays conservative.
    pub fn insert_sample(&mut self, lat: f64, lon: f64, value: f64) -> Result<(), HazardError> {
        if !value.is_finite() {
            return Err(HazardError::BadValue(value));
        }
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(HazardError::OutOfRange { lat, lon });
        }
        let i = self.snap(lat).map_err(|_| HazardError::Misaligned {
            lat,
            lon,
            res: self.resolution_deg,
        })?;
        let j = self.snap(lon).map_err(|_| HazardError::Misaligned {
            lat,
            lon,
            res: self.resolution_deg,
        })?;
        let j = self.wrap_lon(j);
        let slot = self.cells.entry(i).or_default().entry(j);
        match slot {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(value);
                self.n_cells += 1;
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                if value > *o.get() {
                    o.insert(value);
                }
            }
        }
        Ok(())
    }

    /// All cells in canonical (lat, lon) index order.
    pub fn iter_cells(&self) -> impl Iterator<Item = (GeoPoint, f64)> + '_ {
        self.cells.iter().flat_map(move |(&i, band)| {
            band.iter().map(move |(&j, &v)| (self.cell_center(i, j), v))
        })
    }

    /// Maximum value over cells whose centers lie within `radius_km` of
    /// `point` (boundary inclusive); `None` when no cell is in range.
    pub fn probe_max(&self, point: GeoPoint, radius_km: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        self.for_cells_within(point, radius_km, |_, v| {
            best = Some(match best {
                Some(b) if b >= v => b,
                _ => v,
            });
        });
        best
    }

    /// Visits every cell within `radius_km` of `point`. Scans latitude bands
    /// and bounds the longitude extent per band; the exact haversine test
    /// decides membership, so the band bound only has to avoid undercounting.
    pub fn for_cells_within<F: FnMut(GeoPoint, f64)>(
        &self,
        point: GeoPoint,
        radius_km: f64,
        mut visit: F,
    ) {
        let res = self.resolution_deg;
        let di = (radius_km / (KM_PER_DEG * res)).ceil() as i64 + 1;
        let i0 = (point.lat / res).round() as i64;
        for i in (i0 - di)..=(i0 + di) {
            let band_lat = i as f64 * res;
            if band_lat.abs() > 90.0 + res {
                continue;
            }
            let i = i as i32;
            let Some(band) = self.cells.get(&i) else { continue };
            // Widest longitude extent in the band is at its poleward edge.
            let edge_lat = (band_lat.abs() + res).min(90.0);
            let cos_min = edge_lat.to_radians().cos();
            let dj = if cos_min < 1e-6 {
                i64::MAX
            } else {
                (radius_km / (KM_PER_DEG * res * cos_min)).ceil() as i64 + 1
            };
            let full_span = match self.lon_period {
                Some(n) => dj.saturating_mul(2) + 1 >= n as i64,
                None => dj == i64::MAX,
            };
            if full_span || dj.saturating_mul(2) + 1 >= band.len() as i64 {
                for (&j, &v) in band {
                    let c = self.cell_center(i, j);
                    if within_km(point, c, radius_km) {
                        visit(c, v);
                    }
                }
            } else {
                let j0 = (point.lon / res).round() as i64;
                for j in (j0 - dj)..=(j0 + dj) {
                    let j = self.wrap_lon(j as i32);
                    if let Some(&v) = band.get(&j) {
                        let c = self.cell_center(i, j);
                        if within_km(point, c, radius_km) {
                            visit(c, v);
                        }
                    }
                }
            }
        }
    }
}

/// Ground-motion to intensity conversion: MMI from peak ground acceleration
/// in cm/s^2, bilinear in log10(PGA) and clamped to the instrumental range.
/// Constants are configurable so an alternative relation can be swapped in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmiConversion {
    pub low_intercept: f64,
    pub low_slope: f64,
    pub breakpoint_log10_pga: f64,
    pub high_intercept: f64,
    pub high_slope: f64,
    pub min_mmi: f64,
    pub max_mmi: f64,
}

impl Default for MmiConversion {
    fn default() -> Self {
        MmiConversion {
            low_intercept: 1.78,
            low_slope: 1.55,
            breakpoint_log10_pga: 1.57,
            high_intercept: -1.60,
            high_slope: 3.70,
            min_mmi: 1.0,
            max_mmi: 10.0,
        }
    }
}

impl MmiConversion {
    pub fn convert(&self, pga: f64) -> Result<f64, HazardError> {
        if !pga.is_finite() || pga <= 0.0 {
            return Err(HazardError::NonPositivePga(pga));
        }
        let lg = pga.log10();
        let mmi = if lg <= self.breakpoint_log10_pga {
            self.low_intercept + self.low_slope * lg
        } else {
            self.high_intercept + self.high_slope * lg
        };
        Ok(mmi.clamp(self.min_mmi, self.max_mmi))
    }
}

pub fn pga_to_mmi(pga: f64) -> Result<f64, HazardError> {
    MmiConversion::default().convert(pga)
}

/// Optional per-cell unit conversion applied before thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ValueTransform {
    #[default]
    Identity,
    PgaToMmi(MmiConversion),
}

impl ValueTransform {
    /// `None` means the raw value cannot be converted (for PGA, a
    /// non-positive sample); such cells are treated as carrying no data.
    pub fn apply(&self, value: f64) -> Option<f64> {
        match self {
            ValueTransform::Identity => Some(value),
            ValueTransform::PgaToMmi(c) => c.convert(value).ok(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Above,
    Below,
}

impl FromStr for Direction {
    type Err = HazardError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "above" => Ok(Direction::Above),
            "below" => Ok(Direction::Below),
            other => Err(HazardError::BadDirection(other.to_string())),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Above => f.write_str("above"),
            Direction::Below => f.write_str("below"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum IntensitySource {
    Grid(Arc<IntensityGrid>),
    /// Geomagnetic exposure proxy: intensity at a point is its absolute
    /// latitude in degrees.
    LatitudeRule,
}

/// A disaster model: an intensity source plus the threshold rule and the
/// spatial probing radius used to tie intensity to infrastructure.
#[derive(Debug, Clone)]
pub struct EventModel {
    pub name: String,
    pub source: IntensitySource,
    pub transform: ValueTransform,
    pub threshold: f64,
    pub direction: Direction,
    pub probe_km: f64,
}

impl EventModel {
    pub fn validate(&self) -> Result<(), HazardError> {
        if !self.probe_km.is_finite() || self.probe_km <= 0.0 {
            return Err(HazardError::BadProbeRadius(self.probe_km));
        }
        Ok(())
    }

    /// Threshold test, boundary inclusive in both directions.
    pub fn exceeds(&self, intensity: f64) -> bool {
        match self.direction {
            Direction::Above => intensity >= self.threshold,
            Direction::Below => intensity <= self.threshold,
        }
    }

    /// Intensity experienced at `point`: the maximum converted cell value
    /// within the probing radius, or the latitude rule. `None` means no
    /// data, which downstream logic treats as not impacted.
    pub fn probe_intensity(&self, point: GeoPoint) -> Option<f64> {
        match &self.source {
            IntensitySource::LatitudeRule => Some(point.lat.abs()),
            IntensitySource::Grid(grid) => {
                let mut best: Option<f64> = None;
                grid.for_cells_within(point, self.probe_km, |_, raw| {
                    if let Some(v) = self.transform.apply(raw) {
                        best = Some(match best {
                            Some(b) if b >= v => b,
                            _ => v,
                        });
                    }
                });
                best
            }
        }
    }

    /// Severity used when ranking or weighting candidate points: for ABOVE
    /// models the intensity itself, for BELOW models the depth below the
    /// threshold, so "more severe" always means "more impactful".
    pub fn severity(&self, intensity: f64) -> f64 {
        match self.direction {
            Direction::Above => intensity,
            Direction::Below => self.threshold - intensity,
        }
    }
}

/// Default model parameters for the four standard hazard kinds.
pub struct ModelDefaults {
    pub threshold: f64,
    pub direction: Direction,
    pub probe_km: f64,
    pub pga_to_mmi: bool,
    pub latitude_rule: bool,
}

pub fn standard_defaults(kind: &str) -> Option<ModelDefaults> {
    match kind {
        "earthquake" => Some(ModelDefaults {
            threshold: 6.0,
            direction: Direction::Above,
            probe_km: 10.0,
            pga_to_mmi: true,
            latitude_rule: false,
        }),
        "hurricane" => Some(ModelDefaults {
            threshold: 64.0,
            direction: Direction::Above,
            probe_km: 50.0,
            pga_to_mmi: false,
            latitude_rule: false,
        }),
        "sea_rise" => Some(ModelDefaults {
            threshold: 1.0,
            direction: Direction::Below,
            probe_km: 10.0,
            pga_to_mmi: false,
            latitude_rule: false,
        }),
        "solar" => Some(ModelDefaults {
            threshold: 50.0,
            direction: Direction::Above,
            probe_km: 1.0,
            pga_to_mmi: false,
            latitude_rule: true,
        }),
        _ => None,
    }
}
