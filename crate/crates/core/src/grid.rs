//! Discretized coverage area, cell geometry and best-server derivation.
//!
//! Pixels are addressed as `(i, j)` with `i` running along the x axis (east)
//! and `j` along the y axis (north). Flattened layers are row-major in `i`
//! then `j`, so pixel `(i, j)` lives at `i * m + j`.

use std::f64::consts::{FRAC_PI_6, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of one timing-advance ring in meters.
pub const TA_STEP_M: f64 = 78.25;
/// Number of timing-advance zones; the last one is open-ended.
pub const TA_ZONES: usize = 6;
/// Number of angle-of-arrival zones (`-1`, `0`, `1`).
pub const AOA_ZONES: usize = 3;
/// Marker stored in an RSRP layer where a cell provides no signal.
pub const NO_COVERAGE: f64 = f64::NEG_INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pixel {
    pub i: usize,
    pub j: usize,
}

impl Pixel {
    pub const fn new(i: usize, j: usize) -> Self {
        Pixel { i, j }
    }
}

/// Geometry of the square pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub m: usize,
    pub pixel_size: f64,
    /// World coordinates of the outer corner of pixel `(0, 0)`.
    pub origin: Point,
}

impl GridSpec {
    pub fn new(m: usize, pixel_size: f64, origin: Point) -> Result<Self> {
        let spec = GridSpec {
            m,
            pixel_size,
            origin,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidGrid(format!("m must be >= 2, got {}", self.m)));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "pixel_size must be positive, got {}",
                self.pixel_size
            )));
        }
        if !(self.origin.x.is_finite() && self.origin.y.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.m * self.m
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    #[inline]
    pub fn index(&self, p: Pixel) -> usize {
        p.i * self.m + p.j
    }

    #[inline]
    pub fn pixel(&self, index: usize) -> Pixel {
        Pixel::new(index / self.m, index % self.m)
    }

    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        (0..self.len()).map(|k| self.pixel(k))
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.i < self.m && p.j < self.m
    }

    pub fn center(&self, p: Pixel) -> Point {
        Point::new(
            self.origin.x + (p.i as f64 + 0.5) * self.pixel_size,
            self.origin.y + (p.j as f64 + 0.5) * self.pixel_size,
        )
    }

    /// Side length of the covered square in meters.
    pub fn extent(&self) -> f64 {
        self.m as f64 * self.pixel_size
    }

    /// Pixel containing a world point, or `None` when the point is outside the map.
    pub fn locate(&self, p: Point) -> Option<Pixel> {
        let fx = (p.x - self.origin.x) / self.pixel_size;
        let fy = (p.y - self.origin.y) / self.pixel_size;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (i, j) = (fx.floor() as usize, fy.floor() as usize);
        let px = Pixel::new(i, j);
        self.contains(px).then_some(px)
    }
}

/// One sector antenna.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInfo {
    pub id: String,
    pub position: Point,
    /// Antenna azimuth in degrees clockwise from North, in `[0, 360)`.
    pub azimuth_deg: f64,
    /// Neighbor cell ids (the handover candidate list).
    pub neighbors: Vec<String>,
}

impl CellInfo {
    pub fn azimuth(&self) -> f64 {
        self.azimuth_deg.to_radians()
    }

    pub fn has_neighbor(&self, id: &str) -> bool {
        self.neighbors.iter().any(|n| n == id)
    }
}

/// Coverage map: grid geometry, cells and one RSRP layer per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    pub spec: GridSpec,
    pub cells: Vec<CellInfo>,
    /// `rsrp[k][idx]` in dBm, [`NO_COVERAGE`] where cell `k` is absent.
    pub rsrp: Vec<Vec<f64>>,
    pub q_rxlevmin: f64,
}

impl CoverageGrid {
    pub fn new(
        spec: GridSpec,
        cells: Vec<CellInfo>,
        rsrp: Vec<Vec<f64>>,
        q_rxlevmin: f64,
    ) -> Result<Self> {
        let grid = CoverageGrid {
            spec,
            cells,
            rsrp,
            q_rxlevmin,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.cells.is_empty() {
            return Err(Error::InvalidGrid("at least one cell is required".into()));
        }
        if !self.q_rxlevmin.is_finite() {
            return Err(Error::InvalidGrid("q_rxlevmin must be finite".into()));
        }
        if self.rsrp.len() != self.cells.len() {
            return Err(Error::InvalidGrid(format!(
                "{} rsrp layers for {} cells",
                self.rsrp.len(),
                self.cells.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for (cell, layer) in self.cells.iter().zip(&self.rsrp) {
            if cell.id.is_empty() || cell.id.contains([',', ' ', '\n']) {
                return Err(Error::InvalidGrid(format!("bad cell id {:?}", cell.id)));
            }
            if !seen.insert(cell.id.as_str()) {
                return Err(Error::InvalidGrid(format!("duplicate cell id {}", cell.id)));
            }
            if !(0.0..360.0).contains(&cell.azimuth_deg) {
                return Err(Error::InvalidGrid(format!(
                    "cell {} azimuth {} outside [0, 360)",
                    cell.id, cell.azimuth_deg
                )));
            }
            if cell.has_neighbor(&cell.id) {
                return Err(Error::InvalidGrid(format!("cell {} lists itself as neighbor", cell.id)));
            }
            if layer.len() != self.spec.len() {
                return Err(Error::InvalidGrid(format!(
                    "cell {} layer has {} values, expected {}",
                    cell.id,
                    layer.len(),
                    self.spec.len()
                )));
            }
            if layer.iter().any(|v| !(v.is_finite() || *v == NO_COVERAGE)) {
                return Err(Error::InvalidGrid(format!(
                    "cell {} has non-finite rsrp values",
                    cell.id
                )));
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_index(&self, id: &str) -> Option<usize> {
        self.cells.iter().position(|c| c.id == id)
    }

    /// RSRP of cell `k` at flat pixel index `idx`, `None` without coverage.
    #[inline]
    pub fn rsrp(&self, k: usize, idx: usize) -> Option<f64> {
        let v = self.rsrp[k][idx];
        (v != NO_COVERAGE).then_some(v)
    }
}

/// Best and second-best serving cell per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerMaps {
    pub m: usize,
    pub best: Vec<Option<usize>>,
    pub second: Vec<Option<usize>>,
}

impl ServerMaps {
    #[inline]
    pub fn best(&self, idx: usize) -> Option<usize> {
        self.best[idx]
    }

    #[inline]
    pub fn second(&self, idx: usize) -> Option<usize> {
        self.second[idx]
    }

    pub fn check_grid(&self, grid: &CoverageGrid) -> Result<()> {
        if self.m != grid.spec.m || self.best.len() != grid.spec.len() {
            return Err(Error::Mismatch(format!(
                "server maps are {}x{}, grid is {}x{}",
                self.m, self.m, grid.spec.m, grid.spec.m
            )));
        }
        if let Some(k) = self.best.iter().chain(&self.second).flatten().find(|&&k| k >= grid.n_cells()) {
            return Err(Error::Mismatch(format!("server index {k} out of range")));
        }
        Ok(())
    }

    /// Flat indices of the pixels served by cell `k`.
    pub fn cell_pixels(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.best
            .iter()
            .enumerate()
            .filter_map(move |(idx, b)| (*b == Some(k)).then_some(idx))
    }
}

/// Per-pixel argmax and runner-up of RSRP.
///
/// Pixels whose strongest signal is below `q_rxlevmin` are uncovered and get
/// no second server either. Ties go to the lowest cell index.
pub fn compute_server_maps(grid: &CoverageGrid) -> ServerMaps {
    let len = grid.spec.len();
    let mut best = vec![None; len];
    let mut second = vec![None; len];
    for idx in 0..len {
        let mut first: Option<(usize, f64)> = None;
        let mut runner: Option<(usize, f64)> = None;
        for k in 0..grid.n_cells() {
            let Some(v) = grid.rsrp(k, idx) else { continue };
            match first {
                Some((_, fv)) if v <= fv => {
                    if runner.is_none_or(|(_, rv)| v > rv) {
                        runner = Some((k, v));
                    }
                }
                _ => {
                    runner = first;
                    first = Some((k, v));
                }
            }
        }
        if let Some((k, v)) = first {
            if v >= grid.q_rxlevmin {
                best[idx] = Some(k);
                second[idx] = runner.map(|(l, _)| l);
            }
        }
    }
    ServerMaps {
        m: grid.spec.m,
        best,
        second,
    }
}

/// Bearing (radians clockwise from North, in `[0, 2π)`) and distance from `from` to `to`.
///
/// A zero-length vector has bearing 0.
pub fn bearing_and_distance(from: Point, to: Point) -> (f64, f64) {
    let (dx, dy) = (to.x - from.x, to.y - from.y);
    let d = dx.hypot(dy);
    if d == 0.0 {
        return (0.0, 0.0);
    }
    let b = dx.atan2(dy);
    (if b < 0.0 { b + TAU } else { b }, d)
}

pub fn angle_and_distance(cell: &CellInfo, pixel_center: Point) -> (f64, f64) {
    bearing_and_distance(cell.position, pixel_center)
}

/// Timing-advance ring for a distance in meters.
#[inline]
pub fn ta_zone_for_distance(distance: f64) -> usize {
    ((distance / TA_STEP_M).floor() as usize).min(TA_ZONES - 1)
}

pub fn ta_zone(spec: &GridSpec, cell: &CellInfo, pixel: Pixel) -> usize {
    ta_zone_for_distance(cell.position.distance(&spec.center(pixel)))
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// AoA zone of a bearing relative to an antenna azimuth (both radians).
///
/// `0` for `|δ| ≤ π/6`, `1` for `δ ∈ (π/6, π]`, `-1` for `δ ∈ (-π, -π/6)`,
/// where `δ` is the clockwise offset from boresight.
#[inline]
pub fn aoa_zone_for(bearing: f64, azimuth: f64) -> i8 {
    let delta = wrap_angle(bearing - azimuth);
    if delta.abs() <= FRAC_PI_6 {
        0
    } else if delta > 0.0 {
        1
    } else {
        -1
    }
}

/// AoA zone of a pixel in `cell`. A pixel whose center coincides with the site is in zone 0.
pub fn aoa_zone(spec: &GridSpec, cell: &CellInfo, pixel: Pixel) -> i8 {
    let (bearing, d) = angle_and_distance(cell, spec.center(pixel));
    if d == 0.0 {
        return 0;
    }
    aoa_zone_for(bearing, cell.azimuth())
}

/// Position of an AoA zone label inside a 3-element distribution.
#[inline]
pub fn aoa_slot(zone: i8) -> usize {
    (zone + 1) as usize
}
