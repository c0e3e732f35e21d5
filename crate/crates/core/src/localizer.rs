//! Projection of per-cell KPIs onto the coverage map, fusion and smoothing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{aoa_slot, aoa_zone, ta_zone, CoverageGrid, ServerMaps};
use crate::kpi::{KpiSet, MapLabel, WeightMap};

/// Non-negative fusion weights for the five KPI maps
/// (TA, AoA, neighbor level, load, AMT/HMT gap).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct ImportanceVector([f64; 5]);

impl ImportanceVector {
    pub fn new(x: [f64; 5]) -> Result<Self> {
        if x.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput(format!("importance factors must be finite and >= 0, got {x:?}")));
        }
        Ok(ImportanceVector(x))
    }

    /// Equal weights `1/5`.
    pub fn trivial() -> Self {
        ImportanceVector([0.2; 5])
    }

    pub fn basis(s: usize) -> Self {
        let mut x = [0.0; 5];
        x[s] = 1.0;
        ImportanceVector(x)
    }

    pub fn zero() -> Self {
        ImportanceVector([0.0; 5])
    }

    pub fn as_array(&self) -> [f64; 5] {
        self.0
    }

    /// Entries divided by their sum; the zero vector stays zero.
    pub fn normalized(&self) -> [f64; 5] {
        let s: f64 = self.0.iter().sum();
        if s > 0.0 {
            self.0.map(|v| v / s)
        } else {
            self.0
        }
    }
}

impl TryFrom<[f64; 5]> for ImportanceVector {
    type Error = Error;

    fn try_from(x: [f64; 5]) -> Result<Self> {
        ImportanceVector::new(x)
    }
}

impl From<ImportanceVector> for [f64; 5] {
    fn from(x: ImportanceVector) -> Self {
        x.0
    }
}

impl std::ops::Index<usize> for ImportanceVector {
    type Output = f64;

    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

/// Threshold splitting cell-center from cell-edge pixels in the throughput step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rsrp0 {
    /// Median serving RSRP over each cell's covered pixels.
    PerCellMedian,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizerParams {
    /// Load-time similarity tolerance.
    pub epsilon: f64,
    /// RSRP similarity threshold in dB.
    pub lambda_ho: f64,
    /// Congestion threshold on load time.
    pub rho_congestion: f64,
    pub rsrp0: Rsrp0,
    /// Maximum per-UE throughput in bit/s.
    pub mu0: f64,
    /// Smoothing bandwidth in squared normalized map units.
    pub bandwidth: f64,
    /// Kernel terms whose exponential falls below this are dropped.
    pub kernel_cutoff: f64,
    /// Scale each per-KPI map to unit sum before fusion.
    #[serde(default)]
    pub normalize_maps: bool,
}

impl Default for LocalizerParams {
    fn default() -> Self {
        LocalizerParams {
            epsilon: 0.1,
            lambda_ho: 6.0,
            rho_congestion: 0.7,
            rsrp0: Rsrp0::PerCellMedian,
            mu0: 50e6,
            bandwidth: 1e-3,
            kernel_cutoff: 1e-12,
            normalize_maps: false,
        }
    }
}

impl LocalizerParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.epsilon) {
            return Err(Error::config("localizer.epsilon", "must be in (0, 1)"));
        }
        if !unit(self.rho_congestion) {
            return Err(Error::config("localizer.rho_congestion", "must be in (0, 1)"));
        }
        if !(self.lambda_ho >= 0.0) {
            return Err(Error::config("localizer.lambda_ho", "must be >= 0"));
        }
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return Err(Error::config("localizer.mu0", "must be > 0"));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::config("localizer.bandwidth", "must be > 0"));
        }
        if !unit(self.kernel_cutoff) {
            return Err(Error::config("localizer.kernel_cutoff", "must be in (0, 1)"));
        }
        Ok(())
    }
}

fn check_inputs(kpis: &KpiSet, grid: &CoverageGrid, servers: &ServerMaps) -> Result<()> {
    kpis.check_grid(grid)?;
    servers.check_grid(grid)
}

fn per_pixel(
    grid: &CoverageGrid,
    servers: &ServerMaps,
    label: MapLabel,
    f: impl Fn(usize, usize) -> f64 + Sync,
) -> WeightMap {
    let values = (0..grid.spec.len())
        .into_par_iter()
        .map(|idx| servers.best(idx).map_or(0.0, |k| f(idx, k)))
        .collect();
    WeightMap::for_grid(&grid.spec, label, values).expect("per-KPI weights lie in [0, 1]")
}

/// Each pixel takes its serving cell's share of traffic in the pixel's TA ring.
pub fn step1_ta(kpis: &KpiSet, grid: &CoverageGrid, servers: &ServerMaps) -> Result<WeightMap> {
    check_inputs(kpis, grid, servers)?;
    let spec = &grid.spec;
    Ok(per_pixel(grid, servers, MapLabel::Q1, |idx, k| {
        kpis.cells[k].ta[ta_zone(spec, &grid.cells[k], spec.pixel(idx))]
    }))
}

/// Each pixel takes its serving cell's share of traffic in the pixel's AoA zone.
pub fn step2_aoa(kpis: &KpiSet, grid: &CoverageGrid, servers: &ServerMaps) -> Result<WeightMap> {
    check_inputs(kpis, grid, servers)?;
    let spec = &grid.spec;
    Ok(per_pixel(grid, servers, MapLabel::Q2, |idx, k| {
        kpis.cells[k].aoa[aoa_slot(aoa_zone(spec, &grid.cells[k], spec.pixel(idx)))]
    }))
}

/// Each pixel takes the neighbor level of its second-best server, when that
/// server is a listed neighbor of the serving cell.
pub fn step3_neighbor(kpis: &KpiSet, grid: &CoverageGrid, servers: &ServerMaps) -> Result<WeightMap> {
    check_inputs(kpis, grid, servers)?;
    Ok(per_pixel(grid, servers, MapLabel::Q3, |idx, k| {
        let Some(l) = servers.second(idx) else { return 0.0 };
        let id = &grid.cells[l].id;
        if !grid.cells[k].has_neighbor(id) {
            return 0.0;
        }
        kpis.cells[k].neighbor_level.get(id).copied().unwrap_or(0.0)
    }))
}

/// Congested serving cells spread their load over cells with similar load and
/// similar RSRP at the pixel; the serving cell itself always qualifies.
pub fn step4_load(
    kpis: &KpiSet,
    grid: &CoverageGrid,
    servers: &ServerMaps,
    params: &LocalizerParams,
) -> Result<WeightMap> {
    check_inputs(kpis, grid, servers)?;
    let load: Vec<f64> = kpis.cells.iter().map(|c| c.load_time).collect();
    Ok(per_pixel(grid, servers, MapLabel::Q4, |idx, c| {
        let rho = load[c];
        if rho <= params.rho_congestion {
            return 0.0;
        }
        let serving = grid.rsrp(c, idx).expect("serving cell has coverage");
        let (sum, n) = (0..grid.n_cells())
            .filter(|&k| {
                (rho - load[k]).abs() < params.epsilon
                    && grid.rsrp(k, idx).is_some_and(|r| (serving - r).abs() < params.lambda_ho)
            })
            .fold((0.0, 0usize), |(s, n), k| (s + load[k], n + 1));
        sum / n as f64
    }))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Per-cell center/edge RSRP threshold.
pub fn rsrp_thresholds(grid: &CoverageGrid, servers: &ServerMaps, rsrp0: Rsrp0) -> Vec<f64> {
    match rsrp0 {
        Rsrp0::Fixed(v) => vec![v; grid.n_cells()],
        Rsrp0::PerCellMedian => (0..grid.n_cells())
            .map(|k| {
                let serving = servers.cell_pixels(k).filter_map(|idx| grid.rsrp(k, idx)).collect();
                median(serving).unwrap_or(f64::NEG_INFINITY)
            })
            .collect(),
    }
}

/// Cell-center pixels take the normalized AMT-HMT gap, cell-edge pixels its complement.
pub fn step5_throughput(
    kpis: &KpiSet,
    grid: &CoverageGrid,
    servers: &ServerMaps,
    params: &LocalizerParams,
) -> Result<WeightMap> {
    check_inputs(kpis, grid, servers)?;
    let gap = kpis
        .cells
        .iter()
        .map(|c| {
            if c.amt < c.hmt {
                return Err(Error::InvalidKpiPair {
                    cell: c.cell_id.clone(),
                    amt: c.amt,
                    hmt: c.hmt,
                });
            }
            Ok(((c.amt - c.hmt) / params.mu0).clamp(0.0, 1.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    let threshold = rsrp_thresholds(grid, servers, params.rsrp0);
    Ok(per_pixel(grid, servers, MapLabel::Q5, |idx, k| {
        let rsrp = grid.rsrp(k, idx).expect("serving cell has coverage");
        if rsrp >= threshold[k] {
            gap[k]
        } else {
            1.0 - gap[k]
        }
    }))
}

/// Weighted sum of the five per-KPI maps.
pub fn step6_combine(maps: &[WeightMap; 5], x: &ImportanceVector) -> Result<WeightMap> {
    for q in &maps[1..] {
        maps[0].ensure_same_grid(q)?;
    }
    let len = maps[0].len();
    let values = (0..len)
        .map(|idx| maps.iter().enumerate().map(|(s, q)| x[s] * q.get(idx)).sum())
        .collect();
    WeightMap::from_values(maps[0].m, maps[0].pixel_size, MapLabel::Fused, values)
}

/// Truncated Gaussian kernel as `(di, dj, weight)` offsets.
fn kernel(m: usize, bandwidth: f64, cutoff: f64) -> Vec<(isize, isize, f64)> {
    // pixel centers span [0, 1] along each axis
    let step = 1.0 / (m - 1) as f64;
    let reach = (2.0 * bandwidth * (1.0 / cutoff).ln()).sqrt();
    let r = ((reach / step).floor() as isize).min(m as isize - 1);
    let mut out = Vec::new();
    for di in -r..=r {
        for dj in -r..=r {
            let d2 = ((di * di + dj * dj) as f64) * step * step;
            let w = (-d2 / (2.0 * bandwidth)).exp();
            if w >= cutoff {
                out.push((di, dj, w));
            }
        }
    }
    out
}

/// Normalized Gaussian kernel smoothing over map-normalized coordinates.
///
/// The `1/sqrt(2πh)` factor of the kernel cancels in the ratio and is omitted.
pub fn step7_smooth(q: &WeightMap, params: &LocalizerParams) -> WeightMap {
    let m = q.m;
    let taps = kernel(m, params.bandwidth, params.kernel_cutoff);
    let mi = m as isize;
    let mut values = vec![0.0; m * m];
    values.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        for (j, out) in row.iter_mut().enumerate() {
            let (mut num, mut den) = (0.0, 0.0);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &(di, dj, w) in &taps {
                let (a, b) = (i as isize + di, j as isize + dj);
                if a >= 0 && a < mi && b >= 0 && b < mi {
                    let v = q.get((a * mi + b) as usize);
                    num += w * v;
                    den += w;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            // a convex combination stays within the window's range; clamp away rounding
            *out = (num / den).clamp(lo, hi);
        }
    });
    WeightMap::from_values(m, q.pixel_size, MapLabel::Smoothed, values).expect("convex combination of weights")
}

/// All five per-KPI maps, optionally scaled to unit sum.
pub fn per_kpi_maps(
    kpis: &KpiSet,
    grid: &CoverageGrid,
    servers: &ServerMaps,
    params: &LocalizerParams,
) -> Result<[WeightMap; 5]> {
    let maps = [
        step1_ta(kpis, grid, servers)?,
        step2_aoa(kpis, grid, servers)?,
        step3_neighbor(kpis, grid, servers)?,
        step4_load(kpis, grid, servers, params)?,
        step5_throughput(kpis, grid, servers, params)?,
    ];
    Ok(if params.normalize_maps {
        maps.map(|q| q.normalized())
    } else {
        maps
    })
}

/// Every intermediate map of one localization run.
#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub per_kpi: [WeightMap; 5],
    pub fused: WeightMap,
    pub smoothed: WeightMap,
}

/// Fuses precomputed per-KPI maps and smooths the result; uncovered pixels end at 0.
pub fn fuse_and_smooth(
    per_kpi: [WeightMap; 5],
    servers: &ServerMaps,
    x: &ImportanceVector,
    params: &LocalizerParams,
) -> Result<Localization> {
    let fused = step6_combine(&per_kpi, x)?;
    let mut smoothed = step7_smooth(&fused, params);
    for (v, b) in smoothed.values_mut().iter_mut().zip(&servers.best) {
        if b.is_none() {
            *v = 0.0;
        }
    }
    Ok(Localization {
        per_kpi,
        fused,
        smoothed,
    })
}

pub fn localize(
    kpis: &KpiSet,
    grid: &CoverageGrid,
    servers: &ServerMaps,
    x: &ImportanceVector,
    params: &LocalizerParams,
) -> Result<Localization> {
    params.validate()?;
    let per_kpi = per_kpi_maps(kpis, grid, servers, params)?;
    fuse_and_smooth(per_kpi, servers, x, params)
}
