//! KPIs an ideal O&M system would report for a known traffic distribution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CellKpis, KpiSet, KpiSource, WeightMap};
use crate::error::{Error, Result};
use crate::grid::{aoa_slot, aoa_zone, ta_zone, CoverageGrid, ServerMaps, AOA_ZONES, TA_ZONES};

/// Piecewise-linear RSRP to throughput mapping, clamped outside `[rsrp_lo, rsrp_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputCurve {
    pub rsrp_lo: f64,
    pub rate_lo: f64,
    pub rsrp_hi: f64,
    pub rate_hi: f64,
}

impl ThroughputCurve {
    pub fn validate(&self) -> Result<()> {
        if !(self.rsrp_lo < self.rsrp_hi) {
            return Err(Error::config("throughput", "rsrp_lo must be below rsrp_hi"));
        }
        if !(self.rate_lo > 0.0 && self.rate_lo <= self.rate_hi && self.rate_hi.is_finite()) {
            return Err(Error::config("throughput", "need 0 < rate_lo <= rate_hi"));
        }
        Ok(())
    }

    pub fn rate(&self, rsrp: f64) -> f64 {
        let t = ((rsrp - self.rsrp_lo) / (self.rsrp_hi - self.rsrp_lo)).clamp(0.0, 1.0);
        self.rate_lo + t * (self.rate_hi - self.rate_lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    /// Cell traffic mass at which load time saturates at 1.
    pub rho_cap: f64,
    pub throughput: ThroughputCurve,
}

impl OracleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_cap > 0.0 && self.rho_cap.is_finite()) {
            return Err(Error::config("oracle.rho_cap", "must be > 0"));
        }
        self.throughput.validate()
    }
}

#[derive(Default)]
struct Accum {
    mass: f64,
    ta: [f64; TA_ZONES],
    aoa: [f64; AOA_ZONES],
    second: BTreeMap<usize, f64>,
    rate_sum: f64,
    inv_rate_sum: f64,
}

/// Aggregates a truth map into per-cell KPIs.
///
/// Scale invariant in `truth` for every distribution and both throughput means;
/// load time is `min(1, W_k / rho_cap)` with `W_k` the cell's truth mass.
pub fn oracle_kpis(
    truth: &WeightMap,
    grid: &CoverageGrid,
    servers: &ServerMaps,
    params: &OracleParams,
) -> Result<KpiSet> {
    params.validate()?;
    truth.ensure_grid(&grid.spec)?;
    servers.check_grid(grid)?;

    let spec = &grid.spec;
    let mut acc: Vec<Accum> = (0..grid.n_cells()).map(|_| Accum::default()).collect();
    for idx in 0..spec.len() {
        let Some(k) = servers.best(idx) else { continue };
        let w = truth.get(idx);
        if w == 0.0 {
            continue;
        }
        let px = spec.pixel(idx);
        let cell = &grid.cells[k];
        let a = &mut acc[k];
        a.mass += w;
        a.ta[ta_zone(spec, cell, px)] += w;
        a.aoa[aoa_slot(aoa_zone(spec, cell, px))] += w;
        if let Some(l) = servers.second(idx) {
            *a.second.entry(l).or_default() += w;
        }
        let r = params.throughput.rate(grid.rsrp(k, idx).expect("best server has coverage"));
        a.rate_sum += w * r;
        a.inv_rate_sum += w / r;
    }

    let cells = grid
        .cells
        .iter()
        .zip(acc)
        .map(|(cell, a)| {
            let mut out = CellKpis::empty(cell.id.clone());
            if a.mass <= 0.0 {
                return out;
            }
            out.ta = a.ta.map(|v| v / a.mass);
            out.aoa = a.aoa.map(|v| v / a.mass);

            let in_list: Vec<(String, f64)> = cell
                .neighbors
                .iter()
                .map(|id| {
                    let w = grid
                        .cell_index(id)
                        .and_then(|l| a.second.get(&l).copied())
                        .unwrap_or(0.0);
                    (id.clone(), w)
                })
                .collect();
            let total: f64 = in_list.iter().map(|(_, w)| w).sum();
            if total > 0.0 {
                out.neighbor_level = in_list.into_iter().map(|(id, w)| (id, w / total)).collect();
            }

            out.load_time = (a.mass / params.rho_cap).min(1.0);
            out.amt = a.rate_sum / a.mass;
            out.hmt = (a.mass / a.inv_rate_sum).min(out.amt);
            out
        })
        .collect();

    Ok(KpiSet {
        source: KpiSource::Oracle,
        window_s: 0.0,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{compute_server_maps, CellInfo, GridSpec, Pixel, Point};
    use crate::kpi::MapLabel;

    fn curve() -> ThroughputCurve {
        ThroughputCurve {
            rsrp_lo: -115.0,
            rate_lo: 1e6,
            rsrp_hi: -75.0,
            rate_hi: 50e6,
        }
    }

    fn params() -> OracleParams {
        OracleParams {
            rho_cap: 0.5,
            throughput: curve(),
        }
    }

    /// One cell at the map corner covering a 12x12 grid of 25 m pixels.
    fn one_cell(rsrp: f64) -> (CoverageGrid, ServerMaps) {
        let spec = GridSpec::new(12, 25.0, Point::new(0.0, 0.0)).unwrap();
        let cell = CellInfo {
            id: "A".into(),
            position: Point::new(0.0, 0.0),
            azimuth_deg: 45.0,
            neighbors: vec![],
        };
        let g = CoverageGrid::new(spec, vec![cell], vec![vec![rsrp; 144]], -115.0).unwrap();
        let s = compute_server_maps(&g);
        (g, s)
    }

    #[test]
    fn curve_is_clamped_linear() {
        let c = curve();
        assert_eq!(c.rate(-130.0), 1e6);
        assert_eq!(c.rate(-60.0), 50e6);
        assert!((c.rate(-95.0) - 25.5e6).abs() < 1e-6);
    }

    #[test]
    fn delta_in_one_ring() {
        let (g, s) = one_cell(-90.0);
        let mut v = vec![0.0; 144];
        // pixel (4, 4): center (112.5, 112.5) is 159.1 m away, ring 2
        v[g.spec.index(Pixel::new(4, 4))] = 1.0;
        let truth = WeightMap::for_grid(&g.spec, MapLabel::GroundTruth, v).unwrap();
        let k = oracle_kpis(&truth, &g, &s, &params()).unwrap();
        assert_eq!(k.cells[0].ta, [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(k.cells[0].aoa, [0.0, 1.0, 0.0]);
        assert_eq!(k.cells[0].load_time, 1.0);
        k.validate().unwrap();
    }

    #[test]
    fn uniform_weights_count_pixels() {
        let (g, s) = one_cell(-90.0);
        let truth = WeightMap::for_grid(&g.spec, MapLabel::GroundTruth, vec![1.0 / 144.0; 144]).unwrap();
        let k = oracle_kpis(&truth, &g, &s, &params()).unwrap();
        // brute-force pixel count per ring
        let mut count = [0usize; 6];
        for px in g.spec.pixels() {
            let c = g.spec.center(px);
            let d = (c.x * c.x + c.y * c.y).sqrt();
            count[((d / 78.25) as usize).min(5)] += 1;
        }
        for (got, n) in k.cells[0].ta.iter().zip(count) {
            assert!((got - n as f64 / 144.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_throughput_means_equal() {
        let (g, s) = one_cell(-95.0);
        let truth = WeightMap::for_grid(&g.spec, MapLabel::GroundTruth, vec![1.0 / 144.0; 144]).unwrap();
        let k = oracle_kpis(&truth, &g, &s, &params()).unwrap();
        let c = &k.cells[0];
        assert!((c.amt - c.hmt).abs() <= 1e-9 * c.amt);
        assert!(c.hmt <= c.amt);
    }

    #[test]
    fn empty_cell_gets_zero_kpis() {
        let (g, s) = one_cell(-120.0);
        let truth = WeightMap::for_grid(&g.spec, MapLabel::GroundTruth, vec![1.0 / 144.0; 144]).unwrap();
        let k = oracle_kpis(&truth, &g, &s, &params()).unwrap();
        assert_eq!(k.cells[0], CellKpis::empty("A"));
        assert!(k.is_empty_system());
    }

    #[test]
    fn mismatched_maps_rejected() {
        let (g, s) = one_cell(-90.0);
        let spec = GridSpec::new(5, 25.0, Point::default()).unwrap();
        let truth = WeightMap::zeros(&spec, MapLabel::GroundTruth);
        assert!(matches!(oracle_kpis(&truth, &g, &s, &params()), Err(Error::Mismatch(_))));
    }
}
