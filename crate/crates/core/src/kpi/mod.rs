//! Per-cell KPI distributions, traffic maps and the analytic KPI oracle.

mod oracle;
mod traffic;
mod weights;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use oracle::{oracle_kpis, OracleParams, ThroughputCurve};
pub use traffic::{
    generate_ground_truth, rasterize_potential_map, HotspotComponent, PotentialHotspotSpec, PotentialZone,
    TrafficModel, ZoneShape,
};
pub use weights::{MapLabel, WeightMap};

use crate::error::{Error, Result};
use crate::grid::{CoverageGrid, AOA_ZONES, TA_ZONES};

const DIST_TOL: f64 = 1e-9;

/// KPIs reported for one cell over an observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellKpis {
    pub cell_id: String,
    /// Share of traffic per timing-advance ring.
    pub ta: [f64; TA_ZONES],
    /// Share of traffic per AoA zone, ordered `(-1, 0, 1)`.
    pub aoa: [f64; AOA_ZONES],
    /// Relative handover-candidate frequency per neighbor id.
    pub neighbor_level: BTreeMap<String, f64>,
    pub load_time: f64,
    #[serde(rename = "amt_bps")]
    pub amt: f64,
    #[serde(rename = "hmt_bps")]
    pub hmt: f64,
}

fn check_distribution(name: &str, cell: &str, values: impl Iterator<Item = f64> + Clone) -> Result<()> {
    if values.clone().any(|v| !(v.is_finite() && v >= 0.0)) {
        return Err(Error::InvalidInput(format!("cell {cell}: {name} has negative or non-finite entries")));
    }
    let s: f64 = values.sum();
    if s.abs() > DIST_TOL && (s - 1.0).abs() > DIST_TOL {
        return Err(Error::InvalidInput(format!("cell {cell}: {name} sums to {s}")));
    }
    Ok(())
}

impl CellKpis {
    pub fn empty(cell_id: impl Into<String>) -> Self {
        CellKpis {
            cell_id: cell_id.into(),
            ta: [0.0; TA_ZONES],
            aoa: [0.0; AOA_ZONES],
            neighbor_level: BTreeMap::new(),
            load_time: 0.0,
            amt: 0.0,
            hmt: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.cell_id;
        check_distribution("ta", id, self.ta.iter().copied())?;
        check_distribution("aoa", id, self.aoa.iter().copied())?;
        check_distribution("neighbor_level", id, self.neighbor_level.values().copied())?;
        if !(0.0..=1.0).contains(&self.load_time) {
            return Err(Error::InvalidInput(format!("cell {id}: load_time {} outside [0, 1]", self.load_time)));
        }
        if !(self.hmt >= 0.0 && self.amt.is_finite()) {
            return Err(Error::InvalidInput(format!("cell {id}: throughputs must be finite and >= 0")));
        }
        if self.amt < self.hmt {
            return Err(Error::InvalidKpiPair {
                cell: id.clone(),
                amt: self.amt,
                hmt: self.hmt,
            });
        }
        Ok(())
    }

    /// True when the cell carried no observed traffic.
    pub fn is_empty(&self) -> bool {
        self.ta.iter().all(|&v| v == 0.0) && self.aoa.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KpiSource {
    Oracle,
    Simulator,
}

/// KPIs for every cell of a coverage grid, in grid cell order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSet {
    pub source: KpiSource,
    /// Observation window in seconds.
    pub window_s: f64,
    pub cells: Vec<CellKpis>,
}

impl KpiSet {
    pub fn validate(&self) -> Result<()> {
        self.cells.iter().try_for_each(CellKpis::validate)
    }

    /// Checks that the set has exactly one entry per grid cell, in order.
    pub fn check_grid(&self, grid: &CoverageGrid) -> Result<()> {
        if self.cells.len() != grid.n_cells() {
            return Err(Error::Mismatch(format!(
                "kpi set has {} cells, grid has {}",
                self.cells.len(),
                grid.n_cells()
            )));
        }
        for (k, (kpi, cell)) in self.cells.iter().zip(&grid.cells).enumerate() {
            if kpi.cell_id != cell.id {
                return Err(Error::Mismatch(format!(
                    "kpi entry {k} is {}, grid cell {k} is {}",
                    kpi.cell_id, cell.id
                )));
            }
        }
        Ok(())
    }

    pub fn is_empty_system(&self) -> bool {
        self.cells.iter().all(CellKpis::is_empty)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let set: KpiSet = serde_json::from_str(s)?;
        set.validate()?;
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let mut k = CellKpis::empty("A");
        k.validate().unwrap();
        k.ta = [0.3, 0.2, 0.4, 0.1, 0.0, 0.0];
        k.aoa = [0.3, 0.4, 0.3];
        k.amt = 8.0;
        k.hmt = 2.0;
        k.validate().unwrap();
        k.ta[0] = 0.31;
        assert!(k.validate().is_err());
        k.ta[0] = 0.3;
        k.hmt = 9.0;
        assert!(matches!(k.validate(), Err(Error::InvalidKpiPair { .. })));
        k.hmt = 2.0;
        k.load_time = 1.5;
        assert!(k.validate().is_err());
    }

    #[test]
    fn json_field_names() {
        let mut k = CellKpis::empty("S0A");
        k.neighbor_level.insert("S1B".into(), 1.0);
        let set = KpiSet {
            source: KpiSource::Oracle,
            window_s: 3600.0,
            cells: vec![k],
        };
        let json = serde_json::to_value(&set).unwrap();
        let cell = &json["cells"][0];
        for key in ["cell_id", "ta", "aoa", "neighbor_level", "load_time", "amt_bps", "hmt_bps"] {
            assert!(cell.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["source"], "oracle");
        assert_eq!(KpiSet::from_json(&set.to_json().unwrap()).unwrap(), set);
    }
}
