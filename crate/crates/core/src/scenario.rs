//! Synthetic hexagonal networks and the full experiment configuration.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::grid::{bearing_and_distance, compute_server_maps, wrap_angle, CellInfo, CoverageGrid, GridSpec, Point, ServerMaps, NO_COVERAGE};
use crate::kpi::{
    generate_ground_truth, rasterize_potential_map, HotspotComponent, OracleParams, PotentialHotspotSpec,
    PotentialZone, ThroughputCurve, TrafficModel, WeightMap, ZoneShape,
};
use crate::localizer::LocalizerParams;
use crate::nnls::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::sim::SimConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Square map centered on the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub pixel_size: f64,
    /// Side length in meters; must be a whole number of pixels.
    pub extent_m: f64,
}

impl GridConfig {
    pub fn spec(&self) -> Result<GridSpec> {
        if !(self.pixel_size > 0.0 && self.extent_m > 0.0) {
            return Err(Error::config("grid", "pixel_size and extent_m must be > 0"));
        }
        let m = self.extent_m / self.pixel_size;
        if (m - m.round()).abs() > 1e-9 || m.round() < 1.0 {
            return Err(Error::config("grid.extent_m", "must be a whole multiple of pixel_size"));
        }
        let half = self.extent_m / 2.0;
        GridSpec::new(m.round() as usize, self.pixel_size, Point::new(-half, -half))
    }
}

/// Hexagonal site layout with a log-distance path loss and a parabolic
/// horizontal antenna pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub sites: usize,
    pub isd_m: f64,
    /// 1 gives omnidirectional cells.
    pub sectors: usize,
    pub rs_power_dbm: f64,
    pub antenna_gain_dbi: f64,
    /// Path loss `intercept + slope * log10(d_km)`.
    pub pl_intercept_db: f64,
    pub pl_slope_db: f64,
    pub beamwidth_deg: f64,
    pub front_to_back_db: f64,
    /// Distances are clamped below this in the path-loss model.
    pub min_distance_m: f64,
    /// Lognormal shadowing standard deviation; 0 disables it.
    #[serde(default)]
    pub shadowing_std_db: f64,
    /// RSRP below this is not stored.
    pub coverage_floor_dbm: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            sites: 7,
            isd_m: 500.0,
            sectors: 3,
            rs_power_dbm: 15.0,
            antenna_gain_dbi: 15.0,
            pl_intercept_db: 128.1,
            pl_slope_db: 37.6,
            beamwidth_deg: 65.0,
            front_to_back_db: 20.0,
            min_distance_m: 10.0,
            shadowing_std_db: 0.0,
            coverage_floor_dbm: -140.0,
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sites == 0 {
            return Err(Error::config("layout.sites", "must be >= 1"));
        }
        if self.sectors == 0 || self.sectors > 26 {
            return Err(Error::config("layout.sectors", "must be in 1..=26"));
        }
        if self.sites > 1 && !(self.isd_m > 0.0) {
            return Err(Error::config("layout.isd_m", "must be > 0"));
        }
        if !(self.beamwidth_deg > 0.0) {
            return Err(Error::config("layout.beamwidth_deg", "must be > 0"));
        }
        if !(self.front_to_back_db >= 0.0) {
            return Err(Error::config("layout.front_to_back_db", "must be >= 0"));
        }
        if !(self.min_distance_m > 0.0) {
            return Err(Error::config("layout.min_distance_m", "must be > 0"));
        }
        if !(self.shadowing_std_db >= 0.0 && self.shadowing_std_db.is_finite()) {
            return Err(Error::config("layout.shadowing_std_db", "must be >= 0"));
        }
        for (name, v) in [
            ("layout.rs_power_dbm", self.rs_power_dbm),
            ("layout.antenna_gain_dbi", self.antenna_gain_dbi),
            ("layout.pl_intercept_db", self.pl_intercept_db),
            ("layout.pl_slope_db", self.pl_slope_db),
            ("layout.coverage_floor_dbm", self.coverage_floor_dbm),
        ] {
            if !v.is_finite() {
                return Err(Error::config(name, "must be finite"));
            }
        }
        Ok(())
    }

    /// Site positions spiralling outward over hexagonal rings from the origin.
    pub fn site_positions(&self) -> Vec<Point> {
        // axial directions walked around each ring
        const DIRS: [(i64, i64); 6] = [(-1, 1), (-1, 0), (0, -1), (1, -1), (1, 0), (0, 1)];
        let mut out = vec![(0i64, 0i64)];
        let mut ring = 1i64;
        while out.len() < self.sites {
            let (mut q, mut r) = (ring, 0i64);
            for (dq, dr) in DIRS {
                for _ in 0..ring {
                    out.push((q, r));
                    q += dq;
                    r += dr;
                }
            }
            ring += 1;
        }
        out.truncate(self.sites);
        out.into_iter()
            .map(|(q, r)| {
                let (q, r) = (q as f64, r as f64);
                Point::new(self.isd_m * (q + r / 2.0), self.isd_m * r * 3f64.sqrt() / 2.0)
            })
            .collect()
    }

    /// Horizontal pattern attenuation in dB for an off-boresight angle in radians.
    pub fn pattern_db(&self, off_boresight: f64) -> f64 {
        if self.sectors == 1 {
            return 0.0;
        }
        let ratio = off_boresight.to_degrees() / self.beamwidth_deg;
        (12.0 * ratio * ratio).min(self.front_to_back_db)
    }

    pub fn path_loss_db(&self, distance_m: f64) -> f64 {
        let d_km = distance_m.max(self.min_distance_m) / 1000.0;
        self.pl_intercept_db + self.pl_slope_db * d_km.log10()
    }
}

/// Cells of a layout, named `S<site><sector letter>`, with empty neighbor lists.
pub fn layout_cells(layout: &LayoutConfig) -> Vec<CellInfo> {
    layout
        .site_positions()
        .into_iter()
        .enumerate()
        .flat_map(|(s, pos)| {
            (0..layout.sectors).map(move |k| CellInfo {
                id: format!("S{s}{}", (b'A' + k as u8) as char),
                position: pos,
                azimuth_deg: 360.0 / layout.sectors as f64 * k as f64,
                neighbors: Vec::new(),
            })
        })
        .collect()
}

/// Synthesizes RSRP layers, server maps and neighbor lists. A cell's
/// neighbors are the cells that are second-best somewhere in its coverage.
pub fn build_coverage(
    spec: &GridSpec,
    layout: &LayoutConfig,
    q_rxlevmin: f64,
    seed: u64,
) -> Result<(CoverageGrid, ServerMaps)> {
    layout.validate()?;
    let mut cells = layout_cells(layout);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shadow = (layout.shadowing_std_db > 0.0)
        .then(|| Normal::new(0.0, layout.shadowing_std_db).expect("validated std"));
    let rsrp: Vec<Vec<f64>> = cells
        .iter()
        .map(|cell| {
            spec.pixels()
                .map(|px| {
                    let (bearing, d) = bearing_and_distance(cell.position, spec.center(px));
                    let off = wrap_angle(bearing - cell.azimuth());
                    let s = shadow.as_ref().map_or(0.0, |n| n.sample(&mut rng));
                    let v = layout.rs_power_dbm + layout.antenna_gain_dbi
                        - layout.pattern_db(off.abs())
                        - layout.path_loss_db(d)
                        + s;
                    if v >= layout.coverage_floor_dbm {
                        v
                    } else {
                        NO_COVERAGE
                    }
                })
                .collect()
        })
        .collect();
    let grid = CoverageGrid::new(*spec, cells.clone(), rsrp, q_rxlevmin)?;
    let servers = compute_server_maps(&grid);
    let mut seen: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); cells.len()];
    for idx in 0..spec.len() {
        if let (Some(k), Some(l)) = (servers.best(idx), servers.second(idx)) {
            seen[k].insert(l);
        }
    }
    for (cell, set) in cells.iter_mut().zip(&seen) {
        cell.neighbors = set.iter().map(|&l| grid.cells[l].id.clone()).collect();
    }
    let CoverageGrid { spec, rsrp, q_rxlevmin, .. } = grid;
    let grid = CoverageGrid::new(spec, cells, rsrp, q_rxlevmin)?;
    Ok((grid, servers))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnlsConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NnlsConfig {
    fn default() -> Self {
        NnlsConfig {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Everything one pipeline run depends on besides the KPI source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    /// Master seed; the truth noise, shadowing and simulator streams derive from it.
    pub seed: u64,
    pub grid: GridConfig,
    pub layout: LayoutConfig,
    pub q_rxlevmin_dbm: f64,
    pub traffic: TrafficModel,
    pub potential: PotentialHotspotSpec,
    pub sim: SimConfig,
    pub localizer: LocalizerParams,
    pub oracle: OracleParams,
    #[serde(default)]
    pub nnls: NnlsConfig,
    pub eval: EvalConfig,
}

impl ScenarioConfig {
    /// Seven tri-sector sites on a 1.5 km square with 25 m pixels and a
    /// nine-component truth map.
    pub fn desk() -> Self {
        let bumps: [(f64, f64, f64, f64); 9] = [
            (-420.0, 360.0, 55.0, 3.0),
            (310.0, 420.0, 45.0, 2.6),
            (-80.0, 120.0, 60.0, 2.2),
            (480.0, -200.0, 50.0, 2.8),
            (-360.0, -330.0, 65.0, 2.4),
            (140.0, -470.0, 45.0, 2.0),
            (-560.0, -20.0, 40.0, 1.8),
            (600.0, 160.0, 55.0, 1.6),
            (160.0, 190.0, 40.0, 1.5),
        ];
        let components: Vec<HotspotComponent> = bumps
            .iter()
            .map(|&(x, y, sigma, amplitude)| HotspotComponent {
                center: Point::new(x, y),
                sigma,
                amplitude,
            })
            .collect();
        let zones = bumps[..6]
            .iter()
            .map(|&(x, y, _, a)| PotentialZone {
                shape: ZoneShape::Disk {
                    center: Point::new(x, y),
                    radius: 100.0,
                },
                importance: a / 3.0,
            })
            .collect();
        let throughput = ThroughputCurve {
            rsrp_lo: -115.0,
            rate_lo: 1e6,
            rsrp_hi: -75.0,
            rate_hi: 50e6,
        };
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            grid: GridConfig {
                pixel_size: 25.0,
                extent_m: 1500.0,
            },
            layout: LayoutConfig::default(),
            q_rxlevmin_dbm: -115.0,
            traffic: TrafficModel {
                components,
                floor: 0.05,
                noise_std: 0.1,
            },
            potential: PotentialHotspotSpec { zones },
            sim: SimConfig {
                // mean full-load share across the 21 cells is about 0.5
                arrival_rate: 280.0,
                file_size_bits: 1e6,
                mobile_fraction: 0.2,
                speed_kmh: 8.33,
                handover_margin_db: 6.0,
                duration_s: 600.0,
                tick_s: 1.0,
                capacity_per_cell_bps: 20e6,
                mu0_bps: 50e6,
                max_ues_per_cell: 8,
                throughput,
                seed: 0,
            },
            localizer: LocalizerParams {
                lambda_ho: 6.0,
                mu0: 50e6,
                ..LocalizerParams::default()
            },
            oracle: OracleParams {
                rho_cap: 0.1,
                throughput,
            },
            nnls: NnlsConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    /// Same as [`desk`](Self::desk) with a single site of three sectors.
    pub fn single_site() -> Self {
        let mut c = Self::desk();
        c.sim.arrival_rate /= c.layout.sites as f64;
        c.layout.sites = 1;
        c
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn truth_seed(&self) -> u64 {
        self.seed
    }

    pub fn shadowing_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    /// Simulator config with its seed derived from the master seed.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            seed: self.seed.wrapping_add(2),
            ..self.sim.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        self.grid.spec()?;
        self.layout.validate()?;
        let half = self.grid.extent_m / 2.0;
        if self
            .layout
            .site_positions()
            .iter()
            .any(|p| p.x.abs() >= half || p.y.abs() >= half)
        {
            return Err(Error::config("layout", "sites fall outside the map; enlarge grid.extent_m or shrink isd_m"));
        }
        if !(self.q_rxlevmin_dbm.is_finite() && self.q_rxlevmin_dbm >= self.layout.coverage_floor_dbm) {
            return Err(Error::config("q_rxlevmin_dbm", "must be finite and >= layout.coverage_floor_dbm"));
        }
        self.traffic.validate()?;
        self.potential.validate()?;
        self.sim.validate()?;
        self.localizer.validate()?;
        self.oracle.validate()?;
        if !(self.nnls.tol > 0.0) || self.nnls.max_iter == 0 {
            return Err(Error::config("nnls", "need tol > 0 and max_iter >= 1"));
        }
        if self.eval.peak_count == 0 {
            return Err(Error::config("eval.peak_count", "must be >= 1"));
        }
        if !(self.eval.suppression_radius_m >= 0.0) {
            return Err(Error::config("eval.suppression_radius_m", "must be >= 0"));
        }
        if let Some(k) = self.eval.p_list.iter().position(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::config(format!("eval.p_list[{k}]"), "must be in (0, 1]"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Generated network, truth and prior for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: CoverageGrid,
    pub servers: ServerMaps,
    pub truth: WeightMap,
    pub potential: WeightMap,
}

pub fn gen_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let spec = config.grid.spec()?;
    let (grid, servers) = build_coverage(&spec, &config.layout, config.q_rxlevmin_dbm, config.shadowing_seed())?;
    let truth = generate_ground_truth(&config.traffic, &spec, config.truth_seed())?;
    let potential = rasterize_potential_map(&config.potential, &spec)?;
    Ok(Scenario {
        config: config.clone(),
        grid,
        servers,
        truth,
        potential,
    })
}
