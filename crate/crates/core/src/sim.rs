//! Seeded, tick-driven network simulator producing KPIs from UE sessions.
//!
//! Per tick: Poisson arrivals are placed by the truth map and admitted when
//! covered and a slot is free; every attached UE is sampled into its serving
//! cell's TA/AoA counters; cells share capacity round-robin; mobile UEs move
//! and hand over when another cell beats the serving one by the margin.

use std::collections::BTreeMap;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{aoa_slot, aoa_zone, ta_zone, CoverageGrid, Pixel, Point, ServerMaps, AOA_ZONES, TA_ZONES};
use crate::kpi::{CellKpis, KpiSet, KpiSource, ThroughputCurve, WeightMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Session arrivals per second.
    pub arrival_rate: f64,
    pub file_size_bits: f64,
    pub mobile_fraction: f64,
    pub speed_kmh: f64,
    pub handover_margin_db: f64,
    pub duration_s: f64,
    pub tick_s: f64,
    pub capacity_per_cell_bps: f64,
    /// Per-UE throughput cap.
    pub mu0_bps: f64,
    /// Concurrent sessions a cell can hold.
    pub max_ues_per_cell: usize,
    /// Link quality: a UE's share of cell capacity is scaled by `rate(rsrp) / rate_hi`.
    pub throughput: ThroughputCurve,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(self.capacity_per_cell_bps > 0.0) {
            return Err(Error::config("sim.capacity_per_cell_bps", "zero capacity"));
        }
        if !(self.arrival_rate >= 0.0 && self.arrival_rate.is_finite()) {
            return Err(Error::config("sim.arrival_rate", "must be finite and >= 0"));
        }
        for (name, v) in [
            ("sim.file_size_bits", self.file_size_bits),
            ("sim.duration_s", self.duration_s),
            ("sim.tick_s", self.tick_s),
            ("sim.mu0_bps", self.mu0_bps),
        ] {
            if !pos(v) {
                return Err(Error::config(name, "must be > 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.mobile_fraction) {
            return Err(Error::config("sim.mobile_fraction", "must be in [0, 1]"));
        }
        if !(self.speed_kmh >= 0.0 && self.speed_kmh.is_finite()) {
            return Err(Error::config("sim.speed_kmh", "must be >= 0"));
        }
        if !(self.handover_margin_db >= 0.0) {
            return Err(Error::config("sim.handover_margin_db", "must be >= 0"));
        }
        if self.max_ues_per_cell == 0 {
            return Err(Error::config("sim.max_ues_per_cell", "must be >= 1"));
        }
        self.throughput.validate()
    }

    pub fn ticks(&self) -> usize {
        (self.duration_s / self.tick_s).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeSession {
    pub id: u64,
    pub position: Point,
    pub pixel: Pixel,
    pub serving: usize,
    pub remaining_bits: f64,
    pub mobile: bool,
    /// Velocity in m/s, (east, north).
    pub velocity: (f64, f64),
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Admit,
    Block,
    Complete,
    Handover,
}

impl EventKind {
    fn as_str(&self) -> &'static str {
        match self {
            EventKind::Admit => "admit",
            EventKind::Block => "block",
            EventKind::Complete => "complete",
            EventKind::Handover => "handover",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub tick: usize,
    pub kind: EventKind,
    /// `None` for sessions blocked on an uncovered pixel.
    pub cell: Option<usize>,
    pub ue: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub arrivals: u64,
    pub admitted: u64,
    pub blocked: u64,
    pub completed: u64,
    pub handovers: u64,
    pub delivered_bits: f64,
    /// Sum over cells of capacity times duration.
    pub capacity_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub kpis: KpiSet,
    pub stats: SimStats,
    pub events: Vec<Event>,
}

struct CellCounters {
    ta: [f64; TA_ZONES],
    aoa: [f64; AOA_ZONES],
    reports: BTreeMap<usize, u64>,
    full_ticks: u64,
    throughputs: Vec<f64>,
}

pub struct Simulation<'a> {
    config: &'a SimConfig,
    grid: &'a CoverageGrid,
    servers: &'a ServerMaps,
    placement: WeightedIndex<f64>,
    rng: ChaCha8Rng,
    record_events: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &'a SimConfig, truth: &WeightMap, grid: &'a CoverageGrid, servers: &'a ServerMaps) -> Result<Self> {
        config.validate()?;
        truth.ensure_grid(&grid.spec)?;
        servers.check_grid(grid)?;
        let placement = WeightedIndex::new(truth.values())
            .map_err(|_| Error::InvalidInput("truth map is all zero".into()))?;
        Ok(Simulation {
            config,
            grid,
            servers,
            placement,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            record_events: false,
        })
    }

    pub fn with_event_log(mut self) -> Self {
        self.record_events = true;
        self
    }

    fn efficiency(&self, cell: usize, idx: usize) -> f64 {
        let curve = &self.config.throughput;
        self.grid
            .rsrp(cell, idx)
            .map_or(curve.rate_lo, |r| curve.rate(r))
            / curve.rate_hi
    }

    pub fn run(mut self) -> SimOutcome {
        let cfg = self.config;
        let grid = self.grid;
        let spec = &grid.spec;
        let n = grid.n_cells();
        let ticks = cfg.ticks();
        let speed = cfg.speed_kmh / 3.6;
        let (lo_x, lo_y) = (spec.origin.x, spec.origin.y);
        let (hi_x, hi_y) = (lo_x + spec.extent(), lo_y + spec.extent());

        let mut counters: Vec<CellCounters> = (0..n)
            .map(|_| CellCounters {
                ta: [0.0; TA_ZONES],
                aoa: [0.0; AOA_ZONES],
                reports: BTreeMap::new(),
                full_ticks: 0,
                throughputs: Vec::new(),
            })
            .collect();
        let mut attached = vec![0usize; n];
        let mut ues: Vec<UeSession> = Vec::new();
        let mut stats = SimStats {
            capacity_bits: cfg.capacity_per_cell_bps * cfg.duration_s * n as f64,
            ..Default::default()
        };
        let mut events = Vec::new();
        let record = self.record_events;
        let log = |events: &mut Vec<Event>, tick, kind, cell, ue| {
            if record {
                events.push(Event { tick, kind, cell, ue });
            }
        };
        let arrivals = (cfg.arrival_rate > 0.0)
            .then(|| Poisson::new(cfg.arrival_rate * cfg.tick_s).expect("positive rate"));
        let mut next_id = 0u64;

        for tick in 0..ticks {
            let count = arrivals.as_ref().map_or(0, |p| p.sample(&mut self.rng) as u64);
            for _ in 0..count {
                let idx = self.placement.sample(&mut self.rng);
                let mobile = self.rng.random::<f64>() < cfg.mobile_fraction;
                let heading = self.rng.random::<f64>() * std::f64::consts::TAU;
                let id = next_id;
                next_id += 1;
                stats.arrivals += 1;
                let best = self.servers.best(idx);
                match best {
                    Some(k) if attached[k] < cfg.max_ues_per_cell => {
                        attached[k] += 1;
                        stats.admitted += 1;
                        let pixel = spec.pixel(idx);
                        let v = if mobile { speed } else { 0.0 };
                        ues.push(UeSession {
                            id,
                            position: spec.center(pixel),
                            pixel,
                            serving: k,
                            remaining_bits: cfg.file_size_bits,
                            mobile,
                            velocity: (v * heading.sin(), v * heading.cos()),
                            elapsed_s: 0.0,
                        });
                        log(&mut events, tick, EventKind::Admit, Some(k), id);
                    }
                    _ => {
                        stats.blocked += 1;
                        log(&mut events, tick, EventKind::Block, best, id);
                    }
                }
            }

            for ue in &ues {
                let cell = &grid.cells[ue.serving];
                let c = &mut counters[ue.serving];
                c.ta[ta_zone(spec, cell, ue.pixel)] += cfg.tick_s;
                c.aoa[aoa_slot(aoa_zone(spec, cell, ue.pixel))] += cfg.tick_s;
            }
            for k in 0..n {
                if attached[k] >= cfg.max_ues_per_cell {
                    counters[k].full_ticks += 1;
                }
            }

            let share: Vec<f64> = attached
                .iter()
                .map(|&a| if a == 0 { 0.0 } else { (cfg.capacity_per_cell_bps / a as f64).min(cfg.mu0_bps) })
                .collect();
            let mut done = Vec::new();
            for (u, ue) in ues.iter_mut().enumerate() {
                let rate = share[ue.serving] * self.efficiency(ue.serving, spec.index(ue.pixel));
                let sent = (rate * cfg.tick_s).min(ue.remaining_bits);
                stats.delivered_bits += sent;
                if ue.remaining_bits <= rate * cfg.tick_s {
                    let t = ue.elapsed_s + ue.remaining_bits / rate;
                    counters[ue.serving].throughputs.push(cfg.file_size_bits / t);
                    ue.remaining_bits = 0.0;
                    done.push(u);
                } else {
                    ue.remaining_bits -= sent;
                    ue.elapsed_s += cfg.tick_s;
                }
            }
            for &u in done.iter().rev() {
                let ue = ues.remove(u);
                attached[ue.serving] -= 1;
                stats.completed += 1;
                log(&mut events, tick, EventKind::Complete, Some(ue.serving), ue.id);
            }

            for ue in ues.iter_mut().filter(|u| u.mobile) {
                let (mut x, mut y) = (ue.position.x + ue.velocity.0 * cfg.tick_s, ue.position.y + ue.velocity.1 * cfg.tick_s);
                let (mut vx, mut vy) = ue.velocity;
                reflect(&mut x, &mut vx, lo_x, hi_x);
                reflect(&mut y, &mut vy, lo_y, hi_y);
                ue.position = Point::new(x, y);
                ue.velocity = (vx, vy);
                ue.pixel = spec.locate(ue.position).unwrap_or(ue.pixel);

                let idx = spec.index(ue.pixel);
                let Some(target) = self.servers.best(idx) else { continue };
                if target == ue.serving {
                    continue;
                }
                let serving_rsrp = grid.rsrp(ue.serving, idx).unwrap_or(f64::NEG_INFINITY);
                let target_rsrp = grid.rsrp(target, idx).expect("best server has coverage");
                if target_rsrp <= serving_rsrp + cfg.handover_margin_db {
                    continue;
                }
                let source = ue.serving;
                if grid.cells[source].has_neighbor(&grid.cells[target].id) {
                    *counters[source].reports.entry(target).or_default() += 1;
                }
                if attached[target] < cfg.max_ues_per_cell {
                    attached[source] -= 1;
                    attached[target] += 1;
                    ue.serving = target;
                    stats.handovers += 1;
                    log(&mut events, tick, EventKind::Handover, Some(target), ue.id);
                }
            }
        }

        let cells = grid
            .cells
            .iter()
            .zip(&counters)
            .map(|(cell, c)| {
                let mut out = CellKpis::empty(cell.id.clone());
                let occ: f64 = c.ta.iter().sum();
                if occ > 0.0 {
                    out.ta = c.ta.map(|v| v / occ);
                    out.aoa = c.aoa.map(|v| v / c.aoa.iter().sum::<f64>());
                }
                let total: u64 = c.reports.values().sum();
                if total > 0 {
                    out.neighbor_level = cell
                        .neighbors
                        .iter()
                        .map(|id| {
                            let hits = grid.cell_index(id).and_then(|l| c.reports.get(&l)).copied().unwrap_or(0);
                            (id.clone(), hits as f64 / total as f64)
                        })
                        .collect();
                }
                out.load_time = if ticks > 0 { c.full_ticks as f64 / ticks as f64 } else { 0.0 };
                if !c.throughputs.is_empty() {
                    let k = c.throughputs.len() as f64;
                    out.amt = c.throughputs.iter().sum::<f64>() / k;
                    out.hmt = (k / c.throughputs.iter().map(|t| 1.0 / t).sum::<f64>()).min(out.amt);
                }
                out
            })
            .collect();

        SimOutcome {
            kpis: KpiSet {
                source: KpiSource::Simulator,
                window_s: cfg.duration_s,
                cells,
            },
            stats,
            events,
        }
    }
}

fn reflect(pos: &mut f64, vel: &mut f64, lo: f64, hi: f64) {
    if *pos < lo {
        *pos = 2.0 * lo - *pos;
        *vel = -*vel;
    } else if *pos >= hi {
        *pos = 2.0 * hi - *pos;
        *vel = -*vel;
    }
    *pos = pos.clamp(lo, hi - 1e-9 * (hi - lo));
}

/// Runs one simulation and returns its KPIs.
pub fn run_simulation(config: &SimConfig, truth: &WeightMap, grid: &CoverageGrid, servers: &ServerMaps) -> Result<KpiSet> {
    Ok(Simulation::new(config, truth, grid, servers)?.run().kpis)
}

/// Writes events as CSV rows `t,event,cell_id,ue_id`.
pub fn write_event_log<W: Write>(events: &[Event], grid: &CoverageGrid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "event", "cell_id", "ue_id"])?;
    for e in events {
        let cell = e.cell.map_or("", |k| grid.cells[k].id.as_str());
        w.write_record([e.tick.to_string().as_str(), e.kind.as_str(), cell, e.ue.to_string().as_str()])?;
    }
    w.flush()?;
    Ok(())
}
