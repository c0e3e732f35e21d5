//! Traffic hotspot localization from per-cell network KPIs.
//!
//! The crate turns a coverage grid and a set of cell counters (timing advance,
//! angle of arrival, neighbor levels, load time, throughput means) into a
//! per-pixel traffic map. Each counter induces its own map; a non-negative
//! least-squares fit against a user prior weighs the maps; a Gaussian kernel
//! smooths the fused result. A seeded simulator and an analytic oracle supply
//! KPIs for synthetic scenarios, and an evaluator scores estimates against the
//! known truth.

// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod kpi;
pub mod localizer;
pub mod nnls;
pub mod pipeline;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
pub use eval::{compare_variants, detection_percentage, extract_peaks, match_and_measure, weight_cdf, EvalConfig, EvalReport, HotspotPeak};
pub use grid::{compute_server_maps, CellInfo, CoverageGrid, GridSpec, Pixel, Point, ServerMaps, NO_COVERAGE};
pub use kpi::{
    generate_ground_truth, oracle_kpis, rasterize_potential_map, CellKpis, KpiSet, KpiSource, MapLabel, OracleParams,
    PotentialHotspotSpec, ThroughputCurve, TrafficModel, WeightMap,
};
pub use localizer::{localize, ImportanceVector, Localization, LocalizerParams};
pub use nnls::{optimize_importance, solve_nnls, DesignSystem, NnlsSolution};
pub use pipeline::{run_pipeline, PipelineOptions, PipelineRun, Stage, StageError};
pub use scenario::{gen_scenario, Scenario, ScenarioConfig};
pub use sim::{run_simulation, SimConfig};
