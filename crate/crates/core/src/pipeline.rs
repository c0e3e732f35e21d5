//! End-to-end orchestration: scenario, KPIs, importance fit, localization and evaluation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{compare_variants, EvalReport};
use crate::grid::ServerMaps;
use crate::kpi::{oracle_kpis, KpiSet, KpiSource, WeightMap};
use crate::localizer::{fuse_and_smooth, per_kpi_maps, step6_combine, ImportanceVector, Localization};
use crate::nnls::{build_system, optimize_importance, optimize_importance_subset};
use crate::scenario::{gen_scenario, Scenario, ScenarioConfig};
use crate::sim::run_simulation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Scenario,
    Kpis,
    Optimize,
    Localize,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Scenario => "scenario",
            Stage::Kpis => "kpi",
            Stage::Optimize => "optimize",
            Stage::Localize => "localize",
            Stage::Evaluate => "evaluate",
        })
    }
}

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Fitted importance factors as written by the `optimize` step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub x: [f64; 5],
    /// `x / sum(x)`, or all zeros when `x` is zero.
    pub x_normalized: [f64; 5],
    pub residual: f64,
    pub iterations: usize,
    /// Residual of the uniform `(1/5, ..., 1/5)` weights on the same system.
    pub trivial_residual: f64,
}

pub fn optimize_report(per_kpi: &[WeightMap; 5], potential: &WeightMap, cfg: &ScenarioConfig) -> Result<OptimizeReport> {
    let fit = optimize_importance(per_kpi, potential, cfg.nnls.tol, cfg.nnls.max_iter)?;
    let sys = build_system(per_kpi, potential)?;
    Ok(OptimizeReport {
        x: fit.x.as_array(),
        x_normalized: fit.x.normalized(),
        residual: fit.residual,
        iterations: fit.iterations,
        trivial_residual: sys.residual(&ImportanceVector::trivial().as_array()),
    })
}

/// Variant names in report order.
pub const VARIANTS: [&str; 4] = ["ta-only", "ta-neighbor", "all", "smoothed"];

/// KPIs for a scenario. A simulator run that admits no traffic is an error.
pub fn compute_kpis(scenario: &Scenario, source: KpiSource) -> Result<KpiSet> {
    let kpis = match source {
        KpiSource::Oracle => oracle_kpis(&scenario.truth, &scenario.grid, &scenario.servers, &scenario.config.oracle)?,
        KpiSource::Simulator => {
            let sim = scenario.config.sim_config();
            let kpis = run_simulation(&sim, &scenario.truth, &scenario.grid, &scenario.servers)?;
            if kpis.is_empty_system() {
                return Err(Error::EmptySystem(format!(
                    "no cell recorded any traffic in {} s (arrival_rate = {} UE/s)",
                    sim.duration_s, sim.arrival_rate
                )));
            }
            kpis
        }
    };
    kpis.validate()?;
    Ok(kpis)
}

/// The estimates compared in the report: TA alone, TA with the neighbor
/// level refitted against the prior, all five KPIs fused, and the smoothed fusion.
pub fn build_variants(
    localization: &Localization,
    potential: &WeightMap,
    cfg: &ScenarioConfig,
) -> Result<Vec<(String, WeightMap)>> {
    let per_kpi = &localization.per_kpi;
    let ta = step6_combine(per_kpi, &ImportanceVector::basis(0))?;
    let pair = optimize_importance_subset(per_kpi, potential, &[0, 2], cfg.nnls.tol, cfg.nnls.max_iter)?;
    let ta_neighbor = step6_combine(per_kpi, &pair.x)?;
    Ok(vec![
        ("ta-only".into(), ta),
        ("ta-neighbor".into(), ta_neighbor),
        ("all".into(), localization.fused.clone()),
        ("smoothed".into(), localization.smoothed.clone()),
    ])
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    pub kpi_source: Option<KpiSource>,
    /// Skips the fit and uses these factors directly.
    pub x_override: Option<ImportanceVector>,
}

/// Every artifact of one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub scenario: Scenario,
    pub kpis: KpiSet,
    pub optimization: Option<OptimizeReport>,
    pub x: ImportanceVector,
    pub localization: Localization,
    pub variants: Vec<(String, WeightMap)>,
    pub report: EvalReport,
}

impl PipelineRun {
    pub fn servers(&self) -> &ServerMaps {
        &self.scenario.servers
    }
}

pub fn run_pipeline(config: &ScenarioConfig, options: &PipelineOptions) -> Result<PipelineRun, StageError> {
    let scenario = gen_scenario(config).at(Stage::Scenario)?;
    let kpis = compute_kpis(&scenario, options.kpi_source.unwrap_or(KpiSource::Oracle)).at(Stage::Kpis)?;
    let params = &config.localizer;
    params.validate().at(Stage::Localize)?;
    let per_kpi = per_kpi_maps(&kpis, &scenario.grid, &scenario.servers, params).at(Stage::Localize)?;

    let (x, optimization) = match options.x_override {
        Some(x) => (x, None),
        None => {
            let rep = optimize_report(&per_kpi, &scenario.potential, config).at(Stage::Optimize)?;
            (ImportanceVector::new(rep.x).at(Stage::Optimize)?, Some(rep))
        }
    };
    let localization = fuse_and_smooth(per_kpi, &scenario.servers, &x, params).at(Stage::Localize)?;
    if localization.fused.sum() <= 0.0 {
        return Err(StageError {
            stage: Stage::Localize,
            source: Error::InvalidInput("fused map is identically zero; check the importance factors".into()),
        });
    }
    let variants = build_variants(&localization, &scenario.potential, config).at(Stage::Evaluate)?;
    let report = compare_variants(&scenario.truth, &variants, &scenario.grid.spec, &config.eval).at(Stage::Evaluate)?;
    Ok(PipelineRun {
        scenario,
        kpis,
        optimization,
        x,
        localization,
        variants,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_simulator_fails_at_kpi_stage() {
        let mut c = ScenarioConfig::single_site();
        c.sim.arrival_rate = 0.0;
        let err = run_pipeline(
            &c,
            &PipelineOptions {
                kpi_source: Some(KpiSource::Simulator),
                x_override: None,
            },
        )
        .unwrap_err();
        assert_eq!(err.stage, Stage::Kpis);
        assert!(matches!(err.source, Error::EmptySystem(_)));
        assert!(err.to_string().contains("empty system"));
    }

    #[test]
    fn override_skips_the_fit() {
        let run = run_pipeline(
            &ScenarioConfig::single_site(),
            &PipelineOptions {
                kpi_source: None,
                x_override: Some(ImportanceVector::trivial()),
            },
        )
        .unwrap();
        assert!(run.optimization.is_none());
        assert_eq!(run.x, ImportanceVector::trivial());
        let names: Vec<_> = run.report.variants.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, VARIANTS);
    }
}
