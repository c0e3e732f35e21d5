//! `hotloc`: run the hotspot localization pipeline, whole or stage by stage.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hotloc_core::eval::compare_variants;
use hotloc_core::grid::{compute_server_maps, CoverageGrid, ServerMaps};
use hotloc_core::io;
use hotloc_core::kpi::{oracle_kpis, KpiSet, KpiSource, MapLabel, WeightMap};
use hotloc_core::localizer::{fuse_and_smooth, per_kpi_maps, ImportanceVector, Localization};
use hotloc_core::nnls::optimize_importance_subset;
use hotloc_core::pipeline::{optimize_report, run_pipeline, OptimizeReport, PipelineOptions, PipelineRun, VARIANTS};
use hotloc_core::scenario::{gen_scenario, Scenario, ScenarioConfig};
use hotloc_core::sim::Simulation;
use serde::Serialize;

const GRID: &str = "grid.csv";
const TRUTH: &str = "truth.csv";
const POTENTIAL: &str = "potential.csv";
const POTENTIAL_SPEC: &str = "potential.json";
const CONFIG: &str = "config.json";
const KPIS: &str = "kpis.json";
const OPTIMIZE: &str = "optimize.json";
const IMPORTANCE: &str = "importance.json";
const MAPS: &str = "maps";
const VARIANTS_DIR: &str = "variants";
const EVAL: &str = "eval";

#[derive(Parser)]
#[command(name = "hotloc", version, about = "Locate traffic hotspots from per-cell network KPIs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario configuration (JSON); the built-in desk scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Oracle,
    Sim,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    TaOnly,
    TaNeighbor,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    SingleSite,
}

#[derive(Subcommand)]
enum Command {
    /// Write a preset configuration file.
    InitConfig {
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize the coverage grid, truth map and potential map.
    GenScenario {
        #[command(flatten)]
        common: Common,
    },
    /// Run every stage and write all intermediate artifacts.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "oracle")]
        kpi_source: Source,
        /// Importance factors `a,b,c,d,e`; skips the fit.
        #[arg(long, value_parser = parse_x)]
        x_override: Option<ImportanceVector>,
    },
    /// Simulate the network on a generated scenario and write its KPIs.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Directory holding grid.csv and truth.csv.
        #[arg(long = "in")]
        input: PathBuf,
        /// Also write the per-event log as events.csv.
        #[arg(long)]
        events: bool,
    },
    /// Aggregate the truth map into ideal KPIs.
    OracleKpis {
        #[command(flatten)]
        common: Common,
        /// Directory holding grid.csv and truth.csv.
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Fit the importance factors against the potential map.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Directory holding grid.csv, kpis.json and potential.csv.
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Build the per-KPI, fused and smoothed maps.
    Localize {
        #[command(flatten)]
        common: Common,
        /// Directory holding grid.csv, kpis.json and potential.csv
        /// (optimize.json is used when present).
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        variant: Variant,
        #[arg(long, value_parser = parse_x)]
        x_override: Option<ImportanceVector>,
    },
    /// Score variant maps against the truth map.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory holding truth.csv, grid.csv and variants/*.csv.
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn parse_x(s: &str) -> Result<ImportanceVector, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; 5] = parts
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 5 comma-separated values, got {}", v.len()))?;
    ImportanceVector::new(arr).map_err(|e| e.to_string())
}

/// An error annotated with the stage that raised it.
struct Failure {
    stage: String,
    error: anyhow::Error,
}

trait Staged<T> {
    fn stage(self, name: &str) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Staged<T> for Result<T, E> {
    fn stage(self, name: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            stage: name.to_string(),
            error: e.into(),
        })
    }
}

fn load_config(common: &Common) -> Result<ScenarioConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ScenarioConfig::from_json(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => ScenarioConfig::desk(),
    };
    if let Some(seed) = common.seed {
        config = config.with_seed(seed);
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn read_grid(dir: &Path) -> Result<(CoverageGrid, ServerMaps)> {
    let path = dir.join(GRID);
    let grid = io::read_grid_file(&path).with_context(|| format!("reading {}", path.display()))?;
    let servers = compute_server_maps(&grid);
    Ok((grid, servers))
}

fn read_map(path: &Path) -> Result<WeightMap> {
    io::read_weight_map_file(path).with_context(|| format!("reading {}", path.display()))
}

fn read_kpis(dir: &Path) -> Result<KpiSet> {
    let path = dir.join(KPIS);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let kpis = KpiSet::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    kpis.validate()?;
    Ok(kpis)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    io::write_json(value, path).with_context(|| format!("writing {}", path.display()))
}

fn write_map(map: &WeightMap, path: &Path) -> Result<()> {
    io::write_weight_map_file(map, path).with_context(|| format!("writing {}", path.display()))
}

fn write_scenario(s: &Scenario, out: &Path) -> Result<()> {
    io::write_grid_file(&s.grid, &out.join(GRID))?;
    write_map(&s.truth, &out.join(TRUTH))?;
    write_map(&s.potential, &out.join(POTENTIAL))?;
    write_json(&s.config.potential, &out.join(POTENTIAL_SPEC))?;
    write_json(&s.config, &out.join(CONFIG))
}

fn write_localization(loc: &Localization, out: &Path) -> Result<()> {
    let maps = out.join(MAPS);
    out_dir(&maps)?;
    for q in loc.per_kpi.iter().chain([&loc.fused, &loc.smoothed]) {
        write_map(q, &maps.join(format!("{}.csv", q.label)))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Importance<'a> {
    x: [f64; 5],
    source: &'a str,
}

fn write_run(run: &PipelineRun, out: &Path, overridden: bool) -> Result<()> {
    write_scenario(&run.scenario, out)?;
    write_json(&run.kpis, &out.join(KPIS))?;
    if let Some(rep) = &run.optimization {
        write_json(rep, &out.join(OPTIMIZE))?;
    }
    write_json(
        &Importance {
            x: run.x.as_array(),
            source: if overridden { "override" } else { "fit" },
        },
        &out.join(IMPORTANCE),
    )?;
    write_localization(&run.localization, out)?;
    let variants = out.join(VARIANTS_DIR);
    out_dir(&variants)?;
    for (name, map) in &run.variants {
        write_map(map, &variants.join(format!("{name}.csv")))?;
    }
    let eval = out.join(EVAL);
    out_dir(&eval)?;
    io::write_eval_report(&run.report, &eval)?;
    Ok(())
}

fn print_summary(run: &PipelineRun) {
    for v in &run.report.variants {
        let first = v.detection.first().map_or(String::new(), |d| format!(", detected {:.4} at p = {}", d.detected, d.p));
        eprintln!("{:<12} mean peak distance {:>8.2} m{first}", v.name, v.matching.mean_distance);
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::InitConfig { preset, out } => {
            let config = match preset {
                Preset::Desk => ScenarioConfig::desk(),
                Preset::SingleSite => ScenarioConfig::single_site(),
            };
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                out_dir(dir).stage("config")?;
            }
            write_json(&config, &out).stage("config")
        }
        Command::GenScenario { common } => {
            let config = load_config(&common).stage("config")?;
            out_dir(&common.out).stage("scenario")?;
            let s = gen_scenario(&config).stage("scenario")?;
            write_scenario(&s, &common.out).stage("scenario")
        }
        Command::Pipeline {
            common,
            kpi_source,
            x_override,
        } => {
            let config = load_config(&common).stage("config")?;
            out_dir(&common.out).stage("output")?;
            let options = PipelineOptions {
                kpi_source: Some(match kpi_source {
                    Source::Oracle => KpiSource::Oracle,
                    Source::Sim => KpiSource::Simulator,
                }),
                x_override,
            };
            let run = run_pipeline(&config, &options).map_err(|e| Failure {
                stage: e.stage.to_string(),
                error: anyhow::Error::new(e.source),
            })?;
            write_run(&run, &common.out, x_override.is_some()).stage("output")?;
            print_summary(&run);
            Ok(())
        }
        Command::Simulate { common, input, events } => {
            let config = load_config(&common).stage("config")?;
            let (grid, servers) = read_grid(&input).stage("input")?;
            let truth = read_map(&input.join(TRUTH)).stage("input")?;
            out_dir(&common.out).stage("kpi")?;
            let sim = config.sim_config();
            let mut engine = Simulation::new(&sim, &truth, &grid, &servers).stage("kpi")?;
            if events {
                engine = engine.with_event_log();
            }
            let outcome = engine.run();
            if outcome.kpis.is_empty_system() {
                return Err(anyhow!(hotloc_core::Error::EmptySystem(format!(
                    "no cell recorded any traffic in {} s (arrival_rate = {} UE/s)",
                    sim.duration_s, sim.arrival_rate
                ))))
                .stage("kpi");
            }
            write_json(&outcome.kpis, &common.out.join(KPIS)).stage("kpi")?;
            if events {
                let path = common.out.join("events.csv");
                let file = fs::File::create(&path).map_err(anyhow::Error::from).stage("kpi")?;
                hotloc_core::sim::write_event_log(&outcome.events, &grid, std::io::BufWriter::new(file)).stage("kpi")?;
            }
            eprintln!(
                "{} arrivals, {} admitted, {} blocked, {} completed, {} handovers",
                outcome.stats.arrivals,
                outcome.stats.admitted,
                outcome.stats.blocked,
                outcome.stats.completed,
                outcome.stats.handovers
            );
            Ok(())
        }
        Command::OracleKpis { common, input } => {
            let config = load_config(&common).stage("config")?;
            let (grid, servers) = read_grid(&input).stage("input")?;
            let truth = read_map(&input.join(TRUTH)).stage("input")?;
            out_dir(&common.out).stage("kpi")?;
            let kpis = oracle_kpis(&truth, &grid, &servers, &config.oracle).stage("kpi")?;
            write_json(&kpis, &common.out.join(KPIS)).stage("kpi")
        }
        Command::Optimize { common, input } => {
            let config = load_config(&common).stage("config")?;
            let (grid, servers) = read_grid(&input).stage("input")?;
            let kpis = read_kpis(&input).stage("input")?;
            let potential = read_map(&input.join(POTENTIAL)).stage("input")?;
            out_dir(&common.out).stage("optimize")?;
            let per_kpi = per_kpi_maps(&kpis, &grid, &servers, &config.localizer).stage("localize")?;
            let rep = optimize_report(&per_kpi, &potential, &config).stage("optimize")?;
            write_json(&rep, &common.out.join(OPTIMIZE)).stage("optimize")
        }
        Command::Localize {
            common,
            input,
            variant,
            x_override,
        } => {
            let config = load_config(&common).stage("config")?;
            let (grid, servers) = read_grid(&input).stage("input")?;
            let kpis = read_kpis(&input).stage("input")?;
            out_dir(&common.out).stage("localize")?;
            let params = &config.localizer;
            params.validate().stage("localize")?;
            let per_kpi = per_kpi_maps(&kpis, &grid, &servers, params).stage("localize")?;
            let potential = || read_map(&input.join(POTENTIAL));
            let x = match (variant, x_override) {
                (Variant::TaOnly, _) => ImportanceVector::basis(0),
                (Variant::TaNeighbor, _) => {
                    let p = potential().stage("input")?;
                    optimize_importance_subset(&per_kpi, &p, &[0, 2], config.nnls.tol, config.nnls.max_iter)
                        .stage("optimize")?
                        .x
                }
                (Variant::All, Some(x)) => x,
                (Variant::All, None) => {
                    let stored = input.join(OPTIMIZE);
                    if stored.exists() {
                        let rep: OptimizeReport = io::read_json(&stored).stage("input")?;
                        ImportanceVector::new(rep.x).stage("input")?
                    } else {
                        let p = potential().stage("input")?;
                        ImportanceVector::new(optimize_report(&per_kpi, &p, &config).stage("optimize")?.x)
                            .stage("optimize")?
                    }
                }
            };
            let loc = fuse_and_smooth(per_kpi, &servers, &x, params).stage("localize")?;
            write_localization(&loc, &common.out).stage("localize")?;
            let variants = common.out.join(VARIANTS_DIR);
            out_dir(&variants).stage("localize")?;
            let name = match variant {
                Variant::TaOnly => "ta-only",
                Variant::TaNeighbor => "ta-neighbor",
                Variant::All => "all",
            };
            write_map(&loc.fused, &variants.join(format!("{name}.csv"))).stage("localize")?;
            if matches!(variant, Variant::All) {
                write_map(&loc.smoothed, &variants.join("smoothed.csv")).stage("localize")?;
            }
            write_json(
                &Importance {
                    x: x.as_array(),
                    source: match (variant, x_override) {
                        (Variant::All, None) => "fit",
                        (Variant::All, Some(_)) => "override",
                        _ => name,
                    },
                },
                &common.out.join(IMPORTANCE),
            )
            .stage("localize")
        }
        Command::Evaluate { common, input } => {
            let config = load_config(&common).stage("config")?;
            let (grid, _) = read_grid(&input).stage("input")?;
            let truth = read_map(&input.join(TRUTH)).stage("input")?;
            let runs = read_variants(&input.join(VARIANTS_DIR)).stage("input")?;
            out_dir(&common.out).stage("evaluate")?;
            let report = compare_variants(&truth, &runs, &grid.spec, &config.eval).stage("evaluate")?;
            io::write_eval_report(&report, &common.out).stage("evaluate")
        }
    }
}

/// Variant maps named by file stem; the pipeline's variants come first in
/// their usual order, any others follow alphabetically.
fn read_variants(dir: &Path) -> Result<Vec<(String, WeightMap)>> {
    let mut found: BTreeMap<String, WeightMap> = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_stem().and_then(|s| s.to_str()).ok_or_else(|| anyhow!("bad file name {}", path.display()))?;
            found.insert(name.to_string(), read_map(&path)?);
        }
    }
    if found.is_empty() {
        bail!("no variant maps in {}", dir.display());
    }
    let mut out: Vec<(String, WeightMap)> = Vec::new();
    for name in VARIANTS {
        if let Some(m) = found.remove(name) {
            out.push((name.to_string(), m));
        }
    }
    out.extend(found);
    for (name, m) in &mut out {
        if m.label == MapLabel::GroundTruth {
            bail!("variant {name} is labelled as a truth map");
        }
    }
    Ok(out)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("HOTLOC_THREADS") {
        let n: usize = v.parse().with_context(|| format!("HOTLOC_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("HOTLOC_THREADS must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {} stage failed: {:#}", f.stage, f.error);
            ExitCode::FAILURE
        }
    }
}
