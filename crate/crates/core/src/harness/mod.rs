//! Experiment orchestration: scenario loading, the solve/baseline/sweep
//! pipelines, the CRLB grid and region maps, and result persistence.

mod output;
mod scenario;

pub use output::{persist_solution, validate_solution, RUNS_HEADER};
pub use scenario::{apply_override, load_scenario, load_scenario_with, reference_scenario_file, parse_scenario, ChannelFile, ScenarioFile};

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{crlb_grid_study, epa_solve, pso_solve, ucd_solve, AnchorScheme, CrlbMap, GridStudyConfig, PsoConfig};
use crate::error::{Error, Result};
use crate::gibbs::{run, GibbsConfig};
use crate::locgeom::{accuracy_thresholds, ellipse_at_altitude, regions_for};
use crate::model::{Position3, ScenarioConfig, TRANSMITTERS};
use crate::placement::is_feasible;
use crate::solution::{Method, Solution, Stopwatch};

/// Build identifier: crate version plus the commit it was built from.
pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("UAVICL_GIT_REV"));

/// Per-user accuracy thresholds `ε_k = lb_k + ζ (ub_k − lb_k)`, bounds taken
/// at 0.15 W on every station; explicit overrides win.
pub fn derive_accuracy_thresholds(cfg: &ScenarioConfig) -> Result<Vec<f64>> {
    accuracy_thresholds(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Solve,
    Baseline(Method),
    SweepPmax,
    SweepZeta,
    SweepUsers,
    CrlbGrid,
    Region,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::Baseline(_) => "baseline",
            ExperimentKind::SweepPmax => "sweep_pmax",
            ExperimentKind::SweepZeta => "sweep_zeta",
            ExperimentKind::SweepUsers => "sweep_users",
            ExperimentKind::CrlbGrid => "crlb_grid",
            ExperimentKind::Region => "region",
        }
    }
}

/// Knobs of the individual pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSettings {
    pub pmax_values: Vec<f64>,
    pub zeta_values: Vec<f64>,
    /// User counts of the scalability sweep; `2..=K` when empty.
    pub user_counts: Vec<usize>,
    /// Methods compared by the sweeps.
    pub methods: Vec<Method>,
    pub pso: PsoConfig,
    /// Cap on Gibbs outer iterations, if any.
    pub gibbs_max_outer: Option<usize>,
    pub grid: Option<GridStudyConfig>,
    /// Ground-station positioning powers drawn in the region maps, W.
    pub region_powers: Vec<f64>,
    pub region_altitudes: Vec<f64>,
    /// Boundary points per ellipse.
    pub region_points: usize,
    /// Cell size of the intersection-area estimate, m.
    pub region_pitch: f64,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            pmax_values: vec![0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            zeta_values: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            user_counts: Vec::new(),
            methods: vec![Method::Proposed, Method::Pso, Method::Epa, Method::Ucd],
            pso: PsoConfig::default(),
            gibbs_max_outer: None,
            grid: None,
            region_powers: vec![0.1, 0.2, 0.3],
            region_altitudes: vec![200.0, 400.0, 600.0],
            region_points: 72,
            region_pitch: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Scenario file; the built-in reference scenario when absent.
    pub scenario_path: Option<PathBuf>,
    /// `key=value` edits applied to the scenario document before parsing.
    #[serde(default)]
    pub overrides: Vec<(String, String)>,
    pub output_dir: PathBuf,
    pub repetitions: usize,
    pub seed: u64,
    /// Also write per-run Gibbs traces as CSV.
    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub settings: ExperimentSettings,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            kind,
            scenario_path: None,
            overrides: Vec::new(),
            output_dir: output_dir.into(),
            repetitions: 1,
            seed: 1,
            trace: false,
            settings: ExperimentSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |path: &str, msg: String| Err(Error::Config { path: format!("spec.{path}"), msg });
        if self.repetitions == 0 {
            return err("repetitions", "must be >= 1".into());
        }
        if let Some(p) = &self.scenario_path {
            if !p.is_file() {
                return err("scenario_path", format!("{} does not exist", p.display()));
            }
        }
        let s = &self.settings;
        if self.kind == ExperimentKind::SweepPmax && s.pmax_values.is_empty() {
            return err("settings.pmax_values", "empty".into());
        }
        if self.kind == ExperimentKind::SweepZeta && s.zeta_values.is_empty() {
            return err("settings.zeta_values", "empty".into());
        }
        if matches!(self.kind, ExperimentKind::SweepPmax | ExperimentKind::SweepZeta | ExperimentKind::SweepUsers) && s.methods.is_empty() {
            return err("settings.methods", "empty".into());
        }
        if s.user_counts.iter().any(|&m| m < 2) {
            return err("settings.user_counts", "need at least 2 users".into());
        }
        if self.kind == ExperimentKind::Region && !(s.region_pitch > 0.0 && s.region_points >= 3) {
            return err("settings.region_pitch", "pitch must be > 0 and at least 3 boundary points".into());
        }
        s.pso.validate()
    }

    pub fn scenario(&self) -> Result<ScenarioConfig> {
        match &self.scenario_path {
            Some(p) => load_scenario_with(p, &self.overrides),
            None => {
                let text = serde_json::to_string(&reference_scenario_file())?;
                parse_scenario(&text, &self.overrides)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Infeasible,
    Error,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Infeasible => "infeasible",
            RunStatus::Error => "error",
        }
    }
}

/// One solver run. Timing fields are kept out of the JSON record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub label: String,
    pub method: String,
    pub rep: usize,
    pub seed: u64,
    pub p_max: f64,
    pub zeta: f64,
    pub users: usize,
    pub status: RunStatus,
    pub message: Option<String>,
    pub objective: Option<f64>,
    pub uav: Option<Position3>,
    pub pos_power: Option<[f64; TRANSMITTERS]>,
    pub min_rate: Option<f64>,
    pub outer_iterations: usize,
    pub inner_solver_calls: usize,
    pub candidate_evaluations: usize,
    pub fitness_evaluations: usize,
    pub solution_file: Option<String>,
    pub build_id: String,
    #[serde(skip)]
    pub wall_time_s: f64,
    #[serde(skip)]
    pub cpu_time_s: f64,
}

/// Everything an experiment produced.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub solutions: Vec<Option<Solution>>,
    pub crlb_maps: Vec<CrlbMap>,
}

impl ExperimentOutput {
    /// Exit status of a CLI invocation: infeasible if no run succeeded and
    /// at least one was infeasible.
    pub fn all_infeasible(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.status != RunStatus::Ok) && self.records.iter().any(|r| r.status == RunStatus::Infeasible)
    }
}

/// Solves `cfg` with `method`, seeding every stochastic part from `seed`.
pub fn solve_method(method: Method, cfg: &ScenarioConfig, seed: u64, settings: &ExperimentSettings) -> Result<Solution> {
    let mut gibbs = GibbsConfig::for_scenario(cfg);
    gibbs.seed = seed;
    if let Some(n) = settings.gibbs_max_outer {
        gibbs.max_outer = n;
    }
    match method {
        Method::Proposed => run(cfg, &gibbs),
        Method::Ucd => ucd_solve(cfg, &gibbs),
        Method::Epa => epa_solve(cfg),
        Method::Pso => pso_solve(cfg, &PsoConfig { seed, ..settings.pso.clone() }),
    }
}

struct Job {
    label: String,
    method: Method,
    rep: usize,
    seed: u64,
    cfg: ScenarioConfig,
}

fn execute(job: &Job, kind: ExperimentKind, settings: &ExperimentSettings) -> (RunRecord, Option<Solution>) {
    let clock = Stopwatch::start();
    let res = solve_method(job.method, &job.cfg, job.seed, settings);
    let mut rec = RunRecord {
        experiment: kind.name().into(),
        label: job.label.clone(),
        method: job.method.name().into(),
        rep: job.rep,
        seed: job.seed,
        p_max: job.cfg.p_max,
        zeta: job.cfg.zeta,
        users: job.cfg.num_users(),
        status: RunStatus::Ok,
        message: None,
        objective: None,
        uav: None,
        pos_power: None,
        min_rate: None,
        outer_iterations: 0,
        inner_solver_calls: 0,
        candidate_evaluations: 0,
        fitness_evaluations: 0,
        solution_file: None,
        build_id: BUILD_ID.into(),
        wall_time_s: clock.wall().max(f64::MIN_POSITIVE),
        cpu_time_s: clock.cpu(),
    };
    match res {
        Ok(sol) => {
            let d = &sol.diagnostics;
            rec.objective = Some(sol.objective);
            rec.uav = Some(sol.uav);
            rec.pos_power = Some(sol.alloc.pos_power);
            rec.min_rate = Some(sol.rates.min_user_rate());
            rec.outer_iterations = d.outer_iterations;
            rec.inner_solver_calls = d.inner_solver_calls;
            rec.candidate_evaluations = d.candidate_evaluations;
            rec.fitness_evaluations = d.fitness_evaluations;
            (rec, Some(sol))
        }
        Err(e) => {
            rec.status = if e.is_infeasibility() { RunStatus::Infeasible } else { RunStatus::Error };
            rec.message = Some(e.to_string());
            (rec, None)
        }
    }
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x}");
    s.replace('.', "p")
}

fn jobs_for(spec: &ExperimentSpec, base: &ScenarioConfig) -> Result<Vec<Job>> {
    let s = &spec.settings;
    let mut points: Vec<(String, ScenarioConfig, Vec<Method>)> = Vec::new();
    match spec.kind {
        ExperimentKind::Solve => points.push(("solve".into(), base.clone(), vec![Method::Proposed])),
        ExperimentKind::Baseline(m) => points.push((m.name().into(), base.clone(), vec![m])),
        ExperimentKind::SweepPmax => {
            for &p in &s.pmax_values {
                let mut cfg = base.clone();
                cfg.p_max = p;
                cfg.validate()?;
                points.push((format!("pmax_{}", fmt_num(p)), cfg, s.methods.clone()));
            }
        }
        ExperimentKind::SweepZeta => {
            for &z in &s.zeta_values {
                let mut cfg = base.clone();
                cfg.zeta = z;
                cfg.validate()?;
                points.push((format!("zeta_{}", fmt_num(z)), cfg, s.methods.clone()));
            }
        }
        ExperimentKind::SweepUsers => {
            let k = base.num_users();
            let counts: Vec<usize> = if s.user_counts.is_empty() { (2..=k).collect() } else { s.user_counts.clone() };
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            for m in counts {
                if m > k {
                    return Err(Error::Config { path: "spec.settings.user_counts".into(), msg: format!("{m} exceeds the {k} users") });
                }
                let mut idx = sample(&mut rng, k, m).into_vec();
                idx.sort_unstable();
                points.push((format!("users_{m}"), base.with_users(&idx), s.methods.clone()));
            }
        }
        ExperimentKind::CrlbGrid | ExperimentKind::Region => {}
    }
    let mut jobs = Vec::new();
    for (label, cfg, methods) in points {
        for &method in &methods {
            for rep in 0..spec.repetitions {
                let seed = spec.seed.wrapping_add(rep as u64);
                let single = matches!(spec.kind, ExperimentKind::Solve | ExperimentKind::Baseline(_));
                let mut name = if single { method.name().to_string() } else { format!("{label}_{}", method.name()) };
                if spec.repetitions > 1 {
                    name = format!("{name}_r{rep}");
                }
                jobs.push(Job { label: name, method, rep, seed, cfg: cfg.clone() });
            }
        }
    }
    Ok(jobs)
}

/// Runs the experiment and writes its files under `spec.output_dir`:
/// `spec.json`, `scenario.json`, `runs.csv`, `runs.json`, `timing.csv`,
/// `solutions/<label>.json` and, with tracing on, `trace/<label>.csv`.
/// Failed runs are recorded, not raised.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let mut cfg = spec.scenario()?;
    cfg.seed = spec.seed;
    let dir = &spec.output_dir;
    fs::create_dir_all(dir)?;
    output::write_json(&dir.join("spec.json"), spec)?;
    output::write_json(&dir.join("scenario.json"), &cfg)?;

    let mut out = ExperimentOutput::default();
    match spec.kind {
        ExperimentKind::CrlbGrid => {
            for scheme in [AnchorScheme::Uav4th, AnchorScheme::Ground4th] {
                let mut study = spec.settings.grid.unwrap_or_else(|| GridStudyConfig::desk(scheme));
                if spec.settings.grid.is_some() {
                    study.fourth_anchor_alt = GridStudyConfig::desk(scheme).fourth_anchor_alt;
                }
                let map = crlb_grid_study(&cfg.bs, &cfg.channel, &study, scheme)?;
                output::write_crlb_map(dir, &map)?;
                out.crlb_maps.push(map);
            }
            return Ok(out);
        }
        ExperimentKind::Region => {
            write_region_maps(dir, &cfg, &spec.settings)?;
            return Ok(out);
        }
        _ => {}
    }

    let jobs = jobs_for(spec, &cfg)?;
    // Timing is the point of the scalability sweep: keep its runs apart.
    let results: Vec<(RunRecord, Option<Solution>)> = if spec.kind == ExperimentKind::SweepUsers {
        jobs.iter().map(|j| execute(j, spec.kind, &spec.settings)).collect()
    } else {
        jobs.par_iter().map(|j| execute(j, spec.kind, &spec.settings)).collect()
    };

    let sol_dir = dir.join("solutions");
    fs::create_dir_all(&sol_dir)?;
    if spec.trace {
        fs::create_dir_all(dir.join("trace"))?;
    }
    for (job, (mut rec, sol)) in jobs.iter().zip(results) {
        if let Some(s) = &sol {
            let name = format!("{}.json", job.label);
            match persist_solution(&sol_dir.join(&name), s, &job.cfg) {
                Ok(()) => rec.solution_file = Some(format!("solutions/{name}")),
                Err(e) => {
                    rec.status = RunStatus::Error;
                    rec.message = Some(e.to_string());
                }
            }
            if spec.trace {
                output::write_trace(&dir.join("trace").join(format!("{}.csv", job.label)), s)?;
            }
        }
        out.records.push(rec);
        out.solutions.push(sol);
    }
    output::write_runs(dir, &out.records)?;
    output::write_json(&dir.join("runs.json"), &out.records)?;
    Ok(out)
}

/// Horizontal sections of every user's cone and the area of their
/// intersection, per station positioning power and altitude.
fn write_region_maps(dir: &Path, cfg: &ScenarioConfig, s: &ExperimentSettings) -> Result<()> {
    let eps = accuracy_thresholds(cfg)?;
    let mut outline = Vec::new();
    let mut areas = Vec::new();
    let pts = cfg.bs.iter().chain(&cfg.users);
    let (x0, x1) = pts.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.x), b.max(p.x)));
    let (y0, y1) = pts.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.y), b.max(p.y)));
    let margin = 500.0;
    let nx = ((x1 - x0 + 2.0 * margin) / s.region_pitch).ceil() as usize;
    let ny = ((y1 - y0 + 2.0 * margin) / s.region_pitch).ceil() as usize;
    for &p in &s.region_powers {
        let regions = match regions_for([p; 3], &eps, cfg) {
            Ok(r) => r,
            Err(e) if e.is_infeasibility() => {
                for &h in &s.region_altitudes {
                    for k in 0..cfg.num_users() {
                        outline.push((p, h, k, "infeasible".to_string(), 0usize, f64::NAN, f64::NAN));
                    }
                    areas.push((p, h, s.region_pitch, 0usize, 0.0));
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        for &h in &s.region_altitudes {
            for (k, r) in regions.iter().enumerate() {
                match ellipse_at_altitude(r, h) {
                    Ok(c) => {
                        for (i, [x, y]) in c.polyline(s.region_points).into_iter().enumerate() {
                            outline.push((p, h, k, "ellipse".into(), i, x, y));
                        }
                    }
                    Err(Error::UnboundedRegion) => outline.push((p, h, k, "unbounded".into(), 0, f64::NAN, f64::NAN)),
                    Err(Error::EmptyAtAltitude) => outline.push((p, h, k, "empty".into(), 0, f64::NAN, f64::NAN)),
                    Err(e) => return Err(e),
                }
            }
            let hits: usize = (0..nx)
                .into_par_iter()
                .map(|i| {
                    let x = x0 - margin + (i as f64 + 0.5) * s.region_pitch;
                    (0..ny)
                        .filter(|&j| {
                            let y = y0 - margin + (j as f64 + 0.5) * s.region_pitch;
                            is_feasible(&regions, [h, h], &Position3::new(x, y, h))
                        })
                        .count()
                })
                .sum();
            areas.push((p, h, s.region_pitch, hits, hits as f64 * s.region_pitch * s.region_pitch));
        }
    }
    output::write_csv(&dir.join("region.csv"), &["pos_power", "altitude", "user", "status", "point", "x", "y"], outline)?;
    output::write_csv(&dir.join("region_area.csv"), &["pos_power", "altitude", "pitch_m", "feasible_cells", "area_m2"], areas)
}

/// Reads `runs.json` of a finished experiment.
pub fn read_records(dir: &Path) -> Result<Vec<RunRecord>> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join("runs.json"))?)?)
}
