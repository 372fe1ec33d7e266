use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use uavicl::baselines::{AnchorScheme, GridStudyConfig};
use uavicl::harness::{run_experiment, ExperimentKind, ExperimentOutput, ExperimentSpec, RunStatus};
use uavicl::{Error, Method};

/// Joint UAV placement and resource allocation under TDoA accuracy
/// constraints.
#[derive(Parser, Debug)]
#[command(name = "uavicl", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario JSON; the built-in reference scenario when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Write per-run search traces as CSV.
    #[arg(long, global = true)]
    trace: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Scenario edit `key=value`, dotted keys for nested fields. Repeatable.
    #[arg(long = "set", global = true, value_parser = parse_kv)]
    overrides: Vec<(String, String)>,
    /// Runs per configuration, seeds `seed, seed+1, ...`.
    #[arg(long, global = true, default_value_t = 1)]
    reps: usize,
    /// PSO swarm size.
    #[arg(long, global = true)]
    swarm: Option<usize>,
    /// PSO iterations.
    #[arg(long, global = true)]
    iterations: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve with the proposed method.
    Solve,
    /// Run one benchmark method.
    Baseline {
        #[arg(value_enum)]
        method: BaselineArg,
    },
    /// Fourth-anchor CRLB maps for the UAV and ground schemes.
    CrlbGrid {
        /// Target grid pitch, m.
        #[arg(long)]
        cell: Option<f64>,
        /// Anchor search pitch, m.
        #[arg(long)]
        pitch: Option<f64>,
        /// Half width of the square map, m.
        #[arg(long)]
        half_extent: Option<f64>,
    },
    /// Accuracy-region sections and their intersection areas.
    Region {
        /// Station positioning powers, W.
        #[arg(long, value_delimiter = ',')]
        powers: Option<Vec<f64>>,
        /// UAV altitudes, m.
        #[arg(long, value_delimiter = ',')]
        altitudes: Option<Vec<f64>>,
    },
    /// Parameter sweeps.
    Sweep {
        #[command(subcommand)]
        what: SweepCmd,
        /// Methods to compare.
        #[arg(long, value_enum, value_delimiter = ',', global = true)]
        methods: Option<Vec<MethodArg>>,
    },
}

#[derive(Subcommand, Debug)]
enum SweepCmd {
    Pmax {
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    Zeta {
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    Users {
        /// User counts; `2..=K` when omitted.
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BaselineArg {
    Pso,
    Epa,
    Ucd,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Proposed,
    Pso,
    Epa,
    Ucd,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Proposed => Method::Proposed,
            MethodArg::Pso => Method::Pso,
            MethodArg::Epa => Method::Epa,
            MethodArg::Ucd => Method::Ucd,
        }
    }
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn build_spec(cli: &Cli) -> ExperimentSpec {
    let c = &cli.common;
    let kind = match &cli.command {
        Command::Solve => ExperimentKind::Solve,
        Command::Baseline { method } => ExperimentKind::Baseline(match method {
            BaselineArg::Pso => Method::Pso,
            BaselineArg::Epa => Method::Epa,
            BaselineArg::Ucd => Method::Ucd,
        }),
        Command::CrlbGrid { .. } => ExperimentKind::CrlbGrid,
        Command::Region { .. } => ExperimentKind::Region,
        Command::Sweep { what, .. } => match what {
            SweepCmd::Pmax { .. } => ExperimentKind::SweepPmax,
            SweepCmd::Zeta { .. } => ExperimentKind::SweepZeta,
            SweepCmd::Users { .. } => ExperimentKind::SweepUsers,
        },
    };
    let mut spec = ExperimentSpec::new(kind, &c.out);
    spec.scenario_path = c.scenario.clone();
    spec.overrides = c.overrides.clone();
    spec.repetitions = c.reps;
    spec.seed = c.seed;
    spec.trace = c.trace;
    let s = &mut spec.settings;
    if let Some(n) = c.swarm {
        s.pso.swarm_size = n;
    }
    if let Some(n) = c.iterations {
        s.pso.iterations = n;
    }
    match &cli.command {
        Command::CrlbGrid { cell, pitch, half_extent } => {
            let mut g = GridStudyConfig::desk(AnchorScheme::Uav4th);
            g.cell = cell.unwrap_or(g.cell);
            g.search_pitch = pitch.unwrap_or(g.search_pitch);
            g.half_extent = half_extent.unwrap_or(g.half_extent);
            s.grid = Some(g);
        }
        Command::Region { powers, altitudes } => {
            if let Some(p) = powers {
                s.region_powers = p.clone();
            }
            if let Some(a) = altitudes {
                s.region_altitudes = a.clone();
            }
        }
        Command::Sweep { what, methods } => {
            if let Some(m) = methods {
                s.methods = m.iter().map(|&x| x.into()).collect();
            }
            match what {
                SweepCmd::Pmax { values: Some(v) } => s.pmax_values = v.clone(),
                SweepCmd::Zeta { values: Some(v) } => s.zeta_values = v.clone(),
                SweepCmd::Users { counts: Some(v) } => s.user_counts = v.clone(),
                _ => {}
            }
        }
        _ => {}
    }
    spec
}

fn report(out: &ExperimentOutput) {
    for r in &out.records {
        match r.status {
            RunStatus::Ok => println!(
                "{:<24} {:<8} ok          sum rate {:.6e} b/s  uav ({:.1}, {:.1}, {:.1})  {:.2} s",
                r.label,
                r.method,
                r.objective.unwrap_or(f64::NAN),
                r.uav.map_or(f64::NAN, |u| u.x),
                r.uav.map_or(f64::NAN, |u| u.y),
                r.uav.map_or(f64::NAN, |u| u.h),
                r.wall_time_s
            ),
            s => println!("{:<24} {:<8} {:<11} {}", r.label, r.method, s.name(), r.message.as_deref().unwrap_or("")),
        }
    }
    for m in &out.crlb_maps {
        let (h, v) = m.ranges();
        println!("crlb {:<6} horizontal [{:.3}, {:.3}] m  vertical [{:.3}, {:.3}] m", m.scheme.name(), h[0], h[1], v[0], v[1]);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let spec = build_spec(&cli);
    match run_experiment(&spec).context("experiment failed") {
        Ok(out) => {
            report(&out);
            println!("results in {}", spec.output_dir.display());
            if out.all_infeasible() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let infeasible = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(|x| x.is_infeasibility()));
            ExitCode::from(if infeasible { 2 } else { 1 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_parsing() {
        assert_eq!(parse_kv("p_max=0.5").unwrap(), ("p_max".into(), "0.5".into()));
        assert!(parse_kv("p_max").is_err());
    }

    #[test]
    fn sweep_flags_reach_the_spec() {
        let cli = Cli::parse_from(["uavicl", "--seed", "7", "sweep", "pmax", "--values", "0.4,1.0", "--methods", "proposed,epa"]);
        let spec = build_spec(&cli);
        assert_eq!(spec.kind, ExperimentKind::SweepPmax);
        assert_eq!(spec.seed, 7);
        assert_eq!(spec.settings.pmax_values, vec![0.4, 1.0]);
        assert_eq!(spec.settings.methods, vec![Method::Proposed, Method::Epa]);
    }

    #[test]
    fn infeasibility_is_found_through_context() {
        let e = Err::<(), _>(Error::TerminalInfeasible).context("experiment failed").unwrap_err();
        assert!(e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(|x| x.is_infeasibility())));
    }
}
