use serde::{Deserialize, Serialize};

use crate::model::{Allocation, Position3, RateTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    Pso,
    Epa,
    Ucd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Pso => "pso",
            Method::Epa => "epa",
            Method::Ucd => "ucd",
        }
    }
}

/// One row of the per-iteration search trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub temperature: f64,
    /// Best objective so far; `None` until a feasible candidate is seen.
    pub best_objective: Option<f64>,
    /// Positioning powers of the ground stations chosen at this iteration.
    pub chosen: [f64; 3],
}

/// Solver bookkeeping. Timing fields are excluded from serialization so that
/// persisted solutions are reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub outer_iterations: usize,
    pub inner_solver_calls: usize,
    pub candidate_evaluations: usize,
    pub fitness_evaluations: usize,
    #[serde(default)]
    pub trace: Vec<TraceRow>,
    #[serde(skip)]
    pub wall_time_s: f64,
    #[serde(skip)]
    pub cpu_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub method: Method,
    pub uav: Position3,
    pub alloc: Allocation,
    pub rates: RateTable,
    pub objective: f64,
    pub diagnostics: Diagnostics,
}

/// Wall-clock and process CPU stopwatch.
pub struct Stopwatch {
    wall: std::time::Instant,
    cpu: f64,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self { wall: std::time::Instant::now(), cpu: process_cpu_seconds() }
    }

    pub fn wall(&self) -> f64 {
        self.wall.elapsed().as_secs_f64()
    }

    pub fn cpu(&self) -> f64 {
        process_cpu_seconds() - self.cpu
    }

    pub fn stamp(&self, diag: &mut Diagnostics) {
        diag.wall_time_s = self.wall().max(f64::MIN_POSITIVE);
        diag.cpu_time_s = self.cpu();
    }
}

/// CPU time consumed by the whole process (all threads), seconds.
pub fn process_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_PROCESS_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}
