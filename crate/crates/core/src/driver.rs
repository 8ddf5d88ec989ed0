//! Run orchestration shared by the CLI and the end-to-end tests: one method on
//! one scenario, method comparisons against a fine reference, and the sweep
//! over the tolerance constant.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fvcore::uniform::UniformSolver;
use crate::grid::{GridSpec, NodeKey};
use crate::metrics::{compression_rate, field_errors, speedup, FieldErrors};
use crate::mrtree::io::{leaf_records, LeafRecord};
use crate::scenario::{ScenarioConfig, Tolerance};
use crate::state::CellState;
use crate::timeint::euler::run_uniform;
use crate::timeint::rkf::RkfSettings;
use crate::timeint::{run_mr, Integrator, MrSolver, SolverStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fv,
    Mr,
    MrLts,
    MrRkf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Fv, Method::Mr, Method::MrLts, Method::MrRkf];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fv => "fv",
            Method::Mr => "mr",
            Method::MrLts => "mr_lts",
            Method::MrRkf => "mr_rkf",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown method {s:?} (expected fv, mr, mr_lts or mr_rkf)")))
    }
}

/// State handed to snapshot observers.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub level: u8,
    /// Finest-level field values, row-major with `i` fastest.
    pub flat: Vec<CellState>,
    pub leaves: Vec<LeafRecord>,
    pub eta: f64,
    /// Evolution time up to this snapshot, observers excluded.
    pub cpu_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub eps_r: Option<f64>,
    pub cpu_seconds: f64,
    pub t_end: f64,
    pub final_leaf_count: usize,
    pub final_eta: f64,
    pub stats: SolverStats,
}

/// Integrator used by each adaptive method; `mr_rkf` takes the scenario's controller
/// settings when present.
pub fn integrator_for(cfg: &ScenarioConfig, method: Method) -> Option<Integrator> {
    match method {
        Method::Fv => None,
        Method::Mr => Some(Integrator::Euler),
        Method::MrLts => Some(Integrator::Lts),
        Method::MrRkf => Some(match cfg.integrator {
            Integrator::Rkf(s) => Integrator::Rkf(s),
            _ => Integrator::Rkf(RkfSettings::new(1e-4)),
        }),
    }
}

/// The method a scenario selects through its `integrator` field.
pub fn default_method(cfg: &ScenarioConfig) -> Method {
    match cfg.integrator {
        Integrator::Euler => Method::Mr,
        Integrator::Lts => Method::MrLts,
        Integrator::Rkf(_) => Method::MrRkf,
    }
}

struct Stopwatch {
    start: Instant,
    excluded: Duration,
}

impl Stopwatch {
    fn new() -> Self {
        Self { start: Instant::now(), excluded: Duration::ZERO }
    }

    fn seconds(&self) -> f64 {
        (self.start.elapsed() - self.excluded).as_secs_f64()
    }

    fn exclude(&mut self, since: Instant) {
        self.excluded += since.elapsed();
    }
}

fn full_leaf_records(level: u8, grid: &GridSpec, flat: &[CellState]) -> Vec<LeafRecord> {
    let n = GridSpec::cells_per_side(level);
    let mut out = Vec::with_capacity(flat.len());
    for j in 0..n {
        for i in 0..n {
            let key = NodeKey::new(level, i, j);
            let (x, y) = grid.center(key);
            out.push(LeafRecord { key, center: [x, y], value: flat[(j * n + i) as usize] });
        }
    }
    out
}

/// Run the uniform finite-volume scheme at `level`.
pub fn run_fv(cfg: &ScenarioConfig, level: u8, observer: &mut dyn FnMut(&Snapshot) -> Result<()>) -> Result<RunSummary> {
    cfg.validate()?;
    let grid = GridSpec::new(cfg.grid.domain_size, level)?;
    let plan = cfg.run_plan()?;
    let mut solver = UniformSolver::new(grid, level, cfg.model.clone(), &cfg.initial)?;
    let n = grid.finest_cell_count();
    let eta = compression_rate(n, level, n);
    let mut watch = Stopwatch::new();
    let steps = run_uniform(&mut solver, &plan, &mut |t, s| {
        let pause = Instant::now();
        let cpu = watch.seconds();
        let snap = Snapshot { t, level, flat: s.values.clone(), leaves: full_leaf_records(level, &grid, &s.values), eta, cpu_seconds: cpu };
        let r = observer(&snap);
        watch.exclude(pause);
        r
    })?;
    Ok(RunSummary {
        method: Method::Fv,
        eps_r: None,
        cpu_seconds: watch.seconds(),
        t_end: solver.t,
        final_leaf_count: n,
        final_eta: eta,
        stats: SolverStats { steps, elliptic_iterations: solver.elliptic_iterations, ..Default::default() },
    })
}

/// Run one adaptive method of the scenario.
pub fn run_adaptive(cfg: &ScenarioConfig, method: Method, observer: &mut dyn FnMut(&Snapshot) -> Result<()>) -> Result<RunSummary> {
    cfg.validate()?;
    let integrator = integrator_for(cfg, method).ok_or_else(|| Error::Config("fv is not an adaptive method".into()))?;
    let grid = cfg.grid_spec()?;
    let mr = cfg.mr_config()?;
    let plan = cfg.run_plan()?;
    let big_l = grid.max_level;
    let n = grid.finest_cell_count();
    let mut watch = Stopwatch::new();
    let mut solver = MrSolver::new(grid, mr, cfg.model.clone(), &cfg.initial)?;
    run_mr(&mut solver, &integrator, &plan, &mut |t, s| {
        let pause = Instant::now();
        let cpu = watch.seconds();
        let flat = s.flatten();
        let snap = Snapshot {
            t,
            level: big_l,
            flat,
            leaves: leaf_records(&s.tree),
            eta: compression_rate(n, big_l, s.leaf_count()),
            cpu_seconds: cpu,
        };
        let r = observer(&snap);
        watch.exclude(pause);
        r
    })?;
    Ok(RunSummary {
        method,
        eps_r: Some(mr.eps_r),
        cpu_seconds: watch.seconds(),
        t_end: solver.t,
        final_leaf_count: solver.leaf_count(),
        final_eta: compression_rate(n, big_l, solver.leaf_count()),
        stats: solver.stats,
    })
}

pub fn run_method(cfg: &ScenarioConfig, method: Method, observer: &mut dyn FnMut(&Snapshot) -> Result<()>) -> Result<RunSummary> {
    match method {
        Method::Fv => run_fv(cfg, cfg.grid.max_level, observer),
        _ => run_adaptive(cfg, method, observer),
    }
}

/// One metrics row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: f64,
    pub eta: f64,
    pub speedup: Option<f64>,
    pub leaf_count: usize,
    pub cpu_seconds: f64,
    pub errors: Option<FieldErrors>,
}

pub const METRICS_HEADER: &str = "t,eta,V,e1_v,e2_v,einf_v,e1_ue,e2_ue,einf_ue";

impl MetricsRow {
    /// CSV line matching [`METRICS_HEADER`]; absent values are empty.
    pub fn csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        let e = self.errors;
        let v = e.map(|e| e.v);
        let ue = e.and_then(|e| e.ue);
        format!(
            "{:e},{:e},{},{},{},{},{},{},{}",
            self.t,
            self.eta,
            opt(self.speedup),
            opt(v.map(|r| r.e1)),
            opt(v.map(|r| r.e2)),
            opt(v.map(|r| r.e_inf)),
            opt(ue.map(|r| r.e1)),
            opt(ue.map(|r| r.e2)),
            opt(ue.map(|r| r.e_inf)),
        )
    }
}

/// Reference snapshots on the uniform grid of `cfg.reference_level()`.
#[derive(Debug, Clone)]
pub struct Reference {
    pub level: u8,
    pub snapshots: Vec<(f64, Vec<CellState>)>,
    pub cpu_seconds: f64,
}

impl Reference {
    pub fn compute(cfg: &ScenarioConfig) -> Result<Self> {
        let level = cfg.reference_level();
        let mut snapshots = Vec::new();
        let s = run_fv(cfg, level, &mut |snap| {
            snapshots.push((snap.t, snap.flat.clone()));
            Ok(())
        })?;
        Ok(Self { level, snapshots, cpu_seconds: s.cpu_seconds })
    }

    pub fn at(&self, t: f64) -> Option<&[CellState]> {
        self.snapshots.iter().find(|(s, _)| (s - t).abs() <= crate::timeint::TIME_EPS).map(|(_, v)| v.as_slice())
    }

    pub fn errors(&self, snap: &Snapshot, with_ue: bool) -> Result<FieldErrors> {
        let reference = self.at(snap.t).ok_or_else(|| Error::Resolution(format!("no reference snapshot at t = {}", snap.t)))?;
        let keys: Vec<NodeKey> = snap.leaves.iter().map(|r| r.key).collect();
        let values: Vec<CellState> = snap.leaves.iter().map(|r| r.value).collect();
        field_errors(&keys, &values, reference, self.level, with_ue)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub summary: RunSummary,
    pub rows: Vec<MetricsRow>,
    /// Final finest-level state.
    pub final_flat: Vec<CellState>,
}

/// Run every method and score it against the fine reference. Speed-ups are relative to
/// the `fv` run when it is among the methods.
pub fn compare(
    cfg: &ScenarioConfig,
    methods: &[Method],
    reference: &Reference,
    on_snapshot: &mut dyn FnMut(Method, &Snapshot) -> Result<()>,
) -> Result<Vec<MethodReport>> {
    let with_ue = cfg.model.is_bidomain();
    let mut reports: Vec<MethodReport> = Vec::new();
    let mut order: Vec<Method> = methods.to_vec();
    // the uniform run goes first so its timings are available for the speed-ups
    order.sort_by_key(|m| *m != Method::Fv);
    order.dedup();
    let mut fv_cpu: Vec<(f64, f64)> = Vec::new();
    for m in order {
        let mut rows = Vec::new();
        let mut final_flat = Vec::new();
        let summary = run_method(cfg, m, &mut |snap| {
            let errors = reference.errors(snap, with_ue)?;
            let fv = match m {
                Method::Fv => Some(snap.cpu_seconds),
                _ => fv_cpu.iter().find(|(t, _)| (t - snap.t).abs() <= crate::timeint::TIME_EPS).map(|(_, c)| *c),
            };
            rows.push(MetricsRow {
                t: snap.t,
                eta: snap.eta,
                speedup: speedup(fv, Some(snap.cpu_seconds)),
                leaf_count: snap.leaves.len(),
                cpu_seconds: snap.cpu_seconds,
                errors: Some(errors),
            });
            final_flat = snap.flat.clone();
            on_snapshot(m, snap)
        })?;
        if m == Method::Fv {
            fv_cpu = rows.iter().map(|r| (r.t, r.cpu_seconds)).collect();
        }
        reports.push(MethodReport { summary, rows, final_flat });
    }
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub c: f64,
    pub eps_r: f64,
    pub eta: f64,
    pub speedup: Option<f64>,
    pub e1_v: f64,
}

pub const CALIBRATION_HEADER: &str = "C,eps_R,eta,V,e1_v";

impl CalibrationRow {
    pub fn csv(&self) -> String {
        format!(
            "{:e},{:e},{:e},{},{:e}",
            self.c,
            self.eps_r,
            self.eta,
            self.speedup.map(|v| format!("{v:e}")).unwrap_or_default(),
            self.e1_v
        )
    }
}

/// Adaptive runs for each candidate `C`, scored at `t_end` against the reference and
/// timed against one uniform run at level `L`.
pub fn calibrate_c(cfg: &ScenarioConfig, candidates: &[f64], reference: &Reference) -> Result<Vec<CalibrationRow>> {
    if candidates.is_empty() || candidates.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::Config("calibration candidates must be positive".into()));
    }
    let mut end_cfg = cfg.clone();
    end_cfg.snapshot_times = vec![cfg.t_end];
    let alpha = match cfg.mr.tolerance {
        Tolerance::Calibrated { alpha, .. } => alpha,
        Tolerance::Fixed { .. } => 1.09,
    };
    let fv = run_fv(&end_cfg, cfg.grid.max_level, &mut |_| Ok(()))?;
    let method = default_method(cfg);
    let mut rows = Vec::new();
    for &c in candidates {
        let mut run_cfg = end_cfg.clone();
        run_cfg.mr.tolerance = Tolerance::Calibrated { c, alpha };
        let mut e1 = f64::NAN;
        let s = run_adaptive(&run_cfg, method, &mut |snap| {
            e1 = reference.errors(snap, false)?.v.e1;
            Ok(())
        })?;
        rows.push(CalibrationRow {
            c,
            eps_r: s.eps_r.unwrap_or(f64::NAN),
            eta: s.final_eta,
            speedup: speedup(Some(fv.cpu_seconds), Some(s.cpu_seconds)),
            e1_v: e1,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("rk4".parse::<Method>().is_err());
    }

    #[test]
    fn metrics_row_leaves_absent_values_empty() {
        let r = MetricsRow { t: 1.0, eta: 2.0, speedup: None, leaf_count: 4, cpu_seconds: 0.0, errors: None };
        assert_eq!(r.csv(), "1e0,2e0,,,,,,,");
        assert_eq!(METRICS_HEADER.split(',').count(), r.csv().split(',').count());
    }
}
