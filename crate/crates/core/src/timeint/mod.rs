//! Time integration on the adaptive mesh: global explicit Euler, local time
//! stepping and the embedded RKF(3,2) pair, plus the run loop that applies
//! stimuli and emits snapshots.

pub mod euler;
pub mod lts;
pub mod rkf;

use serde::{Deserialize, Serialize};

use crate::elliptic::SolveOptions;
use crate::error::{Error, Result};
use crate::fvcore::{cfl_dt, InitialCondition, StimulusEvent};
use crate::grid::GridSpec;
use crate::model::ModelSpec;
use crate::mrtree::mesh::Discretization;
use crate::mrtree::{AdaptOptions, AdaptReport, MrConfig, Tree};
use crate::state::CellState;

pub use rkf::{dt_update, rkf32_step, OdeSystem, OdeVector, RkfController, RkfOutcome};

/// Times closer than this (ms) are treated as equal.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub steps: usize,
    pub elliptic_iterations: usize,
    pub adaptations: usize,
    pub mesh_rebuilds: usize,
}

/// State of an adaptive run: the tree, the discretization on its leaves and the
/// leaf values in mesh order.
#[derive(Debug, Clone)]
pub struct MrSolver {
    pub tree: Tree,
    pub disc: Discretization,
    pub u: Vec<CellState>,
    pub model: ModelSpec,
    pub t: f64,
    pub solve_options: SolveOptions,
    pub stats: SolverStats,
}

impl MrSolver {
    pub fn new(grid: GridSpec, mr: MrConfig, model: ModelSpec, ic: &InitialCondition) -> Result<Self> {
        model.validate()?;
        mr.validate()?;
        ic.validate()?;
        let tree = Tree::initial(grid, mr, model.fields(), ic);
        Ok(Self::from_tree(tree, model))
    }

    pub fn from_tree(tree: Tree, model: ModelSpec) -> Self {
        let disc = Discretization::new(&tree, &model);
        let u = disc.mesh.keys.iter().map(|k| tree.value(*k).unwrap()).collect();
        Self { tree, disc, u, model, t: 0.0, solve_options: SolveOptions::default(), stats: SolverStats::default() }
    }

    pub fn max_level(&self) -> u8 {
        self.tree.max_level()
    }

    pub fn leaf_count(&self) -> usize {
        self.u.len()
    }

    /// Write the leaf values back into the tree and refresh the internal averages.
    pub fn sync_tree(&mut self) {
        self.tree.set_leaf_values(&self.disc.mesh.keys, &self.u);
        self.tree.project();
    }

    fn reload(&mut self, changed: bool) {
        if changed {
            self.disc = Discretization::new(&self.tree, &self.model);
            self.stats.mesh_rebuilds += 1;
        }
        self.u = self.disc.mesh.keys.iter().map(|k| self.tree.value(*k).unwrap()).collect();
    }

    pub fn adapt(&mut self, opts: &AdaptOptions) -> AdaptReport {
        self.sync_tree();
        let rep = self.tree.adapt(opts);
        self.stats.adaptations += 1;
        self.reload(rep.changed);
        rep
    }

    pub fn apply_stimulus(&mut self, event: &StimulusEvent) -> AdaptReport {
        self.sync_tree();
        let rep = self.tree.apply_stimulus(event);
        self.reload(rep.changed);
        rep
    }

    /// Explicit-Euler stability bound at the finest mesh size.
    pub fn cfl_dt(&self) -> Result<f64> {
        let h = self.tree.grid().h(self.max_level());
        cfl_dt(h, self.disc.max_current(&self.u, self.t), self.model.tensor_norm_sum())
    }

    pub fn solve_elliptic(&mut self) -> Result<()> {
        let it = self.disc.solve_elliptic(&mut self.u, self.t, self.solve_options)?;
        self.stats.elliptic_iterations += it;
        Ok(())
    }

    /// Finest-level reconstruction of the current state.
    pub fn flatten(&mut self) -> Vec<CellState> {
        self.sync_tree();
        self.tree.flatten()
    }
}

/// What happens when during a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunPlan {
    pub t_end: f64,
    pub events: Vec<StimulusEvent>,
    pub outputs: Vec<f64>,
}

impl RunPlan {
    pub fn new(t_end: f64, mut events: Vec<StimulusEvent>, mut outputs: Vec<f64>) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::Config(format!("t_end must be positive, got {t_end}")));
        }
        for e in &events {
            e.validate()?;
        }
        if outputs.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > t_end + TIME_EPS) {
            return Err(Error::Config("snapshot times must lie in [0, t_end]".into()));
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        outputs.sort_by(f64::total_cmp);
        outputs.dedup_by(|a, b| (*a - *b).abs() <= TIME_EPS);
        Ok(Self { t_end, events, outputs })
    }

    /// Instants the step size must land on exactly.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .events
            .iter()
            .map(|e| e.time)
            .chain(self.outputs.iter().copied())
            .filter(|t| *t > 0.0 && *t < self.t_end)
            .chain(std::iter::once(self.t_end))
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup_by(|a, b| (*a - *b).abs() <= TIME_EPS);
        b
    }
}

/// Bookkeeping shared by all run loops: due events, due outputs, next breakpoint.
#[derive(Debug, Clone)]
pub struct Clock {
    plan: RunPlan,
    breakpoints: Vec<f64>,
    next_event: usize,
    next_output: usize,
}

impl Clock {
    pub fn new(plan: RunPlan) -> Self {
        Self { breakpoints: plan.breakpoints(), plan, next_event: 0, next_output: 0 }
    }

    pub fn plan(&self) -> &RunPlan {
        &self.plan
    }

    /// Events with `time <= t`, each returned once.
    pub fn due_events(&mut self, t: f64) -> Vec<StimulusEvent> {
        let mut out = Vec::new();
        while let Some(e) = self.plan.events.get(self.next_event) {
            if e.time > t + TIME_EPS {
                break;
            }
            out.push(*e);
            self.next_event += 1;
        }
        out
    }

    /// Number of snapshot times `<= t` not yet reported.
    pub fn due_outputs(&mut self, t: f64) -> Vec<f64> {
        let mut out = Vec::new();
        while let Some(o) = self.plan.outputs.get(self.next_output) {
            if *o > t + TIME_EPS {
                break;
            }
            out.push(*o);
            self.next_output += 1;
        }
        out
    }

    pub fn finished(&self, t: f64) -> bool {
        t >= self.plan.t_end - TIME_EPS
    }

    /// First breakpoint strictly after `t`.
    pub fn next_breakpoint(&self, t: f64) -> f64 {
        self.breakpoints.iter().copied().find(|b| *b > t + TIME_EPS).unwrap_or(self.plan.t_end)
    }

    /// Shrink `dt` so that `t + dt` does not pass the next breakpoint. Returns the step
    /// and the exact end time to use when the step was clamped.
    pub fn clamp(&self, t: f64, dt: f64) -> (f64, Option<f64>) {
        let bp = self.next_breakpoint(t);
        if t + dt >= bp - TIME_EPS {
            (bp - t, Some(bp))
        } else {
            (dt, None)
        }
    }
}

/// Time-integration strategy of an adaptive run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Lts,
    Rkf(rkf::RkfSettings),
}

/// Run an adaptive solver to `plan.t_end`, calling `on_output` at every snapshot time.
pub fn run_mr(
    solver: &mut MrSolver,
    integrator: &Integrator,
    plan: &RunPlan,
    on_output: &mut dyn FnMut(f64, &mut MrSolver) -> Result<()>,
) -> Result<()> {
    match integrator {
        Integrator::Euler => euler::run(solver, plan, on_output),
        Integrator::Lts => lts::run(solver, plan, on_output),
        Integrator::Rkf(settings) => rkf::run(solver, *settings, plan, on_output),
    }
}

/// Apply due events and report due snapshots. Returns `true` once the run is over.
pub(crate) fn service(
    clock: &mut Clock,
    solver: &mut MrSolver,
    on_output: &mut dyn FnMut(f64, &mut MrSolver) -> Result<()>,
) -> Result<bool> {
    for e in clock.due_events(solver.t) {
        solver.apply_stimulus(&e);
    }
    for o in clock.due_outputs(solver.t) {
        on_output(o, solver)?;
    }
    Ok(clock.finished(solver.t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::Field;

    fn ev(time: f64) -> StimulusEvent {
        StimulusEvent { time, center: [0.0, 0.0], radius_sq: 1.0, amplitude: 1.0, target: Field::V }
    }

    #[test]
    fn breakpoints_are_sorted_and_unique() {
        let p = RunPlan::new(2.0, vec![ev(1.0), ev(0.0), ev(1.0)], vec![2.0, 0.5, 0.5]).unwrap();
        assert_eq!(p.breakpoints(), vec![0.5, 1.0, 2.0]);
        assert!(RunPlan::new(0.0, vec![], vec![]).is_err());
        assert!(RunPlan::new(1.0, vec![], vec![3.0]).is_err());
    }

    #[test]
    fn clock_clamps_to_breakpoints() {
        let mut c = Clock::new(RunPlan::new(2.0, vec![ev(1.0)], vec![0.5]).unwrap());
        assert_eq!(c.clamp(0.0, 0.3), (0.3, None));
        assert_eq!(c.clamp(0.4, 0.3), (0.09999999999999998, Some(0.5)));
        assert_eq!(c.due_events(0.99), vec![]);
        assert_eq!(c.due_events(1.0).len(), 1);
        assert_eq!(c.due_events(1.5).len(), 0);
        assert_eq!(c.due_outputs(0.5), vec![0.5]);
        assert!(!c.finished(1.9) && c.finished(2.0));
    }
}
