//! Global explicit Euler: one step size for every leaf, adaptation after each step.

use super::{service, Clock, MrSolver, RunPlan};
use crate::error::Result;
use crate::fvcore::uniform::UniformSolver;
use crate::mrtree::AdaptOptions;

/// Gating and potential from the current state, then the elliptic solve, then
/// thresholding and refinement.
pub fn euler_step(solver: &mut MrSolver, dt: f64, t_next: Option<f64>) -> Result<()> {
    let it = solver.disc.euler_step(&mut solver.u, solver.t, dt, solver.solve_options)?;
    solver.stats.elliptic_iterations += it;
    solver.stats.steps += 1;
    solver.t = t_next.unwrap_or(solver.t + dt);
    solver.adapt(&AdaptOptions::default());
    Ok(())
}

pub fn run(solver: &mut MrSolver, plan: &RunPlan, on_output: &mut dyn FnMut(f64, &mut MrSolver) -> Result<()>) -> Result<()> {
    let mut clock = Clock::new(plan.clone());
    while !service(&mut clock, solver, on_output)? {
        let (dt, t_next) = clock.clamp(solver.t, solver.cfl_dt()?);
        euler_step(solver, dt, t_next)?;
    }
    Ok(())
}

/// The uniform reference run, driven by the same clock.
pub fn run_uniform(
    solver: &mut UniformSolver,
    plan: &RunPlan,
    on_output: &mut dyn FnMut(f64, &mut UniformSolver) -> Result<()>,
) -> Result<usize> {
    let mut clock = Clock::new(plan.clone());
    let mut steps = 0;
    loop {
        for e in clock.due_events(solver.t) {
            solver.apply_stimulus(&e);
        }
        for o in clock.due_outputs(solver.t) {
            on_output(o, solver)?;
        }
        if clock.finished(solver.t) {
            return Ok(steps);
        }
        let (dt, t_next) = clock.clamp(solver.t, solver.cfl_dt()?);
        solver.euler_step(dt)?;
        if let Some(t) = t_next {
            solver.t = t;
        }
        steps += 1;
    }
}
