//! Local time stepping.
//!
//! A macro step consists of `2^L` intermediate steps of size `dt` (the finest
//! step). Leaves of level `l` advance with `dt_l = 2^{L-l} dt` and are active at
//! intermediate step `k` (1-based) iff `(k-1)` is a multiple of `2^{L-l}`. A face
//! is recomputed when the coarser of its two cells is active; otherwise the flux
//! cached at that cell's last activation is reused, so the fine side of a level
//! jump sees the same flux for both of its sub-steps and the exchange stays
//! conservative.

use rayon::prelude::*;

use super::{service, Clock, MrSolver, RunPlan};
use crate::error::{Error, Result};
use crate::mrtree::AdaptOptions;

/// Coarsest active level at intermediate step `k` (1-based).
#[inline]
pub fn coarsest_active_level(k: u64, max_level: u8) -> u8 {
    if k == 1 {
        0
    } else {
        max_level.saturating_sub((k - 1).trailing_zeros().min(max_level as u32) as u8)
    }
}

/// After intermediate step `k`, leaves of level `>=` this are synchronized.
#[inline]
pub fn synchronized_floor(k: u64, max_level: u8) -> u8 {
    max_level.saturating_sub(k.trailing_zeros().min(max_level as u32) as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LtsOptions {
    /// Adapt the tree at every instant where all leaves are synchronized.
    pub adapt: bool,
}

impl Default for LtsOptions {
    fn default() -> Self {
        Self { adapt: true }
    }
}

/// Advance `solver` by `2^L dt`.
pub fn lts_macro_step(solver: &mut MrSolver, dt: f64, t_end: Option<f64>, opts: LtsOptions) -> Result<()> {
    let big_l = solver.max_level();
    let n_steps: u64 = 1 << big_l;
    let t0 = solver.t;
    let mut cache: Vec<Option<f64>> = vec![None; solver.disc.mesh.faces.len()];
    let mut rebuilds = solver.stats.mesh_rebuilds;
    for k in 1..=n_steps {
        let lam = coarsest_active_level(k, big_l);
        let t_k = t0 + (k - 1) as f64 * dt;
        let disc = &solver.disc;
        let mesh = &disc.mesh;
        let active: Vec<bool> = mesh.levels.iter().map(|l| *l >= lam).collect();
        if active.iter().any(|a| *a) {
            let field: Vec<f64> = if disc.kernel.bidomain {
                solver.u.iter().map(|s| s.ue).collect()
            } else {
                solver.u.iter().map(|s| s.v).collect()
            };
            let g = disc.coeffs.parabolic;
            let fresh: Vec<Option<f64>> = mesh
                .faces
                .par_iter()
                .map(|f| {
                    let owner = mesh.levels[f.a as usize].min(mesh.levels[f.b as usize]);
                    (owner >= lam).then(|| mesh.face_flux(f, g, &field))
                })
                .collect();
            let mut acc = vec![0.0; mesh.len()];
            for (fi, f) in mesh.faces.iter().enumerate() {
                let (a, b) = (f.a as usize, f.b as usize);
                if !active[a] && !active[b] {
                    continue;
                }
                let flux = match fresh[fi] {
                    Some(x) => {
                        cache[fi] = Some(x);
                        x
                    }
                    None => cache[fi].ok_or_else(|| {
                        Error::Scheduling(format!("no cached flux for face {fi} at intermediate step {k}"))
                    })?,
                };
                acc[a] += flux;
                acc[b] -= flux;
            }
            let iapp = disc.i_app(t_k);
            let kernel = &disc.kernel;
            let areas = &mesh.areas;
            let levels = &mesh.levels;
            solver.u.par_iter_mut().enumerate().for_each(|(c, s)| {
                if active[c] {
                    let dt_l = dt * (1u64 << (big_l - levels[c])) as f64;
                    let r = kernel.rates(*s, acc[c] / areas[c], iapp[c]);
                    s.v += dt_l * r.v;
                    s.w += dt_l * r.w;
                }
            });
            solver.stats.steps += 1;
            solver.t = t0 + k as f64 * dt;
            solver.solve_elliptic()?;
            crate::mrtree::mesh::check_finite(&solver.u, solver.t)?;
        }
        solver.t = if k == n_steps { t_end.unwrap_or(t0 + n_steps as f64 * dt) } else { t0 + k as f64 * dt };
        let floor = synchronized_floor(k, big_l);
        let all_synced = solver.disc.mesh.levels.iter().all(|l| *l >= floor);
        if opts.adapt && all_synced {
            solver.adapt(&AdaptOptions { floor_level: floor, forced: Vec::new() });
            if solver.stats.mesh_rebuilds != rebuilds {
                rebuilds = solver.stats.mesh_rebuilds;
                cache = vec![None; solver.disc.mesh.faces.len()];
            }
        }
    }
    Ok(())
}

pub fn run(solver: &mut MrSolver, plan: &RunPlan, on_output: &mut dyn FnMut(f64, &mut MrSolver) -> Result<()>) -> Result<()> {
    let mut clock = Clock::new(plan.clone());
    let n_steps = (1u64 << solver.max_level()) as f64;
    while !service(&mut clock, solver, on_output)? {
        let dt = solver.cfl_dt()?;
        let (macro_dt, t_end) = clock.clamp(solver.t, dt * n_steps);
        lts_macro_step(solver, macro_dt / n_steps, t_end, LtsOptions::default())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activity_pattern() {
        // L = 2: level 2 every step, level 1 at k = 1, 3, level 0 at k = 1
        let lam: Vec<u8> = (1..=4).map(|k| coarsest_active_level(k, 2)).collect();
        assert_eq!(lam, vec![0, 2, 1, 2]);
        let floors: Vec<u8> = (1..=4).map(|k| synchronized_floor(k, 2)).collect();
        assert_eq!(floors, vec![2, 1, 2, 0]);
    }
}
