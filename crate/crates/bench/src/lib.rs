//! Shared fixtures for the benchmarks.

use cardiomr_core::{MrSolver, ScenarioConfig, Tree};

/// Example 1 at a reduced level with its initial adaptive tree.
pub fn example1_tree(level: u8, eps_r: f64) -> Tree {
    let cfg = ScenarioConfig::preset("example1").expect("preset").with_level(level).with_eps(eps_r);
    let grid = cfg.grid_spec().expect("grid");
    Tree::initial(grid, cfg.mr_config().expect("mr config"), cfg.model.fields(), &cfg.initial)
}

/// Adaptive solver for a preset, resized to `level`.
pub fn solver(preset: &str, level: u8) -> MrSolver {
    let cfg = ScenarioConfig::preset(preset).expect("preset").with_level(level);
    let mut s = MrSolver::new(cfg.grid_spec().expect("grid"), cfg.mr_config().expect("mr config"), cfg.model, &cfg.initial)
        .expect("solver");
    for e in cfg.stimuli.iter().filter(|e| e.time == 0.0) {
        s.apply_stimulus(e);
    }
    s
}
