//! Reference finite-volume solver on the uniform level-`L` grid.
//!
//! Independent of the tree machinery: neighbors are found by index
//! arithmetic and the elliptic operator is the plain 5-point stencil.

use rayon::prelude::*;

use super::{applied_current, apply_stimulus, cfl_dt, init_cell_averages, Coefficients, InitialCondition, PointKernel, StimulusEvent};
use crate::elliptic::{solve_zero_mean, uniform_operator, EllipticSystem, SolveOptions};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::ModelSpec;
use crate::state::CellState;

#[derive(Debug, Clone)]
pub struct UniformSolver {
    pub grid: GridSpec,
    pub level: u8,
    pub n: usize,
    pub model: ModelSpec,
    pub values: Vec<CellState>,
    pub t: f64,
    kernel: PointKernel,
    coeffs: Coefficients,
    elliptic: Option<EllipticSystem>,
    pub solve_options: SolveOptions,
    pub elliptic_iterations: usize,
}

impl UniformSolver {
    pub fn new(grid: GridSpec, level: u8, model: ModelSpec, ic: &InitialCondition) -> Result<Self> {
        model.validate()?;
        let n = GridSpec::cells_per_side(level) as usize;
        let coeffs = Coefficients::new(&model);
        let elliptic = model.is_bidomain().then(|| {
            let area = grid.area(level);
            EllipticSystem::new(uniform_operator(n, coeffs.total), uniform_operator(n, coeffs.intra), vec![area; n * n])
        });
        Ok(Self {
            grid,
            level,
            n,
            kernel: PointKernel::new(&model),
            coeffs,
            elliptic,
            model,
            values: init_cell_averages(ic, &grid, level),
            t: 0.0,
            solve_options: SolveOptions::default(),
            elliptic_iterations: 0,
        })
    }

    pub fn h(&self) -> f64 {
        self.grid.h(self.level)
    }

    fn center(&self, k: usize) -> (f64, f64) {
        let h = self.h();
        (((k % self.n) as f64 + 0.5) * h, ((k / self.n) as f64 + 0.5) * h)
    }

    fn i_app(&self, t: f64) -> Vec<f64> {
        if self.model.applied_currents.is_empty() {
            return vec![0.0; self.values.len()];
        }
        (0..self.values.len())
            .map(|k| {
                let (x, y) = self.center(k);
                applied_current(&self.model, x, y, t)
            })
            .collect()
    }

    /// `max_K (|I_ion| + |I_app|)` at the current state.
    pub fn max_current(&self) -> f64 {
        let iapp = self.i_app(self.t);
        self.values
            .par_iter()
            .zip(iapp.par_iter())
            .map(|(s, a)| self.kernel.current_magnitude(*s, *a))
            .reduce(|| 0.0, f64::max)
    }

    pub fn cfl_dt(&self) -> Result<f64> {
        cfl_dt(self.h(), self.max_current(), self.model.tensor_norm_sum())
    }

    /// `(1/|K|) sum_L g (u_L - u_K)` for one field selected by `get`.
    fn diffusion(&self, g: [f64; 2], get: impl Fn(&CellState) -> f64 + Sync) -> Vec<f64> {
        let n = self.n;
        let inv_area = 1.0 / self.grid.area(self.level);
        let vals = &self.values;
        (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k % n, k / n);
                let u = get(&vals[k]);
                let mut s = 0.0;
                if i > 0 {
                    s += g[0] * (get(&vals[k - 1]) - u);
                }
                if i + 1 < n {
                    s += g[0] * (get(&vals[k + 1]) - u);
                }
                if j > 0 {
                    s += g[1] * (get(&vals[k - n]) - u);
                }
                if j + 1 < n {
                    s += g[1] * (get(&vals[k + n]) - u);
                }
                s * inv_area
            })
            .collect()
    }

    /// One explicit Euler step: gating, potential, then the elliptic solve.
    pub fn euler_step(&mut self, dt: f64) -> Result<()> {
        let diff = if self.model.is_bidomain() {
            self.diffusion(self.coeffs.parabolic, |s| s.ue)
        } else {
            self.diffusion(self.coeffs.parabolic, |s| s.v)
        };
        let iapp = self.i_app(self.t);
        let kernel = &self.kernel;
        self.values.par_iter_mut().enumerate().for_each(|(k, s)| {
            let r = kernel.rates(*s, diff[k], iapp[k]);
            s.v += dt * r.v;
            s.w += dt * r.w;
        });
        self.t += dt;
        if self.model.is_bidomain() {
            self.solve_elliptic()?;
        }
        self.check_finite()
    }

    pub fn solve_elliptic(&mut self) -> Result<()> {
        let sys = self.elliptic.as_ref().expect("bidomain solver has an elliptic system");
        let v: Vec<f64> = self.values.iter().map(|s| s.v).collect();
        let ue: Vec<f64> = self.values.iter().map(|s| s.ue).collect();
        let rhs = sys.rhs(&v, &self.i_app(self.t));
        let rep = solve_zero_mean(sys, &rhs, Some(&ue), self.solve_options)?;
        self.elliptic_iterations += rep.iterations;
        for (s, u) in self.values.iter_mut().zip(rep.solution) {
            s.ue = u;
        }
        Ok(())
    }

    pub fn apply_stimulus(&mut self, event: &StimulusEvent) {
        apply_stimulus(&mut self.values, &self.grid, self.level, event);
    }

    fn check_finite(&self) -> Result<()> {
        for s in &self.values {
            if !s.is_finite() {
                let field = if !s.v.is_finite() {
                    "v"
                } else if !s.ue.is_finite() {
                    "u_e"
                } else {
                    "w"
                };
                return Err(Error::NonFinite { field, time: self.t });
            }
        }
        Ok(())
    }

    /// `sum |K| v_K`.
    pub fn total_v(&self) -> f64 {
        self.values.iter().map(|s| s.v).sum::<f64>() * self.grid.area(self.level)
    }
}
