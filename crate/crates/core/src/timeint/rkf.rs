//! Embedded RKF(3,2) pair with a limited step-size controller.
//!
//! Stages: `k1 = dt A(t, u)`, `k2 = dt A(t + dt, u + k1)`,
//! `k3 = dt A(t + dt/2, u + k1/4 + k2/4)`. The third-order solution
//! `u + (k1 + k2)/6 + 2 k3/3` is always accepted; its distance to the
//! second-order `u + (k1 + k2)/2` drives the next step size.

use serde::{Deserialize, Serialize};

use super::{service, Clock, MrSolver, RunPlan};
use crate::error::{Error, Result};
use crate::mrtree::mesh::Discretization;
use crate::mrtree::AdaptOptions;
use crate::elliptic::SolveOptions;
use crate::state::CellState;

/// Vector-space operations the integrator needs.
pub trait OdeVector: Clone {
    /// `self + sum c_i x_i`.
    fn combine(&self, terms: &[(f64, &Self)]) -> Self;
    /// `self * c`.
    fn scaled(&self, c: f64) -> Self;
    /// Max-norm of `self - other` over the components that carry the error estimate.
    fn error_norm(&self, other: &Self) -> f64;
}

impl OdeVector for f64 {
    fn combine(&self, terms: &[(f64, &Self)]) -> Self {
        terms.iter().fold(*self, |acc, (c, x)| acc + c * **x)
    }

    fn scaled(&self, c: f64) -> Self {
        self * c
    }

    fn error_norm(&self, other: &Self) -> f64 {
        (self - other).abs()
    }
}

impl OdeVector for Vec<f64> {
    fn combine(&self, terms: &[(f64, &Self)]) -> Self {
        let mut out = self.clone();
        for (c, x) in terms {
            for (o, xi) in out.iter_mut().zip(x.iter()) {
                *o += c * xi;
            }
        }
        out
    }

    fn scaled(&self, c: f64) -> Self {
        self.iter().map(|x| x * c).collect()
    }

    fn error_norm(&self, other: &Self) -> f64 {
        self.iter().zip(other).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// `u_e` is an algebraic unknown recomputed after each stage, so the error
/// estimate uses `v` and `w` only.
impl OdeVector for Vec<CellState> {
    fn combine(&self, terms: &[(f64, &Self)]) -> Self {
        let mut out = self.clone();
        for (c, x) in terms {
            for (o, xi) in out.iter_mut().zip(x.iter()) {
                o.v += c * xi.v;
                o.w += c * xi.w;
            }
        }
        out
    }

    fn scaled(&self, c: f64) -> Self {
        self.iter().map(|s| CellState::new(s.v * c, 0.0, s.w * c)).collect()
    }

    fn error_norm(&self, other: &Self) -> f64 {
        self.iter()
            .zip(other)
            .map(|(a, b)| (a.v - b.v).abs().max((a.w - b.w).abs()))
            .fold(0.0, f64::max)
    }
}

pub trait OdeSystem {
    type State: OdeVector;
    fn rhs(&self, t: f64, u: &Self::State) -> Result<Self::State>;
    /// Enforce algebraic constraints on a stage state (the elliptic solve).
    fn constrain(&self, _t: f64, _u: &mut Self::State) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RkfOutcome<T> {
    pub kappas: [T; 3],
    /// Accepted third-order solution.
    pub high: T,
    /// Embedded second-order solution.
    pub low: T,
    pub delta: f64,
}

pub fn rkf32_step<S: OdeSystem>(sys: &S, t: f64, u: &S::State, dt: f64) -> Result<RkfOutcome<S::State>> {
    let k1 = sys.rhs(t, u)?.scaled(dt);
    let mut u2 = u.combine(&[(1.0, &k1)]);
    sys.constrain(t + dt, &mut u2)?;
    let k2 = sys.rhs(t + dt, &u2)?.scaled(dt);
    let mut u3 = u.combine(&[(0.25, &k1), (0.25, &k2)]);
    sys.constrain(t + 0.5 * dt, &mut u3)?;
    let k3 = sys.rhs(t + 0.5 * dt, &u3)?.scaled(dt);
    let mut high = u.combine(&[(1.0 / 6.0, &k1), (1.0 / 6.0, &k2), (2.0 / 3.0, &k3)]);
    let low = u.combine(&[(0.5, &k1), (0.5, &k2)]);
    let delta = high.error_norm(&low);
    sys.constrain(t + dt, &mut high)?;
    Ok(RkfOutcome { kappas: [k1, k2, k3], high, low, delta })
}

fn default_s0() -> f64 {
    0.1
}

fn default_s_min() -> f64 {
    0.01
}

fn default_order() -> u32 {
    3
}

fn default_max_cfl_ratio() -> Option<f64> {
    None
}

/// Controller parameters as they appear in a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RkfSettings {
    pub delta_desired: f64,
    #[serde(default = "default_s0")]
    pub s0: f64,
    #[serde(default = "default_s_min")]
    pub s_min: f64,
    #[serde(default = "default_order")]
    pub order: u32,
    /// Use the printed limiter branch, which always enlarges the step when the change is
    /// too large.
    #[serde(default)]
    pub literal_limiter: bool,
    /// Optional upper bound on the step as a multiple of the explicit-Euler stability
    /// bound. Off by default: the controller alone chooses the step.
    #[serde(default = "default_max_cfl_ratio")]
    pub max_cfl_ratio: Option<f64>,
}

impl RkfSettings {
    pub fn new(delta_desired: f64) -> Self {
        Self {
            delta_desired,
            s0: default_s0(),
            s_min: default_s_min(),
            order: default_order(),
            literal_limiter: false,
            max_cfl_ratio: default_max_cfl_ratio(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_desired > 0.0) || !(self.s_min > 0.0) || !(self.s_min <= self.s0) || self.order == 0 {
            return Err(Error::Config(format!("invalid RKF controller settings {self:?}")));
        }
        if let Some(r) = self.max_cfl_ratio {
            if !(r > 0.0) {
                return Err(Error::Config("max_cfl_ratio must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkfController {
    pub settings: RkfSettings,
    pub dt: f64,
}

impl RkfController {
    pub fn new(settings: RkfSettings, dt: f64) -> Self {
        Self { settings, dt }
    }

    /// `S(t) = (S0 - S_min) exp(-t / dt) + S_min`.
    pub fn limiter(&self, t: f64) -> f64 {
        let s = &self.settings;
        (s.s0 - s.s_min) * (-t / self.dt).exp() + s.s_min
    }

    pub fn update(&mut self, delta_old: f64, t: f64) -> f64 {
        self.dt = dt_update(delta_old, self, t);
        self.dt
    }
}

/// Next step size from the error estimate of the step just taken.
pub fn dt_update(delta_old: f64, controller: &RkfController, t: f64) -> f64 {
    let s = &controller.settings;
    let dt = controller.dt;
    let half_s = 0.5 * controller.limiter(t);
    let candidate = if delta_old > 0.0 {
        dt * (s.delta_desired / delta_old).powf(1.0 / s.order as f64)
    } else {
        f64::INFINITY
    };
    if (candidate - dt).abs() / dt <= half_s {
        candidate
    } else if s.literal_limiter {
        dt * (1.0 + half_s)
    } else {
        dt * (1.0 + (candidate - dt).signum() * half_s)
    }
}

/// The discretized operator on a fixed mesh as an ODE system.
pub struct MeshSystem<'a> {
    pub disc: &'a Discretization,
    pub opts: SolveOptions,
    pub iterations: std::cell::Cell<usize>,
}

impl OdeSystem for MeshSystem<'_> {
    type State = Vec<CellState>;

    fn rhs(&self, t: f64, u: &Self::State) -> Result<Self::State> {
        Ok(self.disc.rates(u, t))
    }

    fn constrain(&self, t: f64, u: &mut Self::State) -> Result<()> {
        let it = self.disc.solve_elliptic(u, t, self.opts)?;
        self.iterations.set(self.iterations.get() + it);
        Ok(())
    }
}

/// One accepted RKF step of `dt` on the current mesh followed by adaptation.
/// Returns the error estimate.
pub fn rkf_step(solver: &mut MrSolver, dt: f64, t_next: Option<f64>) -> Result<f64> {
    let sys = MeshSystem { disc: &solver.disc, opts: solver.solve_options, iterations: std::cell::Cell::new(0) };
    let out = rkf32_step(&sys, solver.t, &solver.u, dt)?;
    solver.stats.elliptic_iterations += sys.iterations.get();
    crate::mrtree::mesh::check_finite(&out.high, solver.t + dt)?;
    solver.u = out.high;
    solver.stats.steps += 1;
    solver.t = t_next.unwrap_or(solver.t + dt);
    solver.adapt(&AdaptOptions::default());
    Ok(out.delta)
}

pub fn run(
    solver: &mut MrSolver,
    settings: RkfSettings,
    plan: &RunPlan,
    on_output: &mut dyn FnMut(f64, &mut MrSolver) -> Result<()>,
) -> Result<()> {
    settings.validate()?;
    let mut clock = Clock::new(plan.clone());
    let mut controller: Option<RkfController> = None;
    while !service(&mut clock, solver, on_output)? {
        let cfl = solver.cfl_dt()?;
        let ctrl = controller.get_or_insert_with(|| RkfController::new(settings, 0.5 * cfl));
        let mut dt = ctrl.dt;
        if let Some(r) = settings.max_cfl_ratio {
            dt = dt.min(r * cfl);
        }
        let (step, t_next) = clock.clamp(solver.t, dt);
        let t_n = solver.t;
        let delta = rkf_step(solver, step, t_next)?;
        // steps shortened to hit an output or event time say nothing about the step size
        if t_next.is_none() {
            ctrl.dt = dt;
            ctrl.update(delta, t_n);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Growth;

    impl OdeSystem for Growth {
        type State = f64;
        fn rhs(&self, _t: f64, u: &f64) -> Result<f64> {
            Ok(*u)
        }
    }

    #[test]
    fn hand_computed_stages() {
        let o = rkf32_step(&Growth, 0.0, &1.0, 0.1).unwrap();
        assert!((o.kappas[0] - 0.1).abs() < 1e-15);
        assert!((o.kappas[1] - 0.11).abs() < 1e-15);
        assert!((o.kappas[2] - 0.10525).abs() < 1e-15);
        assert!((o.high - 1.105_166_666_666_666_7).abs() < 1e-15);
        assert!((o.low - 1.105).abs() < 1e-15);
        assert!((o.delta - 1.0 / 6000.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_states_are_fixed_points() {
        struct Zero;
        impl OdeSystem for Zero {
            type State = Vec<f64>;
            fn rhs(&self, _t: f64, u: &Vec<f64>) -> Result<Vec<f64>> {
                Ok(vec![0.0; u.len()])
            }
        }
        let o = rkf32_step(&Zero, 0.0, &vec![1.0, 2.0], 0.5).unwrap();
        assert_eq!(o.high, vec![1.0, 2.0]);
        assert_eq!(o.delta, 0.0);
    }

    #[test]
    fn controller_fixtures() {
        let c = RkfController::new(RkfSettings { delta_desired: 1e-4, ..RkfSettings::new(1e-4) }, 0.1);
        assert!((dt_update(1e-4, &c, 0.0) - 0.1).abs() < 1e-15);
        assert!((dt_update(1.0 / 6000.0, &c, 0.0) - 0.095).abs() < 1e-15);
        assert!((dt_update(0.0, &c, 0.0) - 0.105).abs() < 1e-15);
        let literal = RkfController::new(RkfSettings { literal_limiter: true, ..RkfSettings::new(1e-4) }, 0.1);
        assert!((dt_update(1.0 / 6000.0, &literal, 0.0) - 0.105).abs() < 1e-15);
        // limiter decays toward S_min
        assert!((c.limiter(1e3) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn third_order_convergence() {
        let mut errs = Vec::new();
        let hs = [0.1, 0.05, 0.025, 0.0125];
        for h in hs {
            let n = (1.0 / h) as usize;
            let mut u = 1.0;
            for i in 0..n {
                u = rkf32_step(&Growth, i as f64 * h, &u, h).unwrap().high;
            }
            errs.push((u - 1f64.exp()).abs());
        }
        let slope = crate::timeint::rkf::tests::fit_slope(&hs, &errs);
        assert!((slope - 3.0).abs() < 0.1, "slope {slope}");
    }

    pub(crate) fn fit_slope(h: &[f64], e: &[f64]) -> f64 {
        let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let num: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let den: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        num / den
    }
}
