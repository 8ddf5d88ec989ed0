//! Cartesian finite-volume kernels: edge coefficients, fluxes, pointwise
//! marching formulas, the CFL bound, initial averaging and stimuli.

pub mod uniform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, GridSpec};
use crate::kinetics::{Kinetics, Tensor2};
use crate::model::ModelSpec;
use crate::state::{CellState, Field};

/// Two-point flux data for one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeCoeff {
    pub d_star: f64,
    pub edge_length: f64,
    pub center_distance: f64,
}

impl EdgeCoeff {
    /// `d* |sigma| / d(K,L)`.
    #[inline]
    pub fn transmissibility(&self) -> f64 {
        self.d_star * self.edge_length / self.center_distance
    }
}

/// Edge coefficient between two cells of width `h` sharing a face normal to `axis`.
pub fn edge_coeff(m_left: &Tensor2, m_right: &Tensor2, axis: Axis, h: f64) -> EdgeCoeff {
    edge_coeff_general(m_left, m_right, axis.unit(), 0.5 * h, 0.5 * h, h)
}

/// Distance-weighted harmonic combination
/// `d* = M_KL M_LK d(K,L) / (M_KL d_L + M_LK d_K)` with `M_KL = |M_K eta|`,
/// where `d_K`, `d_L` are the center-to-edge distances.
pub fn edge_coeff_general(
    m_left: &Tensor2,
    m_right: &Tensor2,
    normal: [f64; 2],
    d_left: f64,
    d_right: f64,
    edge_length: f64,
) -> EdgeCoeff {
    let mk = m_left.normal_norm(normal);
    let ml = m_right.normal_norm(normal);
    let dist = d_left + d_right;
    let denom = mk * d_right + ml * d_left;
    let d_star = if denom > 0.0 { mk * ml * dist / denom } else { 0.0 };
    EdgeCoeff { d_star, edge_length, center_distance: dist }
}

/// `F = d* |sigma|/d (u_right - u_left)`.
#[inline]
pub fn diffusive_flux(u_left: f64, u_right: f64, coeff: &EdgeCoeff) -> f64 {
    coeff.transmissibility() * (u_right - u_left)
}

/// Transmissibilities of a constant tensor on square cells, indexed by axis.
/// The ratio `|sigma|/d` is one, so the value does not depend on the level.
pub fn axis_transmissibility(m: &Tensor2) -> [f64; 2] {
    [
        edge_coeff(m, m, Axis::X, 1.0).transmissibility(),
        edge_coeff(m, m, Axis::Y, 1.0).transmissibility(),
    ]
}

/// `dt = h / (2 max(|I_ion| + |I_app|) + 4 max(|M_i| + |M_e|) / h)`.
pub fn cfl_dt(h: f64, max_current: f64, max_tensor: f64) -> Result<f64> {
    let denom = 2.0 * max_current + 4.0 * max_tensor / h;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::Degenerate(format!(
            "CFL bound undefined: current max {max_current}, tensor max {max_tensor}"
        )));
    }
    Ok(h / denom)
}

/// `w^{n+1} = w^n + dt H(v^n, w^n)`.
#[inline]
pub fn gating_step(v: f64, w: f64, dt: f64, kinetics: &Kinetics, c_m: f64) -> f64 {
    w + dt * kinetics.rates(v, w, c_m).0
}

/// Bidomain potential update. `flux_e` is `(1/|K|) sum_L d*_e |sigma|/d (u_e,L - u_e,K)`.
#[inline]
pub fn parabolic_step_bidomain(v: f64, flux_e: f64, i_ion: f64, i_app: f64, dt: f64, beta: f64, c_m: f64) -> f64 {
    v + dt / (beta * c_m) * (-flux_e - beta * i_ion + i_app)
}

/// Monodomain potential update. `flux_v` is `(1/|K|) sum_L d* |sigma|/d (v_L - v_K)` with the
/// monodomain tensor, `app_scale = lambda/(1+lambda)`.
#[inline]
#[allow(clippy::too_many_arguments)]
pub fn parabolic_step_monodomain(
    v: f64,
    flux_v: f64,
    i_ion: f64,
    i_app: f64,
    dt: f64,
    beta: f64,
    c_m: f64,
    app_scale: f64,
) -> f64 {
    v + dt / (beta * c_m) * (flux_v - beta * i_ion + app_scale * i_app)
}

/// Everything the pointwise part of the scheme needs, extracted once from a model.
#[derive(Debug, Clone)]
pub struct PointKernel {
    pub bidomain: bool,
    pub beta: f64,
    pub c_m: f64,
    pub app_scale: f64,
    pub kinetics: Kinetics,
}

impl PointKernel {
    pub fn new(model: &ModelSpec) -> Self {
        Self {
            bidomain: model.is_bidomain(),
            beta: model.constants.beta,
            c_m: model.constants.c_m,
            app_scale: if model.is_bidomain() { 1.0 } else { model.mono_source_scale() },
            kinetics: model.kinetics,
        }
    }

    /// Time derivative of `(v, w)` given the diffusion term of the potential equation
    /// (`flux_e` for bidomain, `flux_v` for monodomain, both per unit area).
    #[inline]
    pub fn rates(&self, s: CellState, diffusion: f64, i_app: f64) -> CellState {
        let (h, i_ion) = self.kinetics.rates(s.v, s.w, self.c_m);
        let drive = if self.bidomain {
            -diffusion - self.beta * i_ion + i_app
        } else {
            diffusion - self.beta * i_ion + self.app_scale * i_app
        };
        CellState::new(drive / (self.beta * self.c_m), 0.0, h)
    }

    #[inline]
    pub fn current_magnitude(&self, s: CellState, i_app: f64) -> f64 {
        self.kinetics.rates(s.v, s.w, self.c_m).1.abs() + i_app.abs()
    }
}

/// Transmissibilities of the tensors used by the scheme, per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    /// Tensor acting on the potential equation: monodomain `D`, bidomain `M_e`.
    pub parabolic: [f64; 2],
    /// `M_i` (bidomain only; zero otherwise).
    pub intra: [f64; 2],
    /// `M_i + M_e` edge-wise sum (bidomain only).
    pub total: [f64; 2],
}

impl Coefficients {
    pub fn new(model: &ModelSpec) -> Self {
        if let Some(me) = model.tensor_e().filter(|_| model.is_bidomain()) {
            let gi = axis_transmissibility(&model.tensor_i());
            let ge = axis_transmissibility(&me);
            Self { parabolic: ge, intra: gi, total: [gi[0] + ge[0], gi[1] + ge[1]] }
        } else {
            Self { parabolic: axis_transmissibility(&model.tensor_mono()), intra: [0.0; 2], total: [0.0; 2] }
        }
    }

    #[inline]
    pub fn axis_index(axis: Axis) -> usize {
        match axis {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

/// Sum of active disc currents at a point.
pub fn applied_current(model: &ModelSpec, x: f64, y: f64, t: f64) -> f64 {
    model
        .applied_currents
        .iter()
        .filter(|c| c.active(t))
        .filter(|c| {
            let dx = x - c.center[0];
            let dy = y - c.center[1];
            dx * dx + dy * dy < c.radius_sq
        })
        .map(|c| c.amplitude)
        .sum()
}

/// Initial data `(v0, u_e0, w0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialCondition {
    Uniform {
        #[serde(default)]
        v: f64,
        #[serde(default)]
        ue: f64,
        #[serde(default)]
        w: f64,
    },
    /// `v0 = 1 - 1/(1 + exp(-steepness (r - radius)))`, `r` the distance to the origin; `w0 = 0`.
    CornerSigmoid { steepness: f64, radius: f64 },
}

impl InitialCondition {
    pub const ZERO: InitialCondition = InitialCondition::Uniform { v: 0.0, ue: 0.0, w: 0.0 };

    pub fn eval(&self, x: f64, y: f64) -> CellState {
        match *self {
            InitialCondition::Uniform { v, ue, w } => CellState::new(v, ue, w),
            InitialCondition::CornerSigmoid { steepness, radius } => {
                let r = x.hypot(y);
                CellState::new(1.0 - 1.0 / (1.0 + (-steepness * (r - radius)).exp()), 0.0, 0.0)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            InitialCondition::Uniform { v, ue, w } => v.is_finite() && ue.is_finite() && w.is_finite(),
            InitialCondition::CornerSigmoid { steepness, radius } => steepness.is_finite() && radius.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config("initial condition parameters must be finite".into()))
        }
    }
}

/// Midpoint-rule cell averages on the uniform grid of `level`, row-major with `i` fastest.
pub fn init_cell_averages(ic: &InitialCondition, grid: &GridSpec, level: u8) -> Vec<CellState> {
    let n = GridSpec::cells_per_side(level) as usize;
    let h = grid.h(level);
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push(ic.eval((i as f64 + 0.5) * h, (j as f64 + 0.5) * h));
        }
    }
    out
}

/// An instantaneous additive jump applied inside a disc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusEvent {
    pub time: f64,
    pub center: [f64; 2],
    pub radius_sq: f64,
    pub amplitude: f64,
    #[serde(default = "default_target")]
    pub target: Field,
}

fn default_target() -> Field {
    Field::V
}

impl StimulusEvent {
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        dx * dx + dy * dy < self.radius_sq
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_sq >= 0.0) || !self.time.is_finite() || !self.amplitude.is_finite() {
            return Err(Error::Config(format!("invalid stimulus {self:?}")));
        }
        Ok(())
    }

    /// Squared distances from the disc center to the nearest and farthest points of an
    /// axis-aligned box.
    pub fn box_distance_sq(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> (f64, f64) {
        let (cx, cy) = (self.center[0], self.center[1]);
        let nx = cx.clamp(x0, x1) - cx;
        let ny = cy.clamp(y0, y1) - cy;
        let fx = (cx - x0).abs().max((cx - x1).abs());
        let fy = (cy - y0).abs().max((cy - y1).abs());
        (nx * nx + ny * ny, fx * fx + fy * fy)
    }
}

/// Center-rule stimulus on a uniform grid laid out as in [`init_cell_averages`].
pub fn apply_stimulus(values: &mut [CellState], grid: &GridSpec, level: u8, event: &StimulusEvent) {
    let n = GridSpec::cells_per_side(level) as usize;
    let h = grid.h(level);
    for j in 0..n {
        let y = (j as f64 + 0.5) * h;
        for i in 0..n {
            if event.contains((i as f64 + 0.5) * h, y) {
                *values[j * n + i].get_mut(event.target) += event.amplitude;
            }
        }
    }
}
