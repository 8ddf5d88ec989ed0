//! Per-cell solution tuples.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Sub};

/// One of the three transported fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    /// Transmembrane potential.
    V,
    /// Extracellular potential (bidomain only).
    Ue,
    /// Gating / recovery variable.
    W,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::V, Field::Ue, Field::W];

    pub fn name(self) -> &'static str {
        match self {
            Field::V => "v",
            Field::Ue => "u_e",
            Field::W => "w",
        }
    }
}

/// Cell averages `(v, u_e, w)` of a control volume.
///
/// Monodomain runs carry `u_e = 0` and never read it. The gating variable is
/// stored unitless even when a scenario quotes it in mV.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub v: f64,
    pub ue: f64,
    pub w: f64,
}

impl CellState {
    pub const ZERO: CellState = CellState { v: 0.0, ue: 0.0, w: 0.0 };

    pub const fn new(v: f64, ue: f64, w: f64) -> Self {
        Self { v, ue, w }
    }

    pub const fn splat(x: f64) -> Self {
        Self { v: x, ue: x, w: x }
    }

    #[inline]
    pub fn get(&self, field: Field) -> f64 {
        match field {
            Field::V => self.v,
            Field::Ue => self.ue,
            Field::W => self.w,
        }
    }

    #[inline]
    pub fn get_mut(&mut self, field: Field) -> &mut f64 {
        match field {
            Field::V => &mut self.v,
            Field::Ue => &mut self.ue,
            Field::W => &mut self.w,
        }
    }

    pub fn abs(self) -> Self {
        Self::new(self.v.abs(), self.ue.abs(), self.w.abs())
    }

    pub fn max_abs_component(&self) -> f64 {
        self.v.abs().max(self.ue.abs()).max(self.w.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.ue.is_finite() && self.w.is_finite()
    }

    /// `self + a * other`, fused per component.
    #[inline]
    pub fn axpy(self, a: f64, other: CellState) -> Self {
        Self::new(self.v + a * other.v, self.ue + a * other.ue, self.w + a * other.w)
    }
}

impl Add for CellState {
    type Output = CellState;
    #[inline]
    fn add(self, o: CellState) -> CellState {
        CellState::new(self.v + o.v, self.ue + o.ue, self.w + o.w)
    }
}

impl AddAssign for CellState {
    #[inline]
    fn add_assign(&mut self, o: CellState) {
        self.v += o.v;
        self.ue += o.ue;
        self.w += o.w;
    }
}

impl Sub for CellState {
    type Output = CellState;
    #[inline]
    fn sub(self, o: CellState) -> CellState {
        CellState::new(self.v - o.v, self.ue - o.ue, self.w - o.w)
    }
}

impl Mul<f64> for CellState {
    type Output = CellState;
    #[inline]
    fn mul(self, s: f64) -> CellState {
        CellState::new(self.v * s, self.ue * s, self.w * s)
    }
}

impl Mul<CellState> for f64 {
    type Output = CellState;
    #[inline]
    fn mul(self, c: CellState) -> CellState {
        c * self
    }
}

/// Set of fields that participate in detail thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMask {
    pub v: bool,
    pub ue: bool,
    pub w: bool,
}

impl FieldMask {
    pub const MONODOMAIN: FieldMask = FieldMask { v: true, ue: false, w: true };
    pub const BIDOMAIN: FieldMask = FieldMask { v: true, ue: true, w: true };

    pub fn contains(&self, field: Field) -> bool {
        match field {
            Field::V => self.v,
            Field::Ue => self.ue,
            Field::W => self.w,
        }
    }

    pub fn iter(self) -> impl Iterator<Item = Field> {
        Field::ALL.into_iter().filter(move |f| self.contains(*f))
    }
}
