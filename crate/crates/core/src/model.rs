//! Physical model description shared by all discretizations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{conductivity_tensor, ConductivitySpec, Kinetics, ModelConstants, Tensor2};
use crate::state::FieldMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Monodomain,
    Bidomain,
}

/// A disc-shaped applied current active on `[t_start, t_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppliedCurrent {
    pub t_start: f64,
    pub t_end: f64,
    pub center: [f64; 2],
    pub radius_sq: f64,
    pub amplitude: f64,
}

impl AppliedCurrent {
    pub fn active(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub constants: ModelConstants,
    pub kinetics: Kinetics,
    /// Intracellular conductivity (monodomain: the tensor scaled by `1/(1+lambda)`).
    pub conductivity_i: ConductivitySpec,
    /// Extracellular conductivity; required for bidomain runs.
    #[serde(default)]
    pub conductivity_e: Option<ConductivitySpec>,
    #[serde(default)]
    pub applied_currents: Vec<AppliedCurrent>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.kinetics.validate()?;
        self.conductivity_i.validate()?;
        match (self.kind, &self.conductivity_e) {
            (ModelKind::Bidomain, None) => {
                return Err(Error::Config("bidomain model requires conductivity_e".into()))
            }
            (_, Some(e)) => e.validate()?,
            _ => {}
        }
        if self.kind == ModelKind::Monodomain && 1.0 + self.constants.lambda_mono <= 0.0 {
            return Err(Error::Config("monodomain requires 1 + lambda > 0".into()));
        }
        for c in &self.applied_currents {
            if !(c.radius_sq >= 0.0) || !c.amplitude.is_finite() {
                return Err(Error::Config(format!("invalid applied current {c:?}")));
            }
        }
        Ok(())
    }

    pub fn is_bidomain(&self) -> bool {
        self.kind == ModelKind::Bidomain
    }

    pub fn fields(&self) -> FieldMask {
        match self.kind {
            ModelKind::Monodomain => FieldMask::MONODOMAIN,
            ModelKind::Bidomain => FieldMask::BIDOMAIN,
        }
    }

    pub fn tensor_i(&self) -> Tensor2 {
        conductivity_tensor(&self.conductivity_i)
    }

    pub fn tensor_e(&self) -> Option<Tensor2> {
        self.conductivity_e.as_ref().map(conductivity_tensor)
    }

    /// Diffusion tensor acting on `v` in the monodomain equation, `M_i / (1 + lambda)`.
    pub fn tensor_mono(&self) -> Tensor2 {
        self.tensor_i().scale(1.0 / (1.0 + self.constants.lambda_mono))
    }

    /// Factor `lambda / (1 + lambda)` on the applied current in the monodomain equation.
    pub fn mono_source_scale(&self) -> f64 {
        let l = self.constants.lambda_mono;
        l / (1.0 + l)
    }

    /// `max_K (|M_i,K| + |M_e,K|)` with spectral norms; the monodomain uses its single
    /// diffusion tensor.
    pub fn tensor_norm_sum(&self) -> f64 {
        match self.kind {
            ModelKind::Monodomain => self.tensor_mono().spectral_norm(),
            ModelKind::Bidomain => {
                self.tensor_i().spectral_norm() + self.tensor_e().map_or(0.0, |t| t.spectral_norm())
            }
        }
    }

    pub fn beta_cm(&self) -> f64 {
        self.constants.beta * self.constants.c_m
    }

    pub fn has_applied_current(&self, t: f64) -> bool {
        self.applied_currents.iter().any(|c| c.active(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{FhnParams, MsParams};

    fn bidomain() -> ModelSpec {
        ModelSpec {
            kind: ModelKind::Bidomain,
            constants: ModelConstants { beta: 2000.0, c_m: 1.0, lambda_mono: 1.0 },
            kinetics: Kinetics::MitchellSchaeffer(MsParams::EXAMPLE2),
            conductivity_i: ConductivitySpec { sigma_l: 6.0, sigma_t: 0.6, fiber_angle: 0.3 },
            conductivity_e: Some(ConductivitySpec { sigma_l: 24.0, sigma_t: 12.0, fiber_angle: 0.3 }),
            applied_currents: vec![],
        }
    }

    #[test]
    fn norm_sum_uses_largest_eigenvalues() {
        let m = bidomain();
        assert!((m.tensor_norm_sum() - 30.0).abs() < 1e-12);
    }

    #[test]
    fn bidomain_needs_extracellular_tensor() {
        let mut m = bidomain();
        m.validate().unwrap();
        m.conductivity_e = None;
        assert!(m.validate().is_err());
    }

    #[test]
    fn monodomain_scaling() {
        let m = ModelSpec {
            kind: ModelKind::Monodomain,
            constants: ModelConstants { beta: 1.0, c_m: 1.0, lambda_mono: 1.0 },
            kinetics: Kinetics::Fhn(FhnParams::EXAMPLE1),
            conductivity_i: ConductivitySpec { sigma_l: 0.02, sigma_t: 0.02, fiber_angle: 0.0 },
            conductivity_e: None,
            applied_currents: vec![],
        };
        m.validate().unwrap();
        assert!((m.tensor_mono().xx - 0.01).abs() < 1e-15);
        assert!((m.mono_source_scale() - 0.5).abs() < 1e-15);
        assert!((m.tensor_norm_sum() - 0.01).abs() < 1e-15);
    }
}
