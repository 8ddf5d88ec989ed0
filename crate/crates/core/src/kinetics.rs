//! Membrane kinetics and conductivity tensors.
//!
//! Two ionic models are provided: FitzHugh-Nagumo and Mitchell-Schaeffer.
//! Both return the pair `(H, I_ion)` where `H` drives the gating variable
//! (`dw/dt = H`) and `I_ion` enters the potential equation with a positive
//! sign on the left-hand side. Parameters are validated once, at
//! construction; the rate kernels themselves never branch on validity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FhnParams {
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub theta: f64,
}

impl FhnParams {
    /// Parameter set of the monodomain benchmark (excitable, bistable cubic).
    pub const EXAMPLE1: FhnParams = FhnParams { a: 0.16875, b: 1.0, lambda: -100.0, theta: 0.25 };

    pub fn validate(&self) -> Result<()> {
        if [self.a, self.b, self.lambda, self.theta].iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config("FitzHugh-Nagumo parameters must be finite".into()))
        }
    }
}

/// `H = a v - b w`, `I_ion = -lambda (w - v (1 - v)(v - theta))`.
#[inline]
pub fn fhn_rates(v: f64, w: f64, p: &FhnParams) -> (f64, f64) {
    let h = p.a * v - p.b * w;
    let i_ion = -p.lambda * (w - v * (1.0 - v) * (v - p.theta));
    (h, i_ion)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsParams {
    /// Peak potential (mV).
    pub v_p: f64,
    /// Membrane surface resistivity (Ohm cm^2).
    pub r_m: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
    pub eta5: f64,
}

impl MsParams {
    pub const EXAMPLE2: MsParams = MsParams {
        v_p: 100.0,
        r_m: 2.0e4,
        eta1: 0.005,
        eta2: 0.1,
        eta3: 1.5,
        eta4: 7.5,
        eta5: 0.1,
    };

    pub fn validate(&self) -> Result<()> {
        let all = [self.v_p, self.r_m, self.eta1, self.eta2, self.eta3, self.eta4, self.eta5];
        if !all.iter().all(|x| x.is_finite()) {
            return Err(Error::Config("Mitchell-Schaeffer parameters must be finite".into()));
        }
        if self.v_p <= 0.0 || self.r_m <= 0.0 || self.eta1 <= 0.0 || self.eta2 <= 0.0 {
            return Err(Error::Config("Mitchell-Schaeffer requires v_p, R_m, eta1, eta2 > 0".into()));
        }
        if self.eta3 == 0.0 || self.eta4 == 0.0 {
            return Err(Error::Config("Mitchell-Schaeffer requires eta3, eta4 != 0".into()));
        }
        Ok(())
    }
}

/// Heaviside step with `H(0) = 1`.
#[inline]
fn heaviside(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Mitchell-Schaeffer rates. `c_m` is the membrane capacitance.
#[inline]
pub fn ms_rates(v: f64, w: f64, p: &MsParams, c_m: f64) -> (f64, f64) {
    let s = v / p.v_p;
    let gate = heaviside(s - p.eta5);
    let w_inf = gate;
    let eta_inf = p.eta3 + (p.eta4 - p.eta3) * gate;
    let h = (w_inf - w) / (p.r_m * c_m * eta_inf);
    let i_ion = (p.v_p / p.r_m)
        * (v / (p.v_p * p.eta2) - v * v * (1.0 - v / p.v_p) * w / (p.v_p * p.v_p * p.eta1));
    (h, i_ion)
}

/// Selected membrane model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kinetics {
    Fhn(FhnParams),
    MitchellSchaeffer(MsParams),
}

impl Kinetics {
    pub fn validate(&self) -> Result<()> {
        match self {
            Kinetics::Fhn(p) => p.validate(),
            Kinetics::MitchellSchaeffer(p) => p.validate(),
        }
    }

    /// `(H, I_ion)` at a cell.
    #[inline]
    pub fn rates(&self, v: f64, w: f64, c_m: f64) -> (f64, f64) {
        match self {
            Kinetics::Fhn(p) => fhn_rates(v, w, p),
            Kinetics::MitchellSchaeffer(p) => ms_rates(v, w, p, c_m),
        }
    }
}

/// Symmetric 2x2 tensor `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Tensor2 {
    pub const fn diag(a: f64, b: f64) -> Self {
        Self { xx: a, xy: 0.0, yy: b }
    }

    pub const fn isotropic(c: f64) -> Self {
        Self::diag(c, c)
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        [self.xx * x[0] + self.xy * x[1], self.xy * x[0] + self.yy * x[1]]
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { xx: self.xx * s, xy: self.xy * s, yy: self.yy * s }
    }

    pub fn add(&self, o: &Tensor2) -> Self {
        Self { xx: self.xx + o.xx, xy: self.xy + o.xy, yy: self.yy + o.yy }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let r = half_diff.hypot(self.xy);
        (mean - r, mean + r)
    }

    /// Spectral norm (largest absolute eigenvalue).
    pub fn spectral_norm(&self) -> f64 {
        let (lo, hi) = self.eigenvalues();
        lo.abs().max(hi.abs())
    }

    /// `|M eta|`, the Euclidean norm of the tensor applied to a unit normal.
    pub fn normal_norm(&self, normal: [f64; 2]) -> f64 {
        let m = self.apply(normal);
        m[0].hypot(m[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductivitySpec {
    /// Conductivity along the fiber.
    pub sigma_l: f64,
    /// Conductivity across the fiber.
    pub sigma_t: f64,
    /// Fiber angle with the x-axis (radians).
    #[serde(default)]
    pub fiber_angle: f64,
}

impl ConductivitySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_l > 0.0 && self.sigma_t > 0.0) || !self.fiber_angle.is_finite() {
            return Err(Error::Config(format!(
                "conductivities must be positive and the fiber angle finite: {self:?}"
            )));
        }
        Ok(())
    }
}

/// `M = sigma_t I + (sigma_l - sigma_t) a a^T` with `a = (cos angle, sin angle)`.
pub fn conductivity_tensor(spec: &ConductivitySpec) -> Tensor2 {
    let (s, c) = spec.fiber_angle.sin_cos();
    let d = spec.sigma_l - spec.sigma_t;
    Tensor2 { xx: spec.sigma_t + d * c * c, xy: d * c * s, yy: spec.sigma_t + d * s * s }
}

/// Physical constants shared by both models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    /// Surface-to-volume ratio (1/cm).
    pub beta: f64,
    /// Membrane capacitance (mF/cm^2).
    pub c_m: f64,
    /// Proportionality `M_i = lambda M_e` of the monodomain reduction.
    #[serde(default = "default_lambda_mono")]
    pub lambda_mono: f64,
}

fn default_lambda_mono() -> f64 {
    1.0
}

impl ModelConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.c_m > 0.0) {
            return Err(Error::Config("beta and c_m must be positive".into()));
        }
        if !self.lambda_mono.is_finite() || self.lambda_mono == -1.0 {
            return Err(Error::Config("monodomain lambda must be finite and != -1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn fhn_fixtures() {
        let p = FhnParams::EXAMPLE1;
        assert_eq!(fhn_rates(0.0, 0.0, &p), (0.0, 0.0));
        let (h, i) = fhn_rates(1.0, 0.0, &p);
        assert_relative_eq!(h, 0.16875);
        assert_eq!(i, 0.0);
        let (h, i) = fhn_rates(0.5, 0.0, &p);
        assert_relative_eq!(h, 0.084375);
        assert_relative_eq!(i, -6.25);
    }

    #[test]
    fn ms_fixtures() {
        let p = MsParams::EXAMPLE2;
        assert_eq!(ms_rates(0.0, 0.0, &p, 1.0), (0.0, 0.0));
        let (h, i) = ms_rates(0.0, 1.0, &p, 1.0);
        assert_relative_eq!(h, -1.0 / (2.0e4 * 1.5), max_relative = 1e-14);
        assert_eq!(i, 0.0);
        // s = 0.5 > eta5, so w_inf = 1 and eta_inf = eta4.
        let (h, i) = ms_rates(50.0, 0.5, &p, 1.0);
        assert_relative_eq!(h, 3.333_333_333_333_333e-6, max_relative = 1e-14);
        assert_relative_eq!(i, -0.0375, max_relative = 1e-14);
    }

    #[test]
    fn ms_threshold_is_right_continuous() {
        let p = MsParams::EXAMPLE2;
        let at = ms_rates(10.0, 0.0, &p, 1.0).0;
        let below = ms_rates(10.0 - 1e-9, 0.0, &p, 1.0).0;
        assert_relative_eq!(at, 1.0 / (2.0e4 * 7.5), max_relative = 1e-14);
        assert_eq!(below, 0.0);
    }

    #[test]
    fn ms_current_vanishes_at_rest() {
        let p = MsParams::EXAMPLE2;
        for w in [-3.0, 0.0, 0.3, 1.0, 17.0] {
            assert_eq!(ms_rates(0.0, w, &p, 1.0).1, 0.0);
        }
    }

    #[test]
    fn tensor_fixtures() {
        let t = conductivity_tensor(&ConductivitySpec { sigma_l: 6.0, sigma_t: 0.6, fiber_angle: 0.0 });
        assert_eq!(t, Tensor2::diag(6.0, 0.6));
        let t = conductivity_tensor(&ConductivitySpec { sigma_l: 2.5, sigma_t: 2.5, fiber_angle: 1.234 });
        assert_relative_eq!(t.xx, 2.5, epsilon = 1e-15);
        assert_relative_eq!(t.yy, 2.5, epsilon = 1e-15);
        assert!(t.xy.abs() < 1e-15);
        let t = conductivity_tensor(&ConductivitySpec { sigma_l: 6.0, sigma_t: 0.6, fiber_angle: FRAC_PI_4 });
        assert_relative_eq!(t.xx, 3.3, epsilon = 1e-14);
        assert_relative_eq!(t.xy, 2.7, epsilon = 1e-14);
        assert_relative_eq!(t.yy, 3.3, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ConductivitySpec { sigma_l: 0.0, sigma_t: 1.0, fiber_angle: 0.0 }.validate().is_err());
        let mut p = MsParams::EXAMPLE2;
        p.r_m = -1.0;
        assert!(p.validate().is_err());
        assert!(FhnParams { a: f64::NAN, ..FhnParams::EXAMPLE1 }.validate().is_err());
        assert!(ModelConstants { beta: 0.0, c_m: 1.0, lambda_mono: 1.0 }.validate().is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn tensor_eigenvalues_are_the_conductivities(
                l in 0.01f64..50.0, t in 0.01f64..50.0, angle in -7.0f64..7.0
            ) {
                let m = conductivity_tensor(&ConductivitySpec { sigma_l: l, sigma_t: t, fiber_angle: angle });
                let (lo, hi) = m.eigenvalues();
                let (elo, ehi) = if l < t { (l, t) } else { (t, l) };
                prop_assert!((lo - elo).abs() <= 1e-12 * ehi);
                prop_assert!((hi - ehi).abs() <= 1e-12 * ehi);
                prop_assert!(lo > 0.0);
            }

            #[test]
            fn rates_are_deterministic(v in -200.0f64..200.0, w in -5.0f64..5.0) {
                let k = Kinetics::MitchellSchaeffer(MsParams::EXAMPLE2);
                prop_assert_eq!(k.rates(v, w, 1.0), k.rates(v, w, 1.0));
                let k = Kinetics::Fhn(FhnParams::EXAMPLE1);
                let (h, i) = k.rates(v, w, 1.0);
                prop_assert!(h.is_finite() && i.is_finite());
            }
        }
    }
}
