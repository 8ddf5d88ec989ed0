//! Scenario configuration and the built-in presets.

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fvcore::{init_cell_averages, InitialCondition, PointKernel, StimulusEvent};
use crate::grid::{GridSpec, MAX_SUPPORTED_LEVEL};
use crate::kinetics::{ConductivitySpec, FhnParams, Kinetics, ModelConstants, MsParams};
use crate::model::{ModelKind, ModelSpec};
use crate::mrtree::predict::StencilWidth;
use crate::mrtree::{reference_tolerance, DetailRule, MrConfig};
use crate::state::Field;
use crate::timeint::rkf::RkfSettings;
use crate::timeint::{Integrator, RunPlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub max_level: u8,
    pub domain_size: f64,
}

/// Either a fixed reference tolerance or the constant `C` (and exponent) of the
/// level-dependent formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tolerance {
    Fixed {
        eps_r: f64,
    },
    Calibrated {
        c: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
}

fn default_alpha() -> f64 {
    1.09
}

fn default_stencil() -> StencilWidth {
    StencilWidth::Two
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrSection {
    pub tolerance: Tolerance,
    #[serde(default = "default_stencil")]
    pub stencil: StencilWidth,
    #[serde(default)]
    pub detail_rule: DetailRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: ModelSpec,
    pub grid: GridConfig,
    pub initial: InitialCondition,
    pub mr: MrSection,
    pub integrator: Integrator,
    #[serde(default)]
    pub stimuli: Vec<StimulusEvent>,
    pub t_end: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Level of the uniform reference used by `compare` (default `L + 1`).
    #[serde(default)]
    pub reference_level: Option<u8>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.grid_spec()?;
        self.initial.validate()?;
        match self.mr.tolerance {
            Tolerance::Fixed { eps_r } if !(eps_r >= 0.0) || !eps_r.is_finite() => {
                return Err(Error::Config(format!("eps_r must be finite and >= 0, got {eps_r}")))
            }
            Tolerance::Calibrated { c, alpha } if !(c > 0.0) || !alpha.is_finite() => {
                return Err(Error::Config(format!("calibration constant must be positive, got C = {c}")))
            }
            _ => {}
        }
        if let Integrator::Rkf(s) = &self.integrator {
            s.validate()?;
        }
        for s in &self.stimuli {
            s.validate()?;
            if s.target == Field::Ue && !self.model.is_bidomain() {
                return Err(Error::Config("u_e stimulus requires a bidomain model".into()));
            }
        }
        if let Some(r) = self.reference_level {
            if r <= self.grid.max_level || r > MAX_SUPPORTED_LEVEL {
                return Err(Error::Config(format!("reference level {r} must exceed L = {}", self.grid.max_level)));
            }
        }
        self.run_plan()?;
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.domain_size, self.grid.max_level)
    }

    pub fn run_plan(&self) -> Result<RunPlan> {
        RunPlan::new(self.t_end, self.stimuli.clone(), self.snapshot_times.clone())
    }

    pub fn reference_level(&self) -> u8 {
        self.reference_level.unwrap_or(self.grid.max_level + 1)
    }

    /// The reference tolerance, evaluating the calibration formula on the initial data
    /// when a constant `C` is given.
    pub fn eps_r(&self) -> Result<f64> {
        match self.mr.tolerance {
            Tolerance::Fixed { eps_r } => Ok(eps_r),
            Tolerance::Calibrated { c, alpha } => {
                let grid = self.grid_spec()?;
                let kernel = PointKernel::new(&self.model);
                let init = init_cell_averages(&self.initial, &grid, grid.max_level);
                let i_app: f64 = self.model.applied_currents.iter().map(|a| a.amplitude.abs()).sum();
                let m_c = init.iter().map(|s| kernel.current_magnitude(*s, 0.0)).fold(0.0, f64::max) + 2.0 * i_app;
                reference_tolerance(grid.domain_area(), grid.max_level, m_c, self.model.tensor_norm_sum(), c, alpha)
            }
        }
    }

    pub fn mr_config(&self) -> Result<MrConfig> {
        Ok(MrConfig { eps_r: self.eps_r()?, stencil: self.mr.stencil, detail_rule: self.mr.detail_rule })
    }

    pub fn with_level(mut self, max_level: u8) -> Self {
        self.grid.max_level = max_level;
        self
    }

    pub fn with_eps(mut self, eps_r: f64) -> Self {
        self.mr.tolerance = Tolerance::Fixed { eps_r };
        self
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "example1" => Ok(example1()),
            "example2" => Ok(example2()),
            "example3" => Ok(example3()),
            _ => Err(Error::Config(format!("unknown preset {name:?} (expected example1, example2 or example3)"))),
        }
    }
}

/// Monodomain FitzHugh-Nagumo front on the unit square.
pub fn example1() -> ScenarioConfig {
    ScenarioConfig {
        name: "example1".into(),
        model: ModelSpec {
            kind: ModelKind::Monodomain,
            constants: ModelConstants { beta: 1.0, c_m: 1.0, lambda_mono: 1.0 },
            kinetics: Kinetics::Fhn(FhnParams::EXAMPLE1),
            conductivity_i: ConductivitySpec { sigma_l: 0.02, sigma_t: 0.02, fiber_angle: 0.0 },
            conductivity_e: None,
            applied_currents: vec![],
        },
        grid: GridConfig { max_level: 7, domain_size: 1.0 },
        initial: InitialCondition::CornerSigmoid { steepness: 50.0, radius: 0.1 },
        mr: MrSection { tolerance: Tolerance::Fixed { eps_r: 1e-3 }, stencil: StencilWidth::Two, detail_rule: DetailRule::MinMax },
        integrator: Integrator::Euler,
        stimuli: vec![StimulusEvent { time: 4.0, center: [0.5, 0.5], radius_sq: 0.04, amplitude: 1.0, target: Field::V }],
        t_end: 5.5,
        snapshot_times: vec![0.0, 1.5, 3.5, 4.5, 5.5],
        reference_level: None,
        output_dir: None,
    }
}

fn example2_model() -> ModelSpec {
    ModelSpec {
        kind: ModelKind::Bidomain,
        constants: ModelConstants { beta: 2000.0, c_m: 1.0, lambda_mono: 1.0 },
        kinetics: Kinetics::MitchellSchaeffer(MsParams::EXAMPLE2),
        conductivity_i: ConductivitySpec { sigma_l: 6.0, sigma_t: 0.6, fiber_angle: FRAC_PI_4 },
        conductivity_e: Some(ConductivitySpec { sigma_l: 24.0, sigma_t: 12.0, fiber_angle: FRAC_PI_4 }),
        applied_currents: vec![],
    }
}

fn ue_stimulus(time: f64, center: [f64; 2]) -> StimulusEvent {
    StimulusEvent { time, center, radius_sq: 0.25, amplitude: 1.0, target: Field::Ue }
}

/// Bidomain Mitchell-Schaeffer with fibers at 45 degrees, started by an extracellular
/// stimulus at the center.
pub fn example2() -> ScenarioConfig {
    ScenarioConfig {
        name: "example2".into(),
        model: example2_model(),
        grid: GridConfig { max_level: 9, domain_size: 5.0 },
        initial: InitialCondition::ZERO,
        mr: MrSection { tolerance: Tolerance::Fixed { eps_r: 5e-4 }, stencil: StencilWidth::Two, detail_rule: DetailRule::MinMax },
        integrator: Integrator::Euler,
        stimuli: vec![ue_stimulus(0.0, [2.5, 2.5])],
        t_end: 3.5,
        snapshot_times: vec![0.1, 0.5, 2.0, 3.5],
        reference_level: None,
        output_dir: None,
    }
}

/// Example 2 with further stimuli in the corners, integrated with RKF.
pub fn example3() -> ScenarioConfig {
    ScenarioConfig {
        name: "example3".into(),
        mr: MrSection { tolerance: Tolerance::Fixed { eps_r: 2.5e-3 }, stencil: StencilWidth::Two, detail_rule: DetailRule::MinMax },
        integrator: Integrator::Rkf(RkfSettings::new(1e-3)),
        stimuli: vec![
            ue_stimulus(0.0, [2.5, 2.5]),
            ue_stimulus(0.2, [0.0, 5.0]),
            ue_stimulus(1.0, [5.0, 5.0]),
            ue_stimulus(1.0, [0.0, 0.0]),
        ],
        t_end: 5.0,
        snapshot_times: vec![0.1, 0.5, 2.0, 5.0],
        ..example2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in ["example1", "example2", "example3"] {
            let c = ScenarioConfig::preset(name).unwrap();
            c.validate().unwrap();
            assert_eq!(ScenarioConfig::from_json(&c.to_json()).unwrap(), c);
        }
        assert!(ScenarioConfig::preset("example4").is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = example1();
        c.t_end = -1.0;
        assert!(c.validate().is_err());
        let mut c = example1();
        c.stimuli[0].target = Field::Ue;
        assert!(c.validate().is_err());
        let mut c = example2();
        c.model.conductivity_e = None;
        assert!(c.validate().is_err());
        assert!(ScenarioConfig::from_json("{\"name\": 1}").is_err());
        let mut c = example1();
        c.reference_level = Some(7);
        assert!(c.validate().is_err());
    }

    #[test]
    fn calibrated_tolerance() {
        let mut c = example1();
        c.mr.tolerance = Tolerance::Calibrated { c: 1.0, alpha: 1.09 };
        let eps = c.eps_r().unwrap();
        assert!(eps > 0.0 && eps < 1e-6);
        let mut c2 = c.clone();
        c2.mr.tolerance = Tolerance::Calibrated { c: 2.0, alpha: 1.09 };
        assert!((c2.eps_r().unwrap() / eps - 2.0).abs() < 1e-12);
        let json = r#"{"c": 0.5}"#;
        let t: Tolerance = serde_json::from_str(json).unwrap();
        assert_eq!(t, Tolerance::Calibrated { c: 0.5, alpha: 1.09 });
    }
}
