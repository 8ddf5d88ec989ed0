//! Adaptive multiresolution finite-volume solvers for the monodomain and
//! bidomain models of cardiac electrophysiology.
//!
//! The crate is organized bottom-up: membrane kinetics and conductivity
//! tensors ([`kinetics`]), the finite-volume building blocks and the uniform
//! reference solver ([`fvcore`]), the elliptic solver ([`elliptic`]), the
//! graded tree with its prediction and thresholding machinery ([`mrtree`]),
//! time integration ([`timeint`]), error and compression metrics
//! ([`metrics`]), and scenario configuration plus run orchestration
//! ([`scenario`], [`driver`]).

// NaN must fail validation, so negated comparisons are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod driver;
pub mod elliptic;
pub mod error;
pub mod fvcore;
pub mod grid;
pub mod kinetics;
pub mod metrics;
pub mod model;
pub mod mrtree;
pub mod scenario;
pub mod state;
pub mod timeint;

pub use driver::{Method, Reference, RunSummary, Snapshot};
pub use error::{Error, Result};
pub use fvcore::{InitialCondition, StimulusEvent};
pub use grid::{GridSpec, NodeKey};
pub use model::{ModelKind, ModelSpec};
pub use mrtree::{MrConfig, Tree};
pub use scenario::ScenarioConfig;
pub use state::{CellState, Field, FieldMask};
pub use timeint::{Integrator, MrSolver, RunPlan};
