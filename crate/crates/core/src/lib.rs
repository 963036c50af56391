//! Simulator of de novo multispecies granular biofilm growth posed as a
//! spherical free-boundary problem.
//!
//! Sessile species are transported along the characteristics of the biomass
//! velocity field, substrates and planktonic species obey quasi-static
//! reaction-diffusion problems, and the granule radius is driven by the
//! boundary velocity plus attachment (and optionally detachment). Two solvers
//! are provided: an explicit time-marching scheme on a Lagrangian grid and a
//! whole-interval Picard fixed-point iteration together with an estimate of
//! the horizon on which that iteration is a contraction.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bulk;
pub mod characteristics;
pub mod config;
pub mod elliptic;
pub mod error;
pub mod field;
pub mod freeboundary;
pub mod kinetics;
pub mod marching;
pub mod model;
pub mod picard;
pub mod quadrature;
pub mod simulation;
pub mod validation;

pub use bulk::{BulkEnvironment, TimeSeries};
pub use characteristics::{CharacteristicGrid, Formulation, GranuleState};
pub use config::{KineticsConfig, Numerics, SimulationConfig};
pub use elliptic::{EllipticSettings, EllipticSolveReport};
pub use error::{Error, Result};
pub use field::NodeField;
pub use freeboundary::{Classification, Regime, RegimeStatus};
pub use kinetics::{AdmissibleBox, AffineKinetics, Kinetics, MonodKinetics, RateEvaluator};
pub use marching::{MarchSettings, Stepper};
pub use model::ModelParameters;
pub use picard::{ContractionReport, ContractionSettings, FieldBundle, HBox, PicardOperator};
pub use quadrature::PanelRule;
pub use simulation::{Mode, Profile, RadiusRow, RunFailure, RunSummary};
