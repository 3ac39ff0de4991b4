//! Behavioral simulator of a mixed-mode delay-locked loop with a
//! binary-search lock controller and clock-failure recovery.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`.

// `!(x > 0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bias;
pub mod controller;
pub mod delay_line;
pub mod detectors;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod scalar;

pub use bias::ControlCode;
pub use controller::{ControllerState, FsmState, Scheme, SchemeParams};
pub use delay_line::Corner;
pub use engine::{Divider, Outcome};
pub use scalar::Scalar;

pub type Calibration = delay_line::Calibration<f64>;
pub type DelayLineConfig = delay_line::DelayLineConfig<f64>;
pub type StageConfig = delay_line::StageConfig<f64>;
pub type BiasPair = delay_line::BiasPair<f64>;
pub type DacConfig = bias::DacConfig<f64>;
pub type ToggleTimingParams = detectors::ToggleTimingParams<f64>;
pub type Scenario = engine::Scenario<f64>;
pub type LockTrace = engine::LockTrace<f64>;
pub type TraceRow = engine::TraceRow<f64>;
pub type LockSummary = engine::LockSummary<f64>;
pub type SteadyStateStats = engine::SteadyStateStats<f64>;
pub type VcdlPlant = engine::VcdlPlant<f64>;
pub type LinearPlant = engine::LinearPlant<f64>;
pub type DesignPoint = metrics::DesignPoint<f64>;
pub type MetricRow = metrics::MetricRow<f64>;
pub type TableEntry = metrics::TableEntry<f64>;
