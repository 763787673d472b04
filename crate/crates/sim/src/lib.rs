//! Deterministic simulated world for exercising the controller: position
//! servos with a motor electrical model and sensor noise, penalty-spring
//! contact surfaces, scripted loads, and the press / draw / hybrid scripts.
//!
//! The simulator works in `f64` only.

// `!(x > 0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod draw;
pub mod hybrid_script;
pub mod press;
pub mod report;
pub mod scenario;
pub mod world;

pub use draw::{scenario_draw, DrawPlan, Path, Shape};
pub use hybrid_script::{scenario_hybrid, HybridPlan};
pub use press::{scenario_press, PressProfile};
pub use report::{DrawSummary, HybridSummary, PressSummary, ScenarioRun, ScenarioSummary};
pub use scenario::{Scenario, ScenarioFile, Script};
pub use world::{ContactSurface, SimMotor, SimWorld, TelemetryMode, WorldSetup};
