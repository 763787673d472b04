//! Sensorless compliance control for geared, position-controlled arms.
//!
//! External wrenches are estimated from motor drive signals through a chain
//! model, fed into a spring-mass-damper reference model and turned into joint
//! position targets with damped least-squares IK. Everything numeric is
//! generic over [`Real`]; the aliases below fix the scalar to `f64` or `f32`.

// `!(x > 0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admittance;
pub mod chain;
pub mod controller;
pub mod error;
pub mod hybrid;
pub mod ik;
pub mod motor;
pub mod pose;
pub mod scalar;
pub mod wrench;

pub use admittance::{ComplianceCommand, TaskState};
pub use chain::ChainModel;
pub use controller::{
    Controller, ControllerConfig, ControllerState, ControllerVariant, DriveSignal, SiteCommand, Telemetry, TraceRecord,
};
pub use error::{Error, Result};
pub use hybrid::HybridCommand;
pub use ik::{IkConfig, IkReport, IkTarget};
pub use motor::{DriveState, MotorParams, TorqueEstimatorState};
pub use pose::Pose;
pub use scalar::Real;
pub use wrench::{EstimatorConfig, EstimatorMode, Wrench, WrenchEstimate};

pub type Chain = ChainModel<f64>;
pub type Motor = MotorParams<f64>;
pub type Pose64 = Pose<f64>;
pub type Wrench64 = Wrench<f64>;
pub type Command = ComplianceCommand<f64>;
pub type Config = ControllerConfig<f64>;
pub type Ctl = Controller<f64>;
pub type Sample = Telemetry<f64>;
pub type Record = TraceRecord<f64>;

pub type Chain32 = ChainModel<f32>;
pub type Motor32 = MotorParams<f32>;
pub type Pose32 = Pose<f32>;
pub type Wrench32 = Wrench<f32>;
pub type Command32 = ComplianceCommand<f32>;
pub type Ctl32 = Controller<f32>;
