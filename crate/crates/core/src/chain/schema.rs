//! TOML chain description.
//!
//! ```toml
//! gravity = [0.0, 0.0, -9.81]
//!
//! [motors.servo]
//! kv = 0.6
//! rw = 4.0
//! kt = 0.02
//! eta = 0.8
//! vbus = 12.0
//! eps_vel = 0.01
//!
//! [[joints]]
//! name = "shoulder"
//! # parent omitted: attached to the world
//! origin_translation = [0.0, 0.0, 0.1]
//! origin_rotation = [1.0, 0.0, 0.0, 0.0]   # w, x, y, z
//! axis = [0.0, 1.0, 0.0]
//! limits = [-3.0, 3.0]
//! gear_ratio = 200.0
//! motor = "servo"
//!
//! [[links]]
//! mass = 0.3
//! com = [0.2, 0.0, 0.0]
//!
//! [[sites]]
//! name = "tool"
//! parent = 0
//! translation = [0.4, 0.0, 0.0]
//! rotation = [1.0, 0.0, 0.0, 0.0]
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::motor::MotorRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFile {
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    #[serde(default)]
    pub motors: BTreeMap<String, MotorRecord>,
    pub joints: Vec<JointRecord>,
    #[serde(default)]
    pub links: Vec<LinkRecord>,
    pub sites: Vec<SiteRecord>,
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointRecord {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    #[serde(default)]
    pub origin_translation: [f64; 3],
    #[serde(default = "identity_quat")]
    pub origin_rotation: [f64; 4],
    pub axis: [f64; 3],
    pub limits: [f64; 2],
    #[serde(default = "unit_ratio")]
    pub gear_ratio: f64,
    pub motor: String,
}

fn unit_ratio() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRecord {
    pub mass: f64,
    #[serde(default)]
    pub com: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteRecord {
    pub name: String,
    pub parent: usize,
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default = "identity_quat")]
    pub rotation: [f64; 4],
}
