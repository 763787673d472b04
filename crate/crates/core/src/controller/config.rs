//! Controller configuration and its TOML form.
//!
//! ```toml
//! version = 1
//! dt = 0.012
//! variant = "full"          # full | no-fext | position
//! ema_alpha = 0.9
//! contact_force_threshold = 1.0
//!
//! [velocity_limits]
//! free_space = 0.2
//! contact = 0.05
//!
//! [estimator]
//! lambda = 1e-3
//! mode = "full-force"       # full-force | full-wrench | full-wrench-separate | axis-set
//! axes = [{ axis = [0.0, 0.0, 1.0], kind = "force" }]
//!
//! [ik]
//! damping = 1e-4
//! max_joint_step = 0.2
//! orientation_weight = 0.5
//!
//! [[sites]]
//! site = "tool"
//! stiffness = [400.0, 400.0, 400.0, 20.0, 20.0, 20.0]
//! f_cmd = [0.0, 0.0, -2.0, 0.0, 0.0, 0.0]
//! ```

use std::path::Path;

use nalgebra::{Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::admittance::{critical_damping, ComplianceCommand};
use crate::chain::ChainModel;
use crate::error::{Error, Result};
use crate::ik::IkConfig;
use crate::pose::Pose;
use crate::scalar::{lit, to_f64, Real};
use crate::wrench::{AxisKind, EstimatorAxis, EstimatorConfig, EstimatorMode, Wrench};

pub const CONFIG_VERSION: u32 = 1;

/// Which parts of the pipeline drive the reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerVariant {
    /// Estimated external wrench feeds the admittance model.
    #[default]
    Full,
    /// Admittance model runs without the estimated wrench.
    NoFext,
    /// Desired pose goes straight to IK.
    Position,
}

impl std::str::FromStr for ControllerVariant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(Self::Full),
            "no-fext" => Ok(Self::NoFext),
            "position" | "none" => Ok(Self::Position),
            other => Err(format!("unknown controller variant `{other}` (full | no-fext | position)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocityLimits<T: Real> {
    pub free_space: T,
    pub contact: T,
}

/// Default command for one site. `x_des = None` holds the pose the site has
/// when the controller starts.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteCommandSpec<T: Real> {
    pub site: usize,
    pub x_des: Option<Pose<T>>,
    pub xdot_des: Vector6<T>,
    pub kp: Matrix6<T>,
    pub kd: Matrix6<T>,
    pub f_cmd: Wrench<T>,
    pub mass: T,
}

impl<T: Real> SiteCommandSpec<T> {
    pub fn instantiate(&self, hold: Pose<T>) -> ComplianceCommand<T> {
        ComplianceCommand {
            x_des: self.x_des.unwrap_or(hold),
            xdot_des: self.xdot_des,
            kp: self.kp,
            kd: self.kd,
            f_cmd: self.f_cmd,
            mass: self.mass,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerConfig<T: Real> {
    pub dt: T,
    pub variant: ControllerVariant,
    pub ema_alpha: T,
    pub velocity_limits: Option<VelocityLimits<T>>,
    /// Force magnitude (N) above which the contact speed limit applies.
    pub contact_force_threshold: T,
    pub estimator: EstimatorConfig<T>,
    pub ik: IkConfig<T>,
    pub sites: Vec<SiteCommandSpec<T>>,
    /// Telemetry older than this many control periods faults the tick.
    pub stale_ticks: T,
}

impl<T: Real> ControllerConfig<T> {
    pub fn new(dt: T) -> Self {
        Self {
            dt,
            variant: ControllerVariant::Full,
            ema_alpha: lit(0.9),
            velocity_limits: Some(VelocityLimits { free_space: lit(0.2), contact: lit(0.05) }),
            contact_force_threshold: T::one(),
            estimator: EstimatorConfig::default(),
            ik: IkConfig::default(),
            sites: Vec::new(),
            stale_ticks: lit(5.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) {
            return Err(Error::OutOfRange { what: "dt", value: to_f64(self.dt) });
        }
        if !(self.ema_alpha >= T::zero() && self.ema_alpha <= T::one()) {
            return Err(Error::OutOfRange { what: "ema alpha", value: to_f64(self.ema_alpha) });
        }
        self.estimator.validate()?;
        self.ik.validate()?;
        Ok(())
    }

    pub fn from_file(file: &ControllerFile, chain: &ChainModel<T>) -> Result<Self> {
        if file.version != CONFIG_VERSION {
            return Err(Error::validation(
                "controller config",
                format!("unsupported version {} (expected {CONFIG_VERSION})", file.version),
            ));
        }
        let estimator = EstimatorConfig {
            lambda: lit(file.estimator.lambda),
            mode: file.estimator.mode,
            axes: file.estimator.axes.iter().map(|a| EstimatorAxis { axis: v3(a.axis), kind: a.kind }).collect(),
        };
        let ik = IkConfig {
            damping: lit(file.ik.damping),
            max_joint_step: lit(file.ik.max_joint_step),
            position_weight: lit(file.ik.position_weight),
            orientation_weight: lit(file.ik.orientation_weight),
            max_iterations: file.ik.max_iterations,
            tolerance: lit(file.ik.tolerance),
            posture_weight: lit(file.ik.posture_weight),
        };
        let mut sites = Vec::new();
        for rec in &file.sites {
            sites.push(rec.to_spec(chain)?);
        }
        let cfg = Self {
            dt: lit(file.dt),
            variant: file.variant,
            ema_alpha: lit(file.ema_alpha),
            velocity_limits: file
                .velocity_limits
                .as_ref()
                .map(|v| VelocityLimits { free_space: lit(v.free_space), contact: lit(v.contact) }),
            contact_force_threshold: lit(file.contact_force_threshold),
            estimator,
            ik,
            sites,
            stale_ticks: lit(file.stale_ticks),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, chain: &ChainModel<T>) -> Result<Self> {
        let path = path.as_ref();
        let text = Error::read(path)?;
        let file: ControllerFile =
            toml::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_file(&file, chain)
    }
}

fn v3<T: Real>(v: [f64; 3]) -> Vector3<T> {
    Vector3::new(lit(v[0]), lit(v[1]), lit(v[2]))
}

fn v6<T: Real>(v: [f64; 6]) -> Vector6<T> {
    Vector6::from_iterator(v.iter().map(|x| lit(*x)))
}

fn m6<T: Real>(m: &[[f64; 6]; 6]) -> Matrix6<T> {
    Matrix6::from_fn(|r, c| lit(m[r][c]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFile {
    #[serde(default = "version_one")]
    pub version: u32,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub variant: ControllerVariant,
    #[serde(default = "default_alpha")]
    pub ema_alpha: f64,
    #[serde(default = "default_limits")]
    pub velocity_limits: Option<VelocityLimitsRecord>,
    #[serde(default = "default_threshold")]
    pub contact_force_threshold: f64,
    #[serde(default = "default_stale")]
    pub stale_ticks: f64,
    #[serde(default)]
    pub estimator: EstimatorRecord,
    #[serde(default)]
    pub ik: IkRecord,
    #[serde(default)]
    pub sites: Vec<SiteCommandRecord>,
}

impl Default for ControllerFile {
    fn default() -> Self {
        toml::from_str("").expect("all controller fields have defaults")
    }
}

fn version_one() -> u32 {
    CONFIG_VERSION
}
fn default_dt() -> f64 {
    0.012
}
fn default_alpha() -> f64 {
    0.9
}
fn default_threshold() -> f64 {
    1.0
}
fn default_stale() -> f64 {
    5.0
}
fn default_limits() -> Option<VelocityLimitsRecord> {
    Some(VelocityLimitsRecord { free_space: 0.2, contact: 0.05 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityLimitsRecord {
    pub free_space: f64,
    pub contact: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorRecord {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub mode: EstimatorMode,
    #[serde(default)]
    pub axes: Vec<AxisRecord>,
}

fn default_lambda() -> f64 {
    1e-3
}

impl Default for EstimatorRecord {
    fn default() -> Self {
        Self { lambda: default_lambda(), mode: EstimatorMode::FullForce, axes: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisRecord {
    pub axis: [f64; 3],
    pub kind: AxisKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IkRecord {
    pub damping: f64,
    pub max_joint_step: f64,
    pub position_weight: f64,
    pub orientation_weight: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub posture_weight: f64,
}

impl Default for IkRecord {
    fn default() -> Self {
        let d = IkConfig::<f64>::default();
        Self {
            damping: d.damping,
            max_joint_step: d.max_joint_step,
            position_weight: d.position_weight,
            orientation_weight: d.orientation_weight,
            max_iterations: d.max_iterations,
            tolerance: d.tolerance,
            posture_weight: d.posture_weight,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub position: [f64; 3],
    #[serde(default)]
    pub orientation: [f64; 3],
}

/// One `[[sites]]` entry. Stiffness is either a diagonal (`stiffness`) or a
/// full matrix (`kp`); damping defaults to critical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteCommandRecord {
    pub site: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_des: Option<PoseRecord>,
    #[serde(default)]
    pub xdot_des: [f64; 6],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kp: Option<[[f64; 6]; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kd: Option<[[f64; 6]; 6]>,
    #[serde(default)]
    pub f_cmd: [f64; 6],
    #[serde(default = "unit_mass")]
    pub mass: f64,
}

fn unit_mass() -> f64 {
    1.0
}

pub const DEFAULT_STIFFNESS: [f64; 6] = [400.0, 400.0, 400.0, 20.0, 20.0, 20.0];

impl SiteCommandRecord {
    pub fn to_spec<T: Real>(&self, chain: &ChainModel<T>) -> Result<SiteCommandSpec<T>> {
        let site = chain
            .site_index(&self.site)
            .ok_or_else(|| Error::validation("controller config", format!("unknown site `{}`", self.site)))?;
        let kp = match (&self.stiffness, &self.kp) {
            (Some(_), Some(_)) => {
                return Err(Error::validation("controller config", "give either `stiffness` or `kp`, not both"))
            }
            (Some(d), None) => Matrix6::from_diagonal(&v6(*d)),
            (None, Some(m)) => m6(m),
            (None, None) => Matrix6::from_diagonal(&v6(DEFAULT_STIFFNESS)),
        };
        let kd = match (&self.damping, &self.kd) {
            (Some(_), Some(_)) => {
                return Err(Error::validation("controller config", "give either `damping` or `kd`, not both"))
            }
            (Some(d), None) => Matrix6::from_diagonal(&v6(*d)),
            (None, Some(m)) => m6(m),
            (None, None) => critical_damping(&kp)?,
        };
        let spec = SiteCommandSpec {
            site,
            x_des: self.x_des.as_ref().map(|p| Pose::new(v3(p.position), v3(p.orientation))),
            xdot_des: v6(self.xdot_des),
            kp,
            kd,
            f_cmd: Wrench::from_vector(&v6(self.f_cmd)),
            mass: lit(self.mass),
        };
        spec.instantiate(Pose::identity()).validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gets_defaults() {
        let f = ControllerFile::default();
        assert_eq!(f.dt, 0.012);
        assert_eq!(f.variant, ControllerVariant::Full);
        assert_eq!(f.estimator.lambda, 1e-3);
        assert_eq!(f.ik.max_joint_step, 0.2);
        assert_eq!(f.velocity_limits.unwrap().contact, 0.05);
    }

    #[test]
    fn unknown_key_names_the_key() {
        let err = toml::from_str::<ControllerFile>("dtt = 0.01").unwrap_err();
        assert!(err.to_string().contains("dtt"));
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("no-fext".parse::<ControllerVariant>().unwrap(), ControllerVariant::NoFext);
        assert_eq!("none".parse::<ControllerVariant>().unwrap(), ControllerVariant::Position);
        assert!("bogus".parse::<ControllerVariant>().is_err());
        let f: ControllerFile = toml::from_str("variant = \"no-fext\"").unwrap();
        assert_eq!(f.variant, ControllerVariant::NoFext);
    }
}
