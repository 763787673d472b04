//! Scenario files: world, surfaces, controller settings and one script.
//!
//! ```toml
//! version = 1
//! chain = "arm5.toml"          # relative to this file
//! seed = 7
//!
//! [world]
//! q0 = [0.0, -0.5, 1.6, 0.5, 0.0]
//! substeps = 12
//! telemetry = "current"        # current | pwm
//! current_noise = 0.05
//! quantization = 0.01
//! [world.servo]
//! kp = 200.0
//! kd = 6.0
//! inertia = 0.05
//!
//! [controller]                 # same keys as a controller config file
//! variant = "position"
//!
//! [[surfaces]]
//! site = "tool"
//! point = [0.0, 0.0, -0.1]
//! normal = [0.0, 0.0, 1.0]
//! stiffness = 2500.0
//! friction = 0.3
//!
//! [press]                      # or [draw] / [hybrid]
//! site = "tool"
//! axis = [1.0, 0.0, 0.0]
//! magnitude = 5.0
//! ```

use std::path::{Path, PathBuf};

use complyctl_core::controller::ControllerFile;
use complyctl_core::{Chain, Config, ControllerVariant, Ctl, Error, Result};
use nalgebra::{DVector, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::draw::{scenario_draw, DrawPlan, Shape};
use crate::hybrid_script::{load_hybrid_commands, scenario_hybrid, HybridPlan};
use crate::press::{scenario_press, PressProfile};
use crate::report::ScenarioRun;
use crate::world::{ContactSurface, SimMotor, SimWorld, TelemetryMode, WorldSetup};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "version_one")]
    pub version: u32,
    pub chain: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub world: WorldRecord,
    #[serde(default)]
    pub controller: ControllerFile,
    #[serde(default)]
    pub surfaces: Vec<SurfaceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub press: Option<PressRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draw: Option<DrawRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hybrid: Option<HybridRecord>,
}

fn version_one() -> u32 {
    SCENARIO_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldRecord {
    pub q0: Vec<f64>,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub telemetry: TelemetryMode,
    #[serde(default = "yes")]
    pub gravity_feedforward: bool,
    #[serde(default)]
    pub current_noise: f64,
    #[serde(default)]
    pub quantization: f64,
    #[serde(default)]
    pub servo: ServoRecord,
}

fn default_substeps() -> usize {
    12
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServoRecord {
    pub kp: f64,
    pub kd: f64,
    pub inertia: f64,
}

impl Default for ServoRecord {
    fn default() -> Self {
        Self { kp: 200.0, kd: 6.0, inertia: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceRecord {
    pub site: String,
    pub point: [f64; 3],
    pub normal: [f64; 3],
    pub stiffness: f64,
    #[serde(default)]
    pub friction: f64,
    #[serde(default = "default_viscosity")]
    pub viscosity: f64,
}

fn default_viscosity() -> f64 {
    200.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressRecord {
    pub site: String,
    pub axis: [f64; 3],
    pub magnitude: f64,
    #[serde(default = "half")]
    pub settle: f64,
    #[serde(default = "one")]
    pub ramp: f64,
    #[serde(default = "two")]
    pub hold: f64,
    #[serde(default = "one")]
    pub release: f64,
    #[serde(default = "half")]
    pub rest: f64,
}

fn half() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrawRecord {
    pub site: String,
    #[serde(default)]
    pub shape: Shape,
    /// Center of the drawing on the believed surface plane.
    pub center: [f64; 3],
    pub normal: [f64; 3],
    /// In-plane direction of the drawing's x axis.
    #[serde(default = "x_axis")]
    pub heading: [f64; 3],
    /// Heart width or line length (m).
    pub size: f64,
    /// Offset of the believed plane above the true one (m).
    #[serde(default)]
    pub lift: f64,
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default = "default_force")]
    pub force: f64,
    #[serde(default = "default_k_normal")]
    pub k_normal: f64,
    #[serde(default = "default_k_tangential")]
    pub k_tangential: f64,
    #[serde(default = "default_k_rotation")]
    pub k_rotation: f64,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "default_approach")]
    pub approach: f64,
    #[serde(default = "one")]
    pub press_in: f64,
}

fn x_axis() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}
fn default_speed() -> f64 {
    0.03
}
fn default_force() -> f64 {
    2.0
}
fn default_k_normal() -> f64 {
    20.0
}
fn default_k_tangential() -> f64 {
    400.0
}
fn default_k_rotation() -> f64 {
    20.0
}
fn default_approach() -> f64 {
    1.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridRecord {
    pub site: String,
    /// CSV `t,vx,vy,vz,k_low,k_high,fx,fy,fz`, relative to the scenario file.
    pub commands: PathBuf,
    #[serde(default = "default_k_rotation")]
    pub k_rotation: f64,
    /// Run length (s); defaults to the last command time plus one second.
    #[serde(default)]
    pub duration: Option<f64>,
}

/// The script a scenario runs.
#[derive(Clone, Debug, PartialEq)]
pub enum Script {
    Press(PressProfile),
    Draw(DrawPlan),
    Hybrid(HybridPlan),
}

/// A fully resolved scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub chain: Chain,
    pub config: Config,
    pub script: Script,
}

fn unit(v: [f64; 3], what: &'static str) -> Result<Unit<Vector3<f64>>> {
    let v = Vector3::from(v);
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::validation(what, "vector must be nonzero"));
    }
    Ok(Unit::new_normalize(v))
}

fn site(chain: &Chain, name: &str) -> Result<usize> {
    chain.site_index(name).ok_or_else(|| Error::validation("scenario", format!("unknown site `{name}`")))
}

impl Scenario {
    pub fn parse(text: &str, path: &Path) -> Result<ScenarioFile> {
        toml::from_str(text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = Error::read(path)?;
        let file = Self::parse(&text, path)?;
        Self::from_file(file, path.parent().unwrap_or(Path::new(".")))
    }

    /// Resolves relative paths against `base`.
    pub fn from_file(mut file: ScenarioFile, base: &Path) -> Result<Self> {
        if file.version != SCENARIO_VERSION {
            return Err(Error::validation(
                "scenario",
                format!("unsupported version {} (expected {SCENARIO_VERSION})", file.version),
            ));
        }
        file.chain = base.join(&file.chain);
        let chain = Chain::load(&file.chain)?;
        let config = Config::from_file(&file.controller, &chain)?;
        if file.world.q0.len() != chain.dof() {
            return Err(Error::dims("world q0", chain.dof(), file.world.q0.len()));
        }
        let scripts = [file.press.is_some(), file.draw.is_some(), file.hybrid.is_some()];
        if scripts.iter().filter(|s| **s).count() != 1 {
            return Err(Error::validation("scenario", "exactly one of [press], [draw], [hybrid] is required"));
        }
        let script = if let Some(p) = &file.press {
            Script::Press(PressProfile {
                site: site(&chain, &p.site)?,
                axis: unit(p.axis, "press axis")?,
                magnitude: p.magnitude,
                settle: p.settle,
                ramp: p.ramp,
                hold: p.hold,
                release: p.release,
                rest: p.rest,
            })
        } else if let Some(d) = &file.draw {
            Script::Draw(DrawPlan {
                site: site(&chain, &d.site)?,
                shape: d.shape,
                center: Vector3::from(d.center),
                normal: unit(d.normal, "draw normal")?,
                heading: unit(d.heading, "draw heading")?,
                size: d.size,
                lift: d.lift,
                speed: d.speed,
                force: d.force,
                k_normal: d.k_normal,
                k_tangential: d.k_tangential,
                k_rotation: d.k_rotation,
                mass: d.mass,
                approach: d.approach,
                press_in: d.press_in,
            })
        } else {
            let h = file.hybrid.as_mut().expect("one script present");
            h.commands = base.join(&h.commands);
            let commands = load_hybrid_commands(&h.commands)?;
            Script::Hybrid(HybridPlan {
                site: site(&chain, &h.site)?,
                commands,
                k_rotation: h.k_rotation,
                duration: h.duration,
            })
        };
        if let Script::Draw(d) = &script {
            d.validate()?;
        }
        if let Script::Press(p) = &script {
            p.validate()?;
        }
        let scenario = Self { file, chain, config, script };
        scenario.surfaces()?;
        Ok(scenario)
    }

    pub fn surfaces(&self) -> Result<Vec<ContactSurface>> {
        self.file
            .surfaces
            .iter()
            .map(|s| {
                Ok(ContactSurface {
                    point: Vector3::from(s.point),
                    normal: unit(s.normal, "surface normal")?,
                    stiffness: s.stiffness,
                    friction: s.friction,
                    viscosity: s.viscosity,
                    site: site(&self.chain, &s.site)?,
                })
            })
            .collect()
    }

    pub fn world(&self, seed: u64) -> Result<SimWorld> {
        let w = &self.file.world;
        let motors = (0..self.chain.dof())
            .map(|i| SimMotor {
                params: *self.chain.motor(i),
                current_noise: w.current_noise,
                quantization: w.quantization,
                kp_servo: w.servo.kp,
                kd_servo: w.servo.kd,
                inertia: w.servo.inertia,
            })
            .collect();
        SimWorld::new(WorldSetup {
            chain: self.chain.clone(),
            motors,
            surfaces: self.surfaces()?,
            seed,
            substeps: w.substeps,
            mode: w.telemetry,
            gravity_feedforward: w.gravity_feedforward,
            q0: DVector::from_vec(w.q0.clone()),
        })
    }

    /// Runs the script with `seed` (the file's seed when `None`) and an
    /// optional controller variant override.
    pub fn run(&self, seed: Option<u64>, variant: Option<ControllerVariant>) -> Result<ScenarioRun> {
        let mut config = self.config.clone();
        if let Some(v) = variant {
            config.variant = v;
        }
        let controller = Ctl::new(self.chain.clone(), config)?;
        let mut world = self.world(seed.unwrap_or(self.file.seed))?;
        match &self.script {
            Script::Press(p) => scenario_press(&mut world, &controller, p),
            Script::Draw(d) => scenario_draw(&mut world, &controller, d),
            Script::Hybrid(h) => scenario_hybrid(&mut world, &controller, h),
        }
    }
}
