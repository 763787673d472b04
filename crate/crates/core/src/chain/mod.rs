//! Serial/tree chains of revolute joints: forward kinematics, site
//! Jacobians and gravity holding torques.

mod schema;

pub use schema::{ChainFile, JointRecord, LinkRecord, SiteRecord};

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DVector, Isometry3, Matrix3xX, Quaternion, Translation3, Unit, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::motor::MotorParams;
use crate::pose::Pose;
use crate::scalar::{lit, to_f64, Real};

const UNIT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct JointSpec<T: Real> {
    pub name: String,
    /// Parent joint index; `None` attaches to the world.
    pub parent: Option<usize>,
    pub origin: Isometry3<T>,
    pub axis: Unit<Vector3<T>>,
    pub limits: (T, T),
    pub gear_ratio: T,
    pub motor: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkInertia<T: Real> {
    pub mass: T,
    /// Centre of mass in the joint's (post-rotation) frame.
    pub com: Vector3<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiteSpec<T: Real> {
    pub name: String,
    pub parent: usize,
    pub offset: Isometry3<T>,
}

/// Immutable kinematic and gravitational model of a revolute chain.
#[derive(Clone, Debug)]
pub struct ChainModel<T: Real> {
    joints: Vec<JointSpec<T>>,
    links: Vec<LinkInertia<T>>,
    sites: Vec<SiteSpec<T>>,
    gravity: Vector3<T>,
    motors: BTreeMap<String, MotorParams<T>>,
}

fn check_unit(what: &'static str, name: &str, norm: f64) -> Result<()> {
    if (norm - 1.0).abs() > UNIT_TOL || !norm.is_finite() {
        return Err(Error::validation(what, format!("`{name}` must have unit norm, got {norm}")));
    }
    Ok(())
}

fn quat_from_wxyz<T: Real>(q: [f64; 4]) -> UnitQuaternion<T> {
    UnitQuaternion::new_unchecked(Quaternion::new(lit(q[0]), lit(q[1]), lit(q[2]), lit(q[3])))
}

fn iso<T: Real>(t: [f64; 3], q: [f64; 4]) -> Isometry3<T> {
    Isometry3::from_parts(Translation3::new(lit(t[0]), lit(t[1]), lit(t[2])), quat_from_wxyz(q))
}

fn vec3<T: Real>(v: [f64; 3]) -> Vector3<T> {
    Vector3::new(lit(v[0]), lit(v[1]), lit(v[2]))
}

impl<T: Real> ChainModel<T> {
    /// Builds a chain and checks every structural invariant.
    pub fn new(
        joints: Vec<JointSpec<T>>,
        links: Vec<LinkInertia<T>>,
        sites: Vec<SiteSpec<T>>,
        gravity: Vector3<T>,
        motors: BTreeMap<String, MotorParams<T>>,
    ) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::validation("chain", "at least one joint required"));
        }
        if links.len() != joints.len() {
            return Err(Error::dims("links per joint", joints.len(), links.len()));
        }
        if sites.is_empty() {
            return Err(Error::validation("chain", "at least one site required"));
        }
        for (i, j) in joints.iter().enumerate() {
            if let Some(p) = j.parent {
                if p >= i {
                    return Err(Error::validation(
                        "joint",
                        format!("`{}` (index {i}) has parent {p}; parents must precede children", j.name),
                    ));
                }
            }
            check_unit("joint", &j.name, to_f64(j.axis.norm()))?;
            if !(j.limits.0 < j.limits.1) {
                return Err(Error::validation("joint", format!("`{}` limits must satisfy min < max", j.name)));
            }
            if !(j.gear_ratio > T::zero()) {
                return Err(Error::validation("joint", format!("`{}` gear ratio must be > 0", j.name)));
            }
            match motors.get(&j.motor) {
                Some(m) => m.validate()?,
                None => {
                    return Err(Error::validation(
                        "joint",
                        format!("`{}` references unknown motor `{}`", j.name, j.motor),
                    ))
                }
            }
        }
        for l in &links {
            if !(l.mass >= T::zero()) {
                return Err(Error::validation("link", "mass must be >= 0"));
            }
        }
        for s in &sites {
            if s.parent >= joints.len() {
                return Err(Error::validation("site", format!("`{}` parent {} out of range", s.name, s.parent)));
            }
        }
        Ok(Self { joints, links, sites, gravity, motors })
    }

    pub fn from_file(file: &ChainFile) -> Result<Self> {
        let mut motors = BTreeMap::new();
        for (name, rec) in &file.motors {
            motors.insert(name.clone(), rec.to_params()?);
        }
        let mut joints = Vec::with_capacity(file.joints.len());
        for j in &file.joints {
            let axis = vec3::<f64>(j.axis);
            check_unit("joint", &j.name, axis.norm())?;
            let qn = Vector3::new(j.origin_rotation[1], j.origin_rotation[2], j.origin_rotation[3]).norm_squared()
                + j.origin_rotation[0] * j.origin_rotation[0];
            check_unit("joint origin rotation", &j.name, qn.sqrt())?;
            joints.push(JointSpec {
                name: j.name.clone(),
                parent: j.parent,
                origin: iso(j.origin_translation, j.origin_rotation),
                axis: Unit::new_unchecked(vec3(j.axis)),
                limits: (lit(j.limits[0]), lit(j.limits[1])),
                gear_ratio: lit(j.gear_ratio),
                motor: j.motor.clone(),
            });
        }
        let links = file.links.iter().map(|l| LinkInertia { mass: lit(l.mass), com: vec3(l.com) }).collect();
        let mut sites = Vec::with_capacity(file.sites.len());
        for s in &file.sites {
            let qn = s.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
            check_unit("site rotation", &s.name, qn)?;
            sites.push(SiteSpec { name: s.name.clone(), parent: s.parent, offset: iso(s.translation, s.rotation) });
        }
        Self::new(joints, links, sites, vec3(file.gravity), motors)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ChainFile =
            toml::from_str(text).map_err(|e| Error::Parse { path: "<chain>".into(), message: e.to_string() })?;
        Self::from_file(&file)
    }

    /// Loads and validates a chain description file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = Error::read(path)?;
        let file: ChainFile =
            toml::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_file(&file)
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[JointSpec<T>] {
        &self.joints
    }

    pub fn links(&self) -> &[LinkInertia<T>] {
        &self.links
    }

    pub fn sites(&self) -> &[SiteSpec<T>] {
        &self.sites
    }

    pub fn gravity(&self) -> Vector3<T> {
        self.gravity
    }

    pub fn site_index(&self, name: &str) -> Option<usize> {
        self.sites.iter().position(|s| s.name == name)
    }

    /// Motor parameters of joint `i`.
    pub fn motor(&self, i: usize) -> &MotorParams<T> {
        &self.motors[&self.joints[i].motor]
    }

    pub fn motors(&self) -> &BTreeMap<String, MotorParams<T>> {
        &self.motors
    }

    pub fn gear_ratios(&self) -> DVector<T> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.gear_ratio))
    }

    /// Clamps `q` into the joint limits.
    pub fn clamp_to_limits(&self, q: &mut DVector<T>) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.limits.0, j.limits.1);
        }
    }

    pub fn within_limits(&self, q: &DVector<T>) -> bool {
        q.iter().zip(&self.joints).all(|(v, j)| *v >= j.limits.0 && *v <= j.limits.1)
    }

    /// Joints from `joint` up to the root, nearest first.
    pub fn ancestors(&self, joint: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(Some(joint), move |&j| self.joints[j].parent)
    }

    fn check_q(&self, q: &DVector<T>) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::dims("joint vector", self.dof(), q.len()));
        }
        Ok(())
    }

    /// World pose of every joint frame (after the joint's own rotation).
    pub fn joint_frames(&self, q: &DVector<T>) -> Result<Vec<Isometry3<T>>> {
        self.check_q(q)?;
        let mut frames: Vec<Isometry3<T>> = Vec::with_capacity(self.dof());
        for (i, j) in self.joints.iter().enumerate() {
            let parent = j.parent.map_or_else(Isometry3::identity, |p| frames[p]);
            let rot = UnitQuaternion::from_axis_angle(&j.axis, q[i]);
            frames.push(parent * j.origin * rot);
        }
        Ok(frames)
    }

    fn site_frame(&self, frames: &[Isometry3<T>], site: usize) -> Isometry3<T> {
        let s = &self.sites[site];
        frames[s.parent] * s.offset
    }

    /// World pose of every site.
    pub fn forward_kinematics(&self, q: &DVector<T>) -> Result<Vec<Pose<T>>> {
        let frames = self.joint_frames(q)?;
        Ok((0..self.sites.len()).map(|s| Pose::from_isometry(&self.site_frame(&frames, s))).collect())
    }

    pub fn site_pose(&self, q: &DVector<T>, site: usize) -> Result<Pose<T>> {
        self.check_site(site)?;
        let frames = self.joint_frames(q)?;
        Ok(Pose::from_isometry(&self.site_frame(&frames, site)))
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.sites.len() {
            return Err(Error::validation("site index", format!("{site} >= {}", self.sites.len())));
        }
        Ok(())
    }

    /// Translational and rotational Jacobians of `point` rigidly attached to `joint`.
    fn point_jacobian(
        &self,
        frames: &[Isometry3<T>],
        joint: usize,
        point: &Vector3<T>,
    ) -> (Matrix3xX<T>, Matrix3xX<T>) {
        let n = self.dof();
        let mut jp = Matrix3xX::zeros(n);
        let mut jr = Matrix3xX::zeros(n);
        for a in self.ancestors(joint) {
            let axis = frames[a].rotation * self.joints[a].axis.into_inner();
            let lever = point - frames[a].translation.vector;
            jp.set_column(a, &axis.cross(&lever));
            jr.set_column(a, &axis);
        }
        (jp, jr)
    }

    /// Site Jacobians `(Jp, Jr)` in the world frame, from precomputed joint frames.
    pub fn jacobian_from_frames(&self, frames: &[Isometry3<T>], site: usize) -> (Matrix3xX<T>, Matrix3xX<T>) {
        let p = self.site_frame(frames, site).translation.vector;
        self.point_jacobian(frames, self.sites[site].parent, &p)
    }

    /// Site Jacobians `(Jp, Jr)`: 3 x n each, world frame. Columns of joints
    /// that are not ancestors of the site are zero.
    pub fn jacobian(&self, q: &DVector<T>, site: usize) -> Result<(Matrix3xX<T>, Matrix3xX<T>)> {
        self.check_site(site)?;
        let frames = self.joint_frames(q)?;
        Ok(self.jacobian_from_frames(&frames, site))
    }

    /// Joint torques the motors must exert to hold `q` against gravity
    /// (joint side, before gear reduction).
    pub fn gravity_torques(&self, q: &DVector<T>) -> Result<DVector<T>> {
        let frames = self.joint_frames(q)?;
        Ok(self.gravity_torques_from_frames(&frames))
    }

    pub fn gravity_torques_from_frames(&self, frames: &[Isometry3<T>]) -> DVector<T> {
        let mut tau = DVector::zeros(self.dof());
        for (i, link) in self.links.iter().enumerate() {
            if link.mass == T::zero() {
                continue;
            }
            let com = frames[i] * nalgebra::Point3::from(link.com);
            let weight = self.gravity * link.mass;
            for a in self.ancestors(i) {
                let axis = frames[a].rotation * self.joints[a].axis.into_inner();
                let lever = com.coords - frames[a].translation.vector;
                tau[a] -= axis.cross(&lever).dot(&weight);
            }
        }
        tau
    }

    /// Gravitational potential energy `-sum m_i g·c_i`, J.
    pub fn potential_energy(&self, q: &DVector<T>) -> Result<T> {
        let frames = self.joint_frames(q)?;
        Ok(self
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let com = frames[i] * nalgebra::Point3::from(l.com);
                -(self.gravity.dot(&com.coords) * l.mass)
            })
            .fold(T::zero(), |a, b| a + b))
    }

    /// Chain file record equivalent to this model.
    pub fn to_file(&self) -> ChainFile {
        let q4 = |q: &UnitQuaternion<T>| [to_f64(q.w), to_f64(q.i), to_f64(q.j), to_f64(q.k)];
        let v3 = |v: &Vector3<T>| [to_f64(v.x), to_f64(v.y), to_f64(v.z)];
        ChainFile {
            gravity: v3(&self.gravity),
            motors: self.motors.iter().map(|(k, m)| (k.clone(), m.to_record())).collect(),
            joints: self
                .joints
                .iter()
                .map(|j| JointRecord {
                    name: j.name.clone(),
                    parent: j.parent,
                    origin_translation: v3(&j.origin.translation.vector),
                    origin_rotation: q4(&j.origin.rotation),
                    axis: v3(&j.axis),
                    limits: [to_f64(j.limits.0), to_f64(j.limits.1)],
                    gear_ratio: to_f64(j.gear_ratio),
                    motor: j.motor.clone(),
                })
                .collect(),
            links: self.links.iter().map(|l| LinkRecord { mass: to_f64(l.mass), com: v3(&l.com) }).collect(),
            sites: self
                .sites
                .iter()
                .map(|s| SiteRecord {
                    name: s.name.clone(),
                    parent: s.parent,
                    translation: v3(&s.offset.translation.vector),
                    rotation: q4(&s.offset.rotation),
                })
                .collect(),
        }
    }
}
