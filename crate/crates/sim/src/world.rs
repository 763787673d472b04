//! Simulated servos, contact springs and scripted loads.

use complyctl_core::motor::{current_for_load, DriveState, MotorParams};
use complyctl_core::{Chain, DriveSignal, Error, Result, Sample, Wrench64};
use nalgebra::{DVector, Unit, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// True motor plus the servo's internal position loop. Gains are joint-side.
#[derive(Clone, Debug, PartialEq)]
pub struct SimMotor {
    pub params: MotorParams<f64>,
    /// Standard deviation of multiplicative current noise, as a fraction.
    pub current_noise: f64,
    /// Current quantization step (A); zero disables it.
    pub quantization: f64,
    pub kp_servo: f64,
    pub kd_servo: f64,
    /// Reflected joint inertia (kg·m²).
    pub inertia: f64,
}

impl SimMotor {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let checks = [
            ("current noise", self.current_noise, self.current_noise >= 0.0),
            ("quantization", self.quantization, self.quantization >= 0.0),
            ("servo kp", self.kp_servo, self.kp_servo >= 0.0),
            ("servo kd", self.kd_servo, self.kd_servo >= 0.0),
            ("joint inertia", self.inertia, self.inertia > 0.0),
        ];
        for (what, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::OutOfRange { what, value });
            }
        }
        Ok(())
    }
}

/// Penalty-spring plane acting on one site. Tangential friction is Coulomb
/// capped and regularized by `viscosity` near zero slip speed.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactSurface {
    pub point: Vector3<f64>,
    pub normal: Unit<Vector3<f64>>,
    pub stiffness: f64,
    pub friction: f64,
    pub viscosity: f64,
    pub site: usize,
}

impl ContactSurface {
    pub fn penetration(&self, p: &Vector3<f64>) -> f64 {
        -(p - self.point).dot(&self.normal)
    }

    /// Force on the site for position `p` and velocity `v`.
    pub fn force(&self, p: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
        let pen = self.penetration(p);
        if pen <= 0.0 {
            return Vector3::zeros();
        }
        let fn_mag = self.stiffness * pen;
        let n = self.normal.into_inner();
        let vt = v - n * v.dot(&n);
        let speed = vt.norm();
        let ft = if speed > 0.0 {
            -vt * ((self.viscosity * speed).min(self.friction * fn_mag) / speed)
        } else {
            Vector3::zeros()
        };
        n * fn_mag + ft
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TelemetryMode {
    #[default]
    Current,
    Pwm,
}

pub struct SimWorld {
    chain: Chain,
    motors: Vec<SimMotor>,
    surfaces: Vec<ContactSurface>,
    rng: ChaCha8Rng,
    substeps: usize,
    mode: TelemetryMode,
    gravity_feedforward: bool,
    q: DVector<f64>,
    qdot: DVector<f64>,
    servo_target: DVector<f64>,
    drive: Vec<DriveState>,
    pushes: Vec<(usize, Vector3<f64>)>,
    t: f64,
}

/// Construction parameters for [`SimWorld`].
#[derive(Clone, Debug)]
pub struct WorldSetup {
    pub chain: Chain,
    pub motors: Vec<SimMotor>,
    pub surfaces: Vec<ContactSurface>,
    pub seed: u64,
    /// Physics substeps per control period; at least 4.
    pub substeps: usize,
    pub mode: TelemetryMode,
    /// Servo adds the true gravity torque to its PD effort.
    pub gravity_feedforward: bool,
    pub q0: DVector<f64>,
}

impl SimWorld {
    pub fn new(setup: WorldSetup) -> Result<Self> {
        let n = setup.chain.dof();
        if setup.motors.len() != n {
            return Err(Error::dims("sim motors", n, setup.motors.len()));
        }
        if setup.q0.len() != n {
            return Err(Error::dims("initial configuration", n, setup.q0.len()));
        }
        if setup.substeps < 4 {
            return Err(Error::validation("sim world", "substeps must be at least 4"));
        }
        for m in &setup.motors {
            m.validate()?;
        }
        for s in &setup.surfaces {
            if s.site >= setup.chain.sites().len() {
                return Err(Error::validation("contact surface", format!("site {} out of range", s.site)));
            }
            if !(s.stiffness > 0.0) || !(s.friction >= 0.0) || !(s.viscosity >= 0.0) {
                return Err(Error::validation(
                    "contact surface",
                    "stiffness must be positive, friction and viscosity non-negative",
                ));
            }
        }
        Ok(Self {
            motors: setup.motors,
            surfaces: setup.surfaces,
            rng: ChaCha8Rng::seed_from_u64(setup.seed),
            substeps: setup.substeps,
            mode: setup.mode,
            gravity_feedforward: setup.gravity_feedforward,
            qdot: DVector::zeros(n),
            servo_target: setup.q0.clone(),
            drive: vec![DriveState::Forward; n],
            pushes: Vec::new(),
            q: setup.q0,
            chain: setup.chain,
            t: 0.0,
        })
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn qdot(&self) -> &DVector<f64> {
        &self.qdot
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn surfaces(&self) -> &[ContactSurface] {
        &self.surfaces
    }

    pub fn motors(&self) -> &[SimMotor] {
        &self.motors
    }

    /// Replaces all scripted point loads acting at `site`.
    pub fn set_push(&mut self, site: usize, force: Vector3<f64>) {
        self.pushes.retain(|(s, _)| *s != site);
        if force != Vector3::zeros() {
            self.pushes.push((site, force));
        }
    }

    pub fn set_state(&mut self, q: DVector<f64>, qdot: DVector<f64>) -> Result<()> {
        let n = self.chain.dof();
        if q.len() != n || qdot.len() != n {
            return Err(Error::dims("sim state", n, q.len()));
        }
        self.q = q;
        self.qdot = qdot;
        Ok(())
    }

    fn site_wrenches(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<Vec<(usize, Vector3<f64>)>> {
        let mut out = self.pushes.clone();
        if self.surfaces.is_empty() {
            return Ok(out);
        }
        let frames = self.chain.joint_frames(q)?;
        for s in &self.surfaces {
            let site = &self.chain.sites()[s.site];
            let p = (frames[site.parent] * site.offset).translation.vector;
            let (jp, _) = self.chain.jacobian_from_frames(&frames, s.site);
            let v = &jp * qdot;
            out.push((s.site, s.force(&p, &v)));
        }
        Ok(out)
    }

    /// Exact contact plus scripted wrench on `site` at the current state.
    pub fn true_wrench(&self, site: usize) -> Result<Wrench64> {
        let mut f = Vector3::zeros();
        for (s, w) in self.site_wrenches(&self.q, &self.qdot)? {
            if s == site {
                f += w;
            }
        }
        Ok(Wrench64::from_force(f))
    }

    /// Joint torques produced by all external forces at the current state.
    pub fn external_joint_torques(&self) -> Result<DVector<f64>> {
        self.external_torques_at(&self.q, &self.qdot)
    }

    fn external_torques_at(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DVector<f64>> {
        let mut tau = DVector::zeros(self.chain.dof());
        let wrenches = self.site_wrenches(q, qdot)?;
        if wrenches.is_empty() {
            return Ok(tau);
        }
        let frames = self.chain.joint_frames(q)?;
        for (site, f) in wrenches {
            let (jp, _) = self.chain.jacobian_from_frames(&frames, site);
            tau += jp.transpose() * f;
        }
        Ok(tau)
    }

    fn torque_limit(&self, i: usize) -> f64 {
        let p = &self.motors[i].params;
        self.chain.joints()[i].gear_ratio * p.eta * p.kt * p.vbus / p.rw
    }

    /// Joint-side servo torque toward `target` at state (q, qdot).
    fn servo_torque(&self, target: &DVector<f64>, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DVector<f64>> {
        let mut tau = DVector::zeros(self.chain.dof());
        let grav = if self.gravity_feedforward { Some(self.chain.gravity_torques(q)?) } else { None };
        for i in 0..tau.len() {
            let m = &self.motors[i];
            let mut t = m.kp_servo * (target[i] - q[i]) - m.kd_servo * qdot[i];
            if let Some(g) = &grav {
                t += g[i];
            }
            let lim = self.torque_limit(i);
            tau[i] = t.clamp(-lim, lim);
        }
        Ok(tau)
    }

    /// Mechanical energy: kinetic, gravitational, servo spring and contact springs.
    /// Gravity is left out when the servo cancels it.
    pub fn energy(&self) -> Result<f64> {
        let mut e = 0.0;
        for i in 0..self.chain.dof() {
            let m = &self.motors[i];
            e += 0.5 * m.inertia * self.qdot[i].powi(2);
            e += 0.5 * m.kp_servo * (self.servo_target[i] - self.q[i]).powi(2);
        }
        if !self.gravity_feedforward {
            e += self.chain.potential_energy(&self.q)?;
        }
        let frames = self.chain.joint_frames(&self.q)?;
        for s in &self.surfaces {
            let site = &self.chain.sites()[s.site];
            let p = (frames[site.parent] * site.offset).translation.vector;
            let pen = s.penetration(&p);
            if pen > 0.0 {
                e += 0.5 * s.stiffness * pen * pen;
            }
        }
        Ok(e)
    }

    /// Advances one control period toward `q_target` and returns the
    /// telemetry sampled at its end.
    pub fn sim_step(&mut self, q_target: &DVector<f64>, dt: f64) -> Result<Sample> {
        let n = self.chain.dof();
        if q_target.len() != n {
            return Err(Error::dims("joint target", n, q_target.len()));
        }
        if !(dt > 0.0) {
            return Err(Error::OutOfRange { what: "dt", value: dt });
        }
        let start = self.servo_target.clone();
        let h = dt / self.substeps as f64;
        for s in 1..=self.substeps {
            let frac = s as f64 / self.substeps as f64;
            let target = &start + (q_target - &start) * frac;
            let tau_servo = self.servo_torque(&target, &self.q, &self.qdot)?;
            let tau_grav = self.chain.gravity_torques(&self.q)?;
            let tau_ext = self.external_torques_at(&self.q, &self.qdot)?;
            for i in 0..n {
                let acc = (tau_servo[i] + tau_ext[i] - tau_grav[i]) / self.motors[i].inertia;
                self.qdot[i] += acc * h;
            }
            self.q += &self.qdot * h;
        }
        self.servo_target = q_target.clone();
        self.t += dt;
        if self.q.iter().chain(self.qdot.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sim state"));
        }
        self.observe()
    }

    /// Telemetry for the current state: the servo effort mapped through the
    /// motor model, then noise and quantization on the current.
    pub fn observe(&mut self) -> Result<Sample> {
        let n = self.chain.dof();
        let tau_servo = self.servo_torque(&self.servo_target, &self.q, &self.qdot)?;
        let mut signal = DVector::zeros(n);
        for i in 0..n {
            let m = &self.motors[i];
            let p = &m.params;
            let qdot = self.qdot[i];
            let tau_load = tau_servo[i] / self.chain.joints()[i].gear_ratio;
            if qdot.abs() > p.eps_vel {
                let power = tau_load * qdot;
                if power > 0.0 {
                    self.drive[i] = DriveState::Forward;
                } else if power < 0.0 {
                    self.drive[i] = DriveState::Backward;
                }
            }
            let mut current = current_for_load(tau_load, p, self.drive[i]);
            if m.current_noise > 0.0 {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                current *= 1.0 + m.current_noise * z;
            }
            if m.quantization > 0.0 {
                current = (current / m.quantization).round() * m.quantization;
            }
            signal[i] = match self.mode {
                TelemetryMode::Current => current,
                TelemetryMode::Pwm => ((current * p.rw + qdot / p.kv) / p.vbus).clamp(-1.0, 1.0),
            };
        }
        let drive = match self.mode {
            TelemetryMode::Current => DriveSignal::Current(signal),
            TelemetryMode::Pwm => DriveSignal::Pwm(signal),
        };
        Ok(Sample { t: self.t, q: self.q.clone(), qdot: self.qdot.clone(), drive })
    }
}
