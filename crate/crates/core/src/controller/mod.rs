//! Per-tick control pipeline: telemetry in, joint position targets out.

mod config;
pub mod io;
mod stream;

use nalgebra::DVector;

use crate::admittance::{step_limited, ComplianceCommand, TaskState};
use crate::chain::ChainModel;
use crate::error::{Error, Result};
use crate::ik::{self, IkTarget};
use crate::motor::{external_joint_torque, load_torque, pwm_to_current, TorqueEstimatorState};
use crate::pose::Pose;
use crate::scalar::Real;
use crate::wrench::{estimate, Wrench};

pub use config::*;
pub use stream::{LatencyStats, StreamSummary, TimedCommand, TraceSink};

/// Motor-side drive signal for all joints.
#[derive(Clone, Debug, PartialEq)]
pub enum DriveSignal<T: Real> {
    Pwm(DVector<T>),
    Current(DVector<T>),
}

impl<T: Real> DriveSignal<T> {
    pub fn values(&self) -> &DVector<T> {
        match self {
            Self::Pwm(v) | Self::Current(v) => v,
        }
    }
}

/// One telemetry sample. Velocities are joint-side.
#[derive(Clone, Debug, PartialEq)]
pub struct Telemetry<T: Real> {
    pub t: T,
    pub q: DVector<T>,
    pub qdot: DVector<T>,
    pub drive: DriveSignal<T>,
}

/// A compliance command bound to a site.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteCommand<T: Real> {
    pub site: usize,
    pub command: ComplianceCommand<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiteTrace<T: Real> {
    pub site: usize,
    pub x_ref: Pose<T>,
    pub x_des: Pose<T>,
    pub f_ext: Wrench<T>,
    pub f_cmd: Wrench<T>,
    pub gram_condition: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord<T: Real> {
    pub t: T,
    pub q: DVector<T>,
    pub q_target: DVector<T>,
    pub sites: Vec<SiteTrace<T>>,
    /// Set when the tick held the previous target.
    pub fault: Option<String>,
}

/// Mutable state carried between ticks.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState<T: Real> {
    pub estimator: TorqueEstimatorState<T>,
    /// Admittance state per site index; `None` until the site is first commanded.
    pub tasks: Vec<Option<TaskState<T>>>,
    pub q_target: DVector<T>,
    pub last_t: Option<T>,
    last_sites: Vec<SiteTrace<T>>,
}

impl<T: Real> ControllerState<T> {
    pub fn last_sites(&self) -> &[SiteTrace<T>] {
        &self.last_sites
    }
}

#[derive(Clone, Debug)]
pub struct Controller<T: Real> {
    chain: ChainModel<T>,
    config: ControllerConfig<T>,
}

impl<T: Real> Controller<T> {
    pub fn new(chain: ChainModel<T>, config: ControllerConfig<T>) -> Result<Self> {
        config.validate()?;
        for s in &config.sites {
            if s.site >= chain.sites().len() {
                return Err(Error::validation("controller config", format!("site {} out of range", s.site)));
            }
        }
        Ok(Self { chain, config })
    }

    pub fn chain(&self) -> &ChainModel<T> {
        &self.chain
    }

    pub fn config(&self) -> &ControllerConfig<T> {
        &self.config
    }

    /// State holding `q0`; the first targets equal the measured configuration
    /// (clamped to limits).
    pub fn init_state(&self, q0: &DVector<T>) -> Result<ControllerState<T>> {
        let n = self.chain.dof();
        if q0.len() != n {
            return Err(Error::dims("initial configuration", n, q0.len()));
        }
        if q0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial configuration"));
        }
        let mut q_target = q0.clone();
        self.chain.clamp_to_limits(&mut q_target);
        Ok(ControllerState {
            estimator: TorqueEstimatorState::new(n, self.config.ema_alpha)?,
            tasks: vec![None; self.chain.sites().len()],
            q_target,
            last_t: None,
            last_sites: Vec::new(),
        })
    }

    /// Default site commands from the configuration, with unset desired
    /// poses holding the site pose at `q`.
    pub fn default_commands(&self, q: &DVector<T>) -> Result<Vec<SiteCommand<T>>> {
        let poses = self.chain.forward_kinematics(q)?;
        Ok(self
            .config
            .sites
            .iter()
            .map(|s| SiteCommand { site: s.site, command: s.instantiate(poses[s.site]) })
            .collect())
    }

    /// Runs one control period. On any failure the previous target is held,
    /// the record carries the fault, and `state` is left untouched.
    pub fn run_step(
        &self,
        state: &mut ControllerState<T>,
        telemetry: &Telemetry<T>,
        commands: &[SiteCommand<T>],
    ) -> TraceRecord<T> {
        let mut next = state.clone();
        match self.try_step(&mut next, telemetry, commands) {
            Ok(record) => {
                *state = next;
                record
            }
            Err(e) => {
                log::warn!("controller tick at t={} held: {e}", telemetry.t);
                self.fault_record(state, telemetry, e.to_string())
            }
        }
    }

    /// Record for a tick that holds the previous target.
    pub fn fault_record(
        &self,
        state: &ControllerState<T>,
        telemetry: &Telemetry<T>,
        message: String,
    ) -> TraceRecord<T> {
        TraceRecord {
            t: telemetry.t,
            q: telemetry.q.clone(),
            q_target: state.q_target.clone(),
            sites: state.last_sites.clone(),
            fault: Some(message),
        }
    }

    /// Joint-space external torque estimate for one sample (unfiltered),
    /// updating the drive-state trackers.
    pub fn external_torques(
        &self,
        state: &mut TorqueEstimatorState<T>,
        telemetry: &Telemetry<T>,
    ) -> Result<DVector<T>> {
        self.check_telemetry(telemetry)?;
        let n = self.chain.dof();
        let frames = self.chain.joint_frames(&telemetry.q)?;
        let tau_grav = self.chain.gravity_torques_from_frames(&frames);
        let mut tau_ext = DVector::zeros(n);
        for i in 0..n {
            let params = self.chain.motor(i);
            let qdot = telemetry.qdot[i];
            let current = match &telemetry.drive {
                DriveSignal::Current(c) => c[i],
                DriveSignal::Pwm(p) => pwm_to_current(p[i], qdot, params)?,
            };
            let (tau_load, drive) = load_torque(current, qdot, params, state.drive[i]);
            state.drive[i] = drive;
            tau_ext[i] = external_joint_torque(tau_load, tau_grav[i], self.chain.joints()[i].gear_ratio);
        }
        if tau_ext.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("external joint torque"));
        }
        Ok(tau_ext)
    }

    fn check_telemetry(&self, tel: &Telemetry<T>) -> Result<()> {
        let n = self.chain.dof();
        if tel.q.len() != n {
            return Err(Error::dims("telemetry q", n, tel.q.len()));
        }
        if tel.qdot.len() != n {
            return Err(Error::dims("telemetry qdot", n, tel.qdot.len()));
        }
        if tel.drive.values().len() != n {
            return Err(Error::dims("telemetry drive signal", n, tel.drive.values().len()));
        }
        let finite = tel.t.is_finite()
            && tel.q.iter().chain(tel.qdot.iter()).chain(tel.drive.values().iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("telemetry"));
        }
        Ok(())
    }

    fn try_step(
        &self,
        state: &mut ControllerState<T>,
        tel: &Telemetry<T>,
        commands: &[SiteCommand<T>],
    ) -> Result<TraceRecord<T>> {
        let cfg = &self.config;
        if let Some(last) = state.last_t {
            if tel.t < last {
                return Err(Error::validation("telemetry", "timestamps must be non-decreasing"));
            }
        }
        let raw = self.external_torques(&mut state.estimator, tel)?;
        let tau = state.estimator.ema_step(&raw)?;
        let frames = self.chain.joint_frames(&tel.q)?;

        let mut commanded = vec![false; self.chain.sites().len()];
        let mut traces = Vec::with_capacity(commands.len());
        let mut targets = Vec::with_capacity(commands.len());
        let mut prev_poses: Option<Vec<Pose<T>>> = None;
        for sc in commands {
            if sc.site >= commanded.len() {
                return Err(Error::validation("site command", format!("site {} out of range", sc.site)));
            }
            if commanded[sc.site] {
                return Err(Error::validation("site command", format!("site {} commanded twice", sc.site)));
            }
            commanded[sc.site] = true;
            let cmd = &sc.command;
            cmd.validate()?;

            let (jp, jr) = self.chain.jacobian_from_frames(&frames, sc.site);
            let est = estimate(&cfg.estimator, &jp, &jr, &tau)?;

            let x_ref = match cfg.variant {
                ControllerVariant::Position => {
                    state.tasks[sc.site] = Some(TaskState::at_rest(cmd.x_des));
                    cmd.x_des
                }
                variant => {
                    let task = match state.tasks[sc.site] {
                        Some(task) => task,
                        None => {
                            if prev_poses.is_none() {
                                prev_poses = Some(self.chain.forward_kinematics(&state.q_target)?);
                            }
                            TaskState::at_rest(prev_poses.as_ref().unwrap()[sc.site])
                        }
                    };
                    let f_ext = match variant {
                        ControllerVariant::Full => est.wrench,
                        _ => Wrench::zero(),
                    };
                    let limit = cfg.velocity_limits.map(|l| {
                        if est.wrench.force.norm() > cfg.contact_force_threshold {
                            l.contact
                        } else {
                            l.free_space
                        }
                    });
                    let next = step_limited(&task, cmd, &f_ext, cfg.dt, limit)?;
                    state.tasks[sc.site] = Some(next);
                    next.x_ref
                }
            };
            targets.push(IkTarget { site: sc.site, pose: x_ref });
            traces.push(SiteTrace {
                site: sc.site,
                x_ref,
                x_des: cmd.x_des,
                f_ext: est.wrench,
                f_cmd: cmd.f_cmd,
                gram_condition: est.gram_condition,
            });
        }
        for (site, task) in state.tasks.iter_mut().enumerate() {
            if !commanded[site] {
                *task = None;
            }
        }

        let q_target = if targets.is_empty() {
            state.q_target.clone()
        } else {
            let (q_ik, report) = ik::solve(&self.chain, &state.q_target, &targets, &cfg.ik)?;
            if !report.converged {
                log::debug!(
                    "ik residual at t={}: position {} orientation {}",
                    tel.t,
                    report.position_error,
                    report.orientation_error
                );
            }
            self.limit_jump(&state.q_target, q_ik)
        };
        if q_target.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("joint target"));
        }
        state.q_target = q_target.clone();
        state.last_t = Some(tel.t);
        state.last_sites = traces.clone();
        Ok(TraceRecord { t: tel.t, q: tel.q.clone(), q_target, sites: traces, fault: None })
    }

    fn limit_jump(&self, prev: &DVector<T>, mut q: DVector<T>) -> DVector<T> {
        let step = self.config.ik.max_joint_step;
        for (qi, pi) in q.iter_mut().zip(prev.iter()) {
            *qi = qi.clamp(*pi - step, *pi + step);
        }
        self.chain.clamp_to_limits(&mut q);
        q
    }
}
