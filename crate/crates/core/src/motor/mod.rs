//! Actuator telemetry to external joint torque.
//!
//! PWM duty (or a measured winding current) is turned into winding current,
//! then into load torque with a drive-direction dependent efficiency, and
//! finally into external joint torque after gear scaling and gravity
//! compensation.

mod calibration;

pub use calibration::{calibrate_kt_eta, calibrate_kt_with_eta, calibrate_kv, calibrate_rw, KtEtaFit, KvFit, RwFit};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, signum0, to_f64, Real};

/// Electrical and mechanical constants of one actuator.
///
/// `kv` relates the velocity reported in telemetry to back-EMF; `kt` and
/// `eta` describe the motor side of the transmission (before the gear ratio).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotorParams<T: Real> {
    /// Velocity constant, rad/s per V.
    pub kv: T,
    /// Winding resistance, ohm.
    pub rw: T,
    /// Torque constant, N·m/A.
    pub kt: T,
    /// Transmission efficiency in (0, 1].
    pub eta: T,
    /// Bus voltage, V.
    pub vbus: T,
    /// Velocity debounce threshold for the drive-state switch, rad/s.
    pub eps_vel: T,
    pub has_current_sensor: bool,
}

impl<T: Real> MotorParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [("kv", self.kv), ("rw", self.rw), ("kt", self.kt), ("vbus", self.vbus)];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::validation("motor params", format!("{name} must be > 0, got {}", to_f64(v))));
            }
        }
        if !(self.eta > T::zero() && self.eta <= T::one()) {
            return Err(Error::validation("motor params", format!("eta must lie in (0, 1], got {}", to_f64(self.eta))));
        }
        if !(self.eps_vel >= T::zero()) {
            return Err(Error::validation(
                "motor params",
                format!("eps_vel must be >= 0, got {}", to_f64(self.eps_vel)),
            ));
        }
        Ok(())
    }

    pub fn to_record(&self) -> MotorRecord {
        MotorRecord {
            kv: to_f64(self.kv),
            rw: to_f64(self.rw),
            kt: to_f64(self.kt),
            eta: to_f64(self.eta),
            vbus: to_f64(self.vbus),
            eps_vel: to_f64(self.eps_vel),
            has_current_sensor: self.has_current_sensor,
        }
    }
}

/// On-disk form of [`MotorParams`], one entry of the `motors` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorRecord {
    pub kv: f64,
    pub rw: f64,
    pub kt: f64,
    #[serde(default = "one")]
    pub eta: f64,
    pub vbus: f64,
    #[serde(default)]
    pub eps_vel: f64,
    #[serde(default)]
    pub has_current_sensor: bool,
}

fn one() -> f64 {
    1.0
}

impl MotorRecord {
    pub fn to_params<T: Real>(&self) -> Result<MotorParams<T>> {
        let p = MotorParams {
            kv: lit(self.kv),
            rw: lit(self.rw),
            kt: lit(self.kt),
            eta: lit(self.eta),
            vbus: lit(self.vbus),
            eps_vel: lit(self.eps_vel),
            has_current_sensor: self.has_current_sensor,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Direction of mechanical power flow through the transmission.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum DriveState {
    /// Motor drives the load (d = +1).
    #[default]
    Forward,
    /// Load back-drives the motor (d = -1).
    Backward,
}

impl DriveState {
    pub fn sign(self) -> i8 {
        match self {
            DriveState::Forward => 1,
            DriveState::Backward => -1,
        }
    }
}

/// Winding current from signed PWM duty and velocity: `(pwm*vbus - qdot/kv) / rw`.
pub fn pwm_to_current<T: Real>(pwm: T, qdot: T, params: &MotorParams<T>) -> Result<T> {
    if !(pwm.abs() <= T::one()) {
        return Err(Error::OutOfRange { what: "pwm duty", value: to_f64(pwm) });
    }
    let v_pwm = pwm * params.vbus;
    let v_emf = qdot / params.kv;
    Ok((v_pwm - v_emf) / params.rw)
}

/// Load torque with direction-dependent efficiency.
///
/// The drive state only switches when `|qdot| > eps_vel` and the power flow
/// `kt*I*qdot` is nonzero; otherwise the previous state is kept.
pub fn load_torque<T: Real>(current: T, qdot: T, params: &MotorParams<T>, prev: DriveState) -> (T, DriveState) {
    let tau_w = params.kt * current;
    let drive = if qdot.abs() > params.eps_vel {
        let s = signum0(tau_w * qdot);
        if s > T::zero() {
            DriveState::Forward
        } else if s < T::zero() {
            DriveState::Backward
        } else {
            prev
        }
    } else {
        prev
    };
    let tau = match drive {
        DriveState::Forward => params.eta * tau_w,
        DriveState::Backward => tau_w / params.eta,
    };
    (tau, drive)
}

/// Inverse of [`load_torque`] for a known drive state: the winding current
/// that yields `tau_load`.
pub fn current_for_load<T: Real>(tau_load: T, params: &MotorParams<T>, drive: DriveState) -> T {
    match drive {
        DriveState::Forward => tau_load / (params.eta * params.kt),
        DriveState::Backward => tau_load * params.eta / params.kt,
    }
}

/// `tau_ext = -(r * tau_load - tau_grav)`.
///
/// `tau_grav` is the joint-side holding torque, so a chain at rest in free
/// space yields zero.
#[inline]
pub fn external_joint_torque<T: Real>(tau_load: T, tau_grav: T, gear_ratio: T) -> T {
    -(gear_ratio * tau_load - tau_grav)
}

/// Per-joint drive states plus the exponential moving average of external torque.
#[derive(Clone, Debug, PartialEq)]
pub struct TorqueEstimatorState<T: Real> {
    pub drive: Vec<DriveState>,
    ema: Option<DVector<T>>,
    alpha: T,
}

impl<T: Real> TorqueEstimatorState<T> {
    pub fn new(joints: usize, alpha: T) -> Result<Self> {
        if !(alpha >= T::zero() && alpha <= T::one()) {
            return Err(Error::OutOfRange { what: "ema alpha", value: to_f64(alpha) });
        }
        Ok(Self { drive: vec![DriveState::Forward; joints], ema: None, alpha })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// Filtered value from the last [`ema_step`](Self::ema_step), if any.
    pub fn filtered(&self) -> Option<&DVector<T>> {
        self.ema.as_ref()
    }

    /// `y <- alpha*x + (1-alpha)*y_prev`. The first sample primes the filter.
    pub fn ema_step(&mut self, raw: &DVector<T>) -> Result<DVector<T>> {
        let y = match &self.ema {
            None => raw.clone(),
            Some(prev) => {
                if prev.len() != raw.len() {
                    return Err(Error::dims("ema input", prev.len(), raw.len()));
                }
                raw * self.alpha + prev * (T::one() - self.alpha)
            }
        };
        self.ema = Some(y.clone());
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MotorParams<f64> {
        MotorParams { kv: 5.0, rw: 3.0, kt: 0.5, eta: 0.8, vbus: 12.0, eps_vel: 0.01, has_current_sensor: false }
    }

    #[test]
    fn pwm_current_zero_back_emf() {
        let i = pwm_to_current(0.5, 0.0, &params()).unwrap();
        assert!((i - 2.0).abs() < 1e-15);
    }

    #[test]
    fn pwm_current_hand_arithmetic() {
        let p = MotorParams { vbus: 16.0, kv: 5.0, rw: 2.0, ..params() };
        let i = pwm_to_current(0.8, 20.0, &p).unwrap();
        assert!((i - 4.4).abs() < 1e-12);
    }

    #[test]
    fn pwm_current_vanishes_at_back_emf_balance() {
        let p = params();
        for pwm in [-0.7, -0.1, 0.3, 1.0] {
            let qdot = pwm * p.vbus * p.kv;
            assert!(pwm_to_current(pwm, qdot, &p).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn pwm_out_of_range_rejected() {
        assert!(matches!(pwm_to_current(1.2, 0.0, &params()), Err(Error::OutOfRange { .. })));
        assert!(pwm_to_current(f64::NAN, 0.0, &params()).is_err());
    }

    #[test]
    fn forward_and_backward_branches() {
        let p = params();
        let (tau, d) = load_torque(1.0, 2.0, &p, DriveState::Forward);
        assert!((tau - 0.4).abs() < 1e-15);
        assert_eq!(d, DriveState::Forward);
        let (tau, d) = load_torque(1.0, -2.0, &p, DriveState::Forward);
        assert!((tau - 0.625).abs() < 1e-15);
        assert_eq!(d, DriveState::Backward);
    }

    #[test]
    fn debounce_keeps_initial_forward_state() {
        let p = params();
        let (tau, d) = load_torque(1.0, -0.005, &p, DriveState::default());
        assert_eq!(d, DriveState::Forward);
        assert!((tau - 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_power_flow_keeps_previous_state() {
        let p = params();
        let (_, d) = load_torque(0.0, 3.0, &p, DriveState::Backward);
        assert_eq!(d, DriveState::Backward);
    }

    #[test]
    fn current_for_load_inverts_load_torque() {
        let p = params();
        for d in [DriveState::Forward, DriveState::Backward] {
            let i = current_for_load(0.37, &p, d);
            let (tau, _) = load_torque(i, 0.0, &p, d);
            assert!((tau - 0.37).abs() < 1e-15);
        }
    }

    #[test]
    fn external_torque_examples() {
        assert!(external_joint_torque(0.01_f64, 2.0, 200.0).abs() < 1e-15);
        assert_eq!(external_joint_torque(1.0, 0.0, 1.0), -1.0);
    }

    #[test]
    fn ema_passthrough_and_frozen() {
        let mut s = TorqueEstimatorState::<f64>::new(2, 1.0).unwrap();
        s.ema_step(&DVector::from_vec(vec![0.0, 0.0])).unwrap();
        let y = s.ema_step(&DVector::from_vec(vec![3.0, -1.0])).unwrap();
        assert_eq!(y.as_slice(), &[3.0, -1.0]);

        let mut s = TorqueEstimatorState::<f64>::new(1, 0.0).unwrap();
        s.ema_step(&DVector::from_vec(vec![0.5])).unwrap();
        for x in [1.0, -4.0, 9.0] {
            let y = s.ema_step(&DVector::from_vec(vec![x])).unwrap();
            assert_eq!(y[0], 0.5);
        }
    }

    #[test]
    fn ema_step_response_is_geometric() {
        let mut s = TorqueEstimatorState::<f64>::new(1, 0.9).unwrap();
        s.ema_step(&DVector::from_vec(vec![0.0])).unwrap();
        for k in 1..=5 {
            let y = s.ema_step(&DVector::from_vec(vec![1.0])).unwrap();
            // Oracle: partial sum of the geometric series 0.9 * sum 0.1^j.
            let oracle: f64 = (0..k).map(|j| 0.9 * 0.1f64.powi(j)).sum();
            assert!((y[0] - oracle).abs() < 1e-14);
            assert!((y[0] - (1.0 - 0.1f64.powi(k))).abs() < 1e-14);
        }
    }

    #[test]
    fn ema_rejects_bad_alpha() {
        assert!(TorqueEstimatorState::<f64>::new(1, 1.5).is_err());
        assert!(TorqueEstimatorState::<f64>::new(1, -0.1).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(params().validate().is_ok());
        assert!(MotorParams { eta: 1.2, ..params() }.validate().is_err());
        assert!(MotorParams { rw: 0.0, ..params() }.validate().is_err());
        assert!(MotorParams { eps_vel: -1.0, ..params() }.validate().is_err());
    }

    #[test]
    fn works_in_f32() {
        let p = MotorParams::<f32> {
            kv: 5.0,
            rw: 3.0,
            kt: 0.5,
            eta: 0.8,
            vbus: 12.0,
            eps_vel: 0.01,
            has_current_sensor: false,
        };
        let i = pwm_to_current(0.5f32, 0.0, &p).unwrap();
        let (tau, _) = load_torque(i, 1.0, &p, DriveState::Forward);
        assert!((tau - 0.8).abs() < 1e-6);
    }
}
