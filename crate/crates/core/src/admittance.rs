//! Spring–mass–damper reference generator.
//!
//! `m ẍ = Kp (x_des ⊖ x) + Kd (ẋ_des − ẋ) + f_cmd + f_ext`, integrated with
//! semi-implicit Euler (velocity first, then pose). Orientation lives on the
//! rotation group: errors use the log map and the pose update left-composes
//! `exp(dt ω)`.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::scalar::{lit, to_f64, Real};
use crate::wrench::Wrench;

const SYM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplianceCommand<T: Real> {
    pub x_des: Pose<T>,
    pub xdot_des: Vector6<T>,
    pub kp: Matrix6<T>,
    pub kd: Matrix6<T>,
    pub f_cmd: Wrench<T>,
    pub mass: T,
}

impl<T: Real> ComplianceCommand<T> {
    /// Command holding `x_des` with stiffness `kp` and critical damping.
    pub fn critically_damped(x_des: Pose<T>, kp: Matrix6<T>) -> Result<Self> {
        let kd = critical_damping(&kp)?;
        Ok(Self { x_des, xdot_des: Vector6::zeros(), kp, kd, f_cmd: Wrench::zero(), mass: T::one() })
    }

    pub fn validate(&self) -> Result<()> {
        check_psd("Kp", &self.kp)?;
        check_psd("Kd", &self.kd)?;
        if !(self.mass > T::zero()) {
            return Err(Error::OutOfRange { what: "effective mass", value: to_f64(self.mass) });
        }
        if !self.x_des.is_finite() || !self.f_cmd.is_finite() || self.xdot_des.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("compliance command"));
        }
        Ok(())
    }
}

fn check_psd<T: Real>(what: &'static str, m: &Matrix6<T>) -> Result<()> {
    let scale = T::one().max(m.amax());
    if to_f64((m - m.transpose()).amax() / scale) > SYM_TOL {
        return Err(Error::validation("stiffness/damping", format!("{what} is not symmetric")));
    }
    let min = m.symmetric_eigenvalues().min();
    if to_f64(min / scale) < -SYM_TOL {
        return Err(Error::validation("stiffness/damping", format!("{what} has negative eigenvalue {}", to_f64(min))));
    }
    Ok(())
}

/// Per-site reference integrated by the admittance loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskState<T: Real> {
    pub x_ref: Pose<T>,
    pub xdot_ref: Vector6<T>,
}

impl<T: Real> TaskState<T> {
    pub fn at_rest(x_ref: Pose<T>) -> Self {
        Self { x_ref, xdot_ref: Vector6::zeros() }
    }
}

/// `Kd = 2 Kp^{1/2}` via the symmetric eigendecomposition of `Kp`.
pub fn critical_damping<T: Real>(kp: &Matrix6<T>) -> Result<Matrix6<T>> {
    check_psd("Kp", kp)?;
    let sym = (kp + kp.transpose()) * lit::<T>(0.5);
    let eig = sym.symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(T::zero()).sqrt() * lit::<T>(2.0));
    let kd = eig.eigenvectors * Matrix6::from_diagonal(&roots) * eig.eigenvectors.transpose();
    Ok((kd + kd.transpose()) * lit::<T>(0.5))
}

/// Reference acceleration of the spring–mass–damper model.
pub fn smd_accel<T: Real>(state: &TaskState<T>, cmd: &ComplianceCommand<T>, f_ext: &Wrench<T>) -> Vector6<T> {
    let e = state.x_ref.error_to(&cmd.x_des);
    let ev = cmd.xdot_des - state.xdot_ref;
    (cmd.kp * e + cmd.kd * ev + cmd.f_cmd.as_vector() + f_ext.as_vector()) / cmd.mass
}

fn stability_number<T: Real>(cmd: &ComplianceCommand<T>, dt: T) -> T {
    let lmax = cmd.kp.symmetric_eigenvalues().max().max(T::zero());
    dt * (lmax / cmd.mass).sqrt()
}

/// One semi-implicit Euler step.
pub fn step<T: Real>(
    state: &TaskState<T>,
    cmd: &ComplianceCommand<T>,
    f_ext: &Wrench<T>,
    dt: T,
) -> Result<TaskState<T>> {
    step_limited(state, cmd, f_ext, dt, None)
}

/// As [`step`], with the linear part of the reference velocity clamped to
/// `max_linear_speed` (m/s) before the pose update.
pub fn step_limited<T: Real>(
    state: &TaskState<T>,
    cmd: &ComplianceCommand<T>,
    f_ext: &Wrench<T>,
    dt: T,
    max_linear_speed: Option<T>,
) -> Result<TaskState<T>> {
    if !(dt > T::zero()) {
        return Err(Error::OutOfRange { what: "dt", value: to_f64(dt) });
    }
    let s = stability_number(cmd, dt);
    if s > T::one() {
        return Err(Error::Unstable(to_f64(s)));
    }
    let accel = smd_accel(state, cmd, f_ext);
    let mut xdot = state.xdot_ref + accel * dt;
    if let Some(limit) = max_linear_speed {
        let mut lin = xdot.fixed_rows_mut::<3>(0);
        let speed = lin.norm();
        if speed > limit {
            lin *= limit / speed;
        }
    }
    let x_ref = state.x_ref.retract(&(xdot * dt));
    if !x_ref.is_finite() || xdot.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("admittance state"));
    }
    Ok(TaskState { x_ref, xdot_ref: xdot })
}

/// `Kp = k_t I + (k_n − k_t) n nᵀ`: `k_n` along the surface normal, `k_t` in the tangent plane.
pub fn stiffness_from_normal<T: Real>(normal: &Vector3<T>, k_normal: T, k_tangential: T) -> Result<Matrix3<T>> {
    let n = to_f64(normal.norm());
    if !((n - 1.0).abs() <= SYM_TOL) {
        return Err(Error::validation("surface normal", format!("must be unit norm, got {n}")));
    }
    if !(k_normal >= T::zero() && k_tangential >= T::zero()) {
        return Err(Error::validation("stiffness gains", "must be >= 0"));
    }
    Ok(Matrix3::identity() * k_tangential + normal * normal.transpose() * (k_normal - k_tangential))
}

/// Assembles a 6×6 block-diagonal matrix from translational and rotational blocks.
pub fn block_diag<T: Real>(linear: &Matrix3<T>, angular: &Matrix3<T>) -> Matrix6<T> {
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(linear);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(angular);
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag6(v: [f64; 6]) -> Matrix6<f64> {
        Matrix6::from_diagonal(&Vector6::from_row_slice(&v))
    }

    #[test]
    fn critical_damping_diagonal() {
        let kd = critical_damping(&diag6([400.0, 100.0, 100.0, 100.0, 100.0, 100.0])).unwrap();
        assert!((kd - diag6([40.0, 20.0, 20.0, 20.0, 20.0, 20.0])).amax() < 1e-12);
        let kd = critical_damping(&Matrix6::identity()).unwrap();
        assert!((kd - Matrix6::identity() * 2.0).amax() < 1e-12);
    }

    #[test]
    fn critical_damping_rejects_bad_input() {
        let mut kp = Matrix6::<f64>::identity();
        kp[(0, 1)] = 0.5;
        assert!(critical_damping(&kp).is_err());
        assert!(critical_damping(&diag6([1.0, 1.0, -1.0, 1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn equilibrium_has_zero_accel() {
        let x = Pose::new(Vector3::new(0.1, 0.2, 0.3), Vector3::new(0.1, 0.0, 0.2));
        let cmd = ComplianceCommand::critically_damped(x, Matrix6::identity() * 100.0).unwrap();
        let a = smd_accel(&TaskState::at_rest(x), &cmd, &Wrench::zero());
        assert!(a.amax() < 1e-12);
    }

    #[test]
    fn pure_spring_accel() {
        let k = diag6([100.0, 200.0, 300.0, 10.0, 20.0, 30.0]);
        let mut cmd = ComplianceCommand::critically_damped(Pose::identity(), k).unwrap();
        cmd.mass = 2.0;
        let x = Pose::new(Vector3::new(-0.01, 0.02, 0.0), Vector3::zeros());
        let a = smd_accel(&TaskState::at_rest(x), &cmd, &Wrench::zero());
        let expect = Vector6::new(100.0 * 0.01, -200.0 * 0.02, 0.0, 0.0, 0.0, 0.0) / 2.0;
        assert!((a - expect).amax() < 1e-12);
    }

    #[test]
    fn one_step_from_rest() {
        let (k, dt) = (50.0, 0.01);
        let mut cmd = ComplianceCommand::critically_damped(
            Pose::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros()),
            Matrix6::identity() * k,
        )
        .unwrap();
        cmd.kd = Matrix6::zeros();
        let s = step(&TaskState::at_rest(Pose::identity()), &cmd, &Wrench::zero(), dt).unwrap();
        assert_eq!(s.xdot_ref[0], dt * k);
        assert_eq!(s.x_ref.position.x, dt * (dt * k));
    }

    #[test]
    fn update_is_the_two_line_recurrence() {
        let kp = diag6([300.0, 200.0, 100.0, 30.0, 20.0, 10.0]);
        let cmd = ComplianceCommand::critically_damped(Pose::new(Vector3::new(0.1, -0.2, 0.05), Vector3::zeros()), kp)
            .unwrap();
        let s0 = TaskState { x_ref: Pose::identity(), xdot_ref: Vector6::new(0.01, 0.0, -0.02, 0.0, 0.0, 0.0) };
        let f = Wrench::from_force(Vector3::new(0.5, 0.0, -1.0));
        let dt = 0.004;
        let s1 = step(&s0, &cmd, &f, dt).unwrap();
        let v = s0.xdot_ref + smd_accel(&s0, &cmd, &f) * dt;
        assert_eq!(s1.xdot_ref, v);
        let p = s0.x_ref.position + v.fixed_rows::<3>(0) * dt;
        assert_eq!(s1.x_ref.position, p);
    }

    #[test]
    fn stability_guard() {
        let cmd = ComplianceCommand::critically_damped(Pose::identity(), Matrix6::identity() * 1e4).unwrap();
        let r = step(&TaskState::at_rest(Pose::identity()), &cmd, &Wrench::zero(), 0.012);
        assert!(matches!(r, Err(Error::Unstable(_))));
        assert!(step(&TaskState::at_rest(Pose::identity()), &cmd, &Wrench::zero(), 0.0).is_err());
    }

    #[test]
    fn velocity_limit_clamps_linear_part() {
        let cmd = ComplianceCommand::critically_damped(
            Pose::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros()),
            Matrix6::identity() * 100.0,
        )
        .unwrap();
        let s: TaskState<f64> =
            step_limited(&TaskState::at_rest(Pose::identity()), &cmd, &Wrench::zero(), 0.01, Some(0.05)).unwrap();
        assert!((s.xdot_ref.fixed_rows::<3>(0).norm() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn stiffness_from_normal_examples() {
        let k = stiffness_from_normal(&Vector3::z(), 100.0, 400.0).unwrap();
        assert!((k - Matrix3::from_diagonal(&Vector3::new(400.0, 400.0, 100.0))).amax() < 1e-12);
        let k = stiffness_from_normal(&Vector3::new(0.6, 0.0, 0.8), 250.0, 250.0).unwrap();
        assert!((k - Matrix3::identity() * 250.0).amax() < 1e-12);
        assert!(stiffness_from_normal(&Vector3::new(0.0, 0.0, 1.1), 1.0, 1.0).is_err());
    }

    #[test]
    fn validate_rejects_asymmetric_and_massless() {
        let mut cmd = ComplianceCommand::critically_damped(Pose::<f64>::identity(), Matrix6::identity()).unwrap();
        assert!(cmd.validate().is_ok());
        cmd.mass = 0.0;
        assert!(cmd.validate().is_err());
        cmd.mass = 1.0;
        cmd.kp[(1, 0)] = 3.0;
        assert!(cmd.validate().is_err());
    }
}
