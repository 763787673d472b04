//! Hybrid force–velocity commands: stiff along the commanded velocity,
//! compliant (with a force offset) across it.

use nalgebra::{Matrix3, Vector3, Vector6};

use crate::admittance::{block_diag, critical_damping, ComplianceCommand};
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::scalar::{to_f64, Real};
use crate::wrench::Wrench;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HybridCommand<T: Real> {
    /// Desired Cartesian velocity, m/s.
    pub velocity: Vector3<T>,
    pub k_low: T,
    pub k_high: T,
    /// Force offset applied in the compliant directions.
    pub f_offset: Wrench<T>,
}

impl<T: Real> HybridCommand<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_low >= T::zero() && self.k_low <= self.k_high) {
            return Err(Error::validation(
                "hybrid command",
                format!("need 0 <= k_low <= k_high, got {} and {}", to_f64(self.k_low), to_f64(self.k_high)),
            ));
        }
        if self.velocity.iter().any(|v| !v.is_finite()) || !self.f_offset.is_finite() {
            return Err(Error::NonFinite("hybrid command"));
        }
        Ok(())
    }
}

/// `K = k_low I + (k_high − k_low) v vᵀ / ‖v‖²`; `k_low I` when `v = 0`.
pub fn stiffness_from_velocity<T: Real>(cmd: &HybridCommand<T>) -> Matrix3<T> {
    let n2 = cmd.velocity.norm_squared();
    let iso = Matrix3::identity() * cmd.k_low;
    if !(n2 > T::zero()) {
        return iso;
    }
    let u = cmd.velocity / n2.sqrt();
    iso + u * u.transpose() * (cmd.k_high - cmd.k_low)
}

/// Advances the desired position by `dt * v`; orientation is untouched.
pub fn integrate_velocity<T: Real>(x_des: &Pose<T>, velocity: &Vector3<T>, dt: T) -> Result<Pose<T>> {
    if !(dt > T::zero()) {
        return Err(Error::OutOfRange { what: "dt", value: to_f64(dt) });
    }
    Ok(Pose { position: x_des.position + velocity * dt, orientation: x_des.orientation })
}

/// Compliance command realizing a hybrid action: translational stiffness from
/// the velocity direction, the given rotational block, critical damping, the
/// force offset as `f_cmd`, and `ẋ_des = (v, 0)`.
pub fn make_compliance_command<T: Real>(
    cmd: &HybridCommand<T>,
    x_des: Pose<T>,
    rotational_stiffness: &Matrix3<T>,
) -> Result<ComplianceCommand<T>> {
    cmd.validate()?;
    let kp = block_diag(&stiffness_from_velocity(cmd), rotational_stiffness);
    let kd = critical_damping(&kp)?;
    let v = cmd.velocity;
    Ok(ComplianceCommand {
        x_des,
        xdot_des: Vector6::new(v.x, v.y, v.z, T::zero(), T::zero(), T::zero()),
        kp,
        kd,
        f_cmd: cmd.f_offset,
        mass: T::one(),
    })
}
