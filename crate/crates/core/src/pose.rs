//! Task-space poses with rotation-vector orientation.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3, Vector6};

use crate::scalar::Real;

/// Position plus orientation stored as a rotation vector (axis * angle).
///
/// The rotation vector is kept canonical: its norm never exceeds pi.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<T: Real> {
    pub position: Vector3<T>,
    pub orientation: Vector3<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(position: Vector3<T>, orientation: Vector3<T>) -> Self {
        Self::from_rotation(position, UnitQuaternion::from_scaled_axis(orientation))
    }

    pub fn identity() -> Self {
        Self { position: Vector3::zeros(), orientation: Vector3::zeros() }
    }

    pub fn from_rotation(position: Vector3<T>, rotation: UnitQuaternion<T>) -> Self {
        Self { position, orientation: log_map(&rotation) }
    }

    pub fn from_isometry(iso: &Isometry3<T>) -> Self {
        Self::from_rotation(iso.translation.vector, iso.rotation)
    }

    pub fn rotation(&self) -> UnitQuaternion<T> {
        UnitQuaternion::from_scaled_axis(self.orientation)
    }

    pub fn to_isometry(&self) -> Isometry3<T> {
        Isometry3::from_parts(Translation3::from(self.position), self.rotation())
    }

    /// `target ⊖ self`: position difference and the world-frame rotation
    /// vector of `R_target * R_selfᵀ`.
    pub fn error_to(&self, target: &Pose<T>) -> Vector6<T> {
        let dp = target.position - self.position;
        let dr = log_map(&(target.rotation() * self.rotation().inverse()));
        Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
    }

    /// `self ⊕ delta`: translate, then left-compose `exp(delta_rot)`.
    pub fn retract(&self, delta: &Vector6<T>) -> Pose<T> {
        let dp = delta.fixed_rows::<3>(0).into_owned();
        let dr = delta.fixed_rows::<3>(3).into_owned();
        Pose::from_rotation(self.position + dp, UnitQuaternion::from_scaled_axis(dr) * self.rotation())
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.orientation.iter()).all(|v| v.is_finite())
    }

    pub fn as_vector(&self) -> Vector6<T> {
        Vector6::new(
            self.position.x,
            self.position.y,
            self.position.z,
            self.orientation.x,
            self.orientation.y,
            self.orientation.z,
        )
    }
}

/// Rotation vector of a unit quaternion with angle in `[0, pi]`.
pub fn log_map<T: Real>(q: &UnitQuaternion<T>) -> Vector3<T> {
    // scaled_axis already folds the double cover so the angle is <= pi.
    let v = q.scaled_axis();
    let n = v.norm();
    if n > T::pi() {
        // Rounding can push the angle a hair above pi; flip to the equivalent vector.
        v * ((n - T::two_pi()) / n)
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rotation_vector_is_canonical() {
        let p = Pose::<f64>::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.5 * PI));
        assert!(p.orientation.norm() <= PI + 1e-15);
        assert!((p.orientation.z + 0.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn error_and_retract_are_inverse() {
        let a = Pose::<f64>::new(Vector3::new(0.1, -0.2, 0.3), Vector3::new(0.3, 0.2, -0.1));
        let b = Pose::<f64>::new(Vector3::new(0.4, 0.0, 0.1), Vector3::new(-0.5, 0.9, 0.2));
        let e = a.error_to(&b);
        let c = a.retract(&e);
        assert!((c.position - b.position).norm() < 1e-12);
        assert!(c.rotation().angle_to(&b.rotation()) < 1e-12);
    }

    #[test]
    fn large_relative_rotation_uses_log_map() {
        // Component-wise subtraction would give a 2*0.9*pi swing; the log map wraps.
        let a = Pose::<f64>::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 0.9 * PI));
        let b = Pose::<f64>::new(Vector3::zeros(), Vector3::new(0.0, 0.0, -0.9 * PI));
        let e = a.error_to(&b);
        assert!((e[5] - 0.2 * PI).abs() < 1e-12);
    }
}
