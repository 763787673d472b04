//! External wrench recovery from external joint torques and site Jacobians.
//!
//! Full mode solves the regularized least-squares problem
//! `min ‖Jᵀf − τ‖² + λ‖f‖²` through its normal equations
//! `(JJᵀ + λI) f = Jτ` with a Cholesky factorization of the 3×3 (force) or
//! 6×6 (stacked wrench) Gram matrix. Axis mode solves one scalar problem
//! per selected direction.

use nalgebra::{DMatrix, DVector, Matrix3xX, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Force and torque at a contact site, world frame.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Wrench<T: Real> {
    pub force: Vector3<T>,
    pub torque: Vector3<T>,
}

impl<T: Real> Wrench<T> {
    pub fn zero() -> Self {
        Self { force: Vector3::zeros(), torque: Vector3::zeros() }
    }

    pub fn from_force(force: Vector3<T>) -> Self {
        Self { force, torque: Vector3::zeros() }
    }

    pub fn from_vector(v: &Vector6<T>) -> Self {
        Self { force: v.fixed_rows::<3>(0).into_owned(), torque: v.fixed_rows::<3>(3).into_owned() }
    }

    pub fn as_vector(&self) -> Vector6<T> {
        Vector6::new(self.force.x, self.force.y, self.force.z, self.torque.x, self.torque.y, self.torque.z)
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.torque.iter()).all(|v| v.is_finite())
    }
}

impl<T: Real> std::ops::Add for Wrench<T> {
    type Output = Wrench<T>;
    fn add(self, rhs: Self) -> Self {
        Wrench { force: self.force + rhs.force, torque: self.torque + rhs.torque }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMode {
    /// 3D force from `Jp` only.
    #[default]
    FullForce,
    /// 6D wrench from the stacked `[Jp; Jr]` system.
    FullWrench,
    /// Force from `Jp` and torque from `Jr`, solved independently.
    FullWrenchSeparate,
    /// Independent scalar estimates along configured axes.
    AxisSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisKind {
    Force,
    Torque,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorAxis<T: Real> {
    pub axis: Vector3<T>,
    pub kind: AxisKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig<T: Real> {
    pub lambda: T,
    pub mode: EstimatorMode,
    pub axes: Vec<EstimatorAxis<T>>,
}

impl<T: Real> Default for EstimatorConfig<T> {
    fn default() -> Self {
        Self { lambda: lit(1e-3), mode: EstimatorMode::FullForce, axes: Vec::new() }
    }
}

impl<T: Real> EstimatorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= T::zero()) || !self.lambda.is_finite() {
            return Err(Error::OutOfRange { what: "lambda", value: to_f64(self.lambda) });
        }
        if self.mode == EstimatorMode::AxisSet {
            for a in &self.axes {
                check_unit_axis(&a.axis)?;
            }
        }
        Ok(())
    }
}

fn check_unit_axis<T: Real>(u: &Vector3<T>) -> Result<()> {
    let n = to_f64(u.norm());
    if !((n - 1.0).abs() <= 1e-9) {
        return Err(Error::validation("estimator axis", format!("axis must be unit norm, got {n}")));
    }
    Ok(())
}

/// A wrench estimate together with its numerical diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WrenchEstimate<T: Real> {
    pub wrench: Wrench<T>,
    /// `‖Jᵀf̂ − τ‖` over the Jacobian rows that were used.
    pub residual: T,
    /// Condition number of the unregularized Gram matrix `JJᵀ` (infinite when singular).
    pub gram_condition: T,
}

struct Solution<T: Real> {
    f: DVector<T>,
    residual: T,
    condition: T,
}

fn condition_number<T: Real>(gram: &DMatrix<T>) -> T {
    let eig = gram.clone().symmetric_eigenvalues();
    let max = eig.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    let min = eig.iter().fold(T::max_value().unwrap(), |a, &b| a.min(b.abs()));
    if min > T::zero() {
        max / min
    } else {
        T::max_value().unwrap()
    }
}

/// Solves `(JJᵀ + λI) f = Jτ` for a k×n Jacobian.
fn solve_regularized<T: Real>(j: &DMatrix<T>, tau: &DVector<T>, lambda: T) -> Result<Solution<T>> {
    let gram = j * j.transpose();
    let condition = condition_number(&gram);
    let mut system = gram;
    for i in 0..system.nrows() {
        system[(i, i)] += lambda;
    }
    let rhs = j * tau;
    let chol = system.cholesky().ok_or_else(|| {
        Error::Singular(format!("Gram matrix not positive definite with lambda = {}", to_f64(lambda)))
    })?;
    let f = chol.solve(&rhs);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite wrench solution".into()));
    }
    let residual = (j.transpose() * &f - tau).norm();
    Ok(Solution { f, residual, condition })
}

fn check_cols<T: Real>(j: &Matrix3xX<T>, tau: &DVector<T>, what: &'static str) -> Result<()> {
    if j.ncols() != tau.len() {
        return Err(Error::dims(what, j.ncols(), tau.len()));
    }
    if tau.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("external joint torque"));
    }
    Ok(())
}

fn to_dynamic<T: Real>(j: &Matrix3xX<T>) -> DMatrix<T> {
    DMatrix::from_iterator(3, j.ncols(), j.iter().copied())
}

/// Regularized least-squares force (and optionally stacked wrench) estimate.
///
/// With `jr` present the 6×6 stacked system is solved; otherwise only force.
pub fn estimate_full<T: Real>(
    jp: &Matrix3xX<T>,
    jr: Option<&Matrix3xX<T>>,
    tau: &DVector<T>,
    lambda: T,
) -> Result<WrenchEstimate<T>> {
    check_cols(jp, tau, "Jp columns vs torque length")?;
    if !(lambda >= T::zero()) {
        return Err(Error::OutOfRange { what: "lambda", value: to_f64(lambda) });
    }
    match jr {
        None => {
            let s = solve_regularized(&to_dynamic(jp), tau, lambda)?;
            Ok(WrenchEstimate {
                wrench: Wrench::from_force(Vector3::new(s.f[0], s.f[1], s.f[2])),
                residual: s.residual,
                gram_condition: s.condition,
            })
        }
        Some(jr) => {
            check_cols(jr, tau, "Jr columns vs torque length")?;
            let mut stacked = DMatrix::zeros(6, tau.len());
            stacked.rows_mut(0, 3).copy_from(jp);
            stacked.rows_mut(3, 3).copy_from(jr);
            let s = solve_regularized(&stacked, tau, lambda)?;
            Ok(WrenchEstimate {
                wrench: Wrench {
                    force: Vector3::new(s.f[0], s.f[1], s.f[2]),
                    torque: Vector3::new(s.f[3], s.f[4], s.f[5]),
                },
                residual: s.residual,
                gram_condition: s.condition,
            })
        }
    }
}

/// Force from `Jp` and torque from `Jr` as two independent 3×3 solves.
pub fn estimate_separate<T: Real>(
    jp: &Matrix3xX<T>,
    jr: &Matrix3xX<T>,
    tau: &DVector<T>,
    lambda: T,
) -> Result<WrenchEstimate<T>> {
    let force = estimate_full(jp, None, tau, lambda)?;
    let torque = estimate_full(jr, None, tau, lambda)?;
    Ok(WrenchEstimate {
        wrench: Wrench { force: force.wrench.force, torque: torque.wrench.force },
        residual: force.residual.max(torque.residual),
        gram_condition: force.gram_condition.max(torque.gram_condition),
    })
}

/// Scalar estimate along one axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisEstimate<T: Real> {
    pub magnitude: T,
    pub vector: Vector3<T>,
}

/// `f̂ = [(ûᵀJ)τ / ((ûᵀJ)(ûᵀJ)ᵀ + λ)] û`.
pub fn estimate_axis<T: Real>(
    j: &Matrix3xX<T>,
    tau: &DVector<T>,
    axis: &Vector3<T>,
    lambda: T,
) -> Result<AxisEstimate<T>> {
    check_cols(j, tau, "Jacobian columns vs torque length")?;
    check_unit_axis(axis)?;
    let row = axis.transpose() * j;
    let num = (&row * tau)[0];
    let den = row.norm_squared() + lambda;
    let magnitude = if num == T::zero() {
        T::zero()
    } else if den > T::zero() {
        num / den
    } else {
        return Err(Error::Singular("axis unobservable and lambda = 0".into()));
    };
    Ok(AxisEstimate { magnitude, vector: axis * magnitude })
}

/// Dispatches on the configured mode. Axis contributions are summed; torque
/// axes use `Jr`.
pub fn estimate<T: Real>(
    config: &EstimatorConfig<T>,
    jp: &Matrix3xX<T>,
    jr: &Matrix3xX<T>,
    tau: &DVector<T>,
) -> Result<WrenchEstimate<T>> {
    config.validate()?;
    match config.mode {
        EstimatorMode::FullForce => estimate_full(jp, None, tau, config.lambda),
        EstimatorMode::FullWrench => estimate_full(jp, Some(jr), tau, config.lambda),
        EstimatorMode::FullWrenchSeparate => estimate_separate(jp, jr, tau, config.lambda),
        EstimatorMode::AxisSet => {
            check_cols(jp, tau, "Jp columns vs torque length")?;
            let mut wrench = Wrench::zero();
            let mut worst = T::one();
            for a in &config.axes {
                let j = match a.kind {
                    AxisKind::Force => jp,
                    AxisKind::Torque => jr,
                };
                let est = estimate_axis(j, tau, &a.axis, config.lambda)?;
                match a.kind {
                    AxisKind::Force => wrench.force += est.vector,
                    AxisKind::Torque => wrench.torque += est.vector,
                }
                let row_norm = (a.axis.transpose() * j).norm_squared();
                // 1D Gram "condition" is 1 unless the axis is unobservable.
                if !(row_norm > T::zero()) {
                    worst = T::max_value().unwrap();
                }
            }
            let mut stacked = DMatrix::zeros(6, tau.len());
            stacked.rows_mut(0, 3).copy_from(jp);
            stacked.rows_mut(3, 3).copy_from(jr);
            let residual =
                (stacked.transpose() * DVector::from_column_slice(wrench.as_vector().as_slice()) - tau).norm();
            Ok(WrenchEstimate { wrench, residual, gram_condition: worst })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn mat(rows: usize, data: &[f64]) -> Matrix3xX<f64> {
        assert_eq!(rows, 3);
        Matrix3xX::from_row_slice(data)
    }

    #[test]
    fn identity_jacobian() {
        let jp = Matrix3xX::from_column_slice(Matrix3::<f64>::identity().as_slice());
        let tau = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let est = estimate_full(&jp, None, &tau, 1e-6).unwrap();
        assert!((est.wrench.force - Vector3::new(1.0 / (1.0 + 1e-6), 0.0, 0.0)).norm() < 1e-15);
        assert!((est.gram_condition - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_torque_zero_force() {
        let jp = mat(3, &[0.3, -0.2, 0.5, 0.1, 0.7, 0.0, -0.4, 0.2, 0.9, 0.3, 0.1, 0.2]);
        let est = estimate_full(&jp, None, &DVector::zeros(4), 1e-3).unwrap();
        assert_eq!(est.wrench.force, Vector3::zeros());
    }

    #[test]
    fn singular_without_regularization() {
        let jp = mat(3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let r = estimate_full(&jp, None, &DVector::from_vec(vec![1.0, 0.0]), 0.0);
        assert!(matches!(r, Err(Error::Singular(_))));
    }

    #[test]
    fn dimension_mismatch_reported() {
        let jp = mat(3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let r = estimate_full(&jp, None, &DVector::zeros(3), 1e-3);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn axis_row_selection() {
        let jp = Matrix3xX::from_column_slice(Matrix3::<f64>::identity().as_slice());
        let tau = DVector::from_vec(vec![2.0, 5.0, 7.0]);
        let est = estimate_axis(&jp, &tau, &Vector3::x(), 0.0).unwrap();
        assert_eq!(est.vector, Vector3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn axis_orthogonal_to_motion_gives_zero() {
        let jp = mat(3, &[1.0, 0.5, 0.0, 1.0, 0.0, 0.0]);
        let tau = DVector::from_vec(vec![3.0, 1.0]);
        let est = estimate_axis(&jp, &tau, &Vector3::z(), 1e-3).unwrap();
        assert_eq!(est.vector, Vector3::zeros());
    }

    #[test]
    fn axis_rejects_non_unit() {
        let jp = mat(3, &[1.0, 0.0, 0.0]);
        assert!(estimate_axis(&jp, &DVector::from_vec(vec![1.0]), &Vector3::new(0.0, 0.0, 2.0), 1e-3).is_err());
    }

    #[test]
    fn empty_axis_set_is_zero() {
        let jp = mat(3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let cfg = EstimatorConfig { lambda: 1e-3, mode: EstimatorMode::AxisSet, axes: vec![] };
        let est = estimate(&cfg, &jp, &jp, &DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(est.wrench, Wrench::zero());
    }

    #[test]
    fn axis_set_matches_full_when_gram_diagonal() {
        // Orthogonal rows with different norms: JJᵀ is diagonal.
        let jp = mat(3, &[2.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 1.5, 0.0]);
        let tau = DVector::from_vec(vec![0.3, -1.1, 0.7, 2.0]);
        let lambda = 1e-2;
        let axes = [Vector3::x(), Vector3::y(), Vector3::z()]
            .into_iter()
            .map(|axis| EstimatorAxis { axis, kind: AxisKind::Force })
            .collect();
        let cfg = EstimatorConfig { lambda, mode: EstimatorMode::AxisSet, axes };
        let by_axis = estimate(&cfg, &jp, &jp, &tau).unwrap();
        let full = estimate_full(&jp, None, &tau, lambda).unwrap();
        assert!((by_axis.wrench.force - full.wrench.force).norm() < 1e-14);
    }

    #[test]
    fn separate_and_stacked_agree_when_decoupled() {
        // Jp and Jr act on disjoint joints: the 6x6 Gram is block diagonal.
        let jp = mat(3, &[1.0, 0.0, 0.2, 0.0, 0.0, 1.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0]);
        let jr = mat(3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let tau = DVector::from_vec(vec![0.4, 0.1, -0.3, 0.2]);
        let a = estimate_full(&jp, Some(&jr), &tau, 1e-3).unwrap();
        let b = estimate_separate(&jp, &jr, &tau, 1e-3).unwrap();
        assert!((a.wrench.as_vector() - b.wrench.as_vector()).norm() < 1e-12);
    }
}
