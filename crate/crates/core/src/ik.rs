//! Damped least-squares differential inverse kinematics with joint limits.

use nalgebra::{DMatrix, DVector, Isometry3};

use crate::chain::ChainModel;
use crate::error::{Error, Result};
use crate::pose::{log_map, Pose};
use crate::scalar::{lit, to_f64, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkConfig<T: Real> {
    /// DLS damping μ added to `JJᵀ`.
    pub damping: T,
    /// Largest per-iteration change of any joint, rad.
    pub max_joint_step: T,
    pub position_weight: T,
    pub orientation_weight: T,
    pub max_iterations: usize,
    /// Convergence threshold on position (m) and orientation (rad) errors.
    pub tolerance: T,
    /// Null-space pull toward the seed configuration.
    pub posture_weight: T,
}

impl<T: Real> Default for IkConfig<T> {
    fn default() -> Self {
        Self {
            damping: lit(1e-4),
            max_joint_step: lit(0.2),
            position_weight: T::one(),
            orientation_weight: lit(0.5),
            max_iterations: 50,
            tolerance: lit(1e-5),
            posture_weight: T::zero(),
        }
    }
}

impl<T: Real> IkConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let non_neg = [
            ("damping", self.damping),
            ("position_weight", self.position_weight),
            ("orientation_weight", self.orientation_weight),
            ("posture_weight", self.posture_weight),
        ];
        for (what, v) in non_neg {
            if !(v >= T::zero()) {
                return Err(Error::validation("ik config", format!("{what} must be >= 0")));
            }
        }
        if !(self.max_joint_step > T::zero()) || !(self.tolerance > T::zero()) {
            return Err(Error::validation("ik config", "max_joint_step and tolerance must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::validation("ik config", "max_iterations must be >= 1"));
        }
        Ok(())
    }
}

/// Desired world pose of one site.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkTarget<T: Real> {
    pub site: usize,
    pub pose: Pose<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkReport<T: Real> {
    pub iterations: usize,
    /// Largest site position error, m.
    pub position_error: T,
    /// Largest site orientation error, rad (0 when orientation is unweighted).
    pub orientation_error: T,
    /// Norm of the stacked weighted error.
    pub weighted_error: T,
    pub converged: bool,
}

struct Residual<T: Real> {
    weighted: DVector<T>,
    position: T,
    orientation: T,
}

fn rows_per_target<T: Real>(cfg: &IkConfig<T>) -> (bool, bool) {
    (cfg.position_weight > T::zero(), cfg.orientation_weight > T::zero())
}

fn residual<T: Real>(
    chain: &ChainModel<T>,
    frames: &[Isometry3<T>],
    targets: &[IkTarget<T>],
    cfg: &IkConfig<T>,
) -> Residual<T> {
    let (use_p, use_r) = rows_per_target(cfg);
    let per = 3 * (use_p as usize + use_r as usize);
    let mut weighted = DVector::zeros(per * targets.len());
    let mut position = T::zero();
    let mut orientation = T::zero();
    for (k, t) in targets.iter().enumerate() {
        let s = &chain.sites()[t.site];
        let current = frames[s.parent] * s.offset;
        let mut row = k * per;
        if use_p {
            let ep = t.pose.position - current.translation.vector;
            position = position.max(ep.norm());
            weighted.rows_mut(row, 3).copy_from(&(ep * cfg.position_weight));
            row += 3;
        }
        if use_r {
            let er = log_map(&(t.pose.rotation() * current.rotation.inverse()));
            orientation = orientation.max(er.norm());
            weighted.rows_mut(row, 3).copy_from(&(er * cfg.orientation_weight));
        }
    }
    Residual { weighted, position, orientation }
}

fn stacked_jacobian<T: Real>(
    chain: &ChainModel<T>,
    frames: &[Isometry3<T>],
    targets: &[IkTarget<T>],
    cfg: &IkConfig<T>,
) -> DMatrix<T> {
    let (use_p, use_r) = rows_per_target(cfg);
    let per = 3 * (use_p as usize + use_r as usize);
    let mut j = DMatrix::zeros(per * targets.len(), chain.dof());
    for (k, t) in targets.iter().enumerate() {
        let (jp, jr) = chain.jacobian_from_frames(frames, t.site);
        let mut row = k * per;
        if use_p {
            j.rows_mut(row, 3).copy_from(&(jp * cfg.position_weight));
            row += 3;
        }
        if use_r {
            j.rows_mut(row, 3).copy_from(&(jr * cfg.orientation_weight));
        }
    }
    j
}

fn converged<T: Real>(r: &Residual<T>, cfg: &IkConfig<T>) -> bool {
    let (use_p, use_r) = rows_per_target(cfg);
    (!use_p || r.position <= cfg.tolerance) && (!use_r || r.orientation <= cfg.tolerance)
}

const MAX_HALVINGS: usize = 12;

/// Iterative DLS: `Δq = Jᵀ(JJᵀ + μI)⁻¹e`, scaled so no joint moves more than
/// `max_joint_step`, clamped to limits and halved while the weighted error
/// would increase. Unreachable targets return the best configuration found
/// with a nonzero residual.
pub fn solve<T: Real>(
    chain: &ChainModel<T>,
    q: &DVector<T>,
    targets: &[IkTarget<T>],
    cfg: &IkConfig<T>,
) -> Result<(DVector<T>, IkReport<T>)> {
    cfg.validate()?;
    if q.len() != chain.dof() {
        return Err(Error::dims("joint vector", chain.dof(), q.len()));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("seed configuration"));
    }
    for t in targets {
        if t.site >= chain.sites().len() {
            return Err(Error::validation("ik target", format!("site {} out of range", t.site)));
        }
        if !t.pose.is_finite() {
            return Err(Error::NonFinite("ik target"));
        }
    }

    let rest = {
        let mut r = q.clone();
        chain.clamp_to_limits(&mut r);
        r
    };
    let mut q = rest.clone();
    let mut frames = chain.joint_frames(&q)?;
    let mut res = residual(chain, &frames, targets, cfg);
    let mut cost = res.weighted.norm_squared();
    let mut iterations = 0;

    while !converged(&res, cfg) && iterations < cfg.max_iterations && !targets.is_empty() {
        iterations += 1;
        let j = stacked_jacobian(chain, &frames, targets, cfg);
        let mut gram = &j * j.transpose();
        for i in 0..gram.nrows() {
            gram[(i, i)] += cfg.damping;
        }
        let Some(chol) = gram.cholesky() else {
            return Err(Error::Singular("IK Gram matrix; increase damping".into()));
        };
        let mut dq = j.transpose() * chol.solve(&res.weighted);
        if cfg.posture_weight > T::zero() {
            let pull = (&rest - &q) * cfg.posture_weight;
            let projected = &pull - j.transpose() * chol.solve(&(&j * &pull));
            dq += projected;
        }
        let largest = dq.amax();
        if largest > cfg.max_joint_step {
            dq *= cfg.max_joint_step / largest;
        }

        let mut alpha = T::one();
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let mut trial = &q + &dq * alpha;
            chain.clamp_to_limits(&mut trial);
            let trial_frames = chain.joint_frames(&trial)?;
            let trial_res = residual(chain, &trial_frames, targets, cfg);
            let trial_cost = trial_res.weighted.norm_squared();
            if trial_cost <= cost {
                accepted = trial != q;
                q = trial;
                frames = trial_frames;
                res = trial_res;
                cost = trial_cost;
                break;
            }
            alpha *= lit(0.5);
        }
        if !accepted {
            log::debug!("ik stalled after {iterations} iterations, residual {}", to_f64(cost.sqrt()));
            break;
        }
    }

    let report = IkReport {
        iterations,
        position_error: res.position,
        orientation_error: res.orientation,
        weighted_error: cost.sqrt(),
        converged: converged(&res, cfg),
    };
    Ok((q, report))
}
