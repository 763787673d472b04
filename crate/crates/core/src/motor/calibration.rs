//! Least-squares identification of kv, rw, kt and eta from sweep data.

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KvFit<T: Real> {
    pub kv: T,
    /// RMS of `qdot - kv*pwm*vbus`, rad/s.
    pub rms_residual: T,
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RwFit<T: Real> {
    pub rw: T,
    /// RMS of `V - rw*I`, V.
    pub rms_residual: T,
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KtEtaFit<T: Real> {
    pub kt: T,
    pub eta: T,
    /// Fitted `eta*kt` (forward-drive slope).
    pub slope_forward: T,
    /// Fitted `kt/eta` (backward-drive slope); absent for single-branch fits.
    pub slope_backward: Option<T>,
    /// Set when the forward slope exceeded the backward one and eta was clamped to 1.
    pub eta_clamped: bool,
    pub rms_forward: T,
    pub rms_backward: Option<T>,
}

/// Slope and RMS residual of `y = s*x` fitted through the origin.
fn slope_through_origin<T: Real>(pairs: impl Iterator<Item = (T, T)> + Clone) -> Option<(T, T)> {
    let (sxx, sxy, n) =
        pairs.clone().fold((T::zero(), T::zero(), 0usize), |(sxx, sxy, n), (x, y)| (sxx + x * x, sxy + x * y, n + 1));
    if n == 0 || !(sxx > T::zero()) {
        return None;
    }
    let s = sxy / sxx;
    let sse = pairs.fold(T::zero(), |acc, (x, y)| {
        let r = y - s * x;
        acc + r * r
    });
    Some((s, (sse / lit::<T>(n as f64)).sqrt()))
}

fn distinct_count<T: Real>(values: impl Iterator<Item = T>) -> usize {
    let mut seen: Vec<T> = Vec::new();
    for v in values {
        if !seen.contains(&v) {
            seen.push(v);
        }
    }
    seen.len()
}

/// Fits `qdot = kv * pwm * vbus` on no-load `(pwm, qdot)` samples.
pub fn calibrate_kv<T: Real>(sweep: &[(T, T)], vbus: T) -> Result<KvFit<T>> {
    if sweep.len() < 2 {
        return Err(Error::DegenerateSweep(format!("need at least 2 samples, got {}", sweep.len())));
    }
    let nonzero = distinct_count(sweep.iter().map(|s| s.0).filter(|p| *p != T::zero()));
    if nonzero < 2 {
        return Err(Error::DegenerateSweep("pwm must take at least 2 distinct nonzero values".into()));
    }
    let (kv, rms) = slope_through_origin(sweep.iter().map(|&(pwm, qdot)| (pwm * vbus, qdot)))
        .ok_or_else(|| Error::DegenerateSweep("zero pwm energy".into()))?;
    if !(kv > T::zero()) {
        return Err(Error::DegenerateSweep(format!("fitted kv = {} is not positive", to_f64(kv))));
    }
    Ok(KvFit { kv, rms_residual: rms, samples: sweep.len() })
}

/// Fits winding resistance from `(pwm, qdot, current)` samples as the slope
/// of winding voltage `pwm*vbus - qdot/kv` against measured current.
pub fn calibrate_rw<T: Real>(samples: &[(T, T, T)], kv: T, vbus: T) -> Result<RwFit<T>> {
    let floor = lit::<T>(1e-6);
    let used: Vec<(T, T)> =
        samples.iter().filter(|s| s.2.abs() >= floor).map(|&(pwm, qdot, i)| (i, pwm * vbus - qdot / kv)).collect();
    if used.is_empty() {
        return Err(Error::DegenerateSweep("all currents below 1e-6 A".into()));
    }
    let (rw, rms) = slope_through_origin(used.iter().copied())
        .ok_or_else(|| Error::DegenerateSweep("zero current energy".into()))?;
    if !(rw > T::zero()) {
        return Err(Error::DegenerateSweep(format!("fitted rw = {} is not positive", to_f64(rw))));
    }
    Ok(RwFit { rw, rms_residual: rms, samples: used.len() })
}

fn branch_slope<T: Real>(data: &[(T, T)], branch: &str) -> Result<(T, T)> {
    if data.len() < 2 || distinct_count(data.iter().map(|d| d.0)) < 2 {
        return Err(Error::DegenerateSweep(format!("{branch} branch needs at least 2 samples with distinct currents")));
    }
    let (s, rms) = slope_through_origin(data.iter().copied())
        .ok_or_else(|| Error::DegenerateSweep(format!("{branch} branch has zero current energy")))?;
    if !(s > T::zero()) {
        return Err(Error::DegenerateSweep(format!("{branch} slope {} is not positive", to_f64(s))));
    }
    Ok((s, rms))
}

/// Jointly identifies `kt` and `eta` from forward-drive `(I, tau)` data
/// (slope `eta*kt`) and backward-drive data (slope `kt/eta`).
///
/// `kt = sqrt(s_f*s_b)`, `eta = sqrt(s_f/s_b)`. When `s_f > s_b` the implied
/// efficiency exceeds one; it is clamped and `eta_clamped` is set.
pub fn calibrate_kt_eta<T: Real>(forward: &[(T, T)], backward: &[(T, T)]) -> Result<KtEtaFit<T>> {
    let (sf, rf) = branch_slope(forward, "forward")?;
    let (sb, rb) = branch_slope(backward, "backward")?;
    let kt = (sf * sb).sqrt();
    let raw_eta = (sf / sb).sqrt();
    let eta_clamped = raw_eta > T::one();
    if eta_clamped {
        log::warn!("calibration implies eta = {} > 1; clamping to 1", to_f64(raw_eta));
    }
    Ok(KtEtaFit {
        kt,
        eta: raw_eta.min(T::one()),
        slope_forward: sf,
        slope_backward: Some(sb),
        eta_clamped,
        rms_forward: rf,
        rms_backward: Some(rb),
    })
}

/// Single-branch fallback: forward data plus a known efficiency gives `kt = s_f/eta`.
pub fn calibrate_kt_with_eta<T: Real>(forward: &[(T, T)], eta: T) -> Result<KtEtaFit<T>> {
    if !(eta > T::zero() && eta <= T::one()) {
        return Err(Error::OutOfRange { what: "eta", value: to_f64(eta) });
    }
    let (sf, rf) = branch_slope(forward, "forward")?;
    Ok(KtEtaFit {
        kt: sf / eta,
        eta,
        slope_forward: sf,
        slope_backward: None,
        eta_clamped: false,
        rms_forward: rf,
        rms_backward: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_exact_fit() {
        let vbus = 12.0;
        let sweep: Vec<(f64, f64)> = (1..=10)
            .map(|k| {
                let pwm = -0.5 + 0.1 * k as f64;
                (pwm, 5.0 * pwm * vbus)
            })
            .collect();
        let fit = calibrate_kv(&sweep, vbus).unwrap();
        assert!((fit.kv - 5.0).abs() < 1e-12);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn kv_degenerate_sweeps() {
        assert!(matches!(calibrate_kv(&[(0.5, 30.0)], 12.0), Err(Error::DegenerateSweep(_))));
        assert!(matches!(calibrate_kv(&[(0.5, 30.0), (0.5, 30.1)], 12.0), Err(Error::DegenerateSweep(_))));
        assert!(matches!(calibrate_kv(&[(0.0, 0.0), (0.0, 0.1)], 12.0), Err(Error::DegenerateSweep(_))));
    }

    #[test]
    fn rw_exact_fit_and_zero_current() {
        let (kv, vbus, rw) = (5.0, 12.0, 3.0);
        let samples: Vec<(f64, f64, f64)> = (1..8)
            .map(|k| {
                let pwm = 0.1 * k as f64;
                let qdot = 2.0 * k as f64;
                let i = (pwm * vbus - qdot / kv) / rw;
                (pwm, qdot, i)
            })
            .collect();
        let fit = calibrate_rw(&samples, kv, vbus).unwrap();
        assert!((fit.rw - 3.0).abs() < 1e-12);
        assert!(matches!(
            calibrate_rw(&[(0.1, 6.0, 0.0), (0.2, 12.0, 1e-8)], kv, vbus),
            Err(Error::DegenerateSweep(_))
        ));
    }

    #[test]
    fn kt_eta_exact_and_fallback() {
        let (kt, eta) = (0.6, 0.8);
        let fwd: Vec<(f64, f64)> = (1..6).map(|k| (k as f64 * 0.3, eta * kt * k as f64 * 0.3)).collect();
        let bwd: Vec<(f64, f64)> = (1..6).map(|k| (k as f64 * 0.2, kt / eta * k as f64 * 0.2)).collect();
        let fit = calibrate_kt_eta(&fwd, &bwd).unwrap();
        assert!((fit.kt - kt).abs() < 1e-12);
        assert!((fit.eta - eta).abs() < 1e-12);
        assert!(!fit.eta_clamped);

        let single = calibrate_kt_with_eta(&fwd, eta).unwrap();
        assert!((single.kt - kt).abs() < 1e-12);
    }

    #[test]
    fn kt_eta_clamps_super_unity_efficiency() {
        let fwd = [(1.0, 1.0), (2.0, 2.0)];
        let bwd = [(1.0, 0.5), (2.0, 1.0)];
        let fit = calibrate_kt_eta(&fwd, &bwd).unwrap();
        assert!(fit.eta_clamped);
        assert_eq!(fit.eta, 1.0);
    }

    #[test]
    fn kt_eta_degenerate_branch() {
        let fwd = [(1.0, 1.0), (1.0, 1.0)];
        let bwd = [(1.0, 0.5), (2.0, 1.0)];
        assert!(matches!(calibrate_kt_eta(&fwd, &bwd), Err(Error::DegenerateSweep(_))));
    }
}
