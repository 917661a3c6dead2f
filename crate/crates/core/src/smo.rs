//! Sliding-mode observer for the stationary-frame back-EMFs.
//!
//! Model per axis: `di/dt = -(R/L)·i + (1/L)·(u - e)`, `de/dt = 0`. The
//! observer copies the current equation with a saturated correction on the
//! current error and integrates the same saturated error into the EMF
//! estimate. A positive current error means the estimated EMF is too high,
//! so the EMF channel integrates with a negative sign for positive gains.

use crate::error::{DriveError, Result};
use crate::plant::MotorParams;
use crate::waveform::DqPair;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoGains {
    /// Current-error gain, d axis current estimate (1/s·A per unit sat).
    pub ks1: f64,
    /// Current-error gain, q axis.
    pub ks2: f64,
    /// EMF-injection gain, d axis, V/s per unit sat.
    pub ks3: f64,
    /// EMF-injection gain, q axis.
    pub ks4: f64,
    /// Boundary-layer half width, A.
    pub delta: f64,
}

impl Default for SmoGains {
    fn default() -> Self {
        Self {
            ks1: 1.0e4,
            ks2: 1.0e4,
            ks3: 2.0e6,
            ks4: 2.0e6,
            delta: 0.5,
        }
    }
}

/// Estimated currents (`x1`, `x2`) and back-EMFs (`x3`, `x4`), d and q axis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SmoState {
    pub x1_hat: f64,
    pub x2_hat: f64,
    pub x3_hat: f64,
    pub x4_hat: f64,
}

impl SmoState {
    pub fn emf(&self) -> DqPair {
        DqPair::new(self.x3_hat, self.x4_hat)
    }

    pub fn current(&self) -> DqPair {
        DqPair::new(self.x1_hat, self.x2_hat)
    }
}

/// Linear inside `[-delta, delta]`, clipped to ±1 outside.
pub fn sat(x: f64, delta: f64) -> f64 {
    (x / delta).clamp(-1.0, 1.0)
}

/// One explicit-Euler observer step.
///
/// `u_dq` is the voltage applied over the step and `i_meas` the current
/// measured at its start. `emf_limit` clamps the EMF estimates
/// (typically `2·ke·ω_max`).
pub fn smo_step(
    s: &SmoState,
    g: &SmoGains,
    u_dq: &DqPair,
    i_meas: &DqPair,
    dt: f64,
    p: &MotorParams,
    emf_limit: f64,
) -> Result<SmoState> {
    if !(u_dq.is_finite() && i_meas.is_finite() && dt.is_finite()) {
        return Err(DriveError::NonFinite {
            signal: "observer input".into(),
            t: f64::NAN,
        });
    }
    let a1 = p.r / p.l;
    let a2 = 1.0 / p.l;
    let s1 = sat(i_meas.d - s.x1_hat, g.delta);
    let s2 = sat(i_meas.q - s.x2_hat, g.delta);

    let dx1 = -a1 * s.x1_hat + a2 * (-s.x3_hat + u_dq.d) + g.ks1 * s1;
    let dx2 = -a1 * s.x2_hat + a2 * (-s.x4_hat + u_dq.q) + g.ks2 * s2;
    let dx3 = -g.ks3 * s1;
    let dx4 = -g.ks4 * s2;

    Ok(SmoState {
        x1_hat: s.x1_hat + dt * dx1,
        x2_hat: s.x2_hat + dt * dx2,
        x3_hat: (s.x3_hat + dt * dx3).clamp(-emf_limit, emf_limit),
        x4_hat: (s.x4_hat + dt * dx4).clamp(-emf_limit, emf_limit),
    })
}

/// Sufficient reaching condition plus discrete boundary-layer stability.
///
/// The current channels must dominate the worst-case EMF error
/// (`ks > E_max/L`, with `E_max = ke·ω_max`), the EMF channels must be
/// positive, and one step of the current correction must not jump across
/// the boundary layer (`dt·ks < 2·delta`).
pub fn check_gain_stability(g: &SmoGains, p: &MotorParams, omega_max: f64, dt: f64) -> bool {
    let e_max = p.ke * omega_max;
    let min_ks = e_max / p.l;
    let finite = [g.ks1, g.ks2, g.ks3, g.ks4, g.delta].iter().all(|v| v.is_finite());
    finite
        && g.delta > 0.0
        && g.ks1 > min_ks
        && g.ks2 > min_ks
        && g.ks3 > 0.0
        && g.ks4 > 0.0
        && dt * g.ks1 < 2.0 * g.delta
        && dt * g.ks2 < 2.0 * g.delta
}

/// Smallest current gain the reaching condition admits.
pub fn min_current_gain(p: &MotorParams, omega_max: f64) -> f64 {
    p.ke * omega_max / p.l
}
