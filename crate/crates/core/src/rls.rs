//! Recursive least squares on the mechanical equation
//! `dω/dt = -(B/J)·ω + (1/J)·(Te - TL)`, parameter vector `[B/J, 1/J]`.

use crate::error::{DriveError, Result};
use serde::{Deserialize, Serialize};

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

/// Default identifiability threshold on the 1/J estimate.
pub const EPSILON_J: f64 = 1.0;

/// Regressors smaller than this in both components carry no information.
pub const MIN_EXCITATION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlsState {
    pub theta: Vec2,
    pub p: Mat2,
    pub lambda: f64,
}

impl RlsState {
    pub fn new(theta0: Vec2, p0_diag: Vec2, lambda: f64) -> Result<Self> {
        if !(lambda > 0.9 && lambda <= 1.0) {
            return Err(DriveError::InvalidParam(format!(
                "rls.lambda must be in (0.9, 1], got {lambda}"
            )));
        }
        if !(p0_diag[0] > 0.0 && p0_diag[1] > 0.0) {
            return Err(DriveError::InvalidParam("rls.p0 must be positive".into()));
        }
        Ok(Self {
            theta: theta0,
            p: [[p0_diag[0], 0.0], [0.0, p0_diag[1]]],
            lambda,
        })
    }

    pub fn predict(&self, phi: &Vec2) -> f64 {
        phi[0] * self.theta[0] + phi[1] * self.theta[1]
    }

    pub fn trace_p(&self) -> f64 {
        self.p[0][0] + self.p[1][1]
    }

    /// Smallest eigenvalue of the (symmetric) covariance.
    pub fn min_eigen_p(&self) -> f64 {
        let a = self.p[0][0];
        let d = self.p[1][1];
        let b = self.p[0][1];
        let m = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        m - r
    }
}

/// Measurement `y = dω/dt` and regressor `[-ω, Te - TL]`.
pub fn build_regressor(omega: f64, domega: f64, te: f64, tl: f64) -> (f64, Vec2) {
    (domega, [-omega, te - tl])
}

/// One RLS step with forgetting; the update is skipped when the regressor
/// carries no excitation.
pub fn rls_update(s: &RlsState, y: f64, phi: &Vec2) -> RlsState {
    if phi[0].abs() < MIN_EXCITATION && phi[1].abs() < MIN_EXCITATION {
        return RlsState {
            p: scale(&s.p, 1.0 / s.lambda),
            ..*s
        };
    }
    let pphi = [
        s.p[0][0] * phi[0] + s.p[0][1] * phi[1],
        s.p[1][0] * phi[0] + s.p[1][1] * phi[1],
    ];
    let denom = s.lambda + phi[0] * pphi[0] + phi[1] * pphi[1];
    let k = [pphi[0] / denom, pphi[1] / denom];
    let err = y - s.predict(phi);
    let theta = [s.theta[0] + k[0] * err, s.theta[1] + k[1] * err];

    // (I - k φᵀ) P / λ
    let mut p = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            let kp = k[r] * (phi[0] * s.p[0][c] + phi[1] * s.p[1][c]);
            p[r][c] = (s.p[r][c] - kp) / s.lambda;
        }
    }
    let off = 0.5 * (p[0][1] + p[1][0]);
    p[0][1] = off;
    p[1][0] = off;
    RlsState {
        theta,
        p,
        lambda: s.lambda,
    }
}

fn scale(m: &Mat2, k: f64) -> Mat2 {
    [[m[0][0] * k, m[0][1] * k], [m[1][0] * k, m[1][1] * k]]
}

/// Recovers `(B, J)` from `[B/J, 1/J]`.
pub fn extract_bj(s: &RlsState) -> Result<(f64, f64)> {
    extract_bj_with(s, EPSILON_J)
}

pub fn extract_bj_with(s: &RlsState, epsilon_j: f64) -> Result<(f64, f64)> {
    let inv_j = s.theta[1];
    if !(inv_j > epsilon_j) {
        return Err(DriveError::NotIdentifiable(inv_j));
    }
    let j = 1.0 / inv_j;
    Ok((s.theta[0] * j, j))
}
