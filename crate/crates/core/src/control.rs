//! Outer speed loop: a saturated PI baseline and a model-reference adaptive
//! controller tuned online by the MIT rule.

use crate::plant::MotorParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiState {
    pub kp: f64,
    pub ki: f64,
    pub integrator: f64,
    pub out_limit: f64,
}

impl PiState {
    pub fn new(kp: f64, ki: f64, out_limit: f64) -> Self {
        Self {
            kp,
            ki,
            integrator: 0.0,
            out_limit,
        }
    }
}

/// PI with a clamped integrator; integration stops while the output is
/// saturated in the direction of the error.
pub fn pi_step(s: &PiState, omega_ref: f64, omega: f64, dt: f64) -> (f64, PiState) {
    let err = omega_ref - omega;
    let candidate = (s.integrator + s.ki * err * dt).clamp(-s.out_limit, s.out_limit);
    let raw = s.kp * err + candidate;
    let winding_up = (raw > s.out_limit && err > 0.0) || (raw < -s.out_limit && err < 0.0);
    let integrator = if winding_up { s.integrator } else { candidate };
    let out = (s.kp * err + integrator).clamp(-s.out_limit, s.out_limit);
    (out, PiState { integrator, ..*s })
}

/// `a/(s² + b·s + c)` discretized with the bilinear transform, transposed
/// direct form II.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderFilter {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    s1: f64,
    s2: f64,
}

impl SecondOrderFilter {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self {
            a,
            b,
            c,
            s1: 0.0,
            s2: 0.0,
        }
    }

    /// Discrete coefficients `([b0, b1, b2], [a1, a2])` for step `dt`.
    pub fn coefficients(&self, dt: f64) -> ([f64; 3], [f64; 2]) {
        let k = 2.0 / dt;
        let k2 = k * k;
        let d = k2 + self.b * k + self.c;
        let g = self.a / d;
        (
            [g, 2.0 * g, g],
            [(2.0 * self.c - 2.0 * k2) / d, (k2 - self.b * k + self.c) / d],
        )
    }

    pub fn dc_gain(&self) -> f64 {
        self.a / self.c
    }

    /// Advances one sample and returns the output.
    pub fn step(&mut self, x: f64, dt: f64) -> f64 {
        let ([b0, b1, b2], [a1, a2]) = self.coefficients(dt);
        let y = b0 * x + self.s1;
        self.s1 = b1 * x - a1 * y + self.s2;
        self.s2 = b2 * x - a2 * y;
        y
    }

    /// Places the filter at the steady state for a constant input.
    pub fn reset_to(&mut self, x: f64, dt: f64) {
        let ([b0, _, b2], [_, a2]) = self.coefficients(dt);
        let y = self.dc_gain() * x;
        self.s2 = b2 * x - a2 * y;
        self.s1 = y - b0 * x;
    }

    pub fn is_finite(&self) -> bool {
        self.s1.is_finite() && self.s2.is_finite()
    }
}

/// Coefficients `(a, b, c)` of the plant approximation used by the
/// sensitivity filters: `a = R/L + B/J`, `b = R·B/(L·J)`, `c = ke·a/(L·J)`.
///
/// The composition is dimensionally loose; it only shapes the gradient
/// estimate, which the MIT rule tolerates.
pub fn plant_filter_coefficients(p: &MotorParams) -> (f64, f64, f64) {
    let a = p.r / p.l + p.b / p.j;
    let b = p.r * p.b / (p.l * p.j);
    let c = p.ke * a / (p.l * p.j);
    (a, b, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrasState {
    pub theta1: f64,
    pub theta2: f64,
    pub gamma: f64,
    pub ref_model: SecondOrderFilter,
    /// Sensitivity filter on the command.
    pub sens_uc: SecondOrderFilter,
    /// Sensitivity filter on the plant output.
    pub sens_y: SecondOrderFilter,
}

impl MrasState {
    pub fn new(theta1: f64, theta2: f64, gamma: f64, ref_model: SecondOrderFilter, sens: SecondOrderFilter) -> Self {
        Self {
            theta1,
            theta2,
            gamma,
            ref_model,
            sens_uc: sens,
            sens_y: sens,
        }
    }

    /// Places every filter at the steady state of a constant speed.
    pub fn reset_to(&mut self, speed: f64, dt: f64) {
        self.ref_model.reset_to(speed, dt);
        self.sens_uc.reset_to(speed, dt);
        self.sens_y.reset_to(speed, dt);
    }

    pub fn is_finite(&self) -> bool {
        self.theta1.is_finite()
            && self.theta2.is_finite()
            && self.ref_model.is_finite()
            && self.sens_uc.is_finite()
            && self.sens_y.is_finite()
    }
}

pub fn reference_model_step(s: &MrasState, u: f64, dt: f64) -> (f64, MrasState) {
    let mut n = *s;
    let y = n.ref_model.step(u, dt);
    (y, n)
}

pub fn mras_control(s: &MrasState, u_c: f64, y: f64) -> f64 {
    s.theta1 * u_c - s.theta2 * y
}

/// MIT-rule gradient step on `e²/2` with `e = y − y_ref`.
pub fn mit_update(s: &MrasState, e: f64, u_c: f64, y: f64, dt: f64) -> MrasState {
    let mut n = *s;
    let g_uc = n.sens_uc.step(u_c, dt);
    let g_y = n.sens_y.step(y, dt);
    n.theta1 -= dt * n.gamma * e * g_uc;
    n.theta2 += dt * n.gamma * e * g_y;
    n
}
