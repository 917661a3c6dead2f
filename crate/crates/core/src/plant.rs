//! Ground-truth BLDC electromechanical model.
//!
//! Star-connected, isolated neutral, per-phase effective inductance
//! `L = L_self - M`. Mechanical convention: `J dω/dt = Te - TL - Bω`.

use crate::error::{DriveError, Result};
use crate::waveform::{phase_backemfs, phase_shapes, wrap_angle, AbcTriple, ElectricalAngle};
use serde::{Deserialize, Serialize};

/// Below this speed (rad/s) torque is computed from the speed-free form.
pub const OMEGA_FLOOR: f64 = 0.1;

/// Largest plant step accepted by [`plant_step`].
pub const MAX_PLANT_DT: f64 = 10e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotorParams {
    /// Phase resistance, Ω.
    #[serde(rename = "R")]
    pub r: f64,
    /// Effective phase inductance, H.
    #[serde(rename = "L")]
    pub l: f64,
    /// Back-EMF constant (per-phase peak), V·s/rad.
    pub ke: f64,
    /// Torque constant, N·m/A.
    pub kt: f64,
    /// Pole count.
    #[serde(rename = "P")]
    pub poles: u32,
    /// Rotor plus load inertia, kg·m².
    #[serde(rename = "J")]
    pub j: f64,
    /// Viscous damping, N·m·s/rad.
    #[serde(rename = "B")]
    pub b: f64,
    /// DC link voltage, V.
    #[serde(rename = "Vdc")]
    pub vdc: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        Self {
            r: 0.4,
            l: 13e-3,
            ke: 0.4,
            kt: 0.4,
            poles: 2,
            j: 0.004,
            b: 0.002,
            vdc: 300.0,
        }
    }
}

impl MotorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("R", self.r),
            ("L", self.l),
            ("ke", self.ke),
            ("kt", self.kt),
            ("J", self.j),
            ("B", self.b),
            ("Vdc", self.vdc),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(DriveError::InvalidParam(format!("motor.{name} must be > 0, got {v}")));
            }
        }
        if self.poles < 2 || !self.poles.is_multiple_of(2) {
            return Err(DriveError::InvalidParam(format!(
                "motor.P must be an even integer >= 2, got {}",
                self.poles
            )));
        }
        Ok(())
    }

    pub fn pole_pairs(&self) -> f64 {
        self.poles as f64 / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub i_abc: AbcTriple,
    /// Mechanical speed, rad/s.
    pub omega_r: f64,
    /// Mechanical angle in `[0, 2π)`.
    pub theta_m: f64,
}

impl PlantState {
    pub fn at_rest(theta_e0: f64, p: &MotorParams) -> Self {
        Self {
            i_abc: AbcTriple::ZERO,
            omega_r: 0.0,
            theta_m: wrap_angle(theta_e0 / p.pole_pairs()),
        }
    }

    pub fn theta_e(&self, p: &MotorParams) -> ElectricalAngle {
        ElectricalAngle::new(p.pole_pairs() * self.theta_m)
    }

    pub fn backemfs(&self, p: &MotorParams) -> AbcTriple {
        phase_backemfs(self.theta_e(p), self.omega_r, p.ke)
    }

    pub fn torque(&self, p: &MotorParams) -> f64 {
        torque_abc(&self.backemfs(p), &self.i_abc, self.omega_r, self.theta_e(p), p)
    }
}

/// Phase current derivatives, A/s.
pub fn electrical_derivs(i_abc: &AbcTriple, v_abc: &AbcTriple, e_abc: &AbcTriple, p: &MotorParams) -> AbcTriple {
    let f = |v: f64, i: f64, e: f64| (v - p.r * i - e) / p.l;
    AbcTriple::new(
        f(v_abc.a, i_abc.a, e_abc.a),
        f(v_abc.b, i_abc.b, e_abc.b),
        f(v_abc.c, i_abc.c, e_abc.c),
    )
}

/// Electromagnetic torque from phase quantities.
///
/// Above [`OMEGA_FLOOR`] this is `Σ e·i / ω`; below it the algebraically
/// identical `kt · Σ shape·i` avoids the 0/0.
pub fn torque_abc(
    e_abc: &AbcTriple,
    i_abc: &AbcTriple,
    omega_r: f64,
    theta_e: ElectricalAngle,
    p: &MotorParams,
) -> f64 {
    if omega_r.abs() > OMEGA_FLOOR {
        e_abc.dot(i_abc) / omega_r
    } else {
        torque_shape_form(i_abc, theta_e, p)
    }
}

pub fn torque_shape_form(i_abc: &AbcTriple, theta_e: ElectricalAngle, p: &MotorParams) -> f64 {
    p.kt * phase_shapes(theta_e.radians()).dot(i_abc)
}

/// Angular acceleration, rad/s².
pub fn mech_deriv(te: f64, tl: f64, omega_r: f64, p: &MotorParams) -> f64 {
    (te - tl - p.b * omega_r) / p.j
}

/// Removes the common-mode component so the currents sum to zero.
pub fn project_neutral(i: AbcTriple) -> AbcTriple {
    let m = i.sum() / 3.0;
    let a = i.a - m;
    let b = i.b - m;
    AbcTriple::new(a, b, -(a + b))
}

/// One explicit-Euler step of the electrical and mechanical equations.
///
/// Back-EMF and torque are evaluated at the pre-step state.
pub fn plant_step(state: &PlantState, v_abc: &AbcTriple, tl: f64, dt: f64, p: &MotorParams) -> Result<PlantState> {
    if !(dt > 0.0 && dt <= MAX_PLANT_DT) {
        return Err(DriveError::StepOutOfRange { dt });
    }
    let e = state.backemfs(p);
    let di = electrical_derivs(&state.i_abc, v_abc, &e, p);
    let te = torque_abc(&e, &state.i_abc, state.omega_r, state.theta_e(p), p);
    let dw = mech_deriv(te, tl, state.omega_r, p);

    let i_next = AbcTriple::new(
        state.i_abc.a + dt * di.a,
        state.i_abc.b + dt * di.b,
        state.i_abc.c + dt * di.c,
    );
    Ok(PlantState {
        i_abc: project_neutral(i_next),
        omega_r: state.omega_r + dt * dw,
        theta_m: wrap_angle(state.theta_m + dt * state.omega_r),
    })
}
