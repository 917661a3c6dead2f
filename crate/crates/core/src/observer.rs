//! Sensorless speed, load-torque, torque and position estimation.
//!
//! Back-EMF estimates from the sliding-mode observer supply two kinds of
//! measurement: the EMF-derived speed (the stationary-frame EMF of an ideal
//! trapezoid lies on a hexagon whose apothem scales with speed) and the
//! zero crossings of `ê_d`/`ê_q`, which happen at known electrical angles.
//! Between crossings the angle is dead-reckoned from the model speed.

use crate::plant::{torque_shape_form, MotorParams};
use crate::waveform::{inverse_clarke, DqPair, ElectricalAngle};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_6, PI};

/// Electrical-speed floor (rad/s) below which division by speed is replaced
/// by the shape form of the torque.
pub const OMEGA_E_FLOOR: f64 = 0.1;

/// Apothem of the unit-speed EMF hexagon (`2/√3`).
const HEX_APOTHEM: f64 = 1.154_700_538_379_251_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedObserverState {
    /// Mechanical speed estimate, rad/s.
    pub omega_hat: f64,
    pub theta_e_hat: ElectricalAngle,
    /// Load torque estimate, N·m.
    pub tl_hat: f64,
    /// Weighting applied to the load estimate in the speed model.
    pub k_w: f64,
    prev_emf: Option<DqPair>,
}

impl SpeedObserverState {
    pub fn new(omega_hat: f64, theta_e_hat: ElectricalAngle, tl_hat: f64, k_w: f64) -> Self {
        Self {
            omega_hat,
            theta_e_hat,
            tl_hat,
            k_w,
            prev_emf: None,
        }
    }
}

/// Electromagnetic torque from estimated EMFs and measured currents.
pub fn estimate_torque(
    e_dq_hat: &DqPair,
    i_dq: &DqPair,
    omega_e_hat: f64,
    theta_e_hat: ElectricalAngle,
    p: &MotorParams,
) -> f64 {
    if omega_e_hat.abs() < OMEGA_E_FLOOR {
        return torque_shape_form(&inverse_clarke(*i_dq), theta_e_hat, p);
    }
    1.5 * p.pole_pairs() * e_dq_hat.dot(i_dq) / omega_e_hat
}

/// First-order disturbance observer on the mechanical-equation residual.
///
/// `omega` and `domega` are the observed speed and its filtered derivative.
#[allow(clippy::too_many_arguments)]
pub fn update_load_torque(
    s: &SpeedObserverState,
    te_hat: f64,
    b_hat: f64,
    j_hat: f64,
    omega: f64,
    domega: f64,
    dt: f64,
    k_tl: f64,
) -> SpeedObserverState {
    let residual = te_hat - j_hat * domega - b_hat * omega;
    SpeedObserverState {
        tl_hat: s.tl_hat + dt * k_tl * (residual - s.tl_hat),
        ..*s
    }
}

/// Integrates the mechanical model with the identified parameters.
pub fn update_speed(s: &SpeedObserverState, te_hat: f64, b_hat: f64, j_hat: f64, dt: f64) -> SpeedObserverState {
    let accel = (te_hat - s.k_w * s.tl_hat - b_hat * s.omega_hat) / j_hat;
    SpeedObserverState {
        omega_hat: s.omega_hat + dt * accel,
        ..*s
    }
}

/// Angle and magnitude bookkeeping for one EMF zero crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    /// Electrical angle of the crossing.
    pub angle: f64,
    /// Fraction of the last period elapsed since the crossing.
    pub elapsed: f64,
}

/// Detects a sign change of `ê_d` or `ê_q` between two samples and returns
/// the electrical angle it marks. `direction` is the sign of rotation.
pub fn detect_crossing(prev: &DqPair, now: &DqPair, direction: f64) -> Option<Crossing> {
    let sgn = if direction < 0.0 { -1.0 } else { 1.0 };
    let (pd, pq) = (sgn * prev.d, sgn * prev.q);
    let (nd, nq) = (sgn * now.d, sgn * now.q);
    let frac = |a: f64, b: f64| {
        let den = a.abs() + b.abs();
        if den > 0.0 {
            b.abs() / den
        } else {
            0.0
        }
    };
    if (pq < 0.0) != (nq < 0.0) && pq != nq {
        // q crosses zero at the hexagon vertices θ = 90° (d > 0) and 270°
        let angle = if nd > 0.0 { FRAC_PI_2 } else { 3.0 * FRAC_PI_2 };
        return Some(Crossing {
            angle,
            elapsed: frac(pq, nq),
        });
    }
    if (pd < 0.0) != (nd < 0.0) && pd != nd {
        // d crosses zero at edge midpoints θ = 180° (q > 0) and 0°
        let angle = if nq > 0.0 { PI } else { 0.0 };
        return Some(Crossing {
            angle,
            elapsed: frac(pd, nd),
        });
    }
    None
}

/// Dead-reckons the angle and snaps it at EMF zero crossings.
///
/// `min_emf` gates the snap so noise around standstill cannot trigger it.
/// A single snap moves the angle by at most half a sector.
pub fn update_position(
    s: &SpeedObserverState,
    e_dq_hat: &DqPair,
    dt: f64,
    p: &MotorParams,
    min_emf: f64,
) -> SpeedObserverState {
    let omega_e = p.pole_pairs() * s.omega_hat;
    let mut theta = s.theta_e_hat.advance(omega_e * dt);
    if let Some(prev) = s.prev_emf {
        if e_dq_hat.norm() > min_emf && prev.norm() > min_emf {
            if let Some(c) = detect_crossing(&prev, e_dq_hat, s.omega_hat) {
                let target = ElectricalAngle::new(c.angle + omega_e * c.elapsed * dt);
                let corr = target.diff(theta).clamp(-FRAC_PI_6, FRAC_PI_6);
                theta = theta.advance(corr);
            }
        }
    }
    SpeedObserverState {
        theta_e_hat: theta,
        prev_emf: Some(*e_dq_hat),
        ..*s
    }
}

/// Mechanical speed magnitude implied by an EMF vector on the hexagon.
///
/// The largest projection onto the six edge normals is the hexagon
/// apothem `ke·|ω|·2/√3`.
pub fn emf_speed(e_dq: &DqPair, ke: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for k in 0..6 {
        let a = FRAC_PI_6 + k as f64 * FRAC_PI_3;
        best = best.max(e_dq.d * a.cos() + e_dq.q * a.sin());
    }
    best.max(0.0) / (ke * HEX_APOTHEM)
}

/// Electrical angle implied by the direction of an EMF vector.
///
/// Inverts the piecewise map from rotor angle to the EMF vector, which moves
/// along one hexagon edge per 60° of rotation, linearly in angle.
pub fn emf_angle(e_dq: &DqPair, direction: f64) -> ElectricalAngle {
    let sgn = if direction < 0.0 { -1.0 } else { 1.0 };
    let phi = (sgn * e_dq.q).atan2(sgn * e_dq.d).rem_euclid(2.0 * PI);
    let k = (phi / FRAC_PI_3).floor().min(5.0);
    let local = phi - k * FRAC_PI_3;
    // position along the edge from the vertex at k·60°, law of sines
    let t = local.sin() / (2.0 * FRAC_PI_3 - local).sin();
    ElectricalAngle::new(FRAC_PI_2 + FRAC_PI_3 * (k + t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtc::dtc_torque_dq;
    use crate::waveform::{clarke, phase_backemfs, AbcTriple};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn p() -> MotorParams {
        MotorParams::default()
    }

    #[test]
    fn torque_examples() {
        let p = p();
        let th = ElectricalAngle::from_degrees(40.0);
        assert_eq!(
            estimate_torque(&DqPair::new(50.0, 10.0), &DqPair::ZERO, 150.0, th, &p),
            0.0
        );
        // steady 1500 rpm under 3 N·m: Te = TL + Bω
        let w = 157.08;
        let te_balance = 3.0 + 0.002 * w;
        assert_abs_diff_eq!(te_balance, 3.314, epsilon = 1e-3);
        let e = phase_backemfs(th, w, p.ke);
        // two-phase conduction A+ B- at 40°; scale current to the balance torque
        let i_unit = AbcTriple::new(1.0, -1.0, 0.0);
        let i = i_unit.scale(te_balance * w / e.dot(&i_unit));
        let te = estimate_torque(&clarke(e), &clarke(i), w, th, &p);
        assert_relative_eq!(te, te_balance, max_relative = 1e-12);
    }

    #[test]
    fn load_torque_fixed_point_and_lag() {
        let s = SpeedObserverState::new(100.0, ElectricalAngle::default(), 2.0, 1.0);
        let te = 2.0 + 0.002 * 100.0;
        let n = update_load_torque(&s, te, 0.002, 0.004, 100.0, 0.0, 50e-6, 200.0);
        assert_abs_diff_eq!(n.tl_hat, 2.0, epsilon = 1e-12);

        // step 3 -> 5 N·m: 63 % after 1/k
        let k: f64 = 200.0;
        let dt = 1e-6;
        let mut s = SpeedObserverState::new(157.08, ElectricalAngle::default(), 3.0, 1.0);
        let steps = (1.0 / k / dt).round() as usize;
        for _ in 0..steps {
            s = update_load_torque(&s, 5.0 + 0.002 * 157.08, 0.002, 0.004, 157.08, 0.0, dt, k);
        }
        assert_abs_diff_eq!((s.tl_hat - 3.0) / 2.0, 1.0 - (-1.0f64).exp(), epsilon = 1e-3);
    }

    #[test]
    fn steady_state_load_estimate() {
        let w = 157.08;
        let mut s = SpeedObserverState::new(w, ElectricalAngle::default(), 0.0, 1.0);
        for _ in 0..40_000 {
            s = update_load_torque(&s, 3.0 + 0.002 * w, 0.002, 0.004, w, 0.0, 50e-6, 200.0);
        }
        assert_abs_diff_eq!(s.tl_hat, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn speed_update_examples() {
        let s = SpeedObserverState::new(120.0, ElectricalAngle::default(), 3.0, 1.0);
        let n = update_speed(&s, 3.0 + 0.002 * 120.0, 0.002, 0.004, 50e-6);
        assert_abs_diff_eq!(n.omega_hat, 120.0, epsilon = 1e-12);
        let s = SpeedObserverState::new(10.0, ElectricalAngle::default(), 1.0, 0.8);
        let n = update_speed(&s, 5.0, 0.003, 0.005, 1e-4);
        assert_abs_diff_eq!(n.omega_hat, 10.0 + 1e-4 * (5.0 - 0.8 - 0.03) / 0.005, epsilon = 1e-12);
    }

    #[test]
    fn speed_model_reproduces_plant_mechanics() {
        let p = p();
        let dt = 1e-6;
        let mut w_true = 0.0;
        let mut s = SpeedObserverState::new(0.0, ElectricalAngle::default(), 1.5, 1.0);
        for k in 0..100_000 {
            let te = 6.0 + 2.0 * (k as f64 * 1e-4).sin();
            w_true += dt * crate::plant::mech_deriv(te, 1.5, w_true, &p);
            s = update_speed(&s, te, p.b, p.j, dt);
        }
        assert_relative_eq!(s.omega_hat, w_true, max_relative = 1e-3);
    }

    #[test]
    fn position_dead_reckoning() {
        let p = p();
        let s = SpeedObserverState::new(0.0, ElectricalAngle::new(1.0), 0.0, 1.0);
        let n = update_position(&s, &DqPair::ZERO, 50e-6, &p, 1.0);
        assert_eq!(n.theta_e_hat, s.theta_e_hat);

        let mut s = SpeedObserverState::new(40.0, ElectricalAngle::new(0.5), 0.0, 1.0);
        for _ in 0..1000 {
            s = update_position(&s, &DqPair::ZERO, 50e-6, &p, 1.0);
        }
        let expect = ElectricalAngle::new(0.5 + 40.0 * 0.05);
        assert_abs_diff_eq!(s.theta_e_hat.diff(expect), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn snap_corrects_drift_within_half_sector() {
        let p = p();
        let w = 150.0;
        let dt = 50e-6;
        // estimate runs 10° ahead and 3 % fast
        let mut s = SpeedObserverState::new(1.03 * w, ElectricalAngle::from_degrees(10.0), 0.0, 1.0);
        let mut th = 0.0f64;
        let mut max_err: f64 = 0.0;
        for k in 0..4000 {
            th += w * dt;
            let e = clarke(phase_backemfs(ElectricalAngle::new(th), w, p.ke));
            let before = s.theta_e_hat;
            s = update_position(&s, &e, dt, &p, 1.0);
            let step = s.theta_e_hat.diff(before) - 1.03 * w * dt;
            assert!(step.abs() <= FRAC_PI_6 + 1e-12);
            if k > 800 {
                max_err = max_err.max(s.theta_e_hat.diff(ElectricalAngle::new(th)).abs());
            }
        }
        // 3 % over a quarter turn plus one period of quantization
        assert!(max_err.to_degrees() < 3.5, "max err {}", max_err.to_degrees());
    }

    #[test]
    fn emf_speed_and_angle_invert_the_trapezoid() {
        let p = p();
        for deg in (0..3600).map(|d| d as f64 * 0.1) {
            let th = ElectricalAngle::from_degrees(deg);
            for w in [5.0, 157.08] {
                let e = clarke(phase_backemfs(th, w, p.ke));
                assert_relative_eq!(emf_speed(&e, p.ke), w, max_relative = 1e-9);
                let a = emf_angle(&e, 1.0);
                assert!(a.diff(th).abs() < 1e-9, "{deg}: {}", a.degrees());
                let a = emf_angle(&clarke(phase_backemfs(th, -w, p.ke)), -1.0);
                assert!(a.diff(th).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn crossings_sit_at_quarter_turns() {
        let p = p();
        let mut seen = Vec::new();
        let step = 0.05f64;
        for i in 0..7200 {
            let a = ElectricalAngle::from_degrees(i as f64 * step);
            let b = ElectricalAngle::from_degrees((i + 1) as f64 * step);
            let ea = clarke(phase_backemfs(a, 100.0, p.ke));
            let eb = clarke(phase_backemfs(b, 100.0, p.ke));
            if let Some(c) = detect_crossing(&ea, &eb, 1.0) {
                seen.push((c.angle.to_degrees().round() as i32, b.degrees()));
            }
        }
        let mut angles: Vec<i32> = seen.iter().map(|s| s.0).collect();
        angles.sort();
        angles.dedup();
        assert_eq!(angles, vec![0, 90, 180, 270]);
        for (a, at) in seen {
            let d = ElectricalAngle::from_degrees(a as f64).diff(ElectricalAngle::from_degrees(at));
            assert!(d.abs().to_degrees() <= step + 1e-9);
        }
    }

    proptest! {
        #[test]
        fn estimate_matches_dq_torque(th in 0.0f64..std::f64::consts::TAU, w in 1.0f64..300.0, ia in -20.0f64..20.0, ib in -20.0f64..20.0) {
            let p = p();
            let th = ElectricalAngle::new(th);
            let e = clarke(phase_backemfs(th, w, p.ke));
            let i = clarke(AbcTriple::new(ia, ib, -(ia + ib)));
            let a = estimate_torque(&e, &i, w, th, &p);
            let b = dtc_torque_dq(&e, &i, w, 2);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }

        #[test]
        fn position_always_normalized(th in -10.0f64..10.0, w in -500.0f64..500.0, ed in -50.0f64..50.0, eq in -50.0f64..50.0) {
            let p = p();
            let mut s = SpeedObserverState::new(w, ElectricalAngle::new(th), 0.0, 1.0);
            s = update_position(&s, &DqPair::new(-ed, eq), 50e-6, &p, 0.1);
            s = update_position(&s, &DqPair::new(ed, -eq), 50e-6, &p, 0.1);
            let r = s.theta_e_hat.radians();
            prop_assert!((0.0..std::f64::consts::TAU).contains(&r));
        }
    }
}
