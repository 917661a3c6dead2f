//! Six-switch voltage-source inverter with ideal antiparallel diodes.
//!
//! Switch codes are six-character strings of `0`/`1` ordered per leg as
//! (A-low, A-high, B-low, B-high, C-low, C-high). With this ordering the six
//! DTC vectors trace the six-step sequence
//! V1 = C+A−, V2 = C+B−, V3 = A+B−, V4 = A+C−, V5 = B+C−, V6 = B+A−.

use crate::error::{DriveError, Result};
use crate::waveform::AbcTriple;
use std::fmt;

/// Current magnitude (A) separating a freewheeling leg from an open one.
pub const I_EPS: f64 = 1e-3;

const TABLE_CODES: [&str; 6] = ["100001", "001001", "011000", "010010", "000110", "100100"];

/// State of one inverter leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegState {
    Off,
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SwitchCode {
    bits: [bool; 6],
}

impl SwitchCode {
    pub const ALL_OFF: Self = Self { bits: [false; 6] };

    /// Builds a code from the six bits; rejects shoot-through.
    pub fn new(bits: [bool; 6]) -> Result<Self> {
        let code = Self { bits };
        for leg in 0..3 {
            if bits[2 * leg] && bits[2 * leg + 1] {
                return Err(DriveError::ShootThrough(code.to_string()));
            }
        }
        Ok(code)
    }

    pub fn parse(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 6 || chars.iter().any(|c| *c != '0' && *c != '1') {
            return Err(DriveError::InvalidParam(format!(
                "switch code must be six 0/1 digits, got {s:?}"
            )));
        }
        let mut bits = [false; 6];
        for (b, c) in bits.iter_mut().zip(&chars) {
            *b = *c == '1';
        }
        Self::new(bits)
    }

    pub fn bits(&self) -> [bool; 6] {
        self.bits
    }

    pub fn leg(&self, phase: usize) -> LegState {
        match (self.bits[2 * phase], self.bits[2 * phase + 1]) {
            (false, true) => LegState::High,
            (true, false) => LegState::Low,
            _ => LegState::Off,
        }
    }

    pub fn count_on(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

impl fmt::Display for SwitchCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// The literal code of active vector `V<index>`, `index` in 1..=6.
pub fn vector_code(index: u8) -> Result<SwitchCode> {
    match index {
        1..=6 => SwitchCode::parse(TABLE_CODES[index as usize - 1]),
        _ => Err(DriveError::VectorIndex(index)),
    }
}

/// Index (1..=6) of a code among the active vectors, if it is one.
pub fn vector_index(code: SwitchCode) -> Option<u8> {
    (1..=6u8).find(|&k| vector_code(k).map(|c| c == code).unwrap_or(false))
}

/// Per-phase conduction status resolved against the phase currents.
fn terminal(leg: LegState, i: f64, vdc: f64) -> Option<f64> {
    let half = 0.5 * vdc;
    match leg {
        LegState::High => Some(half),
        LegState::Low => Some(-half),
        // a positive current into the motor returns through the low-side diode
        LegState::Off if i > I_EPS => Some(-half),
        LegState::Off if i < -I_EPS => Some(half),
        LegState::Off => None,
    }
}

/// Phase-to-neutral voltages applied by the bridge.
///
/// Conducting legs (switched or freewheeling) clamp their terminal to a
/// rail; an open leg follows its back-EMF. The neutral floats to the mean of
/// `v_terminal − e` over the conducting phases.
pub fn phase_voltages(code: SwitchCode, i_abc: &AbcTriple, e_abc: &AbcTriple, vdc: f64) -> AbcTriple {
    let i = i_abc.as_array();
    let e = e_abc.as_array();
    let mut vt = [None; 3];
    for x in 0..3 {
        vt[x] = terminal(code.leg(x), i[x], vdc);
    }
    let (sum, n) = (0..3)
        .filter_map(|x| vt[x].map(|v| v - e[x]))
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    let vn = if n > 0 { sum / n as f64 } else { 0.0 };
    let mut v = [0.0; 3];
    for x in 0..3 {
        v[x] = match vt[x] {
            Some(t) => t - vn,
            None => e[x],
        };
    }
    AbcTriple::from_array(v)
}

/// Enforces diode behaviour after an integration step: current in an
/// unswitched leg may decay to zero but never reverses, and an open leg
/// holds zero current. The remaining phases are re-projected to sum zero.
pub fn settle_currents(code: SwitchCode, before: &AbcTriple, after: AbcTriple) -> AbcTriple {
    let b = before.as_array();
    let mut a = after.as_array();
    let mut clamped = [false; 3];
    for x in 0..3 {
        if code.leg(x) != LegState::Off {
            continue;
        }
        let open = b[x].abs() <= I_EPS;
        let reversed = b[x] * a[x] <= 0.0;
        if open || reversed || a[x].abs() <= I_EPS {
            a[x] = 0.0;
            clamped[x] = true;
        }
    }
    let free: Vec<usize> = (0..3).filter(|x| !clamped[*x]).collect();
    if free.len() == 1 {
        a[free[0]] = 0.0;
    } else if !free.is_empty() {
        let m = free.iter().map(|x| a[*x]).sum::<f64>() / free.len() as f64;
        for x in &free {
            a[*x] -= m;
        }
        // close the sum exactly on the last free phase
        let last = *free.last().unwrap();
        a[last] = -(0..3).filter(|x| *x != last).map(|x| a[x]).sum::<f64>();
    }
    AbcTriple::from_array(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{plant_step, MotorParams, PlantState};
    use approx::assert_abs_diff_eq;

    #[test]
    fn table_codes() {
        assert_eq!(vector_code(1).unwrap().to_string(), "100001");
        assert_eq!(vector_code(3).unwrap().to_string(), "011000");
        assert_eq!(vector_code(5).unwrap().to_string(), "000110");
        assert!(vector_code(0).is_err());
        assert!(vector_code(7).is_err());
    }

    #[test]
    fn vector_legs_follow_six_step_sequence() {
        use LegState::*;
        let expect = [
            [Low, Off, High], // V1: C+ A-
            [Off, Low, High], // V2: C+ B-
            [High, Low, Off], // V3: A+ B-
            [High, Off, Low], // V4: A+ C-
            [Off, High, Low], // V5: B+ C-
            [Low, High, Off], // V6: B+ A-
        ];
        for (k, legs) in expect.iter().enumerate() {
            let c = vector_code(k as u8 + 1).unwrap();
            assert_eq!(c.count_on(), 2);
            assert_eq!([c.leg(0), c.leg(1), c.leg(2)], *legs, "V{}", k + 1);
            assert_eq!(vector_index(c), Some(k as u8 + 1));
        }
    }

    #[test]
    fn shoot_through_rejected() {
        assert!(matches!(SwitchCode::parse("110000"), Err(DriveError::ShootThrough(_))));
        assert!(SwitchCode::parse("000011").is_err());
        assert!(SwitchCode::parse("10000").is_err());
        assert!(SwitchCode::parse("10000x").is_err());
    }

    #[test]
    fn all_off_sees_emf() {
        let e = AbcTriple::new(12.0, -30.0, 18.0);
        let v = phase_voltages(SwitchCode::ALL_OFF, &AbcTriple::ZERO, &e, 300.0);
        assert_eq!(v, e);
    }

    #[test]
    fn two_phase_vector_symmetric_emf() {
        // V4 drives A high and C low.
        let e = AbcTriple::new(62.83, 10.0, -62.83);
        let v = phase_voltages(vector_code(4).unwrap(), &AbcTriple::ZERO, &e, 300.0);
        assert_abs_diff_eq!(v.a, 150.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.c, -150.0, epsilon = 1e-12);
        assert_eq!(v.b, e.b);
        // V1 is the same pair with reversed polarity
        let v = phase_voltages(vector_code(1).unwrap(), &AbcTriple::ZERO, &e, 300.0);
        assert_abs_diff_eq!(v.a, -150.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.c, 150.0, epsilon = 1e-12);
    }

    #[test]
    fn freewheeling_leg_clamps_to_rail() {
        // B was driven positive, V4 leaves B floating: low diode conducts.
        let i = AbcTriple::new(3.0, 2.0, -5.0);
        let e = AbcTriple::new(60.0, 0.0, -60.0);
        let v = phase_voltages(vector_code(4).unwrap(), &i, &e, 300.0);
        // terminals: a = +150, b = -150, c = -150
        let vn = ((150.0 - 60.0) + (-150.0 - 0.0) + (-150.0 + 60.0)) / 3.0;
        assert_abs_diff_eq!(v.a, 150.0 - vn, epsilon = 1e-12);
        assert_abs_diff_eq!(v.b, -150.0 - vn, epsilon = 1e-12);
        assert_abs_diff_eq!(v.c, -150.0 - vn, epsilon = 1e-12);
    }

    #[test]
    fn open_phase_stays_open_and_freewheel_decays() {
        let p = MotorParams::default();
        let code = vector_code(4).unwrap();
        // freewheeling start on B
        let mut s = PlantState {
            i_abc: AbcTriple::new(4.0, 1.5, -5.5),
            omega_r: 150.0,
            theta_m: 0.2,
        };
        let mut last = s.i_abc.b.abs();
        let mut extinguished = false;
        for _ in 0..2000 {
            let e = s.backemfs(&p);
            let v = phase_voltages(code, &s.i_abc, &e, p.vdc);
            let before = s.i_abc;
            s = plant_step(&s, &v, 0.0, 1e-6, &p).unwrap();
            s.i_abc = settle_currents(code, &before, s.i_abc);
            let now = s.i_abc.b.abs();
            assert!(now <= last + 1e-12, "freewheel current grew {last} -> {now}");
            last = now;
            if extinguished {
                assert!(now <= I_EPS);
            }
            extinguished |= now == 0.0;
            assert!(s.i_abc.sum().abs() < 1e-9);
        }
        assert!(extinguished);
    }
}
