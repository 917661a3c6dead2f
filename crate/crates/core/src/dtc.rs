//! Direct torque control: torque hysteresis, sector resolution and the
//! switching table (flux status held at "unchanged").

use crate::inverter::{vector_code, SwitchCode};
use crate::waveform::{DqPair, ElectricalAngle};
use std::f64::consts::FRAC_PI_3;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TorqueStatus {
    /// Increase torque.
    #[default]
    Ti,
    /// Decrease torque.
    Td,
}

impl TorqueStatus {
    pub fn as_i8(self) -> i8 {
        match self {
            TorqueStatus::Ti => 1,
            TorqueStatus::Td => -1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            1 => Some(TorqueStatus::Ti),
            -1 => Some(TorqueStatus::Td),
            _ => None,
        }
    }
}

impl fmt::Display for TorqueStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TorqueStatus::Ti => "TI",
            TorqueStatus::Td => "TD",
        })
    }
}

/// Two-threshold torque relay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HysteresisState {
    /// Full band width, N·m.
    pub band: f64,
    pub last: TorqueStatus,
}

impl HysteresisState {
    pub fn new(band: f64) -> Self {
        assert!(band > 0.0, "hysteresis band must be positive");
        Self {
            band,
            last: TorqueStatus::Ti,
        }
    }
}

pub fn hysteresis_torque(t_ref: f64, t_est: f64, h: HysteresisState) -> (TorqueStatus, HysteresisState) {
    let err = t_ref - t_est;
    let status = if err > 0.5 * h.band {
        TorqueStatus::Ti
    } else if err < -0.5 * h.band {
        TorqueStatus::Td
    } else {
        h.last
    };
    (status, HysteresisState { last: status, ..h })
}

/// 60° sector index in 1..=6; sector 1 is `[-30°, 30°)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sector(u8);

impl Sector {
    pub fn new(k: u8) -> Option<Self> {
        (1..=6).contains(&k).then_some(Self(k))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// Centre of the sector, radians.
    pub fn center(self) -> f64 {
        (self.0 - 1) as f64 * FRAC_PI_3
    }
}

pub fn sector(theta_e: ElectricalAngle) -> Sector {
    // shift by half a sector so sector 1 starts at 0 after the shift
    let shifted = ElectricalAngle::new(theta_e.radians() + 0.5 * FRAC_PI_3).radians();
    // boundaries belong to the upper sector even after rounding in the shift
    let k = (shifted / FRAC_PI_3 + 1e-12).floor() as i64;
    Sector((k.rem_euclid(6)) as u8 + 1)
}

/// Table index (1..=6) of the vector for the given status and sector.
pub fn table_vector(status: TorqueStatus, sector: Sector) -> u8 {
    let k = sector.index();
    match status {
        TorqueStatus::Ti => k % 6 + 1,
        TorqueStatus::Td => (k + 3) % 6 + 1,
    }
}

pub fn select_vector(status: TorqueStatus, sector: Sector) -> SwitchCode {
    vector_code(table_vector(status, sector)).expect("table indices are in range")
}

/// Electromagnetic torque from stationary-frame quantities:
/// `(3/2)·(P/2)·(e·i)/ω_e`. The caller guards `|ω_e|`.
pub fn dtc_torque_dq(e_dq: &DqPair, i_dq: &DqPair, omega_e: f64, poles: u32) -> f64 {
    1.5 * (poles as f64 / 2.0) * e_dq.dot(i_dq) / omega_e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverter::vector_index;
    use crate::plant::{torque_abc, MotorParams};
    use crate::waveform::{clarke, phase_backemfs, AbcTriple};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn hysteresis_examples() {
        let h = HysteresisState::new(0.2);
        assert_eq!(hysteresis_torque(3.0, 2.0, h).0, TorqueStatus::Ti);
        assert_eq!(hysteresis_torque(3.0, 4.0, h).0, TorqueStatus::Td);
        let h_ti = HysteresisState {
            band: 0.2,
            last: TorqueStatus::Ti,
        };
        let h_td = HysteresisState {
            band: 0.2,
            last: TorqueStatus::Td,
        };
        assert_eq!(hysteresis_torque(3.0, 3.05, h_ti).0, TorqueStatus::Ti);
        assert_eq!(hysteresis_torque(3.0, 2.95, h_td).0, TorqueStatus::Td);
    }

    #[test]
    fn hysteresis_matches_relay_oracle() {
        // independent relay: switch on crossing a threshold, otherwise hold
        let band = 0.3;
        let mut h = HysteresisState::new(band);
        let mut relay_on = true;
        for k in 0..2000 {
            let t_est = 1.0 + 0.4 * (k as f64 * 0.013).sin() + 0.05 * (k as f64 * 0.7).cos();
            if 1.0 - t_est > band / 2.0 {
                relay_on = true;
            }
            if 1.0 - t_est < -band / 2.0 {
                relay_on = false;
            }
            let (s, nh) = hysteresis_torque(1.0, t_est, h);
            h = nh;
            assert_eq!(s == TorqueStatus::Ti, relay_on);
        }
    }

    #[test]
    fn sector_examples() {
        assert_eq!(sector(ElectricalAngle::from_degrees(0.0)).index(), 1);
        assert_eq!(sector(ElectricalAngle::from_degrees(60.0)).index(), 2);
        assert_eq!(sector(ElectricalAngle::from_degrees(330.0 - 1e-9)).index(), 6);
        assert_eq!(sector(ElectricalAngle::from_degrees(330.0)).index(), 1);
        assert_eq!(sector(ElectricalAngle::from_degrees(29.999)).index(), 1);
        assert_eq!(sector(ElectricalAngle::from_degrees(30.0)).index(), 2);
    }

    #[test]
    fn sector_boundary_sweep() {
        for i in 0..36_000 {
            let deg = i as f64 * 0.01;
            // interval oracle: Θk = [(k-1)·60 - 30, k·60 - 30)
            let shifted = (deg + 30.0) % 360.0;
            let expect = (shifted / 60.0).floor() as u8 + 1;
            assert_eq!(sector(ElectricalAngle::from_degrees(deg)).index(), expect, "{deg}");
        }
    }

    #[test]
    fn table_lookup_examples() {
        let s1 = Sector::new(1).unwrap();
        assert_eq!(select_vector(TorqueStatus::Ti, s1).to_string(), "001001");
        assert_eq!(select_vector(TorqueStatus::Td, s1).to_string(), "000110");
        assert_eq!(
            select_vector(TorqueStatus::Ti, Sector::new(4).unwrap()).to_string(),
            "000110"
        );
    }

    #[test]
    fn table_is_total_and_td_opposes_ti() {
        for k in 1..=6 {
            let s = Sector::new(k).unwrap();
            let ti = vector_index(select_vector(TorqueStatus::Ti, s)).unwrap();
            let td = vector_index(select_vector(TorqueStatus::Td, s)).unwrap();
            assert_eq!(select_vector(TorqueStatus::Ti, s).count_on(), 2);
            assert_eq!(select_vector(TorqueStatus::Td, s).count_on(), 2);
            assert_eq!(td, (ti + 2) % 6 + 1);
        }
    }

    #[test]
    fn ti_vectors_produce_positive_torque_in_their_sector() {
        // constant-current torque of each TI vector averaged over its sector
        for k in 1..=6u8 {
            let s = Sector::new(k).unwrap();
            let code = select_vector(TorqueStatus::Ti, s);
            let i = [0, 1, 2].map(|x| match code.leg(x) {
                crate::inverter::LegState::High => 1.0,
                crate::inverter::LegState::Low => -1.0,
                crate::inverter::LegState::Off => 0.0,
            });
            let i = AbcTriple::from_array(i);
            let mut worst = f64::INFINITY;
            for d in -29..30 {
                let th = ElectricalAngle::new(s.center() + (d as f64).to_radians());
                let e = phase_backemfs(th, 1.0, 1.0);
                worst = worst.min(e.dot(&i));
            }
            assert!(worst > 0.0, "sector {k}: worst torque {worst}");
        }
    }

    #[test]
    fn dq_torque_examples() {
        assert_eq!(dtc_torque_dq(&DqPair::new(3.0, 4.0), &DqPair::ZERO, 100.0, 2), 0.0);
        let e = clarke(AbcTriple::new(62.83, 0.0, -62.83));
        let i = clarke(AbcTriple::new(5.0, 0.0, -5.0));
        assert_abs_diff_eq!(dtc_torque_dq(&e, &i, 157.08, 2), 4.0, epsilon = 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn abc_dq_torque_identity(
            th in 0.0f64..std::f64::consts::TAU,
            w in prop_oneof![0.2f64..2000.0, -2000.0f64..-0.2],
            ia in -50.0f64..50.0, ib in -50.0f64..50.0,
            poles in prop_oneof![Just(2u32), Just(4u32), Just(8u32)],
        ) {
            let p = MotorParams { poles, ..MotorParams::default() };
            let th = ElectricalAngle::new(th);
            let i = AbcTriple::new(ia, ib, -(ia + ib));
            let e = phase_backemfs(th, w, p.ke);
            let t_abc = torque_abc(&e, &i, w, th, &p);
            let t_dq = dtc_torque_dq(&clarke(e), &clarke(i), p.pole_pairs() * w, poles);
            // relative to the torque scale kt·Σ|i| so near-zero torques do not divide by ~0
            let scale = p.kt * (i.a.abs() + i.b.abs() + i.c.abs());
            prop_assert!((t_abc - t_dq).abs() <= 1e-9 * t_abc.abs().max(scale));
        }
    }
}
