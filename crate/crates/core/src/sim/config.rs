//! Scenario configuration, read from TOML.
//!
//! Every field has a default (the reference 1500 rpm motor at rated conditions), so a
//! config file only lists overrides. Unknown keys are rejected.

use super::SimError;
use crate::plant::MotorParams;
use crate::smo::SmoGains;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const RPM_TO_RAD_S: f64 = std::f64::consts::PI / 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Pi,
    #[default]
    Mmras,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SensorMode {
    #[default]
    Sensorless,
    /// The controllers see true speed, angle, torque and load; the
    /// estimators still run so their traces can be compared.
    Oracle,
}

/// Piecewise-constant schedule of `[time, value]` breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule(pub Vec<[f64; 2]>);

impl Schedule {
    pub fn constant(v: f64) -> Self {
        Self(vec![[0.0, v]])
    }

    /// Value of the last breakpoint at or before `t`.
    pub fn at(&self, t: f64) -> f64 {
        let mut v = self.0[0][1];
        for [tk, vk] in &self.0 {
            if *tk <= t {
                v = *vk;
            } else {
                break;
            }
        }
        v
    }

    fn validate(&self, name: &str) -> Result<(), SimError> {
        let pts = &self.0;
        if pts.is_empty() {
            return Err(SimError::Config(format!(
                "{name} must have at least one [t, value] pair"
            )));
        }
        if pts[0][0] != 0.0 {
            return Err(SimError::Config(format!("{name} must start at t = 0")));
        }
        if pts.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(SimError::Config(format!("{name} contains non-finite values")));
        }
        if pts.windows(2).any(|w| w[1][0] < w[0][0]) {
            return Err(SimError::Config(format!("{name} times must be non-decreasing")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlsConfig {
    pub lambda: f64,
    /// Initial `[B/J, 1/J]`; deliberately wrong by default.
    pub theta0: [f64; 2],
    pub p0: [f64; 2],
    /// Threshold on the 1/J estimate below which B and J are not extracted.
    pub epsilon_j: f64,
    /// Identification window after handover before the load observer and the
    /// speed model take over, s.
    pub ident_time: f64,
    /// Updates pause while the load-observer innovation exceeds this, N·m.
    pub pause_innovation: f64,
    /// ...and resume once it stays below this for `resume_hold` seconds.
    pub resume_innovation: f64,
    pub resume_hold: f64,
    /// Control periods between identifier updates.
    pub decimation: usize,
}

impl Default for RlsConfig {
    fn default() -> Self {
        Self {
            lambda: 0.999,
            theta0: [0.0, 100.0],
            p0: [1e3, 1e6],
            epsilon_j: crate::rls::EPSILON_J,
            ident_time: 0.2,
            pause_innovation: 0.5,
            resume_innovation: 0.05,
            resume_hold: 0.01,
            decimation: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverConfig {
    /// Load-observer bandwidth, 1/s.
    pub k_tl: f64,
    /// Weight of the load estimate in the speed model.
    pub k_w: f64,
    /// Gain pulling the model speed toward the EMF-derived speed, 1/s.
    pub k_speed: f64,
    /// Time constant of the speed differentiator and regressor filters, s.
    pub deriv_tau: f64,
    /// Minimum |ê| for angle snaps and speed measurement, fraction of rated EMF.
    pub min_emf_frac: f64,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            k_tl: 200.0,
            k_w: 1.0,
            k_speed: 20.0,
            deriv_tau: 1e-3,
            min_emf_frac: 0.03,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtcConfig {
    /// Full hysteresis band width, N·m.
    pub band: f64,
}

impl Default for DtcConfig {
    fn default() -> Self {
        Self { band: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiConfig {
    pub kp: f64,
    pub ki: f64,
    pub out_limit: f64,
}

impl Default for PiConfig {
    fn default() -> Self {
        Self {
            kp: 0.05,
            ki: 5.0,
            out_limit: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmrasConfig {
    pub theta1: f64,
    pub theta2: f64,
    /// Adaptation gain. The windowed tracking loss is non-increasing over
    /// repeated identical steps for `gamma <= 1`; larger values adapt faster.
    pub gamma: f64,
    pub ref_a: f64,
    pub ref_b: f64,
    pub ref_c: f64,
    /// Map from the speed-like command `u'` to torque reference, N·m·s/rad.
    pub k_map: f64,
    pub out_limit: f64,
}

impl Default for MmrasConfig {
    fn default() -> Self {
        Self {
            theta1: 2.0,
            theta2: 2.0,
            gamma: 10.0,
            ref_a: 2500.0,
            ref_b: 100.0,
            ref_c: 2500.0,
            k_map: 0.1,
            out_limit: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartupConfig {
    /// Duration of the V1 alignment, s.
    pub align_time: f64,
    /// Current limit during alignment and ramp, A.
    pub current_limit: f64,
    /// Open-loop ramp acceleration, rad/s² (mechanical).
    pub ramp_accel: f64,
    /// Ramp end speed, fraction of rated speed.
    pub ramp_speed_frac: f64,
    /// Handover once |ê| exceeds this fraction of rated EMF.
    pub handover_emf_frac: f64,
    /// Rated speed, rpm.
    pub rated_rpm: f64,
    /// Rotor electrical angle at standstill, degrees.
    pub initial_angle_deg: f64,
}

impl Default for StartupConfig {
    fn default() -> Self {
        Self {
            align_time: 0.05,
            current_limit: 10.0,
            ramp_accel: 1000.0,
            ramp_speed_frac: 0.1,
            handover_emf_frac: 0.05,
            rated_rpm: 1500.0,
            initial_angle_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    /// Simulated horizon per evaluation, s.
    pub horizon: f64,
    /// Offspring per generation.
    pub population: usize,
    /// Survivors per generation.
    pub parents: usize,
    /// Lower corner of the search box `[ks1, ks2, ks3, ks4]`.
    pub lower: [f64; 4],
    pub upper: [f64; 4],
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            horizon: 0.2,
            population: 8,
            parents: 3,
            lower: [5.0e3, 5.0e3, 2.0e5, 2.0e5],
            upper: [1.5e4, 1.5e4, 2.0e7, 2.0e7],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub motor: MotorParams,
    pub dt_plant: f64,
    pub dt_ctrl: f64,
    pub t_end: f64,
    /// Speed reference, `[t, rpm]` pairs.
    pub omega_ref_profile: Schedule,
    /// Load torque, `[t, N·m]` pairs.
    pub tl_profile: Schedule,
    pub controller: ControllerKind,
    pub sensor_mode: SensorMode,
    /// Standard deviation of additive current-measurement noise, A.
    pub noise_std: f64,
    pub seed: u64,
    pub smo: SmoGains,
    pub rls: RlsConfig,
    pub observer: ObserverConfig,
    pub dtc: DtcConfig,
    pub pi: PiConfig,
    pub mmras: MmrasConfig,
    pub startup: StartupConfig,
    pub tune: TuneConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            motor: MotorParams::default(),
            dt_plant: 1e-6,
            dt_ctrl: 20e-6,
            t_end: 1.5,
            omega_ref_profile: Schedule::constant(1500.0),
            tl_profile: Schedule(vec![[0.0, 0.0], [0.5, 3.0]]),
            controller: ControllerKind::Mmras,
            sensor_mode: SensorMode::Sensorless,
            noise_std: 0.0,
            seed: 1,
            smo: SmoGains::default(),
            rls: RlsConfig::default(),
            observer: ObserverConfig::default(),
            dtc: DtcConfig::default(),
            pi: PiConfig::default(),
            mmras: MmrasConfig::default(),
            startup: StartupConfig::default(),
            tune: TuneConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            SimError::Config(m) => SimError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Control periods per plant step count.
    pub fn substeps(&self) -> usize {
        (self.dt_ctrl / self.dt_plant).round() as usize
    }

    pub fn rated_speed(&self) -> f64 {
        self.startup.rated_rpm * RPM_TO_RAD_S
    }

    /// Line-to-neutral EMF amplitude at rated speed, V.
    pub fn rated_emf(&self) -> f64 {
        self.motor.ke * self.rated_speed()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        self.motor.validate().map_err(|e| SimError::Config(e.to_string()))?;
        if !(self.dt_plant > 0.0 && self.dt_plant <= crate::plant::MAX_PLANT_DT) {
            return bad(format!("dt_plant must be in (0, 10e-6], got {}", self.dt_plant));
        }
        let ratio = self.dt_ctrl / self.dt_plant;
        if !(ratio >= 1.0 - 1e-9 && (ratio - ratio.round()).abs() < 1e-6) {
            return bad(format!(
                "dt_ctrl must be an integer multiple of dt_plant, got ratio {ratio}"
            ));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return bad(format!("t_end must be >= 0, got {}", self.t_end));
        }
        self.omega_ref_profile.validate("omega_ref_profile")?;
        self.tl_profile.validate("tl_profile")?;
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be >= 0".into());
        }
        let g = &self.smo;
        if ![g.ks1, g.ks2, g.ks3, g.ks4, g.delta]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            return bad("smo gains and delta must be > 0".into());
        }
        let r = &self.rls;
        if !(r.lambda > 0.9 && r.lambda <= 1.0) {
            return bad(format!("rls.lambda must be in (0.9, 1], got {}", r.lambda));
        }
        if !(r.p0[0] > 0.0 && r.p0[1] > 0.0) {
            return bad("rls.p0 must be positive".into());
        }
        if !(r.theta0[1] > 0.0 && r.theta0.iter().all(|v| v.is_finite())) {
            return bad("rls.theta0[1] (initial 1/J) must be > 0".into());
        }
        if r.decimation == 0 {
            return bad("rls.decimation must be >= 1".into());
        }
        if !(self.dtc.band > 0.0) {
            return bad("dtc.band must be > 0".into());
        }
        let m = &self.mmras;
        if !(m.ref_b > 0.0 && m.ref_c > 0.0) {
            return bad("mmras.ref_b and mmras.ref_c must be > 0".into());
        }
        if !(m.out_limit > 0.0 && self.pi.out_limit > 0.0) {
            return bad("controller out_limit must be > 0".into());
        }
        let o = &self.observer;
        if !(o.deriv_tau > 0.0 && o.k_tl >= 0.0 && o.k_speed >= 0.0) {
            return bad("observer gains must be >= 0 and deriv_tau > 0".into());
        }
        let s = &self.startup;
        if !(s.align_time >= 0.0 && s.current_limit > 0.0 && s.ramp_accel > 0.0 && s.rated_rpm > 0.0)
            || !s.initial_angle_deg.is_finite()
        {
            return bad("startup values must be positive".into());
        }
        let t = &self.tune;
        if t.population == 0 || t.parents == 0 || !(t.horizon > 0.0) {
            return bad("tune.population, tune.parents and tune.horizon must be > 0".into());
        }
        if (0..4).any(|k| !(t.lower[k] > 0.0 && t.upper[k] >= t.lower[k])) {
            return bad("tune bounds must satisfy 0 < lower <= upper".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = SimConfig::from_toml_str("").unwrap();
        assert_eq!(c, SimConfig::default());
        assert_eq!(c.substeps(), 20);
    }

    #[test]
    fn dotted_keys_override() {
        let c = SimConfig::from_toml_str(
            "motor.R = 0.5\ncontroller = \"pi\"\ntl_profile = [[0.0, 1.0], [0.2, 3.0]]\nrls.lambda = 0.99\n",
        )
        .unwrap();
        assert_eq!(c.motor.r, 0.5);
        assert_eq!(c.motor.l, 13e-3);
        assert_eq!(c.controller, ControllerKind::Pi);
        assert_eq!(c.tl_profile.at(0.1), 1.0);
        assert_eq!(c.tl_profile.at(0.2), 3.0);
        assert_eq!(c.rls.lambda, 0.99);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "unknown = 1",
            "motor.Q = 1.0",
            "dt_ctrl = 2.5e-6",
            "dt_plant = 1e-4",
            "t_end = -1.0",
            "omega_ref_profile = []",
            "tl_profile = [[0.1, 3.0]]",
            "tl_profile = [[0.0, 1.0], [0.5, 2.0], [0.4, 1.0]]",
            "rls.lambda = 0.5",
            "motor.P = 3",
            "controller = \"lqr\"",
        ] {
            assert!(
                matches!(SimConfig::from_toml_str(text), Err(SimError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn schedule_lookup() {
        let s = Schedule(vec![[0.0, 1.0], [1.0, 2.0], [1.0, 3.0], [2.0, 4.0]]);
        assert_eq!(s.at(0.0), 1.0);
        assert_eq!(s.at(0.999), 1.0);
        assert_eq!(s.at(1.0), 3.0);
        assert_eq!(s.at(5.0), 4.0);
    }
}
