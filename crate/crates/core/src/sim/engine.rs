//! Fixed-step co-simulation of the plant and the controller stack.
//!
//! Each control period runs, in order: measurement (+noise) → Clarke →
//! sliding-mode observer → torque estimate → parameter identification →
//! load-torque / speed / position update → speed controller → torque
//! hysteresis → sector → switching table. The plant then advances
//! `dt_ctrl/dt_plant` steps under the selected code.
//!
//! Start-up from standstill: the rotor is aligned with V1 for `align_time`,
//! dragged by a forced commutation angle up to `ramp_speed_frac` of rated
//! speed, and handed over to the sensorless loop once the estimated EMF is
//! large enough.

use super::config::{ControllerKind, SensorMode, SimConfig, RPM_TO_RAD_S};
use super::trace::{Stage, TraceRecord};
use super::SimError;
use crate::control::{
    mit_update, mras_control, pi_step, plant_filter_coefficients, reference_model_step, MrasState, PiState,
    SecondOrderFilter,
};
use crate::dtc::{hysteresis_torque, sector, select_vector, HysteresisState, Sector, TorqueStatus};
use crate::error::DriveError;
use crate::inverter::{phase_voltages, settle_currents, vector_code, SwitchCode};
use crate::observer::{
    emf_angle, emf_speed, estimate_torque, update_load_torque, update_position, update_speed, SpeedObserverState,
};
use crate::plant::{plant_step, MotorParams, PlantState};
use crate::rls::{build_regressor, extract_bj_with, rls_update, RlsState};
use crate::smo::{smo_step, SmoState};
use crate::waveform::{clarke, AbcTriple, DqPair, ElectricalAngle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Minimum time on the forced ramp before handover, s.
const MIN_RAMP_TIME: f64 = 5e-3;

/// Rotor angle the V1 alignment settles at.
const ALIGN_ANGLE_DEG: f64 = 30.0;

pub struct Engine {
    cfg: SimConfig,
    p: MotorParams,
    dt: f64,
    sub: usize,
    k: usize,
    n_periods: usize,

    plant: PlantState,
    code: SwitchCode,
    u_avg: DqPair,
    i_prev: DqPair,

    smo: SmoState,
    rls: RlsState,
    b_hat: f64,
    j_hat: f64,
    obs: SpeedObserverState,
    hyst: HysteresisState,
    pi: PiState,
    mras: MrasState,

    stage: Stage,
    t_handover: f64,
    t_ramp: f64,
    forced_angle: ElectricalAngle,
    forced_speed: f64,

    w_f: f64,
    te_f: f64,
    rls_paused: bool,
    calm_time: f64,

    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,

    last_i_meas: DqPair,
}

fn non_finite(signal: &str, t: f64) -> SimError {
    SimError::Numeric(DriveError::NonFinite {
        signal: signal.to_string(),
        t,
    })
}

impl Engine {
    pub fn new(cfg: &SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let p = cfg.motor;
        let dt = cfg.dt_ctrl;
        let rls = RlsState::new(cfg.rls.theta0, cfg.rls.p0, cfg.rls.lambda)?;
        let (b_hat, j_hat) = initial_bj(&rls);
        let (fa, fb, fc) = plant_filter_coefficients(&p);
        let m = &cfg.mmras;
        let mras = MrasState::new(
            m.theta1,
            m.theta2,
            m.gamma,
            SecondOrderFilter::new(m.ref_a, m.ref_b, m.ref_c),
            SecondOrderFilter::new(fa, fb, fc),
        );
        let oracle = cfg.sensor_mode == SensorMode::Oracle;
        let theta0 = cfg.startup.initial_angle_deg.to_radians();
        let noise = if cfg.noise_std > 0.0 {
            Some(Normal::new(0.0, cfg.noise_std).map_err(|e| SimError::Config(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            p,
            dt,
            sub: cfg.substeps(),
            k: 0,
            n_periods: (cfg.t_end / dt + 1e-9).floor() as usize,
            plant: PlantState::at_rest(theta0, &p),
            code: SwitchCode::ALL_OFF,
            u_avg: DqPair::ZERO,
            i_prev: DqPair::ZERO,
            smo: SmoState::default(),
            rls,
            b_hat,
            j_hat,
            obs: SpeedObserverState::new(0.0, ElectricalAngle::default(), 0.0, cfg.observer.k_w),
            hyst: HysteresisState::new(cfg.dtc.band),
            pi: PiState::new(cfg.pi.kp, cfg.pi.ki, cfg.pi.out_limit),
            mras,
            stage: if oracle { Stage::Closed } else { Stage::Align },
            t_handover: 0.0,
            t_ramp: 0.0,
            forced_angle: ElectricalAngle::from_degrees(ALIGN_ANGLE_DEG),
            forced_speed: 0.0,
            w_f: 0.0,
            te_f: 0.0,
            rls_paused: false,
            calm_time: 0.0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            noise,
            last_i_meas: DqPair::ZERO,
            cfg: cfg.clone(),
        })
    }

    pub fn is_done(&self) -> bool {
        self.k >= self.n_periods
    }

    pub fn plant(&self) -> &PlantState {
        &self.plant
    }

    pub fn smo(&self) -> &SmoState {
        &self.smo
    }

    /// Current measured at the most recent control instant.
    pub fn measured_current(&self) -> DqPair {
        self.last_i_meas
    }

    fn measure(&mut self) -> AbcTriple {
        let i = self.plant.i_abc;
        match self.noise {
            Some(n) => {
                let a = i.a + n.sample(&mut self.rng);
                let b = i.b + n.sample(&mut self.rng);
                AbcTriple::new(a, b, -(a + b))
            }
            None => i,
        }
    }

    fn direction(&self, t: f64) -> f64 {
        if self.cfg.omega_ref_profile.at(t) < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    fn over_current(&self) -> bool {
        let i = self.plant.i_abc;
        i.a.abs().max(i.b.abs()).max(i.c.abs()) > self.cfg.startup.current_limit
    }

    fn handover(&mut self, t: f64, e_hat: &DqPair, omega_m: f64) {
        self.stage = Stage::Closed;
        self.t_handover = t;
        self.obs.omega_hat = omega_m;
        self.obs.theta_e_hat = emf_angle(e_hat, omega_m);
        self.obs.tl_hat = 0.0;
        self.mras.reset_to(omega_m, self.dt);
    }

    /// Advances one control period and returns its record.
    pub fn step(&mut self) -> Result<TraceRecord, SimError> {
        let t = self.k as f64 * self.dt;
        let dt = self.dt;
        let p = self.p;
        let dir = self.direction(t);

        // measurement
        let i_meas = self.measure();
        let i_dq = clarke(i_meas);

        let cfg = &self.cfg;
        let oracle = cfg.sensor_mode == SensorMode::Oracle;
        let rated_emf = cfg.rated_emf();
        let emf_min = cfg.observer.min_emf_frac * rated_emf;
        let omega_ref = cfg.omega_ref_profile.at(t) * RPM_TO_RAD_S;

        // back-EMF observer, driven by last period's average phase voltage
        self.smo = smo_step(&self.smo, &cfg.smo, &self.u_avg, &self.i_prev, dt, &p, 3.0 * rated_emf)
            .map_err(|_| non_finite("observer input", t))?;
        let e_hat = self.smo.emf();
        let e_ok = e_hat.norm() > emf_min;
        let omega_m = dir * emf_speed(&e_hat, p.ke);

        // torque estimate: the EMF-derived speed keeps ê/ω a pure shape
        let omega_div = if e_ok { omega_m } else { self.obs.omega_hat };
        let te_hat = estimate_torque(&e_hat, &i_dq, p.pole_pairs() * omega_div, self.obs.theta_e_hat, &p);

        // shared filters for the identifier and the load observer
        let tau = cfg.observer.deriv_tau;
        let a = dt / tau;
        let domega = (omega_m - self.w_f) / tau;
        let w_f_old = self.w_f;
        let te_f_old = self.te_f;
        self.w_f += a * (omega_m - self.w_f);
        self.te_f += a * (te_hat - self.te_f);

        if self.stage == Stage::Closed {
            let since = t - self.t_handover;
            let identifying = since < cfg.rls.ident_time;

            if !identifying {
                let before = self.obs.tl_hat;
                let residual = te_f_old - self.j_hat * domega - self.b_hat * w_f_old;
                let innovation = (residual - before).abs();
                if innovation > cfg.rls.pause_innovation {
                    self.rls_paused = true;
                    self.calm_time = 0.0;
                } else if self.rls_paused {
                    if innovation < cfg.rls.resume_innovation {
                        self.calm_time += dt;
                        if self.calm_time >= cfg.rls.resume_hold {
                            self.rls_paused = false;
                        }
                    } else {
                        self.calm_time = 0.0;
                    }
                }
                self.obs = update_load_torque(
                    &self.obs,
                    te_f_old,
                    self.b_hat,
                    self.j_hat,
                    w_f_old,
                    domega,
                    dt,
                    cfg.observer.k_tl,
                );
            }

            let decim = cfg.rls.decimation.max(1);
            if !self.rls_paused && e_ok && self.k.is_multiple_of(decim) {
                let tl_used = if identifying { 0.0 } else { self.obs.tl_hat };
                let (y, phi) = build_regressor(w_f_old, domega, te_f_old, tl_used);
                self.rls = rls_update(&self.rls, y, &phi);
                if let Ok((b, j)) = extract_bj_with(&self.rls, cfg.rls.epsilon_j) {
                    if b.is_finite() && j.is_finite() {
                        self.b_hat = b;
                        self.j_hat = j;
                    }
                }
            }

            if identifying {
                self.obs.omega_hat = omega_m;
            } else {
                self.obs = update_speed(&self.obs, te_hat, self.b_hat, self.j_hat, dt);
                self.obs.omega_hat += dt * cfg.observer.k_speed * (omega_m - self.obs.omega_hat);
            }
            self.obs = update_position(&self.obs, &e_hat, dt, &p, emf_min);
        } else {
            self.obs.omega_hat = omega_m;
            let keep = self.obs.theta_e_hat;
            self.obs = update_position(&self.obs, &e_hat, dt, &p, emf_min);
            self.obs.theta_e_hat = if e_ok { emf_angle(&e_hat, dir) } else { keep };
        }

        // start-up sequencing
        match self.stage {
            Stage::Align if t >= cfg.startup.align_time => {
                self.stage = Stage::Ramp;
                self.t_ramp = t;
            }
            Stage::Ramp => {
                let target = cfg.startup.ramp_speed_frac * cfg.rated_speed();
                self.forced_speed = (self.forced_speed + cfg.startup.ramp_accel * dt).min(target);
                self.forced_angle = self.forced_angle.advance(dir * p.pole_pairs() * self.forced_speed * dt);
                let ready = self.forced_speed >= target && t - self.t_ramp >= MIN_RAMP_TIME;
                if ready && e_hat.norm() > cfg.startup.handover_emf_frac * rated_emf {
                    self.handover(t, &e_hat, omega_m);
                }
            }
            _ => {}
        }

        let cfg = &self.cfg;
        let te_true = self.plant.torque(&p);
        let (omega_fb, theta_fb, te_fb) = if oracle {
            (self.plant.omega_r, self.plant.theta_e(&p), te_true)
        } else {
            (self.obs.omega_hat, self.obs.theta_e_hat, te_hat)
        };

        let (t_ref, t_st, sec) = match self.stage {
            Stage::Closed => {
                let t_ref = match cfg.controller {
                    ControllerKind::Pi => {
                        let (tr, s) = pi_step(&self.pi, omega_ref, omega_fb, dt);
                        self.pi = s;
                        tr
                    }
                    ControllerKind::Mmras => {
                        let (y_ref, s) = reference_model_step(&self.mras, omega_ref, dt);
                        let e = omega_fb - y_ref;
                        self.mras = mit_update(&s, e, omega_ref, omega_fb, dt);
                        let u = mras_control(&self.mras, omega_ref, omega_fb);
                        (cfg.mmras.k_map * u).clamp(-cfg.mmras.out_limit, cfg.mmras.out_limit)
                    }
                };
                let (st, h) = hysteresis_torque(t_ref, te_fb, self.hyst);
                self.hyst = h;
                let sec = sector(theta_fb);
                self.code = select_vector(st, sec);
                (t_ref, st, sec)
            }
            Stage::Align => {
                self.code = if self.over_current() {
                    SwitchCode::ALL_OFF
                } else {
                    vector_code(1).map_err(SimError::Numeric)?
                };
                (0.0, TorqueStatus::Ti, Sector::new(1).expect("valid sector"))
            }
            Stage::Ramp => {
                let sec = sector(self.forced_angle);
                let st = if dir > 0.0 { TorqueStatus::Ti } else { TorqueStatus::Td };
                self.code = if self.over_current() {
                    SwitchCode::ALL_OFF
                } else {
                    select_vector(st, sec)
                };
                (0.0, st, sec)
            }
        };

        let e_true = clarke(self.plant.backemfs(&p));
        let rec = TraceRecord {
            t,
            i_a: self.plant.i_abc.a,
            i_b: self.plant.i_abc.b,
            i_c: self.plant.i_abc.c,
            omega_r: self.plant.omega_r,
            theta_e: self.plant.theta_e(&p).radians(),
            te: te_true,
            tl: cfg.tl_profile.at(t),
            e_d_hat: e_hat.d,
            e_q_hat: e_hat.q,
            omega_hat: self.obs.omega_hat,
            theta_e_hat: self.obs.theta_e_hat.radians(),
            te_hat,
            tl_hat: self.obs.tl_hat,
            b_hat: self.b_hat,
            j_hat: self.j_hat,
            t_ref,
            theta1: self.mras.theta1,
            theta2: self.mras.theta2,
            code: self.code,
            sector: sec.index(),
            t_st,
            omega_ref,
            e_d: e_true.d,
            e_q: e_true.q,
            stage: self.stage,
        };
        if let Some(name) = rec.first_non_finite() {
            return Err(non_finite(name, t));
        }

        // plant sub-steps under the selected code
        let mut v_sum = AbcTriple::ZERO;
        for j in 0..self.sub {
            let ts = t + j as f64 * cfg.dt_plant;
            let e = self.plant.backemfs(&p);
            let v = phase_voltages(self.code, &self.plant.i_abc, &e, p.vdc);
            v_sum = v_sum + v;
            let before = self.plant.i_abc;
            let mut next = plant_step(&self.plant, &v, cfg.tl_profile.at(ts), cfg.dt_plant, &p)?;
            next.i_abc = settle_currents(self.code, &before, next.i_abc);
            self.plant = next;
        }
        if !(self.plant.i_abc.is_finite() && self.plant.omega_r.is_finite()) {
            return Err(non_finite("plant state", t + dt));
        }
        self.u_avg = clarke(v_sum.scale(1.0 / self.sub as f64));
        self.i_prev = i_dq;
        self.last_i_meas = i_dq;
        self.k += 1;
        Ok(rec)
    }
}

fn initial_bj(rls: &RlsState) -> (f64, f64) {
    let j = 1.0 / rls.theta[1];
    (rls.theta[0] * j, j)
}

/// Runs the configured scenario and returns one record per control period.
pub fn run_simulation(cfg: &SimConfig) -> Result<Vec<TraceRecord>, SimError> {
    let mut eng = Engine::new(cfg)?;
    let mut out = Vec::with_capacity(eng.n_periods);
    while !eng.is_done() {
        out.push(eng.step()?);
    }
    Ok(out)
}
