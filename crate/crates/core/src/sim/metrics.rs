//! Scalar performance metrics of a trace.
//!
//! * Step response (overshoot, 10–90 % rise, ±2 % settling) is measured on
//!   the true speed from the last speed-reference change up to the next load
//!   change (or the end of the trace). A reference that never changes counts
//!   as a step at `t = 0`.
//! * Steady-state figures (speed-estimate RMS error, EMF RMS error, torque
//!   ripple) use the final 20 % of the run.
//! * Identification errors compare the last record with the configured truth.

use super::config::{SimConfig, RPM_TO_RAD_S};
use super::trace::TraceRecord;
use super::SimError;
use serde::{Deserialize, Serialize};

/// Fraction of the run treated as steady state.
pub const STEADY_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overshoot_pct: f64,
    pub rise_time_s: f64,
    pub settle_time_2pct_s: f64,
    /// RMS of `ω̂ − ω`, rad/s.
    pub speed_rms_err: f64,
    /// RMS EMF vector error, % of `ke·|ω_ref|`.
    pub emf_rms_err_pct: f64,
    /// Larger of the B and J relative errors, %.
    pub bj_final_err_pct: f64,
    /// Load-torque error, % of the true load (of 1 N·m when unloaded).
    pub tl_final_err_pct: f64,
    /// Peak-to-peak true torque, N·m.
    pub torque_ripple_pp: f64,
    /// Set when the trace is too short for some figure: truncated before
    /// `t_end`, fewer than two steady-state records, or a step response that
    /// never reaches 90 % or never settles.
    pub partial: bool,
}

impl Metrics {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metrics serialize")
    }
}

/// Start of the step-response window: the last time the speed reference
/// changes value (0 if it never does).
fn step_time(cfg: &SimConfig) -> f64 {
    let pts = &cfg.omega_ref_profile.0;
    let mut t_step = 0.0;
    for w in pts.windows(2) {
        if w[1][1] != w[0][1] && w[1][0] <= cfg.t_end {
            t_step = w[1][0];
        }
    }
    t_step
}

/// End of the step-response window: the first load change after `t_step`.
fn window_end(cfg: &SimConfig, t_step: f64) -> f64 {
    let pts = &cfg.tl_profile.0;
    for w in pts.windows(2) {
        if w[1][0] > t_step && w[1][1] != w[0][1] {
            return w[1][0];
        }
    }
    f64::INFINITY
}

/// Linearly interpolated time at which `y` first reaches `level` going in
/// direction `sgn`.
fn first_crossing(ts: &[f64], ys: &[f64], level: f64, sgn: f64) -> Option<f64> {
    if sgn * (ys[0] - level) >= 0.0 {
        return Some(ts[0]);
    }
    for k in 1..ys.len() {
        if sgn * (ys[k] - level) >= 0.0 {
            let (y0, y1) = (ys[k - 1], ys[k]);
            let f = if y1 != y0 { (level - y0) / (y1 - y0) } else { 1.0 };
            return Some(ts[k - 1] + f * (ts[k] - ts[k - 1]));
        }
    }
    None
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v * v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

pub fn compute_metrics(trace: &[TraceRecord], cfg: &SimConfig) -> Result<Metrics, SimError> {
    let last = trace
        .last()
        .ok_or_else(|| SimError::Config("cannot compute metrics of an empty trace".into()))?;
    let mut partial = last.t < cfg.t_end - 1.5 * cfg.dt_ctrl;

    // step response
    let t_step = step_time(cfg);
    let t_stop = window_end(cfg, t_step);
    let target = cfg.omega_ref_profile.at(t_step) * RPM_TO_RAD_S;
    let win: Vec<&TraceRecord> = trace.iter().filter(|r| r.t >= t_step && r.t < t_stop).collect();
    let (mut overshoot_pct, mut rise_time_s, mut settle_time_2pct_s) = (0.0, 0.0, 0.0);
    if win.len() >= 2 {
        let ts: Vec<f64> = win.iter().map(|r| r.t).collect();
        let ys: Vec<f64> = win.iter().map(|r| r.omega_r).collect();
        let y0 = ys[0];
        let delta = target - y0;
        let sgn = if delta != 0.0 {
            delta.signum()
        } else if target < 0.0 {
            -1.0
        } else {
            1.0
        };
        let scale = target.abs().max(f64::MIN_POSITIVE);

        let peak = ys.iter().map(|y| sgn * (y - target)).fold(f64::NEG_INFINITY, f64::max);
        overshoot_pct = (peak / scale * 100.0).max(0.0);

        if delta != 0.0 {
            let t10 = first_crossing(&ts, &ys, y0 + 0.1 * delta, sgn);
            let t90 = first_crossing(&ts, &ys, y0 + 0.9 * delta, sgn);
            match (t10, t90) {
                (Some(a), Some(b)) => rise_time_s = b - a,
                _ => {
                    partial = true;
                    rise_time_s = ts[ts.len() - 1] - ts[0];
                }
            }
        }

        let tol = 0.02 * scale;
        if let Some(k) = ys.iter().rposition(|y| (y - target).abs() > tol) {
            if k + 1 < ts.len() {
                settle_time_2pct_s = ts[k + 1] - t_step;
            } else {
                partial = true;
                settle_time_2pct_s = ts[k] - t_step;
            }
        }
    } else {
        partial = true;
    }

    // steady state
    let t_ss = (1.0 - STEADY_FRACTION) * last.t;
    let ss: Vec<&TraceRecord> = trace.iter().filter(|r| r.t >= t_ss).collect();
    if ss.len() < 2 {
        partial = true;
    }
    let speed_rms_err = rms(ss.iter().map(|r| r.omega_hat - r.omega_r));
    let emf_scale = cfg.motor.ke * last.omega_ref.abs().max(1.0);
    let emf_rms_err_pct = rms(ss.iter().map(|r| (r.e_d_hat - r.e_d).hypot(r.e_q_hat - r.e_q))) / emf_scale * 100.0;
    let (lo, hi) = ss.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.te), hi.max(r.te))
    });
    let torque_ripple_pp = if ss.is_empty() { 0.0 } else { hi - lo };

    let p = &cfg.motor;
    let bj_final_err_pct = ((last.b_hat - p.b).abs() / p.b).max((last.j_hat - p.j).abs() / p.j) * 100.0;
    let tl_true = cfg.tl_profile.at(last.t);
    let tl_scale = if tl_true.abs() > 0.0 { tl_true.abs() } else { 1.0 };
    let tl_final_err_pct = (last.tl_hat - tl_true).abs() / tl_scale * 100.0;

    Ok(Metrics {
        overshoot_pct,
        rise_time_s,
        settle_time_2pct_s,
        speed_rms_err,
        emf_rms_err_pct,
        bj_final_err_pct,
        tl_final_err_pct,
        torque_ripple_pp,
        partial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::Schedule;
    use approx::assert_abs_diff_eq;

    const DT: f64 = 20e-6;

    fn cfg(t_end: f64, rpm: f64) -> SimConfig {
        SimConfig {
            t_end,
            omega_ref_profile: Schedule::constant(rpm),
            tl_profile: Schedule::constant(0.0),
            ..SimConfig::default()
        }
    }

    fn synth(t_end: f64, w: impl Fn(f64) -> f64, w_ref: f64) -> Vec<TraceRecord> {
        let p = crate::plant::MotorParams::default();
        let n = (t_end / DT).round() as usize;
        (0..n)
            .map(|k| {
                let t = k as f64 * DT;
                TraceRecord {
                    t,
                    omega_r: w(t),
                    omega_hat: w(t),
                    omega_ref: w_ref,
                    b_hat: p.b,
                    j_hat: p.j,
                    ..TraceRecord::default()
                }
            })
            .collect()
    }

    #[test]
    fn constant_speed_trace() {
        let w = 1500.0 * RPM_TO_RAD_S;
        let tr = synth(0.5, |_| w, w);
        let m = compute_metrics(&tr, &cfg(0.5, 1500.0)).unwrap();
        assert_eq!(m.overshoot_pct, 0.0);
        assert_eq!(m.settle_time_2pct_s, 0.0);
        assert_eq!(m.rise_time_s, 0.0);
        assert_eq!(m.speed_rms_err, 0.0);
        assert_eq!(m.bj_final_err_pct, 0.0);
        assert!(!m.partial);
    }

    #[test]
    fn first_order_rise_time() {
        let w = 1500.0 * RPM_TO_RAD_S;
        let tau = 0.05;
        let tr = synth(1.0, |t| w * (1.0 - (-t / tau).exp()), w);
        let m = compute_metrics(&tr, &cfg(1.0, 1500.0)).unwrap();
        assert_abs_diff_eq!(m.rise_time_s, 2.197 * tau, epsilon = 1e-3 * tau);
        assert_eq!(m.overshoot_pct, 0.0);
        // ±2 % band reached at τ·ln 50
        assert_abs_diff_eq!(m.settle_time_2pct_s, tau * 50f64.ln(), epsilon = 2.0 * DT);
        assert!(!m.partial);
    }

    #[test]
    fn known_overshoot() {
        let w = 1500.0 * RPM_TO_RAD_S;
        // second-order underdamped response with 5 % overshoot
        let zeta = -(0.05f64.ln()) / (std::f64::consts::PI.powi(2) + 0.05f64.ln().powi(2)).sqrt();
        let wn = 60.0;
        let wd = wn * (1.0 - zeta * zeta).sqrt();
        let phi = (zeta / (1.0 - zeta * zeta).sqrt()).atan();
        let y = move |t: f64| {
            w * (1.0 - (-zeta * wn * t).exp() * (wd * t).cos() - (-zeta * wn * t).exp() * phi.tan() * (wd * t).sin())
        };
        let tr = synth(1.0, y, w);
        let m = compute_metrics(&tr, &cfg(1.0, 1500.0)).unwrap();
        assert_abs_diff_eq!(m.overshoot_pct, 5.0, epsilon = 0.1);
    }

    #[test]
    fn step_window_follows_profiles() {
        let mut c = cfg(1.0, 0.0);
        c.omega_ref_profile = Schedule(vec![[0.0, 1000.0], [0.4, 1500.0]]);
        c.tl_profile = Schedule(vec![[0.0, 0.0], [0.3, 1.0], [0.7, 3.0]]);
        assert_eq!(step_time(&c), 0.4);
        assert_eq!(window_end(&c, 0.4), 0.7);
        let lo = 1000.0 * RPM_TO_RAD_S;
        let hi = 1500.0 * RPM_TO_RAD_S;
        // overshoot after the load step must not count
        let tr = synth(
            1.0,
            |t| {
                if t < 0.4 {
                    lo
                } else if t < 0.7 {
                    hi
                } else {
                    1.2 * hi
                }
            },
            hi,
        );
        let m = compute_metrics(&tr, &c).unwrap();
        assert_eq!(m.overshoot_pct, 0.0);
        assert_abs_diff_eq!(m.rise_time_s, 0.0, epsilon = DT);
    }

    #[test]
    fn short_trace_is_partial() {
        let w = 1500.0 * RPM_TO_RAD_S;
        let tr = synth(0.1, |t| w * (1.0 - (-t / 0.5).exp()), w);
        let m = compute_metrics(&tr, &cfg(1.0, 1500.0)).unwrap();
        assert!(m.partial);
        assert!(compute_metrics(&[], &cfg(1.0, 1500.0)).is_err());
    }

    #[test]
    fn identification_errors() {
        let w = 157.0;
        let mut tr = synth(0.2, |_| w, w);
        let last = tr.last_mut().unwrap();
        last.b_hat = 0.0022;
        last.j_hat = 0.0038;
        last.tl_hat = 0.5;
        let m = compute_metrics(&tr, &cfg(0.2, 1500.0)).unwrap();
        assert_abs_diff_eq!(m.bj_final_err_pct, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.tl_final_err_pct, 50.0, epsilon = 1e-9);
    }
}
