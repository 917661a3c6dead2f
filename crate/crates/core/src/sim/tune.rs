//! Stochastic search for sliding-mode observer gains.
//!
//! A (μ+λ) elitist evolution strategy in log-gain space. Each candidate is
//! scored on a short oracle-mode run (the controllers see true signals, so
//! the plant trajectory does not depend on the observer gains) by the
//! integral of squared back-EMF error plus 0.1× that of the current
//! estimate. Candidates failing [`check_gain_stability`] are never
//! simulated. Evaluations of one generation run in parallel; results are
//! merged by candidate index, so the outcome depends only on the seed.

use super::config::{SensorMode, SimConfig};
use super::engine::Engine;
use super::SimError;
use crate::smo::{check_gain_stability, SmoGains};
use crate::waveform::clarke;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Weight of the current-error term in the objective.
pub const CURRENT_WEIGHT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneResult {
    pub gains: SmoGains,
    pub objective: f64,
    /// Objective of the gains the search started from.
    pub initial_objective: f64,
    pub evaluations: usize,
}

fn gains_vec(g: &SmoGains) -> [f64; 4] {
    [g.ks1, g.ks2, g.ks3, g.ks4]
}

fn with_gains(base: &SmoGains, v: [f64; 4]) -> SmoGains {
    SmoGains {
        ks1: v[0],
        ks2: v[1],
        ks3: v[2],
        ks4: v[3],
        delta: base.delta,
    }
}

/// Tuning objective of `gains` on the configured scenario truncated to
/// `tune.horizon` and run with oracle feedback.
pub fn smo_objective(cfg: &SimConfig, gains: &SmoGains) -> Result<f64, SimError> {
    let mut c = cfg.clone();
    c.smo = *gains;
    c.sensor_mode = SensorMode::Oracle;
    c.t_end = cfg.tune.horizon;
    let dt = c.dt_ctrl;
    let mut eng = Engine::new(&c)?;
    let mut ise = 0.0;
    while !eng.is_done() {
        // estimates after this step refer to the start of the next period
        eng.step()?;
        let e_true = clarke(eng.plant().backemfs(&c.motor));
        let e_hat = eng.smo().emf();
        let i_hat = eng.smo().current();
        let i_meas = eng.measured_current();
        let de = (e_hat.d - e_true.d).powi(2) + (e_hat.q - e_true.q).powi(2);
        let di = (i_hat.d - i_meas.d).powi(2) + (i_hat.q - i_meas.q).powi(2);
        ise += (de + CURRENT_WEIGHT * di) * dt;
    }
    Ok(ise)
}

/// How far a candidate is from feasibility (0 when feasible).
fn violation(g: &SmoGains, cfg: &SimConfig) -> f64 {
    let p = &cfg.motor;
    let min_ks = p.ke * cfg.rated_speed() / p.l;
    let max_ks = 2.0 * g.delta / cfg.dt_ctrl;
    let mut v = 0.0;
    for ks in [g.ks1, g.ks2] {
        v += ((min_ks - ks) / min_ks).max(0.0) + ((ks - max_ks) / max_ks).max(0.0);
    }
    for ks in [g.ks3, g.ks4] {
        if ks <= 0.0 {
            v += 1.0;
        }
    }
    v
}

fn feasible(g: &SmoGains, cfg: &SimConfig) -> bool {
    check_gain_stability(g, &cfg.motor, cfg.rated_speed(), cfg.dt_ctrl)
}

/// Worker count from `SIM_THREADS`, defaulting to the available cores.
pub fn thread_count() -> usize {
    std::env::var("SIM_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|n| *n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    index: usize,
    gains: SmoGains,
    objective: f64,
}

/// Searches for observer gains within `cfg.tune` bounds, starting from
/// `cfg.smo`, using at most `budget` evaluations.
pub fn tune_smo_gains(cfg: &SimConfig, budget: usize, seed: u64) -> Result<TuneResult, SimError> {
    cfg.validate()?;
    let t = &cfg.tune;
    let lower = with_gains(&cfg.smo, t.lower);
    if !feasible(&lower, cfg) {
        return Err(SimError::Config(
            "tune.lower does not satisfy the observer gain conditions".into(),
        ));
    }
    if budget == 0 {
        return Err(SimError::Config("tuning budget must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| SimError::Config(format!("thread pool: {e}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_lo = t.lower.map(f64::ln);
    let log_hi = t.upper.map(f64::ln);
    let sigma: Vec<f64> = (0..4).map(|k| 0.25 * (log_hi[k] - log_lo[k]).max(1e-3)).collect();

    let mut elites: Vec<Scored> = Vec::new();
    let mut best_infeasible: Option<(f64, SmoGains)> = None;
    let mut initial_objective = f64::INFINITY;
    let mut next_index = 0usize;

    while next_index < budget {
        // propose a generation; candidate 0 is always the starting gains
        let n = if next_index == 0 {
            1
        } else {
            t.population.min(budget - next_index)
        };
        let mut batch = Vec::with_capacity(n);
        for _ in 0..n {
            let g = if next_index == 0 {
                cfg.smo
            } else if elites.is_empty() {
                let v = std::array::from_fn(|k| rng.gen_range(log_lo[k]..=log_hi[k]).exp());
                with_gains(&cfg.smo, v)
            } else {
                let parent = elites[rng.gen_range(0..elites.len())].gains;
                let pv = gains_vec(&parent);
                let v = std::array::from_fn(|k| {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    (pv[k].ln() + sigma[k] * z).clamp(log_lo[k], log_hi[k]).exp()
                });
                with_gains(&cfg.smo, v)
            };
            batch.push((next_index, g));
            next_index += 1;
        }

        let results: Vec<(usize, SmoGains, Option<f64>)> = pool.install(|| {
            batch
                .par_iter()
                .map(|(idx, g)| {
                    if !feasible(g, cfg) {
                        return (*idx, *g, None);
                    }
                    let obj = smo_objective(cfg, g).unwrap_or(f64::INFINITY);
                    let obj = if obj.is_finite() { obj } else { f64::INFINITY };
                    (*idx, *g, Some(obj))
                })
                .collect()
        });

        for (idx, g, obj) in results {
            match obj {
                Some(o) => {
                    if idx == 0 {
                        initial_objective = o;
                    }
                    elites.push(Scored {
                        index: idx,
                        gains: g,
                        objective: o,
                    });
                }
                None => {
                    let v = violation(&g, cfg);
                    if best_infeasible.map(|(bv, _)| v < bv).unwrap_or(true) {
                        best_infeasible = Some((v, g));
                    }
                }
            }
        }
        elites.sort_by(|a, b| a.objective.total_cmp(&b.objective).then(a.index.cmp(&b.index)));
        elites.truncate(t.parents);
    }

    match elites.first() {
        Some(best) => Ok(TuneResult {
            gains: best.gains,
            objective: best.objective,
            initial_objective,
            evaluations: next_index,
        }),
        None => {
            let g = best_infeasible.map(|(_, g)| g).unwrap_or(cfg.smo);
            Err(SimError::NoFeasible(Box::new(g)))
        }
    }
}
