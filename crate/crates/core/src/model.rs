//! Loads, scenarios and trajectories.
//!
//! Energies are cumulative: `e[k] = dt * sum(p[0..=k])` with an implicit
//! `e[-1] = 0`, so a load's first step is bounded by `dt * p_min ..= dt * p_max`
//! like every other step.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance (kWh) used for every feasibility comparison.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("load {id}: invalid power ratings p_min={p_min}, p_max={p_max}")]
    Ratings { id: LoadId, p_min: f64, p_max: f64 },
    #[error("load {id}: energy bounds cross at k={k} (e_min={e_min}, e_max={e_max})")]
    Bounds {
        id: LoadId,
        k: usize,
        e_min: f64,
        e_max: f64,
    },
    #[error("load {id}: infeasible after bound tightening at k={k}")]
    InfeasibleLoad { id: LoadId, k: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("inconsistent shape: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LoadId(pub u32);

impl fmt::Display for LoadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One flexible device with constant power ratings and per-step cumulative
/// energy bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: LoadId,
    #[serde(rename = "p_min_kw")]
    pub p_min: f64,
    #[serde(rename = "p_max_kw")]
    pub p_max: f64,
    #[serde(rename = "e_min_kwh")]
    pub e_min: Vec<f64>,
    #[serde(rename = "e_max_kwh")]
    pub e_max: Vec<f64>,
}

impl Load {
    pub fn new(id: u32, p_min: f64, p_max: f64, e_min: Vec<f64>, e_max: Vec<f64>) -> Self {
        Self {
            id: LoadId(id),
            p_min,
            p_max,
            e_min,
            e_max,
        }
    }

    pub fn horizon(&self) -> usize {
        self.e_max.len()
    }

    /// Checks ratings and bound ordering. Returns the load unchanged.
    pub fn validate(self, dt: f64) -> Result<Self, ModelError> {
        validate_load(&self, dt)?;
        Ok(self)
    }

    /// True when `traj` satisfies every power and energy constraint within `tol`.
    pub fn admits(&self, traj: &[f64], dt: f64, tol: f64) -> bool {
        self.max_violation(traj, dt) <= tol
    }

    /// Largest constraint violation (kWh) of a cumulative-energy trajectory.
    pub fn max_violation(&self, traj: &[f64], dt: f64) -> f64 {
        let mut worst = 0.0_f64;
        let mut prev = 0.0;
        for (k, &e) in traj.iter().enumerate() {
            let step = e - prev;
            worst = worst
                .max(self.e_min[k] - e)
                .max(e - self.e_max[k])
                .max(dt * self.p_min - step)
                .max(step - dt * self.p_max);
            prev = e;
        }
        worst
    }
}

/// Validates ratings and bounds of one load.
pub fn validate_load(load: &Load, dt: f64) -> Result<(), ModelError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(ModelError::Config(format!("time step must be positive, got {dt}")));
    }
    let finite = load.p_min.is_finite() && load.p_max.is_finite();
    if !finite || load.p_min < 0.0 || load.p_min > load.p_max {
        return Err(ModelError::Ratings {
            id: load.id,
            p_min: load.p_min,
            p_max: load.p_max,
        });
    }
    if load.e_min.len() != load.e_max.len() || load.e_max.is_empty() {
        return Err(ModelError::Shape(format!(
            "load {}: e_min has {} entries, e_max has {}",
            load.id,
            load.e_min.len(),
            load.e_max.len()
        )));
    }
    for (k, (&lo, &hi)) in load.e_min.iter().zip(&load.e_max).enumerate() {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(ModelError::Bounds {
                id: load.id,
                k,
                e_min: lo,
                e_max: hi,
            });
        }
    }
    Ok(())
}

/// Removes bound slack that the power ratings make unreachable.
///
/// Forward pass propagates reachability from `e[-1] = 0`, backward pass
/// propagates the requirements of later steps. The set of admissible
/// trajectories is unchanged and the operation is idempotent.
pub fn tighten_bounds(load: &Load, dt: f64) -> Result<Load, ModelError> {
    validate_load(load, dt)?;
    let t = load.horizon();
    let up = dt * load.p_max;
    let down = dt * load.p_min;
    let mut e_min = load.e_min.clone();
    let mut e_max = load.e_max.clone();

    let (mut prev_lo, mut prev_hi) = (0.0, 0.0);
    for k in 0..t {
        e_max[k] = e_max[k].min(prev_hi + up);
        e_min[k] = e_min[k].max(prev_lo + down);
        prev_lo = e_min[k];
        prev_hi = e_max[k];
    }
    for k in (0..t.saturating_sub(1)).rev() {
        e_max[k] = e_max[k].min(e_max[k + 1] - down);
        e_min[k] = e_min[k].max(e_min[k + 1] - up);
    }
    for k in 0..t {
        if e_min[k] > e_max[k] {
            if e_min[k] - e_max[k] > FEAS_TOL {
                return Err(ModelError::InfeasibleLoad { id: load.id, k });
            }
            // rounding-level crossing
            let mid = 0.5 * (e_min[k] + e_max[k]);
            e_min[k] = mid;
            e_max[k] = mid;
        }
    }
    Ok(Load {
        e_min,
        e_max,
        ..load.clone()
    })
}

/// A group of loads sharing a horizon, with the price and inflexible demand
/// profiles of the use cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(rename = "dt_hours")]
    pub dt: f64,
    pub horizon: usize,
    pub seed: u64,
    pub prices: Vec<f64>,
    #[serde(rename = "inflexible_kw")]
    pub inflexible: Vec<f64>,
    pub loads: Vec<Load>,
}

impl Scenario {
    /// Builds a scenario with flat unit prices and no inflexible demand.
    pub fn from_loads(loads: Vec<Load>, dt: f64) -> Result<Self, ModelError> {
        let horizon = loads.first().map(Load::horizon).unwrap_or(0);
        let scenario = Self {
            dt,
            horizon,
            seed: 0,
            prices: vec![1.0; horizon],
            inflexible: vec![0.0; horizon],
            loads,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn n_loads(&self) -> usize {
        self.loads.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.horizon == 0 {
            return Err(ModelError::Config("horizon must be at least one step".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(ModelError::Config(format!("time step must be positive, got {}", self.dt)));
        }
        if self.prices.len() != self.horizon || self.inflexible.len() != self.horizon {
            return Err(ModelError::Shape(format!(
                "profiles must have {} entries (prices: {}, inflexible: {})",
                self.horizon,
                self.prices.len(),
                self.inflexible.len()
            )));
        }
        for load in &self.loads {
            if load.horizon() != self.horizon || load.e_min.len() != self.horizon {
                return Err(ModelError::Shape(format!(
                    "load {} has horizon {}, scenario has {}",
                    load.id,
                    load.horizon(),
                    self.horizon
                )));
            }
            validate_load(load, self.dt)?;
        }
        Ok(())
    }

    /// Validates and returns a copy with every load's bounds tightened.
    pub fn tightened(&self) -> Result<Self, ModelError> {
        self.validate()?;
        let loads = self
            .loads
            .iter()
            .map(|l| tighten_bounds(l, self.dt))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            loads,
            ..self.clone()
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let scenario: Self =
            serde_json::from_str(text).map_err(|e| ModelError::Config(format!("scenario JSON: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Per-load trajectory admissibility (within `FEAS_TOL`).
    pub fn admits(&self, individual: &LoadTrajectory) -> bool {
        individual.rows.len() == self.loads.len()
            && self
                .loads
                .iter()
                .zip(&individual.rows)
                .all(|(l, row)| l.admits(row, self.dt, FEAS_TOL))
    }
}

/// Aggregated cumulative energies, one per timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AggTrajectory(pub Vec<f64>);

impl AggTrajectory {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Per-step aggregate power (kW).
    pub fn powers(&self, dt: f64) -> Vec<f64> {
        let mut prev = 0.0;
        self.0
            .iter()
            .map(|&e| {
                let p = (e - prev) / dt;
                prev = e;
                p
            })
            .collect()
    }
}

impl From<Vec<f64>> for AggTrajectory {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Cumulative energies of each load (rows follow the scenario's load order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadTrajectory {
    pub rows: Vec<Vec<f64>>,
}

impl LoadTrajectory {
    pub fn aggregate(&self) -> AggTrajectory {
        let t = self.rows.first().map(Vec::len).unwrap_or(0);
        let mut sum = vec![0.0; t];
        for row in &self.rows {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
        }
        AggTrajectory(sum)
    }
}

/// Sampling ranges of the synthetic fleet. Defaults are the residential
/// battery ranges of the case study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_loads: usize,
    pub horizon: usize,
    pub dt: f64,
    pub seed: u64,
    pub p_max_range: (f64, f64),
    pub capacity_range: (f64, f64),
    pub final_energy_range: (f64, f64),
}

impl GeneratorConfig {
    pub fn new(n_loads: usize, horizon: usize, dt: f64, seed: u64) -> Self {
        Self {
            n_loads,
            horizon,
            dt,
            seed,
            ..Self::default()
        }
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_loads: 10,
            horizon: 96,
            dt: 0.25,
            seed: 0,
            p_max_range: (4.0, 6.0),
            capacity_range: (10.5, 13.5),
            final_energy_range: (0.0, 10.5),
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<(), ModelError> {
    if !(lo.is_finite() && hi.is_finite()) || lo > hi || lo < 0.0 {
        return Err(ModelError::Config(format!("{name} range [{lo}, {hi}] is empty or invalid")));
    }
    Ok(())
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Deterministic synthetic fleet of batteries that must reach a final energy.
pub fn generate_scenario(config: &GeneratorConfig) -> Result<Scenario, ModelError> {
    if config.n_loads == 0 {
        return Err(ModelError::Config("n_loads must be positive".into()));
    }
    if config.horizon == 0 {
        return Err(ModelError::Config("horizon must be positive".into()));
    }
    if !(config.dt > 0.0) || !config.dt.is_finite() {
        return Err(ModelError::Config(format!("dt must be positive, got {}", config.dt)));
    }
    check_range("p_max", config.p_max_range)?;
    check_range("capacity", config.capacity_range)?;
    check_range("final energy", config.final_energy_range)?;

    let t = config.horizon;
    let dt = config.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut loads = Vec::with_capacity(config.n_loads);
    for i in 0..config.n_loads {
        let p_max = sample(&mut rng, config.p_max_range);
        let capacity = sample(&mut rng, config.capacity_range);
        let wanted = sample(&mut rng, config.final_energy_range);
        // the requirement must stay below capacity and be reachable at full power
        let final_energy = wanted.min(capacity).min(t as f64 * dt * p_max);
        let e_max = (0..t).map(|k| capacity.min((k + 1) as f64 * dt * p_max)).collect();
        let mut e_min = vec![0.0; t];
        e_min[t - 1] = final_energy;
        let load = Load::new(i as u32, 0.0, p_max, e_min, e_max);
        loads.push(tighten_bounds(&load, dt)?);
    }
    let scenario = Scenario {
        dt,
        horizon: t,
        seed: config.seed,
        prices: price_profile(t, dt),
        inflexible: inflexible_profile(t, dt, config.n_loads),
        loads,
    };
    scenario.validate()?;
    Ok(scenario)
}

fn hour_of_step(k: usize, dt: f64) -> f64 {
    ((k as f64 + 0.5) * dt).rem_euclid(24.0)
}

fn periodic_bump(hour: f64, center: f64, width: f64) -> f64 {
    let mut d = (hour - center).abs();
    d = d.min(24.0 - d);
    (-(d * d) / (2.0 * width * width)).exp()
}

fn raw_price(hour: f64) -> f64 {
    0.2 + 0.6 * periodic_bump(hour, 8.0, 1.5) + periodic_bump(hour, 19.0, 2.0)
}

/// Daily price curve (currency/kWh) with a morning and an evening peak,
/// mapped onto [0.1, 0.4]. The horizon starts at midnight.
pub fn price_profile(horizon: usize, dt: f64) -> Vec<f64> {
    let (lo, hi) = (0..1440)
        .map(|m| raw_price(m as f64 / 60.0))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    (0..horizon)
        .map(|k| {
            let v = raw_price(hour_of_step(k, dt));
            0.1 + 0.3 * ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        })
        .collect()
}

/// Household base demand of 0.3 kW with an evening peak at 19:00, times the
/// number of households.
pub fn inflexible_profile(horizon: usize, dt: f64, households: usize) -> Vec<f64> {
    (0..horizon)
        .map(|k| {
            let h = hour_of_step(k, dt);
            // a small sinusoidal ripple keeps the night demand from being perfectly flat
            let ripple = 0.02 * (2.0 * PI * h / 24.0).sin();
            households as f64 * (0.3 + ripple + 0.9 * periodic_bump(h, 19.0, 1.5))
        })
        .collect()
}
