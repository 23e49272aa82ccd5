//! Energy-cost and peak-power minimization over four descriptions of the
//! aggregate flexibility, and the benchmark sweep comparing them.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx_bench::{homothet_approx, zonotope_approx, ApproxError, HalfspaceSet, ZonotopeApprox};
use crate::envelope::{build_envelope, linearize, EnvelopeError, Linearization};
use crate::lp::{DenseSimplex, LpError, LpProblem, LpSolver, LpStatus, Relation};
use crate::model::{generate_scenario, AggTrajectory, GeneratorConfig, Load, ModelError, Scenario};

/// Slope grid used when the caller does not pick one.
pub const DEFAULT_SLOPE_GRID: usize = 51;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Solver(#[from] LpError),
    #[error("{model} region is empty")]
    Infeasible { model: ModelKind },
    #[error("{model} problem is unbounded")]
    Unbounded { model: ModelKind },
    #[error("unknown {what} '{value}'")]
    Parse { what: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Unaggregated,
    WcEnvelopeLinear,
    Homothet,
    Zonotope,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Unaggregated,
        ModelKind::WcEnvelopeLinear,
        ModelKind::Homothet,
        ModelKind::Zonotope,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Unaggregated => "unaggregated",
            ModelKind::WcEnvelopeLinear => "wc_envelope_linear",
            ModelKind::Homothet => "homothet",
            ModelKind::Zonotope => "zonotope",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = OptimizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| OptimizeError::Parse {
                what: "model",
                value: s.into(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Cost,
    Peak,
}

impl Objective {
    pub const ALL: [Objective; 2] = [Objective::Cost, Objective::Peak];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Cost => "cost",
            Objective::Peak => "peak",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = OptimizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| OptimizeError::Parse {
                what: "objective",
                value: s.into(),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UseCaseResult {
    pub model: ModelKind,
    pub objective: Objective,
    /// Currency for cost, kW for peak.
    pub value: f64,
    pub agg_trajectory: AggTrajectory,
    pub build_time: Duration,
    pub solve_time: Duration,
}

/// Constraint description of one model, ready to be optimized.
#[derive(Debug, Clone)]
pub enum PreparedModel {
    Unaggregated(Scenario),
    WcEnvelopeLinear(Linearization),
    Homothet(HalfspaceSet),
    Zonotope(ZonotopeApprox),
}

impl PreparedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            PreparedModel::Unaggregated(_) => ModelKind::Unaggregated,
            PreparedModel::WcEnvelopeLinear(_) => ModelKind::WcEnvelopeLinear,
            PreparedModel::Homothet(_) => ModelKind::Homothet,
            PreparedModel::Zonotope(_) => ModelKind::Zonotope,
        }
    }
}

/// Builds the constraint description of `model` for `scenario`.
pub fn prepare(
    scenario: &Scenario,
    model: ModelKind,
    slope_grid: usize,
    solver: &dyn LpSolver,
) -> Result<PreparedModel, OptimizeError> {
    Ok(match model {
        ModelKind::Unaggregated => PreparedModel::Unaggregated(scenario.tightened()?),
        ModelKind::WcEnvelopeLinear => {
            let env = linearize(&build_envelope(scenario)?, slope_grid)?;
            PreparedModel::WcEnvelopeLinear(env.linearized.expect("linearize fills the linear bounds"))
        }
        ModelKind::Homothet => PreparedModel::Homothet(homothet_approx(scenario, solver)?.aggregate),
        ModelKind::Zonotope => PreparedModel::Zonotope(zonotope_approx(scenario, solver)?.aggregate),
    })
}

/// Affine expression `sum coeff * x[var] + constant`.
#[derive(Debug, Clone, Default)]
struct Affine {
    terms: Vec<(usize, f64)>,
    constant: f64,
}

/// Aggregate increments `e_k - e_{k-1}` as affine expressions of LP
/// variables, added to `lp` by each model.
fn model_increments(lp: &mut LpProblem, model: &PreparedModel, horizon: usize) -> Vec<Affine> {
    let t = horizon;
    let energy_increments = |e: &[usize]| -> Vec<Affine> {
        (0..t)
            .map(|k| {
                let mut terms = vec![(e[k], 1.0)];
                if k > 0 {
                    terms.push((e[k - 1], -1.0));
                }
                Affine { terms, constant: 0.0 }
            })
            .collect()
    };
    match model {
        PreparedModel::WcEnvelopeLinear(lin) => {
            let mut e = vec![lp.add_var(0.0, lin.init_interval.lo, lin.init_interval.hi)];
            for step in &lin.steps {
                let v = lp.add_var(0.0, step.interval.lo, step.interval.hi);
                let prev = e[step.k - 1];
                lp.add_constraint(vec![(v, 1.0), (prev, -step.upper.slope)], Relation::Le, step.upper.intercept);
                lp.add_constraint(vec![(v, 1.0), (prev, -step.lower.slope)], Relation::Ge, step.lower.intercept);
                e.push(v);
            }
            energy_increments(&e)
        }
        PreparedModel::Homothet(set) => {
            let e: Vec<usize> = (0..t).map(|_| lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY)).collect();
            for (a, b) in &set.rows {
                let coeffs = a.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, &v)| (e[k], v)).collect();
                lp.add_constraint(coeffs, Relation::Le, *b);
            }
            energy_increments(&e)
        }
        PreparedModel::Zonotope(z) => {
            let alpha: Vec<usize> = z.generators.iter().map(|_| lp.add_var(0.0, -1.0, 1.0)).collect();
            let level = |k: usize| -> Affine {
                let terms = z
                    .generators
                    .iter()
                    .zip(&z.scales)
                    .zip(&alpha)
                    .filter(|((g, &s), _)| g[k] != 0.0 && s != 0.0)
                    .map(|((g, &s), &a)| (a, s * g[k]))
                    .collect();
                Affine {
                    terms,
                    constant: z.center[k],
                }
            };
            (0..t)
                .map(|k| {
                    let mut cur = level(k);
                    if k > 0 {
                        let prev = level(k - 1);
                        cur.terms.extend(prev.terms.into_iter().map(|(j, c)| (j, -c)));
                        cur.constant -= prev.constant;
                    }
                    cur
                })
                .collect()
        }
        PreparedModel::Unaggregated(s) => {
            let mut inc = vec![Affine::default(); t];
            for load in &s.loads {
                let p = add_power_load(lp, load, s.dt);
                for (k, &v) in p.iter().enumerate() {
                    inc[k].terms.push((v, s.dt));
                }
            }
            inc
        }
    }
}

/// Power variables of one tightened load with the cumulative-energy rows that
/// the power ratings and later rows do not already imply.
fn add_power_load(lp: &mut LpProblem, load: &Load, dt: f64) -> Vec<usize> {
    let t = load.horizon();
    let p: Vec<usize> = (0..t).map(|_| lp.add_var(0.0, load.p_min, load.p_max)).collect();
    let prefix = |k: usize| -> Vec<(usize, f64)> { p[..=k].iter().map(|&v| (v, dt)).collect() };
    let mut kept_max: Option<usize> = None;
    let mut kept_min: Option<usize> = None;
    for k in (0..t).rev() {
        let tau = (k + 1) as f64 * dt;
        let cap = load.e_max[k];
        let implied_max = cap >= tau * load.p_max
            || kept_max.is_some_and(|j| cap >= load.e_max[j] - (j - k) as f64 * dt * load.p_min);
        if !implied_max {
            lp.add_constraint(prefix(k), Relation::Le, cap);
            kept_max = Some(k);
        }
        let floor = load.e_min[k];
        let implied_min = floor <= tau * load.p_min
            || kept_min.is_some_and(|j| floor <= load.e_min[j] - (j - k) as f64 * dt * load.p_max);
        if !implied_min {
            lp.add_constraint(prefix(k), Relation::Ge, floor);
            kept_min = Some(k);
        }
    }
    p
}

fn add_objective(lp: &mut LpProblem, inc: &[Affine], scenario: &Scenario, objective: Objective) -> f64 {
    let dt = scenario.dt;
    match objective {
        Objective::Cost => {
            let mut constant = 0.0;
            for (k, a) in inc.iter().enumerate() {
                let price = scenario.prices[k];
                for &(j, c) in &a.terms {
                    lp.objective[j] += price * c;
                }
                constant += price * (a.constant + dt * scenario.inflexible[k]);
            }
            constant
        }
        Objective::Peak => {
            let z = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
            for (k, a) in inc.iter().enumerate() {
                let mut coeffs: Vec<(usize, f64)> = a.terms.iter().map(|&(j, c)| (j, c / dt)).collect();
                coeffs.push((z, -1.0));
                lp.add_constraint(coeffs, Relation::Le, -a.constant / dt - scenario.inflexible[k]);
            }
            0.0
        }
    }
}

fn eval_trajectory(inc: &[Affine], x: &[f64]) -> AggTrajectory {
    let mut acc = 0.0;
    AggTrajectory(
        inc.iter()
            .map(|a| {
                acc += a.constant + a.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>();
                acc
            })
            .collect(),
    )
}

/// Single-load cost problem; loads are independent under a linear price.
fn load_cost_lp(load: &Load, scenario: &Scenario, solver: &dyn LpSolver) -> Result<(f64, Vec<f64>), OptimizeError> {
    let mut lp = LpProblem::new(0);
    let p = add_power_load(&mut lp, load, scenario.dt);
    for (k, &v) in p.iter().enumerate() {
        lp.objective[v] = scenario.prices[k] * scenario.dt;
    }
    let sol = solver.solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok((sol.objective_value, p.iter().map(|&v| sol.x[v] * scenario.dt).collect())),
        LpStatus::Infeasible => Err(OptimizeError::Infeasible {
            model: ModelKind::Unaggregated,
        }),
        LpStatus::Unbounded => Err(OptimizeError::Unbounded {
            model: ModelKind::Unaggregated,
        }),
    }
}

/// Optimizes `objective` over an already prepared model.
pub fn solve_prepared(
    scenario: &Scenario,
    model: &PreparedModel,
    objective: Objective,
    solver: &dyn LpSolver,
) -> Result<(f64, AggTrajectory), OptimizeError> {
    let kind = model.kind();
    if let (PreparedModel::Unaggregated(s), Objective::Cost) = (model, objective) {
        let mut total: f64 = (0..s.horizon).map(|k| s.prices[k] * s.dt * s.inflexible[k]).sum();
        let mut inc = vec![0.0; s.horizon];
        for load in &s.loads {
            let (v, de) = load_cost_lp(load, s, solver)?;
            total += v;
            for (a, b) in inc.iter_mut().zip(de) {
                *a += b;
            }
        }
        let mut acc = 0.0;
        let traj = inc
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect();
        return Ok((total, AggTrajectory(traj)));
    }
    let mut lp = LpProblem::new(0);
    let inc = model_increments(&mut lp, model, scenario.horizon);
    let constant = add_objective(&mut lp, &inc, scenario, objective);
    let sol = solver.solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok((sol.objective_value + constant, eval_trajectory(&inc, &sol.x))),
        LpStatus::Infeasible => Err(OptimizeError::Infeasible { model: kind }),
        LpStatus::Unbounded => Err(OptimizeError::Unbounded { model: kind }),
    }
}

fn run_use_case(
    scenario: &Scenario,
    model: ModelKind,
    objective: Objective,
    solver: &dyn LpSolver,
) -> Result<UseCaseResult, OptimizeError> {
    let start = Instant::now();
    let prepared = prepare(scenario, model, DEFAULT_SLOPE_GRID, solver)?;
    let build_time = start.elapsed();
    let start = Instant::now();
    let (value, agg_trajectory) = solve_prepared(scenario, &prepared, objective, solver)?;
    Ok(UseCaseResult {
        model,
        objective,
        value,
        agg_trajectory,
        build_time,
        solve_time: start.elapsed(),
    })
}

/// Minimizes `sum_k price_k * (e_k - e_{k-1} + dt * inflexible_k)`.
pub fn minimize_cost(scenario: &Scenario, model: ModelKind, solver: &dyn LpSolver) -> Result<UseCaseResult, OptimizeError> {
    run_use_case(scenario, model, Objective::Cost, solver)
}

/// Minimizes the largest total power `(e_k - e_{k-1}) / dt + inflexible_k`.
pub fn minimize_peak(scenario: &Scenario, model: ModelKind, solver: &dyn LpSolver) -> Result<UseCaseResult, OptimizeError> {
    run_use_case(scenario, model, Objective::Peak, solver)
}

fn default_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_objectives() -> Vec<Objective> {
    Objective::ALL.to_vec()
}

fn default_dt() -> f64 {
    0.25
}

fn default_budget() -> f64 {
    900.0
}

fn default_grid() -> usize {
    DEFAULT_SLOPE_GRID
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub n_loads: Vec<usize>,
    pub horizons: Vec<usize>,
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_budget")]
    pub budget_seconds: f64,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default = "default_objectives")]
    pub objectives: Vec<Objective>,
    #[serde(default = "default_grid")]
    pub slope_grid: usize,
}

/// One benchmark cell, in the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub model: ModelKind,
    pub objective: Objective,
    pub n_loads: usize,
    pub horizon: usize,
    pub seed: u64,
    pub value: Option<f64>,
    pub increase_pct: Option<f64>,
    pub build_s: f64,
    pub solve_s: f64,
    pub discarded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummaryRow {
    pub model: ModelKind,
    pub objective: Objective,
    pub n_loads: usize,
    pub horizon: usize,
    pub runs: usize,
    pub discarded: usize,
    pub median_increase_pct: Option<f64>,
    pub median_total_s: Option<f64>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn is_budget_error(e: &OptimizeError) -> bool {
    matches!(
        e,
        OptimizeError::Solver(LpError::TimeLimit(_)) | OptimizeError::Solver(LpError::TooLarge { .. })
    ) || matches!(e, OptimizeError::Approx(ApproxError::Solver(LpError::TimeLimit(_))))
}

/// Runs every model and objective on one generated scenario.
fn bench_scenario(config: &BenchConfig, n: usize, t: usize, seed: u64, skip: &[ModelKind]) -> Vec<BenchRow> {
    let budget = Duration::from_secs_f64(config.budget_seconds);
    let row = |model, objective, value, build_s, solve_s, discarded| BenchRow {
        model,
        objective,
        n_loads: n,
        horizon: t,
        seed,
        value,
        increase_pct: None,
        build_s,
        solve_s,
        discarded,
    };
    let mut rows = Vec::new();
    let scenario = match generate_scenario(&GeneratorConfig::new(n, t, config.dt, seed)) {
        Ok(s) => s,
        Err(e) => {
            warn!("scenario N={n} T={t} seed={seed}: {e}");
            return rows;
        }
    };
    for &model in &config.models {
        if skip.contains(&model) {
            for &o in &config.objectives {
                rows.push(row(model, o, None, 0.0, 0.0, true));
            }
            continue;
        }
        let start = Instant::now();
        let build_solver = DenseSimplex::with_time_limit(budget);
        let prepared = prepare(&scenario, model, config.slope_grid, &build_solver);
        let build = start.elapsed();
        let prepared = match prepared {
            Ok(p) if build <= budget => p,
            other => {
                if let Err(e) = &other {
                    warn!("{model} N={n} T={t} seed={seed}: build failed: {e}");
                }
                for &o in &config.objectives {
                    rows.push(row(model, o, None, build.as_secs_f64(), 0.0, true));
                }
                continue;
            }
        };
        for &objective in &config.objectives {
            let remaining = budget.saturating_sub(build);
            let solver = DenseSimplex::with_time_limit(remaining);
            let start = Instant::now();
            let result = solve_prepared(&scenario, &prepared, objective, &solver);
            let solve = start.elapsed();
            let over = build + solve > budget;
            match result {
                Ok((value, _)) => rows.push(row(
                    model,
                    objective,
                    Some(value),
                    build.as_secs_f64(),
                    solve.as_secs_f64(),
                    over,
                )),
                Err(e) => {
                    if !is_budget_error(&e) {
                        warn!("{model}/{objective} N={n} T={t} seed={seed}: {e}");
                    }
                    rows.push(row(model, objective, None, build.as_secs_f64(), solve.as_secs_f64(), true));
                }
            }
        }
    }
    // relative increase against the unaggregated optimum of the same scenario
    let baseline: Vec<(Objective, f64)> = rows
        .iter()
        .filter(|r| r.model == ModelKind::Unaggregated && !r.discarded)
        .filter_map(|r| r.value.map(|v| (r.objective, v)))
        .collect();
    for r in rows.iter_mut().filter(|r| !r.discarded) {
        if let (Some(v), Some(&(_, b))) = (r.value, baseline.iter().find(|(o, _)| *o == r.objective)) {
            if b.abs() > 0.0 {
                r.increase_pct = Some(100.0 * (v - b) / b.abs());
            }
        }
    }
    rows
}

/// Sweeps the configured sizes. Repetitions of one size run in parallel; a
/// model discarded at some size is not attempted at larger sizes with the
/// same horizon.
pub fn run_benchmark(config: &BenchConfig) -> Vec<BenchRow> {
    let mut sizes = config.n_loads.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let mut out = Vec::new();
    for &t in &config.horizons {
        let mut skip: Vec<ModelKind> = Vec::new();
        for &n in &sizes {
            info!("benchmark N={n} T={t}");
            let cells: Vec<Vec<BenchRow>> = (0..config.repetitions)
                .into_par_iter()
                .map(|r| bench_scenario(config, n, t, config.seed.wrapping_add(r as u64), &skip))
                .collect();
            for rows in cells {
                for r in &rows {
                    if r.discarded && !skip.contains(&r.model) {
                        skip.push(r.model);
                    }
                }
                out.extend(rows);
            }
        }
    }
    out
}

/// Medians per (model, objective, N, T) over non-discarded runs.
pub fn summarize(rows: &[BenchRow]) -> Vec<BenchSummaryRow> {
    let mut keys: Vec<(ModelKind, Objective, usize, usize)> = Vec::new();
    for r in rows {
        let key = (r.model, r.objective, r.n_loads, r.horizon);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(model, objective, n_loads, horizon)| {
            let cell: Vec<&BenchRow> = rows
                .iter()
                .filter(|r| r.model == model && r.objective == objective && r.n_loads == n_loads && r.horizon == horizon)
                .collect();
            let kept: Vec<&&BenchRow> = cell.iter().filter(|r| !r.discarded).collect();
            BenchSummaryRow {
                model,
                objective,
                n_loads,
                horizon,
                runs: cell.len(),
                discarded: cell.len() - kept.len(),
                median_increase_pct: median(kept.iter().filter_map(|r| r.increase_pct).collect()),
                median_total_s: median(kept.iter().map(|r| r.build_s + r.solve_s).collect()),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disagg::lambda_disaggregate;
    use crate::envelope::build_envelope;
    use approx::assert_abs_diff_eq;

    fn single(p_max: f64, prices: Vec<f64>, e_min_final: f64, inflexible: Vec<f64>) -> Scenario {
        let load = Load::new(0, 0.0, p_max, vec![0.0, e_min_final], vec![p_max, 2.0 * p_max]);
        let mut s = Scenario::from_loads(vec![load], 1.0).unwrap();
        s.prices = prices;
        s.inflexible = inflexible;
        s
    }

    #[test]
    fn cost_follows_cheap_slot() {
        let lp = DenseSimplex::default();
        for model in ModelKind::ALL {
            let r = minimize_cost(&single(1.0, vec![1.0, 2.0], 1.0, vec![0.0; 2]), model, &lp).unwrap();
            assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(r.agg_trajectory.0[0], 1.0, epsilon = 1e-9);
            let r = minimize_cost(&single(1.0, vec![2.0, 1.0], 1.0, vec![0.0; 2]), model, &lp).unwrap();
            assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(r.agg_trajectory.0[0], 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn peak_spreads_and_shifts() {
        let lp = DenseSimplex::default();
        for model in ModelKind::ALL {
            let r = minimize_peak(&single(2.0, vec![1.0; 2], 2.0, vec![0.0; 2]), model, &lp).unwrap();
            assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-9);
            let r = minimize_peak(&single(2.0, vec![1.0; 2], 2.0, vec![1.0, 0.0]), model, &lp).unwrap();
            assert_abs_diff_eq!(r.value, 1.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn pruning_keeps_feasible_set() {
        let load = Load::new(0, 0.5, 2.0, vec![0.0, 0.0, 1.0, 3.0], vec![2.0, 2.0, 3.0, 6.0]);
        let s = Scenario::from_loads(vec![load], 1.0).unwrap().tightened().unwrap();
        let mut lp = LpProblem::new(0);
        add_power_load(&mut lp, &s.loads[0], 1.0);
        // each row drop must be implied; compare extreme cumulative energies
        for k in 0..4 {
            for sign in [1.0, -1.0] {
                let mut p = lp.clone();
                for j in 0..=k {
                    p.objective[j] = -sign;
                }
                let sol = DenseSimplex::default().solve(&p).unwrap();
                let e: f64 = sol.x[..=k].iter().sum();
                let expect = if sign > 0.0 { s.loads[0].e_max[k] } else { s.loads[0].e_min[k] };
                assert_abs_diff_eq!(e, expect, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn envelope_optimum_disaggregates() {
        let s = generate_scenario(&GeneratorConfig::new(4, 8, 0.25, 3)).unwrap();
        let lp = DenseSimplex::default();
        let env = build_envelope(&s).unwrap();
        for objective in Objective::ALL {
            let r = run_use_case(&s, ModelKind::WcEnvelopeLinear, objective, &lp).unwrap();
            let d = lambda_disaggregate(&s, &env, &r.agg_trajectory).unwrap();
            assert!(d.max_violation <= crate::model::FEAS_TOL);
            let base = run_use_case(&s, ModelKind::Unaggregated, objective, &lp).unwrap();
            assert!(r.value >= base.value - 1e-6);
        }
    }

    #[test]
    fn names_round_trip() {
        for m in ModelKind::ALL {
            assert_eq!(m.name().parse::<ModelKind>().unwrap(), m);
        }
        for o in Objective::ALL {
            assert_eq!(o.to_string().parse::<Objective>().unwrap(), o);
        }
        assert!("nope".parse::<ModelKind>().is_err());
    }

    #[test]
    fn small_benchmark() {
        let config = BenchConfig {
            n_loads: vec![3, 2],
            horizons: vec![6],
            repetitions: 2,
            seed: 10,
            dt: 0.25,
            budget_seconds: 60.0,
            models: default_models(),
            objectives: default_objectives(),
            slope_grid: 11,
        };
        let rows = run_benchmark(&config);
        assert_eq!(rows.len(), 2 * 2 * 4 * 2);
        assert_eq!(rows[0].n_loads, 2);
        let seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
        assert!(seeds.contains(&10) && seeds.contains(&11));
        for r in &rows {
            assert!(!r.discarded, "{r:?}");
            if r.model != ModelKind::Unaggregated {
                assert!(r.increase_pct.unwrap() >= -1e-6, "{r:?}");
            }
        }
        assert_eq!(run_benchmark(&config).iter().map(|r| r.value).collect::<Vec<_>>(), rows.iter().map(|r| r.value).collect::<Vec<_>>());
        let summary = summarize(&rows);
        assert_eq!(summary.len(), 2 * 4 * 2);
        assert!(summary.iter().all(|s| s.runs == 2 && s.median_total_s.is_some()));
    }
}
