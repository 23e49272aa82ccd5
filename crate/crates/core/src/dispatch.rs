//! Worst-case energy dispatch.
//!
//! Every load's dispatched energy is a clamped ramp of one shared clock
//! parameter. In the upper direction the clock is the time all unsaturated
//! loads have been charging at full power; loads with short saturation
//! durations fill up first. In the lower direction the clock is the time
//! spent at maximum power at the end of the window (latest charging with a
//! common switch time), and loads leave their minimum energy one by one.
//!
//! Aggregating ramps over the clock gives both the aggregate energy and the
//! next-step bounds as piecewise-linear functions of the clock, which the
//! envelope module turns into functions of the aggregate energy.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Load, LoadId, Scenario, FEAS_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispatchError {
    #[error("timestep {k} outside horizon {horizon}")]
    StepOutOfRange { k: usize, horizon: usize },
    #[error("aggregate energy {value} outside reachable range [{lo}, {hi}] at k={k}")]
    OutOfRange { k: usize, value: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Earliest charging: minimizes the next-step upper bound.
    Upper,
    /// Latest charging: maximizes the next-step lower bound.
    Lower,
}

/// `base + slope * (clamp(t, start, end) - start)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Ramp {
    pub base: f64,
    pub slope: f64,
    pub start: f64,
    pub end: f64,
}

impl Ramp {
    pub fn constant(value: f64) -> Self {
        Self {
            base: value,
            slope: 0.0,
            start: 0.0,
            end: 0.0,
        }
    }

    fn is_active(&self) -> bool {
        self.slope > 0.0 && self.end > self.start
    }

    pub fn value(&self, t: f64) -> f64 {
        if !self.is_active() {
            return self.base;
        }
        self.base + self.slope * (t.clamp(self.start, self.end) - self.start)
    }

    pub fn top(&self) -> f64 {
        self.value(f64::INFINITY)
    }

    /// `min(cap, self + shift)`
    pub fn shifted_min(&self, shift: f64, cap: f64) -> Self {
        let base = self.base + shift;
        if base >= cap {
            return Self::constant(cap);
        }
        if !self.is_active() {
            return Self::constant(base);
        }
        let hit = self.start + (cap - base) / self.slope;
        Self {
            base,
            end: self.end.min(hit),
            ..*self
        }
    }

    /// `max(floor, self + shift)`
    pub fn shifted_max(&self, shift: f64, floor: f64) -> Self {
        let base = self.base + shift;
        let top = self.top() + shift;
        if top <= floor {
            return Self::constant(floor);
        }
        if base >= floor || !self.is_active() {
            return Self {
                base: base.max(floor),
                ..*self
            };
        }
        let hit = self.start + (floor - base) / self.slope;
        Self {
            base: floor,
            start: hit.min(self.end),
            ..*self
        }
    }
}

/// Evaluates several ramp families on the merged set of their slope-change
/// clocks, in `O(n log n)`.
pub(crate) fn sweep(families: &[&[Ramp]], t_min: f64, t_max: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut events: Vec<(f64, usize, f64)> = Vec::new();
    for (f, ramps) in families.iter().enumerate() {
        for r in ramps.iter().filter(|r| r.is_active()) {
            events.push((r.start, f, r.slope));
            events.push((r.end, f, -r.slope));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut clocks = vec![t_min];
    let mut values: Vec<Vec<f64>> = families
        .iter()
        .map(|ramps| vec![ramps.iter().map(|r| r.value(t_min)).sum()])
        .collect();
    let mut slopes = vec![0.0; families.len()];
    let mut current: Vec<f64> = values.iter().map(|v| v[0]).collect();
    let mut t = t_min;
    let mut i = 0;
    // slopes of ramps that started before t_min
    while i < events.len() && events[i].0 <= t_min {
        slopes[events[i].1] += events[i].2;
        i += 1;
    }
    while i < events.len() {
        let next = events[i].0.min(t_max);
        if next > t {
            for (c, s) in current.iter_mut().zip(&slopes) {
                *c += s * (next - t);
            }
            t = next;
            clocks.push(t);
            for (v, c) in values.iter_mut().zip(&current) {
                v.push(*c);
            }
        }
        if events[i].0 >= t_max {
            break;
        }
        while i < events.len() && events[i].0 <= t {
            slopes[events[i].1] += events[i].2;
            i += 1;
        }
    }
    if t < t_max {
        for (c, s) in current.iter_mut().zip(&slopes) {
            *c += s * (t_max - t);
        }
        clocks.push(t_max);
        for (v, c) in values.iter_mut().zip(&current) {
            v.push(*c);
        }
    }
    // re-anchor the sums on exact evaluation at the ends to cap drift
    for (v, ramps) in values.iter_mut().zip(families) {
        if let Some(last) = v.last_mut() {
            *last = ramps.iter().map(|r| r.value(t_max)).sum();
        }
    }
    (clocks, values)
}

/// Per-load dispatch ramps of timestep `k` over the direction's clock.
#[derive(Debug, Clone)]
pub(crate) struct ClockDispatch {
    pub ramps: Vec<Ramp>,
    pub t_min: f64,
    pub t_max: f64,
}

fn check_step(scenario: &Scenario, k: usize) -> Result<(), DispatchError> {
    if k >= scenario.horizon {
        return Err(DispatchError::StepOutOfRange {
            k,
            horizon: scenario.horizon,
        });
    }
    Ok(())
}

fn upper_ramp(load: &Load, k: usize) -> Ramp {
    let cap = load.e_max[k];
    let floor = load.e_min[k];
    if load.p_max <= 0.0 {
        return Ramp::constant(cap.min(0.0).max(floor));
    }
    // Common clock t: the load holds min(e_max, p_max * t), but never less
    // than the energy it is already obliged to hold.
    Ramp {
        base: floor,
        slope: load.p_max,
        start: floor / load.p_max,
        end: cap / load.p_max,
    }
}

fn lower_ramp(load: &Load, k: usize, dt: f64) -> Ramp {
    let tau = (k + 1) as f64 * dt;
    let gap = load.p_max - load.p_min;
    let floor = load.e_min[k];
    let cap = load.e_max[k];
    if gap <= 0.0 {
        return Ramp::constant(floor);
    }
    // r = time at maximum power at the end of the window: energy is
    // tau * p_min + gap * r, clamped to the step's bounds.
    let base = tau * load.p_min;
    Ramp {
        base: floor,
        slope: gap,
        start: ((floor - base) / gap).clamp(0.0, tau),
        end: ((cap - base) / gap).clamp(0.0, tau),
    }
}

pub(crate) fn clock_dispatch(scenario: &Scenario, k: usize, direction: Direction) -> ClockDispatch {
    match direction {
        Direction::Upper => {
            let ramps: Vec<Ramp> = scenario.loads.iter().map(|l| upper_ramp(l, k)).collect();
            let t_max = ramps.iter().filter(|r| r.is_active()).map(|r| r.end).fold(0.0, f64::max);
            ClockDispatch {
                ramps,
                t_min: 0.0,
                t_max,
            }
        }
        Direction::Lower => {
            let ramps = scenario.loads.iter().map(|l| lower_ramp(l, k, scenario.dt)).collect();
            ClockDispatch {
                ramps,
                t_min: 0.0,
                t_max: (k + 1) as f64 * scenario.dt,
            }
        }
    }
}

impl ClockDispatch {
    pub fn aggregate_range(&self) -> (f64, f64) {
        (
            self.ramps.iter().map(|r| r.value(self.t_min)).sum(),
            self.ramps.iter().map(|r| r.value(self.t_max)).sum(),
        )
    }

    pub fn aggregate_at(&self, t: f64) -> f64 {
        self.ramps.iter().map(|r| r.value(t)).sum()
    }

    /// Clock value at which the aggregate equals `target`.
    pub fn solve_clock(&self, target: f64) -> f64 {
        let (clocks, values) = sweep(&[&self.ramps], self.t_min, self.t_max);
        let agg = &values[0];
        let j = agg.partition_point(|&v| v < target);
        if j == 0 {
            return clocks[0];
        }
        if j >= agg.len() {
            return *clocks.last().unwrap();
        }
        let (x0, x1) = (agg[j - 1], agg[j]);
        if x1 - x0 <= 0.0 {
            return clocks[j];
        }
        clocks[j - 1] + (target - x0) / (x1 - x0) * (clocks[j] - clocks[j - 1])
    }
}

/// Per-timestep dispatch description in the classic "levels" form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchTable {
    pub k: usize,
    pub direction: Direction,
    pub durations: Vec<f64>,
    /// Load indices (scenario order) sorted by ascending duration.
    pub order: Vec<usize>,
    pub levels: Vec<f64>,
}

/// Time each load can run at the direction's extreme power.
///
/// Upper: `e_max / p_max`, with `0/0 = 0` and `x/0 = +inf`.
/// Lower: switch time `s` at which `p_min * s + p_max * (tau - s)` equals
/// `e_min`, clamped to `[0, tau]`; loads with `p_min == p_max` get `tau`.
pub fn saturation_durations(
    scenario: &Scenario,
    k: usize,
    direction: Direction,
) -> Result<Vec<f64>, DispatchError> {
    check_step(scenario, k)?;
    let tau = (k + 1) as f64 * scenario.dt;
    Ok(scenario
        .loads
        .iter()
        .map(|l| match direction {
            Direction::Upper => {
                let e = l.e_max[k];
                if l.p_max > 0.0 {
                    e / l.p_max
                } else if e <= 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Direction::Lower => {
                let gap = l.p_max - l.p_min;
                if gap <= 0.0 {
                    tau
                } else {
                    ((l.p_max * tau - l.e_min[k]) / gap).clamp(0.0, tau)
                }
            }
        })
        .collect())
}

/// Stable ascending order of durations, ties broken by load id.
pub fn sort_permutation(durations: &[f64], ids: &[LoadId]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..durations.len()).collect();
    order.sort_by(|&a, &b| match durations[a].total_cmp(&durations[b]) {
        Ordering::Equal => ids[a].cmp(&ids[b]),
        o => o,
    });
    order
}

/// Aggregate energy at which `j` loads have saturated, for `j = 0..=N`.
///
/// Upper: `levels[j]` is the aggregate when the `j` shortest-duration loads
/// sit at `e_max`. Lower: `levels[j]` is the aggregate under latest charging
/// when `j` loads have left their minimum, so `levels[0]` is the minimal and
/// `levels[N]` the maximal aggregate.
pub fn discrete_levels(
    scenario: &Scenario,
    k: usize,
    direction: Direction,
) -> Result<Vec<f64>, DispatchError> {
    Ok(dispatch_table(scenario, k, direction)?.levels)
}

pub fn dispatch_table(
    scenario: &Scenario,
    k: usize,
    direction: Direction,
) -> Result<DispatchTable, DispatchError> {
    let durations = saturation_durations(scenario, k, direction)?;
    let ids: Vec<LoadId> = scenario.loads.iter().map(|l| l.id).collect();
    let order = sort_permutation(&durations, &ids);
    let clock = clock_dispatch(scenario, k, direction);
    let n = durations.len();
    let levels = match direction {
        Direction::Upper => {
            let mut levels = Vec::with_capacity(n + 1);
            levels.push(clock.aggregate_at(0.0));
            for &i in &order {
                let d = durations[i].min(clock.t_max);
                levels.push(clock.aggregate_at(d));
            }
            levels
        }
        Direction::Lower => {
            let tau = (k + 1) as f64 * scenario.dt;
            let mut levels = Vec::with_capacity(n + 1);
            // s_(N-j), with s_(0) = 0; aggregate as a function of r = tau - s
            for j in 0..=n {
                let s = if j == n { 0.0 } else { durations[order[n - 1 - j]] };
                levels.push(clock.aggregate_at(tau - s));
            }
            levels
        }
    };
    Ok(DispatchTable {
        k,
        direction,
        durations,
        order,
        levels,
    })
}

/// Per-load energies of the worst-case dispatch of aggregate `e_k`.
///
/// The result sums to `e_k` within `FEAS_TOL` and respects each load's
/// bounds at `k`.
pub fn worst_case_dispatch(
    scenario: &Scenario,
    k: usize,
    e_k: f64,
    direction: Direction,
) -> Result<Vec<f64>, DispatchError> {
    check_step(scenario, k)?;
    let clock = clock_dispatch(scenario, k, direction);
    let (lo, hi) = clock.aggregate_range();
    if e_k < lo - FEAS_TOL || e_k > hi + FEAS_TOL {
        return Err(DispatchError::OutOfRange {
            k,
            value: e_k,
            lo,
            hi,
        });
    }
    let t = clock.solve_clock(e_k.clamp(lo, hi));
    Ok(clock.ramps.iter().map(|r| r.value(t)).collect())
}

/// Level-based form of the upper dispatch for loads with no energy floor.
///
/// Within `levels[j] <= e < levels[j + 1]` the first `j` loads of the order
/// are saturated and the others share the remaining energy in proportion to
/// their maximum power.
pub fn upper_dispatch_from_levels(
    scenario: &Scenario,
    table: &DispatchTable,
    e_k: f64,
) -> Vec<f64> {
    let k = table.k;
    let n = table.order.len();
    let mut out = vec![0.0; n];
    let top = *table.levels.last().unwrap_or(&0.0);
    let mut j = table.levels.partition_point(|&l| l <= e_k).saturating_sub(1);
    if e_k >= top {
        j = n;
    }
    for (rank, &i) in table.order.iter().enumerate() {
        if rank < j {
            out[i] = scenario.loads[i].e_max[k];
        }
    }
    if j < n {
        let d_j = if j == 0 { 0.0 } else { table.durations[table.order[j - 1]] };
        let free_power: f64 = table.order[j..].iter().map(|&i| scenario.loads[i].p_max).sum();
        let extra = if free_power > 0.0 {
            (e_k - table.levels[j]) / free_power
        } else {
            0.0
        };
        for &i in &table.order[j..] {
            out[i] = (d_j + extra) * scenario.loads[i].p_max;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::table_one;
    use crate::model::Load;
    use approx::assert_abs_diff_eq;

    #[test]
    fn durations_table_one() {
        let s = table_one();
        let d1 = saturation_durations(&s, 1, Direction::Upper).unwrap();
        assert_abs_diff_eq!(d1[0], 2.0);
        assert_abs_diff_eq!(d1[1], 1.0 / 3.0);
        let d0 = saturation_durations(&s, 0, Direction::Upper).unwrap();
        assert_abs_diff_eq!(d0[0], 1.0);
        assert_abs_diff_eq!(d0[1], 1.0 / 3.0);
    }

    #[test]
    fn zero_power_conventions() {
        let s = Scenario::from_loads(vec![Load::new(0, 0.0, 0.0, vec![0.0], vec![0.0])], 1.0).unwrap();
        assert_eq!(saturation_durations(&s, 0, Direction::Upper).unwrap(), vec![0.0]);
        let s = Scenario::from_loads(vec![Load::new(0, 0.0, 0.0, vec![0.0], vec![2.0])], 1.0).unwrap();
        assert_eq!(saturation_durations(&s, 0, Direction::Upper).unwrap(), vec![f64::INFINITY]);
    }

    #[test]
    fn permutation_ordering() {
        let ids = [LoadId(0), LoadId(1)];
        assert_eq!(sort_permutation(&[2.0, 1.0 / 3.0], &ids), vec![1, 0]);
        assert_eq!(sort_permutation(&[1.0, 1.0], &ids), vec![0, 1]);
        assert_eq!(sort_permutation(&[1.0, 1.0], &[LoadId(5), LoadId(2)]), vec![1, 0]);
        assert_eq!(sort_permutation(&[f64::INFINITY, 0.0], &ids), vec![1, 0]);
    }

    #[test]
    fn levels_table_one() {
        let s = table_one();
        let l0 = discrete_levels(&s, 0, Direction::Upper).unwrap();
        assert_eq!(l0.len(), 3);
        assert_abs_diff_eq!(l0[0], 0.0);
        assert_abs_diff_eq!(l0[1], 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l0[2], 2.0, epsilon = 1e-12);
        let l1 = discrete_levels(&s, 1, Direction::Upper).unwrap();
        assert_abs_diff_eq!(l1[1], 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l1[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn single_load_levels() {
        let s = Scenario::from_loads(vec![Load::new(0, 0.0, 2.0, vec![0.0; 2], vec![1.5, 3.0])], 1.0).unwrap();
        assert_eq!(discrete_levels(&s, 1, Direction::Upper).unwrap(), vec![0.0, 3.0]);
        let lower = discrete_levels(&s, 1, Direction::Lower).unwrap();
        assert_abs_diff_eq!(lower[0], 0.0);
        assert_abs_diff_eq!(lower[1], 3.0);
    }

    #[test]
    fn dispatch_table_one() {
        let s = table_one();
        let d = worst_case_dispatch(&s, 1, 2.0, Direction::Upper).unwrap();
        assert_abs_diff_eq!(d[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], 1.0, epsilon = 1e-12);
        let d = worst_case_dispatch(&s, 1, 4.0 / 3.0, Direction::Upper).unwrap();
        assert_abs_diff_eq!(d[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], 1.0, epsilon = 1e-12);
        let d = worst_case_dispatch(&s, 2, 0.0, Direction::Upper).unwrap();
        assert_eq!(d, vec![0.0, 0.0]);
    }

    #[test]
    fn dispatch_out_of_range() {
        let s = table_one();
        assert!(matches!(
            worst_case_dispatch(&s, 0, 2.5, Direction::Upper),
            Err(DispatchError::OutOfRange { .. })
        ));
        assert!(matches!(
            worst_case_dispatch(&s, 3, 1.0, Direction::Upper),
            Err(DispatchError::StepOutOfRange { .. })
        ));
    }

    #[test]
    fn level_form_matches_clock_form() {
        let s = table_one();
        for k in 0..3 {
            let table = dispatch_table(&s, k, Direction::Upper).unwrap();
            let top = *table.levels.last().unwrap();
            for step in 0..=40 {
                let e = top * step as f64 / 40.0;
                let a = upper_dispatch_from_levels(&s, &table, e);
                let b = worst_case_dispatch(&s, k, e, Direction::Upper).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    assert_abs_diff_eq!(x, y, epsilon = FEAS_TOL);
                }
            }
        }
    }

    #[test]
    fn lower_dispatch_respects_bounds() {
        let s = Scenario::from_loads(
            vec![
                Load::new(0, 0.5, 2.0, vec![0.5, 1.0, 3.0], vec![2.0, 3.0, 4.0]),
                Load::new(1, 0.0, 1.0, vec![0.0, 0.0, 1.0], vec![1.0, 2.0, 3.0]),
            ],
            1.0,
        )
        .unwrap()
        .tightened()
        .unwrap();
        for k in 0..3 {
            let table = dispatch_table(&s, k, Direction::Lower).unwrap();
            let (lo, hi) = (table.levels[0], *table.levels.last().unwrap());
            let sum_min: f64 = s.loads.iter().map(|l| l.e_min[k]).sum();
            let sum_max: f64 = s.loads.iter().map(|l| l.e_max[k]).sum();
            assert_abs_diff_eq!(lo, sum_min, epsilon = 1e-12);
            assert_abs_diff_eq!(hi, sum_max, epsilon = 1e-12);
            assert!(table.levels.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            for step in 0..=20 {
                let e = lo + (hi - lo) * step as f64 / 20.0;
                let d = worst_case_dispatch(&s, k, e, Direction::Lower).unwrap();
                assert_abs_diff_eq!(d.iter().sum::<f64>(), e, epsilon = FEAS_TOL);
                for (v, l) in d.iter().zip(&s.loads) {
                    assert!(*v >= l.e_min[k] - FEAS_TOL && *v <= l.e_max[k] + FEAS_TOL);
                }
            }
        }
    }

    #[test]
    fn ramp_clipping() {
        let r = Ramp {
            base: 0.0,
            slope: 2.0,
            start: 0.0,
            end: 1.0,
        };
        let m = r.shifted_min(1.0, 2.0);
        assert_abs_diff_eq!(m.value(0.25), 1.5);
        assert_abs_diff_eq!(m.value(1.0), 2.0);
        let x = r.shifted_max(0.5, 1.5);
        assert_abs_diff_eq!(x.value(0.0), 1.5);
        assert_abs_diff_eq!(x.value(0.75), 2.0);
        assert_abs_diff_eq!(x.value(1.0), 2.5);
        assert_eq!(r.shifted_max(0.0, 5.0), Ramp::constant(5.0));
    }
}
