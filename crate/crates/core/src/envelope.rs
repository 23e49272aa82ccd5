//! Time-sequential conservative envelope of the aggregate energy.
//!
//! Step `k` bounds `e_k` by piecewise-linear functions of `e_{k-1}`. Both
//! bounds come from the worst-case dispatch of `e_{k-1}`: the upper one sums
//! `min(e_max[k], e_i + dt * p_max)` under earliest charging, the lower one
//! sums `max(e_min[k], e_i + dt * p_min)` under latest charging.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::{clock_dispatch, sweep, Direction, DispatchError, Ramp};
use crate::model::{AggTrajectory, ModelError, Scenario, FEAS_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvelopeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error("step {k} outside 0..{max}")]
    OutOfRange { k: usize, max: usize },
    #[error("{x} outside function domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("breakpoints must have strictly increasing x: {0}")]
    Breakpoints(String),
    #[error("aggregate interval empty at step {k}")]
    InfeasibleScenario { k: usize },
    #[error("linear bounds leave no feasible energy at step {k}")]
    EmptyRegion { k: usize },
    #[error("step {k}: {segments} segments exceed the bound {bound}")]
    SegmentBound { k: usize, segments: usize, bound: usize },
    #[error("trajectory has {got} steps, envelope has {expected}")]
    Length { got: usize, expected: usize },
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", from = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo - FEAS_TOL && x <= self.hi + FEAS_TOL
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi.max(self.lo))
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

impl From<[f64; 2]> for Interval {
    fn from(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

/// Continuous piecewise-linear map given by its breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct PiecewiseLinearFn {
    points: Vec<(f64, f64)>,
}

impl TryFrom<Vec<[f64; 2]>> for PiecewiseLinearFn {
    type Error = EnvelopeError;

    fn try_from(v: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Self::new(v.into_iter().map(|[x, y]| (x, y)).collect())
    }
}

impl From<PiecewiseLinearFn> for Vec<[f64; 2]> {
    fn from(f: PiecewiseLinearFn) -> Self {
        f.points.into_iter().map(|(x, y)| [x, y]).collect()
    }
}

impl PiecewiseLinearFn {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, EnvelopeError> {
        if points.is_empty() {
            return Err(EnvelopeError::Breakpoints("no breakpoints".into()));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(EnvelopeError::Breakpoints("non-finite breakpoint".into()));
        }
        if let Some(w) = points.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(EnvelopeError::Breakpoints(format!("{} then {}", w[0].0, w[1].0)));
        }
        Ok(Self { points })
    }

    /// Builds from unsorted-safe samples, merging x values closer than
    /// `1e-12 * max|x|`.
    fn from_samples(samples: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut points: Vec<(f64, f64)> = Vec::new();
        let samples: Vec<(f64, f64)> = samples.into_iter().collect();
        let scale = samples.iter().fold(1.0_f64, |m, p| m.max(p.0.abs()));
        let eps = 1e-12 * scale;
        for (x, y) in samples {
            match points.last_mut() {
                Some(last) if x <= last.0 + eps => {
                    // same abscissa: keep the later (exactly evaluated) ordinate
                    last.1 = y;
                }
                _ => points.push((x, y)),
            }
        }
        Self { points }
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn domain(&self) -> Interval {
        Interval::new(self.points[0].0, self.points[self.points.len() - 1].0)
    }

    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect()
    }

    /// Value at `x`; points within `FEAS_TOL` of the domain are clamped in.
    pub fn eval(&self, x: f64) -> Result<f64, EnvelopeError> {
        let d = self.domain();
        if !d.contains(x) {
            return Err(EnvelopeError::OutOfDomain { x, lo: d.lo, hi: d.hi });
        }
        Ok(self.eval_clamped(x))
    }

    /// Value at `x` clamped into the domain.
    pub fn eval_clamped(&self, x: f64) -> f64 {
        let p = &self.points;
        if x <= p[0].0 {
            return p[0].1;
        }
        if x >= p[p.len() - 1].0 {
            return p[p.len() - 1].1;
        }
        let j = p.partition_point(|q| q.0 <= x);
        let (x0, y0) = p[j - 1];
        let (x1, y1) = p[j];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Restriction to `[lo, hi]` (which must lie in the domain).
    pub fn restrict(&self, lo: f64, hi: f64) -> Self {
        let mut samples = vec![(lo, self.eval_clamped(lo))];
        samples.extend(self.points.iter().copied().filter(|&(x, _)| x > lo && x < hi));
        if hi > lo {
            samples.push((hi, self.eval_clamped(hi)));
        }
        Self::from_samples(samples)
    }

    /// `∫ f` over the domain.
    pub fn integral(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
            .sum()
    }

    pub fn is_nondecreasing(&self, tol: f64) -> bool {
        self.points.windows(2).all(|w| w[1].1 >= w[0].1 - tol)
    }
}

/// `slope * x + intercept`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", from = "[f64; 2]")]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

impl Line {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

impl From<Line> for [f64; 2] {
    fn from(l: Line) -> Self {
        [l.slope, l.intercept]
    }
}

impl From<[f64; 2]> for Line {
    fn from(a: [f64; 2]) -> Self {
        Self {
            slope: a[0],
            intercept: a[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeStep {
    /// Target timestep; the bounds are functions of `e_{k-1}`.
    pub k: usize,
    pub upper: PiecewiseLinearFn,
    pub lower: PiecewiseLinearFn,
    pub interval: Interval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearStep {
    pub k: usize,
    pub upper: Line,
    pub lower: Line,
    pub interval: Interval,
}

/// Linear inner approximation of the piecewise-linear envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub init_interval: Interval,
    pub steps: Vec<LinearStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub dt: f64,
    pub horizon: usize,
    pub n_loads: usize,
    pub init_interval: Interval,
    pub steps: Vec<EnvelopeStep>,
    pub linearized: Option<Linearization>,
}

/// Outcome of a membership test; `margin` is the most negative slack (kWh).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Containment {
    pub inside: bool,
    pub margin: f64,
}

fn check_bound_step(scenario: &Scenario, k: usize) -> Result<(), EnvelopeError> {
    if scenario.horizon < 2 || k > scenario.horizon - 2 {
        return Err(EnvelopeError::OutOfRange {
            k,
            max: scenario.horizon.saturating_sub(1),
        });
    }
    Ok(())
}

fn bound_fn(dispatch_ramps: &[Ramp], bound_ramps: &[Ramp], t_min: f64, t_max: f64) -> PiecewiseLinearFn {
    let (_, values) = sweep(&[dispatch_ramps, bound_ramps], t_min, t_max);
    PiecewiseLinearFn::from_samples(values[0].iter().copied().zip(values[1].iter().copied()))
}

/// Conservative upper bound on `e_{k+1}` as a function of `e_k` over the
/// whole range of the earliest-charging dispatch. `scenario` must be
/// tightened.
pub fn step_upper_bound(scenario: &Scenario, k: usize) -> Result<PiecewiseLinearFn, EnvelopeError> {
    check_bound_step(scenario, k)?;
    let clock = clock_dispatch(scenario, k, Direction::Upper);
    let bound: Vec<Ramp> = clock
        .ramps
        .iter()
        .zip(&scenario.loads)
        .map(|(r, l)| r.shifted_min(scenario.dt * l.p_max, l.e_max[k + 1]))
        .collect();
    Ok(bound_fn(&clock.ramps, &bound, clock.t_min, clock.t_max))
}

/// Conservative lower bound on `e_{k+1}` as a function of `e_k` under the
/// latest-charging dispatch. `scenario` must be tightened.
pub fn step_lower_bound(scenario: &Scenario, k: usize) -> Result<PiecewiseLinearFn, EnvelopeError> {
    check_bound_step(scenario, k)?;
    let clock = clock_dispatch(scenario, k, Direction::Lower);
    let bound: Vec<Ramp> = clock
        .ramps
        .iter()
        .zip(&scenario.loads)
        .map(|(r, l)| r.shifted_max(scenario.dt * l.p_min, l.e_min[k + 1]))
        .collect();
    Ok(bound_fn(&clock.ramps, &bound, clock.t_min, clock.t_max))
}

/// Segment bound of one piecewise-linear step.
pub fn max_segments(n_loads: usize) -> usize {
    n_loads * (n_loads + 3) / 2
}

/// Builds the piecewise-linear envelope of a scenario.
pub fn build_envelope(scenario: &Scenario) -> Result<Envelope, EnvelopeError> {
    let s = scenario.tightened()?;
    let dt = s.dt;
    let init_interval = Interval::new(
        s.loads.iter().map(|l| l.e_min[0].max(dt * l.p_min)).sum(),
        s.loads.iter().map(|l| l.e_max[0].min(dt * l.p_max)).sum(),
    );
    if init_interval.lo > init_interval.hi + FEAS_TOL {
        return Err(EnvelopeError::InfeasibleScenario { k: 0 });
    }
    let bound = max_segments(s.n_loads()).max(1);
    let mut steps = Vec::with_capacity(s.horizon.saturating_sub(1));
    let mut current = init_interval;
    for k in 0..s.horizon.saturating_sub(1) {
        let upper = step_upper_bound(&s, k)?;
        let lower = step_lower_bound(&s, k)?;
        let (lo, hi) = (current.lo, current.hi.max(current.lo));
        let upper = upper.restrict(lo, hi);
        let lower = lower.restrict(lo, hi);
        for f in [&upper, &lower] {
            if f.segments() > bound {
                return Err(EnvelopeError::SegmentBound {
                    k: k + 1,
                    segments: f.segments(),
                    bound,
                });
            }
        }
        let next = Interval::new(lower.eval_clamped(lo), upper.eval_clamped(hi));
        if next.lo > next.hi + FEAS_TOL {
            return Err(EnvelopeError::InfeasibleScenario { k: k + 1 });
        }
        steps.push(EnvelopeStep {
            k: k + 1,
            upper,
            lower,
            interval: next,
        });
        current = next;
    }
    Ok(Envelope {
        dt,
        horizon: s.horizon,
        n_loads: s.n_loads(),
        init_interval,
        steps,
        linearized: None,
    })
}

impl Envelope {
    /// Feasible interval of `e_k`.
    pub fn interval(&self, k: usize) -> Interval {
        if k == 0 {
            self.init_interval
        } else {
            self.steps[k - 1].interval
        }
    }

    /// Area between the bounds of step `k` over the domain of `e_{k-1}`.
    pub fn step_area(&self, k: usize) -> f64 {
        let step = &self.steps[k - 1];
        step.upper.integral() - step.lower.integral()
    }

    /// Samples a trajectory inside the envelope, choosing each `e_k`
    /// uniformly between the bounds of the previous value.
    pub fn sample_trajectory<R: Rng>(&self, rng: &mut R) -> AggTrajectory {
        let mut e = Vec::with_capacity(self.horizon);
        let pick = |rng: &mut R, lo: f64, hi: f64| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let mut prev = pick(rng, self.init_interval.lo, self.init_interval.hi);
        e.push(prev);
        for step in &self.steps {
            let lo = step.lower.eval_clamped(prev);
            let hi = step.upper.eval_clamped(prev);
            prev = pick(rng, lo, hi.max(lo));
            e.push(prev);
        }
        AggTrajectory(e)
    }

    /// Same as [`Envelope::sample_trajectory`] for the linearized region.
    pub fn sample_linear_trajectory<R: Rng>(&self, rng: &mut R) -> Option<AggTrajectory> {
        let lin = self.linearized.as_ref()?;
        let pick = |rng: &mut R, lo: f64, hi: f64| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let mut e = Vec::with_capacity(self.horizon);
        let mut prev = pick(rng, lin.init_interval.lo, lin.init_interval.hi);
        e.push(prev);
        for step in &lin.steps {
            let iv = step.interval;
            let lo = step.lower.eval(prev).max(iv.lo);
            let hi = step.upper.eval(prev).min(iv.hi);
            prev = pick(rng, lo, hi.max(lo));
            e.push(prev);
        }
        Some(AggTrajectory(e))
    }
}

/// Checks a trajectory against the piecewise-linear envelope.
pub fn envelope_contains(envelope: &Envelope, traj: &AggTrajectory) -> Result<Containment, EnvelopeError> {
    if traj.len() != envelope.horizon {
        return Err(EnvelopeError::Length {
            got: traj.len(),
            expected: envelope.horizon,
        });
    }
    let e = traj.as_slice();
    let mut margin = f64::INFINITY;
    margin = margin.min(e[0] - envelope.init_interval.lo).min(envelope.init_interval.hi - e[0]);
    for step in &envelope.steps {
        let prev = e[step.k - 1];
        let x = e[step.k];
        margin = margin
            .min(x - step.lower.eval_clamped(prev))
            .min(step.upper.eval_clamped(prev) - x)
            .min(x - step.interval.lo)
            .min(step.interval.hi - x);
    }
    Ok(Containment {
        inside: margin >= -FEAS_TOL,
        margin: margin.min(0.0),
    })
}

/// Checks a trajectory against the linearized envelope.
pub fn linear_contains(envelope: &Envelope, traj: &AggTrajectory) -> Option<Containment> {
    let lin = envelope.linearized.as_ref()?;
    if traj.len() != envelope.horizon {
        return None;
    }
    let e = traj.as_slice();
    let mut margin = (e[0] - lin.init_interval.lo).min(lin.init_interval.hi - e[0]);
    for step in &lin.steps {
        let prev = e[step.k - 1];
        let x = e[step.k];
        margin = margin
            .min(x - step.lower.eval(prev))
            .min(step.upper.eval(prev) - x)
            .min(x - step.interval.lo)
            .min(step.interval.hi - x);
    }
    Some(Containment {
        inside: margin >= -FEAS_TOL,
        margin: margin.min(0.0),
    })
}

/// Lower convex hull of points sorted by x.
fn lower_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Tightest intercept of a line of slope `s` that stays below every point,
/// evaluated on the lower hull: `min (y - s x)`.
fn support_below(hull: &[(f64, f64)], s: f64) -> f64 {
    // along the lower hull, y - s x is convex in the vertex index
    let (mut lo, mut hi) = (0usize, hull.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        let a = hull[mid].1 - s * hull[mid].0;
        let b = hull[mid + 1].1 - s * hull[mid + 1].0;
        if b < a {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let mut best = hull[lo].1 - s * hull[lo].0;
    for j in [lo.saturating_sub(1), (lo + 1).min(hull.len() - 1)] {
        best = best.min(hull[j].1 - s * hull[j].0);
    }
    best
}

fn slope_candidates(f: &PiecewiseLinearFn, hull_slopes: &[f64], grid: usize) -> Vec<f64> {
    let mut c: Vec<f64> = f.slopes();
    c.extend_from_slice(hull_slopes);
    if grid == 1 {
        c.push(0.5);
    } else {
        c.extend((0..grid).map(|i| i as f64 / (grid - 1) as f64));
    }
    if c.is_empty() {
        c.push(0.0);
    }
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Best line below `f`: maximizes its integral over `f`'s domain among lines
/// passing on or above `anchor`.
fn best_line_below(f: &PiecewiseLinearFn, grid: usize, anchor: (f64, f64)) -> Line {
    let hull = lower_hull(f.breakpoints());
    let hull_slopes: Vec<f64> = hull.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let mid = 0.5 * (f.domain().lo + f.domain().hi);
    let mut best: Option<(f64, Line)> = None;
    for s in slope_candidates(f, &hull_slopes, grid) {
        let b = support_below(&hull, s);
        if b + s * anchor.0 < anchor.1 - FEAS_TOL {
            continue;
        }
        // integral over the domain is proportional to the value at the midpoint
        let score = s * mid + b;
        if best.is_none_or(|(v, _)| score > v + 1e-15 * (1.0 + v.abs())) {
            best = Some((
                score,
                Line {
                    slope: s,
                    intercept: b,
                },
            ));
        }
    }
    match best {
        Some((_, line)) => line,
        None => best_line_below(f, grid, (anchor.0, f64::NEG_INFINITY)),
    }
}

/// Best line above `f`: minimizes its integral over `f`'s domain among lines
/// passing on or below `anchor`.
fn best_line_above(f: &PiecewiseLinearFn, grid: usize, anchor: (f64, f64)) -> Line {
    // candidate slopes must stay those of f, not of its mirror image
    let hull_pts: Vec<(f64, f64)> = f.points.iter().map(|&(x, y)| (x, -y)).collect();
    let hull = lower_hull(&hull_pts);
    let hull_slopes: Vec<f64> = hull.windows(2).map(|w| -(w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let mid = 0.5 * (f.domain().lo + f.domain().hi);
    let mut best: Option<(f64, Line)> = None;
    for s in slope_candidates(f, &hull_slopes, grid) {
        // max (y - s x) = -min(-y + s x)
        let b = -support_below(&hull, -s);
        if b + s * anchor.0 > anchor.1 + FEAS_TOL {
            continue;
        }
        let score = s * mid + b;
        if best.is_none_or(|(v, _)| score < v - 1e-15 * (1.0 + v.abs())) {
            best = Some((
                score,
                Line {
                    slope: s,
                    intercept: b,
                },
            ));
        }
    }
    match best {
        Some((_, line)) => line,
        None => best_line_above(f, grid, (anchor.0, f64::INFINITY)),
    }
}

/// Adds linear inner bounds to every step and recomputes the feasible
/// intervals under them.
///
/// Lines are fitted per step by area. If the resulting region is empty, the
/// steps from the failing one onward are refitted to keep the lowest-energy
/// path of the envelope, which always leaves that path inside.
pub fn linearize(envelope: &Envelope, slope_grid_size: usize) -> Result<Envelope, EnvelopeError> {
    let free: Vec<(Line, Line)> = envelope
        .steps
        .iter()
        .map(|st| {
            (
                best_line_below(&st.upper, slope_grid_size, (0.0, f64::NEG_INFINITY)),
                best_line_above(&st.lower, slope_grid_size, (0.0, f64::INFINITY)),
            )
        })
        .collect();
    let mut prev = envelope.init_interval.lo;
    let mut anchored: Vec<(Line, Line)> = Vec::with_capacity(envelope.steps.len());
    for st in &envelope.steps {
        let lo = st.lower.eval_clamped(prev);
        let hi = st.upper.eval_clamped(prev).max(lo);
        let next = st.interval.lo.clamp(lo, hi);
        anchored.push((
            best_line_below(&st.upper, slope_grid_size, (prev, next)),
            best_line_above(&st.lower, slope_grid_size, (prev, next)),
        ));
        prev = next;
    }

    let mut from = free.len();
    let (lines, intervals) = loop {
        let lines: Vec<(Line, Line)> = free[..from].iter().chain(&anchored[from..]).copied().collect();
        match propagate(envelope, &lines) {
            Ok(iv) => break (lines, iv),
            Err(EnvelopeError::EmptyRegion { k }) if from > 0 => {
                log::debug!("linear region empty at step {k}, anchoring from step {}", (k - 1).min(from - 1) + 1);
                from = (k - 1).min(from - 1);
            }
            Err(e) => return Err(e),
        }
    };
    let steps = lines
        .iter()
        .enumerate()
        .map(|(idx, &(upper, lower))| LinearStep {
            k: idx + 1,
            upper,
            lower,
            interval: intervals[idx + 1],
        })
        .collect();
    Ok(Envelope {
        linearized: Some(Linearization {
            init_interval: intervals[0],
            steps,
        }),
        ..envelope.clone()
    })
}

/// Feasible intervals of the region cut out by `lines`.
fn propagate(envelope: &Envelope, lines: &[(Line, Line)]) -> Result<Vec<Interval>, EnvelopeError> {
    // forward: keep only energies where the lines leave room, then push
    let t = envelope.horizon;
    let mut intervals = vec![envelope.init_interval; t];
    for (idx, (up, down)) in lines.iter().enumerate() {
        let k = idx + 1;
        let cur = restrict_to_gap(intervals[k - 1], up, down).ok_or(EnvelopeError::EmptyRegion { k })?;
        intervals[k - 1] = cur;
        let pl = envelope.steps[idx].interval;
        let next = Interval::new(down.eval(cur.lo).max(pl.lo), up.eval(cur.hi).min(pl.hi));
        if next.lo > next.hi + FEAS_TOL {
            return Err(EnvelopeError::EmptyRegion { k });
        }
        intervals[k] = Interval::new(next.lo, next.hi.max(next.lo));
    }
    // backward: drop energies with no successor
    for (idx, (up, down)) in lines.iter().enumerate().rev() {
        let k = idx + 1;
        let next = intervals[k];
        let cur = intervals[k - 1];
        let mut lo = cur.lo;
        let mut hi = cur.hi;
        // need up(x) >= next.lo and down(x) <= next.hi
        if up.slope > 0.0 {
            lo = lo.max((next.lo - up.intercept) / up.slope);
        }
        if down.slope > 0.0 {
            hi = hi.min((next.hi - down.intercept) / down.slope);
        }
        if lo > hi + FEAS_TOL {
            return Err(EnvelopeError::EmptyRegion { k });
        }
        intervals[k - 1] = Interval::new(lo, hi.max(lo));
    }
    Ok(intervals)
}

/// Part of `iv` where `down(x) <= up(x)`.
fn restrict_to_gap(iv: Interval, up: &Line, down: &Line) -> Option<Interval> {
    let ds = up.slope - down.slope;
    let di = up.intercept - down.intercept;
    // gap(x) = ds * x + di >= -tol
    let (mut lo, mut hi) = (iv.lo, iv.hi);
    if ds > 0.0 {
        lo = lo.max((-FEAS_TOL - di) / ds);
    } else if ds < 0.0 {
        hi = hi.min((-FEAS_TOL - di) / ds);
    } else if di < -FEAS_TOL {
        return None;
    }
    (lo <= hi + FEAS_TOL).then(|| Interval::new(lo, hi.max(lo)))
}

/// JSON export container of the envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeExport {
    pub model: String,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub n_loads: usize,
    pub init_interval: Interval,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_init_interval: Option<Interval>,
    pub steps: Vec<StepExport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepExport {
    pub k: usize,
    pub upper_breakpoints: PiecewiseLinearFn,
    pub lower_breakpoints: PiecewiseLinearFn,
    pub interval: Interval,
    pub linear_upper: Option<Line>,
    pub linear_lower: Option<Line>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_interval: Option<Interval>,
}

pub const ENVELOPE_MODEL_TAG: &str = "wc_envelope";

impl From<&Envelope> for EnvelopeExport {
    fn from(env: &Envelope) -> Self {
        let lin = env.linearized.as_ref();
        Self {
            model: ENVELOPE_MODEL_TAG.into(),
            dt: env.dt,
            horizon: env.horizon,
            n_loads: env.n_loads,
            init_interval: env.init_interval,
            linear_init_interval: lin.map(|l| l.init_interval),
            steps: env
                .steps
                .iter()
                .enumerate()
                .map(|(i, st)| {
                    let ls = lin.map(|l| &l.steps[i]);
                    StepExport {
                        k: st.k,
                        upper_breakpoints: st.upper.clone(),
                        lower_breakpoints: st.lower.clone(),
                        interval: st.interval,
                        linear_upper: ls.map(|s| s.upper),
                        linear_lower: ls.map(|s| s.lower),
                        linear_interval: ls.map(|s| s.interval),
                    }
                })
                .collect(),
        }
    }
}

impl TryFrom<EnvelopeExport> for Envelope {
    type Error = EnvelopeError;

    fn try_from(ex: EnvelopeExport) -> Result<Self, Self::Error> {
        if ex.steps.len() + 1 != ex.horizon.max(1) {
            return Err(EnvelopeError::Length {
                got: ex.steps.len() + 1,
                expected: ex.horizon,
            });
        }
        let has_linear = ex.steps.iter().all(|s| s.linear_upper.is_some() && s.linear_lower.is_some());
        let linearized = (has_linear && !ex.steps.is_empty() || has_linear && ex.linear_init_interval.is_some())
            .then(|| Linearization {
                init_interval: ex.linear_init_interval.unwrap_or(ex.init_interval),
                steps: ex
                    .steps
                    .iter()
                    .map(|s| LinearStep {
                        k: s.k,
                        upper: s.linear_upper.unwrap(),
                        lower: s.linear_lower.unwrap(),
                        interval: s.linear_interval.unwrap_or(s.interval),
                    })
                    .collect(),
            });
        Ok(Envelope {
            dt: ex.dt,
            horizon: ex.horizon,
            n_loads: ex.n_loads,
            init_interval: ex.init_interval,
            steps: ex
                .steps
                .into_iter()
                .map(|s| EnvelopeStep {
                    k: s.k,
                    upper: s.upper_breakpoints,
                    lower: s.lower_breakpoints,
                    interval: s.interval,
                })
                .collect(),
            linearized,
        })
    }
}

impl Envelope {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&EnvelopeExport::from(self)).expect("envelope serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, EnvelopeError> {
        let ex: EnvelopeExport = serde_json::from_str(text)
            .map_err(|e| EnvelopeError::Breakpoints(format!("envelope JSON: {e}")))?;
        Envelope::try_from(ex)
    }
}
