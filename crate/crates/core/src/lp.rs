//! Dense two-phase primal simplex with bounded variables.
//!
//! Variables are shifted so every column lives in `[0, u]` (`u` possibly
//! infinite); nonbasic columns sit at either bound and bound flips avoid a
//! pivot. Pricing is Dantzig's rule, switching to Bland's rule after a run of
//! degenerate pivots so the method cannot cycle.

use std::time::{Duration, Instant};

use log::debug;
use thiserror::Error;

/// Relative tolerance on constraint satisfaction of optimal solutions.
pub const LP_TOL: f64 = 1e-8;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const TINY_PIVOT: f64 = 1e-12;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("numerical trouble: {0}")]
    Numerical(String),
    #[error("iteration limit of {0} pivots reached")]
    IterationLimit(usize),
    #[error("time limit of {0:.1} s reached")]
    TimeLimit(f64),
    #[error("dense tableau of {rows} x {cols} exceeds the size limit")]
    TooLarge { rows: usize, cols: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min c'x` subject to row constraints and per-variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl LpProblem {
    /// `n` variables, zero objective, bounds `[0, inf)`.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    /// Appends a variable and returns its index.
    pub fn add_var(&mut self, cost: f64, low: f64, high: f64) -> usize {
        self.objective.push(cost);
        self.bounds.push((low, high));
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if self.bounds.len() != n {
            return Err(LpError::Malformed(format!(
                "{} bounds for {} variables",
                self.bounds.len(),
                n
            )));
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(LpError::Malformed(format!("objective coefficient {j} is not finite")));
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("bounds of variable {j} are [{lo}, {hi}]")));
            }
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("rhs of row {i} is not finite")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n || !a.is_finite() {
                    return Err(LpError::Malformed(format!("row {i} has bad entry ({j}, {a})")));
                }
            }
        }
        Ok(())
    }

    /// Largest violation of rows and bounds at `x`, each row scaled by
    /// `1 + ||row||_inf + |rhs|`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            let scale = 1.0 + x[j].abs();
            worst = worst.max((lo - x[j]) / scale).max((x[j] - hi) / scale);
        }
        for row in &self.constraints {
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let norm = row.coeffs.iter().fold(0.0_f64, |m, &(_, a)| m.max(a.abs()));
            let scale = 1.0 + norm + row.rhs.abs();
            let v = match row.relation {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(v / scale);
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Anything that can solve an [`LpProblem`].
pub trait LpSolver: Sync {
    fn solve(&self, problem: &LpProblem) -> Result<LpSolution, LpError>;
}

#[derive(Debug, Clone, Copy)]
pub struct DenseSimplex {
    /// Pivot budget per row-plus-column.
    pub iteration_factor: usize,
    /// Wall-clock budget per solve.
    pub time_limit: Option<Duration>,
    /// Largest tableau (rows times columns) the solver will allocate.
    pub max_entries: usize,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        Self {
            iteration_factor: 50,
            time_limit: None,
            max_entries: 150_000_000,
        }
    }
}

impl DenseSimplex {
    pub fn with_time_limit(limit: Duration) -> Self {
        Self {
            time_limit: Some(limit),
            ..Self::default()
        }
    }
}

impl LpSolver for DenseSimplex {
    fn solve(&self, problem: &LpProblem) -> Result<LpSolution, LpError> {
        problem.validate()?;
        let n = problem.n_vars();
        if problem.bounds.iter().any(|&(lo, hi)| lo > hi) {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; n],
                objective_value: f64::NAN,
            });
        }
        let rows = problem.constraints.len();
        // structural columns (free variables split in two), slacks, artificials
        let cols = n + problem.bounds.iter().filter(|b| !b.0.is_finite() && !b.1.is_finite()).count() + 2 * rows;
        if rows.saturating_mul(cols) > self.max_entries {
            return Err(LpError::TooLarge { rows, cols });
        }
        let started = Instant::now();
        let mut std = StandardForm::build(problem);
        std.deadline = self.time_limit.map(|d| (started + d, d.as_secs_f64()));
        let limit = self.iteration_factor * (std.m + std.n).max(1);
        let status = std.run(limit)?;
        let x = std.recover(problem);
        let value = problem.objective_at(&x);
        if status == LpStatus::Optimal {
            let viol = problem.max_violation(&x);
            if viol > LP_TOL {
                return Err(LpError::Numerical(format!(
                    "optimal basis violates constraints by {viol:.3e}"
                )));
            }
        }
        Ok(LpSolution {
            status,
            x,
            objective_value: if status == LpStatus::Optimal { value } else { f64::NAN },
        })
    }
}

/// How an original variable maps onto standard columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = offset + col`
    Shift { col: usize, offset: f64 },
    /// `x = offset - col`
    Mirror { col: usize, offset: f64 },
    /// `x = pos - neg`
    Split { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

struct StandardForm {
    m: usize,
    n: usize,
    /// Row-major `m x n` tableau `B^-1 A`.
    tab: Vec<f64>,
    /// Current values of basic variables.
    beta: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    kind: Vec<ColKind>,
    basis: Vec<usize>,
    /// For nonbasic columns: true when sitting at the upper bound.
    at_upper: Vec<bool>,
    is_basic: Vec<bool>,
    maps: Vec<VarMap>,
    pivots: usize,
    deadline: Option<(Instant, f64)>,
}

impl StandardForm {
    fn build(problem: &LpProblem) -> Self {
        let mut upper = Vec::new();
        let mut cost = Vec::new();
        let mut kind = Vec::new();
        let mut maps = Vec::with_capacity(problem.n_vars());
        for (j, &(lo, hi)) in problem.bounds.iter().enumerate() {
            let c = problem.objective[j];
            let mut push = |u: f64, c: f64| {
                upper.push(u);
                cost.push(c);
                kind.push(ColKind::Structural);
                upper.len() - 1
            };
            let map = if lo.is_finite() {
                VarMap::Shift {
                    col: push(hi - lo, c),
                    offset: lo,
                }
            } else if hi.is_finite() {
                VarMap::Mirror {
                    col: push(f64::INFINITY, -c),
                    offset: hi,
                }
            } else {
                let pos = push(f64::INFINITY, c);
                let neg = push(f64::INFINITY, -c);
                VarMap::Split { pos, neg }
            };
            maps.push(map);
        }

        // rows in terms of structural columns, rhs moved by the shifts
        let m = problem.constraints.len();
        let mut rows: Vec<(Vec<(usize, f64)>, Relation, f64)> = Vec::with_capacity(m);
        for row in &problem.constraints {
            let mut coeffs = Vec::with_capacity(row.coeffs.len() + 1);
            let mut rhs = row.rhs;
            for &(j, a) in &row.coeffs {
                match maps[j] {
                    VarMap::Shift { col, offset } => {
                        coeffs.push((col, a));
                        rhs -= a * offset;
                    }
                    VarMap::Mirror { col, offset } => {
                        coeffs.push((col, -a));
                        rhs -= a * offset;
                    }
                    VarMap::Split { pos, neg } => {
                        coeffs.push((pos, a));
                        coeffs.push((neg, -a));
                    }
                }
            }
            rows.push((coeffs, row.relation, rhs));
        }

        // slacks, then sign normalization, then artificials where no slack can start basic
        let mut slack_of = vec![None; m];
        for (i, (_, rel, _)) in rows.iter().enumerate() {
            if *rel != Relation::Eq {
                upper.push(f64::INFINITY);
                cost.push(0.0);
                kind.push(ColKind::Slack);
                slack_of[i] = Some(upper.len() - 1);
            }
        }
        let mut basis = vec![usize::MAX; m];
        let mut art_rows = Vec::new();
        let mut signs = vec![1.0; m];
        for (i, (_, rel, rhs)) in rows.iter().enumerate() {
            let slack_coef = match rel {
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
                Relation::Eq => 0.0,
            };
            let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
            signs[i] = sign;
            if slack_coef * sign > 0.0 {
                basis[i] = slack_of[i].unwrap();
            } else {
                art_rows.push(i);
            }
        }
        for &i in &art_rows {
            upper.push(f64::INFINITY);
            cost.push(0.0);
            kind.push(ColKind::Artificial);
            basis[i] = upper.len() - 1;
        }
        let n = upper.len();
        let mut tab = vec![0.0; m * n];
        let mut beta = vec![0.0; m];
        for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
            let s = signs[i];
            let r = &mut tab[i * n..(i + 1) * n];
            for &(col, a) in coeffs {
                r[col] += s * a;
            }
            if let Some(col) = slack_of[i] {
                r[col] = s * if *rel == Relation::Le { 1.0 } else { -1.0 };
            }
            if kind[basis[i]] == ColKind::Artificial {
                r[basis[i]] = 1.0;
            }
            beta[i] = s * rhs;
        }
        let mut is_basic = vec![false; n];
        for &b in &basis {
            is_basic[b] = true;
        }
        Self {
            m,
            n,
            tab,
            beta,
            upper,
            cost,
            kind,
            basis,
            at_upper: vec![false; n],
            is_basic,
            maps,
            pivots: 0,
            deadline: None,
        }
    }

    fn reduced_costs(&self, phase_one: bool) -> Vec<f64> {
        let c = |j: usize| -> f64 {
            if phase_one {
                if self.kind[j] == ColKind::Artificial {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.cost[j]
            }
        };
        let mut d: Vec<f64> = (0..self.n).map(c).collect();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = c(b);
            if cb != 0.0 {
                let row = &self.tab[i * self.n..(i + 1) * self.n];
                for (dj, a) in d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
        d
    }

    fn objective(&self, phase_one: bool) -> f64 {
        let mut total = 0.0;
        for (i, &b) in self.basis.iter().enumerate() {
            let c = if phase_one {
                (self.kind[b] == ColKind::Artificial) as u8 as f64
            } else {
                self.cost[b]
            };
            total += c * self.beta[i];
        }
        if !phase_one {
            for j in 0..self.n {
                if !self.is_basic[j] && self.at_upper[j] {
                    total += self.cost[j] * self.upper[j];
                }
            }
        }
        total
    }

    fn run(&mut self, limit: usize) -> Result<LpStatus, LpError> {
        let has_artificials = self.kind.contains(&ColKind::Artificial);
        if has_artificials {
            match self.iterate(true, limit)? {
                LpStatus::Optimal => {}
                other => return Err(LpError::Numerical(format!("phase one ended {other:?}"))),
            }
            let infeas = self.objective(true);
            let scale = 1.0 + self.beta.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if infeas > 1e-9 * scale {
                debug!("phase one infeasibility {infeas:.3e}");
                return Ok(LpStatus::Infeasible);
            }
            self.drive_out_artificials();
            for j in 0..self.n {
                if self.kind[j] == ColKind::Artificial {
                    self.upper[j] = 0.0;
                }
            }
        }
        self.iterate(false, limit)
    }

    fn drive_out_artificials(&mut self) {
        for r in 0..self.m {
            if self.kind[self.basis[r]] != ColKind::Artificial {
                continue;
            }
            let row = &self.tab[r * self.n..(r + 1) * self.n];
            let candidate = (0..self.n)
                .filter(|&j| !self.is_basic[j] && self.kind[j] != ColKind::Artificial)
                .filter(|&j| row[j].abs() > 1e-7)
                .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()));
            if let Some(j) = candidate {
                // degenerate pivot: the artificial is at zero, the entering column keeps its value
                let value = if self.at_upper[j] { self.upper[j] } else { 0.0 };
                let leaving = self.basis[r];
                self.pivot(r, j);
                self.beta[r] = value;
                self.at_upper[leaving] = false;
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let n = self.n;
        let p = self.tab[r * n + j];
        {
            let row = &mut self.tab[r * n..(r + 1) * n];
            for v in row.iter_mut() {
                *v /= p;
            }
        }
        let (before, rest) = self.tab.split_at_mut(r * n);
        let (prow, after) = rest.split_at_mut(n);
        for (i, chunk) in before.chunks_mut(n).enumerate() {
            let f = chunk[j];
            if f != 0.0 {
                for (v, a) in chunk.iter_mut().zip(prow.iter()) {
                    *v -= f * a;
                }
                chunk[j] = 0.0;
                self.beta[i] -= f * self.beta[r] / p;
            }
        }
        for (off, chunk) in after.chunks_mut(n).enumerate() {
            let i = r + 1 + off;
            let f = chunk[j];
            if f != 0.0 {
                for (v, a) in chunk.iter_mut().zip(prow.iter()) {
                    *v -= f * a;
                }
                chunk[j] = 0.0;
                self.beta[i] -= f * self.beta[r] / p;
            }
        }
        self.beta[r] /= p;
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.is_basic[j] = true;
        self.basis[r] = j;
        self.at_upper[j] = false;
        self.pivots += 1;
    }

    fn iterate(&mut self, phase_one: bool, limit: usize) -> Result<LpStatus, LpError> {
        let mut d = self.reduced_costs(phase_one);
        let mut degenerate = 0usize;
        let mut bland = false;
        let mut tiny = 0usize;
        loop {
            if self.pivots >= limit {
                return Err(LpError::IterationLimit(limit));
            }
            if let Some((at, secs)) = self.deadline {
                if self.pivots.is_multiple_of(32) && Instant::now() >= at {
                    return Err(LpError::TimeLimit(secs));
                }
            }
            // pricing
            let mut entering = None;
            let mut best = 0.0;
            for j in 0..self.n {
                if self.is_basic[j] || self.upper[j] == 0.0 {
                    continue;
                }
                if !phase_one && self.kind[j] == ColKind::Artificial {
                    continue;
                }
                let score = if self.at_upper[j] { d[j] } else { -d[j] };
                if score > COST_TOL {
                    if bland {
                        entering = Some(j);
                        break;
                    }
                    if score > best {
                        best = score;
                        entering = Some(j);
                    }
                }
            }
            let Some(j) = entering else {
                return Ok(LpStatus::Optimal);
            };
            let dir = if self.at_upper[j] { -1.0 } else { 1.0 };

            // ratio test
            let mut theta = self.upper[j];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_mag = 0.0;
            for i in 0..self.m {
                let alpha = dir * self.tab[i * self.n + j];
                let b = self.basis[i];
                let (limit_i, to_upper) = if alpha > PIVOT_TOL {
                    (self.beta[i].max(0.0) / alpha, false)
                } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                    ((self.upper[b] - self.beta[i]).max(0.0) / -alpha, true)
                } else {
                    continue;
                };
                let better = match leave {
                    None => limit_i < theta,
                    Some((li, _)) => {
                        if bland {
                            limit_i < theta - 1e-12
                                || (limit_i <= theta + 1e-12 && self.basis[i] < self.basis[li])
                        } else {
                            limit_i < theta - 1e-12
                                || (limit_i <= theta + 1e-12 && alpha.abs() > leave_mag)
                        }
                    }
                };
                if better {
                    theta = limit_i.min(theta);
                    leave = Some((i, to_upper));
                    leave_mag = alpha.abs();
                }
            }
            if theta.is_infinite() {
                if phase_one {
                    return Err(LpError::Numerical("phase one unbounded".into()));
                }
                return Ok(LpStatus::Unbounded);
            }

            for i in 0..self.m {
                let a = self.tab[i * self.n + j];
                if a != 0.0 {
                    self.beta[i] -= dir * theta * a;
                }
            }
            match leave {
                None => {
                    // bound flip
                    self.at_upper[j] = !self.at_upper[j];
                    self.pivots += 1;
                }
                Some((r, to_upper)) => {
                    if leave_mag < 1e-7 {
                        tiny += 1;
                        if leave_mag < TINY_PIVOT || tiny > 50 {
                            return Err(LpError::Numerical(format!(
                                "pivot magnitude {leave_mag:.3e} too small"
                            )));
                        }
                    } else {
                        tiny = 0;
                    }
                    let entering_value = if dir > 0.0 { theta } else { self.upper[j] - theta };
                    let leaving = self.basis[r];
                    self.beta[r] = 0.0;
                    self.pivot(r, j);
                    self.beta[r] = entering_value;
                    self.at_upper[leaving] = to_upper;
                    // update reduced costs with the new pivot row
                    let dj = d[j];
                    let row = &self.tab[r * self.n..(r + 1) * self.n];
                    for (dk, a) in d.iter_mut().zip(row) {
                        *dk -= dj * a;
                    }
                    d[j] = 0.0;
                }
            }
            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            if self.pivots.is_multiple_of(2000) {
                // refresh against drift
                d = self.reduced_costs(phase_one);
            }
        }
    }

    fn column_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.n)
            .map(|j| if self.at_upper[j] { self.upper[j] } else { 0.0 })
            .collect();
        for (i, &b) in self.basis.iter().enumerate() {
            v[b] = self.beta[i].clamp(0.0, self.upper[b]);
        }
        v
    }

    fn recover(&self, problem: &LpProblem) -> Vec<f64> {
        let cols = self.column_values();
        self.maps
            .iter()
            .zip(&problem.bounds)
            .map(|(map, &(lo, hi))| {
                let v = match *map {
                    VarMap::Shift { col, offset } => offset + cols[col],
                    VarMap::Mirror { col, offset } => offset - cols[col],
                    VarMap::Split { pos, neg } => cols[pos] - cols[neg],
                };
                v.clamp(lo, hi)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn solve(p: &LpProblem) -> LpSolution {
        DenseSimplex::default().solve(p).unwrap()
    }

    #[test]
    fn bounded_maximum() {
        let mut p = LpProblem::new(1);
        p.objective[0] = -1.0;
        p.add_constraint(vec![(0, 1.0)], Relation::Le, 1.0);
        let s = solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert_abs_diff_eq!(s.x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.objective_value, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn contradictory_rows_infeasible() {
        let mut p = LpProblem::new(1);
        p.objective[0] = 1.0;
        p.add_constraint(vec![(0, 1.0)], Relation::Ge, 2.0);
        p.add_constraint(vec![(0, 1.0)], Relation::Le, 1.0);
        assert_eq!(solve(&p).status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut p = LpProblem::new(1);
        p.objective[0] = -1.0;
        assert_eq!(solve(&p).status, LpStatus::Unbounded);
    }

    #[test]
    fn crossed_bounds_infeasible() {
        let mut p = LpProblem::new(1);
        p.bounds[0] = (2.0, 1.0);
        assert_eq!(solve(&p).status, LpStatus::Infeasible);
    }

    #[test]
    fn free_and_mirrored_variables() {
        // min x + y, x free, y <= 3, x + y >= -2, x - y = 1
        let mut p = LpProblem::new(2);
        p.objective = vec![1.0, 1.0];
        p.bounds = vec![(f64::NEG_INFINITY, f64::INFINITY), (f64::NEG_INFINITY, 3.0)];
        p.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Ge, -2.0);
        p.add_constraint(vec![(0, 1.0), (1, -1.0)], Relation::Eq, 1.0);
        let s = solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert_abs_diff_eq!(s.objective_value, -2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[0] - s.x[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn bound_flip_path() {
        // max x + y with box bounds only
        let mut p = LpProblem::new(2);
        p.objective = vec![-1.0, -2.0];
        p.bounds = vec![(-1.0, 2.0), (0.5, 4.0)];
        let s = solve(&p);
        assert_eq!(s.x, vec![2.0, 4.0]);
    }

    #[test]
    fn redundant_equalities() {
        let mut p = LpProblem::new(2);
        p.objective = vec![1.0, 2.0];
        p.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        p.add_constraint(vec![(0, 2.0), (1, 2.0)], Relation::Eq, 2.0);
        let s = solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert_abs_diff_eq!(s.objective_value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the textbook rule without anti-cycling.
        let mut p = LpProblem::new(4);
        p.objective = vec![-0.75, 150.0, -0.02, 6.0];
        p.add_constraint(vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Relation::Le, 0.0);
        p.add_constraint(vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Relation::Le, 0.0);
        p.add_constraint(vec![(2, 1.0)], Relation::Le, 1.0);
        let s = solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert_abs_diff_eq!(s.objective_value, -0.05, epsilon = 1e-9);
    }

    #[test]
    fn malformed_rejected() {
        let mut p = LpProblem::new(1);
        p.add_constraint(vec![(3, 1.0)], Relation::Le, 1.0);
        assert!(matches!(DenseSimplex::default().solve(&p), Err(LpError::Malformed(_))));
        let mut p = LpProblem::new(1);
        p.objective[0] = f64::NAN;
        assert!(DenseSimplex::default().solve(&p).is_err());
    }

    #[test]
    fn deterministic() {
        let mut p = LpProblem::new(3);
        p.objective = vec![-1.0, -1.0, -1.0];
        p.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Le, 1.0);
        p.add_constraint(vec![(1, 1.0), (2, 1.0)], Relation::Le, 1.0);
        p.add_constraint(vec![(0, 1.0), (2, 1.0)], Relation::Le, 1.0);
        let a = solve(&p);
        let b = solve(&p);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_abs_diff_eq!(a.objective_value, -1.5, epsilon = 1e-9);
    }
}
