//! Exact reference procedures for small instances: two-step Minkowski sums
//! of trapezoids, LP membership in the true aggregate polytope, and
//! deviation-minimizing disaggregation.

use thiserror::Error;

use crate::envelope::Envelope;
use crate::lp::{LpError, LpProblem, LpSolver, LpStatus, Relation};
use crate::model::{AggTrajectory, Load, LoadTrajectory, ModelError, Scenario, FEAS_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] LpError),
    #[error("exact two-step sum needs T = 2, got T = {0}")]
    Dimension(usize),
    #[error("request has {got} steps, scenario has {expected}")]
    Length { got: usize, expected: usize },
}

/// Convex polygon in the `(e_0, e_1)` plane, counterclockwise. May be
/// degenerate (a segment or a point).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon2D {
    pub vertices: Vec<(f64, f64)>,
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

impl Polygon2D {
    /// Convex hull of arbitrary points.
    pub fn hull(mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        points.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-12 && (a.1 - b.1).abs() <= 1e-12);
        if points.len() < 3 {
            return Self { vertices: points };
        }
        let mut lower: Vec<(f64, f64)> = Vec::new();
        for &p in &points {
            while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 1e-15 {
                lower.pop();
            }
            lower.push(p);
        }
        let mut upper: Vec<(f64, f64)> = Vec::new();
        for &p in points.iter().rev() {
            while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 1e-15 {
                upper.pop();
            }
            upper.push(p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        Self { vertices: lower }
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        if v.len() < 3 {
            return 0.0;
        }
        let s: f64 = (0..v.len())
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % v.len()]);
                a.0 * b.1 - b.0 * a.1
            })
            .sum();
        0.5 * s.abs()
    }

    /// Membership with absolute slack `tol` (distance to each edge line).
    pub fn contains(&self, p: (f64, f64), tol: f64) -> bool {
        let v = &self.vertices;
        match v.len() {
            0 => false,
            1 => (p.0 - v[0].0).hypot(p.1 - v[0].1) <= tol,
            2 => segment_distance(p, v[0], v[1]) <= tol,
            n => (0..n).all(|i| {
                let (a, b) = (v[i], v[(i + 1) % n]);
                let len = (b.0 - a.0).hypot(b.1 - a.1);
                cross(a, b, p) >= -tol * len
            }),
        }
    }

    /// Keeps the part with `a.0 * x + a.1 * y <= b`.
    fn clip(&self, a: (f64, f64), b: f64) -> Self {
        let v = &self.vertices;
        let side = |p: (f64, f64)| a.0 * p.0 + a.1 * p.1 - b;
        let mut out = Vec::new();
        for i in 0..v.len() {
            let (p, q) = (v[i], v[(i + 1) % v.len()]);
            let (sp, sq) = (side(p), side(q));
            if sp <= 0.0 {
                out.push(p);
            }
            if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
                let t = sp / (sp - sq);
                out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
            }
        }
        Self::hull(out)
    }

    /// Minkowski sum by merging edge vectors in angular order.
    pub fn minkowski_sum(&self, other: &Self) -> Self {
        if self.vertices.is_empty() || other.vertices.is_empty() {
            return Self { vertices: vec![] };
        }
        let start = |v: &[(f64, f64)]| {
            *v.iter()
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
                .expect("nonempty")
        };
        let edges = |v: &[(f64, f64)]| -> Vec<(f64, f64)> {
            if v.len() < 2 {
                return vec![];
            }
            (0..v.len())
                .map(|i| {
                    let (a, b) = (v[i], v[(i + 1) % v.len()]);
                    (b.0 - a.0, b.1 - a.1)
                })
                .collect()
        };
        let angle = |e: &(f64, f64)| {
            let a = e.1.atan2(e.0);
            if a < 0.0 {
                a + std::f64::consts::TAU
            } else {
                a
            }
        };
        let mut all = edges(&self.vertices);
        all.extend(edges(&other.vertices));
        all.sort_by(|a, b| angle(a).total_cmp(&angle(b)));
        let (s, o) = (start(&self.vertices), start(&other.vertices));
        let mut cur = (s.0 + o.0, s.1 + o.1);
        let mut points = vec![cur];
        for e in all {
            cur = (cur.0 + e.0, cur.1 + e.1);
            points.push(cur);
        }
        Self::hull(points)
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let d = (b.0 - a.0, b.1 - a.1);
    let len2 = d.0 * d.0 + d.1 * d.1;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * d.0 + (p.1 - a.1) * d.1) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - t * d.0).hypot(p.1 - a.1 - t * d.1)
}

/// Feasible `(e_0, e_1)` region of one load over two steps.
pub fn load_trapezoid(load: &Load, dt: f64) -> Polygon2D {
    let lo0 = load.e_min[0].max(dt * load.p_min);
    let hi0 = load.e_max[0].min(dt * load.p_max);
    let (lo1, hi1) = (load.e_min[1], load.e_max[1]);
    if lo0 > hi0 || lo1 > hi1 {
        return Polygon2D { vertices: vec![] };
    }
    let bx = Polygon2D::hull(vec![(lo0, lo1), (hi0, lo1), (hi0, hi1), (lo0, hi1)]);
    bx.clip((-1.0, 1.0), dt * load.p_max).clip((1.0, -1.0), -dt * load.p_min)
}

/// Exact aggregate region of a two-step scenario.
pub fn trapezoid_sum(scenario: &Scenario) -> Result<Polygon2D, OracleError> {
    if scenario.horizon != 2 {
        return Err(OracleError::Dimension(scenario.horizon));
    }
    let mut acc = Polygon2D {
        vertices: vec![(0.0, 0.0)],
    };
    for load in &scenario.loads {
        acc = acc.minkowski_sum(&load_trapezoid(load, scenario.dt));
    }
    Ok(acc)
}

/// Area of the two-step envelope region `{e_0 in init, lower(e_0) <= e_1 <= upper(e_0)}`.
pub fn envelope_area(envelope: &Envelope) -> Result<f64, OracleError> {
    if envelope.horizon != 2 {
        return Err(OracleError::Dimension(envelope.horizon));
    }
    Ok(envelope.step_area(1))
}

/// Adds the cumulative-energy polytope of `load` over fresh variables and
/// returns their indices.
fn add_load(lp: &mut LpProblem, load: &Load, dt: f64) -> Vec<usize> {
    let vars: Vec<usize> = (0..load.horizon())
        .map(|k| lp.add_var(0.0, load.e_min[k], load.e_max[k]))
        .collect();
    for (k, &v) in vars.iter().enumerate() {
        let mut coeffs = vec![(v, 1.0)];
        if k > 0 {
            coeffs.push((vars[k - 1], -1.0));
        }
        lp.add_constraint(coeffs.clone(), Relation::Le, dt * load.p_max);
        lp.add_constraint(coeffs, Relation::Ge, dt * load.p_min);
    }
    vars
}

#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub feasible: bool,
    pub witness: Option<LoadTrajectory>,
}

fn check_len(scenario: &Scenario, traj: &AggTrajectory) -> Result<(), OracleError> {
    if traj.len() != scenario.horizon {
        return Err(OracleError::Length {
            got: traj.len(),
            expected: scenario.horizon,
        });
    }
    Ok(())
}

/// Decides whether `traj` splits into feasible individual trajectories,
/// allowing `FEAS_TOL` on each aggregate equality.
pub fn membership_lp(scenario: &Scenario, traj: &AggTrajectory, solver: &dyn LpSolver) -> Result<Membership, OracleError> {
    check_len(scenario, traj)?;
    let mut lp = LpProblem::new(0);
    let vars: Vec<Vec<usize>> = scenario.loads.iter().map(|l| add_load(&mut lp, l, scenario.dt)).collect();
    for (k, &e) in traj.as_slice().iter().enumerate() {
        let slack = lp.add_var(0.0, -FEAS_TOL, FEAS_TOL);
        let mut coeffs: Vec<(usize, f64)> = vars.iter().map(|v| (v[k], 1.0)).collect();
        coeffs.push((slack, 1.0));
        lp.add_constraint(coeffs, Relation::Eq, e);
    }
    let sol = solver.solve(&lp)?;
    let witness = (sol.status == LpStatus::Optimal).then(|| LoadTrajectory {
        rows: vars.iter().map(|v| v.iter().map(|&j| sol.x[j]).collect()).collect(),
    });
    Ok(Membership {
        feasible: witness.is_some(),
        witness,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinDeviation {
    pub delivered: AggTrajectory,
    pub individual: LoadTrajectory,
    pub l1_deviation: f64,
    pub rmse: f64,
}

/// Feasible aggregate closest to `request` in the L1 norm.
pub fn min_deviation_disaggregation(
    scenario: &Scenario,
    request: &AggTrajectory,
    solver: &dyn LpSolver,
) -> Result<MinDeviation, OracleError> {
    check_len(scenario, request)?;
    let mut lp = LpProblem::new(0);
    let vars: Vec<Vec<usize>> = scenario.loads.iter().map(|l| add_load(&mut lp, l, scenario.dt)).collect();
    for (k, &e) in request.as_slice().iter().enumerate() {
        let over = lp.add_var(1.0, 0.0, f64::INFINITY);
        let under = lp.add_var(1.0, 0.0, f64::INFINITY);
        let mut coeffs: Vec<(usize, f64)> = vars.iter().map(|v| (v[k], 1.0)).collect();
        coeffs.push((over, -1.0));
        coeffs.push((under, 1.0));
        lp.add_constraint(coeffs, Relation::Eq, e);
    }
    let sol = solver.solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        // every load polytope is nonempty after validation, so only a
        // broken scenario ends here
        return Err(OracleError::Model(ModelError::Config(format!(
            "deviation LP ended {:?}",
            sol.status
        ))));
    }
    let individual = LoadTrajectory {
        rows: vars.iter().map(|v| v.iter().map(|&j| sol.x[j]).collect()).collect(),
    };
    let delivered = individual.aggregate();
    let n = request.len().max(1) as f64;
    let sq: f64 = request
        .as_slice()
        .iter()
        .zip(delivered.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(MinDeviation {
        delivered,
        individual,
        l1_deviation: sol.objective_value,
        rmse: (sq / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::build_envelope;
    use crate::fixtures::table_one;
    use crate::lp::DenseSimplex;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn unit_load(id: u32) -> Load {
        Load::new(id, 0.0, 1.0, vec![0.0, 0.0], vec![1.0, 2.0])
    }

    fn same(p: &Polygon2D, expected: &[(f64, f64)]) {
        assert_eq!(p.vertices.len(), expected.len(), "{:?}", p.vertices);
        for q in expected {
            assert!(p.vertices.iter().any(|v| (v.0 - q.0).abs() < 1e-12 && (v.1 - q.1).abs() < 1e-12), "{q:?} missing from {:?}", p.vertices);
        }
    }

    #[test]
    fn single_trapezoid() {
        same(&load_trapezoid(&unit_load(0), 1.0), &[(0.0, 0.0), (1.0, 1.0), (1.0, 2.0), (0.0, 1.0)]);
    }

    #[test]
    fn identical_pair_sum() {
        let s = Scenario::from_loads(vec![unit_load(0), unit_load(1)], 1.0).unwrap();
        let p = trapezoid_sum(&s).unwrap();
        same(&p, &[(0.0, 0.0), (2.0, 2.0), (2.0, 4.0), (0.0, 2.0)]);
        let single = load_trapezoid(&unit_load(0), 1.0);
        assert_abs_diff_eq!(p.area(), 4.0 * single.area(), epsilon = 1e-12);
        assert!(p.vertices.len() <= 6);
    }

    #[test]
    fn dimension_checked() {
        assert_eq!(trapezoid_sum(&table_one()), Err(OracleError::Dimension(3)));
    }

    #[test]
    fn polygon_membership() {
        let p = load_trapezoid(&unit_load(0), 1.0);
        assert!(p.contains((0.5, 1.0), 0.0));
        assert!(p.contains((1.0, 2.0), 1e-12));
        assert!(!p.contains((0.0, 1.5), 1e-9));
        let seg = Polygon2D::hull(vec![(0.0, 0.0), (1.0, 1.0)]);
        assert!(seg.contains((0.5, 0.5), 1e-12));
        assert_eq!(seg.area(), 0.0);
    }

    #[test]
    fn segment_plus_square() {
        let seg = Polygon2D::hull(vec![(0.0, 0.0), (1.0, 1.0)]);
        let sq = Polygon2D::hull(vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        assert_abs_diff_eq!(seg.minkowski_sum(&sq).area(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn membership_table_one() {
        let s = table_one();
        let lp = DenseSimplex::default();
        assert!(!membership_lp(&s, &vec![2.0, 2.0, 4.0].into(), &lp).unwrap().feasible);
        let m = membership_lp(&s, &vec![2.0, 2.0, 3.0].into(), &lp).unwrap();
        assert!(m.feasible);
        assert!(s.admits(m.witness.as_ref().unwrap()));
        assert!(membership_lp(&s, &vec![0.0; 3].into(), &lp).unwrap().feasible);
    }

    #[test]
    fn min_deviation_table_one() {
        let s = table_one();
        let lp = DenseSimplex::default();
        let d = min_deviation_disaggregation(&s, &vec![2.0, 2.0, 4.0].into(), &lp).unwrap();
        assert_abs_diff_eq!(d.l1_deviation, 1.0, epsilon = 1e-9);
        let d = min_deviation_disaggregation(&s, &vec![2.0, 2.0, 3.0].into(), &lp).unwrap();
        assert_abs_diff_eq!(d.l1_deviation, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d.rmse, 0.0, epsilon = 1e-9);
        let one = Scenario::from_loads(vec![table_one().loads[0].clone()], 1.0).unwrap();
        let d = min_deviation_disaggregation(&one, &vec![1.0, 2.0, 3.0].into(), &lp).unwrap();
        assert_abs_diff_eq!(d.l1_deviation, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn envelope_area_table_one_prefix() {
        let t1 = table_one();
        let loads = t1
            .loads
            .iter()
            .map(|l| Load::new(l.id.0, l.p_min, l.p_max, l.e_min[..2].to_vec(), l.e_max[..2].to_vec()))
            .collect();
        let s = Scenario::from_loads(loads, 1.0).unwrap();
        let env = build_envelope(&s).unwrap();
        let poly = trapezoid_sum(&s).unwrap();
        // the time-sequential region is strictly smaller here
        assert!(envelope_area(&env).unwrap() < poly.area() - 0.1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let tr = env.sample_trajectory(&mut rng);
            assert!(poly.contains((tr.0[0], tr.0[1]), FEAS_TOL));
        }
    }
}
