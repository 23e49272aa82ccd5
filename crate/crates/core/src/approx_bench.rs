//! Benchmark inner approximations: per-load largest homothets of a common
//! prototype and per-load largest zonotopes over a shared generator set,
//! both summed in closed form.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{LpError, LpProblem, LpSolver, LpStatus, Relation};
use crate::model::{tighten_bounds, AggTrajectory, Load, LoadId, ModelError, Scenario, FEAS_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] LpError),
    #[error("prototype polytope has empty interior (inradius {0:.3e})")]
    DegeneratePrototype(f64),
    #[error("scenario has no loads")]
    Empty,
    #[error("containment LP for load {id} ended {status:?}")]
    Lp { id: LoadId, status: LpStatus },
}

/// `{x : a_r . x <= b_r for all r}` over the T energy coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceSet {
    pub rows: Vec<(Vec<f64>, f64)>,
}

impl HalfspaceSet {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.0.len())
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|(a, b)| a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() - b)
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.max_violation(x) <= tol
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Row normals of every load polytope: per step `k` the increments
/// `e_k - e_{k-1}` from above and below, then `e_k` from above and below.
fn canonical_normals(t: usize) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(4 * t);
    for k in 0..t {
        let mut inc = vec![0.0; t];
        inc[k] = 1.0;
        if k > 0 {
            inc[k - 1] = -1.0;
        }
        let mut level = vec![0.0; t];
        level[k] = 1.0;
        rows.push(inc.clone());
        rows.push(inc.iter().map(|v| -v).collect());
        rows.push(level.clone());
        rows.push(level.iter().map(|v| -v).collect());
    }
    rows
}

/// Right-hand sides matching [`canonical_normals`].
fn canonical_rhs(load: &Load, dt: f64) -> Vec<f64> {
    (0..load.horizon())
        .flat_map(|k| [dt * load.p_max, -dt * load.p_min, load.e_max[k], -load.e_min[k]])
        .collect()
}

/// Support function of a tightened load polytope along the canonical
/// normals.
fn canonical_support(load: &Load, dt: f64) -> Vec<f64> {
    (0..load.horizon())
        .flat_map(|k| {
            let (prev_lo, prev_hi) = if k == 0 { (0.0, 0.0) } else { (load.e_min[k - 1], load.e_max[k - 1]) };
            [
                (dt * load.p_max).min(load.e_max[k] - prev_lo),
                -(dt * load.p_min).max(load.e_min[k] - prev_hi),
                load.e_max[k],
                -load.e_min[k],
            ]
        })
        .collect()
}

/// Load whose ratings and bounds are the means over the scenario.
pub fn mean_load(scenario: &Scenario) -> Result<Load, ApproxError> {
    let n = scenario.n_loads();
    if n == 0 {
        return Err(ApproxError::Empty);
    }
    let t = scenario.horizon;
    let inv = 1.0 / n as f64;
    let mean = |f: &dyn Fn(&Load) -> f64| scenario.loads.iter().map(f).sum::<f64>() * inv;
    let proto = Load::new(
        u32::MAX,
        mean(&|l| l.p_min),
        mean(&|l| l.p_max),
        (0..t).map(|k| mean(&|l| l.e_min[k])).collect(),
        (0..t).map(|k| mean(&|l| l.e_max[k])).collect(),
    );
    Ok(tighten_bounds(&proto, scenario.dt)?)
}

/// Radius of the largest ball inside `{A x <= b}`.
fn inradius(normals: &[Vec<f64>], rhs: &[f64], solver: &dyn LpSolver) -> Result<f64, ApproxError> {
    let t = normals[0].len();
    let mut lp = LpProblem::new(0);
    let x: Vec<usize> = (0..t).map(|_| lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY)).collect();
    let r = lp.add_var(-1.0, 0.0, f64::INFINITY);
    for (a, &b) in normals.iter().zip(rhs) {
        let norm = dot(a, a).sqrt();
        let mut coeffs: Vec<(usize, f64)> = a.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (x[j], v)).collect();
        coeffs.push((r, norm));
        lp.add_constraint(coeffs, Relation::Le, b);
    }
    let sol = solver.solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.x[r]),
        LpStatus::Infeasible => Ok(0.0),
        LpStatus::Unbounded => Ok(f64::INFINITY),
    }
}

/// Per-load and aggregate homothets of the prototype.
#[derive(Debug, Clone, PartialEq)]
pub struct HomothetApprox {
    pub prototype: Load,
    pub betas: Vec<f64>,
    pub translations: Vec<Vec<f64>>,
    pub aggregate: HalfspaceSet,
}

impl HomothetApprox {
    pub fn beta_sum(&self) -> f64 {
        self.betas.iter().sum()
    }

    /// Random aggregate point: a random prototype trajectory scaled by the
    /// total factor and shifted by the total translation.
    pub fn sample<R: Rng>(&self, dt: f64, rng: &mut R) -> AggTrajectory {
        let beta = self.beta_sum();
        let t = self.prototype.horizon();
        let shift: Vec<f64> = (0..t).map(|k| self.translations.iter().map(|v| v[k]).sum()).collect();
        let p = sample_load_trajectory(&self.prototype, dt, rng);
        AggTrajectory(p.iter().zip(&shift).map(|(x, s)| beta * x + s).collect())
    }
}

/// Random trajectory of a tightened load; endpoints are drawn with
/// probability 1/4 each so boundary points get exercised.
pub fn sample_load_trajectory<R: Rng>(load: &Load, dt: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(load.horizon());
    let mut prev = 0.0;
    for k in 0..load.horizon() {
        let lo = load.e_min[k].max(prev + dt * load.p_min);
        let hi = load.e_max[k].min(prev + dt * load.p_max).max(lo);
        let x = match rng.gen_range(0..4) {
            0 => lo,
            1 => hi,
            _ if hi > lo => rng.gen_range(lo..=hi),
            _ => lo,
        };
        out.push(x);
        prev = x;
    }
    out
}

/// Largest homothet of the mean load inside each load, summed.
pub fn homothet_approx(scenario: &Scenario, solver: &dyn LpSolver) -> Result<HomothetApprox, ApproxError> {
    let s = scenario.tightened()?;
    let proto = mean_load(&s)?;
    let t = s.horizon;
    let dt = s.dt;
    let normals = canonical_normals(t);
    let proto_rhs = canonical_rhs(&proto, dt);
    let radius = inradius(&normals, &proto_rhs, solver)?;
    if radius <= FEAS_TOL {
        return Err(ApproxError::DegeneratePrototype(radius));
    }
    let h = canonical_support(&proto, dt);
    let mut betas = Vec::with_capacity(s.n_loads());
    let mut translations = Vec::with_capacity(s.n_loads());
    for load in &s.loads {
        let b = canonical_rhs(load, dt);
        let mut lp = LpProblem::new(0);
        let beta = lp.add_var(-1.0, 0.0, f64::INFINITY);
        let tv: Vec<usize> = (0..t).map(|_| lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY)).collect();
        for ((a, &hr), &br) in normals.iter().zip(&h).zip(&b) {
            let mut coeffs = vec![(beta, hr)];
            coeffs.extend(a.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (tv[j], v)));
            lp.add_constraint(coeffs, Relation::Le, br);
        }
        let sol = solver.solve(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(ApproxError::Lp {
                id: load.id,
                status: sol.status,
            });
        }
        betas.push(sol.x[beta].max(0.0));
        translations.push(tv.iter().map(|&j| sol.x[j]).collect::<Vec<f64>>());
    }
    let total: f64 = betas.iter().sum();
    let shift: Vec<f64> = (0..t).map(|k| translations.iter().map(|v: &Vec<f64>| v[k]).sum()).collect();
    let aggregate = HalfspaceSet {
        rows: normals
            .iter()
            .zip(&proto_rhs)
            .map(|(a, &b)| (a.clone(), total * b + dot(a, &shift)))
            .collect(),
    };
    Ok(HomothetApprox {
        prototype: proto,
        betas,
        translations,
        aggregate,
    })
}

/// Zonotope `center + sum_g alpha_g * scales[g] * g`, `alpha in [-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonotopeApprox {
    pub center: Vec<f64>,
    /// Shared generator directions: the T energy axes, then the
    /// constant-power ramp `dt * (1, 2, ..., T)`.
    pub generators: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
}

impl ZonotopeApprox {
    pub fn point(&self, alpha: &[f64]) -> Vec<f64> {
        let mut x = self.center.clone();
        for ((g, &s), &a) in self.generators.iter().zip(&self.scales).zip(alpha) {
            for (xi, gi) in x.iter_mut().zip(g) {
                *xi += a * s * gi;
            }
        }
        x
    }

    /// Random point; each coefficient is an endpoint with probability 1/2.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> AggTrajectory {
        let alpha: Vec<f64> = (0..self.generators.len())
            .map(|_| match rng.gen_range(0..4) {
                0 => -1.0,
                1 => 1.0,
                _ => rng.gen_range(-1.0..=1.0),
            })
            .collect();
        AggTrajectory(self.point(&alpha))
    }
}

/// Generator dictionary shared by all loads.
pub fn zonotope_generators(t: usize, dt: f64) -> Vec<Vec<f64>> {
    let mut g: Vec<Vec<f64>> = (0..t)
        .map(|k| {
            let mut v = vec![0.0; t];
            v[k] = 1.0;
            v
        })
        .collect();
    g.push((0..t).map(|k| dt * (k + 1) as f64).collect());
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZonotopeResult {
    pub individual: Vec<ZonotopeApprox>,
    pub aggregate: ZonotopeApprox,
}

/// Largest zonotope over the shared generators inside each load, summed.
pub fn zonotope_approx(scenario: &Scenario, solver: &dyn LpSolver) -> Result<ZonotopeResult, ApproxError> {
    let s = scenario.tightened()?;
    if s.n_loads() == 0 {
        return Err(ApproxError::Empty);
    }
    let t = s.horizon;
    let dt = s.dt;
    let normals = canonical_normals(t);
    let generators = zonotope_generators(t, dt);
    let weights: Vec<Vec<f64>> = normals
        .iter()
        .map(|a| generators.iter().map(|g| dot(a, g).abs()).collect())
        .collect();
    let mut individual = Vec::with_capacity(s.n_loads());
    for load in &s.loads {
        let b = canonical_rhs(load, dt);
        let mut lp = LpProblem::new(0);
        let c: Vec<usize> = (0..t).map(|k| lp.add_var(0.0, load.e_min[k], load.e_max[k])).collect();
        let sc: Vec<usize> = generators.iter().map(|_| lp.add_var(-1.0, 0.0, f64::INFINITY)).collect();
        for ((a, w), &br) in normals.iter().zip(&weights).zip(&b) {
            let mut coeffs: Vec<(usize, f64)> =
                a.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (c[j], v)).collect();
            coeffs.extend(w.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(g, &v)| (sc[g], v)));
            lp.add_constraint(coeffs, Relation::Le, br);
        }
        let sol = solver.solve(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(ApproxError::Lp {
                id: load.id,
                status: sol.status,
            });
        }
        individual.push(ZonotopeApprox {
            center: c.iter().map(|&j| sol.x[j]).collect(),
            generators: generators.clone(),
            scales: sc.iter().map(|&j| sol.x[j].max(0.0)).collect(),
        });
    }
    let aggregate = ZonotopeApprox {
        center: (0..t).map(|k| individual.iter().map(|z| z.center[k]).sum()).collect(),
        generators: generators.clone(),
        scales: (0..generators.len()).map(|g| individual.iter().map(|z| z.scales[g]).sum()).collect(),
    };
    Ok(ZonotopeResult { individual, aggregate })
}
