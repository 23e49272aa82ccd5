//! Sequential disaggregation of an aggregate trajectory into individual
//! trajectories, plus projection of infeasible requests onto the envelope.

use thiserror::Error;

use crate::envelope::{Envelope, EnvelopeError};
use crate::model::{AggTrajectory, LoadTrajectory, ModelError, Scenario, FEAS_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisaggError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error("step {k}: aggregate {value} outside reachable range [{lo}, {hi}]")]
    Bracket { k: usize, value: f64, lo: f64, hi: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisaggResult {
    pub individual: LoadTrajectory,
    pub delivered: AggTrajectory,
    /// Interpolation weight per step; 0 selects the upper end, 1 the lower.
    pub lambdas: Vec<f64>,
    /// Largest individual constraint violation (kWh).
    pub max_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub rmse: f64,
    pub l1: f64,
    pub linf: f64,
}

/// Splits `traj` across loads step by step. At every step each load is
/// placed at the same fraction between its lowest and highest reachable
/// energy given its own previous energy.
pub fn lambda_disaggregate(
    scenario: &Scenario,
    envelope: &Envelope,
    traj: &AggTrajectory,
) -> Result<DisaggResult, DisaggError> {
    if traj.len() != scenario.horizon || envelope.horizon != scenario.horizon {
        return Err(DisaggError::LengthMismatch {
            left: traj.len(),
            right: scenario.horizon,
        });
    }
    let s = scenario.tightened()?;
    let dt = s.dt;
    let n = s.n_loads();
    let t = s.horizon;
    let mut rows = vec![Vec::with_capacity(t); n];
    let mut lambdas = Vec::with_capacity(t);
    let mut down = vec![0.0; n];
    let mut up = vec![0.0; n];
    for (k, &target) in traj.as_slice().iter().enumerate() {
        for (i, l) in s.loads.iter().enumerate() {
            let prev = if k == 0 { 0.0 } else { rows[i][k - 1] };
            down[i] = l.e_min[k].max(prev + dt * l.p_min);
            up[i] = l.e_max[k].min(prev + dt * l.p_max);
        }
        let lo: f64 = down.iter().sum();
        let hi: f64 = up.iter().sum();
        let slack = FEAS_TOL * (1.0 + target.abs());
        if target < lo - slack || target > hi + slack {
            return Err(DisaggError::Bracket { k, value: target, lo, hi });
        }
        let lambda = if hi - lo > 0.0 {
            ((hi - target) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        for i in 0..n {
            rows[i].push(lambda * down[i] + (1.0 - lambda) * up[i]);
        }
        lambdas.push(lambda);
    }
    let individual = LoadTrajectory { rows };
    let delivered = individual.aggregate();
    let max_violation = scenario
        .loads
        .iter()
        .zip(&individual.rows)
        .map(|(l, e)| l.max_violation(e, dt))
        .fold(0.0, f64::max);
    Ok(DisaggResult {
        individual,
        delivered,
        lambdas,
        max_violation,
    })
}

/// Greedy forward clamp of `request` into the envelope.
pub fn project_to_envelope(envelope: &Envelope, request: &AggTrajectory) -> Result<AggTrajectory, DisaggError> {
    if request.len() != envelope.horizon {
        return Err(DisaggError::LengthMismatch {
            left: request.len(),
            right: envelope.horizon,
        });
    }
    let e = request.as_slice();
    let mut out = Vec::with_capacity(e.len());
    if e.is_empty() {
        return Ok(AggTrajectory(out));
    }
    let mut prev = envelope.init_interval.clamp(e[0]);
    out.push(prev);
    for step in &envelope.steps {
        let lo = step.lower.eval_clamped(prev).max(step.interval.lo);
        let hi = step.upper.eval_clamped(prev).min(step.interval.hi).max(lo);
        prev = e[step.k].clamp(lo, hi);
        out.push(prev);
    }
    Ok(AggTrajectory(out))
}

pub fn deviation_metrics(request: &AggTrajectory, delivered: &AggTrajectory) -> Result<Deviation, DisaggError> {
    if request.len() != delivered.len() {
        return Err(DisaggError::LengthMismatch {
            left: request.len(),
            right: delivered.len(),
        });
    }
    let n = request.len().max(1) as f64;
    let diffs = request.as_slice().iter().zip(delivered.as_slice()).map(|(a, b)| (a - b).abs());
    let (sq, l1, linf) = diffs.fold((0.0, 0.0, 0.0_f64), |(sq, l1, m), d| (sq + d * d, l1 + d, m.max(d)));
    Ok(Deviation {
        rmse: (sq / n).sqrt(),
        l1,
        linf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::build_envelope;
    use crate::fixtures::table_one;
    use approx::assert_abs_diff_eq;

    #[test]
    fn table_one_witness() {
        let s = table_one();
        let env = build_envelope(&s).unwrap();
        let r = lambda_disaggregate(&s, &env, &vec![2.0, 2.0, 3.0].into()).unwrap();
        assert_eq!(r.individual.rows[0], vec![1.0, 1.0, 2.0]);
        assert_eq!(r.individual.rows[1], vec![1.0, 1.0, 1.0]);
        assert_eq!(r.lambdas, vec![0.0, 1.0, 0.0]);
        assert_eq!(r.max_violation, 0.0);
        assert_eq!(r.delivered.as_slice(), &[2.0, 2.0, 3.0]);
    }

    #[test]
    fn table_one_rejects_extra_energy() {
        let s = table_one();
        let env = build_envelope(&s).unwrap();
        match lambda_disaggregate(&s, &env, &vec![2.0, 2.0, 4.0].into()) {
            Err(DisaggError::Bracket { k, hi, .. }) => {
                assert_eq!(k, 2);
                assert_abs_diff_eq!(hi, 3.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_request() {
        let s = table_one();
        let env = build_envelope(&s).unwrap();
        let r = lambda_disaggregate(&s, &env, &vec![0.0; 3].into()).unwrap();
        assert!(r.individual.rows.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(r.lambdas, vec![1.0; 3]);
    }

    #[test]
    fn projection() {
        let env = build_envelope(&table_one()).unwrap();
        let p = project_to_envelope(&env, &vec![2.0, 2.0, 4.0].into()).unwrap();
        assert_eq!(p.as_slice(), &[2.0, 2.0, 3.0]);
        let inside: AggTrajectory = vec![1.0, 2.0, 2.5].into();
        assert_eq!(project_to_envelope(&env, &inside).unwrap(), inside);
        let low = project_to_envelope(&env, &vec![-5.0; 3].into()).unwrap();
        assert_eq!(low.as_slice(), &[0.0; 3]);
        assert_eq!(project_to_envelope(&env, &p).unwrap(), p);
    }

    #[test]
    fn metrics() {
        let d = deviation_metrics(&vec![2.0, 2.0, 4.0].into(), &vec![2.0, 2.0, 3.0].into()).unwrap();
        assert_abs_diff_eq!(d.rmse, (1.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        let d = deviation_metrics(&vec![1.0, 1.0].into(), &vec![0.0, 0.0].into()).unwrap();
        assert_eq!((d.rmse, d.l1, d.linf), (1.0, 2.0, 1.0));
        assert!(matches!(
            deviation_metrics(&vec![1.0].into(), &vec![0.0, 0.0].into()),
            Err(DisaggError::LengthMismatch { .. })
        ));
    }
}
