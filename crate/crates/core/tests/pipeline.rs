use approx::assert_abs_diff_eq;

use flexagg::disagg::{deviation_metrics, lambda_disaggregate, project_to_envelope};
use flexagg::envelope::{build_envelope, envelope_contains, linearize};
use flexagg::fixtures::table_one;
use flexagg::lp::DenseSimplex;
use flexagg::model::{AggTrajectory, Load, Scenario};
use flexagg::optimize::{minimize_cost, minimize_peak, ModelKind};
use flexagg::oracle::{membership_lp, min_deviation_disaggregation, trapezoid_sum};

#[test]
fn two_battery_example_end_to_end() {
    let s = table_one();
    let solver = DenseSimplex::default();
    let env = build_envelope(&s).unwrap();

    let request = AggTrajectory(vec![2.0, 2.0, 4.0]);
    assert!(!envelope_contains(&env, &request).unwrap().inside);
    assert!(!membership_lp(&s, &request, &solver).unwrap().feasible);

    let projected = project_to_envelope(&env, &request).unwrap();
    assert_eq!(projected.as_slice(), &[2.0, 2.0, 3.0]);
    let d = lambda_disaggregate(&s, &env, &projected).unwrap();
    assert!(s.admits(&d.individual));
    let dev = deviation_metrics(&request, &d.delivered).unwrap();
    assert_abs_diff_eq!(dev.rmse, (1.0f64 / 3.0).sqrt(), epsilon = 1e-12);

    // the LP oracle cannot do better than one unit either
    let best = min_deviation_disaggregation(&s, &request, &solver).unwrap();
    assert_abs_diff_eq!(best.l1_deviation, 1.0, epsilon = 1e-9);
    assert!(s.admits(&best.individual));
}

#[test]
fn optimized_envelope_trajectory_is_deliverable() {
    let s = table_one();
    let solver = DenseSimplex::default();
    let env = linearize(&build_envelope(&s).unwrap(), 51).unwrap();
    for r in [
        minimize_cost(&s, ModelKind::WcEnvelopeLinear, &solver).unwrap(),
        minimize_peak(&s, ModelKind::WcEnvelopeLinear, &solver).unwrap(),
    ] {
        assert!(envelope_contains(&env, &r.agg_trajectory).unwrap().inside);
        let d = lambda_disaggregate(&s, &env, &r.agg_trajectory).unwrap();
        assert!(d.max_violation <= 1e-9);
    }
}

#[test]
fn exact_two_step_sum_of_unit_batteries() {
    // two copies of a 1 kW battery with caps (1, 2): vertices verified by hand
    let load = |id| Load::new(id, 0.0, 1.0, vec![0.0, 0.0], vec![1.0, 2.0]);
    let s = Scenario::from_loads(vec![load(0), load(1)], 1.0).unwrap();
    let poly = trapezoid_sum(&s).unwrap();
    assert_abs_diff_eq!(poly.area(), 4.0, epsilon = 1e-12);
    for v in [(0.0, 0.0), (2.0, 2.0), (2.0, 4.0), (0.0, 2.0)] {
        assert!(poly.contains(v, 1e-12));
    }
    assert!(!poly.contains((1.0, 3.5), 1e-9));
}

#[test]
fn truncated_two_battery_example_is_strictly_inside_the_exact_sum() {
    let t = table_one();
    let loads = t
        .loads
        .iter()
        .map(|l| Load::new(l.id.0, l.p_min, l.p_max, l.e_min[..2].to_vec(), l.e_max[..2].to_vec()))
        .collect();
    let s = Scenario::from_loads(loads, 1.0).unwrap();
    let env = build_envelope(&s).unwrap();
    // worst split of 4/3 caps the next step at 7/3; the best split reaches 3
    assert_abs_diff_eq!(env.steps[0].upper.eval(4.0 / 3.0).unwrap(), 7.0 / 3.0, epsilon = 1e-12);
    let poly = trapezoid_sum(&s).unwrap();
    assert!(poly.contains((4.0 / 3.0, 3.0), 1e-9));
    assert_abs_diff_eq!(poly.area(), 3.5, epsilon = 1e-12);
    assert_abs_diff_eq!(env.step_area(1), 8.0 / 3.0, epsilon = 1e-9);
}

#[test]
fn single_load_envelope_is_the_load_itself() {
    let load = Load::new(3, 0.5, 2.0, vec![0.0, 1.0, 2.0, 4.0], vec![1.5, 3.0, 4.0, 5.0]);
    let s = Scenario::from_loads(vec![load.clone()], 1.0).unwrap();
    let env = build_envelope(&s).unwrap();
    for traj in [
        vec![0.5, 1.0, 2.0, 4.0],
        vec![1.5, 3.0, 4.0, 5.0],
        vec![1.0, 2.0, 3.0, 4.5],
        vec![0.4, 1.0, 2.0, 4.0],
        vec![1.5, 3.6, 4.0, 5.0],
        vec![1.0, 1.2, 3.0, 4.5],
    ] {
        let tr = AggTrajectory(traj.clone());
        assert_eq!(
            envelope_contains(&env, &tr).unwrap().inside,
            load.admits(&traj, 1.0, 1e-9),
            "{traj:?}"
        );
    }
}
