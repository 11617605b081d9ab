use contact_hjb::grid::{GridFunction, PeriodicGrid};
use contact_hjb::model::{HamiltonianModel, LagrangianModel, LegendreOptions};
use contact_hjb::semigroup::{picard, t_minus, Scheme, SchemeParams};
use contact_hjb::weakkam::*;
use proptest::prelude::*;
use std::f64::consts::PI;

fn setup(coupling: &str, potential: &str, lambda: f64, n: usize) -> (LagrangianModel, Scheme) {
    let h = HamiltonianModel::quadratic_contact(coupling, potential, 1.0, lambda, 8.0, 1).unwrap();
    let lag = LagrangianModel::from_hamiltonian(&h, LegendreOptions { v_max: 4.0, v_count: 41 }).unwrap();
    let grid = PeriodicGrid::circle(2.0, n).unwrap();
    let params = SchemeParams {
        dt: 0.64 / n as f64,
        v_max: 4.0,
        velocity_count: 41,
        ..SchemeParams::default()
    };
    (lag, Scheme::new(grid, params).unwrap())
}

/// `u`-independent control: critical value 0, Aubry set `{0}`.
fn control() -> (LagrangianModel, Scheme) {
    setup("0", "cos(3.14159265358979*x) - 1", 0.0, 128)
}

fn opts() -> LimitOptions {
    LimitOptions {
        chunk: 1.0,
        max_horizon: 40.0,
        tol_limit: 1e-10,
        blowup: 1e6,
    }
}

#[test]
fn control_case_pair_and_aubry_set() {
    let (lag, s) = control();
    let grid = *s.grid();
    let h = grid.spacing(0);
    let report = long_time(&GridFunction::constant(grid, 0.0), &opts(), &lag, &s).unwrap();
    assert_eq!(report.status, LimitStatus::Converged);
    let u_minus = report.limit.unwrap();
    let pair = conjugate_pair(
        &u_minus,
        &PairOptions {
            limit: LimitOptions { tol_limit: 1e-8, ..opts() },
            residual_tol: 1e-9,
        },
        &lag,
        &s,
    )
    .unwrap();
    // first-order defect at the Aubry point, see semigroup_laws
    assert!(pair.max_excess <= 3.0 * h, "{}", pair.max_excess);
    let eta = 3.0 * h;
    let aubry = aubry_equality_set(&pair, eta).unwrap();
    assert!(!aubry.nodes.is_empty());
    assert!(aubry.points().iter().all(|p| p[0].abs() <= 0.35), "{:?}", aubry.points());
    assert!(aubry.points().iter().any(|p| p[0].abs() < 1e-12));

    let (field, _) = picard(&u_minus, 1.0, &lag, &s).unwrap();
    for x0 in [-0.8, 0.3, 0.7, 1.0] {
        let curve = trace_stationary(&field, [x0, 0.0], 24.0, TraceMode::Continuous).unwrap();
        assert!(curve.velocities.iter().all(|v| v[0].abs() <= 4.0));
        let alpha = alpha_limit(&curve, &grid, 0.25, 2.0 * h).unwrap();
        assert!(!alpha.is_empty());
        for a in alpha {
            let near = aubry.points().iter().any(|&b| grid.distance(a, b) <= 2.0 * h);
            assert!(near, "x0={x0}: alpha point {a:?} outside the Aubry estimate");
        }
    }
}

#[test]
fn nearest_node_trace_stays_on_nodes() {
    let (lag, s) = control();
    let grid = *s.grid();
    let u = GridFunction::from_fn(grid, |p| (PI * p[0]).cos());
    let (field, _) = picard(&u, 0.5, &lag, &s).unwrap();
    let curve = trace_minimizer(&field, [0.4, 0.0], 0.5, TraceMode::NearestNode).unwrap();
    assert_eq!(curve.points.len(), field.n_steps() + 1);
    for p in &curve.points[1..] {
        let node = grid.node(grid.nearest_node(*p));
        assert!(grid.distance(*p, node) < 1e-12);
    }
    // consecutive points follow the recorded velocity up to the snap
    let mut snapped = 0.0;
    for k in 0..curve.velocities.len() {
        let (a, b) = (curve.points[k], curve.points[k + 1]);
        let foot = grid.wrap([a[0] - curve.velocities[k][0] * s.dt(), 0.0]);
        snapped += grid.distance(foot, b);
    }
    assert!((snapped - curve.snap_distance).abs() < 1e-9);
}

/// For `H = p^2/2` minimisers are straight lines.
#[test]
fn free_minimisers_are_straight() {
    let (lag, s) = setup("0", "0", 0.0, 256);
    let grid = *s.grid();
    let phi = GridFunction::from_fn(grid, |p| 0.3 * (PI * p[0]).cos());
    let t = 0.5;
    let (field, _) = picard(&phi, t, &lag, &s).unwrap();
    let dv = s.velocity_spacing();
    for x in [-0.6, -0.2, 0.25, 0.55] {
        let curve = trace_minimizer(&field, [x, 0.0], t, TraceMode::Continuous).unwrap();
        let v0 = curve.velocities[0][0];
        assert!(v0.abs() > 0.05, "x={x}: v={v0}");
        for v in &curve.velocities {
            assert!((v[0] - v0).abs() <= dv, "x={x}: {} vs {v0}", v[0]);
        }
        let end = *curve.points.last().unwrap();
        let straight = grid.wrap([x - v0 * t, 0.0]);
        assert!(grid.distance(end, straight) <= dv * t + 2.0 * grid.spacing(0));
    }
}

#[test]
fn half_limit_is_near_stationary() {
    // discounted problem: T^- contracts, limits exist
    let (lag, s) = setup("u", "0.5*(1 - cos(3.14159265358979*x))", 1.0, 128);
    let phi = GridFunction::from_fn(*s.grid(), |p| (2.0 * PI * p[0]).sin());
    let o = LimitOptions { tol_limit: 1e-6, ..opts() };
    let report = long_time(&phi, &o, &lag, &s).unwrap();
    assert_eq!(report.status, LimitStatus::Converged);
    let half = half_limit(&report).unwrap();
    let limit_residual = backward_residual(report.limit.as_ref().unwrap(), o.chunk, &lag, &s).unwrap();
    let half_residual = backward_residual(&half, o.chunk, &lag, &s).unwrap();
    assert!(limit_residual <= o.tol_limit);
    // the ring minimum moves the limit by O(h); T^- contracts it back
    let h = s.grid().spacing(0);
    assert!(half_residual <= 5.0 * h, "{half_residual}");
}

#[test]
fn existence_scan_separates_cases() {
    let (lag, s) = setup("-u", "0", 1.0, 32);
    let r = existence_scan(&[-1.0, 0.0, 1.0], &LimitOptions { max_horizon: 32.0, ..opts() }, &lag, &s).unwrap();
    assert!(r.solutions_exist && r.criteria_agree);
    assert_eq!(r.entries[1].status, LimitStatus::Converged);
    assert_eq!(r.entries[0].status, LimitStatus::Unbounded);
    assert_eq!(r.entries[2].status, LimitStatus::Unbounded);
    // H = p^2/2 + 1 has no stationary solution
    let (lag, s) = setup("0", "1", 0.0, 32);
    let r = existence_scan(&[0.0], &LimitOptions { max_horizon: 8.0, ..opts() }, &lag, &s).unwrap();
    assert!(!r.solutions_exist);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Without `u` dependence, adding a constant shifts the whole evolution.
    #[test]
    fn long_time_commutes_with_constants(c in -5.0f64..5.0, a in -0.5f64..0.5) {
        let (lag, s) = setup("0", "cos(3.14159265358979*x) - 1", 0.0, 32);
        let phi = GridFunction::from_fn(*s.grid(), |p| a * (PI * p[0]).sin());
        let o = LimitOptions { max_horizon: 24.0, tol_limit: 1e-9, ..opts() };
        let base = long_time(&phi, &o, &lag, &s).unwrap();
        let shifted = long_time(&phi.map(|v| v + c), &o, &lag, &s).unwrap();
        prop_assert_eq!(base.status, shifted.status);
        prop_assert_eq!(base.status, LimitStatus::Converged);
        let (l0, l1) = (base.limit.unwrap(), shifted.limit.unwrap());
        for (x, y) in l0.values().iter().zip(l1.values()) {
            prop_assert!((y - x - c).abs() <= 1e-9 * (1.0 + c.abs()));
        }
        let t = t_minus(&phi, 0.5, &lag, &s).unwrap();
        let tc = t_minus(&phi.map(|v| v + c), 0.5, &lag, &s).unwrap();
        prop_assert!(t.map(|v| v + c).sup_norm_diff(&tc).unwrap() <= 1e-9 * (1.0 + c.abs()));
    }
}
