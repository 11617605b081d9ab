use contact_hjb::model::*;
use proptest::prelude::*;

fn e1() -> HamiltonianModel {
    HamiltonianModel::quadratic_contact("-3*u", "0.5*x^2", 1.0, 3.0, 8.0, 1).unwrap()
}

fn p_grid() -> Vec<f64> {
    symmetric_grid(8.0, 801)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// `p v <= H + L` everywhere, with equality at the recorded argmax.
    #[test]
    fn fenchel_young(x in -1.0f64..1.0, u in -5.0f64..5.0) {
        let m = e1();
        let vs = symmetric_grid(4.0, 41);
        let ps = p_grid();
        let row = legendre_transform(&m, [x, 0.0], u, &vs, &ps).unwrap();
        for (j, &v) in vs.iter().enumerate() {
            let l = row.finite_value(j);
            prop_assert!(l.is_finite());
            for &p in ps.iter().step_by(7) {
                let h = m.eval([x, 0.0], u, [p, 0.0]).unwrap();
                prop_assert!(p * v <= h + l + 1e-9);
            }
            let pa = row.argmax_p[j];
            let h = m.eval([x, 0.0], u, [pa, 0.0]).unwrap();
            prop_assert!((pa * v - h - l).abs() <= 1e-6);
        }
    }

    /// Discrete transform within `2 dp^2` of the closed form.
    #[test]
    fn tabulated_matches_closed_form(x in -1.0f64..1.0, u in -5.0f64..5.0) {
        let m = e1();
        let lag = LagrangianModel::from_hamiltonian(&m, LegendreOptions { v_max: 4.0, v_count: 81 }).unwrap();
        let vs = symmetric_grid(4.0, 81);
        let ps = p_grid();
        let dp = ps[1] - ps[0];
        let row = legendre_transform(&m, [x, 0.0], u, &vs, &ps).unwrap();
        for (j, &v) in vs.iter().enumerate() {
            prop_assume!(!row.edge_active[j]);
            let exact = lag.eval([x, 0.0], u, [v, 0.0]).unwrap();
            prop_assert!((row.values[j] - exact).abs() <= 2.0 * dp * dp, "v={v}: {} vs {exact}", row.values[j]);
        }
    }

    /// `L` convex in `v` wherever finite.
    #[test]
    fn lagrangian_convex_in_v(x in -1.0f64..1.0, u in -5.0f64..5.0) {
        let row = legendre_transform(&e1(), [x, 0.0], u, &symmetric_grid(4.0, 81), &p_grid()).unwrap();
        for k in 1..row.values.len() - 1 {
            let (a, b, c) = (row.finite_value(k - 1), row.finite_value(k), row.finite_value(k + 1));
            if a.is_finite() && b.is_finite() && c.is_finite() {
                prop_assert!(b <= 0.5 * (a + c) + 1e-9);
            }
        }
    }

    /// `|L(x,u,v) - L(x,u',v)| <= lambda |u - u'|`.
    #[test]
    fn lagrangian_u_lipschitz(x in -1.0f64..1.0, u1 in -10.0f64..10.0, u2 in -10.0f64..10.0, v in -4.0f64..4.0) {
        let m = HamiltonianModel::quadratic_contact("sin(u)", "0.5*x^2", 1.0, 1.0, 8.0, 1).unwrap();
        let lag = LagrangianModel::from_hamiltonian(&m, LegendreOptions { v_max: 4.0, v_count: 81 }).unwrap();
        let a = lag.eval([x, 0.0], u1, [v, 0.0]).unwrap();
        let b = lag.eval([x, 0.0], u2, [v, 0.0]).unwrap();
        prop_assert!((a - b).abs() <= (u1 - u2).abs() * (1.0 + 1e-9) + 1e-12);
    }
}

/// A coercive but not superlinear `H` gives `+inf` entries; the finite set
/// must not depend on `u`.
#[test]
fn finiteness_mask_independent_of_u() {
    let table = HamiltonianTable::sample(
        symmetric_grid(1.0, 5),
        symmetric_grid(3.0, 7),
        symmetric_grid(4.0, 401),
        |x, u, p| (1.0 + p * p).sqrt() - 0.5 * u.sin() + x * x,
    )
    .unwrap();
    let m = HamiltonianModel::tabulated(table, 0.5).unwrap();
    let lag = LagrangianModel::from_hamiltonian(&m, LegendreOptions { v_max: 2.0, v_count: 41 }).unwrap();
    let t = lag.table().unwrap();
    let mut saw_infinite = false;
    for ix in 0..t.xs.len() {
        let first = t.row_mask(ix, 0);
        saw_infinite |= first.iter().any(|f| !f);
        for iu in 1..t.us.len() {
            assert_eq!(t.row_mask(ix, iu), first, "mask differs at x={} u={}", t.xs[ix], t.us[iu]);
        }
    }
    assert!(saw_infinite, "|v| > 1 must be outside dom(L)");
    assert!(lag.eval([0.0, 0.0], 0.0, [1.5, 0.0]).unwrap().is_infinite());
    assert!(lag.eval([0.0, 0.0], 0.0, [0.5, 0.0]).unwrap().is_finite());
}

#[test]
fn lipschitz_validation_examples() {
    let r = validate_lipschitz(&e1(), 21).unwrap();
    assert!(r.pass);
    assert!((r.max_slope - 3.0).abs() < 1e-9);
    let m = HamiltonianModel::quadratic_contact("sin(u)", "0", 1.0, 1.0, 8.0, 1).unwrap();
    assert!(validate_lipschitz(&m, 101).unwrap().pass);
    let m = HamiltonianModel::quadratic_contact("u^2", "0", 1.0, 1.0, 8.0, 1).unwrap();
    let r = validate_lipschitz(&m, 21).unwrap();
    assert!(!r.pass);
    let w = r.witness.unwrap();
    assert!(w.slope > 1.0 && w.u1.abs().max(w.u2.abs()) > 0.5);
}

#[test]
fn non_convex_table_rejected() {
    let table = HamiltonianTable::sample(
        symmetric_grid(1.0, 3),
        symmetric_grid(1.0, 3),
        symmetric_grid(2.0, 41),
        |_, _, p| -p * p,
    )
    .unwrap();
    let m = HamiltonianModel::tabulated(table, 0.0).unwrap();
    assert!(matches!(m.check_convexity(5), Err(ModelError::NonConvex { .. })));
    assert!(LagrangianModel::from_hamiltonian(&m, LegendreOptions { v_max: 1.0, v_count: 11 }).is_err());
}
