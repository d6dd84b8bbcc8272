mod common;

use liectl_core::group::{AlgebraVector, Family, GroupElement, GroupSpec};
use proptest::prelude::*;

fn element(g: &GroupSpec, c: &[f64]) -> GroupElement {
    let mut c = c[..g.dim()].to_vec();
    if matches!(g.family(), Family::Se2) {
        // keep the angle strictly inside the chart
        c[2] = c[2].clamp(-3.0, 3.0);
    }
    g.exp_chart(&AlgebraVector::from_slice(&c)).unwrap()
}

fn coords() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 6)
}

fn close(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>, tol: f64) -> bool {
    (a - b).amax() <= tol * (1.0 + a.amax())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn product_is_the_matrix_product(a in coords(), b in coords(), c in coords()) {
        for g in common::groups() {
            let (x, y, z) = (element(&g, &a), element(&g, &b), element(&g, &c));
            let xy = g.multiply(&x, &y).unwrap();
            prop_assert!(close(xy.matrix(), &(x.matrix() * y.matrix()), 1e-12));
            let left = g.multiply(&xy, &z).unwrap();
            let right = g.multiply(&x, &g.multiply(&y, &z).unwrap()).unwrap();
            prop_assert!(g.distance_total(&left, &right).unwrap() < 1e-9);
        }
    }

    #[test]
    fn inverse_and_identity(a in coords()) {
        for g in common::groups() {
            let x = element(&g, &a);
            let e = g.identity();
            let xi = g.inverse(&x).unwrap();
            prop_assert!(g.norm_from_identity(&g.multiply(&x, &xi).unwrap()).unwrap() < 1e-10);
            prop_assert!(g.norm_from_identity(&g.multiply(&xi, &x).unwrap()).unwrap() < 1e-10);
            prop_assert!(g.distance_total(&g.multiply(&e, &x).unwrap(), &x).unwrap() < 1e-12);
        }
    }

    #[test]
    fn exp_is_the_matrix_exponential(a in coords()) {
        for g in common::groups() {
            let v = AlgebraVector::from_slice(&a[..g.dim()]);
            let m = g.algebra_matrix(&v).unwrap().exp();
            let x = g.exp_chart(&v).unwrap();
            prop_assert!(close(x.matrix(), &m, 1e-11));
        }
    }

    #[test]
    fn log_inverts_exp(a in coords()) {
        for g in common::groups() {
            let x = element(&g, &a);
            let back = g.exp_chart(&g.log_chart(&x).unwrap()).unwrap();
            prop_assert!(g.distance_total(&back, &x).unwrap() < 1e-10);
        }
    }

    #[test]
    fn bch_agrees_with_the_product(a in coords(), b in coords()) {
        for g in [GroupSpec::heisenberg(), common::n4()] {
            let (x, y) = (element(&g, &a), element(&g, &b));
            let p = g.multiply(&x, &y).unwrap();
            let q = g.bch_multiply(&x, &y).unwrap();
            prop_assert!((p.coords() - q.coords()).amax() < 1e-10 * (1.0 + p.coords().amax()));
        }
    }

    #[test]
    fn distance_is_left_invariant(a in coords(), b in coords(), c in coords()) {
        for g in common::groups() {
            let (x, y, z) = (element(&g, &a), element(&g, &b), element(&g, &c));
            let d = g.distance_total(&x, &y).unwrap();
            let dz = g.distance_total(&g.multiply(&z, &x).unwrap(), &g.multiply(&z, &y).unwrap()).unwrap();
            prop_assert!((d - dz).abs() < 1e-8 * (1.0 + d));
        }
    }

    #[test]
    fn embedding_bounds_distance_from_below(a in coords(), b in coords()) {
        for g in common::groups() {
            let (x, y) = (element(&g, &a), element(&g, &b));
            let lower = (g.lower_bound_embedding(&x) - g.lower_bound_embedding(&y)).norm();
            let d = g.distance_from(&x).unwrap().to(&y);
            prop_assert!(lower <= d + 1e-9 * (1.0 + d), "{lower} > {d}");
            prop_assert!((d - g.distance_total(&x, &y).unwrap()).abs() < 1e-9 * (1.0 + d));
        }
    }

    #[test]
    fn bracket_is_the_commutator(a in coords(), b in coords()) {
        for g in common::groups() {
            let v = AlgebraVector::from_slice(&a[..g.dim()]);
            let w = AlgebraVector::from_slice(&b[..g.dim()]);
            let (mv, mw) = (g.algebra_matrix(&v).unwrap(), g.algebra_matrix(&w).unwrap());
            let br = g.algebra_matrix(&g.bracket(&v, &w).unwrap()).unwrap();
            prop_assert!(close(&br, &(&mv * &mw - &mw * &mv), 1e-12));
        }
    }

    #[test]
    fn adjoint_is_conjugation(a in coords(), b in coords()) {
        for g in common::groups() {
            let y = element(&g, &a);
            let v = AlgebraVector::from_slice(&b[..g.dim()]);
            let ad = g.adjoint(&y).unwrap();
            let lhs = g.algebra_matrix(&AlgebraVector::new(&ad * v.coeffs())).unwrap();
            let rhs = y.matrix() * g.algebra_matrix(&v).unwrap() * g.inverse(&y).unwrap().matrix();
            prop_assert!(close(&lhs, &rhs, 1e-10));
        }
    }
}
