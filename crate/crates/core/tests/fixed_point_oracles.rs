mod common;

use liectl_core::control::{rng_for, PwcControl};
use liectl_core::fixed_point::{
    f_psi, f_psi_inverse, sample_g0, x_of_general, x_of_periodic, FixedPointOptions, HyperbolicAuto,
};
use liectl_core::flow::{automorphism_flow, direct_solution, solution, StepOptions, SystemSpec};
use liectl_core::group::{AlgebraVector, GroupElement, GroupSpec};
use liectl_core::spectral::{decompose_element, DynSplit};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn quiet() -> FixedPointOptions {
    FixedPointOptions {
        compute_orbit: false,
        fiber_range: 0,
        ..Default::default()
    }
}

/// `−∫₀^∞ e^{−s} u(s) ds` for `x' = x + u`, exact on each constant piece.
fn scalar_bounded_point(u: &PwcControl, horizon: f64) -> f64 {
    let mut cuts = vec![0.0];
    cuts.extend(u.breakpoints_in(0.0, horizon));
    cuts.push(horizon);
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        let c = u.evaluate(0.5 * (w[0] + w[1]))[0];
        acc += c * ((-w[0]).exp() - (-w[1]).exp());
    }
    -acc
}

#[test]
fn scalar_periodic_matches_closed_form() {
    let sc = common::scenario("scalar_a1");
    for seed in 0..10 {
        let tau = 1.0 + 0.2 * seed as f64;
        let u = common::periodic_control(&sc.system, seed, 9, tau, 4);
        let want = scalar_bounded_point(&u, 60.0);
        let got = x_of_periodic(&sc.system, &u, &sc.split, &quiet())
            .unwrap()
            .x_u
            .coords()[0];
        assert!((got - want).abs() < 1e-9, "seed {seed}: {got} vs {want}");
    }
    for c in [-0.8, -0.4, 0.0, 0.4, 0.8] {
        let u = PwcControl::constant(DVector::from_element(1, c), 1.0).unwrap();
        let got = x_of_periodic(&sc.system, &u, &sc.split, &quiet())
            .unwrap()
            .x_u
            .coords()[0];
        assert!((got + c).abs() < 1e-6);
    }
}

#[test]
fn scalar_general_control_converges_to_closed_form() {
    let sc = common::scenario("scalar_a1");
    let u = PwcControl::new(
        vec![-2.0, -0.5, 0.7, 1.9, 3.0],
        [0.6, -1.0, 0.3, 1.0]
            .iter()
            .map(|c| DVector::from_element(1, *c))
            .collect(),
        None,
    )
    .unwrap();
    let want = scalar_bounded_point(&u, 60.0);
    let r = x_of_general(&sc.system, &u, &sc.split, 6, 4.0, &quiet()).unwrap();
    assert!(
        (r.x_u.coords()[0] - want).abs() < 1e-8,
        "{} vs {want}",
        r.x_u.coords()[0]
    );
}

/// Newton on `g ↦ φ_{τ,u}(g) − g` by direct integration with a difference Jacobian.
fn brute_force_periodic_point(sys: &SystemSpec, u: &PwcControl, tau: f64) -> DVector<f64> {
    let opts = StepOptions::with_step(5e-4);
    let g = sys.group();
    let n = g.dim();
    let f = |z: &DVector<f64>| -> DVector<f64> {
        let p = direct_solution(sys, u, tau, &g.element(z.as_slice()).unwrap(), &opts).unwrap();
        p.coords() - z
    };
    let mut z = DVector::zeros(n);
    for _ in 0..30 {
        let r = f(&z);
        if r.norm() < 1e-13 {
            break;
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut dz = DVector::zeros(n);
            dz[j] = 1e-6;
            jac.set_column(j, &((f(&(&z + &dz)) - f(&(&z - &dz))) / 2e-6));
        }
        z -= jac.lu().solve(&r).unwrap();
    }
    z
}

#[test]
fn heisenberg_periodic_point_matches_brute_force() {
    let sc = common::scenario("heis_hyperbolic");
    for seed in 0..20u64 {
        let tau = 1.0 + rng_for(seed, 7).gen::<f64>() * 2.0;
        let u = common::periodic_control(&sc.system, seed, 8, tau, 4);
        let got = x_of_periodic(&sc.system, &u, &sc.split, &quiet()).unwrap();
        let want = brute_force_periodic_point(&sc.system, &u, tau);
        let diff = (got.x_u.coords() - &want).amax();
        assert!(diff < 1e-6, "seed {seed}: {diff:e}");
    }
}

#[test]
fn heisenberg_periodic_point_frozen() {
    // brute-force oracle output for this control, frozen
    let sc = common::scenario("heis_hyperbolic");
    let v = |a: f64, b: f64| DVector::from_vec(vec![a, b]);
    let u = PwcControl::new(
        vec![0.0, 0.4, 1.1, 1.5],
        vec![v(1.0, -1.0), v(-1.0, 0.5), v(0.2, 1.0)],
        Some(1.5),
    )
    .unwrap();
    let got = x_of_periodic(&sc.system, &u, &sc.split, &quiet()).unwrap();
    let frozen = [FROZEN_X, FROZEN_Y, FROZEN_Z];
    for (a, b) in got.x_u.coords().iter().zip(frozen) {
        assert!((a - b).abs() < 1e-8, "{:?} vs {frozen:?}", got.x_u.coords());
    }
}

const FROZEN_X: f64 = -1.825167564677320e-2;
const FROZEN_Y: f64 = 6.592423417507887e-2;
const FROZEN_Z: f64 = -2.785953291563328e-2;

#[test]
fn shifted_controls_carry_the_bounded_point_along() {
    // with G⁰ trivial, φ_{s,u}(x(u)) = x(θ_s u)
    let sc = common::scenario("heis_hyperbolic");
    let g = sc.system.group();
    for seed in 0..5u64 {
        let u = common::periodic_control(&sc.system, seed, 3, 2.0, 4);
        let x = x_of_periodic(&sc.system, &u, &sc.split, &quiet())
            .unwrap()
            .x_u;
        for s in [-1.3, 0.6, 2.9] {
            let moved = solution(&sc.system, &u, s, &x, &StepOptions::default()).unwrap();
            let shifted = x_of_periodic(&sc.system, &u.shift(s), &sc.split, &quiet())
                .unwrap()
                .x_u;
            assert!(g.distance(&moved, &shifted).unwrap() < 1e-8);
        }
    }
}

#[test]
fn se2_bounded_point_returns_to_its_fiber() {
    let sc = common::scenario("se2_compact_center");
    let g = sc.system.group();
    for seed in 0..10u64 {
        let u = common::periodic_control(&sc.system, seed, 4, 1.5, 4);
        let x = x_of_periodic(&sc.system, &u, &sc.split, &quiet())
            .unwrap()
            .x_u;
        for n in 1..=3 {
            let p = solution(&sc.system, &u, 1.5 * n as f64, &x, &StepOptions::default()).unwrap();
            let rel = g.multiply(&g.inverse(&x).unwrap(), &p).unwrap();
            let (gpm, _) = decompose_element(g, &sc.split, &rel).unwrap();
            assert!(
                g.norm_from_identity(&gpm).unwrap() < 1e-6,
                "seed {seed} n {n}"
            );
        }
    }
}

fn heis_psi(split: &DynSplit, tau: f64) -> HyperbolicAuto {
    let sc = common::scenario("heis_hyperbolic");
    HyperbolicAuto::new(&sc.system, split, tau, sc.system.group().identity()).unwrap()
}

fn random_element(g: &GroupSpec, seed: u64, scale: f64) -> GroupElement {
    let mut rng = rng_for(seed, 11);
    let c: Vec<f64> = (0..g.dim()).map(|_| rng.gen_range(-scale..scale)).collect();
    g.exp_chart(&AlgebraVector::from_slice(&c)).unwrap()
}

#[test]
fn f_psi_round_trip_on_heisenberg() {
    let sc = common::scenario("heis_hyperbolic");
    let g = sc.system.group();
    let mut worst: f64 = 0.0;
    for seed in 0..500u64 {
        let tau = 0.5 + (seed % 5) as f64 * 0.5;
        let psi = heis_psi(&sc.split, tau);
        let x = random_element(g, seed, 2.0);
        let back = f_psi_inverse(&psi, &f_psi(&psi, &x).unwrap(), 1e-12).unwrap();
        worst = worst.max(g.distance(&back, &x).unwrap());
    }
    assert!(worst < 1e-10, "{worst:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn f_psi_round_trip_on_se2(seed in 0u64..10_000, tau in 0.3..3.0f64, a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let sc = common::scenario("se2_compact_center");
        let g = sc.system.group();
        let y = sample_g0(g, &sc.split, &mut rng_for(seed, 0)).unwrap();
        let psi = HyperbolicAuto::new(&sc.system, &sc.split, tau, y.clone()).unwrap();
        let x = g.element(&[a, b, 0.0]).unwrap();
        let back = f_psi_inverse(&psi, &f_psi(&psi, &x).unwrap(), 1e-12).unwrap();
        prop_assert!(g.distance_total(&back, &x).unwrap() < 1e-10);
        // ψ = C_y ∘ φ_τ
        let direct = g.conjugate(&y, &automorphism_flow(&sc.system, tau, &x).unwrap()).unwrap();
        prop_assert!(g.distance_total(&psi.apply(&x).unwrap(), &direct).unwrap() < 1e-12);
    }
}

#[test]
fn newton_jacobian_at_identity() {
    for name in ["heis_hyperbolic", "se2_compact_center", "plane_hyperbolic"] {
        let sc = common::scenario(name);
        let g = sc.system.group();
        for seed in 0..5u64 {
            let y = sample_g0(g, &sc.split, &mut rng_for(seed, 12)).unwrap();
            let psi =
                HyperbolicAuto::new(&sc.system, &sc.split, 0.7 + 0.4 * seed as f64, y).unwrap();
            let k = psi.differential_at_e().nrows();
            let fd = psi.f_psi_jacobian_fd(&DVector::zeros(k)).unwrap();
            let want = DMatrix::identity(k, k) - psi.differential_at_e();
            assert!((fd - want).amax() < 1e-6, "{name} seed {seed}");
        }
    }
}

#[test]
fn bounded_point_depends_continuously_on_the_control() {
    let sc = common::scenario("heis_hyperbolic");
    let g = sc.system.group();
    let v = |a: f64, b: f64| DVector::from_vec(vec![a, b]);
    let control = |shift: f64| {
        PwcControl::new(
            vec![0.0, 0.7 + shift, 1.3, 2.0],
            vec![v(1.0, -1.0), v(-1.0, 1.0), v(0.5, 0.5)],
            Some(2.0),
        )
        .unwrap()
    };
    let base = x_of_periodic(&sc.system, &control(0.0), &sc.split, &quiet())
        .unwrap()
        .x_u;
    let gaps: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4]
        .iter()
        .map(|d| {
            let x = x_of_periodic(&sc.system, &control(*d), &sc.split, &quiet())
                .unwrap()
                .x_u;
            g.distance(&x, &base).unwrap()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}
