#![allow(dead_code)]

use liectl_core::control::{
    rng_for, sample_periodic_with, ControlConstraint, PwcControl, SamplerOptions,
};
use liectl_core::flow::SystemSpec;
use liectl_core::group::{AlgebraVector, GroupSpec};
use liectl_core::scenario::{bundled, Scenario};
use liectl_core::spectral::{split_derivation, Derivation, DynSplit};
use nalgebra::{DMatrix, DVector};

pub fn scenario(name: &str) -> Scenario {
    Scenario::from_json(bundled(name).expect("bundled scenario")).expect("bundled scenario loads")
}

pub fn unit_box(m: usize) -> ControlConstraint {
    ControlConstraint::new_box(
        DVector::from_element(m, -1.0),
        DVector::from_element(m, 1.0),
    )
    .unwrap()
}

fn e(n: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    m[(i, j)] = 1.0;
    m
}

/// Strictly upper triangular 4×4 matrices: a 3-step nilpotent group of dimension 6.
pub fn n4() -> GroupSpec {
    let mut basis = Vec::new();
    for d in 1..4 {
        for i in 0..4 - d {
            basis.push(e(4, i, i + d));
        }
    }
    GroupSpec::nilpotent(basis).unwrap()
}

/// The test families: abelian R², SE(2), Heisenberg, and `n4`.
pub fn groups() -> Vec<GroupSpec> {
    vec![
        GroupSpec::abelian(2).unwrap(),
        GroupSpec::se2(),
        GroupSpec::heisenberg(),
        n4(),
    ]
}

/// `diag(weights)` is a derivation of `n4` when each weight is additive in the superdiagonal index.
pub fn n4_derivation(g: &GroupSpec, a: [f64; 3]) -> Derivation {
    let w = [
        a[0],
        a[1],
        a[2],
        a[0] + a[1],
        a[1] + a[2],
        a[0] + a[1] + a[2],
    ];
    Derivation::exp_chart(g, DMatrix::from_diagonal(&DVector::from_column_slice(&w))).unwrap()
}

/// A linear control system for each family, including a rotating SE(2) drift.
pub fn systems() -> Vec<(&'static str, SystemSpec, DynSplit)> {
    let mut out = Vec::new();
    let mk = |name, g: GroupSpec, d: Derivation, ys: Vec<Vec<f64>>| {
        let split = split_derivation(&g, &d, 1e-9).unwrap();
        let m = ys.len();
        let ys = ys.iter().map(|y| AlgebraVector::from_slice(y)).collect();
        (name, SystemSpec::new(g, d, ys, unit_box(m)).unwrap(), split)
    };
    let g = GroupSpec::abelian(2).unwrap();
    let d =
        Derivation::exp_chart(&g, DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 1.0, 0.5])).unwrap();
    out.push(mk("abelian", g, d, vec![vec![1.0, 0.0]]));
    let g = GroupSpec::se2();
    let d = Derivation::se2_auto(&g, 0.7, 1.3).unwrap();
    out.push(mk(
        "se2",
        g,
        d,
        vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.3, 1.0]],
    ));
    let g = GroupSpec::heisenberg();
    let d = Derivation::exp_chart(
        &g,
        DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0, 0.5]),
    )
    .unwrap();
    out.push(mk(
        "heisenberg",
        g,
        d,
        vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
    ));
    let g = n4();
    let d = n4_derivation(&g, [1.0, -0.5, 0.8]);
    out.push(mk(
        "n4",
        g,
        d,
        vec![
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        ],
    ));
    out
}

pub fn periodic_control(
    sys: &SystemSpec,
    seed: u64,
    stream: u64,
    tau: f64,
    switches: usize,
) -> PwcControl {
    let mut rng = rng_for(seed, stream);
    sample_periodic_with(
        sys.constraint(),
        tau,
        switches,
        &SamplerOptions::default(),
        &mut rng,
    )
    .unwrap()
}
