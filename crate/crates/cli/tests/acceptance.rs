//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use liectl_core::control::{
    rng_for, sample_bangbang_with, sample_periodic_with, ControlConstraint, PwcControl,
    SamplerOptions,
};
use liectl_core::fixed_point::{
    f_psi, f_psi_inverse, x_of_periodic, FixedPointOptions, HyperbolicAuto,
};
use liectl_core::flow::{direct_solution, identity_solution, solution, StepOptions, SystemSpec};
use liectl_core::group::{AlgebraVector, Family, GroupElement, GroupSpec};
use liectl_core::lift::{conjugacy_sweep, InducedSystem};
use liectl_core::scenario::{bundled, Scenario, BUNDLED};
use liectl_core::spectral::{
    check_subalgebra_closure, split_automorphism, Derivation, SubspaceClass,
};
use liectl_core::verify::{control_set_summary, estimate_control_set, Level};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn scenario(name: &str) -> Scenario {
    Scenario::from_json(bundled(name).expect("bundled")).expect("bundled scenario loads")
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn quiet() -> FixedPointOptions {
    FixedPointOptions {
        compute_orbit: false,
        fiber_range: 0,
        ..Default::default()
    }
}

fn scalar_suite() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    pool.install(|| {
        let t0 = Instant::now();
        let sc = scenario("scalar_a1");
        let set = estimate_control_set(&sc, Level::Full).map_err(|e| e.to_string())?;
        let [lo, hi] = control_set_summary(&sc, &set).map_err(|e| e.to_string())?.extent[0];
        let mut worst: f64 = 0.0;
        for c in [-0.8, -0.4, 0.0, 0.4, 0.8] {
            let u = PwcControl::constant(DVector::from_element(1, c), 1.0).unwrap();
            let x = x_of_periodic(&sc.system, &u, &sc.split, &quiet()).map_err(|e| e.to_string())?;
            worst = worst.max((x.x_u.coords()[0] + c).abs());
        }
        let secs = t0.elapsed().as_secs_f64();
        let end_err = (lo + 1.0).abs().max((hi - 1.0).abs());
        ensure(
            end_err < 0.02 && worst < 1e-6 && secs < 30.0,
            format!("extent [{lo:.4}, {hi:.4}] (err {end_err:.4} < 0.02), x(c)+c {worst:.1e} < 1e-6, {secs:.1}s < 30s"),
        )
    })
}

fn unit_box(m: usize) -> ControlConstraint {
    ControlConstraint::new_box(
        DVector::from_element(m, -1.0),
        DVector::from_element(m, 1.0),
    )
    .unwrap()
}

fn families() -> Vec<(&'static str, SystemSpec)> {
    let mk = |g: GroupSpec, d: Derivation, ys: Vec<Vec<f64>>| {
        let m = ys.len();
        let ys = ys.iter().map(|y| AlgebraVector::from_slice(y)).collect();
        SystemSpec::new(g, d, ys, unit_box(m)).unwrap()
    };
    let e = |i: usize, j: usize| {
        let mut m = DMatrix::zeros(4, 4);
        m[(i, j)] = 1.0;
        m
    };
    let n4 = GroupSpec::nilpotent(
        (1..4)
            .flat_map(|d| (0..4 - d).map(move |i| (i, i + d)))
            .map(|(i, j)| e(i, j))
            .collect(),
    )
    .unwrap();
    let w = [1.0, -0.5, 0.8, 0.5, 0.3, 1.3];
    let n4_d = Derivation::exp_chart(&n4, DMatrix::from_diagonal(&DVector::from_column_slice(&w)))
        .unwrap();
    let ab = GroupSpec::abelian(2).unwrap();
    let ab_d =
        Derivation::exp_chart(&ab, DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 1.0, 0.5])).unwrap();
    let se = GroupSpec::se2();
    let se_d = Derivation::se2_auto(&se, 0.7, 1.3).unwrap();
    let h = GroupSpec::heisenberg();
    let h_d = Derivation::exp_chart(
        &h,
        DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0, 0.5]),
    )
    .unwrap();
    vec![
        ("abelian", mk(ab, ab_d, vec![vec![1.0, 0.0]])),
        (
            "se2",
            mk(se, se_d, vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.3, 1.0]]),
        ),
        (
            "heisenberg",
            mk(h, h_d, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]),
        ),
        (
            "n4",
            mk(
                n4,
                n4_d,
                vec![
                    vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                    vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0],
                ],
            ),
        ),
    ]
}

fn random_point(sys: &SystemSpec, seed: u64) -> GroupElement {
    let mut rng = rng_for(seed, 101);
    let g = sys.group();
    let mut c: Vec<f64> = (0..g.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if matches!(g.family(), Family::Se2) {
        c[2] *= 3.0;
    }
    g.exp_chart(&AlgebraVector::from_slice(&c)).unwrap()
}

fn flow_suite() -> Outcome {
    let opts = StepOptions::default();
    let (mut trans, mut cocycle, mut fixed): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (_, sys) in families() {
        let group = sys.group();
        for case in 0..200u64 {
            let mut rng = rng_for(case, 102);
            let g = random_point(&sys, case);
            let u = sample_bangbang_with(
                sys.constraint(),
                -3.0,
                3.0,
                5,
                &SamplerOptions::default(),
                &mut rng,
            )
            .unwrap();
            let (t, s) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let a = solution(&sys, &u, t, &g, &opts).unwrap();
            let b = direct_solution(&sys, &u, t, &g, &opts).unwrap();
            trans = trans.max(group.distance_total(&a, &b).unwrap());
            let whole = solution(&sys, &u, t + s, &g, &opts).unwrap();
            let mid = solution(&sys, &u, s, &g, &opts).unwrap();
            let split = solution(&sys, &u.shift(s), t, &mid, &opts).unwrap();
            cocycle = cocycle.max(group.distance_total(&whole, &split).unwrap());
        }
        let zero = PwcControl::constant(DVector::zeros(sys.control_vectors().len()), 1.0).unwrap();
        for p in identity_solution(&sys, &zero, 2.5, &opts).unwrap().states {
            fixed = fixed.max(p.coords().amax());
        }
    }
    ensure(
        trans < 1e-7 && cocycle < 1e-7 && fixed <= f64::EPSILON,
        format!("translation {trans:.1e}, cocycle {cocycle:.1e} (< 1e-7, 4 families x 200), u=0 drift of e {fixed:.1e}"),
    )
}

fn spectral_suite() -> Outcome {
    let mut worst: f64 = 0.0;
    for (name, _) in BUNDLED {
        let sc = scenario(name);
        let r =
            check_subalgebra_closure(sc.system.group(), &sc.split).map_err(|e| e.to_string())?;
        worst = worst
            .max(r.plus)
            .max(r.zero)
            .max(r.minus)
            .max(r.zero_normalizes);
    }
    let g = GroupSpec::abelian(2).unwrap();
    let s = split_automorphism(
        &g,
        &DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 1.0]),
        1e-9,
    )
    .map_err(|e| e.to_string())?;
    let r2 = 2f64.sqrt();
    let mut angle: f64 = 0.0;
    for (class, dir) in [
        (SubspaceClass::Plus, [1.0, r2]),
        (SubspaceClass::Minus, [1.0, -r2]),
    ] {
        let b = s.basis_vectors(class);
        if b.len() != 1 {
            return Err(format!("{class:?} has dimension {}", b.len()));
        }
        let u = b[0].coeffs();
        angle = angle.max(
            (u[0] * dir[1] - u[1] * dir[0])
                .abs()
                .atan2((u[0] * dir[0] + u[1] * dir[1]).abs()),
        );
    }
    ensure(
        worst < 1e-8 && angle < 1e-8,
        format!("closure {worst:.1e} < 1e-8, toral angle {angle:.1e} < 1e-8"),
    )
}

/// Newton on `g ↦ φ_{τ,u}(g) − g` through direct integration.
fn brute_force_periodic_point(sys: &SystemSpec, u: &PwcControl, tau: f64) -> DVector<f64> {
    let opts = StepOptions::with_step(5e-4);
    let g = sys.group();
    let n = g.dim();
    let f = |z: &DVector<f64>| {
        direct_solution(sys, u, tau, &g.element(z.as_slice()).unwrap(), &opts)
            .unwrap()
            .coords()
            - z
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

fn hyperbolic_suite() -> Outcome {
    let t0 = Instant::now();
    let sc = scenario("heis_hyperbolic");
    let g = sc.system.group();
    let mut round: f64 = 0.0;
    for seed in 0..500u64 {
        let mut rng = rng_for(seed, 103);
        let tau = rng.gen_range(0.5..3.0);
        let psi = HyperbolicAuto::new(&sc.system, &sc.split, tau, g.identity())
            .map_err(|e| e.to_string())?;
        let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x = g.exp_chart(&AlgebraVector::from_slice(&c)).unwrap();
        let back =
            f_psi_inverse(&psi, &f_psi(&psi, &x).unwrap(), 1e-12).map_err(|e| e.to_string())?;
        round = round.max(g.distance(&back, &x).unwrap());
    }
    let mut oracle: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = rng_for(seed, 104);
        let tau = rng.gen_range(1.0..3.0);
        let u = sample_periodic_with(
            sc.system.constraint(),
            tau,
            4,
            &SamplerOptions::default(),
            &mut rng,
        )
        .unwrap();
        let got = x_of_periodic(&sc.system, &u, &sc.split, &quiet()).map_err(|e| e.to_string())?;
        oracle =
            oracle.max((got.x_u.coords() - brute_force_periodic_point(&sc.system, &u, tau)).amax());
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(
        round < 1e-10 && oracle < 1e-6 && secs < 60.0,
        format!("round trip {round:.1e} < 1e-10 (500 points), brute force {oracle:.1e} < 1e-6 (20 controls), {secs:.1}s < 60s"),
    )
}

fn verify_full(name: &str, threads: &str) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_liectl"))
        .args(["verify", name, "--level", "full"])
        .env("LIECTL_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    let stdout = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    match out.status.code() {
        Some(0) | Some(1) => Ok(stdout),
        c => Err(format!(
            "{name}: exit {c:?}: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        )),
    }
}

fn theorem_suite(reports: &[(String, Result<String, String>)]) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, report) in reports {
        let v: Value = serde_json::from_str(report.as_ref().map_err(|e| e.clone())?)
            .map_err(|e| e.to_string())?;
        let o = &v["orbits"];
        let trials = o["trials"].as_u64().unwrap_or(0);
        let (bounded, within) = (
            o["bounded"].as_u64().unwrap_or(0),
            o["within_eps"].as_u64().unwrap_or(0),
        );
        let escape = o["escape_fraction"].as_f64().unwrap_or(0.0);
        ok &= trials == 100 && bounded == trials && within == trials && escape >= 0.99;
        lines.push(format!(
            "{name} {within}/{bounded}/{trials} esc {escape:.2}"
        ));
    }
    ensure(
        ok,
        format!("within-eps/bounded/trials: {}", lines.join("; ")),
    )
}

fn conjugacy_suite() -> Outcome {
    let sc = scenario("se2_compact_center");
    let ind = InducedSystem::new(&sc.system, &sc.split).map_err(|e| e.to_string())?;
    let r = conjugacy_sweep(&ind, &sc.conjugacy_params(100)).map_err(|e| e.to_string())?;
    ensure(
        r.trials == 100 && r.max_residual < 1e-4 && r.halving_ratio >= 4.0,
        format!(
            "max residual {:.2e} < 1e-4 over {} trials, halving ratio {:.1} >= 4",
            r.max_residual, r.trials, r.halving_ratio
        ),
    )
}

fn determinism_suite(first: &[(String, Result<String, String>)]) -> Outcome {
    let mut same = Vec::new();
    for (name, a) in first {
        let a = a.as_ref().map_err(|e| e.clone())?;
        let b = verify_full(name, "2")?;
        if *a != b {
            return Err(format!("{name}: reports differ"));
        }
        same.push(name.as_str());
    }
    ensure(
        true,
        format!(
            "byte-identical full reports (1 vs 2 threads): {}",
            same.join(", ")
        ),
    )
}

fn run(id: usize, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into()))
    });
    let secs = t0.elapsed().as_secs_f64();
    let (tag, detail, pass) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("{tag} [{id}] {title}: {detail} ({secs:.1}s)");
    pass
}

fn main() {
    let mut pass = true;
    pass &= run(1, "scalar oracle", scalar_suite);
    pass &= run(2, "flow structure", flow_suite);
    pass &= run(3, "spectral split", spectral_suite);
    pass &= run(4, "hyperbolic solver", hyperbolic_suite);
    let mut reports: Vec<(String, Result<String, String>)> = Vec::new();
    pass &= run(5, "bounded orbits in the control set", || {
        reports = BUNDLED
            .iter()
            .map(|(name, _)| (name.to_string(), verify_full(name, "1")))
            .collect();
        theorem_suite(&reports)
    });
    pass &= run(6, "lift conjugacy", conjugacy_suite);
    pass &= run(7, "determinism", || determinism_suite(&reports));
    if !pass {
        std::process::exit(1);
    }
}
