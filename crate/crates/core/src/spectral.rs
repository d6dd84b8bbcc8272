//! Unstable / central / stable splittings `g = g⁺ ⊕ g⁰ ⊕ g⁻` and the
//! factorization of group elements along them.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{AlgebraVector, Family, GroupElement, GroupSpec};
use crate::linalg::{eigenbasis_condition, BlockEigen, RealSchur};

pub const DEFAULT_TOL: f64 = 1e-9;
const MU_MARGIN: f64 = 1e-6;
const CLOSURE_TOL: f64 = 1e-8;

/// How the drift flow `φ_t` is realized on the group.
#[derive(Debug, Clone, PartialEq)]
pub enum Realization {
    /// `φ_t = exp ∘ e^{tD} ∘ log`; needs a global exponential chart.
    ExpChartConjugate,
    /// `D = ad(A)` and `φ_t(g) = e^{tA} g e^{−tA}`, with `A` in the normalizer of the algebra.
    Inner(DMatrix<f64>),
    /// `(v, R) ↦ (e^{tα} R_{tβ} v, R)` on SE(2).
    Se2Auto { alpha: f64, beta: f64 },
}

/// A derivation of the Lie algebra together with a realization of its flow.
#[derive(Debug, Clone)]
pub struct Derivation {
    matrix: DMatrix<f64>,
    realization: Realization,
}

fn check_is_derivation(group: &GroupSpec, d: &DMatrix<f64>) -> Result<()> {
    let n = group.dim();
    if d.nrows() != n || d.ncols() != n {
        return Err(Error::structural(format!(
            "derivation must be {n}x{n}, got {}x{}",
            d.nrows(),
            d.ncols()
        )));
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::structural("derivation has non-finite entries"));
    }
    let e =
        |i: usize| AlgebraVector::new(DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 }));
    let scale = d.norm().max(1.0);
    for i in 0..n {
        for j in 0..n {
            let br = group.bracket(&e(i), &e(j))?;
            let lhs = d * br.coeffs();
            let dvi = AlgebraVector::new(d.column(i).into_owned());
            let dvj = AlgebraVector::new(d.column(j).into_owned());
            let rhs =
                group.bracket(&dvi, &e(j))?.into_inner() + group.bracket(&e(i), &dvj)?.into_inner();
            let residual = (lhs - rhs).norm();
            if residual > 1e-10 * scale {
                return Err(Error::structural(format!(
                    "matrix is not a derivation: Leibniz rule fails on basis pair ({i}, {j}) with residual {residual:e}"
                )));
            }
        }
    }
    Ok(())
}

impl Derivation {
    /// A derivation whose flow is conjugated through the exponential chart.
    pub fn exp_chart(group: &GroupSpec, matrix: DMatrix<f64>) -> Result<Self> {
        if matches!(group.family(), Family::Se2) {
            return Err(Error::structural(
                "exp-chart conjugate flows need a global exponential chart; use an inner or SE(2) realization",
            ));
        }
        check_is_derivation(group, &matrix)?;
        Ok(Derivation {
            matrix,
            realization: Realization::ExpChartConjugate,
        })
    }

    /// `D = ad(A)` for a matrix `A` normalizing the realized algebra.
    pub fn inner(group: &GroupSpec, a: DMatrix<f64>) -> Result<Self> {
        let size = group.matrix_size();
        if a.nrows() != size || a.ncols() != size {
            return Err(Error::structural(format!(
                "inner generator must be {size}x{size}"
            )));
        }
        let n = group.dim();
        let mut d = DMatrix::zeros(n, n);
        for (j, x) in group.basis().iter().enumerate() {
            let br = &a * x - x * &a;
            let coeffs = group.algebra_coords(&br).map_err(|_| {
                Error::structural(format!(
                    "inner generator does not normalize the algebra ([A, X{j}] leaves it)"
                ))
            })?;
            d.set_column(j, coeffs.coeffs());
        }
        check_is_derivation(group, &d)?;
        Ok(Derivation {
            matrix: d,
            realization: Realization::Inner(a),
        })
    }

    /// The SE(2) derivation acting on translations by `αI + βJ` and killing `θ`.
    pub fn se2_auto(group: &GroupSpec, alpha: f64, beta: f64) -> Result<Self> {
        if !matches!(group.family(), Family::Se2) {
            return Err(Error::structural(
                "SE(2) automorphism flow needs the SE(2) group",
            ));
        }
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::structural(
                "non-finite SE(2) automorphism parameters",
            ));
        }
        let d =
            DMatrix::from_row_slice(3, 3, &[alpha, -beta, 0.0, beta, alpha, 0.0, 0.0, 0.0, 0.0]);
        check_is_derivation(group, &d)?;
        Ok(Derivation {
            matrix: d,
            realization: Realization::Se2Auto { alpha, beta },
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn realization(&self) -> &Realization {
        &self.realization
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SubspaceClass {
    Plus,
    Zero,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    /// From a derivation: classes by the sign of `Re λ`.
    Flow,
    /// From a single automorphism: classes by `|α|` against 1.
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
    pub class: SubspaceClass,
}

/// The splitting `g = g⁺ ⊕ g⁰ ⊕ g⁻` with projections and growth constants.
#[derive(Debug, Clone)]
pub struct DynSplit {
    /// Columns `[B⁺ | B⁰ | B⁻]`, orthonormal within each block.
    basis: DMatrix<f64>,
    basis_inv: DMatrix<f64>,
    dims: [usize; 3],
    projections: [DMatrix<f64>; 3],
    mu: f64,
    c: f64,
    eigenvalues: Vec<Eigenvalue>,
    warnings: Vec<String>,
    kind: SplitKind,
    tol: f64,
    group: u64,
}

fn index(class: SubspaceClass) -> usize {
    match class {
        SubspaceClass::Plus => 0,
        SubspaceClass::Zero => 1,
        SubspaceClass::Minus => 2,
    }
}

impl DynSplit {
    pub fn dim(&self, class: SubspaceClass) -> usize {
        self.dims[index(class)]
    }

    pub fn algebra_dim(&self) -> usize {
        self.basis.nrows()
    }

    fn offset(&self, class: SubspaceClass) -> usize {
        self.dims[..index(class)].iter().sum()
    }

    /// Orthonormal basis of one subspace as matrix columns.
    pub fn basis_matrix(&self, class: SubspaceClass) -> DMatrix<f64> {
        self.basis
            .columns(self.offset(class), self.dim(class))
            .into_owned()
    }

    pub fn basis_vectors(&self, class: SubspaceClass) -> Vec<AlgebraVector> {
        let m = self.basis_matrix(class);
        (0..m.ncols())
            .map(|j| AlgebraVector::new(m.column(j).into_owned()))
            .collect()
    }

    /// The full change of basis `[B⁺ | B⁰ | B⁻]`.
    pub fn change_of_basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn projection(&self, class: SubspaceClass) -> &DMatrix<f64> {
        &self.projections[index(class)]
    }

    /// `P⁺ + P⁻`.
    pub fn projection_gpm(&self) -> DMatrix<f64> {
        &self.projections[0] + &self.projections[2]
    }

    pub fn spectral_gap(&self) -> f64 {
        self.mu
    }

    pub fn growth_constant(&self) -> f64 {
        self.c
    }

    pub fn eigenvalues(&self) -> &[Eigenvalue] {
        &self.eigenvalues
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn kind(&self) -> SplitKind {
        self.kind
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.dims[1] == 0
    }

    /// Coefficients of `v` in `[B⁺ | B⁰ | B⁻]`.
    pub fn split_coords(&self, v: &AlgebraVector) -> DVector<f64> {
        &self.basis_inv * v.coeffs()
    }

    /// Component of `v` in one subspace, in that subspace's orthonormal basis.
    pub fn component_coords(&self, class: SubspaceClass, v: &AlgebraVector) -> DVector<f64> {
        let z = self.split_coords(v);
        z.rows(self.offset(class), self.dim(class)).into_owned()
    }

    fn check_group(&self, group: &GroupSpec) -> Result<()> {
        if group.fingerprint() != self.group {
            return Err(Error::structural(
                "split was computed for a different group",
            ));
        }
        Ok(())
    }

    fn in_subspace(&self, class: SubspaceClass, v: &AlgebraVector) -> bool {
        let p = self.projection(class) * v.coeffs();
        (p - v.coeffs()).norm() <= 1e-10 * (1.0 + v.norm())
    }
}

fn classify_flow(e: BlockEigen, tol: f64) -> SubspaceClass {
    if e.re.abs() < tol {
        SubspaceClass::Zero
    } else if e.re > 0.0 {
        SubspaceClass::Plus
    } else {
        SubspaceClass::Minus
    }
}

fn log_modulus(e: BlockEigen) -> f64 {
    e.re.hypot(e.im).ln()
}

fn classify_discrete(e: BlockEigen, tol: f64) -> SubspaceClass {
    let m = e.re.hypot(e.im);
    if (m - 1.0).abs() < tol {
        SubspaceClass::Zero
    } else if m > 1.0 {
        SubspaceClass::Plus
    } else {
        SubspaceClass::Minus
    }
}

fn build_split(group: &GroupSpec, m: &DMatrix<f64>, tol: f64, kind: SplitKind) -> Result<DynSplit> {
    if !(tol > 0.0) {
        return Err(Error::argument("classification tolerance must be positive"));
    }
    let n = m.nrows();
    let classify = |e: BlockEigen| match kind {
        SplitKind::Flow => classify_flow(e, tol),
        SplitKind::Discrete => classify_discrete(e, tol),
    };
    let base = RealSchur::new(m)?;
    let mut warnings = Vec::new();
    let mut eigenvalues = Vec::new();
    for e in base.eigenvalues() {
        let gap = match kind {
            SplitKind::Flow => e.re.abs(),
            SplitKind::Discrete => (e.re.hypot(e.im) - 1.0).abs(),
        };
        if gap > tol / 2.0 && gap < 2.0 * tol {
            warnings.push(format!(
                "eigenvalue {:.3e}{:+.3e}i lies within a factor 2 of the classification tolerance {tol:e}",
                e.re, e.im
            ));
        }
        let class = classify(e);
        eigenvalues.push(Eigenvalue {
            re: e.re,
            im: e.im,
            class,
        });
        if e.im != 0.0 {
            eigenvalues.push(Eigenvalue {
                re: e.re,
                im: -e.im,
                class,
            });
        }
    }
    eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));

    let mut basis = DMatrix::zeros(n, n);
    let mut dims = [0usize; 3];
    let mut col = 0;
    for class in [
        SubspaceClass::Plus,
        SubspaceClass::Zero,
        SubspaceClass::Minus,
    ] {
        let mut s = base.clone();
        let k = s.reorder_leading(|e| classify(e) == class)?;
        basis.columns_mut(col, k).copy_from(&s.q.columns(0, k));
        dims[index(class)] = k;
        col += k;
    }
    debug_assert_eq!(col, n);
    let basis_inv = basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::structural("invariant subspaces fail to span the algebra"))?;
    let mut projections = [
        DMatrix::zeros(n, n),
        DMatrix::zeros(n, n),
        DMatrix::zeros(n, n),
    ];
    let mut offset = 0;
    for (i, d) in dims.iter().enumerate() {
        let mut sel = DMatrix::zeros(n, n);
        for j in offset..offset + d {
            sel[(j, j)] = 1.0;
        }
        projections[i] = &basis * sel * &basis_inv;
        offset += d;
    }

    let mut split = DynSplit {
        basis,
        basis_inv,
        dims,
        projections,
        mu: 1.0,
        c: 1.0,
        eigenvalues,
        warnings,
        kind,
        tol,
        group: group.fingerprint(),
    };
    split.compute_growth(m)?;
    Ok(split)
}

impl DynSplit {
    /// Fills `(c, μ)` so that `‖e^{tD}v‖ ≥ c e^{μt}‖v‖` on `g⁺` for `t ≥ 0` and
    /// symmetrically on `g⁻` for `t ≤ 0` (powers of the automorphism in the
    /// discrete case).
    fn compute_growth(&mut self, m: &DMatrix<f64>) -> Result<()> {
        let rates: Vec<f64> = self
            .eigenvalues
            .iter()
            .filter(|e| e.class != SubspaceClass::Zero)
            .map(|e| match self.kind {
                SplitKind::Flow => e.re.abs(),
                SplitKind::Discrete => log_modulus(BlockEigen { re: e.re, im: e.im }).abs(),
            })
            .collect();
        if rates.is_empty() {
            self.mu = 1.0;
            self.c = 1.0;
            return Ok(());
        }
        let min_rate = rates.iter().cloned().fold(f64::INFINITY, f64::min);
        self.mu = if min_rate > 2.0 * MU_MARGIN {
            min_rate - MU_MARGIN
        } else {
            0.5 * min_rate
        };
        let mut c = 1.0_f64;
        for (class, sign) in [(SubspaceClass::Plus, 1.0), (SubspaceClass::Minus, -1.0)] {
            let k = self.dim(class);
            if k == 0 {
                continue;
            }
            let b = self.basis_matrix(class);
            let restricted = b.transpose() * m * &b;
            match eigenbasis_condition(&restricted)? {
                Some(kappa) => c = c.min(1.0 / kappa),
                None => {
                    let sampled = self.sampled_growth(&restricted, sign);
                    self.warnings.push(format!(
                        "{class:?} block is defective; growth constant {sampled:.3e} is a sampled bound on t ∈ [0, 20]"
                    ));
                    c = c.min(sampled);
                }
            }
        }
        self.c = c;
        Ok(())
    }

    fn sampled_growth(&self, restricted: &DMatrix<f64>, sign: f64) -> f64 {
        let mut best = f64::INFINITY;
        match self.kind {
            SplitKind::Flow => {
                for i in 0..=400 {
                    let t = 0.05 * i as f64;
                    let e = (restricted * (sign * t)).exp();
                    let smin = e.singular_values().min();
                    best = best.min(smin * (-self.mu * t).exp());
                }
            }
            SplitKind::Discrete => {
                let step = if sign > 0.0 {
                    restricted.clone()
                } else {
                    restricted
                        .clone()
                        .try_inverse()
                        .unwrap_or_else(|| restricted.clone())
                };
                let mut power = DMatrix::identity(restricted.nrows(), restricted.nrows());
                for i in 0..=20 {
                    let smin = power.singular_values().min();
                    best = best.min(smin * (-self.mu * i as f64).exp());
                    power = &step * power;
                }
            }
        }
        0.99 * best
    }
}

/// Splitting by the sign of `Re λ` for the eigenvalues of `D`.
pub fn split_derivation(group: &GroupSpec, d: &Derivation, tol: f64) -> Result<DynSplit> {
    if d.matrix().nrows() != group.dim() {
        return Err(Error::structural(
            "derivation does not match the group dimension",
        ));
    }
    build_split(group, d.matrix(), tol, SplitKind::Flow)
}

/// Splitting by `|α|` against 1 for the eigenvalues of an algebra automorphism `P`.
pub fn split_automorphism(group: &GroupSpec, p: &DMatrix<f64>, tol: f64) -> Result<DynSplit> {
    let n = group.dim();
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::structural(format!("automorphism must be {n}x{n}")));
    }
    let lu = p.clone().lu();
    let det = lu.determinant();
    let scale = p.norm().max(1.0).powi(n as i32);
    if !det.is_finite() || det.abs() <= 1e-12 * scale {
        return Err(Error::structural("automorphism matrix is not invertible"));
    }
    let e =
        |i: usize| AlgebraVector::new(DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 }));
    for i in 0..n {
        for j in 0..n {
            let lhs = p * group.bracket(&e(i), &e(j))?.into_inner();
            let pi = AlgebraVector::new(p.column(i).into_owned());
            let pj = AlgebraVector::new(p.column(j).into_owned());
            let rhs = group.bracket(&pi, &pj)?.into_inner();
            if (lhs - rhs).norm() > 1e-8 * p.norm().max(1.0).powi(2) {
                return Err(Error::structural(format!(
                    "matrix is not an algebra automorphism on basis pair ({i}, {j})"
                )));
            }
        }
    }
    build_split(group, p, tol, SplitKind::Discrete)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosureReport {
    /// `max ‖(I − P^σ)[v, w]‖` over basis pairs of `g^σ`, in the order `+, 0, −`.
    pub plus: f64,
    pub zero: f64,
    pub minus: f64,
    /// `max ‖(I − P^±)[v, w]‖` for `v ∈ g⁰`, `w ∈ g^±`.
    pub zero_normalizes: f64,
    pub pass: bool,
}

/// Checks that each of `g⁺, g⁰, g⁻` is a subalgebra and that `g⁰` normalizes `g^±`.
pub fn check_subalgebra_closure(group: &GroupSpec, split: &DynSplit) -> Result<ClosureReport> {
    split.check_group(group)?;
    let n = group.dim();
    let resid = |target: SubspaceClass, a: &[AlgebraVector], b: &[AlgebraVector]| -> Result<f64> {
        let comp = DMatrix::identity(n, n) - split.projection(target);
        let mut worst = 0.0_f64;
        for v in a {
            for w in b {
                let br = group.bracket(v, w)?;
                worst = worst.max((&comp * br.coeffs()).norm());
            }
        }
        Ok(worst)
    };
    let plus = split.basis_vectors(SubspaceClass::Plus);
    let zero = split.basis_vectors(SubspaceClass::Zero);
    let minus = split.basis_vectors(SubspaceClass::Minus);
    let r_plus = resid(SubspaceClass::Plus, &plus, &plus)?;
    let r_zero = resid(SubspaceClass::Zero, &zero, &zero)?;
    let r_minus = resid(SubspaceClass::Minus, &minus, &minus)?;
    let r_norm =
        resid(SubspaceClass::Plus, &zero, &plus)?.max(resid(SubspaceClass::Minus, &zero, &minus)?);
    Ok(ClosureReport {
        plus: r_plus,
        zero: r_zero,
        minus: r_minus,
        zero_normalizes: r_norm,
        pass: r_plus.max(r_zero).max(r_minus).max(r_norm) < CLOSURE_TOL,
    })
}

/// Whether `G⁺,⁻ = G⁺G⁻` is a subgroup, i.e. `g⁺ ⊕ g⁻` is a subalgebra.
pub fn gpm_is_subgroup(group: &GroupSpec, split: &DynSplit) -> Result<bool> {
    split.check_group(group)?;
    let mut vs = split.basis_vectors(SubspaceClass::Plus);
    vs.extend(split.basis_vectors(SubspaceClass::Minus));
    let p0 = split.projection(SubspaceClass::Zero);
    for v in &vs {
        for w in &vs {
            if (p0 * group.bracket(v, w)?.coeffs()).norm() > CLOSURE_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Whether the connected subgroup integrating `g⁰` is compact.
///
/// Simply connected nilpotent groups have no nontrivial compact connected
/// subgroups; in SE(2) the compact ones are the trivial group and the
/// rotation groups about a point.
pub fn g0_is_compact(group: &GroupSpec, split: &DynSplit) -> Result<bool> {
    split.check_group(group)?;
    let k = split.dim(SubspaceClass::Zero);
    Ok(match group.family() {
        Family::Abelian { .. } | Family::NilpotentExpChart { .. } => k == 0,
        Family::Se2 => match k {
            0 => true,
            1 => split.basis_matrix(SubspaceClass::Zero)[(2, 0)].abs() > 1e-10,
            _ => false,
        },
    })
}

/// Structural flags of a split, as serialized in reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitFlags {
    pub hyperbolic: bool,
    pub g0_compact: bool,
    pub gpm_subgroup: bool,
    /// All supported families are solvable, hence decomposable.
    pub decomposable: bool,
}

pub fn split_flags(group: &GroupSpec, split: &DynSplit) -> Result<SplitFlags> {
    Ok(SplitFlags {
        hyperbolic: split.is_hyperbolic(),
        g0_compact: g0_is_compact(group, split)?,
        gpm_subgroup: gpm_is_subgroup(group, split)?,
        decomposable: true,
    })
}

/// `f(X + Y) = exp(X)·exp(Y)` for `X ∈ g⁺`, `Y ∈ g⁻`.
pub fn chart_gpm(
    group: &GroupSpec,
    split: &DynSplit,
    v_plus: &AlgebraVector,
    v_minus: &AlgebraVector,
) -> Result<GroupElement> {
    split.check_group(group)?;
    if v_plus.len() != group.dim() || v_minus.len() != group.dim() {
        return Err(Error::structural("algebra vector has the wrong dimension"));
    }
    if !split.in_subspace(SubspaceClass::Plus, v_plus) {
        return Err(Error::domain(
            "first argument of the G⁺G⁻ chart is not in g⁺",
        ));
    }
    if !split.in_subspace(SubspaceClass::Minus, v_minus) {
        return Err(Error::domain(
            "second argument of the G⁺G⁻ chart is not in g⁻",
        ));
    }
    group.multiply(&group.exp_chart(v_plus)?, &group.exp_chart(v_minus)?)
}

/// Split coordinates `(ζ⁺, ζ⁻)` of the G⁺G⁻ chart.
#[derive(Debug, Clone, PartialEq)]
pub struct GpmCoords {
    pub plus: DVector<f64>,
    pub minus: DVector<f64>,
}

impl GpmCoords {
    pub fn stacked(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.plus.len() + self.minus.len());
        v.rows_mut(0, self.plus.len()).copy_from(&self.plus);
        v.rows_mut(self.plus.len(), self.minus.len())
            .copy_from(&self.minus);
        v
    }

    pub fn from_stacked(split: &DynSplit, z: &DVector<f64>) -> Self {
        let p = split.dim(SubspaceClass::Plus);
        let m = split.dim(SubspaceClass::Minus);
        GpmCoords {
            plus: z.rows(0, p).into_owned(),
            minus: z.rows(p, m).into_owned(),
        }
    }
}

/// The chart `f` through orthonormal subspace coordinates.
pub fn gpm_from_coords(group: &GroupSpec, split: &DynSplit, z: &GpmCoords) -> Result<GroupElement> {
    let vp = AlgebraVector::new(split.basis_matrix(SubspaceClass::Plus) * &z.plus);
    let vm = AlgebraVector::new(split.basis_matrix(SubspaceClass::Minus) * &z.minus);
    split.check_group(group)?;
    group.multiply(&group.exp_chart(&vp)?, &group.exp_chart(&vm)?)
}

/// Inverse of [`gpm_from_coords`]; fails when `x` is not in `G⁺G⁻`.
pub fn gpm_coords(group: &GroupSpec, split: &DynSplit, x: &GroupElement) -> Result<GpmCoords> {
    split.check_group(group)?;
    let not_in = || Error::domain("element is not in G⁺G⁻");
    match group.family() {
        Family::Abelian { .. } => {
            let v = group.log_chart(x)?;
            if (split.projection(SubspaceClass::Zero) * v.coeffs()).norm()
                > 1e-10 * (1.0 + v.norm())
            {
                return Err(not_in());
            }
            Ok(GpmCoords {
                plus: split.component_coords(SubspaceClass::Plus, &v),
                minus: split.component_coords(SubspaceClass::Minus, &v),
            })
        }
        Family::Se2 => {
            if x.coords()[2].abs() > 1e-12 {
                return Err(not_in());
            }
            let v = AlgebraVector::from_slice(&[x.coords()[0], x.coords()[1], 0.0]);
            if (split.projection(SubspaceClass::Zero) * v.coeffs()).norm()
                > 1e-10 * (1.0 + v.norm())
            {
                return Err(not_in());
            }
            Ok(GpmCoords {
                plus: split.component_coords(SubspaceClass::Plus, &v),
                minus: split.component_coords(SubspaceClass::Minus, &v),
            })
        }
        Family::NilpotentExpChart { .. } => {
            let v = group.log_chart(x)?;
            if split.dim(SubspaceClass::Minus) == 0 || split.dim(SubspaceClass::Plus) == 0 {
                if (split.projection(SubspaceClass::Zero) * v.coeffs()).norm()
                    > 1e-10 * (1.0 + v.norm())
                {
                    return Err(not_in());
                }
                return Ok(GpmCoords {
                    plus: split.component_coords(SubspaceClass::Plus, &v),
                    minus: split.component_coords(SubspaceClass::Minus, &v),
                });
            }
            let blocks = [
                split.basis_matrix(SubspaceClass::Plus),
                split.basis_matrix(SubspaceClass::Minus),
            ];
            let start = split.component_coords(SubspaceClass::Plus, &v);
            let start_m = split.component_coords(SubspaceClass::Minus, &v);
            let mut z0 = DVector::zeros(start.len() + start_m.len());
            z0.rows_mut(0, start.len()).copy_from(&start);
            z0.rows_mut(start.len(), start_m.len()).copy_from(&start_m);
            let z = solve_product(group, x, &blocks, z0).map_err(|e| match e {
                Error::Convergence { .. } => not_in(),
                other => other,
            })?;
            Ok(GpmCoords::from_stacked(split, &z))
        }
    }
}

/// Solves `exp(B₁a₁)·…·exp(B_r a_r) = g` for the stacked coefficients by
/// Gauss–Newton on the exponential chart.
fn solve_product(
    group: &GroupSpec,
    g: &GroupElement,
    blocks: &[DMatrix<f64>],
    start: DVector<f64>,
) -> Result<DVector<f64>> {
    let g_inv = group.inverse(g)?;
    let scale = 1.0 + group.log_chart(g)?.norm();
    let residual = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let mut prod = g_inv.clone();
        let mut off = 0;
        for b in blocks {
            let k = b.ncols();
            let v = AlgebraVector::new(b * z.rows(off, k));
            prod = group.multiply(&prod, &group.exp_chart(&v)?)?;
            off += k;
        }
        Ok(group.log_chart(&prod)?.into_inner())
    };
    let mut z = start;
    let mut r = residual(&z)?;
    let h = 1e-6;
    for _ in 0..60 {
        if r.norm() <= 1e-14 * scale {
            break;
        }
        let mut jac = DMatrix::zeros(r.len(), z.len());
        for j in 0..z.len() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let col = (residual(&zp)? - residual(&zm)?) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let step = jac
            .svd(true, true)
            .solve(&r, 1e-12)
            .map_err(|e| Error::structural(format!("factorization Jacobian solve failed: {e}")))?;
        let z_new = &z - step;
        let r_new = residual(&z_new)?;
        if r_new.norm() >= r.norm() {
            break;
        }
        z = z_new;
        r = r_new;
    }
    if r.norm() > 1e-10 * scale {
        return Err(Error::Convergence {
            context: "group factorization".into(),
            iterations: 60,
            residual: r.norm(),
        });
    }
    Ok(z)
}

/// Factors `g = x·y` with `x ∈ G⁺G⁻` and `y ∈ G⁰`.
pub fn decompose_element(
    group: &GroupSpec,
    split: &DynSplit,
    g: &GroupElement,
) -> Result<(GroupElement, GroupElement)> {
    split.check_group(group)?;
    if g.group_fingerprint() != group.fingerprint() {
        return Err(Error::structural("element belongs to a different group"));
    }
    let n0 = split.dim(SubspaceClass::Zero);
    if n0 == 0 {
        return Ok((g.clone(), group.identity()));
    }
    if n0 == group.dim() {
        return Ok((group.identity(), g.clone()));
    }
    let (x, y) = match group.family() {
        Family::Abelian { .. } => {
            let v = g.coords();
            let x = split.projection_gpm() * v;
            let y = split.projection(SubspaceClass::Zero) * v;
            (group.element(x.as_slice())?, group.element(y.as_slice())?)
        }
        Family::Se2 => {
            let b = split.basis_matrix(SubspaceClass::Zero);
            if n0 != 1 || b[(2, 0)].abs() < 1e-10 {
                return Err(Error::structural(
                    "SE(2) factorization needs g⁰ to be a rotation subalgebra",
                ));
            }
            // g⁰ = span(θ + w) integrates to rotations about c = J w
            let (w1, w2) = (b[(0, 0)] / b[(2, 0)], b[(1, 0)] / b[(2, 0)]);
            let (c1, c2) = (-w2, w1);
            let angle = g.coords()[2];
            let (s, cs) = angle.sin_cos();
            let (rc1, rc2) = (cs * c1 - s * c2, s * c1 + cs * c2);
            let y = group.element(&[c1 - rc1, c2 - rc2, angle])?;
            let x = group.element(&[g.coords()[0] - c1 + rc1, g.coords()[1] - c2 + rc2, 0.0])?;
            (x, y)
        }
        Family::NilpotentExpChart { .. } => {
            let blocks = [
                split.basis_matrix(SubspaceClass::Plus),
                split.basis_matrix(SubspaceClass::Minus),
                split.basis_matrix(SubspaceClass::Zero),
            ];
            let v = group.log_chart(g)?;
            let zs = split.split_coords(&v);
            let (p, z) = (split.dim(SubspaceClass::Plus), n0);
            let m = split.dim(SubspaceClass::Minus);
            let mut start = DVector::zeros(group.dim());
            start.rows_mut(0, p).copy_from(&zs.rows(0, p));
            start.rows_mut(p, m).copy_from(&zs.rows(p + z, m));
            start.rows_mut(p + m, z).copy_from(&zs.rows(p, z));
            let sol = solve_product(group, g, &blocks, start)?;
            let coords = GpmCoords {
                plus: sol.rows(0, p).into_owned(),
                minus: sol.rows(p, m).into_owned(),
            };
            let x = gpm_from_coords(group, split, &coords)?;
            let y = group.exp_chart(&AlgebraVector::new(&blocks[2] * sol.rows(p + m, z)))?;
            (x, y)
        }
    };
    let back = group.multiply(&x, &y)?;
    let residual = group.distance_total(&back, g)?;
    if residual > 1e-10 * (1.0 + g.coords().norm()) {
        return Err(Error::Convergence {
            context: "element factorization".into(),
            iterations: 1,
            residual,
        });
    }
    Ok((x, y))
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitSummary {
    pub kind: SplitKind,
    pub dims: [usize; 3],
    pub basis_plus: Vec<Vec<f64>>,
    pub basis_zero: Vec<Vec<f64>>,
    pub basis_minus: Vec<Vec<f64>>,
    pub eigenvalues: Vec<Eigenvalue>,
    pub spectral_gap: f64,
    pub growth_constant: f64,
    pub warnings: Vec<String>,
}

impl DynSplit {
    pub fn summary(&self) -> SplitSummary {
        let vecs = |class| {
            self.basis_vectors(class)
                .iter()
                .map(|v| v.coeffs().iter().cloned().collect())
                .collect()
        };
        SplitSummary {
            kind: self.kind,
            dims: self.dims,
            basis_plus: vecs(SubspaceClass::Plus),
            basis_zero: vecs(SubspaceClass::Zero),
            basis_minus: vecs(SubspaceClass::Minus),
            eigenvalues: self.eigenvalues.clone(),
            spectral_gap: self.mu,
            growth_constant: self.c,
            warnings: self.warnings.clone(),
        }
    }
}
