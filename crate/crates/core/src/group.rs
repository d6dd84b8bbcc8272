//! Arithmetic on the supported matrix Lie group families.
//!
//! Three families are supported:
//!
//! * `Abelian { dim }`: ℝⁿ realized as `[[I, v], [0, 1]]`; coordinates are `v`.
//! * `NilpotentExpChart`: a simply connected nilpotent group given by a basis of
//!   strictly upper-triangular matrices. Elements are stored in exponential
//!   coordinates, so the exponential chart is global and both `exp` and `log`
//!   are finite polynomial series on the realized matrices.
//! * `Se2`: rigid motions of the plane in 3×3 homogeneous form, stored as
//!   `(v₁, v₂, angle)` with `angle ∈ (−π, π]`. The algebra basis is
//!   `(e₁, e₂, θ)` with `[θ, e₁] = e₂` and `[θ, e₂] = −e₁`.
//!
//! Every element remembers the fingerprint of the group that produced it, so
//! mixing elements of different groups is reported instead of silently
//! producing garbage.

use std::f64::consts::PI;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const STRUCTURE_TOL: f64 = 1e-12;

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Abelian { dim: usize },
    NilpotentExpChart { step: usize },
    Se2,
}

/// Coefficients of a Lie algebra element in the basis of its [`GroupSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraVector(DVector<f64>);

impl AlgebraVector {
    pub fn new(coeffs: DVector<f64>) -> Self {
        AlgebraVector(coeffs)
    }

    pub fn from_slice(coeffs: &[f64]) -> Self {
        AlgebraVector(DVector::from_column_slice(coeffs))
    }

    pub fn zeros(dim: usize) -> Self {
        AlgebraVector(DVector::zeros(dim))
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Add for &AlgebraVector {
    type Output = AlgebraVector;
    fn add(self, rhs: &AlgebraVector) -> AlgebraVector {
        AlgebraVector(&self.0 + &rhs.0)
    }
}

impl Sub for &AlgebraVector {
    type Output = AlgebraVector;
    fn sub(self, rhs: &AlgebraVector) -> AlgebraVector {
        AlgebraVector(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &AlgebraVector {
    type Output = AlgebraVector;
    fn mul(self, rhs: f64) -> AlgebraVector {
        AlgebraVector(&self.0 * rhs)
    }
}

impl Neg for &AlgebraVector {
    type Output = AlgebraVector;
    fn neg(self) -> AlgebraVector {
        AlgebraVector(-&self.0)
    }
}

/// A group element: chart coordinates plus the realized matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    coords: DVector<f64>,
    matrix: DMatrix<f64>,
    group: u64,
}

impl GroupElement {
    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn group_fingerprint(&self) -> u64 {
        self.group
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|x| x.is_finite())
    }
}

/// A concrete matrix Lie group with a chosen Lie algebra basis.
#[derive(Debug, Clone)]
pub struct GroupSpec {
    family: Family,
    basis: Vec<DMatrix<f64>>,
    /// `c[i][j][k]` flattened as `(i * n + j) * n + k`.
    structure: Vec<f64>,
    ad: Vec<DMatrix<f64>>,
    /// Maps a column-major flattened matrix onto basis coefficients.
    projector: DMatrix<f64>,
    /// Rows of a linear map on element coordinates that never increases distances.
    embedding: DMatrix<f64>,
    fingerprint: u64,
}

impl PartialEq for GroupSpec {
    fn eq(&self, other: &Self) -> bool {
        self.fingerprint == other.fingerprint
    }
}

/// Removes pseudo-inverse round-off from values that are dyadic rationals.
fn snap(x: f64) -> f64 {
    let scaled = x * 1024.0;
    if (scaled - scaled.round()).abs() < 1e-9 {
        scaled.round() / 1024.0
    } else {
        x
    }
}

fn unit(n: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    m[(i, j)] = 1.0;
    m
}

fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a * b - b * a
}

/// `exp` of a nilpotent matrix; the series terminates at the matrix size.
pub(crate) fn unipotent_exp(n: &DMatrix<f64>) -> DMatrix<f64> {
    let size = n.nrows();
    let mut result = DMatrix::identity(size, size);
    let mut term = DMatrix::identity(size, size);
    for k in 1..size {
        term = &term * n / k as f64;
        result += &term;
    }
    result
}

/// `log` of a unipotent matrix; the series terminates at the matrix size.
pub(crate) fn unipotent_log(m: &DMatrix<f64>) -> DMatrix<f64> {
    let size = m.nrows();
    let n = m - DMatrix::identity(size, size);
    let mut result = DMatrix::zeros(size, size);
    let mut power = DMatrix::identity(size, size);
    for k in 1..size {
        power = &power * &n;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        result += &power * (sign / k as f64);
    }
    result
}

fn se2_matrix(v1: f64, v2: f64, angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    DMatrix::from_row_slice(3, 3, &[c, -s, v1, s, c, v2, 0.0, 0.0, 1.0])
}

/// `(sin θ / θ, (1 − cos θ) / θ)`, the entries of the SE(2) left Jacobian.
fn se2_v_coefficients(theta: f64) -> (f64, f64) {
    if theta.abs() < 1e-6 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta)
    }
}

/// `(φ/2)·cot(φ/2)`, the diagonal of the inverse SE(2) left Jacobian.
fn se2_vinv_diagonal(phi: f64) -> f64 {
    if phi.abs() < 1e-6 {
        1.0 - phi * phi / 12.0
    } else {
        let half = 0.5 * phi;
        half * half.cos() / half.sin()
    }
}

/// SE(2) logarithm on raw coordinates. At `angle = π` both branches share the
/// same norm, which is what [`GroupSpec::distance_total`] relies on.
fn se2_log_raw(v1: f64, v2: f64, angle: f64) -> [f64; 3] {
    let a = se2_vinv_diagonal(angle);
    let b = 0.5 * angle;
    [a * v1 + b * v2, -b * v1 + a * v2, angle]
}

impl GroupSpec {
    /// ℝⁿ in its affine realization.
    pub fn abelian(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::structural("abelian group needs dimension ≥ 1"));
        }
        let size = dim + 1;
        let basis = (0..dim).map(|i| unit(size, i, dim)).collect();
        Self::from_basis(Family::Abelian { dim }, basis)
    }

    /// SE(2) in 3×3 homogeneous matrices with basis `(e₁, e₂, θ)`.
    pub fn se2() -> Self {
        let e1 = unit(3, 0, 2);
        let e2 = unit(3, 1, 2);
        let theta = unit(3, 1, 0) - unit(3, 0, 1);
        Self::from_basis(Family::Se2, vec![e1, e2, theta]).expect("se(2) basis is valid")
    }

    /// The 3-dimensional Heisenberg group with basis `X = E₁₂, Y = E₂₃, Z = E₁₃`.
    pub fn heisenberg() -> Self {
        Self::nilpotent(vec![unit(3, 0, 1), unit(3, 1, 2), unit(3, 0, 2)])
            .expect("Heisenberg basis is valid")
    }

    /// A simply connected nilpotent group from strictly upper-triangular basis matrices.
    pub fn nilpotent(basis: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = basis.first() else {
            return Err(Error::structural("nilpotent group needs a non-empty basis"));
        };
        let size = first.nrows();
        for (idx, m) in basis.iter().enumerate() {
            if m.nrows() != size || m.ncols() != size {
                return Err(Error::structural(format!(
                    "basis matrix {idx} is {}x{}, expected {size}x{size}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            for i in 0..size {
                for j in 0..=i {
                    if m[(i, j)] != 0.0 {
                        return Err(Error::structural(format!(
                            "basis matrix {idx} is not strictly upper triangular (entry ({i},{j}))"
                        )));
                    }
                }
            }
        }
        Self::from_basis(Family::NilpotentExpChart { step: 0 }, basis)
    }

    fn from_basis(family: Family, basis: Vec<DMatrix<f64>>) -> Result<Self> {
        let dim = basis.len();
        let size = basis[0].nrows();
        let mut flat = DMatrix::zeros(size * size, dim);
        for (j, m) in basis.iter().enumerate() {
            flat.column_mut(j).copy_from_slice(m.as_slice());
        }
        let svd = flat.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin <= 1e-10 * smax.max(1.0) {
            return Err(Error::structural("basis matrices are linearly dependent"));
        }
        let projector = svd
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::structural(format!("pseudo-inverse failed: {e}")))?
            .map(snap);

        let mut structure = vec![0.0; dim * dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let br = commutator(&basis[i], &basis[j]);
                let coeffs = &projector * DVector::from_column_slice(br.as_slice());
                let back = &flat * &coeffs;
                let residual = (back - DVector::from_column_slice(br.as_slice())).norm();
                if residual > 1e-10 * (1.0 + br.norm()) {
                    return Err(Error::structural(format!(
                        "basis does not close under the commutator: [X{i}, X{j}] leaves the span (residual {residual:e})"
                    )));
                }
                for k in 0..dim {
                    structure[(i * dim + j) * dim + k] = snap(coeffs[k]);
                }
            }
        }

        let mut spec = GroupSpec {
            family,
            basis,
            structure,
            ad: Vec::new(),
            projector,
            embedding: DMatrix::zeros(0, dim),
            fingerprint: 0,
        };
        spec.check_structure_constants()?;
        spec.ad = (0..dim)
            .map(|i| DMatrix::from_fn(dim, dim, |k, j| spec.c(i, j, k)))
            .collect();

        if let Family::NilpotentExpChart { .. } = spec.family {
            let step = spec.compute_nilpotency_step()?;
            spec.family = Family::NilpotentExpChart { step };
        }
        spec.embedding = spec.build_embedding();

        let mut hasher = DefaultHasher::new();
        std::mem::discriminant(&spec.family).hash(&mut hasher);
        for m in &spec.basis {
            m.nrows().hash(&mut hasher);
            for x in m.iter() {
                x.to_bits().hash(&mut hasher);
            }
        }
        spec.fingerprint = hasher.finish();
        Ok(spec)
    }

    fn c(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.dim();
        self.structure[(i * n + j) * n + k]
    }

    fn check_structure_constants(&self) -> Result<()> {
        let n = self.dim();
        let scale = self.structure.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if (self.c(i, j, k) + self.c(j, i, k)).abs() > STRUCTURE_TOL * scale {
                        return Err(Error::structural(format!(
                            "structure constants not antisymmetric at ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        // Jacobi: Σ_l c[j][k][l] c[i][l][m] + cyclic = 0
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for m in 0..n {
                        let mut total = 0.0;
                        for l in 0..n {
                            total += self.c(j, k, l) * self.c(i, l, m)
                                + self.c(k, i, l) * self.c(j, l, m)
                                + self.c(i, j, l) * self.c(k, l, m);
                        }
                        if total.abs() > STRUCTURE_TOL * scale * scale {
                            return Err(Error::structural(format!(
                                "Jacobi identity fails for ({i},{j},{k}) component {m}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn compute_nilpotency_step(&self) -> Result<usize> {
        let n = self.dim();
        // lower central series on coefficient vectors
        let mut current: Vec<DVector<f64>> = (0..n)
            .map(|i| DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 }))
            .collect();
        for step in 1..=n + 1 {
            let mut next = Vec::new();
            for x in 0..n {
                for w in &current {
                    let br = &self.ad[x] * w;
                    if br.norm() > 1e-12 {
                        next.push(br);
                    }
                }
            }
            if next.is_empty() {
                return Ok(step);
            }
            current = orthonormal_span(&next, n);
        }
        Err(Error::structural("basis algebra is not nilpotent"))
    }

    fn build_embedding(&self) -> DMatrix<f64> {
        let n = self.dim();
        match self.family {
            Family::Se2 => DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            Family::Abelian { dim } => {
                let k = dim.min(3);
                DMatrix::from_fn(k, n, |r, c| if r == c { 1.0 } else { 0.0 })
            }
            Family::NilpotentExpChart { .. } => {
                // Coordinates of log along [g, g]^⊥ only see the linear part of BCH.
                let mut derived = Vec::new();
                for i in 0..n {
                    for j in 0..n {
                        let v = DVector::from_fn(n, |k, _| self.c(i, j, k));
                        if v.norm() > 1e-12 {
                            derived.push(v);
                        }
                    }
                }
                let derived = orthonormal_span(&derived, n);
                let mut complement = DMatrix::identity(n, n);
                for u in &derived {
                    complement -= u * u.transpose();
                }
                let cols: Vec<DVector<f64>> =
                    (0..n).map(|j| complement.column(j).into_owned()).collect();
                let rows = orthonormal_span(&cols, n);
                let k = rows.len().min(3);
                DMatrix::from_fn(k, n, |r, c| rows[r][c])
            }
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Dimension of the Lie algebra.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Size of the realizing square matrices.
    pub fn matrix_size(&self) -> usize {
        self.basis[0].nrows()
    }

    pub fn basis(&self) -> &[DMatrix<f64>] {
        &self.basis
    }

    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.c(i, j, k)
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Nilpotency step of the algebra (1 for abelian algebras, 0 when not nilpotent).
    pub fn nilpotency_step(&self) -> usize {
        match self.family {
            Family::Abelian { .. } => 1,
            Family::NilpotentExpChart { step } => step,
            Family::Se2 => 0,
        }
    }

    /// Compares user-supplied structure constants against the ones induced by the basis.
    pub fn validate_structure_constants(&self, given: &[Vec<Vec<f64>>]) -> Result<()> {
        let n = self.dim();
        if given.len() != n
            || given
                .iter()
                .any(|r| r.len() != n || r.iter().any(|c| c.len() != n))
        {
            return Err(Error::structural(format!(
                "structure constants must be a {n}x{n}x{n} array"
            )));
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if (given[i][j][k] - self.c(i, j, k)).abs() > STRUCTURE_TOL.max(1e-12) * 10.0 {
                        return Err(Error::structural(format!(
                            "structure constant c[{i}][{j}][{k}] = {} disagrees with the basis commutator ({})",
                            given[i][j][k],
                            self.c(i, j, k)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_member(&self, g: &GroupElement) -> Result<()> {
        if g.group != self.fingerprint {
            return Err(Error::structural("element belongs to a different group"));
        }
        Ok(())
    }

    fn check_algebra(&self, v: &AlgebraVector) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::structural(format!(
                "algebra vector has {} coefficients, group algebra has dimension {}",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn identity(&self) -> GroupElement {
        self.build(DVector::zeros(self.dim()))
    }

    fn build(&self, mut coords: DVector<f64>) -> GroupElement {
        let matrix = match self.family {
            Family::Se2 => {
                coords[2] = wrap_angle(coords[2]);
                se2_matrix(coords[0], coords[1], coords[2])
            }
            Family::Abelian { dim } => {
                let mut m = DMatrix::identity(dim + 1, dim + 1);
                for i in 0..dim {
                    m[(i, dim)] = coords[i];
                }
                m
            }
            Family::NilpotentExpChart { .. } => {
                unipotent_exp(&self.algebra_matrix_raw(coords.as_slice()))
            }
        };
        GroupElement {
            coords,
            matrix,
            group: self.fingerprint,
        }
    }

    /// Builds an element from chart coordinates (SE(2) angles are wrapped).
    pub fn element(&self, coords: &[f64]) -> Result<GroupElement> {
        if coords.len() != self.dim() {
            return Err(Error::structural(format!(
                "expected {} coordinates, got {}",
                self.dim(),
                coords.len()
            )));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("non-finite coordinate"));
        }
        Ok(self.build(DVector::from_column_slice(coords)))
    }

    /// Charts a realized matrix back to coordinates, checking that it lies on the group.
    pub fn from_matrix(&self, m: &DMatrix<f64>) -> Result<GroupElement> {
        let size = self.matrix_size();
        if m.nrows() != size || m.ncols() != size {
            return Err(Error::structural(format!(
                "expected a {size}x{size} matrix"
            )));
        }
        let coords = match self.family {
            Family::Se2 => {
                let r = m.view((0, 0), (2, 2));
                let orth = (r.transpose() * r - nalgebra::Matrix2::identity()).norm();
                let bottom = (m[(2, 0)].abs() + m[(2, 1)].abs() + (m[(2, 2)] - 1.0).abs()).max(0.0);
                if orth > 1e-8 || bottom > 1e-8 || r.determinant() < 0.0 {
                    return Err(Error::domain("matrix is not a rigid motion"));
                }
                DVector::from_column_slice(&[m[(0, 2)], m[(1, 2)], m[(1, 0)].atan2(m[(0, 0)])])
            }
            Family::Abelian { dim } => {
                let mut off = m.clone();
                for i in 0..dim {
                    off[(i, dim)] = 0.0;
                }
                if (off - DMatrix::identity(size, size)).norm() > 1e-8 {
                    return Err(Error::domain("matrix is not a translation"));
                }
                DVector::from_fn(dim, |i, _| m[(i, dim)])
            }
            Family::NilpotentExpChart { .. } => {
                for i in 0..size {
                    if (m[(i, i)] - 1.0).abs() > 1e-8 || (0..i).any(|j| m[(i, j)].abs() > 1e-8) {
                        return Err(Error::domain("matrix is not unipotent upper triangular"));
                    }
                }
                let log = unipotent_log(m);
                self.algebra_coords(&log)?.into_inner()
            }
        };
        Ok(self.build(coords))
    }

    pub(crate) fn algebra_matrix_raw(&self, coeffs: &[f64]) -> DMatrix<f64> {
        let size = self.matrix_size();
        let mut m = DMatrix::zeros(size, size);
        for (x, c) in self.basis.iter().zip(coeffs) {
            if *c != 0.0 {
                m += x * *c;
            }
        }
        m
    }

    /// `Σ vᵢ Xᵢ` as a matrix.
    pub fn algebra_matrix(&self, v: &AlgebraVector) -> Result<DMatrix<f64>> {
        self.check_algebra(v)?;
        Ok(self.algebra_matrix_raw(v.coeffs().as_slice()))
    }

    /// Projects a matrix onto the basis, failing if it is not in the algebra.
    pub fn algebra_coords(&self, m: &DMatrix<f64>) -> Result<AlgebraVector> {
        let size = self.matrix_size();
        if m.nrows() != size || m.ncols() != size {
            return Err(Error::structural(format!(
                "expected a {size}x{size} matrix"
            )));
        }
        let flat = DVector::from_column_slice(m.as_slice());
        let coeffs = &self.projector * &flat;
        let back = self.algebra_matrix_raw(coeffs.as_slice());
        let residual = (back - m).norm();
        if residual > 1e-9 * (1.0 + m.norm()) {
            return Err(Error::domain(format!(
                "matrix is not in the Lie algebra (residual {residual:e})"
            )));
        }
        Ok(AlgebraVector(coeffs))
    }

    pub fn multiply(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.check_member(a)?;
        self.check_member(b)?;
        Ok(match self.family {
            Family::Se2 => {
                let mut out = [0.0; 3];
                se2_mul_raw(a.coords.as_slice(), b.coords.as_slice(), &mut out);
                self.build(DVector::from_column_slice(&out))
            }
            Family::Abelian { .. } => self.build(&a.coords + &b.coords),
            Family::NilpotentExpChart { .. } => {
                let product = &a.matrix * &b.matrix;
                let log = unipotent_log(&product);
                let coeffs = &self.projector * DVector::from_column_slice(log.as_slice());
                self.build(coeffs)
            }
        })
    }

    pub fn inverse(&self, a: &GroupElement) -> Result<GroupElement> {
        self.check_member(a)?;
        Ok(match self.family {
            Family::Se2 => {
                let (s, c) = a.coords[2].sin_cos();
                let (v1, v2) = (a.coords[0], a.coords[1]);
                self.build(DVector::from_column_slice(&[
                    -(c * v1 + s * v2),
                    -(-s * v1 + c * v2),
                    -a.coords[2],
                ]))
            }
            _ => self.build(-&a.coords),
        })
    }

    /// Conjugation `y g y⁻¹`.
    pub fn conjugate(&self, y: &GroupElement, g: &GroupElement) -> Result<GroupElement> {
        let yg = self.multiply(y, g)?;
        self.multiply(&yg, &self.inverse(y)?)
    }

    pub fn exp_chart(&self, v: &AlgebraVector) -> Result<GroupElement> {
        self.check_algebra(v)?;
        if !v.is_finite() {
            return Err(Error::domain("non-finite algebra vector"));
        }
        let c = v.coeffs();
        Ok(match self.family {
            Family::Se2 => {
                let (a, b) = se2_v_coefficients(c[2]);
                self.build(DVector::from_column_slice(&[
                    a * c[0] - b * c[1],
                    b * c[0] + a * c[1],
                    c[2],
                ]))
            }
            _ => self.build(c.clone()),
        })
    }

    pub fn log_chart(&self, g: &GroupElement) -> Result<AlgebraVector> {
        self.check_member(g)?;
        Ok(match self.family {
            Family::Se2 => {
                let angle = g.coords[2];
                if angle == PI {
                    return Err(Error::domain(
                        "SE(2) logarithm is undefined on the chart cut angle = π",
                    ));
                }
                AlgebraVector::from_slice(&se2_log_raw(g.coords[0], g.coords[1], angle))
            }
            _ => AlgebraVector(g.coords.clone()),
        })
    }

    /// Left-invariant chart distance `‖log(a⁻¹b)‖₂`.
    pub fn distance(&self, a: &GroupElement, b: &GroupElement) -> Result<f64> {
        let rel = self.multiply(&self.inverse(a)?, b)?;
        Ok(self.log_chart(&rel)?.norm())
    }

    /// Same as [`distance`](Self::distance) but total: on the SE(2) cut both
    /// logarithm branches have the same norm, which is returned.
    pub fn distance_total(&self, a: &GroupElement, b: &GroupElement) -> Result<f64> {
        match self.family {
            Family::Se2 => {
                self.check_member(a)?;
                self.check_member(b)?;
                Ok(se2_distance_raw(a.coords.as_slice(), b.coords.as_slice()))
            }
            _ => self.distance(a, b),
        }
    }

    /// Distance from the identity, total on the SE(2) cut.
    pub fn norm_from_identity(&self, g: &GroupElement) -> Result<f64> {
        self.distance_total(&self.identity(), g)
    }

    pub fn bracket(&self, v: &AlgebraVector, w: &AlgebraVector) -> Result<AlgebraVector> {
        self.check_algebra(v)?;
        self.check_algebra(w)?;
        Ok(AlgebraVector(
            self.ad_matrix_raw(v.coeffs().as_slice()) * w.coeffs(),
        ))
    }

    pub(crate) fn ad_matrix_raw(&self, v: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, vi) in v.iter().enumerate() {
            if *vi != 0.0 {
                m += &self.ad[i] * *vi;
            }
        }
        m
    }

    /// Matrix of `ad(v)` in the basis.
    pub fn ad_matrix(&self, v: &AlgebraVector) -> Result<DMatrix<f64>> {
        self.check_algebra(v)?;
        Ok(self.ad_matrix_raw(v.coeffs().as_slice()))
    }

    /// Matrix of `Ad(y)` in the basis, computed from the realized conjugation.
    pub fn adjoint(&self, y: &GroupElement) -> Result<DMatrix<f64>> {
        self.check_member(y)?;
        let n = self.dim();
        let inv = y
            .matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::structural("realized matrix is singular"))?;
        let mut out = DMatrix::zeros(n, n);
        for (j, x) in self.basis.iter().enumerate() {
            let conj = &y.matrix * x * &inv;
            out.set_column(j, self.algebra_coords(&conj)?.coeffs());
        }
        Ok(out)
    }

    /// Product through the truncated Baker–Campbell–Hausdorff series on
    /// exponential coordinates. Exact for nilpotency step ≤ 4; kept as an
    /// independent cross-check of [`multiply`](Self::multiply).
    pub fn bch_multiply(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.check_member(a)?;
        self.check_member(b)?;
        match self.family {
            Family::Se2 => Err(Error::structural("BCH cross-check needs a nilpotent group")),
            Family::Abelian { .. } => Ok(self.build(&a.coords + &b.coords)),
            Family::NilpotentExpChart { step } if step > 4 => Err(Error::structural(format!(
                "BCH series is only implemented through degree 4 (step {step})"
            ))),
            Family::NilpotentExpChart { .. } => {
                let x = &a.coords;
                let y = &b.coords;
                let ad_x = self.ad_matrix_raw(x.as_slice());
                let ad_y = self.ad_matrix_raw(y.as_slice());
                let xy = &ad_x * y;
                let x_xy = &ad_x * &xy;
                let y_xy = &ad_y * &xy;
                let y_x_xy = &ad_y * &x_xy;
                let z = x + y + &xy * 0.5 + (&x_xy - &y_xy) / 12.0 - y_x_xy / 24.0;
                Ok(self.build(z))
            }
        }
    }

    /// Precomputes what is needed to evaluate many distances from `a`.
    pub fn distance_from(&self, a: &GroupElement) -> Result<DistanceFrom<'_>> {
        self.check_member(a)?;
        let inv_matrix = match self.family {
            Family::NilpotentExpChart { .. } => Some(self.inverse(a)?.matrix),
            _ => None,
        };
        Ok(DistanceFrom {
            group: self,
            a: a.coords.clone(),
            inv_matrix,
        })
    }

    /// Coordinates `E(g)` with `‖E(a) − E(b)‖ ≤ distance(a, b)`; used to
    /// prefilter neighbor searches.
    ///
    /// SE(2) uses `(v₁, v₂, cos φ, sin φ)`: the translation part of the
    /// logarithm is stretched by `(φ/2)/sin(φ/2) ≥ 1` and the chord is at most
    /// the wrapped angle.
    pub fn lower_bound_embedding(&self, g: &GroupElement) -> DVector<f64> {
        match self.family {
            Family::Se2 => {
                let c = &g.coords;
                DVector::from_column_slice(&[c[0], c[1], c[2].cos(), c[2].sin()])
            }
            _ => &self.embedding * &g.coords,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        match self.family {
            Family::Se2 => 4,
            _ => self.embedding.nrows(),
        }
    }
}

/// Distances from a fixed element, total on the SE(2) cut (see
/// [`GroupSpec::distance_total`]).
#[derive(Debug, Clone)]
pub struct DistanceFrom<'a> {
    group: &'a GroupSpec,
    a: DVector<f64>,
    inv_matrix: Option<DMatrix<f64>>,
}

impl DistanceFrom<'_> {
    pub fn to(&self, b: &GroupElement) -> f64 {
        debug_assert_eq!(b.group, self.group.fingerprint);
        match self.group.family {
            Family::Abelian { .. } => (&b.coords - &self.a).norm(),
            Family::Se2 => se2_distance_raw(self.a.as_slice(), b.coords.as_slice()),
            Family::NilpotentExpChart { .. } => {
                let inv = self
                    .inv_matrix
                    .as_ref()
                    .expect("nilpotent queries cache the inverse");
                if inv.nrows() <= SMALL {
                    return small_log_norm(
                        &self.group.projector,
                        inv.as_slice(),
                        b.matrix.as_slice(),
                        inv.nrows(),
                    );
                }
                let log = unipotent_log(&(inv * &b.matrix));
                (&self.group.projector * DVector::from_column_slice(log.as_slice())).norm()
            }
        }
    }
}

pub(crate) fn se2_mul_raw(a: &[f64], b: &[f64], out: &mut [f64]) {
    let (s, c) = a[2].sin_cos();
    out[0] = a[0] + c * b[0] - s * b[1];
    out[1] = a[1] + s * b[0] + c * b[1];
    out[2] = wrap_angle(a[2] + b[2]);
}

const SMALL: usize = 6;

/// `‖P·vec(log(A·B))‖` for unipotent `size × size` column-major `A`, `B`
/// without heap allocation.
fn small_log_norm(projector: &DMatrix<f64>, a: &[f64], b: &[f64], size: usize) -> f64 {
    let len = size * size;
    let mut n = [0.0; SMALL * SMALL];
    for j in 0..size {
        for i in 0..size {
            let mut acc = 0.0;
            for k in 0..size {
                acc += a[i + k * size] * b[k + j * size];
            }
            n[i + j * size] = acc - if i == j { 1.0 } else { 0.0 };
        }
    }
    let mut log = [0.0; SMALL * SMALL];
    let mut power = n;
    let mut next = [0.0; SMALL * SMALL];
    for k in 1..size {
        let coef = if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
        for idx in 0..len {
            log[idx] += coef * power[idx];
        }
        if k + 1 < size {
            for j in 0..size {
                for i in 0..size {
                    let mut acc = 0.0;
                    for m in 0..size {
                        acc += power[i + m * size] * n[m + j * size];
                    }
                    next[i + j * size] = acc;
                }
            }
            power = next;
        }
    }
    let mut total = 0.0;
    for r in 0..projector.nrows() {
        let mut acc = 0.0;
        for idx in 0..len {
            acc += projector[(r, idx)] * log[idx];
        }
        total += acc * acc;
    }
    total.sqrt()
}

pub(crate) fn se2_distance_raw(a: &[f64], b: &[f64]) -> f64 {
    let (s, c) = a[2].sin_cos();
    let (d1, d2) = (b[0] - a[0], b[1] - a[1]);
    let w1 = c * d1 + s * d2;
    let w2 = -s * d1 + c * d2;
    let angle = wrap_angle(b[2] - a[2]);
    let l = se2_log_raw(w1, w2, angle);
    (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt()
}

/// Orthonormal basis (Gram–Schmidt with re-orthogonalization) of the span of `vectors`.
pub(crate) fn orthonormal_span(vectors: &[DVector<f64>], dim: usize) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &out {
                let p = u.dot(&w);
                w -= u * p;
            }
        }
        let norm = w.norm();
        if norm > 1e-10 * (1.0 + v.norm()) {
            out.push(w / norm);
        }
        if out.len() == dim {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn abelian_product_adds() {
        let g = GroupSpec::abelian(1).unwrap();
        let p = g
            .multiply(&g.element(&[0.3]).unwrap(), &g.element(&[0.5]).unwrap())
            .unwrap();
        assert_abs_diff_eq!(p.coords()[0], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn heisenberg_product_formula() {
        let g = GroupSpec::heisenberg();
        let (a, b, c) = (0.7, -1.3, 0.4);
        let (a2, b2, c2) = (2.1, 0.6, -0.9);
        let p = g
            .multiply(
                &g.element(&[a, b, c]).unwrap(),
                &g.element(&[a2, b2, c2]).unwrap(),
            )
            .unwrap();
        let expect = [a + a2, b + b2, c + c2 + (a * b2 - a2 * b) / 2.0];
        for k in 0..3 {
            assert_abs_diff_eq!(p.coords()[k], expect[k], epsilon = 1e-13);
        }
    }

    #[test]
    fn heisenberg_exp_is_truncated_series() {
        let g = GroupSpec::heisenberg();
        let (a, b, c) = (1.5, -2.0, 0.25);
        let e = g.exp_chart(&AlgebraVector::from_slice(&[a, b, c])).unwrap();
        let m = e.matrix();
        assert_abs_diff_eq!(m[(0, 1)], a, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 2)], b, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 2)], c + a * b / 2.0, epsilon = 1e-15);
        let back = g.from_matrix(m).unwrap();
        assert_abs_diff_eq!((back.coords() - e.coords()).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn brackets_match_defining_relations() {
        let h = GroupSpec::heisenberg();
        let x = AlgebraVector::from_slice(&[1.0, 0.0, 0.0]);
        let y = AlgebraVector::from_slice(&[0.0, 1.0, 0.0]);
        assert_eq!(
            h.bracket(&x, &y).unwrap(),
            AlgebraVector::from_slice(&[0.0, 0.0, 1.0])
        );
        assert_eq!(h.bracket(&x, &x).unwrap(), AlgebraVector::zeros(3));

        let se = GroupSpec::se2();
        let theta = AlgebraVector::from_slice(&[0.0, 0.0, 1.0]);
        let e1 = AlgebraVector::from_slice(&[1.0, 0.0, 0.0]);
        let e2 = AlgebraVector::from_slice(&[0.0, 1.0, 0.0]);
        assert_eq!(se.bracket(&theta, &e1).unwrap(), e2);
        assert_eq!(se.bracket(&theta, &e2).unwrap(), -&e1);
    }

    #[test]
    fn abelian_distance_is_euclidean() {
        let g = GroupSpec::abelian(2).unwrap();
        let d = g
            .distance(&g.identity(), &g.element(&[3.0, 4.0]).unwrap())
            .unwrap();
        assert_abs_diff_eq!(d, 5.0, epsilon = 1e-15);
    }

    #[test]
    fn se2_chart_cut_is_an_error() {
        let g = GroupSpec::se2();
        let cut = g.element(&[1.0, 2.0, PI]).unwrap();
        assert!(matches!(g.log_chart(&cut), Err(Error::Domain(_))));
        assert!(g.distance(&g.identity(), &cut).is_err());
        // the norm itself is continuous across the cut
        let near = g.element(&[1.0, 2.0, PI - 1e-9]).unwrap();
        let d_near = g.distance(&g.identity(), &near).unwrap();
        let d_cut = g.distance_total(&g.identity(), &cut).unwrap();
        assert_abs_diff_eq!(d_near, d_cut, epsilon = 1e-7);
    }

    #[test]
    fn angle_is_wrapped_into_half_open_interval() {
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        let g = GroupSpec::se2();
        let e = g.element(&[0.0, 0.0, 7.0]).unwrap();
        assert!(e.coords()[2] > -PI && e.coords()[2] <= PI);
    }

    #[test]
    fn mismatched_groups_are_rejected() {
        let a = GroupSpec::abelian(3).unwrap();
        let h = GroupSpec::heisenberg();
        let err = a.multiply(&a.identity(), &h.identity()).unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn bad_bases_are_rejected() {
        let dependent = vec![unit(3, 0, 1), unit(3, 0, 1) * 2.0];
        assert!(GroupSpec::nilpotent(dependent).is_err());
        let not_closed = vec![unit(3, 0, 1), unit(3, 1, 2)];
        assert!(GroupSpec::nilpotent(not_closed).is_err());
        let lower = vec![unit(3, 1, 0)];
        assert!(GroupSpec::nilpotent(lower).is_err());
    }

    #[test]
    fn nilpotency_steps() {
        assert_eq!(GroupSpec::heisenberg().nilpotency_step(), 2);
        // 4x4 filiform: X = E12 + E34? use the standard E12, E23, E34 generators
        let basis = vec![
            unit(4, 0, 1),
            unit(4, 1, 2),
            unit(4, 2, 3),
            unit(4, 0, 2),
            unit(4, 1, 3),
            unit(4, 0, 3),
        ];
        let g = GroupSpec::nilpotent(basis).unwrap();
        assert_eq!(g.nilpotency_step(), 3);
        assert_eq!(g.embedding_dim(), 3);
    }

    #[test]
    fn user_structure_constants_are_checked() {
        let h = GroupSpec::heisenberg();
        let mut c = vec![vec![vec![0.0; 3]; 3]; 3];
        c[0][1][2] = 1.0;
        c[1][0][2] = -1.0;
        h.validate_structure_constants(&c).unwrap();
        c[0][1][2] = 2.0;
        assert!(h.validate_structure_constants(&c).is_err());
    }
}
