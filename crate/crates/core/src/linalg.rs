//! Dense linear algebra helpers not provided by nalgebra: an ordered real
//! Schur form and eigenbasis conditioning.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

/// An eigenvalue `re ± i·im` of one diagonal block of a real Schur form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEigen {
    pub re: f64,
    pub im: f64,
}

/// Real Schur form `M = Q T Qᵀ` with explicit 1×1 / 2×2 block bookkeeping.
#[derive(Debug, Clone)]
pub struct RealSchur {
    pub q: DMatrix<f64>,
    pub t: DMatrix<f64>,
    /// Start index and size of each diagonal block, in order.
    pub blocks: Vec<(usize, usize)>,
}

impl RealSchur {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::structural("Schur form needs a square matrix"));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("matrix has non-finite entries"));
        }
        let n = m.nrows();
        let schur =
            m.clone()
                .try_schur(f64::EPSILON, 10_000)
                .ok_or_else(|| Error::Convergence {
                    context: "real Schur decomposition".into(),
                    iterations: 10_000,
                    residual: f64::NAN,
                })?;
        let (q, t) = schur.unpack();
        let mut s = RealSchur {
            q,
            t,
            blocks: Vec::new(),
        };
        let scale = m.norm().max(1.0);
        let mut i = 0;
        while i < n {
            if i + 1 < n && s.t[(i + 1, i)].abs() > 1e-14 * scale {
                if !s.split_real_pair(i) {
                    s.blocks.push((i, 2));
                    i += 2;
                    continue;
                }
            }
            if i + 1 < n {
                s.t[(i + 1, i)] = 0.0;
            }
            s.blocks.push((i, 1));
            i += 1;
        }
        Ok(s)
    }

    /// Triangularizes a 2×2 block with real eigenvalues. Returns false for a complex pair.
    fn split_real_pair(&mut self, k: usize) -> bool {
        let (a, b, c, d) = (
            self.t[(k, k)],
            self.t[(k, k + 1)],
            self.t[(k + 1, k)],
            self.t[(k + 1, k + 1)],
        );
        let half = 0.5 * (a - d);
        let disc = half * half + b * c;
        if disc < 0.0 {
            return false;
        }
        let lambda = 0.5 * (a + d) + disc.sqrt().copysign(if half == 0.0 { 1.0 } else { half });
        // eigenvector of [[a, b], [c, d]] for lambda
        let (mut v1, mut v2) = if (lambda - a).abs() + b.abs() >= (lambda - d).abs() + c.abs() {
            (b, lambda - a)
        } else {
            (lambda - d, c)
        };
        let norm = v1.hypot(v2);
        if norm == 0.0 {
            return false;
        }
        v1 /= norm;
        v2 /= norm;
        let g = DMatrix::from_row_slice(2, 2, &[v1, -v2, v2, v1]);
        self.apply_rotation(k, &g);
        self.t[(k + 1, k)] = 0.0;
        true
    }

    /// `T ← Gᵀ T G` and `Q ← Q G` where `G` acts on indices `k..k+g.nrows()`.
    fn apply_rotation(&mut self, k: usize, g: &DMatrix<f64>) {
        let w = g.nrows();
        let n = self.t.nrows();
        let rows = self.t.rows(k, w).into_owned();
        self.t.rows_mut(k, w).copy_from(&(g.transpose() * rows));
        let cols = self.t.columns(k, w).into_owned();
        self.t.columns_mut(k, w).copy_from(&(cols * g));
        let qcols = self.q.columns(k, w).into_owned();
        self.q.columns_mut(k, w).copy_from(&(qcols * g));
        debug_assert_eq!(self.q.nrows(), n);
    }

    pub fn block_eigen(&self, idx: usize) -> BlockEigen {
        let (k, size) = self.blocks[idx];
        if size == 1 {
            BlockEigen {
                re: self.t[(k, k)],
                im: 0.0,
            }
        } else {
            let (a, b, c, d) = (
                self.t[(k, k)],
                self.t[(k, k + 1)],
                self.t[(k + 1, k)],
                self.t[(k + 1, k + 1)],
            );
            let half = 0.5 * (a - d);
            let disc = half * half + b * c;
            BlockEigen {
                re: 0.5 * (a + d),
                im: (-disc).max(0.0).sqrt(),
            }
        }
    }

    /// Swaps the adjacent blocks `idx` and `idx + 1`.
    fn swap_blocks(&mut self, idx: usize) -> Result<()> {
        let (k, p) = self.blocks[idx];
        let (_, q) = self.blocks[idx + 1];
        let t11 = self.t.view((k, k), (p, p)).into_owned();
        let t12 = self.t.view((k, k + p), (p, q)).into_owned();
        let t22 = self.t.view((k + p, k + p), (q, q)).into_owned();
        // T11 X − X T22 = T12 via the Kronecker form on column-major vec(X)
        let ip = DMatrix::<f64>::identity(p, p);
        let iq = DMatrix::<f64>::identity(q, q);
        let sys = iq.kronecker(&t11) - t22.transpose().kronecker(&ip);
        let rhs = nalgebra::DVector::from_column_slice(t12.as_slice());
        let sol = sys
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::structural("Schur block swap: blocks share an eigenvalue"))?;
        let x = DMatrix::from_column_slice(p, q, sol.as_slice());
        let w = p + q;
        let mut basis = DMatrix::zeros(w, w);
        basis.view_mut((0, 0), (p, q)).copy_from(&(-&x));
        basis.view_mut((p, 0), (q, q)).copy_from(&iq);
        basis.view_mut((0, q), (p, p)).copy_from(&ip);
        let g = basis.qr().q();
        self.apply_rotation(k, &g);
        for r in k + q..k + w {
            for c in k..k + q {
                self.t[(r, c)] = 0.0;
            }
        }
        self.blocks[idx] = (k, q);
        self.blocks[idx + 1] = (k + q, p);
        Ok(())
    }

    /// Reorders blocks so that those selected by `pick` lead, preserving the
    /// relative order otherwise. Returns the number of leading columns.
    pub fn reorder_leading(&mut self, pick: impl Fn(BlockEigen) -> bool) -> Result<usize> {
        let nb = self.blocks.len();
        let picked: Vec<bool> = (0..nb).map(|i| pick(self.block_eigen(i))).collect();
        let mut flags = picked;
        // stable bubble: move each picked block left past unpicked ones
        for i in 0..nb {
            if !flags[i] {
                continue;
            }
            let mut j = i;
            while j > 0 && !flags[j - 1] {
                self.swap_blocks(j - 1)?;
                flags.swap(j - 1, j);
                j -= 1;
            }
        }
        Ok(self
            .blocks
            .iter()
            .zip(&flags)
            .filter(|(_, f)| **f)
            .map(|(b, _)| b.1)
            .sum())
    }

    pub fn eigenvalues(&self) -> Vec<BlockEigen> {
        (0..self.blocks.len())
            .map(|i| self.block_eigen(i))
            .collect()
    }
}

/// Condition number `σ_max / σ_min` of a complex eigenvector basis of `m`, or
/// `None` when `m` is (numerically) defective.
pub fn eigenbasis_condition(m: &DMatrix<f64>) -> Result<Option<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Some(1.0));
    }
    let schur = RealSchur::new(m)?;
    let mut eigs: Vec<Complex<f64>> = Vec::new();
    for e in schur.eigenvalues() {
        eigs.push(Complex::new(e.re, e.im));
        if e.im != 0.0 {
            eigs.push(Complex::new(e.re, -e.im));
        }
    }
    let scale = m.norm().max(1.0);
    let cluster_tol = 1e-8 * scale;
    let mut clusters: Vec<(Complex<f64>, usize)> = Vec::new();
    for e in eigs {
        if let Some(c) = clusters.iter_mut().find(|c| (c.0 - e).norm() < cluster_tol) {
            c.1 += 1;
        } else {
            clusters.push((e, 1));
        }
    }
    let mc: DMatrix<Complex<f64>> = m.map(|x| Complex::new(x, 0.0));
    let mut vectors = DMatrix::<Complex<f64>>::zeros(n, n);
    let mut col = 0;
    for (lambda, mult) in clusters {
        let shifted = &mc - DMatrix::<Complex<f64>>::identity(n, n) * lambda;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        for &idx in order.iter().take(mult) {
            if svd.singular_values[idx] > 1e-7 * scale {
                return Ok(None);
            }
            for r in 0..n {
                vectors[(r, col)] = v_t[(idx, r)].conj();
            }
            col += 1;
        }
    }
    let sv = vectors.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smin <= 1e-10 * smax {
        return Ok(None);
    }
    Ok(Some(smax / smin))
}
