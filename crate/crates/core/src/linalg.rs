//! Dense complex linear algebra for the small dimensions this crate works in
//! (at most a few dozen per party).
//!
//! Everything is row-major and self-contained: a one-sided Jacobi SVD and a
//! cyclic Jacobi eigensolver for Hermitian matrices.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative cutoff below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-8;

/// Largest dimension a Kronecker product may produce.
pub const MAX_PRODUCT_DIM: usize = 1 << 20;

const MAX_SWEEPS: usize = 100;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CVector {
    data: Vec<C64>,
}

impl CVector {
    pub fn zeros(dim: usize) -> Self {
        Self { data: vec![C64::default(); dim] }
    }

    pub fn from_vec(data: Vec<C64>) -> Self {
        Self { data }
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[i] = re(1.0);
        v
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn dot(&self, other: &CVector) -> C64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: C64) -> CVector {
        CVector::from_vec(self.data.iter().map(|z| z * s).collect())
    }

    pub fn normalized(&self) -> Option<CVector> {
        let n = self.norm();
        (n > 0.0).then(|| self.scale(re(1.0 / n)))
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Column matrix `|v><v|`.
    pub fn outer(&self, other: &CVector) -> CMatrix {
        CMatrix::from_fn(self.dim(), other.dim(), |i, j| self.data[i] * other.data[j].conj())
    }
}

impl serde::Serialize for CVector {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = ser.serialize_seq(Some(self.data.len()))?;
        for z in &self.data {
            seq.serialize_element(&[z.re, z.im])?;
        }
        seq.end()
    }
}

impl Index<usize> for CVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for CVector {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.data[i]
    }
}

impl Add for &CVector {
    type Output = CVector;
    fn add(self, rhs: &CVector) -> CVector {
        CVector::from_vec(self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &CVector {
    type Output = CVector;
    fn sub(self, rhs: &CVector) -> CVector {
        CVector::from_vec(self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::default(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { re(1.0) } else { C64::default() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        Self::from_fn(n, n, |i, j| if i == j { re(entries[i]) } else { C64::default() })
    }

    /// Orthogonal projector onto the given computational basis indices.
    pub fn index_projector(dim: usize, indices: &[usize]) -> Self {
        let mut m = Self::zeros(dim, dim);
        for &i in indices {
            m[(i, i)] = re(1.0);
        }
        m
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(dim: usize, cols: &[CVector]) -> Self {
        Self::from_fn(dim, cols.len(), |i, j| cols[j][i])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> CVector {
        CVector::from_vec((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest entry modulus.
    pub fn norm_inf(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Off-diagonal entries all below `tol`.
    pub fn is_diagonal(&self, tol: f64) -> bool {
        (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self[(i, j)].norm() <= tol))
    }

    /// Frobenius inner product `tr(self† other)`.
    pub fn frobenius_dot(&self, other: &CMatrix) -> C64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn mul_vec(&self, v: &CVector) -> CVector {
        assert_eq!(self.cols, v.dim(), "matrix-vector dimension mismatch");
        CVector::from_vec(
            (0..self.rows)
                .map(|i| {
                    let row = &self.data[i * self.cols..(i + 1) * self.cols];
                    row.iter().zip(v.as_slice()).map(|(a, b)| a * b).sum()
                })
                .collect(),
        )
    }

    pub fn commutator(&self, other: &CMatrix) -> CMatrix {
        &(self * other) - &(other * self)
    }

    /// Compression `Q† self Q`.
    pub fn compress(&self, q: &CMatrix) -> CMatrix {
        &(&q.adjoint() * self) * q
    }
}

/// Nested rows of `[re, im]` pairs.
impl serde::Serialize for CMatrix {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = ser.serialize_seq(Some(self.rows))?;
        for r in 0..self.rows {
            let row: Vec<[f64; 2]> = (0..self.cols).map(|j| {
                let z = self[(r, j)];
                [z.re, z.im]
            }).collect();
            seq.serialize_element(&row)?;
        }
        seq.end()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::default() {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Kronecker product, left operand as the slow index.
pub fn kron(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let rows = a.rows.checked_mul(b.rows).ok_or(Error::TooLarge(usize::MAX))?;
    let cols = a.cols.checked_mul(b.cols).ok_or(Error::TooLarge(usize::MAX))?;
    if rows > MAX_PRODUCT_DIM || cols > MAX_PRODUCT_DIM {
        return Err(Error::TooLarge(rows.max(cols)));
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| {
        a[(i / b.rows, j / b.cols)] * b[(i % b.rows, j % b.cols)]
    }))
}

pub fn kron_vec(a: &CVector, b: &CVector) -> Result<CVector> {
    let dim = a.dim().checked_mul(b.dim()).ok_or(Error::TooLarge(usize::MAX))?;
    if dim > MAX_PRODUCT_DIM {
        return Err(Error::TooLarge(dim));
    }
    let mut out = Vec::with_capacity(dim);
    for x in a.as_slice() {
        for y in b.as_slice() {
            out.push(x * y);
        }
    }
    Ok(CVector::from_vec(out))
}

#[derive(Clone, Debug)]
pub struct Svd {
    /// `m x p` with `p = min(m, n)`, orthonormal columns.
    pub u: CMatrix,
    /// Descending, length `p`.
    pub s: Vec<f64>,
    /// `n x n` unitary; the trailing `n - rank` columns span the nullspace.
    pub v: CMatrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        numerical_rank(&self.s)
    }

    pub fn sigma_max(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }

    pub fn nullspace(&self) -> Vec<CVector> {
        (self.rank()..self.v.cols()).map(|j| self.v.column(j)).collect()
    }

    pub fn reconstruct(&self) -> CMatrix {
        let m = self.u.rows();
        let n = self.v.rows();
        CMatrix::from_fn(m, n, |i, j| {
            (0..self.s.len()).map(|k| self.u[(i, k)] * self.s[k] * self.v[(j, k)].conj()).sum()
        })
    }
}

/// Count of singular values above `RANK_TOL * sigma_max`; zero for the zero matrix.
pub fn numerical_rank(s: &[f64]) -> usize {
    let max = s.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > RANK_TOL * max).count()
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(m: &CMatrix) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::Invalid("svd of non-finite matrix".into()));
    }
    let (rows, n) = (m.rows(), m.cols());
    // Work column-major: cols[j] is column j of A·V.
    let mut cols: Vec<Vec<C64>> = (0..n).map(|j| m.column(j).into_vec()).collect();
    let mut v: Vec<Vec<C64>> = (0..n).map(|j| CVector::basis(n, j).into_vec()).collect();

    let fro2: f64 = cols.iter().flatten().map(|z| z.norm_sqr()).sum();
    let negligible = (f64::EPSILON * f64::EPSILON) * fro2;
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = cols[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma: C64 = cols[p].iter().zip(&cols[q]).map(|(a, b)| a.conj() * b).sum();
                let g = gamma.norm();
                if g == 0.0 || g <= 1e-15 * (alpha * beta).sqrt() || alpha.min(beta) <= negligible {
                    continue;
                }
                rotated = true;
                // Phase a_q so that <a_p|a_q> becomes real, then rotate.
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate_pair(&mut cols, p, q, phase, cs, sn);
                rotate_pair(&mut v, p, q, phase, cs, sn);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { routine: "svd", sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<(f64, usize)> = cols
        .iter()
        .enumerate()
        .map(|(j, col)| (col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(), j))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let p = rows.min(n);
    let s: Vec<f64> = order.iter().take(p).map(|x| x.0).collect();
    let v_mat = CMatrix::from_fn(n, n, |i, j| v[order[j].1][i]);

    let rank = numerical_rank(&s);
    let mut u_cols: Vec<CVector> = Vec::with_capacity(p);
    for &(sigma, j) in order.iter().take(rank) {
        u_cols.push(CVector::from_vec(cols[j].clone()).scale(re(1.0 / sigma)));
    }
    complete_orthonormal(rows, &mut u_cols, p);
    Ok(Svd { u: CMatrix::from_columns(rows, &u_cols), s, v: v_mat })
}

fn rotate_pair(cols: &mut [Vec<C64>], p: usize, q: usize, phase: C64, cs: f64, sn: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let a = &mut lo[p];
    let b = &mut hi[0];
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let yq = *y * phase;
        let xp = *x;
        *x = xp * cs - yq * sn;
        *y = xp * sn + yq * cs;
    }
}

/// Extend `vecs` (orthonormal) to `target` orthonormal vectors in C^dim by
/// Gram-Schmidt against the computational basis.
pub fn complete_orthonormal(dim: usize, vecs: &mut Vec<CVector>, target: usize) {
    let mut k = 0;
    while vecs.len() < target && k < dim {
        let mut cand = CVector::basis(dim, k);
        for _ in 0..2 {
            for u in vecs.iter() {
                let proj = u.dot(&cand);
                cand = &cand - &u.scale(proj);
            }
        }
        if cand.norm() > 1e-6 {
            vecs.push(cand.normalized().expect("nonzero"));
        }
        k += 1;
    }
}

/// Orthonormal basis of the column span of `vecs`.
pub fn orthonormal_span(dim: usize, vecs: &[CVector]) -> Result<Vec<CVector>> {
    if vecs.is_empty() {
        return Ok(Vec::new());
    }
    let svd = svd(&CMatrix::from_columns(dim, vecs))?;
    let r = svd.rank();
    Ok((0..r).map(|j| svd.u.column(j)).collect())
}

#[derive(Clone, Debug)]
pub struct Eigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector for `values[k]`.
    pub vectors: CMatrix,
}

/// Cyclic Jacobi eigensolver for Hermitian matrices.
pub fn hermitian_eig(h: &CMatrix) -> Result<Eigen> {
    if !h.is_square() {
        return Err(Error::Dimension(format!("{}x{} is not square", h.rows(), h.cols())));
    }
    let dev = h.hermitian_deviation();
    if dev > 1e-9 {
        return Err(Error::NotHermitian(dev));
    }
    let n = h.rows();
    // Symmetrize exactly.
    let mut a = CMatrix::from_fn(n, n, |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5);
    let mut v = CMatrix::identity(n);
    let scale = a.norm_fro().max(f64::MIN_POSITIVE);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let g = apq.norm();
                if g <= 1e-300 {
                    continue;
                }
                let phase = (apq / g).conj();
                let theta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * g);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                // U on (p,q): [[c, s], [-s e, c e]] with e = phase.
                let u = [[re(cs), re(sn)], [-phase * sn, phase * cs]];
                apply_right(&mut a, p, q, &u);
                apply_left_adjoint(&mut a, p, q, &u);
                apply_right(&mut v, p, q, &u);
                a[(p, q)] = C64::default();
                a[(q, p)] = C64::default();
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence { routine: "hermitian_eig", sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(Eigen { values, vectors })
}

fn apply_right(m: &mut CMatrix, p: usize, q: usize, u: &[[C64; 2]; 2]) {
    for i in 0..m.rows() {
        let x = m[(i, p)];
        let y = m[(i, q)];
        m[(i, p)] = x * u[0][0] + y * u[1][0];
        m[(i, q)] = x * u[0][1] + y * u[1][1];
    }
}

fn apply_left_adjoint(m: &mut CMatrix, p: usize, q: usize, u: &[[C64; 2]; 2]) {
    for j in 0..m.cols() {
        let x = m[(p, j)];
        let y = m[(q, j)];
        m[(p, j)] = u[0][0].conj() * x + u[1][0].conj() * y;
        m[(q, j)] = u[0][1].conj() * x + u[1][1].conj() * y;
    }
}

/// Groups of consecutive (ascending) eigenvalues closer than `tol`.
pub fn cluster_eigenvalues(values: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (k, &x) in values.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if (x - values[*g.last().unwrap()]).abs() <= tol => g.push(k),
            _ => groups.push(vec![k]),
        }
    }
    groups
}
