//! Orthogonality-preserving local measurements (OPLMs).
//!
//! For a party `p` the OPLM space is the real span of Hermitian `E` with
//! `<psi_i|E_p|psi_j> = 0` for all `i != j`. Positive elements of it are the
//! POVM effects that keep every pair of post-measurement states orthogonal.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eig, re, svd, CMatrix, CVector, C64};
use crate::state::{apply_local, restrict_to_supports, PartySpace, StateSet};

/// Residual tolerance for span membership and constraint checks.
pub const SPAN_TOL: f64 = 1e-8;
/// Completeness tolerance for `sum M_k^dag M_k = I`.
pub const COMPLETENESS_TOL: f64 = 1e-8;
/// A state is eliminated at an outcome when its post-measurement norm is below this.
pub const ELIMINATION_TOL: f64 = 1e-9;
const COMMUTE_TOL: f64 = 1e-8;
const MAX_BLOCKS: usize = 20;
const ABS_RANK_FLOOR: f64 = 1e-12;

/// Orthonormal (trace inner product) basis of the real Hermitian `d x d`
/// matrices: diagonal units, then for each `k < l` the pair
/// `(E_kl + E_lk)/sqrt2`, `(-i E_kl + i E_lk)/sqrt2`.
pub fn hermitian_basis(d: usize) -> Vec<CMatrix> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut out: Vec<CMatrix> = (0..d).map(|k| CMatrix::index_projector(d, &[k])).collect();
    for k in 0..d {
        for l in k + 1..d {
            let mut x = CMatrix::zeros(d, d);
            x[(k, l)] = re(h);
            x[(l, k)] = re(h);
            out.push(x);
            let mut y = CMatrix::zeros(d, d);
            y[(k, l)] = c(0.0, -h);
            y[(l, k)] = c(0.0, h);
            out.push(y);
        }
    }
    out
}

/// Coordinates of a Hermitian matrix in [`hermitian_basis`].
pub fn hermitian_coords(m: &CMatrix) -> Vec<f64> {
    let d = m.rows();
    let s = std::f64::consts::SQRT_2;
    let mut out: Vec<f64> = (0..d).map(|k| m[(k, k)].re).collect();
    for k in 0..d {
        for l in k + 1..d {
            // tr(X m) and tr(Y m) for the two off-diagonal generators.
            out.push(s * m[(k, l)].re);
            out.push(-s * m[(k, l)].im);
        }
    }
    out
}

fn from_coords(d: usize, x: &[f64]) -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = CMatrix::zeros(d, d);
    for k in 0..d {
        m[(k, k)] = re(x[k]);
    }
    let mut t = d;
    for k in 0..d {
        for l in k + 1..d {
            let z = c(h * x[t], -h * x[t + 1]);
            m[(k, l)] = z;
            m[(l, k)] = z.conj();
            t += 2;
        }
    }
    m
}

/// Per-state `d x rest` matrix with the chosen party's index first.
fn party_major(space: &PartySpace, v: &CVector, party: usize) -> Vec<Vec<C64>> {
    let dims = space.party_dims();
    let d = dims[party];
    let outer: usize = dims[..party].iter().product();
    let inner: usize = dims[party + 1..].iter().product();
    let mut t = vec![Vec::with_capacity(outer * inner); d];
    for o in 0..outer {
        for (a, row) in t.iter_mut().enumerate() {
            let off = (o * d + a) * inner;
            row.extend_from_slice(&v.as_slice()[off..off + inner]);
        }
    }
    t
}

/// Real constraint rows (two per pair `i < j`) over Hermitian coordinates.
/// All-zero rows are dropped.
fn constraint_rows(s: &StateSet, party: usize) -> Vec<Vec<f64>> {
    let d = s.space().dim(party);
    let mats: Vec<Vec<Vec<C64>>> = s.states().iter().map(|k| party_major(s.space(), k.amplitudes(), party)).collect();
    let sq = std::f64::consts::FRAC_1_SQRT_2;
    let mut rows = Vec::new();
    for i in 0..mats.len() {
        for j in i + 1..mats.len() {
            // C[a][b] = sum_r conj(psi_i[a,r]) psi_j[b,r], so <psi_i|E|psi_j> = sum E[a][b] C[a][b].
            let mut cm = vec![vec![C64::default(); d]; d];
            for a in 0..d {
                for b in 0..d {
                    cm[a][b] = mats[i][a].iter().zip(&mats[j][b]).map(|(x, y)| x.conj() * y).sum();
                }
            }
            let mut z: Vec<C64> = (0..d).map(|k| cm[k][k]).collect();
            for k in 0..d {
                for l in k + 1..d {
                    z.push((cm[k][l] + cm[l][k]) * sq);
                    z.push((cm[k][l] * c(0.0, -1.0) + cm[l][k] * c(0.0, 1.0)) * sq);
                }
            }
            let r: Vec<f64> = z.iter().map(|w| w.re).collect();
            let im: Vec<f64> = z.iter().map(|w| w.im).collect();
            for row in [r, im] {
                if row.iter().any(|x| x.abs() > ABS_RANK_FLOOR) {
                    rows.push(row);
                }
            }
        }
    }
    rows
}

/// Orthonormal basis of the real nullspace of `rows` (each of length `n`).
fn real_nullspace(rows: &[Vec<f64>], n: usize) -> Result<Vec<Vec<f64>>> {
    if rows.is_empty() {
        return Ok((0..n).map(|k| (0..n).map(|j| if j == k { 1.0 } else { 0.0 }).collect()).collect());
    }
    let m = CMatrix::from_fn(rows.len(), n, |i, j| re(rows[i][j]));
    let dec = svd(&m)?;
    // Constraint rows are O(1); an absolute floor keeps roundoff-only rows out of the rank.
    let floor = (crate::linalg::RANK_TOL * dec.sigma_max()).max(ABS_RANK_FLOOR);
    let rank = dec.s.iter().filter(|&&x| x > floor).count();
    Ok((rank..n).map(|j| (0..n).map(|i| dec.v[(i, j)].re).collect()).collect())
}

fn gram_schmidt_real(vecs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vecs {
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &out {
                let p: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
                for (x, y) in w.iter_mut().zip(u) {
                    *x -= p * y;
                }
            }
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            out.push(w.into_iter().map(|x| x / n).collect());
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct OplmSpace {
    pub party: usize,
    pub dim_party: usize,
    pub basis: Vec<CMatrix>,
    pub space_dim: usize,
    #[serde(skip)]
    coords: Vec<Vec<f64>>,
}

impl OplmSpace {
    /// Span of the given Hermitian matrices, orthonormalized.
    pub fn from_matrices(party: usize, mats: &[CMatrix]) -> Result<Self> {
        let d = mats.first().map(|m| m.rows()).ok_or_else(|| Error::Invalid("empty span".into()))?;
        for m in mats {
            if m.rows() != d || !m.is_square() {
                return Err(Error::Dimension("span matrices must share one square shape".into()));
            }
            let dev = m.hermitian_deviation();
            if dev > 1e-9 {
                return Err(Error::NotHermitian(dev));
            }
        }
        let coords = gram_schmidt_real(&mats.iter().map(hermitian_coords).collect::<Vec<_>>());
        Ok(Self::from_coords(party, d, coords))
    }

    fn from_coords(party: usize, d: usize, coords: Vec<Vec<f64>>) -> Self {
        let basis: Vec<CMatrix> = coords.iter().map(|x| from_coords(d, x)).collect();
        OplmSpace { party, dim_party: d, space_dim: basis.len(), basis, coords }
    }

    /// Span coefficients of `m` (its orthogonal projection).
    pub fn coefficients(&self, m: &CMatrix) -> Vec<f64> {
        let x = hermitian_coords(m);
        self.coords.iter().map(|b| b.iter().zip(&x).map(|(p, q)| p * q).sum()).collect()
    }

    /// `max |m - proj(m)|` over entries; also catches non-Hermitian input.
    pub fn residual(&self, m: &CMatrix) -> f64 {
        let coef = self.coefficients(m);
        let mut proj = CMatrix::zeros(self.dim_party, self.dim_party);
        for (k, b) in coef.iter().zip(&self.basis) {
            proj = &proj + &b.scale(re(*k));
        }
        (m - &proj).norm_inf()
    }

    pub fn contains(&self, m: &CMatrix) -> bool {
        m.rows() == self.dim_party && m.is_square() && self.residual(m) <= SPAN_TOL
    }

    pub fn combination(&self, coef: &[f64]) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim_party, self.dim_party);
        for (k, b) in coef.iter().zip(&self.basis) {
            out = &out + &b.scale(re(*k));
        }
        out
    }

    /// Diagonal vectors spanning `span ∩ diagonal matrices`.
    pub fn diagonal_subspace(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.dim_party;
        let n = self.space_dim;
        let rows: Vec<Vec<f64>> = (d..d * d).map(|t| self.coords.iter().map(|b| b[t]).collect()).collect();
        let null = real_nullspace(&rows, n)?;
        Ok(null
            .iter()
            .map(|cf| (0..d).map(|i| self.coords.iter().zip(cf).map(|(b, w)| b[i] * w).sum()).collect())
            .collect())
    }

    pub fn is_commuting(&self) -> bool {
        for (i, a) in self.basis.iter().enumerate() {
            for b in &self.basis[i + 1..] {
                if a.commutator(b).norm_inf() > COMMUTE_TOL {
                    return false;
                }
            }
        }
        true
    }
}

/// `max_{i<j} |<psi_i| E_party |psi_j>|`.
pub fn constraint_residual(s: &StateSet, party: usize, e: &CMatrix) -> Result<f64> {
    let moved = s
        .states()
        .iter()
        .map(|k| apply_local(s.space(), k.amplitudes(), party, e))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0f64;
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            worst = worst.max(s.states()[i].amplitudes().dot(&moved[j]).norm());
        }
    }
    Ok(worst)
}

pub fn oplm_space(s: &StateSet, party: usize) -> Result<OplmSpace> {
    if party >= s.space().parties() {
        return Err(Error::Invalid(format!("no party {party}")));
    }
    s.require_orthogonal()?;
    let d = s.space().dim(party);
    let rows = constraint_rows(s, party);
    let null = real_nullspace(&rows, d * d)?;
    Ok(OplmSpace::from_coords(party, d, null))
}

pub fn is_trivial(sp: &OplmSpace) -> bool {
    sp.space_dim == 1
}

#[derive(Clone, Debug, Serialize)]
pub struct Block {
    pub projector: CMatrix,
    /// Computational-basis indices when the projector is diagonal.
    pub support: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockStructure {
    pub blocks: Vec<Block>,
    pub commuting: bool,
}

fn diagonal_support(p: &CMatrix) -> Option<Vec<usize>> {
    if !p.is_diagonal(1e-9) {
        return None;
    }
    Some((0..p.rows()).filter(|&i| p[(i, i)].re > 0.5).collect())
}

/// Joint eigenspaces of a commuting basis, found by successive splitting.
pub fn block_structure(sp: &OplmSpace) -> Result<BlockStructure> {
    if !sp.is_commuting() {
        return Ok(BlockStructure { blocks: Vec::new(), commuting: false });
    }
    let d = sp.dim_party;
    let mut isos: Vec<Vec<CVector>> = vec![(0..d).map(|i| CVector::basis(d, i)).collect()];
    for e in &sp.basis {
        let tol = 1e-7 * e.norm_inf().max(1.0);
        let mut next = Vec::new();
        for q in isos {
            let qm = CMatrix::from_columns(d, &q);
            let small = e.compress(&qm);
            let eig = hermitian_eig(&small)?;
            for group in crate::linalg::cluster_eigenvalues(&eig.values, tol) {
                let cols: Vec<CVector> = group.iter().map(|&g| qm.mul_vec(&eig.vectors.column(g))).collect();
                next.push(cols);
            }
        }
        isos = next;
    }
    let mut blocks: Vec<Block> = isos
        .iter()
        .map(|q| {
            let mut p = CMatrix::zeros(d, d);
            for v in q {
                p = &p + &v.outer(v);
            }
            let p = CMatrix::from_fn(d, d, |i, j| {
                let z = p[(i, j)];
                c(if z.re.abs() < 1e-13 { 0.0 } else { z.re }, if z.im.abs() < 1e-13 { 0.0 } else { z.im })
            });
            Block { support: diagonal_support(&p), projector: p }
        })
        .collect();
    let first = |b: &Block| (0..d).find(|&i| b.projector[(i, i)].re > 1e-9).unwrap_or(d);
    blocks.sort_by_key(first);
    Ok(BlockStructure { blocks, commuting: true })
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalMeasurement {
    pub party: usize,
    pub outcomes: Vec<CMatrix>,
    pub labels: Vec<String>,
}

/// `P012` style label for a set of computational-basis indices.
pub fn index_label(idx: &[usize]) -> String {
    if idx.iter().all(|&i| i < 10) {
        format!("P{}", idx.iter().map(|i| i.to_string()).collect::<String>())
    } else {
        format!("P{{{}}}", idx.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","))
    }
}

fn projector_label(p: &CMatrix, fallback: String) -> String {
    match diagonal_support(p) {
        Some(idx) => index_label(&idx),
        None => fallback,
    }
}

impl LocalMeasurement {
    pub fn new(party: usize, outcomes: Vec<CMatrix>, labels: Vec<String>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::Invalid("measurement needs at least one outcome".into()));
        }
        if labels.len() != outcomes.len() {
            return Err(Error::Invalid("one label per outcome".into()));
        }
        let d = outcomes[0].cols();
        if outcomes.iter().any(|m| m.cols() != d || m.rows() != d) {
            return Err(Error::Dimension("outcome operators must be square and equal-sized".into()));
        }
        let m = LocalMeasurement { party, outcomes, labels };
        let r = m.completeness_residual();
        if r > COMPLETENESS_TOL {
            return Err(Error::Invalid(format!("completeness residual {r:.3e}")));
        }
        Ok(m)
    }

    /// `{P, I - P}` with labels derived from diagonal supports.
    pub fn two_outcome(party: usize, p: CMatrix) -> Result<Self> {
        let d = p.rows();
        let q = &CMatrix::identity(d) - &p;
        let lp = projector_label(&p, "Q".into());
        let lq = projector_label(&q, "I-Q".into());
        Self::new(party, vec![p, q], vec![lp, lq])
    }

    /// Projective measurement onto disjoint index sets covering `0..d`.
    pub fn from_index_sets(party: usize, d: usize, sets: &[Vec<usize>]) -> Result<Self> {
        let outcomes: Vec<CMatrix> = sets.iter().map(|s| CMatrix::index_projector(d, s)).collect();
        let labels = sets.iter().map(|s| index_label(s)).collect();
        Self::new(party, outcomes, labels)
    }

    pub fn dim(&self) -> usize {
        self.outcomes[0].cols()
    }

    pub fn effects(&self) -> Vec<CMatrix> {
        self.outcomes.iter().map(|m| &m.adjoint() * m).collect()
    }

    pub fn completeness_residual(&self) -> f64 {
        let d = self.dim();
        let mut sum = CMatrix::zeros(d, d);
        for e in self.effects() {
            sum = &sum + &e;
        }
        (&sum - &CMatrix::identity(d)).norm_inf()
    }

    /// Same effects up to outcome order.
    pub fn same_as(&self, other: &LocalMeasurement) -> bool {
        if self.party != other.party || self.outcomes.len() != other.outcomes.len() {
            return false;
        }
        let a = self.effects();
        let b = other.effects();
        a.iter().all(|x| b.iter().any(|y| (x - y).norm_inf() <= 1e-9))
    }
}

/// Worst post-measurement overlap `|<psi_i|M_k^dag M_k|psi_j>|` over outcomes and pairs.
pub fn orthogonality_violation(s: &StateSet, m: &LocalMeasurement) -> Result<f64> {
    check_fits(s, m)?;
    let mut worst = 0.0f64;
    for e in m.effects() {
        worst = worst.max(constraint_residual(s, m.party, &e)?);
    }
    Ok(worst)
}

fn check_fits(s: &StateSet, m: &LocalMeasurement) -> Result<()> {
    if m.party >= s.space().parties() {
        return Err(Error::Invalid(format!("no party {}", m.party)));
    }
    if m.dim() != s.space().dim(m.party) {
        return Err(Error::Dimension(format!(
            "measurement of dimension {} on party {} of dimension {}",
            m.dim(),
            m.party,
            s.space().dim(m.party)
        )));
    }
    Ok(())
}

pub fn is_orthogonality_preserving(s: &StateSet, m: &LocalMeasurement) -> Result<bool> {
    Ok(orthogonality_violation(s, m)? <= SPAN_TOL)
}

fn in_span_projectors(sp: &OplmSpace, blocks: &[CMatrix]) -> Result<Vec<CMatrix>> {
    let nb = blocks.len();
    if nb > MAX_BLOCKS {
        return Err(Error::Refused(format!("{nb} blocks exceed the enumeration limit of {MAX_BLOCKS}")));
    }
    let d = sp.dim_party;
    let mut out = Vec::new();
    if nb < 2 {
        return Ok(out);
    }
    // Subsets avoiding the last block: one representative per complement pair.
    for mask in 1usize..(1 << (nb - 1)) {
        let mut p = CMatrix::zeros(d, d);
        for (k, b) in blocks.iter().enumerate() {
            if mask >> k & 1 == 1 {
                p = &p + b;
            }
        }
        if sp.contains(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Two-outcome block projective measurements `{P_S, I - P_S}` inside the span.
pub fn projective_oplms(sp: &OplmSpace, bs: &BlockStructure) -> Result<Vec<LocalMeasurement>> {
    if !bs.commuting {
        return Err(Error::NonCommuting(format!(
            "party {} space of dimension {} has non-commuting basis elements; no joint block structure",
            sp.party, sp.space_dim
        )));
    }
    let blocks: Vec<CMatrix> = bs.blocks.iter().map(|b| b.projector.clone()).collect();
    in_span_projectors(sp, &blocks)?.into_iter().map(|p| LocalMeasurement::two_outcome(sp.party, p)).collect()
}

/// Index classes on which every diagonal element of the span agrees.
pub fn diagonal_blocks(sp: &OplmSpace) -> Result<Vec<Vec<usize>>> {
    let diag = sp.diagonal_subspace()?;
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in 0..sp.dim_party {
        match blocks.iter_mut().find(|b| diag.iter().all(|v| (v[i] - v[b[0]]).abs() < 1e-7)) {
            Some(b) => b.push(i),
            None => blocks.push(vec![i]),
        }
    }
    Ok(blocks)
}

/// Search candidates for one party: in-span projectors built from
/// computational-basis blocks of the diagonal subspace, plus joint-eigenblock
/// projectors when the span commutes. Works whether or not the span commutes.
pub fn candidate_measurements(s: &StateSet, party: usize) -> Result<Vec<LocalMeasurement>> {
    let sp = oplm_space(s, party)?;
    candidate_measurements_in(&sp)
}

pub fn candidate_measurements_in(sp: &OplmSpace) -> Result<Vec<LocalMeasurement>> {
    let d = sp.dim_party;
    if d < 2 || sp.space_dim < 2 {
        return Ok(Vec::new());
    }
    let idx_blocks: Vec<CMatrix> = diagonal_blocks(sp)?.iter().map(|b| CMatrix::index_projector(d, b)).collect();
    let mut projs = in_span_projectors(sp, &idx_blocks)?;
    let bs = block_structure(sp)?;
    if bs.commuting && bs.blocks.iter().any(|b| b.support.is_none()) {
        let eb: Vec<CMatrix> = bs.blocks.iter().map(|b| b.projector.clone()).collect();
        let id = CMatrix::identity(d);
        for p in in_span_projectors(sp, &eb)? {
            let q = &id - &p;
            if !projs.iter().any(|x| (x - &p).norm_inf() <= 1e-8 || (x - &q).norm_inf() <= 1e-8) {
                projs.push(p);
            }
        }
    }
    projs.into_iter().map(|p| LocalMeasurement::two_outcome(sp.party, p)).collect()
}

/// Per outcome, the labels of states with `||M_k psi_i|| <= 1e-9`.
pub fn eliminable_states(s: &StateSet, m: &LocalMeasurement) -> Result<Vec<Vec<String>>> {
    let v = orthogonality_violation(s, m)?;
    if v > SPAN_TOL {
        return Err(Error::NotOplm(format!("post-measurement overlap {v:.3e} on party {}", m.party)));
    }
    let mut out = Vec::new();
    for op in &m.outcomes {
        let mut gone = Vec::new();
        for k in s.states() {
            if apply_local(s.space(), k.amplitudes(), m.party, op)?.norm() <= ELIMINATION_TOL {
                gone.push(k.label().to_string());
            }
        }
        out.push(gone);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Irreducibility {
    #[serde(rename = "IRREDUCIBLE-EXACT")]
    IrreducibleExact,
    #[serde(rename = "IRREDUCIBLE-IN-CLASS")]
    IrreducibleInClass,
    #[serde(rename = "REDUCIBLE")]
    Reducible,
}

#[derive(Clone, Debug, Serialize)]
pub struct IrreducibilityReport {
    pub verdict: Irreducibility,
    /// Local support dimension of each party.
    pub support_dims: Vec<usize>,
    /// OPLM space dimension of each party on the restricted supports.
    pub space_dims: Vec<usize>,
    pub witness: Option<LocalMeasurement>,
    pub transcript: Vec<String>,
}

/// OPLM space dimensions after restricting every party to its local support.
/// A party with a one-dimensional support has only scalar operators.
pub fn restricted_space_dims(s: &StateSet) -> Result<(Vec<usize>, Vec<usize>)> {
    let (r, isos) = restrict_to_supports(s)?;
    let mut support = Vec::new();
    let mut dims = Vec::new();
    for (p, q) in isos.iter().enumerate() {
        support.push(q.cols());
        dims.push(if q.cols() <= 1 { 1 } else { oplm_space(&r, p)?.space_dim });
    }
    Ok((support, dims))
}

/// True when every outcome either keeps all states or none: nothing is eliminated.
fn eliminates_something(s: &StateSet, m: &LocalMeasurement) -> Result<bool> {
    for op in &m.outcomes {
        let mut kept = 0;
        let mut gone = 0;
        for k in s.states() {
            if apply_local(s.space(), k.amplitudes(), m.party, op)?.norm() <= ELIMINATION_TOL {
                gone += 1;
            } else {
                kept += 1;
            }
        }
        if kept > 0 && gone > 0 {
            return Ok(true);
        }
    }
    Ok(false)
}

pub fn is_locally_irreducible(s: &StateSet) -> Result<IrreducibilityReport> {
    s.require_orthogonal()?;
    let (support_dims, space_dims) = restricted_space_dims(s)?;
    let mut transcript = Vec::new();
    for p in 0..space_dims.len() {
        transcript.push(format!(
            "party {}: support dim {}, OPLM space dim {}",
            PartySpace::party_name(p),
            support_dims[p],
            space_dims[p]
        ));
    }
    if space_dims.iter().all(|&d| d == 1) {
        return Ok(IrreducibilityReport {
            verdict: Irreducibility::IrreducibleExact,
            support_dims,
            space_dims,
            witness: None,
            transcript,
        });
    }
    for p in 0..s.space().parties() {
        let cands = candidate_measurements(s, p)?;
        transcript.push(format!("party {}: {} candidate measurements", PartySpace::party_name(p), cands.len()));
        for m in cands {
            if eliminates_something(s, &m)? {
                transcript.push(format!("party {}: {:?} eliminates states", PartySpace::party_name(p), m.labels));
                return Ok(IrreducibilityReport {
                    verdict: Irreducibility::Reducible,
                    support_dims,
                    space_dims,
                    witness: Some(m),
                    transcript,
                });
            }
        }
    }
    Ok(IrreducibilityReport { verdict: Irreducibility::IrreducibleInClass, support_dims, space_dims, witness: None, transcript })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture, FixtureName};
    use crate::linalg::kron;
    use crate::state::make_ket;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair_00_11() -> StateSet {
        let sp = PartySpace::new(vec![2, 2]).unwrap();
        let a = make_ket(&sp, &[(re(1.0), vec![0, 0])], "00").unwrap();
        let b = make_ket(&sp, &[(re(1.0), vec![1, 1])], "11").unwrap();
        StateSet::new(sp, vec![a, b], "pair").unwrap()
    }

    #[test]
    fn coordinates_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = from_coords(4, &x);
        assert!(m.hermitian_deviation() < 1e-15);
        let back = hermitian_coords(&m);
        assert!(x.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-14));
        let basis = hermitian_basis(4);
        for (k, b) in basis.iter().enumerate() {
            assert!((hermitian_coords(b)[k] - 1.0).abs() < 1e-15);
            assert!((b.frobenius_dot(b).re - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn s1_party_a_space() {
        let s1 = fixture(FixtureName::S1);
        let sp = oplm_space(&s1, 0).unwrap();
        assert_eq!(sp.space_dim, 2);
        assert!(sp.contains(&CMatrix::identity(4)));
        assert!(sp.contains(&CMatrix::diag(&[1.0, 0.0, 0.0, 0.0])));
        assert!(!sp.contains(&CMatrix::diag(&[1.0, 1.0, 0.0, 0.0])));
        let bs = block_structure(&sp).unwrap();
        assert!(bs.commuting);
        let supports: Vec<_> = bs.blocks.iter().map(|b| b.support.clone().unwrap()).collect();
        assert_eq!(supports, vec![vec![0], vec![1, 2, 3]]);
        let ms = projective_oplms(&sp, &bs).unwrap();
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].labels, vec!["P0", "P123"]);
        assert!(is_orthogonality_preserving(&s1, &ms[0]).unwrap());
    }

    #[test]
    fn tiles_space_is_trivial() {
        let t = fixture(FixtureName::Tiles33);
        for p in 0..2 {
            let sp = oplm_space(&t, p).unwrap();
            assert_eq!(sp.space_dim, 1);
            assert!(is_trivial(&sp));
            let bs = block_structure(&sp).unwrap();
            assert!(projective_oplms(&sp, &bs).unwrap().is_empty());
        }
    }

    #[test]
    fn pair_space_is_diagonal() {
        let s = pair_00_11();
        let sp = oplm_space(&s, 0).unwrap();
        // Every constraint carries a factor <0|1> on B, so the whole Hermitian space survives.
        assert_eq!(sp.space_dim, 4);
        assert!(!block_structure(&sp).unwrap().commuting);
        let r = is_locally_irreducible(&s).unwrap();
        assert_eq!(r.verdict, Irreducibility::Reducible);
        let w = r.witness.unwrap();
        assert_eq!(w.party, 0);
        assert_eq!(w.labels, vec!["P0", "P1"]);
    }

    #[test]
    fn single_state_has_full_space() {
        let sp = PartySpace::new(vec![3, 2]).unwrap();
        let k = make_ket(&sp, &[(re(1.0), vec![0, 0])], "x").unwrap();
        let s = StateSet::new(sp, vec![k], "one").unwrap();
        let o = oplm_space(&s, 0).unwrap();
        assert_eq!(o.space_dim, 9);
        assert!(!is_trivial(&o));
    }

    #[test]
    fn block_structure_examples() {
        let sp = OplmSpace::from_matrices(0, &[CMatrix::identity(4)]).unwrap();
        let bs = block_structure(&sp).unwrap();
        assert_eq!(bs.blocks.len(), 1);
        assert_eq!(bs.blocks[0].support, Some(vec![0, 1, 2, 3]));

        let x = CMatrix::from_rows(2, 2, vec![re(0.0), re(1.0), re(1.0), re(0.0)]).unwrap();
        let sp = OplmSpace::from_matrices(0, &[CMatrix::identity(2), x.clone()]).unwrap();
        let bs = block_structure(&sp).unwrap();
        assert!(bs.commuting);
        assert_eq!(bs.blocks.len(), 2);
        for b in &bs.blocks {
            assert!(b.support.is_none());
            assert!(x.commutator(&b.projector).norm_inf() < 1e-12);
            assert!((b.projector.trace().re - 1.0).abs() < 1e-12);
        }
        let ms = projective_oplms(&sp, &bs).unwrap();
        assert_eq!(ms.len(), 1);

        let p = CMatrix::diag(&[1.0, 1.0, 0.0, 0.0]);
        let sp = OplmSpace::from_matrices(0, &[CMatrix::identity(4), p.clone()]).unwrap();
        let ms = projective_oplms(&sp, &block_structure(&sp).unwrap()).unwrap();
        assert_eq!(ms.len(), 1);
        assert!((&ms[0].outcomes[0] - &p).norm_inf() < 1e-12);
        assert_eq!(ms[0].labels, vec!["P01", "P23"]);

        let z = CMatrix::diag(&[1.0, -1.0]);
        let sp = OplmSpace::from_matrices(0, &[CMatrix::identity(2), x, z]).unwrap();
        let bs = block_structure(&sp).unwrap();
        assert!(!bs.commuting && bs.blocks.is_empty());
        assert!(matches!(projective_oplms(&sp, &bs), Err(Error::NonCommuting(_))));
    }

    #[test]
    fn s1_elimination_pattern() {
        let s1 = fixture(FixtureName::S1);
        let m = LocalMeasurement::from_index_sets(0, 4, &[vec![0], vec![1, 2, 3]]).unwrap();
        let e = eliminable_states(&s1, &m).unwrap();
        assert_eq!(e[0].len(), 12);
        assert_eq!(e[1], vec!["0|01+", "0|01-", "0|23+", "0|23-"]);
        let id = LocalMeasurement::new(0, vec![CMatrix::identity(4)], vec!["I".into()]).unwrap();
        assert!(eliminable_states(&s1, &id).unwrap()[0].is_empty());
        let bad = LocalMeasurement::from_index_sets(0, 4, &[vec![0, 1], vec![2, 3]]).unwrap();
        assert!(matches!(eliminable_states(&s1, &bad), Err(Error::NotOplm(_))));
    }

    #[test]
    fn irreducibility_verdicts() {
        let t = is_locally_irreducible(&fixture(FixtureName::Tiles33)).unwrap();
        assert_eq!(t.verdict, Irreducibility::IrreducibleExact);
        assert_eq!(t.space_dims, vec![1, 1]);
        let s1 = is_locally_irreducible(&fixture(FixtureName::S1)).unwrap();
        assert_eq!(s1.verdict, Irreducibility::Reducible);
        assert_eq!(s1.witness.unwrap().labels, vec!["P0", "P123"]);
    }

    #[test]
    fn s5_party_a_space() {
        let s5 = fixture(FixtureName::S5);
        let sp = oplm_space(&s5, 0).unwrap();
        assert_eq!(sp.space_dim, 2);
        let bs = block_structure(&sp).unwrap();
        let supports: Vec<_> = bs.blocks.iter().map(|b| b.support.clone().unwrap()).collect();
        assert_eq!(supports, vec![vec![0], vec![1, 2, 3]]);
    }

    #[test]
    fn s3_space_does_not_commute() {
        let s3 = fixture(FixtureName::S3);
        let b = oplm_space(&s3, 1).unwrap();
        assert!(!block_structure(&b).unwrap().commuting);
        let cands = candidate_measurements_in(&b).unwrap();
        assert!(cands.iter().any(|m| m.labels[0] == "P012"));
    }

    fn random_product_set(rng: &mut ChaCha8Rng, n: usize) -> StateSet {
        // Random orthogonal set: a random unitary on (3,3) applied to basis states, product
        // structure not needed for rank checks.
        let sp = PartySpace::new(vec![3, 3]).unwrap();
        let mut vecs: Vec<CVector> = Vec::new();
        while vecs.len() < n {
            let a = CVector::from_vec((0..3).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect());
            let b = if rng.gen_bool(0.5) {
                CVector::basis(3, rng.gen_range(0..3))
            } else {
                CVector::from_vec((0..3).map(|_| c(rng.gen_range(-1.0..1.0), 0.0)).collect())
            };
            let mut v = crate::linalg::kron_vec(&a, &b).unwrap();
            for u in &vecs {
                let p = u.dot(&v);
                v = &v - &u.scale(p);
            }
            if let Some(w) = v.normalized() {
                if v.norm() > 1e-3 {
                    vecs.push(w);
                }
            }
        }
        let kets = vecs
            .into_iter()
            .enumerate()
            .map(|(i, v)| crate::state::Ket::new(sp.clone(), v, format!("k{i}")).unwrap())
            .collect();
        StateSet::new(sp, kets, "rand").unwrap()
    }

    /// Second code path: dense `E (x) I` embedding, pairs and coordinates in reverse order.
    fn oracle_rank(s: &StateSet, party: usize) -> usize {
        let d = s.space().dim(party);
        let other = s.space().total_dim() / d;
        let basis: Vec<CMatrix> = hermitian_basis(d).into_iter().rev().collect();
        let embedded: Vec<CMatrix> = basis
            .iter()
            .map(|h| if party == 0 { kron(h, &CMatrix::identity(other)).unwrap() } else { kron(&CMatrix::identity(other), h).unwrap() })
            .collect();
        let n = s.len();
        let mut rows = Vec::new();
        for i in (0..n).rev() {
            for j in (0..i).rev() {
                let z: Vec<C64> = embedded
                    .iter()
                    .map(|e| s.states()[j].amplitudes().dot(&e.mul_vec(s.states()[i].amplitudes())))
                    .collect();
                rows.push(z.iter().map(|w| w.re).collect::<Vec<_>>());
                rows.push(z.iter().map(|w| w.im).collect::<Vec<_>>());
            }
        }
        if rows.is_empty() {
            return 0;
        }
        let m = CMatrix::from_fn(rows.len(), d * d, |i, j| re(rows[i][j]));
        let dec = svd(&m).unwrap();
        dec.s.iter().filter(|&&x| x > 1e-10).count()
    }

    #[test]
    fn agrees_with_reversed_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..30 {
            let n = 2 + trial % 5;
            let s = random_product_set(&mut rng, n);
            for p in 0..2 {
                let sp = oplm_space(&s, p).unwrap();
                assert_eq!(sp.space_dim, 9 - oracle_rank(&s, p), "trial {trial} party {p}");
            }
        }
        let t = fixture(FixtureName::Tiles33);
        assert_eq!(oracle_rank(&t, 0), 8);
    }

    #[test]
    fn random_span_samples_satisfy_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for name in [FixtureName::S1, FixtureName::S3, FixtureName::S5] {
            let s = fixture(name);
            for p in 0..2 {
                let sp = oplm_space(&s, p).unwrap();
                assert!(constraint_residual(&s, p, &CMatrix::identity(sp.dim_party)).unwrap() <= 1e-12);
                assert!(sp.residual(&CMatrix::identity(sp.dim_party)) <= 1e-8);
                for _ in 0..5 {
                    let coef: Vec<f64> = (0..sp.space_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let e = sp.combination(&coef);
                    assert!(constraint_residual(&s, p, &e).unwrap() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn local_unitary_on_other_party_keeps_dimension() {
        let s = fixture(FixtureName::S5);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut u = CMatrix::identity(4);
        u[(0, 0)] = re(h);
        u[(0, 1)] = c(0.0, h);
        u[(1, 0)] = c(0.0, h);
        u[(1, 1)] = re(h);
        let rotated: Vec<_> = s
            .states()
            .iter()
            .map(|k| crate::state::Ket::new(s.space().clone(), k.apply_local_raw(1, &u).unwrap(), k.label()).unwrap())
            .collect();
        let r = StateSet::new(s.space().clone(), rotated, "rot").unwrap();
        assert_eq!(oplm_space(&r, 0).unwrap().space_dim, oplm_space(&s, 0).unwrap().space_dim);
    }
}
