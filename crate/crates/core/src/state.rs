//! Multiparty pure states, state sets and their local structure.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, re, svd, CMatrix, CVector, C64};

/// Tolerance on the norm of stored kets.
pub const NORM_TOL: f64 = 1e-10;
/// Default orthogonality tolerance for Gram checks.
pub const ORTHO_TOL: f64 = 1e-9;

// Bits of the guard tolerance; zero means ORTHO_TOL.
static GUARD_TOL: AtomicU64 = AtomicU64::new(0);
static GUARD_ENFORCED: AtomicBool = AtomicBool::new(true);

/// Process-wide orthogonality guard used by the analyses. With `enforce`
/// off, non-orthogonal sets are analyzed as given.
pub fn set_orthogonality_guard(tol: f64, enforce: bool) {
    GUARD_TOL.store(tol.to_bits(), Ordering::Relaxed);
    GUARD_ENFORCED.store(enforce, Ordering::Relaxed);
}

fn guard_tol() -> f64 {
    match GUARD_TOL.load(Ordering::Relaxed) {
        0 => ORTHO_TOL,
        b => f64::from_bits(b),
    }
}

/// Local dimensions of each party, plus optional factorizations of a party
/// into sub-systems (e.g. a six-level party seen as qubit x qutrit).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartySpace {
    party_dims: Vec<usize>,
    sub_splits: BTreeMap<usize, Vec<usize>>,
}

/// A tensor factor: a whole party, or one sub-system of a split party.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Factor {
    pub party: usize,
    pub sub: Option<usize>,
    pub dim: usize,
}

impl PartySpace {
    pub fn new(party_dims: Vec<usize>) -> Result<Self> {
        if party_dims.is_empty() {
            return Err(Error::Invalid("at least one party required".into()));
        }
        if let Some(d) = party_dims.iter().find(|&&d| d < 2) {
            return Err(Error::Invalid(format!("party dimension {d} < 2")));
        }
        let total = party_dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        match total {
            Some(t) if t <= crate::linalg::MAX_PRODUCT_DIM => {}
            _ => return Err(Error::TooLarge(usize::MAX)),
        }
        Ok(Self { party_dims, sub_splits: BTreeMap::new() })
    }

    pub fn with_split(mut self, party: usize, factors: Vec<usize>) -> Result<Self> {
        let dim = *self
            .party_dims
            .get(party)
            .ok_or_else(|| Error::Invalid(format!("no party {party}")))?;
        if factors.iter().any(|&f| f < 2) || factors.iter().product::<usize>() != dim {
            return Err(Error::Invalid(format!(
                "split {factors:?} does not multiply to party dimension {dim}"
            )));
        }
        self.sub_splits.insert(party, factors);
        Ok(self)
    }

    pub fn party_dims(&self) -> &[usize] {
        &self.party_dims
    }

    pub fn parties(&self) -> usize {
        self.party_dims.len()
    }

    pub fn dim(&self, party: usize) -> usize {
        self.party_dims[party]
    }

    pub fn total_dim(&self) -> usize {
        self.party_dims.iter().product()
    }

    pub fn sub_splits(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.sub_splits
    }

    pub fn without_splits(&self) -> PartySpace {
        PartySpace { party_dims: self.party_dims.clone(), sub_splits: BTreeMap::new() }
    }

    /// Tensor factors in index order, expanding sub-splits.
    pub fn factors(&self) -> Vec<Factor> {
        let mut out = Vec::new();
        for (party, &dim) in self.party_dims.iter().enumerate() {
            match self.sub_splits.get(&party) {
                Some(split) => out.extend(
                    split.iter().enumerate().map(|(k, &d)| Factor { party, sub: Some(k), dim: d }),
                ),
                None => out.push(Factor { party, sub: None, dim }),
            }
        }
        out
    }

    /// Flat index of a per-party basis tuple; party 0 is the slowest index.
    pub fn flat_index(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.parties() {
            return Err(Error::Dimension(format!(
                "{} indices for {} parties",
                idx.len(),
                self.parties()
            )));
        }
        let mut flat = 0;
        for (p, (&i, &d)) in idx.iter().zip(&self.party_dims).enumerate() {
            if i >= d {
                return Err(Error::Dimension(format!("index {i} out of range for party {p} (dim {d})")));
            }
            flat = flat * d + i;
        }
        Ok(flat)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.parties()];
        for p in (0..self.parties()).rev() {
            idx[p] = flat % self.party_dims[p];
            flat /= self.party_dims[p];
        }
        idx
    }

    pub fn party_name(party: usize) -> String {
        match party {
            0..=25 => ((b'A' + party as u8) as char).to_string(),
            _ => format!("P{party}"),
        }
    }

    /// Copy with one party's dimension replaced (sub-split on it dropped).
    pub fn with_party_dim(&self, party: usize, dim: usize) -> PartySpace {
        let mut out = self.clone();
        out.party_dims[party] = dim;
        out.sub_splits.remove(&party);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    space: PartySpace,
    amplitudes: CVector,
    label: String,
}

impl Ket {
    /// Normalizes `amplitudes`; fails on the zero vector or a size mismatch.
    pub fn new(space: PartySpace, amplitudes: CVector, label: impl Into<String>) -> Result<Self> {
        if amplitudes.dim() != space.total_dim() {
            return Err(Error::Dimension(format!(
                "{} amplitudes for total dimension {}",
                amplitudes.dim(),
                space.total_dim()
            )));
        }
        if !amplitudes.is_finite() {
            return Err(Error::Invalid("non-finite amplitude".into()));
        }
        let amplitudes = amplitudes
            .normalized()
            .ok_or_else(|| Error::Invalid("all-zero state".into()))?;
        Ok(Self { space, amplitudes, label: label.into() })
    }

    pub fn space(&self) -> &PartySpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Apply an operator on one party (identity elsewhere) without normalizing.
    pub fn apply_local_raw(&self, party: usize, op: &CMatrix) -> Result<CVector> {
        apply_local(&self.space, &self.amplitudes, party, op)
    }
}

/// `(op on party) |v>`; `op` may be rectangular, changing that party's dimension.
pub fn apply_local(space: &PartySpace, v: &CVector, party: usize, op: &CMatrix) -> Result<CVector> {
    let dims = space.party_dims();
    let d = dims[party];
    if op.cols() != d {
        return Err(Error::Dimension(format!(
            "operator with {} columns on party {party} of dimension {d}",
            op.cols()
        )));
    }
    let outer: usize = dims[..party].iter().product();
    let inner: usize = dims[party + 1..].iter().product();
    let d_out = op.rows();
    let mut out = CVector::zeros(outer * d_out * inner);
    let src = v.as_slice();
    let dst = out.as_mut_slice();
    for o in 0..outer {
        for r in 0..d_out {
            for k in 0..d {
                let m = op[(r, k)];
                if m == C64::default() {
                    continue;
                }
                let s_off = (o * d + k) * inner;
                let d_off = (o * d_out + r) * inner;
                for t in 0..inner {
                    dst[d_off + t] += m * src[s_off + t];
                }
            }
        }
    }
    Ok(out)
}

/// Build a ket from `(coefficient, per-party indices)` terms.
pub fn make_ket(space: &PartySpace, terms: &[(C64, Vec<usize>)], label: impl Into<String>) -> Result<Ket> {
    let mut amps = CVector::zeros(space.total_dim());
    for (coef, idx) in terms {
        amps[space.flat_index(idx)?] += coef;
    }
    if amps.norm() == 0.0 {
        return Err(Error::Invalid("all-zero term list".into()));
    }
    Ket::new(space.clone(), amps, label)
}

pub fn inner_product(a: &Ket, b: &Ket) -> Result<C64> {
    if a.space.party_dims != b.space.party_dims {
        return Err(Error::Dimension(format!(
            "kets on {:?} and {:?}",
            a.space.party_dims, b.space.party_dims
        )));
    }
    Ok(a.amplitudes.dot(&b.amplitudes))
}

#[derive(Clone, Debug)]
pub struct StateSet {
    space: PartySpace,
    states: Vec<Ket>,
    name: String,
}

impl StateSet {
    pub fn new(space: PartySpace, states: Vec<Ket>, name: impl Into<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for k in &states {
            if k.space.party_dims != space.party_dims {
                return Err(Error::Dimension(format!("state `{}` has a different party structure", k.label)));
            }
            if !seen.insert(k.label.clone()) {
                return Err(Error::Invalid(format!("duplicate label `{}`", k.label)));
            }
        }
        // Kets carry the set's space, including its sub-splits.
        let states = states
            .into_iter()
            .map(|mut k| {
                k.space = space.clone();
                k
            })
            .collect();
        Ok(Self { space, states, name: name.into() })
    }

    pub fn space(&self) -> &PartySpace {
        &self.space
    }

    pub fn states(&self) -> &[Ket] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn labels(&self) -> Vec<String> {
        self.states.iter().map(|k| k.label.clone()).collect()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|k| k.label == label)
    }

    pub fn gram(&self) -> CMatrix {
        let n = self.len();
        CMatrix::from_fn(n, n, |i, j| self.states[i].amplitudes.dot(&self.states[j].amplitudes))
    }

    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> StateSet {
        StateSet {
            space: self.space.clone(),
            states: indices.iter().map(|&i| self.states[i].clone()).collect(),
            name: name.into(),
        }
    }

    /// Same states with any sub-splits forgotten.
    pub fn without_splits(&self) -> StateSet {
        let space = self.space.without_splits();
        StateSet {
            states: self
                .states
                .iter()
                .map(|k| Ket { space: space.clone(), ..k.clone() })
                .collect(),
            space,
            name: self.name.clone(),
        }
    }

    pub fn with_split(&self, party: usize, factors: Vec<usize>) -> Result<StateSet> {
        let space = self.space.clone().with_split(party, factors)?;
        StateSet::new(space, self.states.clone(), self.name.clone())
    }

    /// Fail with the worst pair unless pairwise orthogonal at the guard
    /// tolerance (see [`set_orthogonality_guard`]).
    pub fn require_orthogonal(&self) -> Result<()> {
        if !GUARD_ENFORCED.load(Ordering::Relaxed) {
            return Ok(());
        }
        let report = gram_check(self, guard_tol());
        match report.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::NotOrthogonal(v.label_a.clone(), v.label_b.clone(), v.magnitude)),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    pub label_a: String,
    pub label_b: String,
    pub magnitude: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrthoReport {
    pub pass: bool,
    pub tol: f64,
    pub pairs_checked: usize,
    pub max_overlap: f64,
    /// Sorted by magnitude, largest first.
    pub violations: Vec<Violation>,
}

pub fn gram_check(s: &StateSet, tol: f64) -> OrthoReport {
    let mut violations = Vec::new();
    let mut max_overlap: f64 = 0.0;
    let n = s.len();
    for i in 0..n {
        for j in i + 1..n {
            let m = s.states[i].amplitudes.dot(&s.states[j].amplitudes).norm();
            max_overlap = max_overlap.max(m);
            if m > tol {
                violations.push(Violation {
                    i,
                    j,
                    label_a: s.states[i].label.clone(),
                    label_b: s.states[j].label.clone(),
                    magnitude: m,
                });
            }
        }
    }
    violations.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude).then((a.i, a.j).cmp(&(b.i, b.j))));
    OrthoReport { pass: violations.is_empty(), tol, pairs_checked: n * n.saturating_sub(1) / 2, max_overlap, violations }
}

/// Split of the parties into two nonempty complementary groups.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Bipartition {
    left: Vec<usize>,
    right: Vec<usize>,
}

impl Bipartition {
    pub fn new(mut left: Vec<usize>, parties: usize) -> Result<Self> {
        left.sort_unstable();
        left.dedup();
        if left.is_empty() || left.len() >= parties || left.iter().any(|&p| p >= parties) {
            return Err(Error::Invalid(format!("{left:?} is not a proper nonempty subset of {parties} parties")));
        }
        let right = (0..parties).filter(|p| !left.contains(p)).collect();
        Ok(Self { left, right })
    }

    pub fn left(&self) -> &[usize] {
        &self.left
    }

    pub fn right(&self) -> &[usize] {
        &self.right
    }

    /// Every unordered cut once, party 0 on the left.
    pub fn all(parties: usize) -> Vec<Bipartition> {
        let mut out = Vec::new();
        for mask in 1..(1usize << parties) - 1 {
            if mask & 1 == 0 {
                continue;
            }
            let left: Vec<usize> = (0..parties).filter(|p| mask >> p & 1 == 1).collect();
            out.push(Bipartition::new(left, parties).expect("valid mask"));
        }
        out
    }

    pub fn name(&self) -> String {
        let side = |ps: &[usize]| ps.iter().map(|&p| PartySpace::party_name(p)).collect::<String>();
        format!("{}|{}", side(&self.left), side(&self.right))
    }
}

/// Permute the tensor factors of `v`; output factor `k` is input factor `perm[k]`.
pub fn permute_factors(v: &CVector, dims: &[usize], perm: &[usize]) -> CVector {
    let n = dims.len();
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let mut strides = vec![1usize; n];
    for k in (0..n.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let total: usize = dims.iter().product();
    let mut out = CVector::zeros(total);
    let mut idx = vec![0usize; n];
    for flat_new in 0..total {
        let mut src = 0;
        for k in 0..n {
            src += idx[k] * strides[perm[k]];
        }
        out[flat_new] = v[src];
        for k in (0..n).rev() {
            idx[k] += 1;
            if idx[k] < new_dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// Amplitudes reshaped to a `dim(left) x dim(right)` matrix.
pub fn cut_matrix(k: &Ket, cut: &Bipartition) -> CMatrix {
    let dims = k.space.party_dims();
    let perm: Vec<usize> = cut.left.iter().chain(&cut.right).copied().collect();
    let v = permute_factors(&k.amplitudes, dims, &perm);
    let rows: usize = cut.left.iter().map(|&p| dims[p]).product();
    let cols: usize = cut.right.iter().map(|&p| dims[p]).product();
    CMatrix::from_rows(rows, cols, v.into_vec()).expect("sizes agree")
}

pub fn schmidt_rank(k: &Ket, cut: &Bipartition) -> Result<usize> {
    if cut.left.len() + cut.right.len() != k.space.parties() {
        return Err(Error::Invalid(format!("cut {} does not match {} parties", cut.name(), k.space.parties())));
    }
    Ok(numerical_rank(&svd(&cut_matrix(k, cut))?.s))
}

/// Product across every bipartition, i.e. a full product state.
pub fn is_fully_product(k: &Ket) -> Result<bool> {
    for p in 0..k.space.parties() {
        if k.space.parties() == 1 {
            break;
        }
        let cut = Bipartition::new(vec![p], k.space.parties())?;
        if schmidt_rank(k, &cut)? != 1 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Local factors of a product state, one normalized vector per party.
pub fn product_factors(k: &Ket) -> Result<Vec<CVector>> {
    let n = k.space.parties();
    let mut out = Vec::with_capacity(n);
    for p in 0..n {
        let rho = reduced_party_state(k, p);
        let eig = crate::linalg::hermitian_eig(&rho)?;
        let top = eig.values.len() - 1;
        if n > 1 && eig.values[top] < 1.0 - 1e-8 {
            return Err(Error::Invalid(format!("state `{}` is not a product state", k.label)));
        }
        out.push(eig.vectors.column(top));
    }
    Ok(out)
}

/// Reduced density operator of a single whole party.
pub fn reduced_party_state(k: &Ket, party: usize) -> CMatrix {
    let dims = k.space.party_dims();
    let d = dims[party];
    let outer: usize = dims[..party].iter().product();
    let inner: usize = dims[party + 1..].iter().product();
    let a = k.amplitudes.as_slice();
    let mut rho = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut s = C64::default();
            for o in 0..outer {
                let bi = (o * d + i) * inner;
                let bj = (o * d + j) * inner;
                for t in 0..inner {
                    s += a[bi + t] * a[bj + t].conj();
                }
            }
            rho[(i, j)] = s;
        }
    }
    rho
}

/// Partial trace keeping the listed tensor factors (indices into
/// [`PartySpace::factors`]).
pub fn reduced_state(k: &Ket, keep: &[usize]) -> Result<CMatrix> {
    let factors = k.space.factors();
    let nf = factors.len();
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.is_empty() || keep.iter().any(|&f| f >= nf) {
        return Err(Error::Invalid(format!("keep set {keep:?} invalid for {nf} factors")));
    }
    if keep.len() == nf {
        return Err(Error::Invalid("keep set covers every factor; nothing is traced out".into()));
    }
    let dims: Vec<usize> = factors.iter().map(|f| f.dim).collect();
    let discard: Vec<usize> = (0..nf).filter(|f| !keep.contains(f)).collect();
    let perm: Vec<usize> = keep.iter().chain(&discard).copied().collect();
    let v = permute_factors(&k.amplitudes, &dims, &perm);
    let dk: usize = keep.iter().map(|&f| dims[f]).product();
    let dd: usize = discard.iter().map(|&f| dims[f]).product();
    let m = CMatrix::from_rows(dk, dd, v.into_vec())?;
    Ok(&m * &m.adjoint())
}

/// Support of the party-`p` reductions of all states: an orthonormal basis,
/// chosen from the computational basis whenever the support is coordinate
/// aligned.
pub fn local_support(s: &StateSet, party: usize) -> Result<CMatrix> {
    let d = s.space.dim(party);
    let mut total = CMatrix::zeros(d, d);
    for k in &s.states {
        total = &total + &reduced_party_state(k, party);
    }
    let used: Vec<usize> = (0..d).filter(|&i| total[(i, i)].re > 1e-12).collect();
    let eig = crate::linalg::hermitian_eig(&total)?;
    let max = eig.values.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let kept: Vec<usize> = (0..d).filter(|&k| eig.values[k] > 1e-10 * max).collect();
    if kept.len() == used.len() {
        let mut q = CMatrix::zeros(d, used.len());
        for (c, &i) in used.iter().enumerate() {
            q[(i, c)] = re(1.0);
        }
        return Ok(q);
    }
    Ok(CMatrix::from_fn(d, kept.len(), |i, j| eig.vectors[(i, kept[j])]))
}

/// Express every state in the restricted coordinates `Q† ψ` of one party.
pub fn restrict_party(s: &StateSet, party: usize, q: &CMatrix) -> Result<StateSet> {
    let space = s.space.with_party_dim(party, q.cols());
    let qa = q.adjoint();
    let states = s
        .states
        .iter()
        .map(|k| Ket::new(space.clone(), apply_local(&s.space, &k.amplitudes, party, &qa)?, k.label.clone()))
        .collect::<Result<Vec<_>>>()?;
    StateSet::new(space, states, s.name.clone())
}

/// Restrict every party with local dimension > 1 to its local support.
/// Returns the restricted set and the per-party isometries.
pub fn restrict_to_supports(s: &StateSet) -> Result<(StateSet, Vec<CMatrix>)> {
    let mut cur = s.without_splits();
    let mut isos = Vec::new();
    for p in 0..s.space.parties() {
        let q = local_support(&cur, p)?;
        isos.push(q.clone());
        if q.cols() >= 1 {
            cur = restrict_party_unchecked(&cur, p, &q)?;
        }
    }
    Ok((cur, isos))
}

// Like `restrict_party` but allows a restricted dimension of 1.
fn restrict_party_unchecked(s: &StateSet, party: usize, q: &CMatrix) -> Result<StateSet> {
    let mut dims = s.space.party_dims().to_vec();
    dims[party] = q.cols();
    let space = PartySpace { party_dims: dims, sub_splits: BTreeMap::new() };
    let qa = q.adjoint();
    let states = s
        .states
        .iter()
        .map(|k| Ket::new(space.clone(), apply_local(&s.space, &k.amplitudes, party, &qa)?, k.label.clone()))
        .collect::<Result<Vec<_>>>()?;
    StateSet::new(space, states, s.name.clone())
}

/// Regroup parties: each group becomes one party, in the order given. Sub-splits
/// survive only on parties that stay alone.
pub fn merge_parties(s: &StateSet, grouping: &[Vec<usize>]) -> Result<StateSet> {
    let n = s.space.parties();
    let mut seen = vec![false; n];
    for g in grouping {
        if g.is_empty() {
            return Err(Error::Invalid("empty group".into()));
        }
        for &p in g {
            if p >= n || seen[p] {
                return Err(Error::Invalid(format!("party {p} missing or repeated in grouping")));
            }
            seen[p] = true;
        }
    }
    if seen.iter().any(|x| !x) {
        return Err(Error::Invalid("grouping does not cover every party".into()));
    }
    let dims = s.space.party_dims();
    let perm: Vec<usize> = grouping.iter().flatten().copied().collect();
    let new_dims: Vec<usize> = grouping.iter().map(|g| g.iter().map(|&p| dims[p]).product()).collect();
    let mut space = PartySpace { party_dims: new_dims, sub_splits: BTreeMap::new() };
    for (k, g) in grouping.iter().enumerate() {
        if let [p] = g.as_slice() {
            if let Some(split) = s.space.sub_splits.get(p) {
                space.sub_splits.insert(k, split.clone());
            }
        }
    }
    let states = s
        .states
        .iter()
        .map(|k| Ket {
            space: space.clone(),
            amplitudes: permute_factors(&k.amplitudes, dims, &perm),
            label: k.label.clone(),
        })
        .collect();
    let name = format!(
        "{}[{}]",
        s.name,
        grouping
            .iter()
            .map(|g| g.iter().map(|&p| PartySpace::party_name(p)).collect::<String>())
            .collect::<Vec<_>>()
            .join("|")
    );
    Ok(StateSet { space, states, name })
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscardWitness {
    /// Factor indices traced out.
    pub discarded: Vec<usize>,
    pub discarded_names: Vec<String>,
    pub pair: Option<(String, String)>,
    /// `tr(rho_i rho_j)` of the witness pair.
    pub overlap: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Redundancy {
    /// The set stays orthogonal after tracing out `discard`.
    LocallyRedundant { discard: DiscardWitness },
    /// Every discard choice leaves some non-orthogonal pair.
    LocallyIrredundant { witnesses: Vec<DiscardWitness> },
}

impl Redundancy {
    pub fn is_redundant(&self) -> bool {
        matches!(self, Redundancy::LocallyRedundant { .. })
    }
}

pub fn factor_name(f: &Factor) -> String {
    match f.sub {
        None => PartySpace::party_name(f.party),
        Some(k) => format!("{}{}", PartySpace::party_name(f.party).to_lowercase(), k + 1),
    }
}

/// Decide local redundancy over every nonempty proper subset of tensor factors.
///
/// Witness pairs prefer the pair that stays non-orthogonal under the largest
/// number of discard choices, then the smallest overlap, then state order.
pub fn redundancy_check(s: &StateSet) -> Result<Redundancy> {
    s.require_orthogonal()?;
    let factors = s.space.factors();
    let nf = factors.len();
    if nf < 2 {
        return Err(Error::Invalid("redundancy needs at least two tensor factors".into()));
    }
    let n = s.len();
    let mut per_discard: Vec<(Vec<usize>, Vec<Vec<f64>>)> = Vec::new();
    for mask in 1..(1usize << nf) - 1 {
        let discard: Vec<usize> = (0..nf).filter(|f| mask >> f & 1 == 1).collect();
        let keep: Vec<usize> = (0..nf).filter(|f| mask >> f & 1 == 0).collect();
        let rhos = s.states.iter().map(|k| reduced_state(k, &keep)).collect::<Result<Vec<_>>>()?;
        let mut overlaps = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                // tr(rho_i rho_j) = <rho_i, rho_j>_F for Hermitian operators.
                let t = rhos[i].frobenius_dot(&rhos[j]).re;
                overlaps[i][j] = t;
                overlaps[j][i] = t;
            }
        }
        per_discard.push((discard, overlaps));
    }

    let mut hits = vec![vec![0usize; n]; n];
    for (_, ov) in &per_discard {
        for i in 0..n {
            for j in i + 1..n {
                if ov[i][j] > ORTHO_TOL {
                    hits[i][j] += 1;
                }
            }
        }
    }
    let names = |d: &[usize]| d.iter().map(|&f| factor_name(&factors[f])).collect::<Vec<_>>();

    let mut witnesses = Vec::new();
    for (discard, ov) in &per_discard {
        let mut best: Option<(usize, usize)> = None;
        for i in 0..n {
            for j in i + 1..n {
                if ov[i][j] > ORTHO_TOL {
                    let better = match best {
                        None => true,
                        Some((bi, bj)) => {
                            hits[i][j] > hits[bi][bj] || (hits[i][j] == hits[bi][bj] && ov[i][j] < ov[bi][bj] - 1e-12)
                        }
                    };
                    if better {
                        best = Some((i, j));
                    }
                }
            }
        }
        match best {
            None => {
                return Ok(Redundancy::LocallyRedundant {
                    discard: DiscardWitness {
                        discarded: discard.clone(),
                        discarded_names: names(discard),
                        pair: None,
                        overlap: 0.0,
                    },
                })
            }
            Some((i, j)) => witnesses.push(DiscardWitness {
                discarded: discard.clone(),
                discarded_names: names(discard),
                pair: Some((s.states[i].label.clone(), s.states[j].label.clone())),
                overlap: ov[i][j],
            }),
        }
    }
    Ok(Redundancy::LocallyIrredundant { witnesses })
}
