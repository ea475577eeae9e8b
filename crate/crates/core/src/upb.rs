//! Unextendibility of orthogonal product sets.
//!
//! A product set is extendible iff its states can be split among the parties
//! so that, for every party, the local vectors assigned to it fail to span
//! that party's space. Both the exact test and the numeric oracle run on the
//! local supports of the set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, complete_orthonormal, hermitian_eig, orthonormal_span, CMatrix, CVector};
use crate::state::{is_fully_product, product_factors, restrict_to_supports, Ket, StateSet};

/// Assignment spaces larger than this are refused.
pub const MAX_ASSIGNMENTS: f64 = 1e7;
pub const EXTENSION_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UpbWitness {
    /// Every assignment of states to parties leaves some party fully spanned.
    Blocked { assignments_explored: u64 },
    /// Product extension: per-party local vectors in the full local spaces.
    Extension { assignment: Vec<usize>, factors: Vec<CVector> },
}

#[derive(Clone, Debug, Serialize)]
pub struct UpbVerdict {
    pub unextendible: bool,
    pub witness: UpbWitness,
    pub support_dims: Vec<usize>,
    pub support_note: String,
}

impl UpbVerdict {
    /// The extension state as a ket in the space of `s`.
    pub fn extension_ket(&self, s: &StateSet) -> Option<Ket> {
        match &self.witness {
            UpbWitness::Extension { factors, .. } => {
                let mut v = factors[0].clone();
                for f in &factors[1..] {
                    v = crate::linalg::kron_vec(&v, f).ok()?;
                }
                Ket::new(s.space().without_splits(), v, "extension").ok()
            }
            UpbWitness::Blocked { .. } => None,
        }
    }
}

struct Local {
    /// `vecs[i][p]`: local vector of state `i` on party `p`, in restricted coordinates.
    vecs: Vec<Vec<CVector>>,
    dims: Vec<usize>,
    isos: Vec<CMatrix>,
}

fn local_factors(s: &StateSet, on_supports: bool) -> Result<Local> {
    s.require_orthogonal()?;
    let flat = s.without_splits();
    for k in flat.states() {
        if !is_fully_product(k)? {
            return Err(Error::Invalid(format!("state `{}` is not a product state", k.label())));
        }
    }
    let (r, isos) = if on_supports {
        restrict_to_supports(&flat)?
    } else {
        let ids = flat.space().party_dims().iter().map(|&d| CMatrix::identity(d)).collect();
        (flat, ids)
    };
    let vecs = r.states().iter().map(product_factors).collect::<Result<Vec<_>>>()?;
    Ok(Local { vecs, dims: r.space().party_dims().to_vec(), isos })
}

fn rank(vs: &[&CVector], dim: usize) -> Result<usize> {
    if vs.is_empty() {
        return Ok(0);
    }
    let owned: Vec<CVector> = vs.iter().map(|v| (*v).clone()).collect();
    Ok(orthonormal_span(dim, &owned)?.len())
}

fn complement_vector(vs: &[&CVector], dim: usize) -> Result<CVector> {
    let owned: Vec<CVector> = vs.iter().map(|v| (*v).clone()).collect();
    let mut basis = if owned.is_empty() { Vec::new() } else { orthonormal_span(dim, &owned)? };
    let start = basis.len();
    complete_orthonormal(dim, &mut basis, dim);
    basis
        .get(start)
        .cloned()
        .ok_or_else(|| Error::Invalid("no complement vector".into()))
}

pub fn check_unextendible(s: &StateSet) -> Result<UpbVerdict> {
    let loc = local_factors(s, true)?;
    let n = loc.dims.len();
    let k = loc.vecs.len();
    let space = (n as f64).powi(k as i32);
    if space > MAX_ASSIGNMENTS {
        return Err(Error::Refused(format!(
            "{n}^{k} assignments exceed {MAX_ASSIGNMENTS:e}; use the numeric extension search"
        )));
    }
    let support_note = format!(
        "local supports of dimension {:?} inside {:?}",
        loc.dims,
        s.space().party_dims()
    );
    let mut assign = vec![usize::MAX; k];
    let mut explored = 0u64;
    let found = if n == 2 { bipartite(&loc, &mut assign, &mut explored)? } else { backtrack(&loc, 0, &mut assign, &mut explored)? };
    if !found {
        return Ok(UpbVerdict {
            unextendible: true,
            witness: UpbWitness::Blocked { assignments_explored: explored },
            support_dims: loc.dims,
            support_note,
        });
    }
    let mut factors = Vec::with_capacity(n);
    for p in 0..n {
        let assigned: Vec<&CVector> = (0..k).filter(|&i| assign[i] == p).map(|i| &loc.vecs[i][p]).collect();
        let x = complement_vector(&assigned, loc.dims[p])?;
        factors.push(loc.isos[p].mul_vec(&x));
    }
    Ok(UpbVerdict {
        unextendible: false,
        witness: UpbWitness::Extension { assignment: assign, factors },
        support_dims: loc.dims,
        support_note,
    })
}

/// Subsets go to party A, complements to party B.
fn bipartite(loc: &Local, assign: &mut [usize], explored: &mut u64) -> Result<bool> {
    let k = loc.vecs.len();
    for mask in 0u64..(1u64 << k) {
        *explored += 1;
        let a: Vec<&CVector> = (0..k).filter(|&i| mask >> i & 1 == 1).map(|i| &loc.vecs[i][0]).collect();
        if rank(&a, loc.dims[0])? >= loc.dims[0] {
            continue;
        }
        let b: Vec<&CVector> = (0..k).filter(|&i| mask >> i & 1 == 0).map(|i| &loc.vecs[i][1]).collect();
        if rank(&b, loc.dims[1])? >= loc.dims[1] {
            continue;
        }
        for (i, slot) in assign.iter_mut().enumerate() {
            *slot = if mask >> i & 1 == 1 { 0 } else { 1 };
        }
        return Ok(true);
    }
    Ok(false)
}

/// Depth-first over states; a party may take a state only while its span stays proper.
fn backtrack(loc: &Local, i: usize, assign: &mut [usize], explored: &mut u64) -> Result<bool> {
    let k = loc.vecs.len();
    if i == k {
        *explored += 1;
        return Ok(true);
    }
    for p in 0..loc.dims.len() {
        assign[i] = p;
        let mine: Vec<&CVector> = (0..=i).filter(|&j| assign[j] == p).map(|j| &loc.vecs[j][p]).collect();
        if rank(&mine, loc.dims[p])? < loc.dims[p] {
            if backtrack(loc, i + 1, assign, explored)? {
                return Ok(true);
            }
        } else {
            *explored += 1;
        }
    }
    assign[i] = usize::MAX;
    Ok(false)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtensionSearch {
    /// `min sum_i |<psi_i|a_1 ... a_N>|^2` over restarts.
    pub residual: f64,
    /// Best candidate, per party, in the full local spaces.
    pub candidate: Vec<CVector>,
    pub restarts: usize,
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> CVector {
    loop {
        let v = CVector::from_vec((0..d).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect());
        if let Some(u) = v.normalized() {
            return u;
        }
    }
}

fn objective(loc: &Local, x: &[CVector]) -> f64 {
    loc.vecs
        .iter()
        .map(|a| a.iter().zip(x).map(|(ai, xi)| ai.dot(xi).norm_sqr()).product::<f64>())
        .sum()
}

/// Alternating minimization with seeded random restarts, over the full local spaces.
pub fn numeric_extension_search(s: &StateSet, restarts: usize, seed: u64) -> Result<ExtensionSearch> {
    numeric_search(&local_factors(s, false)?, restarts, seed)
}

/// Same search restricted to the local supports, the space [`check_unextendible`] decides on.
pub fn numeric_extension_search_on_supports(s: &StateSet, restarts: usize, seed: u64) -> Result<ExtensionSearch> {
    numeric_search(&local_factors(s, true)?, restarts, seed)
}

fn numeric_search(loc: &Local, restarts: usize, seed: u64) -> Result<ExtensionSearch> {
    let n = loc.dims.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<CVector>)> = None;
    for _ in 0..restarts.max(1) {
        let mut x: Vec<CVector> = loc.dims.iter().map(|&d| random_unit(&mut rng, d)).collect();
        let mut last = f64::INFINITY;
        for _ in 0..500 {
            for p in 0..n {
                let d = loc.dims[p];
                let mut m = CMatrix::zeros(d, d);
                for a in &loc.vecs {
                    let w: f64 = (0..n).filter(|&q| q != p).map(|q| a[q].dot(&x[q]).norm_sqr()).product();
                    if w > 0.0 {
                        m = &m + &a[p].outer(&a[p]).scale(c(w, 0.0));
                    }
                }
                let eig = hermitian_eig(&m)?;
                x[p] = eig.vectors.column(0);
            }
            let f = objective(loc, &x);
            if f <= 1e-15 || (last.is_finite() && (last - f).abs() <= 1e-10 * last) {
                last = f;
                break;
            }
            last = f;
        }
        if best.as_ref().is_none_or(|(b, _)| last < *b) {
            best = Some((last, x));
        }
    }
    let (residual, x) = best.expect("at least one restart");
    let candidate = x.iter().enumerate().map(|(p, v)| loc.isos[p].mul_vec(v)).collect();
    Ok(ExtensionSearch { residual, candidate, restarts: restarts.max(1) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture, FixtureName};
    use crate::linalg::re;
    use crate::state::{schmidt_rank, Bipartition, PartySpace};

    fn tiles_minus_stopper() -> StateSet {
        let t = fixture(FixtureName::Tiles33);
        t.subset(&[0, 1, 2, 3], "tiles-minus-stopper")
    }

    fn assert_valid_extension(s: &StateSet, v: &UpbVerdict) {
        let ext = v.extension_ket(s).unwrap();
        for k in s.states() {
            assert!(k.amplitudes().dot(ext.amplitudes()).norm() <= 1e-8);
        }
        for cut in Bipartition::all(s.space().parties()) {
            assert_eq!(schmidt_rank(&ext, &cut).unwrap(), 1);
        }
    }

    #[test]
    fn tiles_is_unextendible() {
        let v = check_unextendible(&fixture(FixtureName::Tiles33)).unwrap();
        assert!(v.unextendible);
        assert_eq!(v.support_dims, vec![3, 3]);
    }

    #[test]
    fn tiles_minus_stopper_extends() {
        let s = tiles_minus_stopper();
        let v = check_unextendible(&s).unwrap();
        assert!(!v.unextendible);
        assert_valid_extension(&s, &v);
        let num = numeric_extension_search(&s, 20, 1).unwrap();
        assert!(num.residual <= 1e-10, "{}", num.residual);
    }

    #[test]
    fn complete_bases_are_unextendible() {
        let sp = PartySpace::new(vec![2, 2]).unwrap();
        let kets = (0..4)
            .map(|i| crate::state::make_ket(&sp, &[(re(1.0), vec![i / 2, i % 2])], format!("{i}")).unwrap())
            .collect();
        let s = StateSet::new(sp, kets, "cb").unwrap();
        assert!(check_unextendible(&s).unwrap().unextendible);
        assert!(check_unextendible(&fixture(FixtureName::S1)).unwrap().unextendible);
    }

    #[test]
    fn single_state_extends() {
        let sp = PartySpace::new(vec![2, 2]).unwrap();
        let k = crate::state::make_ket(&sp, &[(re(1.0), vec![0, 0])], "00").unwrap();
        let s = StateSet::new(sp, vec![k], "one").unwrap();
        let num = numeric_extension_search(&s, 5, 3).unwrap();
        assert!(num.residual <= 1e-12);
        // On its own one-dimensional supports the state spans everything.
        assert!(check_unextendible(&s).unwrap().unextendible);
        assert!(numeric_extension_search_on_supports(&s, 5, 3).unwrap().residual > 0.5);
    }

    #[test]
    fn tiles_numeric_lower_bound() {
        let num = numeric_extension_search(&fixture(FixtureName::Tiles33), 50, 7).unwrap();
        assert!(num.residual > 1e-3, "{}", num.residual);
    }

    #[test]
    fn rejects_entangled_members() {
        let s5 = fixture(FixtureName::S5);
        assert!(matches!(check_unextendible(&s5), Err(Error::Invalid(_))));
    }

    #[test]
    fn refuses_huge_assignment_spaces() {
        let s4 = fixture(FixtureName::S4);
        assert!(matches!(check_unextendible(&s4), Err(Error::Refused(_))));
    }
}
