//! Exact constructors for the reference state sets.
//!
//! Naming of labels: `a|b|...` lists each party's local vector, where a
//! single digit is a basis ket, `ij+` / `ij-` is `(|i> +- |j>)/sqrt2` and
//! `ijk` is the uniform superposition. Two-term entangled states are
//! `W<t>_ij,kl+` (`|t>|ij+> + |t+2>|kl+>`) and `Wb<t>_ij,kl+` (the same with
//! the parties' roles swapped).

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{kron_vec, re, CVector};
use crate::state::{Ket, PartySpace, StateSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureName {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    Tiles33,
    S1General(usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Corrected,
    Verbatim,
}

#[derive(Clone, Debug, Serialize)]
pub struct FixtureDescriptor {
    pub name: FixtureName,
    pub variant: Variant,
    pub notes: String,
}

impl FixtureDescriptor {
    pub fn new(name: FixtureName, variant: Variant) -> Self {
        let notes = fixture_corrections(name)
            .iter()
            .filter(|c| variant == Variant::Corrected || !c.changes_amplitudes)
            .map(|c| format!("{} -> {}", c.printed, c.corrected))
            .collect::<Vec<_>>()
            .join("; ");
        Self { name, variant, notes }
    }

    pub fn corrected(name: FixtureName) -> Self {
        Self::new(name, Variant::Corrected)
    }
}

impl fmt::Display for FixtureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FixtureName::S1 => write!(f, "s1"),
            FixtureName::S2 => write!(f, "s2"),
            FixtureName::S3 => write!(f, "s3"),
            FixtureName::S4 => write!(f, "s4"),
            FixtureName::S5 => write!(f, "s5"),
            FixtureName::S6 => write!(f, "s6"),
            FixtureName::Tiles33 => write!(f, "tiles33"),
            FixtureName::S1General(d) => write!(f, "s1_general({d})"),
        }
    }
}

impl FromStr for FixtureName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "s1" => FixtureName::S1,
            "s2" => FixtureName::S2,
            "s3" => FixtureName::S3,
            "s4" => FixtureName::S4,
            "s5" => FixtureName::S5,
            "s6" => FixtureName::S6,
            "tiles33" | "tiles" => FixtureName::Tiles33,
            other => {
                let d = other
                    .strip_prefix("s1_general")
                    .map(|r| r.trim_matches(|c| c == '(' || c == ')' || c == ':' || c == '='))
                    .and_then(|r| r.parse::<usize>().ok())
                    .ok_or_else(|| Error::Unknown(other.to_string()))?;
                FixtureName::S1General(d)
            }
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Correction {
    pub printed: &'static str,
    pub corrected: &'static str,
    pub justification: &'static str,
    /// False for pure notation fixes (party subscripts), which both variants apply.
    pub changes_amplitudes: bool,
}

pub fn fixture_corrections(name: FixtureName) -> Vec<Correction> {
    const SUBSCRIPT: &str = "second ket carries the wrong party subscript; the set lives on A (x) B, so it can only be Bob's ket";
    match name {
        FixtureName::S1 => vec![
            Correction { printed: "|xi_3>_A|0>_A", corrected: "|xi_3>_A|0>_B", justification: SUBSCRIPT, changes_amplitudes: false },
            Correction { printed: "|xi_23^+->_A|1>_A", corrected: "|xi_23^+->_A|1>_B", justification: SUBSCRIPT, changes_amplitudes: false },
        ],
        FixtureName::S6 => vec![
            Correction { printed: "|xi_5>_A|0>_A", corrected: "|xi_5>_A|0>_B", justification: SUBSCRIPT, changes_amplitudes: false },
            Correction { printed: "|xi_5>_A|4>_A", corrected: "|xi_5>_A|4>_B", justification: SUBSCRIPT, changes_amplitudes: false },
            Correction {
                printed: "|xi_45^+->_A|0>_B",
                corrected: "|xi_45^+->_A|1>_B",
                justification: "as printed the two states overlap |xi_5>_A|0>_B (1/sqrt2), |xi_34^->_A|0>_B (1/2) and \
                    |0Wb_34,5^+> (1/(2 sqrt2)); column |1>_B continues the layered tiling (rows A=4,5 of column B=1 \
                    are otherwise uncovered) and is orthogonal to |1Wb_23,45^+-> because <4+-5|2+-3> = 0",
                changes_amplitudes: true,
            },
        ],
        _ => Vec::new(),
    }
}

/// Normalized local vector from `(index, coefficient)` pairs.
fn lv(d: usize, terms: &[(usize, f64)]) -> CVector {
    let mut v = CVector::zeros(d);
    for &(i, c) in terms {
        v[i] += re(c);
    }
    v.normalized().expect("nonzero local vector")
}

fn e(d: usize, i: usize) -> CVector {
    CVector::basis(d, i)
}

/// `(|i> + s|j>)/sqrt2`
fn x(d: usize, i: usize, j: usize, s: f64) -> CVector {
    lv(d, &[(i, 1.0), (j, s)])
}

fn sign(s: f64) -> &'static str {
    if s > 0.0 {
        "+"
    } else {
        "-"
    }
}

const PM: [f64; 2] = [1.0, -1.0];

struct Builder {
    space: PartySpace,
    states: Vec<Ket>,
}

impl Builder {
    fn new(space: PartySpace) -> Self {
        Self { space, states: Vec::new() }
    }

    fn product(&mut self, label: String, parts: &[CVector]) {
        let mut v = parts[0].clone();
        for p in &parts[1..] {
            v = kron_vec(&v, p).expect("small");
        }
        self.states.push(Ket::new(self.space.clone(), v, label).expect("valid fixture ket"));
    }

    fn sum(&mut self, label: String, terms: &[[CVector; 2]]) {
        let mut v = CVector::zeros(self.space.total_dim());
        for [a, b] in terms {
            v = &v + &kron_vec(a, b).expect("small");
        }
        self.states.push(Ket::new(self.space.clone(), v, label).expect("valid fixture ket"));
    }

    fn finish(self, name: &str) -> StateSet {
        StateSet::new(self.space, self.states, name).expect("valid fixture set")
    }
}

pub fn build_fixture(desc: &FixtureDescriptor) -> Result<StateSet> {
    let set = match desc.name {
        FixtureName::S1 => s1_general(4)?.with_name("s1"),
        FixtureName::S1General(d) => s1_general(d)?,
        FixtureName::S2 => s2(),
        FixtureName::S3 => s3(),
        FixtureName::S4 => s4(),
        FixtureName::S5 => s5(),
        FixtureName::S6 => s6(desc.variant == Variant::Corrected),
        FixtureName::Tiles33 => tiles33(),
    };
    Ok(match desc.variant {
        Variant::Corrected => set,
        Variant::Verbatim => {
            let name = format!("{}-verbatim", set.name());
            set.with_name(name)
        }
    })
}

pub fn fixture(name: FixtureName) -> StateSet {
    build_fixture(&FixtureDescriptor::corrected(name)).expect("fixture constructors are total for valid names")
}

/// Layered domino tiling of the `d x d` grid: layer `k` covers row `A = k`
/// over `B >= k` and column `B = k` over `A > k`, each with dominoes
/// `(i, i+1)` and a closing singleton when the run has odd length.
pub fn s1_general(d: usize) -> Result<StateSet> {
    if d < 4 || d % 2 == 1 {
        return Err(Error::Invalid(format!("s1_general needs an even local dimension >= 4, got {d}")));
    }
    let mut b = Builder::new(PartySpace::new(vec![d, d])?);
    for k in 0..d {
        // row A = k
        let mut i = k;
        while i < d {
            if i + 1 < d {
                for s in PM {
                    b.product(format!("{k}|{i}{}{}", i + 1, sign(s)), &[e(d, k), x(d, i, i + 1, s)]);
                }
                i += 2;
            } else {
                b.product(format!("{k}|{i}"), &[e(d, k), e(d, i)]);
                i += 1;
            }
        }
        // column B = k
        let mut i = k + 1;
        while i < d {
            if i + 1 < d {
                for s in PM {
                    b.product(format!("{i}{}{}|{k}", i + 1, sign(s)), &[x(d, i, i + 1, s), e(d, k)]);
                }
                i += 2;
            } else {
                b.product(format!("{i}|{k}"), &[e(d, i), e(d, k)]);
                i += 1;
            }
        }
    }
    Ok(b.finish(&format!("s1_general({d})")))
}

fn s2() -> StateSet {
    let mut b = Builder::new(PartySpace::new(vec![4, 2, 2]).expect("dims"));
    for bb in 0..2 {
        for s in PM {
            b.product(format!("0|{bb}|01{}", sign(s)), &[e(4, 0), e(2, bb), x(2, 0, 1, s)]);
        }
    }
    for s in PM {
        b.product(format!("12{}|0|0", sign(s)), &[x(4, 1, 2, s), e(2, 0), e(2, 0)]);
    }
    b.product("3|0|0".into(), &[e(4, 3), e(2, 0), e(2, 0)]);
    b.product("1|1|0".into(), &[e(4, 1), e(2, 1), e(2, 0)]);
    b.product("3|1|0".into(), &[e(4, 3), e(2, 1), e(2, 0)]);
    for s in PM {
        b.product(format!("1|01{}|1", sign(s)), &[e(4, 1), x(2, 0, 1, s), e(2, 1)]);
    }
    for s in PM {
        b.product(format!("23{}|0|1", sign(s)), &[x(4, 2, 3, s), e(2, 0), e(2, 1)]);
    }
    b.product("3|1|1".into(), &[e(4, 3), e(2, 1), e(2, 1)]);
    b.finish("s2")
}

fn s3_parts() -> Vec<(CVector, CVector)> {
    let a: [&[(usize, f64)]; 10] = [
        &[(0, 1.0)],
        &[(2, 1.0)],
        &[(1, 1.0), (2, -1.0)],
        &[(0, 1.0), (1, -1.0)],
        &[(0, 1.0), (1, 1.0), (2, 1.0)],
        &[(3, 1.0)],
        &[(5, 1.0)],
        &[(4, 1.0), (5, -1.0)],
        &[(3, 1.0), (4, -1.0)],
        &[(3, 1.0), (4, 1.0), (5, 1.0)],
    ];
    let bvecs: [&[(usize, f64)]; 5] = [
        &[(0, 1.0), (1, -1.0), (4, 1.0), (5, -1.0)],
        &[(1, 1.0), (2, -1.0), (5, 1.0), (3, -1.0)],
        &[(0, 1.0), (4, -1.0)],
        &[(2, 1.0), (3, -1.0)],
        &[(0, 1.0), (1, 1.0), (2, 1.0), (3, 1.0), (4, 1.0), (5, 1.0)],
    ];
    (0..10).map(|i| (lv(6, a[i]), lv(6, bvecs[i % 5]))).collect()
}

fn s3() -> StateSet {
    let space = PartySpace::new(vec![6, 6]).expect("dims").with_split(1, vec![2, 3]).expect("split");
    let mut b = Builder::new(space);
    for (i, (a, bv)) in s3_parts().into_iter().enumerate() {
        b.product(format!("phi{}", i + 1), &[a, bv]);
    }
    b.finish("s3")
}

fn s4() -> StateSet {
    let space = PartySpace::new(vec![6, 6, 2]).expect("dims").with_split(1, vec![2, 3]).expect("split");
    let mut b = Builder::new(space);
    for (i, (a, bv)) in s3_parts().into_iter().enumerate() {
        for c in 0..2 {
            b.product(format!("phi{}|{c}", i + 1), &[a.clone(), bv.clone(), e(2, c)]);
        }
    }
    b.finish("s4")
}

fn tiles33() -> StateSet {
    let mut b = Builder::new(PartySpace::new(vec![3, 3]).expect("dims"));
    b.product("0|01-".into(), &[e(3, 0), x(3, 0, 1, -1.0)]);
    b.product("2|12-".into(), &[e(3, 2), x(3, 1, 2, -1.0)]);
    b.product("12-|0".into(), &[x(3, 1, 2, -1.0), e(3, 0)]);
    b.product("01-|2".into(), &[x(3, 0, 1, -1.0), e(3, 2)]);
    let all = lv(3, &[(0, 1.0), (1, 1.0), (2, 1.0)]);
    b.product("012|012".into(), &[all.clone(), all]);
    b.finish("tiles33")
}

/// Local factor for the second term of a W state: a pair or a single index.
fn tail(d: usize, idx: &[usize], s: f64) -> CVector {
    match idx {
        [m] => e(d, *m),
        [i, j] => x(d, *i, *j, s),
        _ => unreachable!("W tails are one or two indices"),
    }
}

fn idx_name(idx: &[usize]) -> String {
    idx.iter().map(|i| i.to_string()).collect()
}

/// `|t>_A|ij+->_B + |t+2>_A|kl+->_B` (or `|m>` in place of `kl`).
fn w(b: &mut Builder, d: usize, t: usize, ij: [usize; 2], kl: &[usize], s: f64) {
    let label = format!("W{t}_{},{}{}", idx_name(&ij), idx_name(kl), sign(s));
    b.sum(label, &[[e(d, t), x(d, ij[0], ij[1], s)], [e(d, (t + 2) % d), tail(d, kl, s)]]);
}

/// `|ij+->_A|t>_B + |kl+->_A|t+2>_B`.
fn wbar(b: &mut Builder, d: usize, t: usize, ij: [usize; 2], kl: &[usize], s: f64) {
    let label = format!("Wb{t}_{},{}{}", idx_name(&ij), idx_name(kl), sign(s));
    b.sum(label, &[[x(d, ij[0], ij[1], s), e(d, t)], [tail(d, kl, s), e(d, (t + 2) % d)]]);
}

fn s5() -> StateSet {
    let d = 4;
    let mut b = Builder::new(PartySpace::new(vec![d, d]).expect("dims"));
    for s in PM {
        w(&mut b, d, 0, [0, 1], &[2, 3], s);
    }
    for s in PM {
        b.product(format!("0|23{}", sign(s)), &[e(d, 0), x(d, 2, 3, s)]);
    }
    wbar(&mut b, d, 0, [1, 2], &[3], 1.0);
    b.product("12-|0".into(), &[x(d, 1, 2, -1.0), e(d, 0)]);
    b.product("3|0".into(), &[e(d, 3), e(d, 0)]);
    w(&mut b, d, 1, [1, 2], &[3], 1.0);
    b.product("1|12-".into(), &[e(d, 1), x(d, 1, 2, -1.0)]);
    b.product("1|3".into(), &[e(d, 1), e(d, 3)]);
    for s in PM {
        b.product(format!("23{}|1", sign(s)), &[x(d, 2, 3, s), e(d, 1)]);
    }
    b.finish("s5")
}

fn s6(corrected: bool) -> StateSet {
    let d = 6;
    let mut b = Builder::new(PartySpace::new(vec![d, d]).expect("dims"));
    for s in PM {
        w(&mut b, d, 0, [0, 1], &[2, 3], s);
    }
    for s in PM {
        w(&mut b, d, 0, [2, 3], &[4, 5], s);
    }
    for s in PM {
        b.product(format!("0|45{}", sign(s)), &[e(d, 0), x(d, 4, 5, s)]);
    }
    for s in PM {
        wbar(&mut b, d, 0, [1, 2], &[3, 4], s);
    }
    wbar(&mut b, d, 0, [3, 4], &[5], 1.0);
    b.product("34-|0".into(), &[x(d, 3, 4, -1.0), e(d, 0)]);
    b.product("5|0".into(), &[e(d, 5), e(d, 0)]);
    for s in PM {
        w(&mut b, d, 1, [1, 2], &[3, 4], s);
    }
    w(&mut b, d, 1, [3, 4], &[5], 1.0);
    b.product("1|34-".into(), &[e(d, 1), x(d, 3, 4, -1.0)]);
    b.product("1|5".into(), &[e(d, 1), e(d, 5)]);
    for s in PM {
        wbar(&mut b, d, 1, [2, 3], &[4, 5], s);
    }
    let col = if corrected { 1 } else { 0 };
    for s in PM {
        b.product(format!("45{}|{col}", sign(s)), &[x(d, 4, 5, s), e(d, col)]);
    }
    for s in PM {
        b.product(format!("4|45{}", sign(s)), &[e(d, 4), x(d, 4, 5, s)]);
    }
    b.product("5|4".into(), &[e(d, 5), e(d, 4)]);
    b.product("5|5".into(), &[e(d, 5), e(d, 5)]);
    b.finish("s6")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{gram_check, is_fully_product, schmidt_rank, Bipartition, ORTHO_TOL};

    #[test]
    fn counts() {
        let expected = [
            (FixtureName::S1, 16),
            (FixtureName::S2, 14),
            (FixtureName::S3, 10),
            (FixtureName::S4, 20),
            (FixtureName::S5, 12),
            (FixtureName::S6, 24),
            (FixtureName::Tiles33, 5),
            (FixtureName::S1General(6), 36),
        ];
        for (name, n) in expected {
            assert_eq!(fixture(name).len(), n, "{name}");
        }
    }

    #[test]
    fn corrected_sets_orthogonal() {
        for name in [
            FixtureName::S1,
            FixtureName::S2,
            FixtureName::S3,
            FixtureName::S4,
            FixtureName::S5,
            FixtureName::S6,
            FixtureName::Tiles33,
            FixtureName::S1General(6),
            FixtureName::S1General(8),
        ] {
            let r = gram_check(&fixture(name), ORTHO_TOL);
            assert!(r.pass, "{name}: {:?}", r.violations.first());
            assert!(r.max_overlap <= 1e-12);
        }
    }

    #[test]
    fn verbatim_s6_fails_on_the_moved_column() {
        let v = build_fixture(&FixtureDescriptor::new(FixtureName::S6, Variant::Verbatim)).unwrap();
        let r = gram_check(&v, ORTHO_TOL);
        assert!(!r.pass);
        let top = &r.violations[0];
        assert!((top.magnitude - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        let pair = [top.label_a.as_str(), top.label_b.as_str()];
        assert!(pair.contains(&"5|0"));
        assert!(pair.contains(&"45+|0") || pair.contains(&"45-|0"));
        // every violation involves one of the two printed column states
        assert!(r.violations.iter().all(|v| v.label_a.starts_with("45") || v.label_b.starts_with("45")));
    }

    #[test]
    fn verbatim_equals_corrected_elsewhere() {
        for name in [FixtureName::S1, FixtureName::S3, FixtureName::S5] {
            let a = fixture(name);
            let b = build_fixture(&FixtureDescriptor::new(name, Variant::Verbatim)).unwrap();
            assert!((&a.gram() - &b.gram()).norm_inf() == 0.0);
        }
    }

    #[test]
    fn corrections_listed() {
        assert!(fixture_corrections(FixtureName::S3).is_empty());
        let s1 = fixture_corrections(FixtureName::S1);
        assert_eq!(s1.len(), 2);
        assert!(s1.iter().all(|c| !c.changes_amplitudes));
        assert!(fixture_corrections(FixtureName::S6).iter().any(|c| c.changes_amplitudes));
    }

    #[test]
    fn s1_is_the_d4_family_member() {
        let a = fixture(FixtureName::S1);
        let b = s1_general(4).unwrap();
        assert_eq!(a.labels(), b.labels());
        assert!(s1_general(5).is_err());
        assert!(s1_general(2).is_err());
    }

    #[test]
    fn product_and_entangled_members() {
        for name in [FixtureName::S1, FixtureName::S2, FixtureName::S3, FixtureName::S4, FixtureName::Tiles33] {
            for k in fixture(name).states() {
                assert!(is_fully_product(k).unwrap(), "{name} {}", k.label());
            }
        }
        let cut = Bipartition::new(vec![0], 2).unwrap();
        for name in [FixtureName::S5, FixtureName::S6] {
            let ranks: Vec<usize> = fixture(name).states().iter().map(|k| schmidt_rank(k, &cut).unwrap()).collect();
            assert!(ranks.iter().any(|&r| r == 2));
            let set = fixture(name);
            for (k, r) in set.states().iter().zip(&ranks) {
                assert_eq!(*r == 2, k.label().starts_with('W'), "{}", k.label());
            }
        }
    }

    #[test]
    fn names_parse() {
        assert_eq!("s1_general(6)".parse::<FixtureName>().unwrap(), FixtureName::S1General(6));
        assert_eq!("s1_general:8".parse::<FixtureName>().unwrap(), FixtureName::S1General(8));
        assert_eq!("TILES33".parse::<FixtureName>().unwrap(), FixtureName::Tiles33);
        assert!("s7".parse::<FixtureName>().is_err());
    }
}
