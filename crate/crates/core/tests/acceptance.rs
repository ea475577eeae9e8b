//! Acceptance criteria. Each prints one `criterion NN ... PASS|FAIL` line
//! with its runtime against the budget; the run fails if any criterion does.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qlocc::fixtures::{build_fixture, fixture, FixtureDescriptor, FixtureName, Variant};
use qlocc::linalg::{c, kron_vec, orthonormal_span, svd, CMatrix, CVector, C64};
use qlocc::oplm::{
    block_structure, candidate_measurements, constraint_residual, is_locally_irreducible, oplm_space, projective_oplms,
    Irreducibility, LocalMeasurement,
};
use qlocc::partition::{hidden_nonlocality_profile, Basis, PartitionProfile, Verdict};
use qlocc::protocol::{
    apply_outcome, builtin_protocol, certify_activation, reached_sets, replay_certificate, verify_protocol,
    CertificateKind, Evidence, ProtocolTree,
};
use qlocc::qset::{parse_qset, serialize_qset};
use qlocc::render::{extract_tiles, render, Format, Overlay, RenderOptions};
use qlocc::search::{activation_search, search_distinguishing_protocol, DistinguishingOutcome, DEFAULT_MAX_DEPTH};
use qlocc::state::{
    apply_local, gram_check, local_support, product_factors, redundancy_check, schmidt_rank, Bipartition, Ket,
    PartySpace, Redundancy, StateSet, ORTHO_TOL,
};
use qlocc::upb::{check_unextendible, numeric_extension_search_on_supports, EXTENSION_TOL};

struct Criterion {
    n: u32,
    title: &'static str,
    budget_s: f64,
    start: Instant,
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Criterion {
    fn new(n: u32, title: &'static str, budget_s: f64) -> Self {
        Criterion { n, title, budget_s, start: Instant::now(), failures: Vec::new(), notes: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }

    fn finish(mut self) -> bool {
        let secs = self.start.elapsed().as_secs_f64();
        if secs > self.budget_s {
            self.failures.push(format!("took {secs:.2} s, budget {} s", self.budget_s));
        }
        let status = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        println!("criterion {:02} {:<34} {status} ({secs:.2} s / {} s)", self.n, self.title, self.budget_s);
        for n in &self.notes {
            println!("    note: {n}");
        }
        for f in &self.failures {
            println!("    failed: {f}");
        }
        self.failures.is_empty()
    }
}

fn verbatim(name: FixtureName) -> StateSet {
    build_fixture(&FixtureDescriptor::new(name, Variant::Verbatim)).unwrap()
}

fn supports(bs: &qlocc::oplm::BlockStructure) -> Vec<Vec<usize>> {
    let mut v: Vec<Vec<usize>> = bs.blocks.iter().map(|b| b.support.clone().unwrap_or_default()).collect();
    v.sort();
    v
}

fn p0_p123(party: usize) -> LocalMeasurement {
    LocalMeasurement::from_index_sets(party, 4, &[vec![0], vec![1, 2, 3]]).unwrap()
}

fn criterion_01_fixture_integrity() -> bool {
    let mut cr = Criterion::new(1, "fixture integrity", 1.0);
    let expected = [
        (FixtureName::S1, 16),
        (FixtureName::S2, 14),
        (FixtureName::S3, 10),
        (FixtureName::S4, 20),
        (FixtureName::S5, 12),
        (FixtureName::S6, 22),
        (FixtureName::Tiles33, 5),
    ];
    for (name, count) in expected {
        let s = fixture(name);
        cr.check(s.len() == count, format!("{name:?} has {} states, expected {count}", s.len()));
        let g = gram_check(&s, ORTHO_TOL);
        cr.check(g.pass, format!("{name:?} corrected fails gram_check (max overlap {:.3e})", g.max_overlap));
    }
    let g = gram_check(&verbatim(FixtureName::S6), ORTHO_TOL);
    cr.check(!g.pass, "verbatim s6 passes gram_check");
    for sign in ["+", "-"] {
        let xi45 = format!("45{sign}|0");
        let named = g.violations.iter().any(|v| {
            let pair = [v.label_a.as_str(), v.label_b.as_str()];
            pair.contains(&xi45.as_str()) && pair.contains(&"5|0")
        });
        cr.check(named, format!("verbatim s6 violations do not name ({xi45}, 5|0)"));
    }
    if let Some(v) = g.violations.iter().find(|v| v.label_a == "5|0" || v.label_b == "5|0") {
        cr.note(format!("verbatim s6 overlap |<{}|{}>| = {:.4}", v.label_a, v.label_b, v.magnitude));
    }
    cr.note("the s6 listing has 24 states; see README");
    cr.finish()
}

fn criterion_02_s1_root_structure() -> bool {
    let mut cr = Criterion::new(2, "s1 root OPLM structure", 5.0);
    for (party, name) in [(0, "A"), (1, "B")] {
        let s1 = fixture(FixtureName::S1);
        let sp = oplm_space(&s1, party).unwrap();
        cr.check(sp.space_dim == 2, format!("oplm_space(s1, {name}) has dimension {}, expected 2", sp.space_dim));
        let bs = block_structure(&sp).unwrap();
        let sup = supports(&bs);
        cr.check(sup == vec![vec![0], vec![1, 2, 3]], format!("party {name} block supports {sup:?}"));
        let ms = projective_oplms(&sp, &bs).unwrap();
        let labels: Vec<String> = ms.iter().map(|m| m.labels.join("|")).collect();
        cr.check(
            ms.len() == 1 && ms[0].same_as(&p0_p123(party)),
            format!("party {name} projective OPLMs {labels:?}, expected [P0|P123]"),
        );
        if party == 1 {
            cr.note(format!("party B at the root: space dimension {}, measurements {labels:?}", sp.space_dim));
        }
    }
    cr.finish()
}

fn criterion_03_s1_verdicts() -> bool {
    let mut cr = Criterion::new(3, "s1 distinguishable, not activable", 30.0);
    let s1 = fixture(FixtureName::S1);
    match search_distinguishing_protocol(&s1, 6).unwrap() {
        DistinguishingOutcome::Found(cert) => {
            let tree = cert.tree.as_ref().unwrap();
            let v = verify_protocol(&s1, tree).unwrap();
            cr.check(v.pass, format!("found protocol fails verification: {:?}", v.failures));
            cr.check(replay_certificate(&s1, &cert).unwrap(), "certificate replay fails");
            cr.note(format!("protocol depth {}, {} leaves", tree.depth(), tree.leaf_count()));
        }
        DistinguishingOutcome::Exhausted(e) => cr.check(false, format!("search exhausted: {:?}", e.stats)),
    }
    let cert = activation_search(&s1, 6).unwrap();
    cr.check(cert.kind == CertificateKind::NonActivabilityInClass, format!("activation kind {:?}", cert.kind));
    match &cert.reachable {
        Some(r) => {
            cr.check(r.sets > 0 && r.distinguishable == r.sets && r.undetermined == 0, format!("reachable {r:?}"));
            cr.note(format!("{} reachable sets, all distinguishable", r.sets));
        }
        None => cr.check(false, "no reachable summary"),
    }
    cr.finish()
}

fn record_is(p: &PartitionProfile, name: &str) -> (Verdict, Verdict, Basis, String, Vec<usize>) {
    let r = p.record(name).unwrap_or_else(|| panic!("no record {name}"));
    (r.distinguishable, r.activable, r.basis, r.rule.clone(), r.first_round_space_dims.clone())
}

fn criterion_04_s2_profile() -> bool {
    let mut cr = Criterion::new(4, "s2 hidden-nonlocality profile", 60.0);
    let p = hidden_nonlocality_profile(&fixture(FixtureName::S2), DEFAULT_MAX_DEPTH).unwrap();
    for k in [1, 2] {
        let v = p.h_flags.get(&k).map(|f| f.value.clone()).unwrap_or_default();
        cr.check(v == "zero", format!("H_{k} = {v}"));
    }
    let (_, act, basis, rule, dims) = record_is(&p, "A|BC");
    cr.check(act == Verdict::No && basis == Basis::InClass, format!("A|BC activable {act:?} [{basis:?}]"));
    cr.check(rule.contains("search"), format!("A|BC decided by `{rule}`"));
    cr.check(dims.first() == Some(&2), format!("A|BC first-round space dims {dims:?}"));
    for name in ["B|AC", "C|AB"] {
        let (_, act, basis, rule, _) = record_is(&p, name);
        cr.check(act == Verdict::No && basis == Basis::Exact, format!("{name} activable {act:?} [{basis:?}]"));
        cr.check(rule.contains("qubit"), format!("{name} decided by `{rule}`"));
    }
    cr.finish()
}

fn criterion_05_s3_discrimination() -> bool {
    let mut cr = Criterion::new(5, "s3 builtin discrimination", 1.0);
    let s3 = fixture(FixtureName::S3);
    let t = builtin_protocol("s3_discrimination").unwrap();
    match &t {
        ProtocolTree::Measure { measurement, children } => {
            cr.check(measurement.party == 1 && measurement.outcomes.len() == 4, "root is not a four-outcome M_B");
            let all_a = children.iter().all(|c| matches!(c, ProtocolTree::Measure { measurement, .. } if measurement.party == 0));
            cr.check(all_a, "branches are not followed by M_A");
        }
        ProtocolTree::Leaf(_) => cr.check(false, "builtin is a bare leaf"),
    }
    let v = verify_protocol(&s3, &t).unwrap();
    cr.check(v.pass && v.identified.len() == 10, format!("verification {:?}", v.failures));
    cr.finish()
}

/// Local overlap moduli `|<a_i|a_j>|` per party of a product set.
fn local_overlaps(s: &StateSet) -> Vec<Vec<Vec<f64>>> {
    let f: Vec<Vec<CVector>> = s.states().iter().map(|k| product_factors(k).unwrap()).collect();
    (0..s.space().parties())
        .map(|p| (0..s.len()).map(|i| (0..s.len()).map(|j| f[i][p].dot(&f[j][p]).norm()).collect()).collect())
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Same Gram matrix, same local support dimensions, and local overlap
/// moduli matching under some relabeling of the states.
fn equal_up_to_embedding(a: &StateSet, b: &StateSet) -> bool {
    if a.len() != b.len() || a.space().parties() != b.space().parties() {
        return false;
    }
    let gram_dev = |s: &StateSet| {
        let g = s.gram();
        let mut d: f64 = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                let want = if i == j { 1.0 } else { 0.0 };
                d = d.max((g[(i, j)] - c(want, 0.0)).norm());
            }
        }
        d
    };
    if gram_dev(a) > 1e-9 || gram_dev(b) > 1e-9 {
        return false;
    }
    for p in 0..a.space().parties() {
        if local_support(a, p).unwrap().cols() != local_support(b, p).unwrap().cols() {
            return false;
        }
    }
    let (oa, ob) = (local_overlaps(a), local_overlaps(b));
    permutations(a.len()).iter().any(|perm| {
        (0..oa.len()).all(|p| {
            (0..a.len()).all(|i| (0..a.len()).all(|j| (oa[p][perm[i]][perm[j]] - ob[p][i][j]).abs() < 1e-9))
        })
    })
}

fn criterion_06_s3_activation() -> bool {
    let mut cr = Criterion::new(6, "s3 activation certificate", 10.0);
    let s3 = fixture(FixtureName::S3);
    let t = builtin_protocol("s3_activation").unwrap();
    let cert = certify_activation(&s3, &t).unwrap();
    cr.check(cert.kind == CertificateKind::Activation, format!("kind {:?}", cert.kind));
    let again = certify_activation(&s3, &t).unwrap();
    cr.check(
        serde_json::to_string(&cert).unwrap() == serde_json::to_string(&again).unwrap(),
        "certificate is not deterministic",
    );
    cr.check(cert.leaf_evidence.len() == 4, format!("{} leaves", cert.leaf_evidence.len()));
    for l in &cert.leaf_evidence {
        let exact = matches!(&l.evidence, Evidence::IrreducibleExact { support_dims, space_dims }
            if support_dims == &vec![3, 3] && space_dims == &vec![1, 1]);
        cr.check(exact, format!("leaf {} evidence {:?}", l.path, l.evidence));
    }
    let tiles = fixture(FixtureName::Tiles33);
    let leaves = reached_sets(&s3, &t).unwrap();
    cr.check(leaves.len() == 4, format!("{} reached sets", leaves.len()));
    for (path, leaf) in &leaves {
        let flat = leaf.without_splits();
        cr.check(flat.len() == 5, format!("{path}: {} states", flat.len()));
        cr.check(equal_up_to_embedding(&flat, &tiles), format!("{path}: not tiles33 up to embedding"));
        let u = check_unextendible(&flat).unwrap();
        cr.check(u.unextendible && u.support_dims == vec![3, 3], format!("{path}: unextendible {}", u.unextendible));
        let irr = is_locally_irreducible(&flat).unwrap();
        cr.check(
            irr.verdict == Irreducibility::IrreducibleExact && irr.space_dims == vec![1, 1],
            format!("{path}: {:?} space dims {:?}", irr.verdict, irr.space_dims),
        );
    }
    cr.finish()
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> CVector {
    loop {
        let v = CVector::from_vec((0..d).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect());
        if let Some(u) = v.normalized() {
            return u;
        }
    }
}

/// Orthonormal basis of the complement of `vecs` in C^d.
fn complement(vecs: &[CVector], d: usize) -> Vec<CVector> {
    if vecs.is_empty() {
        return (0..d).map(|i| CVector::basis(d, i)).collect();
    }
    let data: Vec<C64> = vecs.iter().flat_map(|v| v.as_slice().iter().map(|x| x.conj()).collect::<Vec<_>>()).collect();
    let m = CMatrix::from_rows(vecs.len(), d, data).unwrap();
    svd(&m).unwrap().nullspace()
}

/// A vector of the span of `basis`, biased towards sparse combinations so
/// that unextendible configurations actually occur.
fn pick_in(rng: &mut ChaCha8Rng, basis: &[CVector]) -> CVector {
    let d = basis[0].dim();
    let k = basis.len();
    let coef: Vec<C64> = match rng.gen_range(0..4) {
        0 | 1 => (0..k).map(|i| c(if i == rng.gen_range(0..k) { 1.0 } else { 0.0 }, 0.0)).collect(),
        2 => (0..k).map(|_| c([-1.0, 0.0, 1.0][rng.gen_range(0..3)], 0.0)).collect(),
        _ => random_unit(rng, k).into_vec(),
    };
    let mut v = CVector::zeros(d);
    for (b, w) in basis.iter().zip(&coef) {
        for (x, y) in v.as_mut_slice().iter_mut().zip(b.as_slice()) {
            *x += w * y;
        }
    }
    v.normalized().unwrap_or_else(|| basis[0].clone())
}

/// Random orthogonal product set in C^3 x C^3 with at most `max` states.
fn random_product_set(rng: &mut ChaCha8Rng, max: usize, name: &str) -> StateSet {
    let space = PartySpace::new(vec![3, 3]).unwrap();
    let target = rng.gen_range(2..=max);
    let mut parts: Vec<(CVector, CVector)> = Vec::new();
    let mut tries = 0;
    while parts.len() < target && tries < 200 {
        tries += 1;
        let mask: Vec<bool> = parts.iter().map(|_| rng.gen_bool(0.5)).collect();
        let on_a: Vec<CVector> = parts.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| p.0.clone()).collect();
        let on_b: Vec<CVector> = parts.iter().zip(&mask).filter(|(_, &m)| !m).map(|(p, _)| p.1.clone()).collect();
        let (ca, cb) = (complement(&on_a, 3), complement(&on_b, 3));
        if ca.is_empty() || cb.is_empty() {
            continue;
        }
        let (a, b) = (pick_in(rng, &ca), pick_in(rng, &cb));
        let ok = parts.iter().all(|(x, y)| (x.dot(&a) * y.dot(&b)).norm() < 1e-12);
        if ok {
            parts.push((a, b));
        }
    }
    let states = parts
        .iter()
        .enumerate()
        .map(|(i, (a, b))| Ket::new(space.clone(), kron_vec(a, b).unwrap(), format!("p{i}")).unwrap())
        .collect();
    StateSet::new(space, states, name).unwrap()
}

fn criterion_07_upb_oracle_equivalence() -> bool {
    let mut cr = Criterion::new(7, "UPB exact vs numeric oracle", 60.0);
    let tiles = fixture(FixtureName::Tiles33);
    let mut sets = vec![tiles.clone(), tiles.subset(&[0, 1, 2, 3], "tiles33-minus-stopper")];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..120 {
        sets.push(random_product_set(&mut rng, 8, &format!("random{i}")));
    }
    for i in 0..10 {
        let r = locally_rotated(&mut rng, &tiles).with_name(format!("rotated-tiles{i}"));
        sets.push(r.subset(&[0, 1, 2, 3], format!("rotated-tiles{i}-minus-stopper")));
        sets.push(r);
    }
    let (mut agree, mut unext) = (0, 0);
    for (i, s) in sets.iter().enumerate() {
        let exact = check_unextendible(s).unwrap().unextendible;
        let oracle = numeric_extension_search_on_supports(s, 200, i as u64).unwrap();
        let numeric = oracle.residual > EXTENSION_TOL;
        if exact == numeric {
            agree += 1;
        } else {
            cr.check(false, format!("{}: exact {exact}, oracle residual {:.3e}", s.name(), oracle.residual));
        }
        unext += exact as usize;
        if i == 0 {
            cr.check(exact, "tiles33 not unextendible");
        }
        if i == 1 {
            cr.check(!exact, "tiles33 minus stopper unextendible");
        }
    }
    cr.note(format!("{agree}/{} agree, {unext} unextendible", sets.len()));
    cr.finish()
}

fn verdict_map(p: &PartitionProfile) -> Vec<(String, Verdict, Verdict)> {
    let mut v: Vec<_> = p
        .partitions
        .iter()
        .filter(|r| r.grouping.len() == 2)
        .map(|r| (r.partition.clone(), r.distinguishable, r.activable))
        .collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

fn criterion_08_s4_hierarchy() -> bool {
    let mut cr = Criterion::new(8, "s4 partition hierarchy", 60.0);
    let p4 = hidden_nonlocality_profile(&fixture(FixtureName::S4), DEFAULT_MAX_DEPTH).unwrap();
    let (_, act, basis, rule, _) = record_is(&p4, "AB|C");
    cr.check(act == Verdict::No && basis == Basis::Exact, format!("AB|C activable {act:?} [{basis:?}]"));
    cr.check(rule.contains("qubit"), format!("AB|C decided by `{rule}`"));
    let (_, act, _, rule, _) = record_is(&p4, "A|BC");
    cr.check(act == Verdict::Yes, format!("A|BC activable {act:?}"));
    cr.check(rule.contains("s4_abc_activation"), format!("A|BC decided by `{rule}`"));
    let p2 = hidden_nonlocality_profile(&fixture(FixtureName::S2), DEFAULT_MAX_DEPTH).unwrap();
    let (v2, v4) = (verdict_map(&p2), verdict_map(&p4));
    cr.check(v2 != v4, "s2 and s4 bipartition verdicts coincide");
    let j2 = serde_json::to_value(&p2).unwrap();
    let j4 = serde_json::to_value(&p4).unwrap();
    cr.check(j2["partitions"] != j4["partitions"], "machine-readable profiles coincide");
    cr.finish()
}

fn criterion_09_s5_s6() -> bool {
    let mut cr = Criterion::new(9, "s5 and s6 non-activability", 120.0);
    let s5 = fixture(FixtureName::S5);
    let sp = oplm_space(&s5, 0).unwrap();
    cr.check(sp.space_dim == 2, format!("oplm_space(s5, A) dimension {}", sp.space_dim));
    let sup = supports(&block_structure(&sp).unwrap());
    cr.check(sup == vec![vec![0], vec![1, 2, 3]], format!("s5 block supports {sup:?}"));
    let cut = Bipartition::new(vec![0], 2).unwrap();
    let entangled = s5.states().iter().filter(|k| schmidt_rank(k, &cut).unwrap() == 2).count();
    cr.check(entangled >= 1, "s5 has no Schmidt-rank-2 state");
    for (s, depth) in [(s5, 6), (fixture(FixtureName::S6), 8)] {
        let cert = activation_search(&s, depth).unwrap();
        cr.check(
            cert.kind == CertificateKind::NonActivabilityInClass,
            format!("activation_search({}, {depth}) -> {:?}", s.name(), cert.kind),
        );
    }
    cr.finish()
}

fn criterion_10_redundancy() -> bool {
    let mut cr = Criterion::new(10, "local redundancy", 1.0);
    let s3 = fixture(FixtureName::S3);
    cr.check(s3.space().sub_splits().get(&1) == Some(&vec![2, 3]), "s3 lacks the 2x3 split of B");
    match redundancy_check(&s3).unwrap() {
        Redundancy::LocallyIrredundant { witnesses } => {
            let w = witnesses.iter().find(|w| w.discarded_names == ["b2"]);
            let pair = w.and_then(|w| w.pair.clone());
            cr.check(pair == Some(("phi3".into(), "phi4".into())), format!("b2 witness {pair:?}"));
        }
        r => cr.check(false, format!("s3 verdict {r:?}")),
    }
    let space = PartySpace::new(vec![2, 2]).unwrap();
    let k = |a: usize, b: usize, l: &str| Ket::new(space.clone(), kron_vec(&CVector::basis(2, a), &CVector::basis(2, b)).unwrap(), l).unwrap();
    let s = StateSet::new(space.clone(), vec![k(0, 0, "00"), k(1, 1, "11")], "diag").unwrap();
    cr.check(redundancy_check(&s).unwrap().is_redundant(), "{|00>,|11>} is not redundant");
    cr.finish()
}

fn random_set(rng: &mut ChaCha8Rng, i: usize) -> StateSet {
    let parties = rng.gen_range(1..=3);
    let dims: Vec<usize> = (0..parties).map(|_| rng.gen_range(2..=4)).collect();
    let space = PartySpace::new(dims).unwrap();
    let n = rng.gen_range(1..=6);
    let states = (0..n)
        .map(|j| Ket::new(space.clone(), random_unit(rng, space.total_dim()), format!("s{i}_{j}")).unwrap())
        .collect();
    StateSet::new(space, states, format!("random{i}")).unwrap()
}

fn criterion_11_format_and_render() -> bool {
    let mut cr = Criterion::new(11, "qset round-trip and rendering", 5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let s = random_set(&mut rng, i);
        let back = parse_qset(&serialize_qset(&s)).unwrap();
        cr.check(back.labels() == s.labels() && back.space() == s.space(), format!("{} changed shape", s.name()));
        let (g, h) = (s.gram(), back.gram());
        for a in 0..s.len() {
            for b in 0..s.len() {
                worst = worst.max((g[(a, b)] - h[(a, b)]).norm());
            }
        }
    }
    cr.check(worst <= 1e-12, format!("Gram deviation {worst:.3e}"));
    cr.note(format!("max Gram deviation {worst:.1e}"));

    let s1 = fixture(FixtureName::S1);
    let tiles = extract_tiles(&s1, false).unwrap();
    let covered = (0..4).all(|a| (0..4).all(|b| tiles.iter().filter(|t| t.contains(a, b)).count() == 1));
    cr.check(covered, "s1 tiles do not partition the 4x4 grid");
    let members: usize = tiles.iter().map(|t| t.members.len()).sum();
    cr.check(members == 16, format!("s1 tiles hold {members} states"));
    cr.check(render(&s1, Format::Ascii, &RenderOptions::default()).is_ok(), "s1 ascii render fails");

    let s3 = fixture(FixtureName::S3);
    let t = builtin_protocol("s3_activation").unwrap();
    let Some(ProtocolTree::Measure { measurement, .. }) = t.node_at("root") else { panic!("no root measurement") };
    let overlay = Overlay::from_measurement(measurement).unwrap();
    let opts = RenderOptions { linked: true, overlay: Some(overlay) };
    let svg = render(&s3, Format::Svg, &opts).unwrap();
    cr.check(svg.contains("class=\"overlay\"") && svg.contains("KB1") && svg.contains("KB2"), "s3 svg lacks the K_B overlay");
    let ascii = render(&s3, Format::Ascii, &opts).unwrap();
    cr.check(ascii.contains("overlay B: KB1"), "s3 ascii lacks the K_B overlay");
    cr.finish()
}

fn random_unitary(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let vecs: Vec<CVector> = (0..d).map(|_| random_unit(rng, d)).collect();
    CMatrix::from_columns(d, &orthonormal_span(d, &vecs).unwrap())
}

fn locally_rotated(rng: &mut ChaCha8Rng, s: &StateSet) -> StateSet {
    let space = s.space().without_splits();
    let us: Vec<CMatrix> = space.party_dims().iter().map(|&d| random_unitary(rng, d)).collect();
    let states = s
        .states()
        .iter()
        .map(|k| {
            let mut v = k.amplitudes().clone();
            for (p, u) in us.iter().enumerate() {
                v = apply_local(&space, &v, p, u).unwrap();
            }
            Ket::new(space.clone(), v, k.label()).unwrap()
        })
        .collect();
    StateSet::new(space, states, s.name()).unwrap()
}

fn criterion_12_property_suites() -> bool {
    let mut cr = Criterion::new(12, "property suites", 60.0);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let pool: Vec<StateSet> = [
        FixtureName::S1,
        FixtureName::S2,
        FixtureName::S3,
        FixtureName::S4,
        FixtureName::S5,
        FixtureName::S6,
        FixtureName::Tiles33,
    ]
    .into_iter()
    .map(|n| fixture(n).without_splits())
    .chain([verbatim(FixtureName::S6)])
    .collect();

    // local unitaries keep Schmidt ranks and the Gram verdict
    for trial in 0..50 {
        let s = &pool[trial % pool.len()];
        let r = locally_rotated(&mut rng, s);
        cr.check(gram_check(s, ORTHO_TOL).pass == gram_check(&r, ORTHO_TOL).pass, format!("trial {trial}: gram verdict changed"));
        for cut in Bipartition::all(s.space().parties()) {
            for (a, b) in s.states().iter().zip(r.states()) {
                let (x, y) = (schmidt_rank(a, &cut).unwrap(), schmidt_rank(b, &cut).unwrap());
                cr.check(x == y, format!("trial {trial}: {} rank {x} -> {y} across {}", a.label(), cut.name()));
            }
        }
    }

    let mut measurements = 0;
    let mut samples = 0;
    for s in pool.iter().filter(|s| gram_check(s, ORTHO_TOL).pass) {
        for p in 0..s.space().parties() {
            let sp = oplm_space(s, p).unwrap();
            let bs = block_structure(&sp).unwrap();
            let mut ms = candidate_measurements(s, p).unwrap();
            if bs.commuting {
                ms.extend(projective_oplms(&sp, &bs).unwrap());
            }
            for m in &ms {
                measurements += 1;
                let res = m.completeness_residual();
                cr.check(res <= 1e-10, format!("{} party {p} {:?}: completeness {res:.3e}", s.name(), m.labels));
                // every state survives some outcome and the outcome weights sum to one
                let mut seen = vec![0usize; s.len()];
                for k in &m.outcomes {
                    let (_, kept) = apply_outcome(s, p, k).unwrap();
                    for i in kept {
                        seen[i] += 1;
                    }
                }
                cr.check(seen.iter().all(|&n| n >= 1), format!("{} {:?}: a state vanished", s.name(), m.labels));
                for st in s.states() {
                    let w: f64 = m.outcomes.iter().map(|k| st.apply_local_raw(p, k).unwrap().norm().powi(2)).sum();
                    cr.check((w - 1.0).abs() <= 1e-10, format!("{} {}: outcome weights {w}", s.name(), st.label()));
                }
            }
            for _ in 0..5 {
                samples += 1;
                let coef: Vec<f64> = (0..sp.space_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let e = sp.combination(&coef);
                let res = constraint_residual(s, p, &e).unwrap();
                cr.check(res <= 1e-8, format!("{} party {p}: span sample residual {res:.3e}", s.name()));
            }
        }
    }
    cr.note(format!("{measurements} measurements, {samples} span samples"));
    cr.finish()
}

fn main() {
    let criteria: [(u32, fn() -> bool); 12] = [
        (1, criterion_01_fixture_integrity),
        (2, criterion_02_s1_root_structure),
        (3, criterion_03_s1_verdicts),
        (4, criterion_04_s2_profile),
        (5, criterion_05_s3_discrimination),
        (6, criterion_06_s3_activation),
        (7, criterion_07_upb_oracle_equivalence),
        (8, criterion_08_s4_hierarchy),
        (9, criterion_09_s5_s6),
        (10, criterion_10_redundancy),
        (11, criterion_11_format_and_render),
        (12, criterion_12_property_suites),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (n, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        match std::panic::catch_unwind(f) {
            Ok(true) => {}
            Ok(false) => failed.push(n),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("criterion {n:02} FAIL (panicked: {msg})");
                failed.push(n);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
