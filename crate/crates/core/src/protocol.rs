//! Protocol trees: replay, verification, certificates and the scripted protocols.

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eig, re, CMatrix, CVector};
use crate::oplm::{orthogonality_violation, restricted_space_dims, LocalMeasurement, ELIMINATION_TOL, SPAN_TOL};
use crate::qset::{parse_qset, serialize_qset};
use crate::state::{apply_local, gram_check, is_fully_product, redundancy_check, reduced_party_state, Ket, PartySpace, StateSet};
use crate::upb::check_unextendible;

/// Largest leaf set handed to the exact UPB test during certification.
pub const UPB_LEAF_MAX: usize = 12;

/// Apply one Kraus operator on `party`; returns the renormalized survivors and
/// their indices in `s`.
pub fn apply_outcome(s: &StateSet, party: usize, kraus: &CMatrix) -> Result<(StateSet, Vec<usize>)> {
    if party >= s.space().parties() {
        return Err(Error::Invalid(format!("no party {party}")));
    }
    let d = s.space().dim(party);
    if kraus.rows() != d || kraus.cols() != d {
        return Err(Error::Dimension(format!(
            "{}x{} Kraus operator on party {party} of dimension {d}",
            kraus.rows(),
            kraus.cols()
        )));
    }
    let mut kets = Vec::new();
    let mut map = Vec::new();
    for (i, k) in s.states().iter().enumerate() {
        let v = apply_local(s.space(), k.amplitudes(), party, kraus)?;
        if v.norm() > ELIMINATION_TOL {
            kets.push(Ket::new(s.space().clone(), v, k.label())?);
            map.push(i);
        }
    }
    let out = StateSet::new(s.space().clone(), kets, s.name())?;
    let report = gram_check(&out, SPAN_TOL);
    if let Some(v) = report.violations.first() {
        return Err(Error::NotOplm(format!(
            "survivors `{}` and `{}` overlap by {:.3e}",
            v.label_a, v.label_b, v.magnitude
        )));
    }
    Ok((out, map))
}

#[derive(Clone, Debug)]
pub enum Leaf {
    Identified(String),
    /// Residual set; `None` when not recorded.
    SetReached(Option<StateSet>),
}

#[derive(Clone, Debug)]
pub enum ProtocolTree {
    Measure { measurement: LocalMeasurement, children: Vec<ProtocolTree> },
    Leaf(Leaf),
}

fn open_leaf() -> ProtocolTree {
    ProtocolTree::Leaf(Leaf::SetReached(None))
}

fn matrix_json(m: &CMatrix) -> Value {
    serde_json::to_value(m).expect("matrix serializes")
}

fn matrix_from_json(v: &Value) -> Result<CMatrix> {
    let bad = || Error::Protocol("kraus must be a square array of [re, im] pairs".into());
    let rows = v.as_array().ok_or_else(bad)?;
    let n = rows.len();
    let mut data = Vec::with_capacity(n * n);
    for row in rows {
        let row = row.as_array().ok_or_else(bad)?;
        if row.len() != n {
            return Err(bad());
        }
        for z in row {
            let z = z.as_array().ok_or_else(bad)?;
            if z.len() != 2 {
                return Err(bad());
            }
            data.push(c(z[0].as_f64().ok_or_else(bad)?, z[1].as_f64().ok_or_else(bad)?));
        }
    }
    CMatrix::from_rows(n, n, data)
}

impl ProtocolTree {
    pub fn to_json(&self) -> Value {
        match self {
            ProtocolTree::Measure { measurement, children } => json!({
                "party": measurement.party,
                "outcomes": measurement.outcomes.iter().zip(&measurement.labels).zip(children).map(|((k, l), ch)| json!({
                    "label": l,
                    "kraus": matrix_json(k),
                    "child": ch.to_json(),
                })).collect::<Vec<_>>(),
            }),
            ProtocolTree::Leaf(Leaf::Identified(l)) => json!({ "identified": l }),
            ProtocolTree::Leaf(Leaf::SetReached(s)) => json!({ "set": s.as_ref().map(serialize_qset) }),
        }
    }

    pub fn from_json(v: &Value) -> Result<ProtocolTree> {
        let obj = v.as_object().ok_or_else(|| Error::Protocol("tree node must be an object".into()))?;
        if let Some(l) = obj.get("identified") {
            let l = l.as_str().ok_or_else(|| Error::Protocol("`identified` must be a string".into()))?;
            return Ok(ProtocolTree::Leaf(Leaf::Identified(l.to_string())));
        }
        if let Some(s) = obj.get("set") {
            return match s {
                Value::Null => Ok(open_leaf()),
                Value::String(text) => Ok(ProtocolTree::Leaf(Leaf::SetReached(Some(parse_qset(text)?)))),
                _ => Err(Error::Protocol("`set` must be qset text or null".into())),
            };
        }
        let party = obj
            .get("party")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Protocol("measure node needs `party`".into()))? as usize;
        let outs = obj
            .get("outcomes")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Protocol("measure node needs `outcomes`".into()))?;
        let mut kraus = Vec::new();
        let mut labels = Vec::new();
        let mut children = Vec::new();
        for (i, o) in outs.iter().enumerate() {
            kraus.push(matrix_from_json(o.get("kraus").ok_or_else(|| Error::Protocol("outcome needs `kraus`".into()))?)?);
            labels.push(o.get("label").and_then(Value::as_str).map(str::to_string).unwrap_or_else(|| format!("M{}", i + 1)));
            children.push(ProtocolTree::from_json(o.get("child").ok_or_else(|| Error::Protocol("outcome needs `child`".into()))?)?);
        }
        let measurement = LocalMeasurement::new(party, kraus, labels).map_err(|e| Error::Protocol(e.to_string()))?;
        Ok(ProtocolTree::Measure { measurement, children })
    }

    /// Number of measurement rounds along the longest branch.
    pub fn depth(&self) -> usize {
        match self {
            ProtocolTree::Measure { children, .. } => 1 + children.iter().map(|c| c.depth()).max().unwrap_or(0),
            ProtocolTree::Leaf(_) => 0,
        }
    }

    /// Node reached by following outcome steps such as `B:P012/A:P345`;
    /// `root` or an empty path is the tree itself.
    pub fn node_at(&self, path: &str) -> Option<&ProtocolTree> {
        let path = path.trim().trim_matches('/');
        if path.is_empty() || path == "root" {
            return Some(self);
        }
        let (head, rest) = path.split_once('/').unwrap_or((path, ""));
        let ProtocolTree::Measure { measurement, children } = self else { return None };
        let k = (0..children.len()).find(|&k| step_name(measurement, k) == head)?;
        children[k].node_at(rest)
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            ProtocolTree::Measure { children, .. } => children.iter().map(|c| c.leaf_count()).sum(),
            ProtocolTree::Leaf(_) => 1,
        }
    }
}

impl Serialize for ProtocolTree {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(ser)
    }
}

fn step_name(m: &LocalMeasurement, k: usize) -> String {
    format!("{}:{}", PartySpace::party_name(m.party), m.labels[k])
}

/// A leaf reached during replay.
#[derive(Clone, Debug)]
pub struct Reached<'a> {
    pub path: String,
    pub leaf: &'a Leaf,
    pub set: StateSet,
    /// Indices of the survivors in the root set.
    pub origin: Vec<usize>,
}

struct Replay<'a> {
    reached: Vec<Reached<'a>>,
    failures: Vec<String>,
    transcript: Vec<String>,
}

fn replay<'a>(s: &StateSet, t: &'a ProtocolTree) -> Result<Replay<'a>> {
    let mut r = Replay { reached: Vec::new(), failures: Vec::new(), transcript: Vec::new() };
    let origin: Vec<usize> = (0..s.len()).collect();
    walk(s, &origin, t, "", &mut r)?;
    Ok(r)
}

fn walk<'a>(s: &StateSet, origin: &[usize], t: &'a ProtocolTree, path: &str, r: &mut Replay<'a>) -> Result<()> {
    match t {
        ProtocolTree::Leaf(leaf) => {
            r.reached.push(Reached { path: display_path(path), leaf, set: s.clone(), origin: origin.to_vec() });
            Ok(())
        }
        ProtocolTree::Measure { measurement: m, children } => {
            if children.len() != m.outcomes.len() {
                return Err(Error::Protocol(format!(
                    "node {} has {} outcomes but {} children",
                    display_path(path),
                    m.outcomes.len(),
                    children.len()
                )));
            }
            if m.party >= s.space().parties() || m.dim() != s.space().dim(m.party) {
                return Err(Error::Protocol(format!(
                    "node {} measures party {} with dimension {}, set has dims {:?}",
                    display_path(path),
                    m.party,
                    m.dim(),
                    s.space().party_dims()
                )));
            }
            let v = orthogonality_violation(s, m)?;
            r.transcript.push(format!(
                "{} {} on {} states, overlap {:.1e}",
                display_path(path),
                PartySpace::party_name(m.party),
                s.len(),
                v
            ));
            if v > SPAN_TOL {
                r.failures.push(format!(
                    "{}: measurement on {} is not orthogonality preserving (overlap {v:.3e})",
                    display_path(path),
                    PartySpace::party_name(m.party)
                ));
                return Ok(());
            }
            for (k, (op, child)) in m.outcomes.iter().zip(children).enumerate() {
                let (next, map) = apply_outcome(s, m.party, op)?;
                let org: Vec<usize> = map.iter().map(|&i| origin[i]).collect();
                let p = if path.is_empty() { step_name(m, k) } else { format!("{path}/{}", step_name(m, k)) };
                walk(&next, &org, child, &p, r)?;
            }
            Ok(())
        }
    }
}

fn display_path(p: &str) -> String {
    if p.is_empty() {
        "root".into()
    } else {
        p.to_string()
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Verification {
    pub pass: bool,
    /// `(label, path)` for every identified state.
    pub identified: Vec<(String, String)>,
    pub failures: Vec<String>,
    pub transcript: Vec<String>,
}

pub fn verify_protocol(s: &StateSet, t: &ProtocolTree) -> Result<Verification> {
    let r = replay(s, t)?;
    let mut failures = r.failures;
    let mut identified = Vec::new();
    let mut seen = vec![false; s.len()];
    for leaf in &r.reached {
        match (leaf.set.len(), leaf.leaf) {
            (0, _) => {}
            (1, Leaf::Identified(l)) if leaf.set.states()[0].label() != l => failures.push(format!(
                "{}: leaf names `{l}` but `{}` survives",
                leaf.path,
                leaf.set.states()[0].label()
            )),
            (1, _) => {
                identified.push((leaf.set.states()[0].label().to_string(), leaf.path.clone()));
                seen[leaf.origin[0]] = true;
            }
            (n, _) => failures.push(format!("{}: leaf holds {n} states {:?}", leaf.path, leaf.set.labels())),
        }
    }
    for (i, k) in s.states().iter().enumerate() {
        if !seen[i] {
            failures.push(format!("state `{}` never reaches an identified leaf", k.label()));
        }
    }
    Ok(Verification { pass: failures.is_empty(), identified, failures, transcript: r.transcript })
}

/// Projective measurement onto the local supports of the states on one party,
/// when those supports are mutually orthogonal.
pub fn resolving_measurement(s: &StateSet) -> Result<Option<LocalMeasurement>> {
    if s.len() < 2 {
        return Ok(None);
    }
    'party: for p in 0..s.space().parties() {
        let rhos: Vec<CMatrix> = s.states().iter().map(|k| reduced_party_state(k, p)).collect();
        for i in 0..rhos.len() {
            for j in i + 1..rhos.len() {
                if rhos[i].frobenius_dot(&rhos[j]).re > 1e-9 {
                    continue 'party;
                }
            }
        }
        let d = s.space().dim(p);
        let mut outcomes = Vec::new();
        let mut labels = Vec::new();
        let mut total = CMatrix::zeros(d, d);
        for (k, rho) in s.states().iter().zip(&rhos) {
            let eig = hermitian_eig(rho)?;
            let max = eig.values.last().copied().unwrap_or(0.0);
            let mut proj = CMatrix::zeros(d, d);
            for (j, &w) in eig.values.iter().enumerate() {
                if w > 1e-10 * max {
                    let v: CVector = eig.vectors.column(j);
                    proj = &proj + &v.outer(&v);
                }
            }
            total = &total + &proj;
            outcomes.push(proj);
            labels.push(format!("S[{}]", k.label()));
        }
        let rest = &CMatrix::identity(d) - &total;
        if rest.trace().re > 0.5 {
            outcomes.push(rest);
            labels.push("rest".into());
        }
        return LocalMeasurement::new(p, outcomes, labels).map(Some);
    }
    Ok(None)
}

/// A resolving measurement with identified leaves.
pub fn resolution_tree(s: &StateSet, m: LocalMeasurement) -> Result<ProtocolTree> {
    let mut children = Vec::new();
    for op in &m.outcomes {
        let (next, _) = apply_outcome(s, m.party, op)?;
        children.push(leaf_for(&next));
    }
    Ok(ProtocolTree::Measure { measurement: m, children })
}

fn leaf_for(s: &StateSet) -> ProtocolTree {
    match s.len() {
        1 => ProtocolTree::Leaf(Leaf::Identified(s.states()[0].label().to_string())),
        _ => open_leaf(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CertificateKind {
    Distinguishability,
    Activation,
    NonActivabilityInClass,
    Indistinguishability,
    /// The depth cap was hit before the search settled.
    Incomplete,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Evidence {
    Identified { label: String },
    /// No state reaches this leaf.
    Vacuous,
    IrreducibleExact { support_dims: Vec<usize>, space_dims: Vec<usize> },
    Unextendible { support_dims: Vec<usize> },
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct LeafRecord {
    pub path: String,
    pub labels: Vec<String>,
    pub evidence: Evidence,
}

#[derive(Clone, Debug, Default, Serialize, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes_expanded: usize,
    pub memo_hits: usize,
    pub measurements_tried: usize,
    pub rule_prunes: usize,
}

#[derive(Clone, Debug, Default, Serialize, PartialEq, Eq)]
pub struct ReachableSummary {
    /// Distinct reachable sets with three or more states.
    pub sets: usize,
    pub distinguishable: usize,
    pub undetermined: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub tree: Option<ProtocolTree>,
    pub leaf_evidence: Vec<LeafRecord>,
    pub class_note: String,
    pub max_depth: Option<usize>,
    pub stats: SearchStats,
    /// Some measurement had at least one activating outcome.
    pub some_branch: Option<bool>,
    pub reachable: Option<ReachableSummary>,
    pub transcript: Vec<String>,
}

pub const CLASS_NOTE: &str = "two-outcome projective OPLMs from in-span block projectors \
(computational-basis blocks of the diagonal subspace, joint eigenblocks when the span commutes), \
plus terminal one-party resolution";

/// Certified local indistinguishability of a reached set, if any.
///
/// The set must have at least three states and be locally irredundant at party
/// level. Evidence is either exact irreducibility on the local supports or
/// unextendibility of a product set that does not fill its supports.
pub fn certify_leaf(s: &StateSet) -> Result<Option<Evidence>> {
    if s.len() < 3 {
        return Ok(None);
    }
    let flat = s.without_splits();
    if redundancy_check(&flat)?.is_redundant() {
        return Ok(None);
    }
    let (support_dims, space_dims) = restricted_space_dims(&flat)?;
    if space_dims.iter().all(|&d| d == 1) {
        return Ok(Some(Evidence::IrreducibleExact { support_dims, space_dims }));
    }
    let full: usize = support_dims.iter().product();
    if s.len() <= UPB_LEAF_MAX && s.len() < full {
        let mut product = true;
        for k in flat.states() {
            if !is_fully_product(k)? {
                product = false;
                break;
            }
        }
        if product && check_unextendible(&flat)?.unextendible {
            return Ok(Some(Evidence::Unextendible { support_dims }));
        }
    }
    Ok(None)
}

fn fill_reached(t: &ProtocolTree, sets: &mut std::vec::IntoIter<StateSet>) -> ProtocolTree {
    match t {
        ProtocolTree::Leaf(_) => {
            let s = sets.next().expect("one set per leaf");
            match s.len() {
                0 => open_leaf(),
                1 => ProtocolTree::Leaf(Leaf::Identified(s.states()[0].label().to_string())),
                _ => ProtocolTree::Leaf(Leaf::SetReached(Some(s))),
            }
        }
        ProtocolTree::Measure { measurement, children } => ProtocolTree::Measure {
            measurement: measurement.clone(),
            children: children.iter().map(|c| fill_reached(c, sets)).collect(),
        },
    }
}

/// Replay `t` on `s` and record the reached sets in its leaves.
pub fn with_reached_sets(s: &StateSet, t: &ProtocolTree) -> Result<ProtocolTree> {
    let r = replay(s, t)?;
    if let Some(f) = r.failures.first() {
        return Err(Error::Protocol(f.clone()));
    }
    let sets: Vec<StateSet> = r.reached.into_iter().map(|x| x.set).collect();
    Ok(fill_reached(t, &mut sets.into_iter()))
}

pub fn certify_distinguishability(s: &StateSet, t: &ProtocolTree) -> Result<Certificate> {
    let v = verify_protocol(s, t)?;
    if !v.pass {
        return Err(Error::Protocol(v.failures.join("; ")));
    }
    let leaf_evidence = v
        .identified
        .iter()
        .map(|(l, p)| LeafRecord { path: p.clone(), labels: vec![l.clone()], evidence: Evidence::Identified { label: l.clone() } })
        .collect();
    Ok(Certificate {
        kind: CertificateKind::Distinguishability,
        tree: Some(t.clone()),
        leaf_evidence,
        class_note: CLASS_NOTE.into(),
        max_depth: None,
        stats: SearchStats::default(),
        some_branch: None,
        reachable: None,
        transcript: Vec::new(),
    })
}

fn activation_evidence(s: &StateSet, t: &ProtocolTree) -> Result<Vec<LeafRecord>> {
    let r = replay(s, t)?;
    if let Some(f) = r.failures.first() {
        return Err(Error::Protocol(f.clone()));
    }
    let mut out = Vec::new();
    for leaf in &r.reached {
        let evidence = if leaf.set.is_empty() {
            Evidence::Vacuous
        } else {
            certify_leaf(&leaf.set)?.ok_or_else(|| {
                Error::Protocol(format!(
                    "{}: reached set {:?} is not certified indistinguishable",
                    leaf.path,
                    leaf.set.labels()
                ))
            })?
        };
        out.push(LeafRecord { path: leaf.path.clone(), labels: leaf.set.labels(), evidence });
    }
    Ok(out)
}

/// Deterministic activation: every outcome of `t` reaches a certified set.
pub fn certify_activation(s: &StateSet, t: &ProtocolTree) -> Result<Certificate> {
    let leaf_evidence = activation_evidence(s, t)?;
    Ok(Certificate {
        kind: CertificateKind::Activation,
        tree: Some(with_reached_sets(s, t)?),
        leaf_evidence,
        class_note: CLASS_NOTE.into(),
        max_depth: None,
        stats: SearchStats::default(),
        some_branch: None,
        reachable: None,
        transcript: Vec::new(),
    })
}

/// Re-execute a certificate's tree and compare the evidence records.
pub fn replay_certificate(s: &StateSet, cert: &Certificate) -> Result<bool> {
    let Some(t) = &cert.tree else {
        return Ok(cert.leaf_evidence.is_empty());
    };
    let again = match cert.kind {
        CertificateKind::Distinguishability => certify_distinguishability(s, t)?.leaf_evidence,
        CertificateKind::Activation => activation_evidence(s, t)?,
        _ => return Ok(false),
    };
    Ok(again == cert.leaf_evidence)
}

fn projector(d: usize, terms: &[(usize, f64)]) -> CMatrix {
    let mut v = CVector::zeros(d);
    for &(i, w) in terms {
        v[i] = re(w);
    }
    let v = v.normalized().expect("nonzero vector");
    v.outer(&v)
}

fn measurement_with_rest(party: usize, d: usize, projs: Vec<(CMatrix, &str)>) -> Result<LocalMeasurement> {
    let mut total = CMatrix::zeros(d, d);
    let mut outcomes = Vec::new();
    let mut labels = Vec::new();
    for (p, l) in projs {
        total = &total + &p;
        outcomes.push(p);
        labels.push(l.to_string());
    }
    outcomes.push(&CMatrix::identity(d) - &total);
    labels.push("rest".into());
    LocalMeasurement::new(party, outcomes, labels)
}

fn block_split(party: usize, d: usize, low: &[usize], labels: [&str; 2]) -> Result<LocalMeasurement> {
    let high: Vec<usize> = (0..d).filter(|i| !low.contains(i)).collect();
    let m = LocalMeasurement::from_index_sets(party, d, &[low.to_vec(), high])?;
    Ok(LocalMeasurement { labels: labels.iter().map(|s| s.to_string()).collect(), ..m })
}

fn with_leaves(s: &StateSet, t: ProtocolTree) -> Result<ProtocolTree> {
    let r = replay(s, &t)?;
    if let Some(f) = r.failures.first() {
        return Err(Error::Protocol(f.clone()));
    }
    let sets: Vec<StateSet> = r.reached.into_iter().map(|x| x.set).collect();
    Ok(fill_identified(&t, &mut sets.into_iter()))
}

fn fill_identified(t: &ProtocolTree, sets: &mut std::vec::IntoIter<StateSet>) -> ProtocolTree {
    match t {
        ProtocolTree::Leaf(_) => leaf_for(&sets.next().expect("one set per leaf")),
        ProtocolTree::Measure { measurement, children } => ProtocolTree::Measure {
            measurement: measurement.clone(),
            children: children.iter().map(|c| fill_identified(c, sets)).collect(),
        },
    }
}

fn s3_discrimination() -> Result<ProtocolTree> {
    let d = 6;
    let mb = measurement_with_rest(
        1,
        d,
        vec![
            (projector(d, &[(0, 1.0), (4, -1.0)]), "P[0-4]"),
            (projector(d, &[(2, 1.0), (3, -1.0)]), "P[2-3]"),
            (projector(d, &[(0, 1.0), (1, 1.0), (2, 1.0), (3, 1.0), (4, 1.0), (5, 1.0)]), "P[0+1+2+3+4+5]"),
        ],
    )?;
    let leaves = |n: usize| (0..n).map(|_| open_leaf()).collect::<Vec<_>>();
    let a1 = measurement_with_rest(
        0,
        d,
        vec![(projector(d, &[(1, 1.0), (2, -1.0)]), "P[1-2]"), (projector(d, &[(4, 1.0), (5, -1.0)]), "P[4-5]")],
    )?;
    let a2 = measurement_with_rest(
        0,
        d,
        vec![(projector(d, &[(0, 1.0), (1, -1.0)]), "P[0-1]"), (projector(d, &[(3, 1.0), (4, -1.0)]), "P[3-4]")],
    )?;
    let a3 = measurement_with_rest(
        0,
        d,
        vec![
            (projector(d, &[(0, 1.0), (1, 1.0), (2, 1.0)]), "P[0+1+2]"),
            (projector(d, &[(3, 1.0), (4, 1.0), (5, 1.0)]), "P[3+4+5]"),
        ],
    )?;
    let a4 = measurement_with_rest(
        0,
        d,
        vec![
            (CMatrix::index_projector(d, &[0]), "P0"),
            (CMatrix::index_projector(d, &[2]), "P2"),
            (CMatrix::index_projector(d, &[3]), "P3"),
        ],
    )?;
    let children = [a1, a2, a3, a4]
        .into_iter()
        .map(|m| {
            let n = m.outcomes.len();
            ProtocolTree::Measure { measurement: m, children: leaves(n) }
        })
        .collect();
    let t = ProtocolTree::Measure { measurement: mb, children };
    with_leaves(&crate::fixtures::fixture(crate::fixtures::FixtureName::S3), t)
}

fn k_split(party: usize, d: usize) -> Result<LocalMeasurement> {
    let (name, low): (&str, Vec<usize>) = (if party == 0 { "A" } else { "B" }, (0..d / 2).collect());
    block_split(party, d, &low, [&format!("K{name}1"), &format!("K{name}2")])
}

fn s3_activation() -> Result<ProtocolTree> {
    let ka = || -> Result<ProtocolTree> {
        Ok(ProtocolTree::Measure { measurement: k_split(0, 6)?, children: vec![open_leaf(), open_leaf()] })
    };
    Ok(ProtocolTree::Measure { measurement: k_split(1, 6)?, children: vec![ka()?, ka()?] })
}

/// In the cut A|BC (party 1 = B (x) C, C fastest): measure C, then K on the
/// B factor, then K on A.
fn s4_abc_activation() -> Result<ProtocolTree> {
    let d = 12;
    let c0: Vec<usize> = (0..d).filter(|i| i % 2 == 0).collect();
    let mc = block_split(1, d, &c0, ["C0", "C1"])?;
    let b_low: Vec<usize> = (0..6).collect();
    let kb = || block_split(1, d, &b_low, ["KB1", "KB2"]);
    let ka = || -> Result<ProtocolTree> {
        Ok(ProtocolTree::Measure { measurement: k_split(0, 6)?, children: vec![open_leaf(), open_leaf()] })
    };
    let branch = || -> Result<ProtocolTree> { Ok(ProtocolTree::Measure { measurement: kb()?, children: vec![ka()?, ka()?] }) };
    Ok(ProtocolTree::Measure { measurement: mc, children: vec![branch()?, branch()?] })
}

/// Alternate `{P_k, P_>k}` between the parties, layer by layer, resolving
/// with one party whenever possible.
pub fn layered_recursion(s: &StateSet) -> Result<ProtocolTree> {
    fn node(s: &StateSet, layer: usize, party: usize) -> Result<ProtocolTree> {
        if s.len() <= 1 {
            return Ok(leaf_for(s));
        }
        if let Some(m) = resolving_measurement(s)? {
            return resolution_tree(s, m);
        }
        let d = s.space().dim(party);
        if layer + 1 >= d {
            return Err(Error::Protocol(format!("layer {layer} exhausts party of dimension {d}")));
        }
        let m = LocalMeasurement::from_index_sets(party, d, &[vec![layer], (0..d).filter(|&i| i != layer).collect()])?;
        let (next_layer, next_party) = if party == 0 { (layer, 1) } else { (layer + 1, 0) };
        let mut children = Vec::new();
        for (k, op) in m.outcomes.iter().enumerate() {
            let (child, _) = apply_outcome(s, party, op)?;
            children.push(if k == 0 { node(&child, layer, party)? } else { node(&child, next_layer, next_party)? });
        }
        Ok(ProtocolTree::Measure { measurement: m, children })
    }
    if s.space().parties() != 2 {
        return Err(Error::Protocol("layered recursion needs two parties".into()));
    }
    node(s, 0, 0)
}

pub const BUILTINS: [&str; 4] = ["s3_discrimination", "s3_activation", "s1_recursion", "s4_abc_activation"];

pub fn builtin_protocol(name: &str) -> Result<ProtocolTree> {
    match name {
        "s3_discrimination" => s3_discrimination(),
        "s3_activation" => s3_activation(),
        "s1_recursion" => layered_recursion(&crate::fixtures::fixture(crate::fixtures::FixtureName::S1)),
        "s4_abc_activation" => s4_abc_activation(),
        _ => Err(Error::Unknown(name.into())),
    }
}

/// Helper for tests and reports: the four leaves of a scripted activation.
pub fn reached_sets(s: &StateSet, t: &ProtocolTree) -> Result<Vec<(String, StateSet)>> {
    let r = replay(s, t)?;
    if let Some(f) = r.failures.first() {
        return Err(Error::Protocol(f.clone()));
    }
    Ok(r.reached.into_iter().map(|x| (x.path, x.set)).collect())
}
