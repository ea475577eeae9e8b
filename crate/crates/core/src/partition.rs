//! Hidden-nonlocality profiles across party partitions.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oplm::oplm_space;
use crate::protocol::{builtin_protocol, certify_activation, Certificate, CertificateKind};
use crate::search::{activation_search, search_distinguishing_protocol, DistinguishingOutcome};
use crate::state::{local_support, merge_parties, schmidt_rank, Bipartition, PartySpace, StateSet};

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct QubitRule {
    pub applicable: bool,
    /// Party of dimension two, when applicable.
    pub qubit_party: Option<usize>,
    pub distinguishable: bool,
    pub activable: bool,
    pub reason: String,
}

fn all_product_across(s: &StateSet, cut: &Bipartition) -> Result<bool> {
    for k in s.states() {
        if schmidt_rank(k, cut)? != 1 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Orthogonal product sets in `C^2 (x) C^n` are locally distinguishable, and
/// every orthogonality-preserving outcome is again such a set.
pub fn qubit_times_n_rule(s: &StateSet) -> Result<QubitRule> {
    let inapplicable = |reason: &str| QubitRule {
        applicable: false,
        qubit_party: None,
        distinguishable: false,
        activable: false,
        reason: reason.into(),
    };
    if s.space().parties() != 2 {
        return Ok(inapplicable("not bipartite"));
    }
    let dims = s.space().party_dims();
    let Some(q) = (0..2).find(|&p| dims[p] == 2) else {
        return Ok(inapplicable("no party of dimension 2"));
    };
    if !all_product_across(s, &Bipartition::new(vec![0], 2)?)? {
        return Ok(inapplicable("some state is entangled across the cut"));
    }
    Ok(QubitRule {
        applicable: true,
        qubit_party: Some(q),
        distinguishable: true,
        activable: false,
        reason: format!("orthogonal product set in C^2 (x) C^{}", dims[1 - q]),
    })
}

/// Support form of the qubit rule: a bipartite product set whose smaller
/// local support has dimension at most two.
pub fn qubit_support_rule(s: &StateSet) -> Result<bool> {
    if s.space().parties() != 2 {
        return Ok(false);
    }
    let small = (0..2).map(|p| local_support(s, p).map(|q| q.cols())).collect::<Result<Vec<_>>>()?;
    if small.iter().min().copied().unwrap_or(0) > 2 {
        return Ok(false);
    }
    all_product_across(s, &Bipartition::new(vec![0], 2)?)
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Basis {
    Exact,
    InClass,
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Yes,
    No,
    Unknown,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionRecord {
    /// Display name such as `A|BC`.
    pub partition: String,
    pub grouping: Vec<Vec<usize>>,
    /// Largest number of original parties merged into one.
    pub merged: usize,
    pub distinguishable: Verdict,
    pub activable: Verdict,
    pub basis: Basis,
    pub rule: String,
    /// OPLM space dimension per merged party at the root; empty when a rule
    /// settled the partition.
    pub first_round_space_dims: Vec<usize>,
    pub certificate: Option<Certificate>,
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct HFlag {
    /// `nonzero`, `zero` or `unknown-in-class`.
    pub value: String,
    pub basis: Basis,
    pub evidence: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionProfile {
    pub set: String,
    pub parties: usize,
    pub partitions: Vec<PartitionRecord>,
    pub h_flags: BTreeMap<usize, HFlag>,
}

impl PartitionProfile {
    /// Look up a partition by name; block order does not matter (`B|AC` = `AC|B`).
    pub fn record(&self, name: &str) -> Option<&PartitionRecord> {
        let key = |n: &str| {
            let mut b: Vec<String> = n.split('|').map(str::to_string).collect();
            b.sort();
            b
        };
        self.partitions.iter().find(|r| key(&r.partition) == key(name))
    }
}

fn grouping_name(g: &[Vec<usize>]) -> String {
    g.iter()
        .map(|b| b.iter().map(|&p| PartySpace::party_name(p)).collect::<String>())
        .collect::<Vec<_>>()
        .join("|")
}

const ACTIVATION_BUILTINS: [&str; 2] = ["s3_activation", "s4_abc_activation"];

fn analyze(s: &StateSet, grouping: Vec<Vec<usize>>, max_depth: usize) -> Result<PartitionRecord> {
    let m = if grouping.iter().all(|b| b.len() == 1) { s.clone() } else { merge_parties(s, &grouping)? };
    let mut rec = PartitionRecord {
        partition: grouping_name(&grouping),
        merged: grouping.iter().map(Vec::len).max().unwrap_or(1),
        grouping,
        distinguishable: Verdict::Unknown,
        activable: Verdict::Unknown,
        basis: Basis::InClass,
        rule: String::new(),
        first_round_space_dims: Vec::new(),
        certificate: None,
    };
    if m.space().parties() == 2 {
        let q = qubit_times_n_rule(&m)?;
        if q.applicable {
            rec.distinguishable = Verdict::Yes;
            rec.activable = Verdict::No;
            rec.basis = Basis::Exact;
            rec.rule = format!("qubit rule: {}", q.reason);
            return Ok(rec);
        }
    }
    rec.first_round_space_dims = (0..m.space().parties())
        .map(|p| oplm_space(&m, p).map(|sp| sp.space_dim))
        .collect::<Result<Vec<_>>>()?;
    rec.distinguishable = match search_distinguishing_protocol(&m, max_depth)? {
        DistinguishingOutcome::Found(_) => Verdict::Yes,
        DistinguishingOutcome::Exhausted(_) => Verdict::Unknown,
    };
    for name in ACTIVATION_BUILTINS {
        if let Ok(cert) = certify_activation(&m, &builtin_protocol(name)?) {
            rec.activable = Verdict::Yes;
            rec.basis = Basis::Exact;
            rec.rule = format!("builtin {name}");
            rec.certificate = Some(cert);
            return Ok(rec);
        }
    }
    let cert = activation_search(&m, max_depth)?;
    (rec.activable, rec.basis, rec.rule) = match cert.kind {
        CertificateKind::Activation => (Verdict::Yes, Basis::Exact, "activation search".into()),
        CertificateKind::NonActivabilityInClass => (Verdict::No, Basis::InClass, "activation search exhausted".into()),
        _ => (Verdict::Unknown, Basis::InClass, format!("activation search hit depth cap {max_depth}")),
    };
    rec.certificate = Some(cert);
    Ok(rec)
}

fn flag(records: &[&PartitionRecord], what: &str) -> HFlag {
    let names = |v: Verdict| records.iter().filter(|r| r.activable == v).map(|r| r.partition.clone()).collect::<Vec<_>>();
    let yes = names(Verdict::Yes);
    if !yes.is_empty() {
        return HFlag { value: "nonzero".into(), basis: Basis::Exact, evidence: format!("activable {what}: {}", yes.join(", ")) };
    }
    let unknown = names(Verdict::Unknown);
    if !unknown.is_empty() {
        return HFlag {
            value: "unknown-in-class".into(),
            basis: Basis::InClass,
            evidence: format!("undecided {what}: {}", unknown.join(", ")),
        };
    }
    let exact = records.iter().all(|r| r.basis == Basis::Exact);
    HFlag {
        value: "zero".into(),
        basis: if exact { Basis::Exact } else { Basis::InClass },
        evidence: format!(
            "non-activable {what}: {}{}",
            names(Verdict::No).join(", "),
            if exact { String::new() } else { format!("; {}", crate::protocol::CLASS_NOTE) }
        ),
    }
}

/// Activability of the finest partition and of every two-block partition,
/// with the H_k flags derived from them.
pub fn hidden_nonlocality_profile(s: &StateSet, max_depth: usize) -> Result<PartitionProfile> {
    let n = s.space().parties();
    if n < 2 {
        return Err(Error::Invalid("profile needs at least two parties".into()));
    }
    let finest: Vec<Vec<usize>> = (0..n).map(|p| vec![p]).collect();
    let mut partitions = Vec::new();
    let mut h_flags = BTreeMap::new();
    if n == 2 {
        let r = analyze(s, finest, max_depth)?;
        h_flags.insert(1, flag(&[&r], "partition"));
        partitions.push(r);
        return Ok(PartitionProfile { set: s.name().into(), parties: n, partitions, h_flags });
    }
    for cut in Bipartition::all(n) {
        let mut g = vec![cut.left().to_vec(), cut.right().to_vec()];
        g.sort_by_key(|b| (b.len(), b[0]));
        partitions.push(analyze(s, g, max_depth)?);
    }
    let all_no = partitions.iter().all(|r| r.activable == Verdict::No);
    let fine = if all_no {
        let exact = partitions.iter().all(|r| r.basis == Basis::Exact);
        PartitionRecord {
            partition: grouping_name(&finest),
            grouping: finest,
            merged: 1,
            distinguishable: if partitions.iter().all(|r| r.distinguishable == Verdict::Yes) { Verdict::Yes } else { Verdict::Unknown },
            activable: Verdict::No,
            basis: if exact { Basis::Exact } else { Basis::InClass },
            rule: "bipartition dominance: every bipartition is non-activable".into(),
            first_round_space_dims: (0..n).map(|p| oplm_space(s, p).map(|sp| sp.space_dim)).collect::<Result<_>>()?,
            certificate: None,
        }
    } else {
        analyze(s, finest, max_depth)?
    };
    if fine.activable == Verdict::Yes && !partitions.iter().any(|r| r.activable == Verdict::Yes) {
        return Err(Error::Invalid("finest partition activable but no bipartition is".into()));
    }
    h_flags.insert(1, flag(&[&fine], "partition"));
    for k in 2..n {
        let recs: Vec<&PartitionRecord> = partitions.iter().filter(|r| r.merged == k).collect();
        if !recs.is_empty() {
            h_flags.insert(k, flag(&recs, &format!("partitions merging {k} parties")));
        }
    }
    partitions.insert(0, fine);
    Ok(PartitionProfile { set: s.name().into(), parties: n, partitions, h_flags })
}
