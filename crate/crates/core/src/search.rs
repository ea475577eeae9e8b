//! Depth-first searches over two-outcome block-projective OPLMs.
//!
//! The activation search deepens its cap one round at a time over a shared
//! memo, so the first activating tree has minimal depth.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::Result;
use crate::oplm::{candidate_measurements, LocalMeasurement};
use crate::partition::qubit_support_rule;
use crate::protocol::{
    apply_outcome, certify_activation, certify_distinguishability, certify_leaf, resolution_tree, resolving_measurement,
    Certificate, CertificateKind, Leaf, ProtocolTree, ReachableSummary, SearchStats, CLASS_NOTE,
};
use crate::state::{PartySpace, StateSet};

pub const DEFAULT_MAX_DEPTH: usize = 8;

/// Dedup key for reached sets: labels, dimensions and phase-fixed amplitudes
/// rounded to 1e-6.
pub fn set_signature(s: &StateSet) -> String {
    let mut out = format!("{:?}", s.space().party_dims());
    let mut rows: Vec<String> = s
        .states()
        .iter()
        .map(|k| {
            let v = k.amplitudes().as_slice();
            let phase = v.iter().find(|z| z.norm() > 1e-9).map(|z| z.conj() / z.norm()).unwrap_or_default();
            let mut row = format!("{}:", k.label());
            for z in v {
                let w = z * phase;
                let (a, b) = ((w.re * 1e6).round() as i64, (w.im * 1e6).round() as i64);
                if a != 0 || b != 0 {
                    row.push_str(&format!("{a},{b};"));
                } else {
                    row.push('.');
                }
            }
            row
        })
        .collect();
    rows.sort();
    for r in rows {
        out.push('|');
        out.push_str(&r);
    }
    out
}

#[derive(Clone, Debug)]
enum Memo {
    Found(ProtocolTree),
    /// Failed with this much depth left; `capped` when the cap was hit below.
    Failed { depth: usize, capped: bool },
}

/// Cached answer, and whether a cached failure was cut short by the cap.
fn memo_lookup(memo: &HashMap<String, Memo>, key: &str, depth: usize) -> Option<(Option<ProtocolTree>, bool)> {
    match memo.get(key)? {
        Memo::Found(t) => Some((Some(t.clone()), false)),
        Memo::Failed { depth: d, capped } if !capped || *d >= depth => Some((None, *capped)),
        Memo::Failed { .. } => None,
    }
}

fn candidates(s: &StateSet) -> Result<Vec<LocalMeasurement>> {
    let mut out = Vec::new();
    for p in 0..s.space().parties() {
        out.extend(candidate_measurements(s, p)?);
    }
    Ok(out)
}

/// Outcome sets of `m`, or `None` when some outcome leaves `s` as it was.
fn branch(s: &StateSet, key: &str, m: &LocalMeasurement) -> Result<Option<Vec<StateSet>>> {
    let mut kids = Vec::new();
    for op in &m.outcomes {
        let k = apply_outcome(s, m.party, op)?.0;
        if set_signature(&k) == key {
            return Ok(None);
        }
        kids.push(k);
    }
    Ok(Some(kids))
}

#[derive(Default)]
struct Searcher {
    dist_memo: HashMap<String, Memo>,
    act_memo: HashMap<String, Memo>,
    stats: SearchStats,
    capped: bool,
    some_branch: bool,
    reachable: HashMap<String, StateSet>,
}

impl Searcher {
    fn dist(&mut self, s: &StateSet, depth: usize) -> Result<Option<ProtocolTree>> {
        if s.len() <= 1 {
            return Ok(Some(ProtocolTree::Leaf(match s.states().first() {
                Some(k) => Leaf::Identified(k.label().to_string()),
                None => Leaf::SetReached(None),
            })));
        }
        let key = set_signature(s);
        if let Some((hit, capped)) = memo_lookup(&self.dist_memo, &key, depth) {
            self.stats.memo_hits += 1;
            self.capped |= capped;
            return Ok(hit);
        }
        if let Some(m) = resolving_measurement(s)? {
            let t = resolution_tree(s, m)?;
            self.dist_memo.insert(key, Memo::Found(t.clone()));
            return Ok(Some(t));
        }
        if depth == 0 {
            self.capped = true;
            self.dist_memo.insert(key, Memo::Failed { depth, capped: true });
            return Ok(None);
        }
        self.stats.nodes_expanded += 1;
        let was_capped = std::mem::replace(&mut self.capped, false);
        let mut found = None;
        'moves: for m in candidates(s)? {
            let Some(kids) = branch(s, &key, &m)? else { continue };
            self.stats.measurements_tried += 1;
            let mut children = Vec::new();
            for k in &kids {
                match self.dist(k, depth - 1)? {
                    Some(t) => children.push(t),
                    None => continue 'moves,
                }
            }
            found = Some(ProtocolTree::Measure { measurement: m, children });
            break;
        }
        let capped = self.capped;
        self.capped |= was_capped;
        self.dist_memo.insert(
            key,
            match &found {
                Some(t) => Memo::Found(t.clone()),
                None => Memo::Failed { depth, capped },
            },
        );
        Ok(found)
    }

    fn act(&mut self, s: &StateSet, depth: usize, root: bool) -> Result<Option<ProtocolTree>> {
        if !root && certify_leaf(s)?.is_some() {
            return Ok(Some(ProtocolTree::Leaf(Leaf::SetReached(Some(s.clone())))));
        }
        if s.len() <= 2 {
            return Ok(None);
        }
        let key = set_signature(s);
        if !root {
            self.reachable.entry(key.clone()).or_insert_with(|| s.clone());
        }
        if qubit_support_rule(s)? {
            self.stats.rule_prunes += 1;
            return Ok(None);
        }
        if let Some((hit, capped)) = memo_lookup(&self.act_memo, &key, depth) {
            self.stats.memo_hits += 1;
            self.capped |= capped;
            return Ok(hit);
        }
        if depth == 0 {
            self.capped = true;
            self.act_memo.insert(key, Memo::Failed { depth, capped: true });
            return Ok(None);
        }
        self.stats.nodes_expanded += 1;
        let was_capped = std::mem::replace(&mut self.capped, false);
        let mut found = None;
        for m in candidates(s)? {
            let Some(kids) = branch(s, &key, &m)? else { continue };
            self.stats.measurements_tried += 1;
            let mut children = Vec::new();
            let mut all = true;
            for k in &kids {
                if k.is_empty() {
                    children.push(ProtocolTree::Leaf(Leaf::SetReached(None)));
                    continue;
                }
                match self.act(k, depth - 1, false)? {
                    Some(t) => {
                        self.some_branch = true;
                        children.push(t);
                    }
                    None => {
                        all = false;
                        if self.some_branch {
                            break;
                        }
                    }
                }
            }
            if all {
                found = Some(ProtocolTree::Measure { measurement: m, children });
                break;
            }
        }
        let capped = self.capped;
        self.capped |= was_capped;
        self.act_memo.insert(
            key,
            match &found {
                Some(t) => Memo::Found(t.clone()),
                None => Memo::Failed { depth, capped },
            },
        );
        Ok(found)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExhaustionReport {
    pub class_note: String,
    pub max_depth: usize,
    /// No branch hit the depth cap: the class holds no protocol at any depth.
    pub complete: bool,
    pub stats: SearchStats,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum DistinguishingOutcome {
    Found(Certificate),
    Exhausted(ExhaustionReport),
}

impl DistinguishingOutcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            DistinguishingOutcome::Found(c) => Some(c),
            DistinguishingOutcome::Exhausted(_) => None,
        }
    }
}

pub fn search_distinguishing_protocol(s: &StateSet, max_depth: usize) -> Result<DistinguishingOutcome> {
    let mut sr = Searcher::default();
    Ok(match sr.dist(s, max_depth)? {
        Some(t) => {
            let mut cert = certify_distinguishability(s, &t)?;
            cert.max_depth = Some(max_depth);
            cert.stats = sr.stats;
            DistinguishingOutcome::Found(cert)
        }
        None => DistinguishingOutcome::Exhausted(ExhaustionReport {
            class_note: CLASS_NOTE.into(),
            max_depth,
            complete: !sr.capped,
            stats: sr.stats,
        }),
    })
}

pub fn activation_search(s: &StateSet, max_depth: usize) -> Result<Certificate> {
    let mut sr = Searcher::default();
    let mut found = None;
    for d in 1..=max_depth.max(1) {
        sr.capped = false;
        found = sr.act(s, d, true)?;
        if found.is_some() || !sr.capped {
            break;
        }
    }
    let mut transcript = vec![format!(
        "{} states, dims {:?}, depth cap {max_depth}",
        s.len(),
        s.space().party_dims()
    )];
    if let Some(t) = found {
        let mut cert = certify_activation(s, &t)?;
        cert.max_depth = Some(max_depth);
        cert.stats = sr.stats;
        cert.some_branch = Some(true);
        transcript.push(format!("activating tree of depth {} with {} leaves", t.depth(), t.leaf_count()));
        cert.transcript = transcript;
        return Ok(cert);
    }
    let act_capped = sr.capped;
    let mut sets: Vec<(String, StateSet)> = sr.reachable.drain().collect();
    sets.sort_by(|a, b| a.0.cmp(&b.0));
    let mut summary = ReachableSummary { sets: sets.len(), ..Default::default() };
    for (_, r) in &sets {
        let ok = qubit_support_rule(r)? || sr.dist(r, max_depth)?.is_some();
        if ok {
            summary.distinguishable += 1;
        } else {
            summary.undetermined += 1;
            transcript.push(format!("reachable set {:?} not resolved within the cap", r.labels()));
        }
    }
    for (p, m) in (0..s.space().parties()).flat_map(|p| candidate_measurements(s, p).map(|ms| ms.into_iter().map(move |m| (p, m)))).flatten() {
        transcript.push(format!("root {}:{} tried", PartySpace::party_name(p), m.labels.join("|")));
    }
    transcript.push(format!(
        "{} nodes, {} measurements, {} memo hits, {} rule prunes",
        sr.stats.nodes_expanded, sr.stats.measurements_tried, sr.stats.memo_hits, sr.stats.rule_prunes
    ));
    Ok(Certificate {
        kind: if act_capped { CertificateKind::Incomplete } else { CertificateKind::NonActivabilityInClass },
        tree: None,
        leaf_evidence: Vec::new(),
        class_note: CLASS_NOTE.into(),
        max_depth: Some(max_depth),
        stats: sr.stats,
        some_branch: Some(sr.some_branch),
        reachable: Some(summary),
        transcript,
    })
}
