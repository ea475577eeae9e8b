use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use qlocc::fixtures::{build_fixture, FixtureDescriptor, FixtureName, Variant};
use qlocc::oplm::{block_structure, candidate_measurements, is_locally_irreducible, oplm_space, Irreducibility};
use qlocc::partition::{hidden_nonlocality_profile, Basis};
use qlocc::protocol::{builtin_protocol, certify_activation, verify_protocol, CertificateKind, ProtocolTree};
use qlocc::qset::{parse_qset, serialize_qset};
use qlocc::render::{render, Format, Overlay, RenderOptions};
use qlocc::search::{activation_search, search_distinguishing_protocol, DistinguishingOutcome, DEFAULT_MAX_DEPTH};
use qlocc::state::{gram_check, redundancy_check, set_orthogonality_guard, Redundancy, StateSet, ORTHO_TOL};
use qlocc::upb::{check_unextendible, numeric_extension_search_on_supports, EXTENSION_TOL};
use qlocc::{Error, Result};

#[derive(Parser)]
#[command(name = "qlocc", version, about = "Analyze orthogonal multipartite state sets under local operations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Emit a JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Orthogonality tolerance (default: QLOCC_TOL or 1e-9).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for numeric oracle restarts.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Analyze sets that fail the orthogonality check anyway.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(clap::Args)]
struct SetArg {
    /// Path to a qset document.
    #[arg(long)]
    set: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print a built-in set as qset text.
    Fixture {
        name: String,
        #[arg(long, default_value = "corrected")]
        variant: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Pairwise orthogonality.
    CheckOrtho(SetArg),
    /// Local redundancy across tensor factors.
    Redundancy(SetArg),
    /// Orthogonality-preserving measurement spaces per party.
    Oplm {
        #[command(flatten)]
        set: SetArg,
        #[arg(long)]
        party: Option<usize>,
    },
    /// Local irreducibility verdict.
    Irreducible(SetArg),
    /// Exact unextendibility of a product set.
    Upb {
        #[command(flatten)]
        set: SetArg,
        /// Also run the numeric extension search with this many restarts.
        #[arg(long, default_value_t = 0)]
        oracle_restarts: usize,
    },
    /// Verify or search discrimination protocols.
    Protocol {
        #[command(subcommand)]
        op: ProtocolOp,
    },
    /// Activation certificate for a given tree, or search for one.
    Activate {
        #[command(flatten)]
        set: SetArg,
        /// Protocol JSON file or `builtin:NAME`.
        #[arg(long)]
        protocol: Option<String>,
        #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
        max_depth: usize,
    },
    /// Hidden-nonlocality profile over partitions.
    Profile {
        #[command(flatten)]
        set: SetArg,
        #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
        max_depth: usize,
    },
    /// Tile diagram.
    Render {
        #[command(flatten)]
        set: SetArg,
        #[arg(long, default_value = "ascii")]
        format: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// `PROTOCOL.json:node-path` or `builtin:NAME:node-path`.
        #[arg(long)]
        overlay: Option<String>,
        /// Draw split supports as linked rectangles.
        #[arg(long)]
        linked: bool,
    },
}

#[derive(Subcommand)]
enum ProtocolOp {
    Verify {
        #[command(flatten)]
        set: SetArg,
        /// Protocol JSON file or `builtin:NAME`.
        #[arg(long)]
        protocol: String,
    },
    Search {
        #[command(flatten)]
        set: SetArg,
        #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
        max_depth: usize,
    },
}

struct Report {
    command: &'static str,
    inputs: serde_json::Map<String, Value>,
    parameters: Value,
    verdict: String,
    basis: &'static str,
    ok: bool,
    evidence: Value,
    text: Vec<String>,
}

impl Report {
    fn new(command: &'static str, parameters: Value) -> Self {
        Report {
            command,
            inputs: serde_json::Map::new(),
            parameters,
            verdict: String::new(),
            basis: "EXACT",
            ok: true,
            evidence: Value::Null,
            text: Vec::new(),
        }
    }
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_input(path: &Path, key: &str, r: &mut Report) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    r.inputs.insert(key.into(), json!({ "path": path.display().to_string(), "sha256": sha256(text.as_bytes()) }));
    Ok(text)
}

fn load_set(arg: &SetArg, r: &mut Report) -> Result<StateSet> {
    Ok(parse_qset(&read_input(&arg.set, "set", r)?)?)
}

/// Loaded set that passed the orthogonality check (or `--force`).
fn load_checked(arg: &SetArg, cli: &Cli, tol: f64, r: &mut Report) -> Result<StateSet> {
    let s = load_set(arg, r)?;
    let g = gram_check(&s, tol);
    if !g.pass && !cli.force {
        let v = &g.violations[0];
        return Err(Error::Refused(format!(
            "set is not orthogonal: |<{}|{}>| = {:.3e}; pass --force to analyze anyway",
            v.label_a, v.label_b, v.magnitude
        )));
    }
    Ok(s)
}

fn load_protocol(spec: &str, r: &mut Report) -> Result<ProtocolTree> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        r.inputs.insert("protocol".into(), json!({ "builtin": name }));
        return builtin_protocol(name);
    }
    let text = read_input(Path::new(spec), "protocol", r)?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("{spec}: {e}")))?;
    ProtocolTree::from_json(&v)
}

fn tolerance(cli: &Cli) -> Result<f64> {
    if let Some(t) = cli.tol {
        return Ok(t);
    }
    match std::env::var("QLOCC_TOL") {
        Ok(v) => v.trim().parse().map_err(|_| Error::Invalid(format!("QLOCC_TOL=`{v}` is not a number"))),
        Err(_) => Ok(ORTHO_TOL),
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

fn run(cli: &Cli) -> Result<Report> {
    let tol = tolerance(cli)?;
    set_orthogonality_guard(tol, !cli.force);
    match &cli.cmd {
        Cmd::Fixture { name, variant, output } => {
            let variant = match variant.as_str() {
                "corrected" => Variant::Corrected,
                "verbatim" => Variant::Verbatim,
                v => return Err(Error::Invalid(format!("unknown variant `{v}`"))),
            };
            let desc = FixtureDescriptor::new(name.parse::<FixtureName>()?, variant);
            let s = build_fixture(&desc)?;
            let text = serialize_qset(&s);
            let mut r = Report::new("fixture", json!({ "name": name, "variant": desc.variant }));
            r.verdict = "WRITTEN".into();
            r.evidence = json!({ "states": s.len(), "dims": s.space().party_dims(), "notes": desc.notes, "sha256": sha256(text.as_bytes()) });
            match output {
                Some(p) => {
                    std::fs::write(p, &text).map_err(|e| Error::Invalid(format!("{}: {e}", p.display())))?;
                    r.text.push(format!("wrote {} ({} states) to {}", s.name(), s.len(), p.display()));
                }
                None => r.text.push(text.trim_end().to_string()),
            }
            Ok(r)
        }
        Cmd::CheckOrtho(arg) => {
            let mut r = Report::new("check-ortho", json!({ "tol": tol }));
            let s = load_set(arg, &mut r)?;
            let g = gram_check(&s, tol);
            r.ok = g.pass;
            r.verdict = if g.pass { "ORTHOGONAL" } else { "NOT-ORTHOGONAL" }.into();
            r.text.push(format!("{}: {} ({} pairs, max overlap {:.3e})", s.name(), r.verdict, g.pairs_checked, g.max_overlap));
            for v in g.violations.iter().take(10) {
                r.text.push(format!("  |<{}|{}>| = {:.3e}", v.label_a, v.label_b, v.magnitude));
            }
            r.evidence = to_value(&g);
            Ok(r)
        }
        Cmd::Redundancy(arg) => {
            let mut r = Report::new("redundancy", json!({ "tol": tol }));
            let s = load_checked(arg, cli, tol, &mut r)?;
            let v = redundancy_check(&s)?;
            r.ok = !v.is_redundant();
            match &v {
                Redundancy::LocallyRedundant { discard } => {
                    r.verdict = "REDUNDANT".into();
                    r.text.push(format!("{}: REDUNDANT, discarding {:?} keeps the set orthogonal", s.name(), discard.discarded_names));
                }
                Redundancy::LocallyIrredundant { witnesses } => {
                    r.verdict = "IRREDUNDANT".into();
                    r.text.push(format!("{}: IRREDUNDANT", s.name()));
                    for w in witnesses {
                        match &w.pair {
                            Some((a, b)) => r.text.push(format!("  discard {:?}: {a} and {b} overlap ({:.3e})", w.discarded_names, w.overlap)),
                            None => r.text.push(format!("  discard {:?}", w.discarded_names)),
                        }
                    }
                }
            }
            r.evidence = to_value(&v);
            Ok(r)
        }
        Cmd::Oplm { set, party } => {
            let mut r = Report::new("oplm", json!({ "tol": tol, "party": party }));
            let s = load_checked(set, cli, tol, &mut r)?;
            let parties: Vec<usize> = match party {
                Some(p) if *p < s.space().parties() => vec![*p],
                Some(p) => return Err(Error::Invalid(format!("no party {p}"))),
                None => (0..s.space().parties()).collect(),
            };
            let mut out = Vec::new();
            for p in parties {
                let sp = oplm_space(&s, p)?;
                let blocks = block_structure(&sp)?;
                let cands = candidate_measurements(&s, p)?;
                r.text.push(format!(
                    "party {}: space dimension {}, {}commuting, {} candidate measurements",
                    p,
                    sp.space_dim,
                    if blocks.commuting { "" } else { "non-" },
                    cands.len()
                ));
                for m in cands.iter().take(20) {
                    r.text.push(format!("  {}", m.labels.join(" | ")));
                }
                out.push(json!({ "party": p, "space": to_value(&sp), "blocks": to_value(&blocks), "candidates": to_value(&cands) }));
            }
            r.verdict = "COMPUTED".into();
            r.evidence = Value::Array(out);
            Ok(r)
        }
        Cmd::Irreducible(arg) => {
            let mut r = Report::new("irreducible", json!({ "tol": tol }));
            let s = load_checked(arg, cli, tol, &mut r)?;
            let rep = is_locally_irreducible(&s)?;
            r.ok = rep.verdict != Irreducibility::Reducible;
            r.verdict = to_value(&rep.verdict).as_str().unwrap_or_default().to_string();
            r.text.push(format!(
                "{}: {} (support dims {:?}, space dims {:?})",
                s.name(),
                r.verdict,
                rep.support_dims,
                rep.space_dims
            ));
            r.text.extend(rep.transcript.iter().map(|l| format!("  {l}")));
            r.evidence = to_value(&rep);
            Ok(r)
        }
        Cmd::Upb { set, oracle_restarts } => {
            let mut r = Report::new("upb", json!({ "tol": tol, "oracle_restarts": oracle_restarts, "seed": cli.seed }));
            let s = load_checked(set, cli, tol, &mut r)?;
            let v = check_unextendible(&s)?;
            r.ok = v.unextendible;
            r.verdict = if v.unextendible { "UNEXTENDIBLE" } else { "EXTENDIBLE" }.into();
            r.text.push(format!("{}: {} (support dims {:?})", s.name(), r.verdict, v.support_dims));
            let mut ev = json!({ "exact": to_value(&v) });
            if *oracle_restarts > 0 {
                let o = numeric_extension_search_on_supports(&s, *oracle_restarts, cli.seed)?;
                let agrees = (o.residual > EXTENSION_TOL) == v.unextendible;
                r.text.push(format!("  numeric oracle residual {:.3e} ({})", o.residual, if agrees { "agrees" } else { "DISAGREES" }));
                ev["oracle"] = to_value(&o);
                ev["oracle_agrees"] = json!(agrees);
            }
            r.evidence = ev;
            Ok(r)
        }
        Cmd::Protocol { op: ProtocolOp::Verify { set, protocol } } => {
            let mut r = Report::new("protocol verify", json!({ "tol": tol }));
            let s = load_checked(set, cli, tol, &mut r)?;
            let t = load_protocol(protocol, &mut r)?;
            let v = verify_protocol(&s, &t)?;
            r.ok = v.pass;
            r.verdict = if v.pass { "PASS-DISCRIMINATION" } else { "FAIL" }.into();
            r.text.push(format!("{}: {} ({} identified)", s.name(), r.verdict, v.identified.len()));
            r.text.extend(v.failures.iter().map(|f| format!("  {f}")));
            r.evidence = to_value(&v);
            Ok(r)
        }
        Cmd::Protocol { op: ProtocolOp::Search { set, max_depth } } => {
            let mut r = Report::new("protocol search", json!({ "tol": tol, "max_depth": max_depth }));
            let s = load_checked(set, cli, tol, &mut r)?;
            let out = search_distinguishing_protocol(&s, *max_depth)?;
            match &out {
                DistinguishingOutcome::Found(c) => {
                    r.verdict = "DISTINGUISHABLE".into();
                    let depth = c.tree.as_ref().map_or(0, ProtocolTree::depth);
                    r.text.push(format!("{}: DISTINGUISHABLE, protocol of depth {depth}", s.name()));
                }
                DistinguishingOutcome::Exhausted(e) => {
                    r.ok = false;
                    r.verdict = if e.complete { "EXHAUSTED-IN-CLASS" } else { "INCOMPLETE" }.into();
                    r.basis = "IN-CLASS";
                    r.text.push(format!("{}: {} at depth {} ({} nodes)", s.name(), r.verdict, e.max_depth, e.stats.nodes_expanded));
                }
            }
            r.evidence = to_value(&out);
            Ok(r)
        }
        Cmd::Activate { set, protocol, max_depth } => {
            let mut r = Report::new("activate", json!({ "tol": tol, "max_depth": max_depth }));
            let s = load_checked(set, cli, tol, &mut r)?;
            let cert = match protocol {
                Some(p) => certify_activation(&s, &load_protocol(p, &mut r)?)?,
                None => activation_search(&s, *max_depth)?,
            };
            r.ok = cert.kind == CertificateKind::Activation;
            if !r.ok {
                r.basis = "IN-CLASS";
            }
            r.verdict = to_value(&cert.kind).as_str().unwrap_or_default().to_string();
            r.text.push(format!("{}: {}", s.name(), r.verdict));
            for l in &cert.leaf_evidence {
                r.text.push(format!("  {} {:?}: {:?}", l.path, l.labels, l.evidence));
            }
            if let Some(rs) = &cert.reachable {
                r.text.push(format!("  reachable sets {}, distinguishable {}, undetermined {}", rs.sets, rs.distinguishable, rs.undetermined));
            }
            r.evidence = to_value(&cert);
            Ok(r)
        }
        Cmd::Profile { set, max_depth } => {
            let mut r = Report::new("profile", json!({ "tol": tol, "max_depth": max_depth }));
            let s = load_checked(set, cli, tol, &mut r)?;
            let p = hidden_nonlocality_profile(&s, *max_depth)?;
            for rec in &p.partitions {
                r.text.push(format!(
                    "{:<8} distinguishable {:?}, activable {:?} [{:?}] {}",
                    rec.partition, rec.distinguishable, rec.activable, rec.basis, rec.rule
                ));
            }
            for (k, f) in &p.h_flags {
                r.text.push(format!("H_{k}: {} [{:?}] {}", f.value, f.basis, f.evidence));
            }
            r.verdict = "PROFILED".into();
            if p.partitions.iter().any(|rec| rec.basis == Basis::InClass) {
                r.basis = "IN-CLASS";
            }
            r.evidence = to_value(&p);
            Ok(r)
        }
        Cmd::Render { set, format, output, overlay, linked } => {
            let mut r = Report::new("render", json!({ "format": format, "overlay": overlay, "linked": linked }));
            let s = load_set(set, &mut r)?;
            let fmt: Format = format.parse()?;
            let overlay = match overlay {
                Some(spec) => {
                    let (proto, path) = match spec.strip_prefix("builtin:") {
                        Some(rest) => {
                            let (name, path) = rest.split_once(':').unwrap_or((rest, "root"));
                            (format!("builtin:{name}"), path.to_string())
                        }
                        None => match spec.split_once(".json:") {
                            Some((f, p)) => (format!("{f}.json"), p.to_string()),
                            None => (spec.clone(), "root".to_string()),
                        },
                    };
                    let t = load_protocol(&proto, &mut r)?;
                    match t.node_at(&path) {
                        Some(ProtocolTree::Measure { measurement, .. }) => Some(Overlay::from_measurement(measurement)?),
                        _ => return Err(Error::Protocol(format!("no measurement at `{path}`"))),
                    }
                }
                None => None,
            };
            let doc = render(&s, fmt, &RenderOptions { linked: *linked, overlay })?;
            r.verdict = "RENDERED".into();
            r.evidence = json!({ "sha256": sha256(doc.as_bytes()), "bytes": doc.len() });
            match output {
                Some(p) => {
                    std::fs::write(p, &doc).map_err(|e| Error::Invalid(format!("{}: {e}", p.display())))?;
                    r.text.push(format!("wrote {}", p.display()));
                }
                None => r.text.push(doc.trim_end().to_string()),
            }
            Ok(r)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let start = Instant::now();
    let mut out = std::io::stdout().lock();
    match run(&cli) {
        Ok(r) => {
            if cli.json {
                let doc = json!({
                    "command": r.command,
                    "tool_version": env!("CARGO_PKG_VERSION"),
                    "inputs": r.inputs,
                    "parameters": r.parameters,
                    "verdict": r.verdict,
                    "basis": r.basis,
                    "evidence": r.evidence,
                    "timing_ms": start.elapsed().as_millis() as u64,
                });
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("report serializes"));
            } else {
                for l in &r.text {
                    if writeln!(out, "{l}").is_err() {
                        break;
                    }
                }
            }
            ExitCode::from(if r.ok { 0 } else { 1 })
        }
        Err(e) => {
            if cli.json {
                let _ = writeln!(out, "{}", json!({ "error": e.to_string(), "tool_version": env!("CARGO_PKG_VERSION") }));
            }
            eprintln!("qlocc: {e}");
            ExitCode::from(2)
        }
    }
}
