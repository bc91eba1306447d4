//! Traceroute to AS-path conversion, new-edge discovery, valley-free
//! relationship constraints, and the progressive probe-batch stopping rule.
//!
//! # Input format
//!
//! One JSON object per line:
//!
//! ```text
//! {"id":"m1","kind":"inside_out","src_country":"SG","dst_country":"US","batch":5,
//!  "hops":[{"idx":1,"ip":"10.0.0.1"},{"idx":2,"ip":null},{"idx":3,"ip":["8.8.8.8",null]}]}
//! ```
//!
//! `kind` is one of `inside_out`, `outside_in`, `mesh`. A hop's `ip` is a
//! string, `null`/`"*"` for a timeout, or a list of replies of which the
//! first responding address is kept. `batch` (optional) is the probe-set
//! size of an Inside-Out/Outside-In campaign round.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::Ipv4Addr;
use std::path::Path;

use log::warn;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::ingest::{read_file, IxpPrefixSet, PrefixOrigin, Warning};
use crate::lpm::PrefixTable;
use crate::topology::{pair, step_for, AsGraph, EdgeLabel, LabelSet, Step};
use crate::types::{is_reserved, Asn, CountryCode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    #[serde(alias = "inside-out")]
    InsideOut,
    #[serde(alias = "outside-in")]
    OutsideIn,
    Mesh,
}

impl MeasurementKind {
    pub const ALL: [MeasurementKind; 3] = [
        MeasurementKind::InsideOut,
        MeasurementKind::OutsideIn,
        MeasurementKind::Mesh,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MeasurementKind::InsideOut => "InsideOut",
            MeasurementKind::OutsideIn => "OutsideIn",
            MeasurementKind::Mesh => "Mesh",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hop {
    Addr(Ipv4Addr),
    Unresponsive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TracerouteRecord {
    pub id: String,
    pub src_country: CountryCode,
    pub dst_country: CountryCode,
    pub kind: MeasurementKind,
    pub batch: Option<u32>,
    /// `(hop index, hop)` with strictly increasing indices.
    pub hops: Vec<(u32, Hop)>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    kind: MeasurementKind,
    src_country: String,
    dst_country: String,
    #[serde(default)]
    batch: Option<u32>,
    hops: Vec<RawHop>,
}

#[derive(Deserialize)]
struct RawHop {
    idx: u32,
    #[serde(default)]
    ip: RawReply,
}

#[derive(Deserialize, Default)]
#[serde(untagged)]
enum RawReply {
    #[default]
    None,
    One(Option<String>),
    Many(Vec<Option<String>>),
}

impl RawReply {
    fn first_responding(&self) -> std::result::Result<Hop, String> {
        let replies: Vec<Option<&str>> = match self {
            RawReply::None => vec![],
            RawReply::One(r) => vec![r.as_deref()],
            RawReply::Many(rs) => rs.iter().map(|r| r.as_deref()).collect(),
        };
        for r in replies.into_iter().flatten() {
            if r == "*" {
                continue;
            }
            return r
                .parse::<Ipv4Addr>()
                .map(Hop::Addr)
                .map_err(|_| format!("invalid hop address {r:?}"));
        }
        Ok(Hop::Unresponsive)
    }
}

fn record_from_raw(raw: RawRecord) -> std::result::Result<TracerouteRecord, String> {
    let src_country: CountryCode = raw.src_country.parse()?;
    let dst_country: CountryCode = raw.dst_country.parse()?;
    if raw.hops.len() < 2 {
        return Err(format!(
            "record {} has {} hops, need at least 2",
            raw.id,
            raw.hops.len()
        ));
    }
    let mut hops = Vec::with_capacity(raw.hops.len());
    for h in &raw.hops {
        if let Some(&(prev, _)) = hops.last() {
            if h.idx <= prev {
                return Err(format!("record {}: hop index {} after {}", raw.id, h.idx, prev));
            }
        }
        hops.push((h.idx, h.ip.first_responding()?));
    }
    Ok(TracerouteRecord {
        id: raw.id,
        src_country,
        dst_country,
        kind: raw.kind,
        batch: raw.batch,
        hops,
    })
}

#[derive(Clone, Debug, Default)]
pub struct Normalized {
    pub records: Vec<TracerouteRecord>,
    pub skipped: usize,
    pub warnings: Vec<Warning>,
}

pub fn normalize(path: &Path) -> Result<Normalized> {
    Ok(normalize_str(&read_file(path)?, &path.display().to_string()))
}

/// Parses line-delimited records. Malformed records are skipped and counted.
pub fn normalize_str(text: &str, file: &str) -> Normalized {
    let mut out = Normalized::default();
    for (i, l) in text.lines().enumerate() {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let parsed = serde_json::from_str::<RawRecord>(l)
            .map_err(|e| e.to_string())
            .and_then(record_from_raw);
        match parsed {
            Ok(r) => out.records.push(r),
            Err(message) => {
                let w = Warning {
                    file: file.to_string(),
                    line: i + 1,
                    message: format!("skipping traceroute: {message}"),
                };
                warn!("{w}");
                out.warnings.push(w);
                out.skipped += 1;
            }
        }
    }
    out
}

/// IP-to-AS lookup state: origin table and IXP prefixes.
#[derive(Clone, Debug)]
pub struct IpToAs {
    origins: PrefixTable<BTreeSet<Asn>>,
    ixp: PrefixTable<()>,
}

impl IpToAs {
    /// Repeated prefixes in the origin table merge their origin sets.
    pub fn new(prefixes: &[PrefixOrigin], ixp: &IxpPrefixSet) -> Self {
        let mut merged: BTreeMap<_, BTreeSet<Asn>> = BTreeMap::new();
        for p in prefixes {
            merged.entry(p.prefix).or_default().extend(p.origin.iter().copied());
        }
        IpToAs {
            origins: merged.into_iter().collect(),
            ixp: ixp.prefixes.iter().map(|&p| (p, ())).collect(),
        }
    }

    pub fn is_ixp(&self, ip: Ipv4Addr) -> bool {
        self.ixp.contains_addr(ip)
    }

    /// Single origin AS of the most specific covering prefix.
    pub fn origin(&self, ip: Ipv4Addr) -> Option<Asn> {
        match self.origins.longest_match(ip) {
            Some((_, set)) if set.len() == 1 => set.iter().next().copied(),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsPathRecord {
    pub source_id: String,
    pub kind: MeasurementKind,
    pub batch: Option<u32>,
    pub as_path: Vec<Asn>,
    pub dropped_ixp_hops: usize,
    pub dropped_reserved_hops: usize,
    /// Position `p` marks unresponsive or unresolved hops between
    /// `as_path[p - 1]` and `as_path[p]`.
    pub unresolved_gaps: Vec<usize>,
}

impl AsPathRecord {
    /// Contiguous gap-free pieces of the path.
    pub fn segments(&self) -> Vec<&[Asn]> {
        let mut out = Vec::new();
        let mut start = 0;
        for &g in &self.unresolved_gaps {
            out.push(&self.as_path[start..g]);
            start = g;
        }
        out.push(&self.as_path[start..]);
        out
    }
}

enum Token {
    As(Asn),
    Gap,
}

/// Converts a traceroute to an AS path. Steps, in order: drop IXP hops, drop
/// private/reserved hops, map the rest by longest prefix match (multi-origin
/// and unmatched hops are unresolved), collapse repeats, record gaps.
pub fn to_as_path(t: &TracerouteRecord, lookup: &IpToAs) -> Result<AsPathRecord> {
    let mut dropped_ixp_hops = 0;
    let mut dropped_reserved_hops = 0;
    let mut tokens = Vec::with_capacity(t.hops.len());
    for &(_, hop) in &t.hops {
        match hop {
            Hop::Unresponsive => tokens.push(Token::Gap),
            Hop::Addr(ip) if lookup.is_ixp(ip) => dropped_ixp_hops += 1,
            Hop::Addr(ip) if is_reserved(ip) => dropped_reserved_hops += 1,
            Hop::Addr(ip) => tokens.push(lookup.origin(ip).map_or(Token::Gap, Token::As)),
        }
    }
    let mut as_path: Vec<Asn> = Vec::new();
    let mut gaps = Vec::new();
    let mut pending_gap = false;
    for tok in tokens {
        match tok {
            Token::Gap => pending_gap = !as_path.is_empty(),
            Token::As(a) if as_path.last() == Some(&a) => pending_gap = false,
            Token::As(a) => {
                if pending_gap {
                    gaps.push(as_path.len());
                }
                as_path.push(a);
                pending_gap = false;
            }
        }
    }
    if as_path.is_empty() {
        return Err(Error::EmptyPath(t.id.clone()));
    }
    Ok(AsPathRecord {
        source_id: t.id.clone(),
        kind: t.kind,
        batch: t.batch,
        as_path,
        dropped_ixp_hops,
        dropped_reserved_hops,
        unresolved_gaps: gaps,
    })
}

/// Adjacent pairs not straddling a gap and not already in `g`, sorted.
pub fn extract_edges(p: &AsPathRecord, g: &AsGraph) -> Vec<(Asn, Asn)> {
    let gaps: BTreeSet<usize> = p.unresolved_gaps.iter().copied().collect();
    let found: BTreeSet<(Asn, Asn)> = (1..p.as_path.len())
        .filter(|i| !gaps.contains(i))
        .map(|i| pair(p.as_path[i - 1], p.as_path[i]))
        .filter(|&(a, b)| !g.has_edge(a, b))
        .collect();
    found.into_iter().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeConstraint {
    pub pair: (Asn, Asn),
    pub allowed: LabelSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Inconsistency {
    /// Paths demand disjoint labels for this edge.
    EmptyEdge { pair: (Asn, Asn) },
    /// The path cannot be valley-free under the known labels.
    InvalidPath { id: String },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Inference {
    /// Surviving label sets for edges absent from the graph, sorted by pair.
    /// Empty sets are kept and reported in `inconsistencies`.
    pub constraints: Vec<EdgeConstraint>,
    pub inconsistencies: Vec<Inconsistency>,
}

impl Inference {
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("kind,subject\n");
        for i in &self.inconsistencies {
            match i {
                Inconsistency::EmptyEdge { pair } => out.push_str(&format!("empty_edge,{}-{}\n", pair.0, pair.1)),
                Inconsistency::InvalidPath { id } => out.push_str(&format!("invalid_path,{id}\n")),
            }
        }
        out
    }
}

const UP: u8 = 1;
const PEERED: u8 = 2;
const DOWN: u8 = 4;

fn next_state(state: u8, step: Step) -> Option<u8> {
    match (state, step) {
        (UP, Step::Up) => Some(UP),
        (UP, Step::Peer) => Some(PEERED),
        (_, Step::Down) => Some(DOWN),
        _ => None,
    }
}

fn states(set: u8) -> impl Iterator<Item = u8> {
    [UP, PEERED, DOWN].into_iter().filter(move |s| set & s != 0)
}

/// Labels of each edge in `segment` that occur in at least one valley-free
/// labeling drawn from `domains`. `None` if no labeling is valley-free.
fn segment_support(segment: &[Asn], domains: &HashMap<(Asn, Asn), LabelSet>) -> Option<HashMap<(Asn, Asn), LabelSet>> {
    let hops: Vec<(Asn, (Asn, Asn))> = segment.windows(2).map(|w| (w[0], pair(w[0], w[1]))).collect();
    let distinct: BTreeSet<(Asn, Asn)> = hops.iter().map(|h| h.1).collect();
    if distinct.len() == hops.len() {
        chain_support(&hops, domains)
    } else {
        enumerate_support(&hops, domains)
    }
}

fn chain_support(
    hops: &[(Asn, (Asn, Asn))],
    domains: &HashMap<(Asn, Asn), LabelSet>,
) -> Option<HashMap<(Asn, Asn), LabelSet>> {
    let m = hops.len();
    let mut fwd = vec![0u8; m + 1];
    fwd[0] = UP;
    for (i, &(from, p)) in hops.iter().enumerate() {
        for l in domains[&p].labels(p) {
            let step = step_for(l, from).unwrap();
            for s in states(fwd[i]) {
                if let Some(ns) = next_state(s, step) {
                    fwd[i + 1] |= ns;
                }
            }
        }
    }
    let mut bwd = vec![0u8; m + 1];
    bwd[m] = UP | PEERED | DOWN;
    for i in (0..m).rev() {
        let (from, p) = hops[i];
        for s in [UP, PEERED, DOWN] {
            let ok = domains[&p]
                .labels(p)
                .into_iter()
                .any(|l| next_state(s, step_for(l, from).unwrap()).is_some_and(|ns| bwd[i + 1] & ns != 0));
            if ok {
                bwd[i] |= s;
            }
        }
    }
    if bwd[0] & UP == 0 {
        return None;
    }
    let mut support = HashMap::new();
    for (i, &(from, p)) in hops.iter().enumerate() {
        let mut set = LabelSet::EMPTY;
        for l in domains[&p].labels(p) {
            let step = step_for(l, from).unwrap();
            let ok = states(fwd[i]).any(|s| next_state(s, step).is_some_and(|ns| bwd[i + 1] & ns != 0));
            if ok {
                set.insert(p, l);
            }
        }
        support.insert(p, set);
    }
    Some(support)
}

/// Exhaustive search, used when a segment revisits an edge.
fn enumerate_support(
    hops: &[(Asn, (Asn, Asn))],
    domains: &HashMap<(Asn, Asn), LabelSet>,
) -> Option<HashMap<(Asn, Asn), LabelSet>> {
    fn walk(
        i: usize,
        state: u8,
        hops: &[(Asn, (Asn, Asn))],
        domains: &HashMap<(Asn, Asn), LabelSet>,
        chosen: &mut BTreeMap<(Asn, Asn), EdgeLabel>,
        support: &mut HashMap<(Asn, Asn), LabelSet>,
    ) -> bool {
        if i == hops.len() {
            for (&p, &l) in chosen.iter() {
                support.entry(p).or_default().insert(p, l);
            }
            return true;
        }
        let (from, p) = hops[i];
        let options = match chosen.get(&p) {
            Some(&l) => vec![l],
            None => domains[&p].labels(p),
        };
        let fresh = !chosen.contains_key(&p);
        let mut any = false;
        for l in options {
            if let Some(ns) = next_state(state, step_for(l, from).unwrap()) {
                if fresh {
                    chosen.insert(p, l);
                }
                any |= walk(i + 1, ns, hops, domains, chosen, support);
                if fresh {
                    chosen.remove(&p);
                }
            }
        }
        any
    }
    let mut support = HashMap::new();
    let mut chosen = BTreeMap::new();
    walk(0, UP, hops, domains, &mut chosen, &mut support).then_some(support)
}

/// Constrains the relationships of edges seen in `paths` but absent from `g`.
///
/// Labels already in `g` are fixed. Every path segment must read
/// `up* peer? down*`; each edge keeps the labels that appear in some
/// valley-free labeling of every segment it lies on. Constraints are
/// propagated between paths until nothing changes. Paths that cannot be
/// valley-free and edges left with no label are reported, never fatal.
pub fn infer_relationships(paths: &[AsPathRecord], g: &AsGraph) -> Inference {
    let mut domains: HashMap<(Asn, Asn), LabelSet> = HashMap::new();
    let mut free: BTreeSet<(Asn, Asn)> = BTreeSet::new();
    let mut segments: Vec<(&str, &[Asn])> = Vec::new();
    for p in paths {
        for seg in p.segments() {
            for w in seg.windows(2) {
                let key = pair(w[0], w[1]);
                let dom = match g.edge(key.0, key.1).map(|e| e.label) {
                    Some(EdgeLabel::Unknown) => LabelSet::ALL,
                    Some(label) => LabelSet::only(key, label),
                    None => {
                        free.insert(key);
                        LabelSet::ALL
                    }
                };
                domains.insert(key, dom);
            }
            if seg.len() >= 3 {
                segments.push((&p.source_id, seg));
            }
        }
    }

    let mut inconsistencies = Vec::new();
    let mut invalid: BTreeSet<usize> = BTreeSet::new();

    // independent per-segment supports, intersected per edge
    let base = domains.clone();
    for (si, (id, seg)) in segments.iter().enumerate() {
        match segment_support(seg, &base) {
            Some(support) => {
                for (p, allowed) in support {
                    let dom = domains.get_mut(&p).unwrap();
                    *dom = dom.intersect(allowed);
                }
            }
            None => {
                invalid.insert(si);
                inconsistencies.push(Inconsistency::InvalidPath { id: id.to_string() });
            }
        }
    }
    let mut emptied: BTreeSet<(Asn, Asn)> = BTreeSet::new();
    for p in &free {
        if domains[p].is_empty() {
            emptied.insert(*p);
            inconsistencies.push(Inconsistency::EmptyEdge { pair: *p });
            domains.insert(*p, LabelSet::ALL);
        }
    }

    // propagate narrowed sets between segments that share edges
    loop {
        let mut changed = false;
        for (si, (id, seg)) in segments.iter().enumerate() {
            if invalid.contains(&si) {
                continue;
            }
            let Some(support) = segment_support(seg, &domains) else {
                invalid.insert(si);
                inconsistencies.push(Inconsistency::InvalidPath { id: id.to_string() });
                continue;
            };
            for (p, allowed) in support {
                if emptied.contains(&p) {
                    continue;
                }
                let dom = domains.get_mut(&p).unwrap();
                let narrowed = dom.intersect(allowed);
                if narrowed != *dom {
                    *dom = narrowed;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let constraints = free
        .iter()
        .map(|&p| EdgeConstraint {
            pair: p,
            allowed: if emptied.contains(&p) {
                LabelSet::EMPTY
            } else {
                domains[&p]
            },
        })
        .collect();
    Inference {
        constraints,
        inconsistencies,
    }
}

pub const PROBE_STEP: u32 = 5;
pub const ZERO_RUN: usize = 3;

/// Progress of an Inside-Out/Outside-In campaign whose probe sets grow by 5.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CampaignState {
    pub batch_sizes: Vec<u32>,
    pub new_edges: Vec<usize>,
    pub stopped: bool,
    /// Batches offered after the campaign stopped.
    pub ignored: usize,
}

impl CampaignState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one batch; stops once three consecutive batches add nothing.
    /// A stopped campaign stays stopped.
    pub fn push(&mut self, new_edges: usize) {
        if self.stopped {
            self.ignored += 1;
            return;
        }
        self.batch_sizes.push(PROBE_STEP * (self.batch_sizes.len() as u32 + 1));
        self.new_edges.push(new_edges);
        let n = self.new_edges.len();
        self.stopped = n >= ZERO_RUN && self.new_edges[n - ZERO_RUN..].iter().all(|&c| c == 0);
    }
}

pub fn evaluate_campaign(counts: &[usize]) -> CampaignState {
    let mut s = CampaignState::new();
    for &c in counts {
        s.push(c);
    }
    s
}
