//! Annotated global AS graph and per-country views.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use log::warn;

use crate::error::{Error, Result};
use crate::ingest::{CountryAssignment, RelRecord, Relationship};
use crate::types::{Asn, CountryCode};

/// Relationship label of an edge. Orientation is only carried for p2c.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeLabel {
    ProviderCustomer { provider: Asn, customer: Asn },
    PeerPeer,
    Unknown,
}

impl EdgeLabel {
    pub fn is_peer(&self) -> bool {
        matches!(self, EdgeLabel::PeerPeer)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeSource {
    Bgp,
    Traceroute,
}

impl EdgeSource {
    fn as_str(&self) -> &'static str {
        match self {
            EdgeSource::Bgp => "bgp",
            EdgeSource::Traceroute => "traceroute",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub label: EdgeLabel,
    pub source: EdgeSource,
}

/// Direction of one hop along an AS path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Step {
    /// customer to provider
    Up,
    Peer,
    /// provider to customer
    Down,
}

/// Unordered AS pair stored as `(low, high)`.
pub fn pair(a: Asn, b: Asn) -> (Asn, Asn) {
    (a.min(b), a.max(b))
}

/// Subset of the three labels an edge `(low, high)` may take.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelSet(u8);

impl LabelSet {
    const LOW_PROVIDER: u8 = 1;
    const HIGH_PROVIDER: u8 = 2;
    const PEER: u8 = 4;

    pub const EMPTY: LabelSet = LabelSet(0);
    pub const ALL: LabelSet = LabelSet(7);

    fn bit(pair: (Asn, Asn), label: EdgeLabel) -> u8 {
        match label {
            EdgeLabel::ProviderCustomer { provider, .. } if provider == pair.0 => Self::LOW_PROVIDER,
            EdgeLabel::ProviderCustomer { .. } => Self::HIGH_PROVIDER,
            EdgeLabel::PeerPeer => Self::PEER,
            EdgeLabel::Unknown => 0,
        }
    }

    pub fn only(pair: (Asn, Asn), label: EdgeLabel) -> Self {
        LabelSet(Self::bit(pair, label))
    }

    pub fn from_labels(pair: (Asn, Asn), labels: impl IntoIterator<Item = EdgeLabel>) -> Self {
        LabelSet(labels.into_iter().fold(0, |acc, l| acc | Self::bit(pair, l)))
    }

    pub fn contains(&self, pair: (Asn, Asn), label: EdgeLabel) -> bool {
        let b = Self::bit(pair, label);
        b != 0 && self.0 & b != 0
    }

    pub fn insert(&mut self, pair: (Asn, Asn), label: EdgeLabel) {
        self.0 |= Self::bit(pair, label);
    }

    pub fn intersect(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 & other.0)
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    /// Labels of `pair` in a fixed order: low provider, high provider, peer.
    pub fn labels(&self, pair: (Asn, Asn)) -> Vec<EdgeLabel> {
        let mut out = Vec::with_capacity(3);
        if self.0 & Self::LOW_PROVIDER != 0 {
            out.push(EdgeLabel::ProviderCustomer {
                provider: pair.0,
                customer: pair.1,
            });
        }
        if self.0 & Self::HIGH_PROVIDER != 0 {
            out.push(EdgeLabel::ProviderCustomer {
                provider: pair.1,
                customer: pair.0,
            });
        }
        if self.0 & Self::PEER != 0 {
            out.push(EdgeLabel::PeerPeer);
        }
        out
    }

    /// The definite label when exactly one remains.
    pub fn single(&self, pair: (Asn, Asn)) -> Option<EdgeLabel> {
        match self.labels(pair).as_slice() {
            [one] => Some(*one),
            _ => None,
        }
    }

    /// Compact text form for reports, e.g. `p2c(1>2);p2p`.
    pub fn describe(&self, pair: (Asn, Asn)) -> String {
        if self.is_empty() {
            return "none".to_string();
        }
        self.labels(pair)
            .iter()
            .map(|l| label_text(*l))
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl fmt::Debug for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LabelSet({:03b})", self.0)
    }
}

pub fn label_text(label: EdgeLabel) -> String {
    match label {
        EdgeLabel::ProviderCustomer { provider, customer } => format!("p2c({provider}>{customer})"),
        EdgeLabel::PeerPeer => "p2p".to_string(),
        EdgeLabel::Unknown => "unknown".to_string(),
    }
}

/// Global AS graph, undirected with relationship metadata per edge.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AsGraph {
    edges: BTreeMap<(Asn, Asn), Edge>,
    adj: BTreeMap<Asn, BTreeSet<Asn>>,
    country: BTreeMap<Asn, CountryCode>,
}

impl AsGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds the graph from relationship records; countries come from the
    /// registration assignments and may be absent.
    pub fn build_global(rels: &[RelRecord], assignments: &[CountryAssignment]) -> Self {
        let mut g = AsGraph::new();
        for a in assignments {
            g.country.entry(a.asn).or_insert(a.country);
        }
        for r in rels {
            let label = match r.rel {
                Relationship::ProviderCustomer => EdgeLabel::ProviderCustomer {
                    provider: r.as_a,
                    customer: r.as_b,
                },
                Relationship::PeerPeer => EdgeLabel::PeerPeer,
            };
            let key = pair(r.as_a, r.as_b);
            if let Some(existing) = g.edges.get(&key) {
                if existing.label != label {
                    warn!(
                        "conflicting relationship for AS{}-AS{}, keeping the first",
                        key.0, key.1
                    );
                }
                continue;
            }
            g.insert_edge(
                r.as_a,
                r.as_b,
                Edge {
                    label,
                    source: EdgeSource::Bgp,
                },
            );
        }
        g
    }

    pub fn insert_edge(&mut self, a: Asn, b: Asn, edge: Edge) {
        assert_ne!(a, b, "self loop on AS{a}");
        self.edges.insert(pair(a, b), edge);
        self.adj.entry(a).or_default().insert(b);
        self.adj.entry(b).or_default().insert(a);
    }

    pub fn set_country(&mut self, asn: Asn, country: CountryCode) {
        self.country.insert(asn, country);
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = Asn> + '_ {
        self.adj.keys().copied()
    }

    pub fn contains_node(&self, asn: Asn) -> bool {
        self.adj.contains_key(&asn)
    }

    pub fn edges(&self) -> impl Iterator<Item = ((Asn, Asn), &Edge)> + '_ {
        self.edges.iter().map(|(k, v)| (*k, v))
    }

    pub fn edge(&self, a: Asn, b: Asn) -> Option<&Edge> {
        self.edges.get(&pair(a, b))
    }

    pub fn has_edge(&self, a: Asn, b: Asn) -> bool {
        self.edges.contains_key(&pair(a, b))
    }

    pub fn neighbors(&self, asn: Asn) -> impl Iterator<Item = Asn> + '_ {
        self.adj.get(&asn).into_iter().flatten().copied()
    }

    pub fn degree(&self, asn: Asn) -> usize {
        self.adj.get(&asn).map_or(0, BTreeSet::len)
    }

    /// Direct customers of `asn`.
    pub fn customers(&self, asn: Asn) -> impl Iterator<Item = Asn> + '_ {
        self.neighbors(asn).filter(move |&n| {
            matches!(self.edge(asn, n).map(|e| e.label),
                Some(EdgeLabel::ProviderCustomer { provider, .. }) if provider == asn)
        })
    }

    /// Direction of the hop `from -> to`, `None` for missing or unknown edges.
    pub fn step(&self, from: Asn, to: Asn) -> Option<Step> {
        step_for(self.edge(from, to)?.label, from)
    }

    pub fn country_of(&self, asn: Asn) -> Option<CountryCode> {
        self.country.get(&asn).copied()
    }

    /// Every country that has at least one registration, with or without graph nodes.
    pub fn assigned_countries(&self) -> BTreeSet<CountryCode> {
        self.country.values().copied().collect()
    }

    /// Graph nodes registered in `country`.
    pub fn domestic_nodes(&self, country: CountryCode) -> BTreeSet<Asn> {
        self.nodes().filter(|a| self.country_of(*a) == Some(country)).collect()
    }

    /// Adds edges that are not yet present. Existing labels are never changed.
    /// Each constraint becomes a definite label when exactly one label is
    /// allowed and `Unknown` otherwise.
    pub fn merge_edges(&self, new_edges: &[(Asn, Asn, LabelSet)]) -> (AsGraph, MergeReport) {
        let mut g = self.clone();
        let mut report = MergeReport::default();
        for &(a, b, allowed) in new_edges {
            if a == b {
                continue;
            }
            let key = pair(a, b);
            if let Some(existing) = g.edges.get(&key) {
                if existing.label != EdgeLabel::Unknown && !allowed.contains(key, existing.label) {
                    report.conflicts.push(MergeConflict {
                        pair: key,
                        existing: existing.label,
                        allowed,
                    });
                }
                continue;
            }
            let label = allowed.single(key).unwrap_or(EdgeLabel::Unknown);
            g.insert_edge(
                a,
                b,
                Edge {
                    label,
                    source: EdgeSource::Traceroute,
                },
            );
            report.new_edges.push((key, label));
            let countries: BTreeSet<CountryCode> = [g.country_of(a), g.country_of(b)].into_iter().flatten().collect();
            for c in countries {
                *report.per_country.entry(c).or_default() += 1;
            }
        }
        (g, report)
    }

    pub fn country_view(&self, country: CountryCode) -> Result<CountryView> {
        if !self.country.values().any(|c| *c == country) {
            return Err(Error::UnknownCountry(country.to_string()));
        }
        let domestic_nodes = self.domestic_nodes(country);
        let mut domestic_edges = Vec::new();
        let mut border_edges = Vec::new();
        for &a in &domestic_nodes {
            for b in self.neighbors(a) {
                if domestic_nodes.contains(&b) {
                    if a < b {
                        domestic_edges.push((a, b));
                    }
                } else {
                    border_edges.push((a, b));
                }
            }
        }
        Ok(CountryView {
            country,
            domestic_nodes,
            domestic_edges,
            border_edges,
        })
    }

    /// Edge list text, one `asA|asB|label|source` line per edge. p2c edges
    /// are written provider first; other edges low ASN first.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::from("# asA|asB|label|source\n");
        for (&(lo, hi), e) in &self.edges {
            let (a, b, label) = match e.label {
                EdgeLabel::ProviderCustomer { provider, customer } => (provider, customer, "p2c"),
                EdgeLabel::PeerPeer => (lo, hi, "p2p"),
                EdgeLabel::Unknown => (lo, hi, "unknown"),
            };
            out.push_str(&format!("{a}|{b}|{label}|{}\n", e.source.as_str()));
        }
        out
    }

    /// Rebuilds a graph from [`AsGraph::to_edge_list`] output.
    pub fn from_edge_list(text: &str, file: &str, assignments: &[CountryAssignment]) -> Result<Self> {
        let mut g = AsGraph::new();
        for a in assignments {
            g.country.entry(a.asn).or_insert(a.country);
        }
        for (i, l) in text.lines().enumerate() {
            let line = i + 1;
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = l.split('|').collect();
            if f.len() != 4 {
                return Err(Error::parse(
                    file,
                    line,
                    format!("expected asA|asB|label|source, got {l:?}"),
                ));
            }
            let a: Asn = f[0]
                .parse()
                .map_err(|_| Error::parse(file, line, "invalid AS number"))?;
            let b: Asn = f[1]
                .parse()
                .map_err(|_| Error::parse(file, line, "invalid AS number"))?;
            if a == b {
                return Err(Error::parse(file, line, "self loop"));
            }
            let label = match f[2] {
                "p2c" => EdgeLabel::ProviderCustomer {
                    provider: a,
                    customer: b,
                },
                "p2p" => EdgeLabel::PeerPeer,
                "unknown" => EdgeLabel::Unknown,
                other => return Err(Error::parse(file, line, format!("unknown label {other:?}"))),
            };
            let source = match f[3] {
                "bgp" => EdgeSource::Bgp,
                "traceroute" => EdgeSource::Traceroute,
                other => return Err(Error::parse(file, line, format!("unknown source {other:?}"))),
            };
            if g.has_edge(a, b) {
                return Err(Error::parse(file, line, format!("duplicate edge AS{a}-AS{b}")));
            }
            g.insert_edge(a, b, Edge { label, source });
        }
        Ok(g)
    }
}

pub(crate) fn step_for(label: EdgeLabel, from: Asn) -> Option<Step> {
    match label {
        EdgeLabel::ProviderCustomer { provider, .. } if provider == from => Some(Step::Down),
        EdgeLabel::ProviderCustomer { .. } => Some(Step::Up),
        EdgeLabel::PeerPeer => Some(Step::Peer),
        EdgeLabel::Unknown => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeConflict {
    pub pair: (Asn, Asn),
    pub existing: EdgeLabel,
    pub allowed: LabelSet,
}

/// New-edge accounting from a merge. An edge counts once for each distinct
/// registration country among its endpoints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MergeReport {
    pub new_edges: Vec<((Asn, Asn), EdgeLabel)>,
    pub per_country: BTreeMap<CountryCode, usize>,
    pub conflicts: Vec<MergeConflict>,
}

impl MergeReport {
    pub fn total_new(&self) -> usize {
        self.new_edges.len()
    }

    /// `kind,key,value` rows: the total, per-country counts, then conflicts.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("kind,key,value\n");
        out.push_str(&format!("total,new_edges,{}\n", self.total_new()));
        for (c, n) in &self.per_country {
            out.push_str(&format!("country,{c},{n}\n"));
        }
        for c in &self.conflicts {
            out.push_str(&format!(
                "conflict,{}-{},existing={} allowed={}\n",
                c.pair.0,
                c.pair.1,
                label_text(c.existing),
                c.allowed.describe(c.pair)
            ));
        }
        out
    }
}

/// Induced subgraph of one country plus its international border edges.
#[derive(Clone, Debug, PartialEq)]
pub struct CountryView {
    pub country: CountryCode,
    pub domestic_nodes: BTreeSet<Asn>,
    /// `(low, high)` pairs with both ends domestic.
    pub domestic_edges: Vec<(Asn, Asn)>,
    /// `(domestic, foreign)` pairs.
    pub border_edges: Vec<(Asn, Asn)>,
}

impl CountryView {
    pub fn is_empty(&self) -> bool {
        self.domestic_nodes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_rel_str;

    fn cc(s: &str) -> CountryCode {
        CountryCode::new(s).unwrap()
    }

    fn assign(pairs: &[(Asn, &str)]) -> Vec<CountryAssignment> {
        pairs
            .iter()
            .map(|&(asn, c)| CountryAssignment { asn, country: cc(c) })
            .collect()
    }

    #[test]
    fn figure_one_graph() {
        let rels = parse_rel_str("1|2|-1\n2|3|0\n", "r").unwrap();
        // 1|2|-1 means AS1 is the provider of AS2
        let g = AsGraph::build_global(&rels, &[]);
        assert_eq!((g.num_nodes(), g.num_edges()), (3, 2));
        assert_eq!(g.step(2, 1), Some(Step::Up));
        assert_eq!(g.step(1, 2), Some(Step::Down));
        assert_eq!(g.step(2, 3), Some(Step::Peer));
        assert_eq!(g.step(1, 3), None);
        assert_eq!(g.customers(1).collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn empty_and_duplicate_input() {
        let g = AsGraph::build_global(&[], &[]);
        assert_eq!((g.num_nodes(), g.num_edges()), (0, 0));
        let rels = parse_rel_str("1|2|-1\n1|2|-1\n", "r").unwrap();
        let g = AsGraph::build_global(&rels, &[]);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn unassigned_nodes_are_kept() {
        let rels = parse_rel_str("1|2|-1\n", "r").unwrap();
        let g = AsGraph::build_global(&rels, &assign(&[(1, "SG"), (99, "US")]));
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.country_of(2), None);
        assert!(!g.contains_node(99));
    }

    #[test]
    fn merge_existing_edge_is_not_new() {
        let rels = parse_rel_str("1|2|-1\n", "r").unwrap();
        let g = AsGraph::build_global(&rels, &[]);
        let (g2, rep) = g.merge_edges(&[(2, 1, LabelSet::ALL)]);
        assert_eq!(rep.total_new(), 0);
        assert_eq!(g2, g);
    }

    #[test]
    fn merge_adds_peer_edge() {
        let g = AsGraph::build_global(&parse_rel_str("1|10|-1\n", "r").unwrap(), &[]);
        let p = pair(10, 11);
        let (g2, rep) = g.merge_edges(&[(10, 11, LabelSet::only(p, EdgeLabel::PeerPeer))]);
        assert_eq!(rep.total_new(), 1);
        let e = g2.edge(11, 10).unwrap();
        assert_eq!(e.label, EdgeLabel::PeerPeer);
        assert_eq!(e.source, EdgeSource::Traceroute);
    }

    #[test]
    fn merge_ambiguous_becomes_unknown_and_conflicts_are_reported() {
        let g = AsGraph::build_global(&parse_rel_str("1|2|-1\n", "r").unwrap(), &[]);
        let (g2, rep) = g.merge_edges(&[
            (3, 4, LabelSet::ALL),
            (1, 2, LabelSet::only(pair(1, 2), EdgeLabel::PeerPeer)),
        ]);
        assert_eq!(g2.edge(3, 4).unwrap().label, EdgeLabel::Unknown);
        assert_eq!(rep.conflicts.len(), 1);
        // the existing label wins
        assert_eq!(
            g2.edge(1, 2).unwrap().label,
            EdgeLabel::ProviderCustomer {
                provider: 1,
                customer: 2
            }
        );
    }

    #[test]
    fn merge_per_country_attribution() {
        let g = AsGraph::build_global(
            &parse_rel_str("1|2|-1\n", "r").unwrap(),
            &assign(&[(1, "RU"), (2, "RU"), (3, "UA"), (4, "RU")]),
        );
        let (_, rep) = g.merge_edges(&[(1, 3, LabelSet::ALL), (2, 4, LabelSet::ALL), (4, 5, LabelSet::ALL)]);
        assert_eq!(rep.per_country.get(&cc("RU")), Some(&3));
        assert_eq!(rep.per_country.get(&cc("UA")), Some(&1));
        assert_eq!(rep.total_new(), 3);
    }

    #[test]
    fn merge_is_idempotent() {
        let g = AsGraph::build_global(&parse_rel_str("1|2|-1\n2|3|0\n", "r").unwrap(), &[]);
        let edges = vec![
            (3, 4, LabelSet::ALL),
            (4, 5, LabelSet::only(pair(4, 5), EdgeLabel::PeerPeer)),
        ];
        let (g1, r1) = g.merge_edges(&edges);
        let (g2, r2) = g1.merge_edges(&edges);
        assert_eq!(r1.total_new(), 2);
        assert_eq!(r2.total_new(), 0);
        assert_eq!(g1, g2);
    }

    #[test]
    fn country_view_partitions_edges() {
        let g = AsGraph::build_global(
            &parse_rel_str("1|2|0\n2|3|-1\n", "r").unwrap(),
            &assign(&[(1, "SG"), (2, "SG"), (3, "US")]),
        );
        let v = g.country_view(cc("SG")).unwrap();
        assert_eq!(v.domestic_edges, vec![(1, 2)]);
        assert_eq!(v.border_edges, vec![(2, 3)]);
        assert!(g.country_view(cc("IR")).is_err());
    }

    #[test]
    fn country_without_ases_gives_empty_view() {
        let g = AsGraph::build_global(
            &parse_rel_str("1|2|0\n", "r").unwrap(),
            &assign(&[(1, "SG"), (2, "SG"), (77, "BW")]),
        );
        let v = g.country_view(cc("BW")).unwrap();
        assert!(v.is_empty());
        assert!(v.domestic_edges.is_empty() && v.border_edges.is_empty());
    }

    #[test]
    fn singapore_like_border_accounting() {
        // 4 domestic ASes (1..=4) in a ring, each of 6 foreign ASes attached to one of them
        let mut text = String::from("1|2|0\n2|3|0\n3|4|0\n4|1|0\n");
        for (i, f) in (100..106).enumerate() {
            text.push_str(&format!("{}|{}|-1\n", f, 1 + i % 4));
        }
        let mut a = vec![(1, "SG"), (2, "SG"), (3, "SG"), (4, "SG")];
        a.extend((100..106).map(|f| (f, if f % 2 == 0 { "US" } else { "JP" })));
        let g = AsGraph::build_global(&parse_rel_str(&text, "r").unwrap(), &assign(&a));
        let v = g.country_view(cc("SG")).unwrap();
        assert_eq!(v.domestic_nodes.len(), 4);
        assert_eq!(v.domestic_edges.len(), 4);
        assert_eq!(v.border_edges.len(), 6);
    }

    #[test]
    fn edge_list_round_trip_is_bit_exact() {
        let rels = parse_rel_str("5|2|-1\n2|3|0\n9|1|-1\n", "r").unwrap();
        let g = AsGraph::build_global(&rels, &[]);
        let (g, _) = g.merge_edges(&[(3, 7, LabelSet::ALL)]);
        let text = g.to_edge_list();
        assert_eq!(
            text,
            "# asA|asB|label|source\n9|1|p2c|bgp\n2|3|p2p|bgp\n5|2|p2c|bgp\n3|7|unknown|traceroute\n"
        );
        let back = AsGraph::from_edge_list(&text, "g", &[]).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_edge_list(), text);
    }

    #[test]
    fn label_sets() {
        let p = pair(2, 3);
        let mut s = LabelSet::EMPTY;
        s.insert(
            p,
            EdgeLabel::ProviderCustomer {
                provider: 2,
                customer: 3,
            },
        );
        s.insert(p, EdgeLabel::PeerPeer);
        assert_eq!(s.len(), 2);
        assert!(!s.contains(
            p,
            EdgeLabel::ProviderCustomer {
                provider: 3,
                customer: 2
            }
        ));
        assert_eq!(s.describe(p), "p2c(2>3);p2p");
        let one = s.intersect(LabelSet::only(p, EdgeLabel::PeerPeer));
        assert_eq!(one.single(p), Some(EdgeLabel::PeerPeer));
    }
}
