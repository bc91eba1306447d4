//! Policy-aware routing computations over the global AS graph: customer
//! cones, AS rank, valley-free distances and country-to-country path lengths.
//!
//! A path is valley-free when its hop directions match `up* peer? down*`.
//! Distances are AS hop counts of the shortest valley-free path, found by a
//! breadth-first search over `(AS, state)` pairs where the state records
//! whether the path is still climbing, has crossed a peering link, or has
//! started descending. Unknown-label edges are not traversable.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rayon::prelude::*;

use crate::topology::{AsGraph, CountryView, EdgeLabel, Step};
use crate::types::{Asn, CountryCode};

/// Customer cone of every AS in the graph.
///
/// Provider-customer cycles are collapsed first: all members of a strongly
/// connected component of the p2c digraph share one cone.
#[derive(Clone, Debug, PartialEq)]
pub struct CustomerCones {
    component: BTreeMap<Asn, usize>,
    cones: Vec<BTreeSet<Asn>>,
}

impl CustomerCones {
    pub fn cone(&self, asn: Asn) -> Option<&BTreeSet<Asn>> {
        self.component.get(&asn).map(|&c| &self.cones[c])
    }

    pub fn size(&self, asn: Asn) -> usize {
        self.cone(asn).map_or(0, BTreeSet::len)
    }

    pub fn len(&self) -> usize {
        self.component.len()
    }

    pub fn is_empty(&self) -> bool {
        self.component.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Asn, &BTreeSet<Asn>)> + '_ {
        self.component.iter().map(|(&a, &c)| (a, &self.cones[c]))
    }
}

/// Transitive closure over provider-to-customer edges, inclusive of self.
pub fn customer_cones(g: &AsGraph) -> CustomerCones {
    let asns: Vec<Asn> = g.nodes().collect();
    let index: HashMap<Asn, usize> = asns.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let succ: Vec<Vec<usize>> = asns
        .iter()
        .map(|&a| g.customers(a).map(|c| index[&c]).collect())
        .collect();

    let sccs = tarjan(&succ);
    let mut comp_of = vec![usize::MAX; asns.len()];
    for (ci, members) in sccs.iter().enumerate() {
        for &m in members {
            comp_of[m] = ci;
        }
    }
    // Tarjan emits components in reverse topological order, so every
    // successor component is finished before its predecessors.
    let mut cones: Vec<BTreeSet<Asn>> = Vec::with_capacity(sccs.len());
    for (ci, members) in sccs.iter().enumerate() {
        let mut cone: BTreeSet<Asn> = members.iter().map(|&m| asns[m]).collect();
        for &m in members {
            for &s in &succ[m] {
                let cs = comp_of[s];
                if cs != ci {
                    debug_assert!(cs < ci);
                    cone.extend(cones[cs].iter().copied());
                }
            }
        }
        cones.push(cone);
    }
    let component = asns.iter().enumerate().map(|(i, &a)| (a, comp_of[i])).collect();
    CustomerCones { component, cones }
}

/// Iterative Tarjan strongly connected components.
fn tarjan(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = succ.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut next = 0usize;

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < succ[v].len() {
                let w = succ[v][*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut members = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        members.push(w);
                        if w == v {
                            break;
                        }
                    }
                    members.sort_unstable();
                    out.push(members);
                }
            }
        }
    }
    out
}

/// ASes ordered by descending cone size, then descending degree, then
/// ascending ASN.
pub fn as_rank(g: &AsGraph, cones: &CustomerCones) -> Vec<Asn> {
    let mut rank: Vec<Asn> = g.nodes().collect();
    rank.sort_by(|&a, &b| {
        cones
            .size(b)
            .cmp(&cones.size(a))
            .then(g.degree(b).cmp(&g.degree(a)))
            .then(a.cmp(&b))
    });
    rank
}

/// [`as_rank`] cut into runs of ASes with equal cone size and degree. Order
/// inside a run comes only from the ASN tie-break.
pub fn rank_tiers(g: &AsGraph, cones: &CustomerCones) -> Vec<Vec<Asn>> {
    let mut tiers: Vec<Vec<Asn>> = Vec::new();
    let mut last = None;
    for a in as_rank(g, cones) {
        let key = (cones.size(a), g.degree(a));
        if last == Some(key) {
            tiers.last_mut().expect("tier started").push(a);
        } else {
            tiers.push(vec![a]);
            last = Some(key);
        }
    }
    tiers
}

/// Shortest valley-free hop counts from a source set. ASes missing from the
/// map are unreachable.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolicyDistance {
    pub sources: BTreeSet<Asn>,
    pub distance: BTreeMap<Asn, u32>,
}

impl PolicyDistance {
    pub fn get(&self, asn: Asn) -> Option<u32> {
        self.distance.get(&asn).copied()
    }
}

/// Index-based view of the traversable edges, built once per graph.
pub struct PolicyGraph {
    asns: Vec<Asn>,
    index: HashMap<Asn, usize>,
    out: Vec<Vec<(usize, Step)>>,
}

const UP: usize = 0;
const PEERED: usize = 1;
const DOWN: usize = 2;

fn transition(state: usize, step: Step) -> Option<usize> {
    match (state, step) {
        (UP, Step::Up) => Some(UP),
        (UP, Step::Peer) => Some(PEERED),
        (_, Step::Down) => Some(DOWN),
        _ => None,
    }
}

impl PolicyGraph {
    pub fn new(g: &AsGraph) -> Self {
        let asns: Vec<Asn> = g.nodes().collect();
        let index: HashMap<Asn, usize> = asns.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        let out = asns
            .iter()
            .map(|&a| {
                g.neighbors(a)
                    .filter_map(|b| g.step(a, b).map(|s| (index[&b], s)))
                    .collect()
            })
            .collect();
        PolicyGraph { asns, index, out }
    }

    /// Minimum hops per node index from any source; `u32::MAX` when unreachable.
    fn bfs(&self, sources: impl IntoIterator<Item = Asn>) -> Vec<u32> {
        let n = self.asns.len();
        let mut seen = vec![[false; 3]; n];
        let mut best = vec![u32::MAX; n];
        let mut queue = VecDeque::new();
        for s in sources {
            if let Some(&i) = self.index.get(&s) {
                if !seen[i][UP] {
                    seen[i][UP] = true;
                    best[i] = 0;
                    queue.push_back((i, UP, 0u32));
                }
            }
        }
        while let Some((v, state, d)) = queue.pop_front() {
            for &(w, step) in &self.out[v] {
                if let Some(ns) = transition(state, step) {
                    if !seen[w][ns] {
                        seen[w][ns] = true;
                        best[w] = best[w].min(d + 1);
                        queue.push_back((w, ns, d + 1));
                    }
                }
            }
        }
        best
    }

    pub fn distances(&self, sources: &BTreeSet<Asn>) -> PolicyDistance {
        let best = self.bfs(sources.iter().copied());
        let distance = best
            .iter()
            .enumerate()
            .filter(|(_, &d)| d != u32::MAX)
            .map(|(i, &d)| (self.asns[i], d))
            .collect();
        PolicyDistance {
            sources: sources.clone(),
            distance,
        }
    }
}

pub fn valley_free_distances(g: &AsGraph, sources: &BTreeSet<Asn>) -> PolicyDistance {
    PolicyGraph::new(g).distances(sources)
}

/// Minimum valley-free distance between every ordered pair of countries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PathMatrix {
    pub countries: Vec<CountryCode>,
    /// `None` is unreachable. Diagonal entries are not stored.
    pub entries: BTreeMap<(CountryCode, CountryCode), Option<u32>>,
}

impl PathMatrix {
    pub fn get(&self, src: CountryCode, dst: CountryCode) -> Option<u32> {
        self.entries.get(&(src, dst)).copied().flatten()
    }

    /// Largest finite distance from `src` to another country.
    pub fn row_max(&self, src: CountryCode) -> Option<u32> {
        self.entries
            .range((src, CountryCode::new("AA").unwrap())..=(src, CountryCode::new("ZZ").unwrap()))
            .filter_map(|(_, d)| *d)
            .max()
    }

    pub fn global_max(&self) -> Option<u32> {
        self.entries.values().filter_map(|d| *d).max()
    }

    /// `src,dst,distance` rows; unreachable pairs read `UNREACHABLE`.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("src,dst,distance\n");
        for ((a, b), d) in &self.entries {
            match d {
                Some(d) => out.push_str(&format!("{a},{b},{d}\n")),
                None => out.push_str(&format!("{a},{b},UNREACHABLE\n")),
            }
        }
        out
    }
}

/// One multi-source search per source country over the whole graph.
pub fn country_path_matrix(g: &AsGraph, views: &BTreeMap<CountryCode, CountryView>) -> PathMatrix {
    let pg = PolicyGraph::new(g);
    let countries: Vec<CountryCode> = views.keys().copied().collect();
    type Row = Vec<((CountryCode, CountryCode), Option<u32>)>;
    let rows: Vec<Row> = countries
        .par_iter()
        .map(|&src| {
            let best = pg.bfs(views[&src].domestic_nodes.iter().copied());
            countries
                .iter()
                .filter(|&&dst| dst != src)
                .map(|&dst| {
                    let d = views[&dst]
                        .domestic_nodes
                        .iter()
                        .filter_map(|a| pg.index.get(a))
                        .map(|&i| best[i])
                        .min()
                        .filter(|&d| d != u32::MAX);
                    ((src, dst), d)
                })
                .collect()
        })
        .collect();
    PathMatrix {
        countries,
        entries: rows.into_iter().flatten().collect(),
    }
}

/// Classifies a label for callers that only need to know whether it is
/// usable in policy routing.
pub fn is_routable(label: EdgeLabel) -> bool {
    !matches!(label, EdgeLabel::Unknown)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_rel_str;
    use crate::topology::{Edge, EdgeSource};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(text: &str) -> AsGraph {
        AsGraph::build_global(&parse_rel_str(text, "t").unwrap(), &[])
    }

    fn cc(s: &str) -> CountryCode {
        CountryCode::new(s).unwrap()
    }

    /// Reachability by repeated DFS along provider-to-customer edges.
    fn naive_cone(g: &AsGraph, a: Asn) -> BTreeSet<Asn> {
        let mut seen = BTreeSet::from([a]);
        let mut stack = vec![a];
        while let Some(v) = stack.pop() {
            for c in g.customers(v) {
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        seen
    }

    #[test]
    fn chain_cone() {
        let g = graph("1|2|-1\n2|3|-1\n");
        let cones = customer_cones(&g);
        assert_eq!(cones.cone(1).unwrap(), &BTreeSet::from([1, 2, 3]));
        assert_eq!(cones.size(2), 2);
        assert_eq!(cones.size(3), 1);
    }

    #[test]
    fn peering_only_cones_are_singletons() {
        let g = graph("1|2|0\n2|3|0\n3|1|0\n");
        let cones = customer_cones(&g);
        for a in [1, 2, 3] {
            assert_eq!(cones.cone(a).unwrap(), &BTreeSet::from([a]));
        }
    }

    #[test]
    fn cycle_members_share_a_cone() {
        let g = graph("1|2|-1\n2|3|-1\n3|1|-1\n3|4|-1\n");
        let cones = customer_cones(&g);
        for a in [1, 2, 3] {
            assert_eq!(cones.cone(a).unwrap(), &BTreeSet::from([1, 2, 3, 4]));
        }
        assert_eq!(cones.size(4), 1);
    }

    #[test]
    fn random_dags_match_naive_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let mut text = String::new();
            for a in 1..=10u32 {
                for b in (a + 1)..=10 {
                    if rng.random_bool(0.25) {
                        text.push_str(&format!("{a}|{b}|{}\n", if rng.random_bool(0.7) { -1 } else { 0 }));
                    }
                }
            }
            let g = graph(&text);
            let cones = customer_cones(&g);
            for a in g.nodes() {
                assert_eq!(cones.cone(a).unwrap(), &naive_cone(&g, a));
            }
        }
    }

    #[test]
    fn rank_tie_breaks() {
        // cones A=3, B=1, C=1; deg(B)=2 > deg(C)=1
        let g = graph("10|20|-1\n10|30|-1\n20|40|0\n");
        let cones = customer_cones(&g);
        let rank = as_rank(&g, &cones);
        assert_eq!(rank, vec![10, 20, 30, 40]);
        let flat = graph("5|3|0\n1|2|0\n4|6|0\n");
        assert_eq!(as_rank(&flat, &customer_cones(&flat)), vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn tiers_group_equal_keys() {
        let g = graph("10|20|0\n10|30|0\n20|40|0\n");
        assert_eq!(rank_tiers(&g, &customer_cones(&g)), vec![vec![10, 20], vec![30, 40]]);
        let h = graph("1|2|-1\n1|3|-1\n4|5|-1\n4|6|-1\n");
        assert_eq!(rank_tiers(&h, &customer_cones(&h)), vec![vec![1, 4], vec![2, 3, 5, 6]]);
    }

    #[test]
    fn random_rank_matches_reference_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut text = String::new();
        for a in 1..=20u32 {
            for b in (a + 1)..=20 {
                if rng.random_bool(0.15) {
                    text.push_str(&format!("{a}|{b}|{}\n", if rng.random_bool(0.6) { -1 } else { 0 }));
                }
            }
        }
        let g = graph(&text);
        let cones = customer_cones(&g);
        let mut keyed: Vec<(i64, i64, Asn)> = g
            .nodes()
            .map(|a| (-(naive_cone(&g, a).len() as i64), -(g.degree(a) as i64), a))
            .collect();
        keyed.sort();
        let expected: Vec<Asn> = keyed.into_iter().map(|k| k.2).collect();
        assert_eq!(as_rank(&g, &cones), expected);
    }

    #[test]
    fn removing_top_ranked_never_grows_cones() {
        let g = graph("1|2|-1\n1|3|-1\n2|4|-1\n3|4|-1\n4|5|-1\n2|3|0\n");
        let cones = customer_cones(&g);
        let top = as_rank(&g, &cones)[0];
        let mut reduced = AsGraph::new();
        for ((a, b), e) in g.edges() {
            if a != top && b != top {
                reduced.insert_edge(a, b, *e);
            }
        }
        let after = customer_cones(&reduced);
        for (a, cone) in after.iter() {
            assert!(cone.len() <= cones.size(a));
        }
    }

    #[test]
    fn peer_then_down_reaches_target() {
        // B customer of A, D peer of A, E customer of D
        let (a, b, d, e) = (1, 2, 4, 5);
        let g = graph(&format!("{a}|{b}|-1\n{a}|{d}|0\n{d}|{e}|-1\n"));
        let dist = valley_free_distances(&g, &BTreeSet::from([b]));
        assert_eq!(dist.get(e), Some(3));
        assert_eq!(dist.get(b), Some(0));
    }

    #[test]
    fn peer_then_up_is_unreachable() {
        // 1 peers with 2, 2 is a customer of 3: 1 -> 2 -> 3 would be peer then up
        let g = graph("1|2|0\n3|2|-1\n3|4|-1\n");
        let dist = valley_free_distances(&g, &BTreeSet::from([1]));
        assert_eq!(dist.get(2), Some(1));
        assert_eq!(dist.get(3), None);
        assert_eq!(dist.get(4), None);
    }

    #[test]
    fn unknown_edges_are_not_traversed() {
        let mut g = graph("1|2|-1\n");
        g.insert_edge(
            2,
            3,
            Edge {
                label: EdgeLabel::Unknown,
                source: EdgeSource::Traceroute,
            },
        );
        let dist = valley_free_distances(&g, &BTreeSet::from([1]));
        assert_eq!(dist.get(3), None);
        assert!(!is_routable(g.edge(2, 3).unwrap().label));
    }

    #[test]
    fn two_country_matrix() {
        let mut g = graph("1|2|-1\n3|4|0\n");
        for (a, c) in [(1, "AA"), (2, "BB"), (3, "CC"), (4, "CC")] {
            g.set_country(a, cc(c));
        }
        let views: BTreeMap<_, _> = ["AA", "BB", "CC"]
            .iter()
            .map(|c| (cc(c), g.country_view(cc(c)).unwrap()))
            .collect();
        let m = country_path_matrix(&g, &views);
        assert_eq!(m.get(cc("AA"), cc("BB")), Some(1));
        assert_eq!(m.get(cc("BB"), cc("AA")), Some(1));
        assert_eq!(m.get(cc("CC"), cc("AA")), None);
        assert_eq!(m.row_max(cc("CC")), None);
        assert_eq!(m.row_max(cc("AA")), Some(1));
        assert!(m.to_delimited().contains("CC,AA,UNREACHABLE\n"));
    }
}
