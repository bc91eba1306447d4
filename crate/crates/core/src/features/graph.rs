//! Undirected simple graph and the structural metrics computed on it.

use std::collections::{BTreeMap, VecDeque};

use crate::topology::CountryView;
use crate::types::Asn;

/// Compact undirected graph with sorted adjacency lists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimpleGraph {
    pub labels: Vec<Asn>,
    pub adj: Vec<Vec<usize>>,
}

impl SimpleGraph {
    /// Self loops and repeated edges are ignored; edge endpoints missing from
    /// `nodes` are added.
    pub fn from_edges(nodes: impl IntoIterator<Item = Asn>, edges: &[(Asn, Asn)]) -> Self {
        let mut index: BTreeMap<Asn, usize> = BTreeMap::new();
        for a in nodes {
            let next = index.len();
            index.entry(a).or_insert(next);
        }
        for &(a, b) in edges {
            for x in [a, b] {
                let next = index.len();
                index.entry(x).or_insert(next);
            }
        }
        let mut labels = vec![0; index.len()];
        for (&a, &i) in &index {
            labels[i] = a;
        }
        let mut adj = vec![Vec::new(); labels.len()];
        for &(a, b) in edges {
            if a != b {
                let (i, j) = (index[&a], index[&b]);
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        SimpleGraph { labels, adj }
    }

    /// Domestic graph of a country view.
    pub fn from_view(view: &CountryView) -> Self {
        Self::from_edges(view.domestic_nodes.iter().copied(), &view.domestic_edges)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    /// Connected components, each sorted, in order of smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut comp = vec![usize::MAX; self.n()];
        let mut out = Vec::new();
        for s in 0..self.n() {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![s];
            comp[s] = id;
            let mut i = 0;
            while i < members.len() {
                let v = members[i];
                i += 1;
                for &w in &self.adj[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = id;
                        members.push(w);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Largest component; ties go to the one found first.
    pub fn largest_component(&self) -> Vec<usize> {
        let mut best: Vec<usize> = Vec::new();
        for c in self.components() {
            if c.len() > best.len() {
                best = c;
            }
        }
        best
    }

    /// Subgraph induced on `keep` (node indices into `self`).
    pub fn induced(&self, keep: &[usize]) -> SimpleGraph {
        let mut map = vec![usize::MAX; self.n()];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let labels = keep.iter().map(|&o| self.labels[o]).collect();
        let adj = keep
            .iter()
            .map(|&o| {
                let mut l: Vec<usize> = self.adj[o]
                    .iter()
                    .filter(|&&w| map[w] != usize::MAX)
                    .map(|&w| map[w])
                    .collect();
                l.sort_unstable();
                l
            })
            .collect();
        SimpleGraph { labels, adj }
    }

    fn bfs_distances(&self, s: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n()];
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &w in &self.adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    q.push_back(w);
                }
            }
        }
        dist
    }

    /// Edges among the neighbours of each node.
    pub fn triangles_per_node(&self) -> Vec<usize> {
        (0..self.n())
            .map(|v| {
                let nb = &self.adj[v];
                let mut t = 0;
                for (i, &a) in nb.iter().enumerate() {
                    for &b in &nb[i + 1..] {
                        if self.has_edge(a, b) {
                            t += 1;
                        }
                    }
                }
                t
            })
            .collect()
    }
}

/// Percentile with linear interpolation between closest ranks (rank
/// `p/100 * (n-1)` on the sorted values). Empty input gives 0.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

/// Longest shortest path within the largest connected component.
pub fn diameter(g: &SimpleGraph) -> usize {
    let lcc = g.induced(&g.largest_component());
    (0..lcc.n())
        .map(|s| {
            lcc.bfs_distances(s)
                .into_iter()
                .filter(|&d| d != usize::MAX)
                .max()
                .unwrap_or(0)
        })
        .max()
        .unwrap_or(0)
}

/// Mean local clustering coefficient; nodes with degree below 2 count as 0.
pub fn average_clustering(g: &SimpleGraph) -> f64 {
    if g.n() == 0 {
        return 0.0;
    }
    let tri = g.triangles_per_node();
    let total: f64 = (0..g.n())
        .map(|v| {
            let d = g.degree(v) as f64;
            if d < 2.0 {
                0.0
            } else {
                2.0 * tri[v] as f64 / (d * (d - 1.0))
            }
        })
        .sum();
    total / g.n() as f64
}

/// `3 * triangles / connected triples`, 0 without triples.
pub fn transitivity(g: &SimpleGraph) -> f64 {
    let closed: usize = g.triangles_per_node().iter().sum();
    let triples: usize = (0..g.n())
        .map(|v| g.degree(v) * g.degree(v).saturating_sub(1) / 2)
        .sum();
    if triples == 0 {
        0.0
    } else {
        closed as f64 / triples as f64
    }
}

/// Size of the largest clique (Bron-Kerbosch with Tomita pivoting over a
/// degeneracy ordering).
pub fn clique_number(g: &SimpleGraph) -> usize {
    if g.n() == 0 {
        return 0;
    }
    let order = degeneracy_order(g);
    let mut pos = vec![0; g.n()];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    let mut best = 1;
    for &v in &order {
        let p: Vec<usize> = g.adj[v].iter().copied().filter(|&w| pos[w] > pos[v]).collect();
        let x: Vec<usize> = g.adj[v].iter().copied().filter(|&w| pos[w] < pos[v]).collect();
        if p.len() + 1 > best {
            expand(g, 1, p, x, &mut best);
        }
    }
    best
}

fn intersect_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn expand(g: &SimpleGraph, size: usize, mut p: Vec<usize>, mut x: Vec<usize>, best: &mut usize) {
    p.sort_unstable();
    x.sort_unstable();
    if p.is_empty() {
        *best = (*best).max(size);
        return;
    }
    if size + p.len() <= *best {
        return;
    }
    let pivot = p
        .iter()
        .chain(x.iter())
        .copied()
        .max_by_key(|&u| intersect_sorted(&g.adj[u], &p).len())
        .unwrap();
    let candidates: Vec<usize> = p.iter().copied().filter(|v| !g.has_edge(pivot, *v)).collect();
    for v in candidates {
        let np = intersect_sorted(&p, &g.adj[v]);
        let nx = intersect_sorted(&x, &g.adj[v]);
        expand(g, size + 1, np, nx, best);
        p.retain(|&w| w != v);
        let at = x.binary_search(&v).unwrap_or_else(|e| e);
        x.insert(at, v);
    }
}

fn degeneracy_order(g: &SimpleGraph) -> Vec<usize> {
    let n = g.n();
    let mut deg: Vec<usize> = (0..n).map(|v| g.degree(v)).collect();
    let maxd = deg.iter().copied().max().unwrap_or(0);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); maxd + 1];
    for v in 0..n {
        buckets[deg[v]].push(v);
    }
    let mut removed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut d = 0;
    while order.len() < n {
        d = d.min(maxd);
        while buckets[d].is_empty() {
            d += 1;
        }
        let v = buckets[d].pop().unwrap();
        if removed[v] || deg[v] != d {
            continue;
        }
        removed[v] = true;
        order.push(v);
        for &w in &g.adj[v] {
            if !removed[w] {
                deg[w] -= 1;
                buckets[deg[w]].push(w);
                d = d.min(deg[w]);
            }
        }
    }
    order
}

/// Betweenness-style load per node (Brandes shortest-path counting),
/// normalized within each component by `(n-1)(n-2)/2` pairs. Components with
/// fewer than three nodes contribute 0.
pub fn load_centrality(g: &SimpleGraph) -> Vec<f64> {
    let n = g.n();
    let mut cent = vec![0.0; n];
    let mut comp_size = vec![0usize; n];
    for c in g.components() {
        for &v in &c {
            comp_size[v] = c.len();
        }
    }
    let mut sigma = vec![0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0f64; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in 0..n {
        if comp_size[s] < 3 {
            continue;
        }
        let mut order = Vec::new();
        let mut q = VecDeque::from([s]);
        sigma[s] = 1.0;
        dist[s] = 0;
        while let Some(v) = q.pop_front() {
            order.push(v);
            for &w in &g.adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    q.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cent[w] += delta[w];
            }
        }
        for &v in &order {
            sigma[v] = 0.0;
            dist[v] = usize::MAX;
            delta[v] = 0.0;
            preds[v].clear();
        }
    }
    for v in 0..n {
        let k = comp_size[v] as f64;
        if comp_size[v] >= 3 {
            // each unordered pair was counted from both ends
            cent[v] = cent[v] / 2.0 / ((k - 1.0) * (k - 2.0) / 2.0);
        }
    }
    cent
}

pub fn max_load_centrality(g: &SimpleGraph) -> f64 {
    load_centrality(g).into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn graph(n: usize, edges: &[(u32, u32)]) -> SimpleGraph {
        SimpleGraph::from_edges(0..n as u32, edges)
    }

    pub fn complete(n: u32) -> SimpleGraph {
        let mut e = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                e.push((a, b));
            }
        }
        graph(n as usize, &e)
    }

    pub fn path(n: u32) -> SimpleGraph {
        let e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        graph(n as usize, &e)
    }

    pub fn random(n: usize, p: f64, seed: u64) -> SimpleGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e = Vec::new();
        for a in 0..n as u32 {
            for b in (a + 1)..n as u32 {
                if rng.random_bool(p) {
                    e.push((a, b));
                }
            }
        }
        graph(n, &e)
    }

    // slow references

    #[allow(clippy::needless_range_loop)]
    fn all_pairs(g: &SimpleGraph) -> Vec<Vec<usize>> {
        // Floyd-Warshall
        let n = g.n();
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for v in 0..n {
            d[v][v] = 0;
            for &w in &g.adj[v] {
                d[v][w] = 1;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    fn brute_clique(g: &SimpleGraph) -> usize {
        let n = g.n();
        let mut best = if n > 0 { 1 } else { 0 };
        for mask in 1u32..(1 << n) {
            let nodes: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            if nodes.len() <= best {
                continue;
            }
            let ok = nodes
                .iter()
                .enumerate()
                .all(|(i, &a)| nodes[i + 1..].iter().all(|&b| g.has_edge(a, b)));
            if ok {
                best = nodes.len();
            }
        }
        best
    }

    fn brute_triangles(g: &SimpleGraph) -> (usize, usize) {
        let n = g.n();
        let mut tri = 0;
        let mut triples = 0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if a != b && b != c && a != c && g.has_edge(a, b) && g.has_edge(b, c) {
                        // path a-b-c centred at b, counted for both orientations
                        triples += 1;
                        if g.has_edge(a, c) {
                            tri += 1;
                        }
                    }
                }
            }
        }
        (tri / 6, triples / 2)
    }

    /// Fraction of shortest paths through each node, enumerated path by path.
    #[allow(clippy::needless_range_loop)]
    fn brute_betweenness(g: &SimpleGraph) -> Vec<f64> {
        let n = g.n();
        let d = all_pairs(g);
        let inf = usize::MAX / 4;
        let mut cent = vec![0.0; n];
        fn paths(g: &SimpleGraph, d: &[Vec<usize>], s: usize, t: usize) -> Vec<Vec<usize>> {
            if s == t {
                return vec![vec![t]];
            }
            let mut out = Vec::new();
            for &w in &g.adj[s] {
                if d[w][t] + 1 == d[s][t] {
                    for mut p in paths(g, d, w, t) {
                        p.insert(0, s);
                        out.push(p);
                    }
                }
            }
            out
        }
        let comps = g.components();
        let mut size = vec![0; n];
        for c in &comps {
            for &v in c {
                size[v] = c.len();
            }
        }
        for s in 0..n {
            for t in (s + 1)..n {
                if d[s][t] >= inf {
                    continue;
                }
                let ps = paths(g, &d, s, t);
                for v in 0..n {
                    if v == s || v == t {
                        continue;
                    }
                    let through = ps.iter().filter(|p| p.contains(&v)).count();
                    cent[v] += through as f64 / ps.len() as f64;
                }
            }
        }
        for v in 0..n {
            let k = size[v] as f64;
            cent[v] = if size[v] < 3 {
                0.0
            } else {
                cent[v] / ((k - 1.0) * (k - 2.0) / 2.0)
            };
        }
        cent
    }

    #[test]
    fn triangle_closed_forms() {
        let g = complete(3);
        assert_eq!((g.n(), g.m()), (3, 3));
        assert_eq!(diameter(&g), 1);
        assert_eq!(average_clustering(&g), 1.0);
        assert_eq!(clique_number(&g), 3);
        assert_eq!(transitivity(&g), 1.0);
    }

    #[test]
    fn path_closed_forms() {
        let g = path(5);
        assert_eq!(diameter(&g), 4);
        assert_eq!(transitivity(&g), 0.0);
        assert_eq!(clique_number(&g), 2);
        assert_eq!(average_clustering(&g), 0.0);
    }

    #[test]
    fn star_center_carries_all_load() {
        let g = graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let c = load_centrality(&g);
        assert_eq!(c[0], 1.0);
        assert_eq!(max_load_centrality(&g), 1.0);
        assert_eq!(max_load_centrality(&complete(6)), 0.0);
        assert_eq!(max_load_centrality(&path(2)), 0.0);
    }

    #[test]
    fn diameter_uses_largest_component() {
        // component {0..3} is a path of length 3, {4,5} an edge
        let g = graph(6, &[(0, 1), (1, 2), (2, 3), (4, 5)]);
        assert_eq!(diameter(&g), 3);
        assert_eq!(diameter(&SimpleGraph::default()), 0);
    }

    #[test]
    fn percentile_interpolates() {
        assert!((percentile(&[3.0, 2.0, 1.0], 95.0) - 2.9).abs() < 1e-12);
        assert_eq!(percentile(&[4.0], 95.0), 4.0);
        assert_eq!(percentile(&[], 95.0), 0.0);
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 50.0), 3.0);
    }

    #[test]
    fn random_graphs_match_slow_references() {
        for seed in 0..12 {
            let g = random(12, 0.3, seed);
            let d = all_pairs(&g);
            let lcc = g.largest_component();
            let expected_diam = lcc
                .iter()
                .flat_map(|&a| lcc.iter().map(move |&b| (a, b)))
                .map(|(a, b)| d[a][b])
                .max()
                .unwrap_or(0);
            assert_eq!(diameter(&g), expected_diam, "seed {seed}");
            assert_eq!(clique_number(&g), brute_clique(&g), "seed {seed}");
            let (tri, triples) = brute_triangles(&g);
            let t = if triples == 0 {
                0.0
            } else {
                3.0 * tri as f64 / triples as f64
            };
            assert!((transitivity(&g) - t).abs() < 1e-12);
            let lc = load_centrality(&g);
            for (a, b) in lc.iter().zip(brute_betweenness(&g)) {
                assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");
            }
            // clustering from the definition
            let mut cc = 0.0;
            for v in 0..g.n() {
                let nb = &g.adj[v];
                let k = nb.len();
                if k >= 2 {
                    let links = nb
                        .iter()
                        .flat_map(|&a| nb.iter().map(move |&b| (a, b)))
                        .filter(|&(a, b)| a < b && g.has_edge(a, b))
                        .count();
                    cc += links as f64 / (k * (k - 1) / 2) as f64;
                }
            }
            assert!((average_clustering(&g) - cc / g.n() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn relabeling_does_not_change_metrics() {
        let g = random(12, 0.35, 99);
        let mut edges = Vec::new();
        for v in 0..g.n() {
            for &w in &g.adj[v] {
                if v < w {
                    edges.push((1000 - v as u32 * 7, 1000 - w as u32 * 7));
                }
            }
        }
        let h = SimpleGraph::from_edges((0..12).map(|v| 1000 - v * 7), &edges);
        assert_eq!(diameter(&g), diameter(&h));
        assert_eq!(clique_number(&g), clique_number(&h));
        assert!((transitivity(&g) - transitivity(&h)).abs() < 1e-12);
        assert!((max_load_centrality(&g) - max_load_centrality(&h)).abs() < 1e-12);
    }
}
