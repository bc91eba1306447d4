//! Per-country topology features and min-max scaling.
//!
//! Features, in column order:
//!
//! | column | meaning |
//! |---|---|
//! | f1_num_nodes .. f2_num_edges | size of the domestic graph |
//! | f3_percentile_degree | 95th percentile of domestic degrees |
//! | f4_diameter | diameter of the largest domestic component |
//! | f5_avg_h_im | mean horizontal imbalance of ASes with 2+ customers |
//! | f6_max_load_cen | maximum load centrality |
//! | f7_avg_clustering | mean clustering coefficient |
//! | f8_graph_clique_number | largest clique |
//! | f9_alg_conn, f10_frac_conn | robustness AUCs under AS-rank removal |
//! | f11_transitivity | global transitivity |
//! | f12a_num_large_nodes | nodes with degree at or above a threshold |
//! | f12b_max_path_len | longest valley-free distance to another country |
//! | f13_num_intl_countries, f14_num_intl_nodes | border connectivity |
//! | f15_ip_density, f16_num_announced_ip | addresses per person, announced prefixes |
//! | f17..f20 | large providers, cone percentile, stubs, p2p edges |

mod graph;
mod scale;
mod spectral;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use graph::{
    average_clustering, clique_number, diameter, load_centrality, max_load_centrality, percentile, transitivity,
    SimpleGraph,
};
pub use scale::{assemble_and_scale, FeatureMatrix};
pub use spectral::{
    algebraic_connectivity, algebraic_connectivity_with, robustness_auc, RobustnessCurve, RobustnessMetric,
    EIGEN_TOLERANCE,
};

use crate::bgpsim::{CustomerCones, PathMatrix};
use crate::ingest::{CountryRecord, PrefixOrigin};
use crate::topology::{AsGraph, CountryView, EdgeLabel};
use crate::types::{Asn, CountryCode, Ipv4Net};

pub const NUM_FEATURES: usize = 21;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "f1_num_nodes",
    "f2_num_edges",
    "f3_percentile_degree",
    "f4_diameter",
    "f5_avg_h_im",
    "f6_max_load_cen",
    "f7_avg_clustering",
    "f8_graph_clique_number",
    "f9_alg_conn",
    "f10_frac_conn",
    "f11_transitivity",
    "f12a_num_large_nodes",
    "f12b_max_path_len",
    "f13_num_intl_countries",
    "f14_num_intl_nodes",
    "f15_ip_density",
    "f16_num_announced_ip",
    "f17_num_large_providers",
    "f18_percentile_cust_cone",
    "f19_stub_ases",
    "f20_tot_peer_edges",
];

/// Column index of a feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
#[repr(usize)]
pub enum Feature {
    NumNodes,
    NumEdges,
    PercentileDegree,
    Diameter,
    AvgHorizontalImbalance,
    MaxLoadCentrality,
    AvgClustering,
    CliqueNumber,
    AlgebraicConnectivityAuc,
    ComponentFractionAuc,
    Transitivity,
    NumLargeNodes,
    MaxPathLen,
    NumIntlCountries,
    NumIntlNodes,
    IpDensity,
    NumAnnouncedPrefixes,
    NumLargeProviders,
    PercentileCustomerCone,
    StubAses,
    PeerEdges,
}

impl Feature {
    pub fn name(self) -> &'static str {
        FEATURE_NAMES[self as usize]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Degree at or above which a node counts as large.
    pub large_node_threshold: usize,
    /// Fraction of nodes removed for the robustness curves.
    pub removal_depth: f64,
    /// Cone size above which an AS counts as a large provider.
    pub large_provider_cone: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            large_node_threshold: 10,
            removal_depth: 0.3,
            large_provider_cone: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub country: CountryCode,
    pub values: [f64; NUM_FEATURES],
    /// Notes on interpreted or substituted values.
    pub flags: Vec<String>,
}

impl FeatureVector {
    pub fn new(country: CountryCode) -> Self {
        FeatureVector {
            country,
            values: [0.0; NUM_FEATURES],
            flags: Vec::new(),
        }
    }

    pub fn get(&self, f: Feature) -> f64 {
        self.values[f as usize]
    }

    pub fn set(&mut self, f: Feature, v: f64) {
        self.values[f as usize] = v;
    }
}

/// f1-f4, f6-f11 and f12a from the domestic graph.
pub fn structural_features(view: &CountryView, cfg: &FeatureConfig, out: &mut FeatureVector) {
    let g = SimpleGraph::from_view(view);
    if g.n() == 0 {
        out.flags.push("empty domestic graph".to_string());
        for f in [
            Feature::NumNodes,
            Feature::NumEdges,
            Feature::PercentileDegree,
            Feature::Diameter,
            Feature::MaxLoadCentrality,
            Feature::AvgClustering,
            Feature::CliqueNumber,
            Feature::Transitivity,
            Feature::NumLargeNodes,
        ] {
            out.set(f, 0.0);
        }
        return;
    }
    let degrees: Vec<f64> = (0..g.n()).map(|v| g.degree(v) as f64).collect();
    out.set(Feature::NumNodes, g.n() as f64);
    out.set(Feature::NumEdges, g.m() as f64);
    out.set(Feature::PercentileDegree, percentile(&degrees, 95.0));
    out.set(Feature::Diameter, diameter(&g) as f64);
    out.set(Feature::MaxLoadCentrality, max_load_centrality(&g));
    out.set(Feature::AvgClustering, average_clustering(&g));
    out.set(Feature::CliqueNumber, clique_number(&g) as f64);
    out.set(Feature::Transitivity, transitivity(&g));
    let large = (0..g.n()).filter(|&v| g.degree(v) >= cfg.large_node_threshold).count();
    out.set(Feature::NumLargeNodes, large as f64);
}

/// f9 and f10: removal by AS rank tier, restricted to domestic ASes.
pub fn robustness_features(view: &CountryView, tiers: &[Vec<Asn>], cfg: &FeatureConfig, out: &mut FeatureVector) {
    let g = SimpleGraph::from_view(view);
    let order: Vec<Vec<Asn>> = tiers
        .iter()
        .map(|t| {
            t.iter()
                .copied()
                .filter(|a| view.domestic_nodes.contains(a))
                .collect::<Vec<_>>()
        })
        .filter(|t| !t.is_empty())
        .collect();
    let alg = robustness_auc(&g, &order, RobustnessMetric::AlgebraicConnectivity, cfg.removal_depth);
    let frac = robustness_auc(
        &g,
        &order,
        RobustnessMetric::LargestComponentFraction,
        cfg.removal_depth,
    );
    out.set(Feature::AlgebraicConnectivityAuc, alg.auc);
    out.set(Feature::ComponentFractionAuc, frac.auc);
}

/// Mean over domestic ASes with at least two customers of
/// `(max - min) / sum` of their customers' cone sizes; 0 when there are none.
pub fn horizontal_imbalance_avg(g: &AsGraph, domestic: &BTreeSet<Asn>, cones: &CustomerCones) -> f64 {
    let per_node: Vec<f64> = domestic
        .iter()
        .filter_map(|&a| {
            let sizes: Vec<usize> = g.customers(a).map(|c| cones.size(c)).collect();
            if sizes.len() < 2 {
                return None;
            }
            let max = *sizes.iter().max().unwrap() as f64;
            let min = *sizes.iter().min().unwrap() as f64;
            let sum: usize = sizes.iter().sum();
            Some((max - min) / sum as f64)
        })
        .collect();
    if per_node.is_empty() {
        0.0
    } else {
        per_node.iter().sum::<f64>() / per_node.len() as f64
    }
}

/// f12b, f13, f14. An all-unreachable row takes `global max + 1` and is flagged.
pub fn international_features(view: &CountryView, g: &AsGraph, paths: &PathMatrix, out: &mut FeatureVector) {
    let foreign: BTreeSet<CountryCode> = view
        .border_edges
        .iter()
        .filter_map(|&(_, f)| g.country_of(f))
        .filter(|&c| c != view.country)
        .collect();
    let gateways: BTreeSet<Asn> = view.border_edges.iter().map(|&(d, _)| d).collect();
    out.set(Feature::NumIntlCountries, foreign.len() as f64);
    out.set(Feature::NumIntlNodes, gateways.len() as f64);
    let max_len = match paths.row_max(view.country) {
        Some(d) => d as f64,
        None => {
            out.flags
                .push("no reachable foreign country; max_path_len uses sentinel".to_string());
            paths.global_max().map_or(1.0, |d| d as f64 + 1.0)
        }
    };
    out.set(Feature::MaxPathLen, max_len);
}

/// Announced space per country: distinct prefixes whose origin set contains
/// an AS registered there, with their total address count. Overlapping
/// prefixes of different lengths both count.
pub fn announced_space(
    prefixes: &[PrefixOrigin],
    country_of: impl Fn(Asn) -> Option<CountryCode>,
) -> BTreeMap<CountryCode, (u64, usize)> {
    let mut merged: BTreeMap<Ipv4Net, BTreeSet<Asn>> = BTreeMap::new();
    for p in prefixes {
        merged.entry(p.prefix).or_default().extend(p.origin.iter().copied());
    }
    let mut out: BTreeMap<CountryCode, (u64, usize)> = BTreeMap::new();
    for (prefix, origins) in merged {
        let countries: BTreeSet<CountryCode> = origins.iter().filter_map(|&a| country_of(a)).collect();
        for c in countries {
            let e = out.entry(c).or_default();
            e.0 += prefix.size();
            e.1 += 1;
        }
    }
    out
}

/// f15 and f16. Returns false (feature missing) without a population.
pub fn ip_features(
    country: &CountryRecord,
    announced: &BTreeMap<CountryCode, (u64, usize)>,
    out: &mut FeatureVector,
) -> bool {
    let Some(pop) = country.population else {
        return false;
    };
    let (addresses, count) = announced.get(&country.country).copied().unwrap_or((0, 0));
    out.set(Feature::IpDensity, addresses as f64 / pop as f64);
    out.set(Feature::NumAnnouncedPrefixes, count as f64);
    true
}

/// f5 and f17-f20, from cones on the global graph.
pub fn routing_features(
    view: &CountryView,
    g: &AsGraph,
    cones: &CustomerCones,
    cfg: &FeatureConfig,
    out: &mut FeatureVector,
) {
    let sizes: Vec<f64> = view.domestic_nodes.iter().map(|&a| cones.size(a) as f64).collect();
    let large = sizes.iter().filter(|&&s| s > cfg.large_provider_cone as f64).count();
    let stubs = view
        .domestic_nodes
        .iter()
        .filter(|&&a| g.customers(a).next().is_none())
        .count();
    let peers = view
        .domestic_edges
        .iter()
        .chain(view.border_edges.iter())
        .filter(|&&(a, b)| matches!(g.edge(a, b).map(|e| e.label), Some(EdgeLabel::PeerPeer)))
        .count();
    out.set(Feature::NumLargeProviders, large as f64);
    out.set(Feature::PercentileCustomerCone, percentile(&sizes, 95.0));
    out.set(Feature::StubAses, stubs as f64);
    out.set(Feature::PeerEdges, peers as f64);
    out.set(
        Feature::AvgHorizontalImbalance,
        horizontal_imbalance_avg(g, &view.domestic_nodes, cones),
    );
}

/// Shared inputs for computing every country's features.
pub struct FeatureContext<'a> {
    pub graph: &'a AsGraph,
    pub cones: &'a CustomerCones,
    /// AS rank tiers from [`crate::bgpsim::rank_tiers`].
    pub tiers: &'a [Vec<Asn>],
    pub paths: &'a PathMatrix,
    pub announced: &'a BTreeMap<CountryCode, (u64, usize)>,
    pub config: &'a FeatureConfig,
}

/// All features of one country, or `Err(reason)` when an input is missing.
pub fn country_features(
    ctx: &FeatureContext<'_>,
    view: &CountryView,
    record: &CountryRecord,
) -> Result<FeatureVector, String> {
    if view.is_empty() {
        return Err("no ASes registered in the country".to_string());
    }
    let mut fv = FeatureVector::new(view.country);
    if !ip_features(record, ctx.announced, &mut fv) {
        return Err("missing population".to_string());
    }
    structural_features(view, ctx.config, &mut fv);
    robustness_features(view, ctx.tiers, ctx.config, &mut fv);
    international_features(view, ctx.graph, ctx.paths, &mut fv);
    routing_features(view, ctx.graph, ctx.cones, ctx.config, &mut fv);
    Ok(fv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgpsim::{country_path_matrix, customer_cones};
    use crate::ingest::{parse_prefix2as_str, parse_rel_str};

    fn cc(s: &str) -> CountryCode {
        CountryCode::new(s).unwrap()
    }

    fn graph(text: &str, countries: &[(Asn, &str)]) -> AsGraph {
        let mut g = AsGraph::build_global(&parse_rel_str(text, "t").unwrap(), &[]);
        for &(a, c) in countries {
            g.set_country(a, cc(c));
        }
        g
    }

    #[test]
    fn triangle_country() {
        let g = graph("1|2|0\n2|3|0\n1|3|0\n", &[(1, "AA"), (2, "AA"), (3, "AA")]);
        let v = g.country_view(cc("AA")).unwrap();
        let mut fv = FeatureVector::new(cc("AA"));
        structural_features(&v, &FeatureConfig::default(), &mut fv);
        assert_eq!(fv.get(Feature::NumNodes), 3.0);
        assert_eq!(fv.get(Feature::NumEdges), 3.0);
        assert_eq!(fv.get(Feature::Diameter), 1.0);
        assert_eq!(fv.get(Feature::AvgClustering), 1.0);
        assert_eq!(fv.get(Feature::CliqueNumber), 3.0);
        assert_eq!(fv.get(Feature::Transitivity), 1.0);
    }

    #[test]
    fn empty_country_is_flagged() {
        let g = graph("1|2|0\n", &[(1, "AA"), (2, "AA"), (9, "BB")]);
        let v = g.country_view(cc("BB")).unwrap();
        let mut fv = FeatureVector::new(cc("BB"));
        structural_features(&v, &FeatureConfig::default(), &mut fv);
        assert!(fv.values.iter().all(|&x| x == 0.0));
        assert_eq!(fv.flags.len(), 1);
    }

    #[test]
    fn large_node_threshold_is_configurable() {
        let g = graph("1|2|0\n1|3|0\n1|4|0\n", &[(1, "AA"), (2, "AA"), (3, "AA"), (4, "AA")]);
        let v = g.country_view(cc("AA")).unwrap();
        let mut fv = FeatureVector::new(cc("AA"));
        let cfg = FeatureConfig {
            large_node_threshold: 3,
            ..Default::default()
        };
        structural_features(&v, &cfg, &mut fv);
        assert_eq!(fv.get(Feature::NumLargeNodes), 1.0);
    }

    #[test]
    fn imbalance() {
        let g = graph("1|2|-1\n1|3|-1\n2|4|-1\n2|5|-1\n", &[]);
        let cones = customer_cones(&g);
        // 1: customers 2 (3) and 3 (1) -> 0.5; 2: customers 4 (1) and 5 (1) -> 0
        assert_eq!(horizontal_imbalance_avg(&g, &BTreeSet::from([1]), &cones), 0.5);
        assert_eq!(horizontal_imbalance_avg(&g, &BTreeSet::from([2]), &cones), 0.0);
        assert_eq!(horizontal_imbalance_avg(&g, &BTreeSet::from([1, 2]), &cones), 0.25);
        assert_eq!(horizontal_imbalance_avg(&g, &BTreeSet::from([3, 4]), &cones), 0.0);
    }

    #[test]
    fn iran_like_border() {
        // domestic 1,2; foreign neighbours 10 (TR), 11 (TR), 12 (AE)
        let g = graph(
            "10|1|-1\n11|1|-1\n12|2|-1\n1|2|-1\n",
            &[(1, "IR"), (2, "IR"), (10, "TR"), (11, "TR"), (12, "AE")],
        );
        let views: BTreeMap<_, _> = ["IR", "TR", "AE"]
            .iter()
            .map(|c| (cc(c), g.country_view(cc(c)).unwrap()))
            .collect();
        let m = country_path_matrix(&g, &views);
        let mut fv = FeatureVector::new(cc("IR"));
        international_features(&views[&cc("IR")], &g, &m, &mut fv);
        assert_eq!(fv.get(Feature::NumIntlCountries), 2.0);
        assert_eq!(fv.get(Feature::NumIntlNodes), 2.0);
        assert_eq!(fv.get(Feature::MaxPathLen), 1.0);
        assert!(fv.flags.is_empty());
    }

    #[test]
    fn isolated_country_uses_sentinel() {
        let g = graph("1|2|-1\n3|4|0\n", &[(1, "AA"), (2, "BB"), (3, "CC"), (4, "CC")]);
        let views: BTreeMap<_, _> = ["AA", "BB", "CC"]
            .iter()
            .map(|c| (cc(c), g.country_view(cc(c)).unwrap()))
            .collect();
        let m = country_path_matrix(&g, &views);
        let mut fv = FeatureVector::new(cc("CC"));
        international_features(&views[&cc("CC")], &g, &m, &mut fv);
        assert_eq!(fv.get(Feature::MaxPathLen), 2.0);
        assert_eq!(fv.get(Feature::NumIntlCountries), 0.0);
        assert_eq!(fv.get(Feature::NumIntlNodes), 0.0);
        assert_eq!(fv.flags.len(), 1);
    }

    #[test]
    fn ip_density_and_prefix_counting() {
        let rec = CountryRecord {
            country: cc("AA"),
            fpi: 10.0,
            population: Some(256),
        };
        let prefixes = parse_prefix2as_str("1.2.3.0\t24\t1\n", "p").unwrap();
        let announced = announced_space(&prefixes, |_| Some(cc("AA")));
        let mut fv = FeatureVector::new(cc("AA"));
        assert!(ip_features(&rec, &announced, &mut fv));
        assert_eq!(fv.get(Feature::IpDensity), 1.0);
        assert_eq!(fv.get(Feature::NumAnnouncedPrefixes), 1.0);

        let none = announced_space(&[], |_| Some(cc("AA")));
        let mut fv = FeatureVector::new(cc("AA"));
        ip_features(&rec, &none, &mut fv);
        assert_eq!(fv.get(Feature::IpDensity), 0.0);
        assert_eq!(fv.get(Feature::NumAnnouncedPrefixes), 0.0);

        let overlap = parse_prefix2as_str("5.0.0.0\t16\t1\n5.0.1.0\t24\t1\n5.0.1.0\t24\t1\n", "p").unwrap();
        let ann = announced_space(&overlap, |_| Some(cc("AA")));
        assert_eq!(ann[&cc("AA")], (65536 + 256, 2));

        let missing = CountryRecord {
            population: None,
            ..rec
        };
        assert!(!ip_features(&missing, &ann, &mut FeatureVector::new(cc("AA"))));
    }

    #[test]
    fn routing_counts() {
        // chain 1>2>3 all domestic, plus p2p border edges 1-10, 2-11 and domestic p2p 1-3
        let g = graph(
            "1|2|-1\n2|3|-1\n1|10|0\n2|11|0\n1|3|0\n",
            &[(1, "AA"), (2, "AA"), (3, "AA"), (10, "BB"), (11, "CC")],
        );
        let cones = customer_cones(&g);
        let v = g.country_view(cc("AA")).unwrap();
        let mut fv = FeatureVector::new(cc("AA"));
        routing_features(&v, &g, &cones, &FeatureConfig::default(), &mut fv);
        assert!((fv.get(Feature::PercentileCustomerCone) - 2.9).abs() < 1e-12);
        assert_eq!(fv.get(Feature::StubAses), 1.0);
        assert_eq!(fv.get(Feature::NumLargeProviders), 0.0);
        assert_eq!(fv.get(Feature::PeerEdges), 3.0);
        // stubs plus ASes with customers cover every domestic node
        let with_customers = v
            .domestic_nodes
            .iter()
            .filter(|&&a| g.customers(a).next().is_some())
            .count();
        assert_eq!(
            fv.get(Feature::StubAses) as usize + with_customers,
            v.domestic_nodes.len()
        );
    }

    #[test]
    fn all_stub_country() {
        let g = graph("10|1|-1\n10|2|-1\n1|2|0\n", &[(1, "AA"), (2, "AA"), (10, "BB")]);
        let cones = customer_cones(&g);
        let v = g.country_view(cc("AA")).unwrap();
        let mut fv = FeatureVector::new(cc("AA"));
        routing_features(&v, &g, &cones, &FeatureConfig::default(), &mut fv);
        structural_features(&v, &FeatureConfig::default(), &mut fv);
        assert_eq!(fv.get(Feature::StubAses), fv.get(Feature::NumNodes));
        assert_eq!(fv.get(Feature::NumLargeProviders), 0.0);
    }
}
