//! End-to-end stages behind the command line tool.
//!
//! Every stage writes plain-text artifacts under the output directory. Output
//! depends only on the inputs and the configuration, so reruns are
//! byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bgpsim::{country_path_matrix, customer_cones, rank_tiers, PathMatrix};
use crate::error::{Error, Result};
use crate::features::{
    announced_space, assemble_and_scale, country_features, FeatureConfig, FeatureContext, FeatureMatrix,
};
use crate::ingest::{
    parse_country_table, parse_delegations, parse_ixp_prefixes, parse_prefix2as, parse_rel_file, CountryRecord,
    PrefixOrigin,
};
use crate::ml::{fit_model, loocv, Dataset, LassoParams, Model, ModelKind, ModelSpec, PredictionReport, TreeParams};
use crate::topology::{AsGraph, CountryView, MergeReport};
use crate::traceroute::{
    evaluate_campaign, extract_edges, infer_relationships, normalize, to_as_path, CampaignState, Inference, IpToAs,
    MeasurementKind,
};
use crate::types::{Asn, CountryCode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub relationships: PathBuf,
    pub delegations: PathBuf,
    pub prefix2as: PathBuf,
    pub ixp_prefixes: PathBuf,
    pub countries: PathBuf,
    #[serde(default)]
    pub traceroutes: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathGraph {
    #[default]
    Caida,
    Augmented,
}

impl std::str::FromStr for PathGraph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "caida" => Ok(PathGraph::Caida),
            "augmented" => Ok(PathGraph::Augmented),
            _ => Err(Error::Config(format!("unknown path graph {s:?}"))),
        }
    }
}

fn default_exclude() -> BTreeSet<CountryCode> {
    ["US", "RU", "SC", "NL"]
        .iter()
        .map(|c| CountryCode::new(c).unwrap())
        .collect()
}

fn default_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_seed() -> u64 {
    42
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub inputs: Inputs,
    #[serde(default = "default_exclude")]
    pub exclude: BTreeSet<CountryCode>,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub path_graph: PathGraph,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub lasso: LassoParams,
    #[serde(default)]
    pub tree: TreeParams,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl PipelineConfig {
    /// Parses a TOML config. Relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.inputs.relationships);
        fix(&mut cfg.inputs.delegations);
        fix(&mut cfg.inputs.prefix2as);
        fix(&mut cfg.inputs.ixp_prefixes);
        fix(&mut cfg.inputs.countries);
        if let Some(t) = cfg.inputs.traceroutes.as_mut() {
            fix(t);
        }
        fix(&mut cfg.out);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Checks that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        let i = &self.inputs;
        let required = [
            &i.relationships,
            &i.delegations,
            &i.prefix2as,
            &i.ixp_prefixes,
            &i.countries,
        ];
        for p in required.into_iter().chain(i.traceroutes.as_ref()) {
            if !p.is_file() {
                return Err(Error::Config(format!("input {} does not exist", p.display())));
            }
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models selected".to_string()));
        }
        Ok(())
    }

    pub fn model_spec(&self, kind: ModelKind) -> ModelSpec {
        ModelSpec {
            kind,
            lasso: self.lasso.clone(),
            tree: self.tree.clone(),
            seed: self.seed,
        }
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

/// Parsed inputs and the global graph built from them.
pub struct Built {
    pub graph: AsGraph,
    pub prefixes: Vec<PrefixOrigin>,
    pub countries: Vec<CountryRecord>,
    pub warnings: Vec<String>,
}

pub fn build(cfg: &PipelineConfig) -> Result<Built> {
    cfg.validate()?;
    let rels = parse_rel_file(&cfg.inputs.relationships)?;
    let delegations = parse_delegations(&cfg.inputs.delegations)?;
    let prefixes = parse_prefix2as(&cfg.inputs.prefix2as)?;
    let countries = parse_country_table(&cfg.inputs.countries)?;
    let warnings = delegations.warnings.iter().map(|w| w.to_string()).collect();
    Ok(Built {
        graph: AsGraph::build_global(&rels, &delegations.records),
        prefixes,
        countries,
        warnings,
    })
}

/// Views of every country that has at least one registered AS.
pub fn country_views(g: &AsGraph) -> BTreeMap<CountryCode, CountryView> {
    g.assigned_countries()
        .into_iter()
        .map(|c| (c, g.country_view(c).expect("assigned country has a view")))
        .collect()
}

fn country_summary(views: &BTreeMap<CountryCode, CountryView>) -> String {
    let mut out = String::from("country,nodes,domestic_edges,border_edges\n");
    for (c, v) in views {
        let _ = writeln!(
            out,
            "{c},{},{},{}",
            v.domestic_nodes.len(),
            v.domestic_edges.len(),
            v.border_edges.len()
        );
    }
    out
}

fn lines(items: &[String]) -> String {
    items.iter().map(|w| format!("{w}\n")).collect()
}

/// Parses the inputs and writes `graph.txt`, `countries.csv` and `warnings.txt`.
pub fn cmd_build(cfg: &PipelineConfig) -> Result<Built> {
    let built = build(cfg)?;
    let dir = cfg.out.join("build");
    write(&dir, "graph.txt", &built.graph.to_edge_list())?;
    write(&dir, "countries.csv", &country_summary(&country_views(&built.graph)))?;
    write(&dir, "warnings.txt", &lines(&built.warnings))?;
    Ok(built)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Campaign {
    pub kind: MeasurementKind,
    pub country: CountryCode,
    pub batches: Vec<u32>,
    pub state: CampaignState,
}

/// Result of processing the traceroute file against the global graph.
#[derive(Clone, Debug)]
pub struct TraceResult {
    pub augmented: AsGraph,
    pub merge: MergeReport,
    pub inference: Inference,
    /// Distinct new edges seen in measurements of each kind.
    pub per_kind: BTreeMap<MeasurementKind, usize>,
    pub campaigns: Vec<Campaign>,
    pub records: usize,
    pub skipped: usize,
    pub empty_paths: usize,
    pub warnings: Vec<String>,
}

impl TraceResult {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("kind,new_edges\n");
        for k in MeasurementKind::ALL {
            let _ = writeln!(out, "{},{}", k.name(), self.per_kind.get(&k).copied().unwrap_or(0));
        }
        let _ = writeln!(out, "Total,{}", self.merge.total_new());
        out
    }

    pub fn campaigns_csv(&self) -> String {
        let mut out = String::from("kind,country,batch,new_edges,status\n");
        for c in &self.campaigns {
            for (i, (&b, &n)) in c.batches.iter().zip(&c.state.new_edges).enumerate() {
                let status = if c.state.stopped && i + 1 == c.state.new_edges.len() {
                    "stopped"
                } else {
                    "running"
                };
                let _ = writeln!(out, "{},{},{b},{n},{status}", c.kind.name(), c.country);
            }
            for &b in &c.batches[c.state.new_edges.len()..] {
                let _ = writeln!(out, "{},{},{b},,ignored", c.kind.name(), c.country);
            }
        }
        out
    }

    pub fn stats_csv(&self) -> String {
        format!(
            "records,{}\nskipped,{}\nempty_paths,{}\n",
            self.records, self.skipped, self.empty_paths
        )
    }
}

/// Campaign rounds grouped by kind and measured country (the source for
/// Inside-Out, the destination for Outside-In), ordered by batch size. An
/// edge counts as new in the first round that sees it.
fn campaigns(paths: &[(CountryCode, CountryCode, crate::traceroute::AsPathRecord)], g: &AsGraph) -> Vec<Campaign> {
    type Rounds = BTreeMap<u32, BTreeSet<(Asn, Asn)>>;
    let mut groups: BTreeMap<(MeasurementKind, CountryCode), Rounds> = BTreeMap::new();
    for (src, dst, p) in paths {
        let country = match p.kind {
            MeasurementKind::InsideOut => *src,
            MeasurementKind::OutsideIn => *dst,
            MeasurementKind::Mesh => continue,
        };
        let Some(batch) = p.batch else { continue };
        groups
            .entry((p.kind, country))
            .or_default()
            .entry(batch)
            .or_default()
            .extend(extract_edges(p, g));
    }
    groups
        .into_iter()
        .map(|((kind, country), rounds)| {
            let mut seen = BTreeSet::new();
            let counts: Vec<usize> = rounds
                .values()
                .map(|edges| edges.iter().filter(|e| seen.insert(**e)).count())
                .collect();
            Campaign {
                kind,
                country,
                batches: rounds.keys().copied().collect(),
                state: evaluate_campaign(&counts),
            }
        })
        .collect()
}

/// Maps traceroutes to AS paths, infers relationships of new edges and merges
/// them into `g`. Without a traceroute file the graph is returned unchanged.
pub fn traces(cfg: &PipelineConfig, built: &Built) -> Result<TraceResult> {
    let g = &built.graph;
    let Some(path) = &cfg.inputs.traceroutes else {
        let (augmented, merge) = g.merge_edges(&[]);
        return Ok(TraceResult {
            augmented,
            merge,
            inference: infer_relationships(&[], g),
            per_kind: BTreeMap::new(),
            campaigns: Vec::new(),
            records: 0,
            skipped: 0,
            empty_paths: 0,
            warnings: Vec::new(),
        });
    };
    let normalized = normalize(path)?;
    let ixp = parse_ixp_prefixes(&cfg.inputs.ixp_prefixes)?;
    let lookup = IpToAs::new(&built.prefixes, &ixp);
    let mut warnings: Vec<String> = normalized.warnings.iter().map(|w| w.to_string()).collect();
    let mut paths = Vec::new();
    let mut empty_paths = 0;
    for t in &normalized.records {
        match to_as_path(t, &lookup) {
            Ok(p) => paths.push((t.src_country, t.dst_country, p)),
            Err(e) => {
                empty_paths += 1;
                warnings.push(e.to_string());
            }
        }
    }
    let mut per_kind_edges: BTreeMap<MeasurementKind, BTreeSet<(Asn, Asn)>> = BTreeMap::new();
    for (_, _, p) in &paths {
        per_kind_edges.entry(p.kind).or_default().extend(extract_edges(p, g));
    }
    let as_paths: Vec<_> = paths.iter().map(|(_, _, p)| p.clone()).collect();
    let inference = infer_relationships(&as_paths, g);
    let new: Vec<_> = inference
        .constraints
        .iter()
        .filter(|c| !g.has_edge(c.pair.0, c.pair.1))
        .map(|c| (c.pair.0, c.pair.1, c.allowed))
        .collect();
    let (augmented, merge) = g.merge_edges(&new);
    Ok(TraceResult {
        augmented,
        merge,
        inference,
        per_kind: per_kind_edges.into_iter().map(|(k, s)| (k, s.len())).collect(),
        campaigns: campaigns(&paths, g),
        records: normalized.records.len(),
        skipped: normalized.skipped,
        empty_paths,
        warnings,
    })
}

pub fn cmd_traces(cfg: &PipelineConfig) -> Result<TraceResult> {
    let built = build(cfg)?;
    let t = traces(cfg, &built)?;
    let dir = cfg.out.join("traces");
    write(&dir, "new_edges_by_kind.csv", &t.summary_csv())?;
    write(&dir, "merge_report.csv", &t.merge.to_delimited())?;
    write(&dir, "constraints.csv", &t.inference.to_delimited())?;
    write(&dir, "campaigns.csv", &t.campaigns_csv())?;
    write(&dir, "stats.csv", &t.stats_csv())?;
    write(&dir, "graph_augmented.txt", &t.augmented.to_edge_list())?;
    write(&dir, "warnings.txt", &lines(&t.warnings))?;
    Ok(t)
}

/// Feature matrix plus the countries that could not be computed.
pub struct FeatureRun {
    pub matrix: FeatureMatrix,
    pub missing: Vec<(CountryCode, String)>,
    pub paths: PathMatrix,
    pub targets: BTreeMap<CountryCode, f64>,
}

impl FeatureRun {
    pub fn missing_csv(&self) -> String {
        let mut out = String::from("country,reason\n");
        for (c, r) in &self.missing {
            let _ = writeln!(out, "{c},{r}");
        }
        out
    }
}

/// Topology features use the traceroute-augmented graph; the path matrix
/// uses the graph chosen by `path_graph`.
pub fn features(cfg: &PipelineConfig, built: &Built, traced: &TraceResult) -> Result<FeatureRun> {
    let g = &traced.augmented;
    let cones = customer_cones(g);
    let tiers = rank_tiers(g, &cones);
    let views = country_views(g);
    let path_views = match cfg.path_graph {
        PathGraph::Augmented => views.clone(),
        PathGraph::Caida => country_views(&built.graph),
    };
    let paths = match cfg.path_graph {
        PathGraph::Augmented => country_path_matrix(g, &path_views),
        PathGraph::Caida => country_path_matrix(&built.graph, &path_views),
    };
    let announced = announced_space(&built.prefixes, |a| g.country_of(a));
    let ctx = FeatureContext {
        graph: g,
        cones: &cones,
        tiers: &tiers,
        paths: &paths,
        announced: &announced,
        config: &cfg.features,
    };
    let results: Vec<_> = built
        .countries
        .par_iter()
        .map(|rec| match views.get(&rec.country) {
            Some(v) => (rec.country, country_features(&ctx, v, rec)),
            None => (rec.country, Err("no ASes registered in the country".to_string())),
        })
        .collect();
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for (c, r) in results {
        match r {
            Ok(fv) => rows.push(fv),
            Err(reason) => {
                log::warn!("{c}: {reason}");
                missing.push((c, reason));
            }
        }
    }
    missing.sort();
    let matrix = assemble_and_scale(rows, &cfg.exclude)?;
    let targets = built.countries.iter().map(|r| (r.country, r.target())).collect();
    Ok(FeatureRun {
        matrix,
        missing,
        paths,
        targets,
    })
}

pub fn cmd_features(cfg: &PipelineConfig) -> Result<FeatureRun> {
    let built = build(cfg)?;
    let traced = traces(cfg, &built)?;
    let run = features(cfg, &built, &traced)?;
    write_features(cfg, &run)?;
    Ok(run)
}

fn write_features(cfg: &PipelineConfig, run: &FeatureRun) -> Result<()> {
    let dir = cfg.out.join("features");
    write(&dir, "features_raw.csv", &run.matrix.raw_csv())?;
    write(&dir, "features_scaled.csv", &run.matrix.scaled_csv())?;
    write(&dir, "scaling.csv", &run.matrix.scaling_csv())?;
    write(&dir, "flags.csv", &run.matrix.flags_csv())?;
    write(&dir, "missing.csv", &run.missing_csv())?;
    write(&dir, "path_matrix.csv", &run.paths.to_delimited())?;
    write(&dir, "warnings.txt", &lines(&run.matrix.warnings))
}

pub struct ModelRun {
    pub report: PredictionReport,
    /// Tree fitted on every training row, for tree models.
    pub tree_text: Option<String>,
    pub importance: Option<Vec<(String, f64)>>,
}

pub fn predict(cfg: &PipelineConfig, run: &FeatureRun) -> Result<Vec<ModelRun>> {
    let data = Dataset::from_matrix(&run.matrix, &run.targets)?;
    let names: Vec<&str> = data.feature_names.iter().map(String::as_str).collect();
    let mut kinds = cfg.models.clone();
    kinds.sort();
    kinds.dedup();
    let mut out = Vec::new();
    for kind in kinds {
        let spec = cfg.model_spec(kind);
        let report = loocv(&data, &spec);
        let (mut tree_text, mut importance) = (None, None);
        if kind.is_tree() {
            let (x, y) = data.subset(&data.training_rows());
            if let Model::Tree(t) = fit_model(&x, &y, &spec)? {
                tree_text = Some(t.render(&names));
                importance = Some(
                    names
                        .iter()
                        .zip(t.importance())
                        .map(|(n, v)| (n.to_string(), v))
                        .collect(),
                );
            }
        }
        out.push(ModelRun {
            report,
            tree_text,
            importance,
        });
    }
    Ok(out)
}

fn write_models(cfg: &PipelineConfig, runs: &[ModelRun]) -> Result<()> {
    let base = cfg.out.join("predict");
    let mut errors = String::from("model,country,abs_error\n");
    for m in runs {
        let r = &m.report;
        let dir = base.join(r.model.name());
        write(&dir, "predictions.csv", &r.predictions_csv())?;
        write(&dir, "error_cdf.csv", &r.cdf_csv())?;
        write(&dir, "confusion.csv", &r.confusion_csv())?;
        write(&dir, "residuals.csv", &r.residuals_csv())?;
        write(&dir, "summary.csv", &r.summary())?;
        if let Some(t) = &m.tree_text {
            write(&dir, "tree.txt", t)?;
        }
        if let Some(imp) = &m.importance {
            let mut text = String::from("feature,importance\n");
            for (n, v) in imp {
                let _ = writeln!(text, "{n},{v}");
            }
            write(&dir, "importance.csv", &text)?;
        }
        for row in &r.rows {
            if let Some(e) = row.abs_error() {
                let _ = writeln!(errors, "{},{},{e}", r.model.name(), row.country);
            }
        }
    }
    write(&base, "errors.csv", &errors)
}

pub fn cmd_predict(cfg: &PipelineConfig) -> Result<Vec<ModelRun>> {
    let built = build(cfg)?;
    let traced = traces(cfg, &built)?;
    let run = features(cfg, &built, &traced)?;
    let models = predict(cfg, &run)?;
    write_models(cfg, &models)?;
    Ok(models)
}

/// Runs every stage, writes all artifacts and a `report.txt` overview.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<String> {
    let built = cmd_build(cfg)?;
    let traced = traces(cfg, &built)?;
    let dir = cfg.out.join("traces");
    write(&dir, "new_edges_by_kind.csv", &traced.summary_csv())?;
    write(&dir, "merge_report.csv", &traced.merge.to_delimited())?;
    write(&dir, "constraints.csv", &traced.inference.to_delimited())?;
    write(&dir, "campaigns.csv", &traced.campaigns_csv())?;
    write(&dir, "stats.csv", &traced.stats_csv())?;
    write(&dir, "graph_augmented.txt", &traced.augmented.to_edge_list())?;
    write(&dir, "warnings.txt", &lines(&traced.warnings))?;
    let run = features(cfg, &built, &traced)?;
    write_features(cfg, &run)?;
    let models = predict(cfg, &run)?;
    write_models(cfg, &models)?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "graph: {} ASes, {} edges ({} from traceroutes)",
        traced.augmented.num_nodes(),
        traced.augmented.num_edges(),
        traced.merge.total_new()
    );
    let _ = writeln!(
        text,
        "countries: {} with features, {} missing, {} excluded from training",
        run.matrix.rows.len(),
        run.missing.len(),
        run.matrix.excluded.iter().filter(|&&e| e).count()
    );
    let _ = writeln!(
        text,
        "large-node threshold: degree >= {}",
        cfg.features.large_node_threshold
    );
    let _ = writeln!(text, "path graph: {:?}", cfg.path_graph);
    let _ = writeln!(text);
    let _ = writeln!(
        text,
        "model  mean_abs_error  mean_normalized_error  accuracy  merged_accuracy  failures"
    );
    for m in &models {
        let r = &m.report;
        let c = r.confusion();
        let _ = writeln!(
            text,
            "{:<6} {:>14.4} {:>22.4} {:>9.4} {:>16.4} {:>9}",
            r.model.name(),
            r.mean_abs_error(),
            r.mean_normalized_error(),
            c.accuracy(),
            c.merged_accuracy(),
            r.fold_failures.len()
        );
    }
    write(&cfg.out, "report.txt", &text)?;
    Ok(text)
}
