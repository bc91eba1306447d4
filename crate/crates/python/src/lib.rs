//! Python bindings: AS graphs, routing-policy distances, topology features,
//! scaling, freedom categories and leave-one-out model evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use netfreedom::bgpsim::{as_rank, customer_cones, valley_free_distances};
use netfreedom::features::{
    algebraic_connectivity, assemble_and_scale, average_clustering, clique_number, diameter, max_load_centrality,
    transitivity, FeatureVector, SimpleGraph, FEATURE_NAMES, NUM_FEATURES,
};
use netfreedom::ingest::{parse_delegations_str, parse_rel_str};
use netfreedom::ml::{categorize, loocv as run_loocv, Dataset, ModelKind, ModelSpec};
use netfreedom::pipeline::{cmd_report, PipelineConfig};
use netfreedom::{Asn, CountryCode};

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn country(code: &str) -> PyResult<CountryCode> {
    CountryCode::new(code).ok_or_else(|| value_error(format!("{code:?} is not a two-letter country code")))
}

/// Annotated AS graph built from CAIDA serial-1 relationships and, optionally,
/// RIR delegation records assigning ASes to countries.
#[pyclass(name = "AsGraph", frozen)]
struct PyAsGraph {
    inner: netfreedom::AsGraph,
}

#[pymethods]
impl PyAsGraph {
    #[new]
    #[pyo3(signature = (relationships, delegations = None))]
    fn new(relationships: &str, delegations: Option<&str>) -> PyResult<Self> {
        let rels = parse_rel_str(relationships, "relationships").map_err(value_error)?;
        let assignments = match delegations {
            Some(text) => parse_delegations_str(text, "delegations").map_err(value_error)?.records,
            None => Vec::new(),
        };
        Ok(PyAsGraph {
            inner: netfreedom::AsGraph::build_global(&rels, &assignments),
        })
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    fn nodes(&self) -> Vec<Asn> {
        self.inner.nodes().collect()
    }

    fn neighbors(&self, asn: Asn) -> Vec<Asn> {
        self.inner.neighbors(asn).collect()
    }

    fn degree(&self, asn: Asn) -> usize {
        self.inner.degree(asn)
    }

    fn country_of(&self, asn: Asn) -> Option<String> {
        self.inner.country_of(asn).map(|c| c.to_string())
    }

    fn domestic_nodes(&self, code: &str) -> PyResult<Vec<Asn>> {
        Ok(self.inner.domestic_nodes(country(code)?).into_iter().collect())
    }

    /// Customer cone of every AS, each including the AS itself.
    fn customer_cones(&self) -> BTreeMap<Asn, Vec<Asn>> {
        customer_cones(&self.inner)
            .iter()
            .map(|(a, cone)| (a, cone.iter().copied().collect()))
            .collect()
    }

    /// ASes by cone size, then degree (both descending), then ASN.
    fn as_rank(&self) -> Vec<Asn> {
        as_rank(&self.inner, &customer_cones(&self.inner))
    }

    /// Shortest valley-free hop count from the nearest source to every
    /// reachable AS.
    fn valley_free_distances(&self, sources: Vec<Asn>) -> BTreeMap<Asn, u32> {
        valley_free_distances(&self.inner, &sources.into_iter().collect()).distance
    }

    fn edge_list(&self) -> String {
        self.inner.to_edge_list()
    }

    fn __repr__(&self) -> String {
        format!(
            "AsGraph(nodes={}, edges={})",
            self.inner.num_nodes(),
            self.inner.num_edges()
        )
    }
}

fn simple_graph(nodes: Vec<Asn>, edges: Vec<(Asn, Asn)>) -> SimpleGraph {
    SimpleGraph::from_edges(nodes, &edges)
}

/// Closed-form structural metrics of an undirected graph.
#[pyfunction]
fn structural_features(nodes: Vec<Asn>, edges: Vec<(Asn, Asn)>) -> BTreeMap<&'static str, f64> {
    let g = simple_graph(nodes, edges);
    BTreeMap::from([
        ("num_nodes", g.n() as f64),
        ("num_edges", g.m() as f64),
        ("diameter", diameter(&g) as f64),
        ("transitivity", transitivity(&g)),
        ("average_clustering", average_clustering(&g)),
        ("clique_number", clique_number(&g) as f64),
        ("max_load_centrality", max_load_centrality(&g)),
    ])
}

/// Second-smallest Laplacian eigenvalue.
#[pyfunction(name = "algebraic_connectivity")]
fn py_algebraic_connectivity(nodes: Vec<Asn>, edges: Vec<(Asn, Asn)>) -> f64 {
    algebraic_connectivity(&simple_graph(nodes, edges))
}

/// `NotFree`, `PartlyFree` or `Free` for a 0-100 freedom score.
#[pyfunction(name = "categorize")]
fn py_categorize(score: f64) -> PyResult<&'static str> {
    categorize(score).map(|c| c.name()).map_err(value_error)
}

#[pyfunction]
fn feature_names() -> Vec<&'static str> {
    FEATURE_NAMES.to_vec()
}

type Scaled = (Vec<String>, Vec<&'static str>, Vec<Vec<f64>>);

/// Min-max scales full feature rows using the rows not in `exclude`.
/// Constant columns are dropped. Returns `(countries, columns, scaled rows)`
/// with countries in sorted order.
#[pyfunction]
#[pyo3(signature = (countries, rows, exclude = Vec::new()))]
fn scale_features(countries: Vec<String>, rows: Vec<Vec<f64>>, exclude: Vec<String>) -> PyResult<Scaled> {
    if countries.len() != rows.len() {
        return Err(value_error("countries and rows differ in length"));
    }
    let mut vectors = Vec::with_capacity(rows.len());
    for (code, row) in countries.iter().zip(rows) {
        let mut v = FeatureVector::new(country(code)?);
        v.values = row
            .try_into()
            .map_err(|r: Vec<f64>| value_error(format!("{code}: {} values, expected {NUM_FEATURES}", r.len())))?;
        vectors.push(v);
    }
    let exclude = exclude.iter().map(|c| country(c)).collect::<PyResult<BTreeSet<_>>>()?;
    let m = assemble_and_scale(vectors, &exclude).map_err(value_error)?;
    Ok((
        m.countries().map(|c| c.to_string()).collect(),
        m.column_names(),
        m.scaled.clone(),
    ))
}

/// Leave-one-out evaluation of one model. Returns a dict with per-row
/// predictions (`None` for failed folds) and aggregate errors.
#[pyfunction]
#[pyo3(signature = (model, x, y, excluded = None, seed = 42))]
fn loocv<'py>(
    py: Python<'py>,
    model: &str,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    excluded: Option<Vec<bool>>,
    seed: u64,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let kind: ModelKind = model.parse().map_err(value_error)?;
    let n = y.len();
    let p = x.first().map_or(0, Vec::len);
    let codes = (0..n)
        .map(|i| {
            let b = [b'A' + (i / 26 % 26) as u8, b'A' + (i % 26) as u8];
            CountryCode::new(std::str::from_utf8(&b).expect("ascii")).expect("letters")
        })
        .collect();
    let data = Dataset::new(
        codes,
        (0..p).map(|j| format!("x{j}")).collect(),
        x,
        y,
        excluded.unwrap_or_else(|| vec![false; n]),
    )
    .map_err(value_error)?;
    let mut spec = ModelSpec::new(kind);
    spec.seed = seed;
    let report = py.detach(|| run_loocv(&data, &spec));
    let confusion = report.confusion();
    let out = pyo3::types::PyDict::new(py);
    out.set_item("model", kind.name())?;
    out.set_item(
        "predictions",
        report.rows.iter().map(|r| r.predicted).collect::<Vec<_>>(),
    )?;
    out.set_item("mean_abs_error", report.mean_abs_error())?;
    out.set_item("mean_normalized_error", report.mean_normalized_error())?;
    out.set_item("accuracy", confusion.accuracy())?;
    out.set_item("merged_accuracy", confusion.merged_accuracy())?;
    out.set_item("models_trained", report.models_trained)?;
    out.set_item("fold_failures", report.fold_failures.len())?;
    Ok(out)
}

/// Runs the whole pipeline for a TOML config and returns the report text.
#[pyfunction]
#[pyo3(signature = (config, out = None))]
fn run_pipeline(py: Python<'_>, config: PathBuf, out: Option<PathBuf>) -> PyResult<String> {
    let mut cfg = PipelineConfig::load(&config).map_err(value_error)?;
    if let Some(o) = out {
        cfg.out = o;
    }
    py.detach(|| cmd_report(&cfg)).map_err(value_error)
}

#[pymodule]
fn pynetfreedom(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAsGraph>()?;
    m.add_function(wrap_pyfunction!(structural_features, m)?)?;
    m.add_function(wrap_pyfunction!(py_algebraic_connectivity, m)?)?;
    m.add_function(wrap_pyfunction!(py_categorize, m)?)?;
    m.add_function(wrap_pyfunction!(feature_names, m)?)?;
    m.add_function(wrap_pyfunction!(scale_features, m)?)?;
    m.add_function(wrap_pyfunction!(loocv, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
