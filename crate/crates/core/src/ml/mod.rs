//! Regression models for the freedom target and their evaluation.

mod eval;
mod linear;
mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use eval::{categorize, loocv, Category, Confusion, PredictionReport, RowPrediction};
pub use linear::{
    fit_lasso, fit_lasso_at, fit_lr, kkt_violation, lambda_grid, lambda_max, LassoFit, LassoParams, LinearModel,
    LASSO_TOLERANCE, RIDGE_JITTER,
};
pub use tree::{Leaf, Node, RegressionTree, TreeParams};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::types::CountryCode;

/// Scaled features and targets, one row per country.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub countries: Vec<CountryCode>,
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub excluded: Vec<bool>,
}

impl Dataset {
    pub fn new(
        countries: Vec<CountryCode>,
        feature_names: Vec<String>,
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        excluded: Vec<bool>,
    ) -> Result<Self> {
        let n = countries.len();
        if x.len() != n || y.len() != n || excluded.len() != n {
            return Err(Error::InvalidInput("dataset columns differ in length".to_string()));
        }
        if let Some(row) = x.iter().find(|r| r.len() != feature_names.len()) {
            return Err(Error::InvalidInput(format!(
                "row has {} features, expected {}",
                row.len(),
                feature_names.len()
            )));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".to_string()));
        }
        if let Some(&bad) = y.iter().find(|v| !(0.0..=100.0).contains(*v)) {
            return Err(Error::TargetOutOfRange(bad));
        }
        Ok(Dataset {
            countries,
            feature_names,
            x,
            y,
            excluded,
        })
    }

    /// Rows of `matrix` that have a target; the rest are skipped.
    pub fn from_matrix(matrix: &FeatureMatrix, targets: &BTreeMap<CountryCode, f64>) -> Result<Self> {
        let mut countries = Vec::new();
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut excluded = Vec::new();
        for (i, row) in matrix.rows.iter().enumerate() {
            if let Some(&t) = targets.get(&row.country) {
                countries.push(row.country);
                x.push(matrix.scaled[i].clone());
                y.push(t);
                excluded.push(matrix.excluded[i]);
            }
        }
        let names = matrix.column_names().into_iter().map(String::from).collect();
        Dataset::new(countries, names, x, y, excluded)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, rows: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            rows.iter().map(|&i| self.x[i].clone()).collect(),
            rows.iter().map(|&i| self.y[i]).collect(),
        )
    }

    /// Rows that may be used for training.
    pub fn training_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.excluded[i]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lr,
    Lasso,
    Dtla,
    Dtlr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Lr, ModelKind::Lasso, ModelKind::Dtla, ModelKind::Dtlr];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Lasso => "lasso",
            ModelKind::Dtla => "dtla",
            ModelKind::Dtlr => "dtlr",
        }
    }

    pub fn is_tree(self) -> bool {
        matches!(self, ModelKind::Dtla | ModelKind::Dtlr)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub lasso: LassoParams,
    #[serde(default)]
    pub tree: TreeParams,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    42
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            lasso: LassoParams::default(),
            tree: TreeParams::default(),
            seed: default_seed(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Tree(RegressionTree),
}

impl Model {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Model::Linear(m) => m.predict(x),
            Model::Tree(t) => t.predict(x),
        }
    }
}

pub fn fit_model(x: &[Vec<f64>], y: &[f64], spec: &ModelSpec) -> Result<Model> {
    if y.is_empty() {
        return Err(Error::InvalidInput("no training rows".to_string()));
    }
    Ok(match spec.kind {
        ModelKind::Lr => Model::Linear(fit_lr(x, y)?),
        ModelKind::Lasso => Model::Linear(fit_lasso(x, y, &spec.lasso, spec.seed)?.model),
        ModelKind::Dtla => Model::Tree(RegressionTree::fit_mean(x, y, &spec.tree)),
        ModelKind::Dtlr => Model::Tree(RegressionTree::fit_linear(x, y, &spec.tree)),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn dataset(rows: &[(Vec<f64>, f64)]) -> Dataset {
        let n = rows.len();
        let countries = (0..n)
            .map(|i| {
                let code = [b'A' + (i / 26) as u8, b'A' + (i % 26) as u8];
                CountryCode::new(std::str::from_utf8(&code).unwrap()).unwrap()
            })
            .collect();
        let p = rows.first().map_or(0, |r| r.0.len());
        Dataset::new(
            countries,
            (0..p).map(|j| format!("x{j}")).collect(),
            rows.iter().map(|r| r.0.clone()).collect(),
            rows.iter().map(|r| r.1).collect(),
            vec![false; n],
        )
        .unwrap()
    }

    #[test]
    fn rejects_out_of_range_targets() {
        let c = vec![CountryCode::new("AA").unwrap()];
        assert!(Dataset::new(c.clone(), vec!["a".into()], vec![vec![0.0]], vec![101.0], vec![false]).is_err());
        assert!(Dataset::new(c, vec!["a".into()], vec![vec![f64::NAN]], vec![1.0], vec![false]).is_err());
    }

    #[test]
    fn model_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("svm".parse::<ModelKind>().is_err());
    }
}
