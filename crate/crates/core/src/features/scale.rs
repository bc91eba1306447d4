use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::{FeatureVector, FEATURE_NAMES, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::types::CountryCode;

/// Feature rows with per-feature min-max scaling.
///
/// Columns whose minimum equals their maximum over the scaling population are
/// dropped; `columns` holds the indices (into [`FEATURE_NAMES`]) that remain.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureVector>,
    pub columns: Vec<usize>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Scaled values, one row per entry of `rows`, one value per retained column.
    pub scaled: Vec<Vec<f64>>,
    pub excluded: Vec<bool>,
    pub warnings: Vec<String>,
}

/// Scales every row with minima and maxima taken over the non-excluded rows.
/// Excluded rows are scaled with the same parameters and may fall outside [0, 1].
pub fn assemble_and_scale(mut rows: Vec<FeatureVector>, exclusions: &BTreeSet<CountryCode>) -> Result<FeatureMatrix> {
    rows.sort_by_key(|r| r.country);
    let excluded: Vec<bool> = rows.iter().map(|r| exclusions.contains(&r.country)).collect();
    let population: Vec<&FeatureVector> = rows
        .iter()
        .zip(&excluded)
        .filter(|(_, &e)| !e)
        .map(|(r, _)| r)
        .collect();
    if population.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "scaling needs at least 2 non-excluded rows, got {}",
            population.len()
        )));
    }

    let mut columns = Vec::new();
    let mut min = Vec::new();
    let mut max = Vec::new();
    let mut warnings = Vec::new();
    for (j, name) in FEATURE_NAMES.iter().enumerate() {
        let lo = population.iter().map(|r| r.values[j]).fold(f64::INFINITY, f64::min);
        let hi = population.iter().map(|r| r.values[j]).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            columns.push(j);
            min.push(lo);
            max.push(hi);
        } else {
            warnings.push(format!("dropping constant feature {name}"));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let scaled = rows
        .iter()
        .map(|r| {
            columns
                .iter()
                .enumerate()
                .map(|(k, &j)| (r.values[j] - min[k]) / (max[k] - min[k]))
                .collect()
        })
        .collect();
    Ok(FeatureMatrix {
        rows,
        columns,
        min,
        max,
        scaled,
        excluded,
        warnings,
    })
}

impl FeatureMatrix {
    pub fn countries(&self) -> impl Iterator<Item = CountryCode> + '_ {
        self.rows.iter().map(|r| r.country)
    }

    pub fn column_names(&self) -> Vec<&'static str> {
        self.columns.iter().map(|&j| FEATURE_NAMES[j]).collect()
    }

    /// Inverse of the scaling for retained column `k`.
    pub fn descale(&self, k: usize, value: f64) -> f64 {
        value * (self.max[k] - self.min[k]) + self.min[k]
    }

    /// Scales a raw feature vector with this matrix's parameters.
    pub fn scale(&self, raw: &[f64; NUM_FEATURES]) -> Vec<f64> {
        self.columns
            .iter()
            .enumerate()
            .map(|(k, &j)| (raw[j] - self.min[k]) / (self.max[k] - self.min[k]))
            .collect()
    }

    /// All 21 raw features, one row per country.
    pub fn raw_csv(&self) -> String {
        let mut out = String::from("country");
        for name in FEATURE_NAMES {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(r.country.as_str());
            for v in r.values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn scaled_csv(&self) -> String {
        let mut out = String::from("country");
        for name in self.column_names() {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (r, row) in self.rows.iter().zip(&self.scaled) {
            out.push_str(r.country.as_str());
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// `feature,min,max` for retained features.
    pub fn scaling_csv(&self) -> String {
        let mut out = String::from("feature,min,max\n");
        for (k, name) in self.column_names().into_iter().enumerate() {
            let _ = writeln!(out, "{name},{},{}", self.min[k], self.max[k]);
        }
        out
    }

    /// `country,train_excluded,flags` with flags joined by `;`.
    pub fn flags_csv(&self) -> String {
        let mut out = String::from("country,train_excluded,flags\n");
        for (r, &e) in self.rows.iter().zip(&self.excluded) {
            let _ = writeln!(out, "{},{},{}", r.country, e, r.flags.join(";"));
        }
        out
    }
}
