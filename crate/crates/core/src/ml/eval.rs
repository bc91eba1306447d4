//! Leave-one-out evaluation, error summaries and freedom categories.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::{fit_model, Dataset, ModelKind, ModelSpec};
use crate::error::{Error, Result};
use crate::types::CountryCode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    NotFree,
    PartlyFree,
    Free,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::NotFree, Category::PartlyFree, Category::Free];

    pub fn name(self) -> &'static str {
        match self {
            Category::NotFree => "NotFree",
            Category::PartlyFree => "PartlyFree",
            Category::Free => "Free",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Category of a value on the 0-100 freedom scale: up to 30 is not free, up
/// to 60 partly free, above 60 free.
pub fn categorize(y: f64) -> Result<Category> {
    if !(0.0..=100.0).contains(&y) {
        return Err(Error::TargetOutOfRange(y));
    }
    Ok(if y <= 30.0 {
        Category::NotFree
    } else if y <= 60.0 {
        Category::PartlyFree
    } else {
        Category::Free
    })
}

/// Counts indexed `[actual][predicted]` in `Category::ALL` order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion(pub [[usize; 3]; 3]);

impl Confusion {
    pub fn add(&mut self, actual: Category, predicted: Category) {
        self.0[actual.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let hit: usize = (0..3).map(|i| self.0[i][i]).sum();
        ratio(hit, self.total())
    }

    /// Accuracy with free and partly free counted as one label.
    pub fn merged_accuracy(&self) -> f64 {
        let m = &self.0;
        let hit = m[0][0] + m[1][1] + m[1][2] + m[2][1] + m[2][2];
        ratio(hit, self.total())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowPrediction {
    pub country: CountryCode,
    pub actual: f64,
    /// `None` when the fold could not be fitted.
    pub predicted: Option<f64>,
    pub train_excluded: bool,
}

impl RowPrediction {
    pub fn abs_error(&self) -> Option<f64> {
        self.predicted.map(|p| (p - self.actual).abs())
    }

    /// Predicted over actual; undefined for a zero target.
    pub fn normalized_error(&self) -> Option<f64> {
        match self.predicted {
            Some(p) if self.actual != 0.0 => Some(p / self.actual),
            _ => None,
        }
    }

    pub fn actual_category(&self) -> Category {
        categorize(self.actual).expect("targets are validated on load")
    }

    pub fn predicted_category(&self) -> Option<Category> {
        self.predicted.map(|p| categorize(p).expect("predictions are clamped"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionReport {
    pub model: ModelKind,
    pub rows: Vec<RowPrediction>,
    pub fold_failures: Vec<(CountryCode, String)>,
    pub models_trained: usize,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl PredictionReport {
    fn predicted(&self) -> impl Iterator<Item = &RowPrediction> + '_ {
        self.rows.iter().filter(|r| r.predicted.is_some())
    }

    /// Mean absolute error in target points, which are also percent of the
    /// scale. NaN when no row was predicted.
    pub fn mean_abs_error(&self) -> f64 {
        let e: Vec<f64> = self.predicted().filter_map(|r| r.abs_error()).collect();
        mean(&e)
    }

    /// Mean of `|predicted - actual| / actual` over rows with a nonzero target.
    /// NaN when there are none.
    pub fn mean_normalized_error(&self) -> f64 {
        let e: Vec<f64> = self
            .predicted()
            .filter(|r| r.actual != 0.0)
            .filter_map(|r| r.abs_error().map(|a| a / r.actual))
            .collect();
        mean(&e)
    }

    /// Empirical CDF of absolute errors as `(error, fraction <= error)`.
    pub fn error_cdf(&self) -> Vec<(f64, f64)> {
        let mut e: Vec<f64> = self.predicted().filter_map(|r| r.abs_error()).collect();
        e.sort_by(f64::total_cmp);
        let n = e.len() as f64;
        e.iter().enumerate().map(|(i, &v)| (v, (i + 1) as f64 / n)).collect()
    }

    pub fn confusion(&self) -> Confusion {
        let mut c = Confusion::default();
        for r in self.predicted() {
            c.add(r.actual_category(), r.predicted_category().unwrap());
        }
        c
    }

    /// Rows by decreasing absolute error, ties by country code.
    pub fn residual_ranking(&self) -> Vec<&RowPrediction> {
        let mut v: Vec<&RowPrediction> = self.predicted().collect();
        v.sort_by(|a, b| {
            b.abs_error()
                .unwrap()
                .total_cmp(&a.abs_error().unwrap())
                .then(a.country.cmp(&b.country))
        });
        v
    }

    pub fn predictions_csv(&self) -> String {
        let mut out = String::from(
            "country,actual,predicted,abs_error,normalized_error,actual_category,predicted_category,train_excluded\n",
        );
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.country,
                r.actual,
                opt(r.predicted),
                opt(r.abs_error()),
                opt(r.normalized_error()),
                r.actual_category().name(),
                r.predicted_category().map_or("", Category::name),
                r.train_excluded
            );
        }
        out
    }

    pub fn cdf_csv(&self) -> String {
        let mut out = String::from("abs_error,fraction\n");
        for (e, f) in self.error_cdf() {
            let _ = writeln!(out, "{e},{f}");
        }
        out
    }

    pub fn confusion_csv(&self) -> String {
        let c = self.confusion();
        let mut out = String::from("actual\\predicted");
        for cat in Category::ALL {
            out.push(',');
            out.push_str(cat.name());
        }
        out.push('\n');
        for a in Category::ALL {
            out.push_str(a.name());
            for p in Category::ALL {
                let _ = write!(out, ",{}", c.0[a.index()][p.index()]);
            }
            out.push('\n');
        }
        out
    }

    pub fn residuals_csv(&self) -> String {
        let mut out = String::from("rank,country,actual,predicted,abs_error\n");
        for (i, r) in self.residual_ranking().into_iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                i + 1,
                r.country,
                r.actual,
                r.predicted.unwrap(),
                r.abs_error().unwrap()
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let c = self.confusion();
        let mut out = String::new();
        let _ = writeln!(out, "model,{}", self.model.name());
        let _ = writeln!(out, "rows,{}", self.rows.len());
        let _ = writeln!(out, "models_trained,{}", self.models_trained);
        let _ = writeln!(out, "fold_failures,{}", self.fold_failures.len());
        let _ = writeln!(out, "mean_abs_error,{}", self.mean_abs_error());
        let _ = writeln!(out, "mean_normalized_error,{}", self.mean_normalized_error());
        let _ = writeln!(out, "category_accuracy,{}", c.accuracy());
        let _ = writeln!(out, "merged_category_accuracy,{}", c.merged_accuracy());
        for (country, reason) in &self.fold_failures {
            let _ = writeln!(out, "failure,{country},{reason}");
        }
        out
    }
}

/// Predicts every row from a model trained on all other rows that are not
/// excluded from training. Predictions are clamped to [0, 100].
pub fn loocv(data: &Dataset, spec: &ModelSpec) -> PredictionReport {
    let n = data.len();
    let p = data.num_features();
    let folds: Vec<(RowPrediction, std::result::Result<(), String>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let train: Vec<usize> = (0..n).filter(|&j| j != i && !data.excluded[j]).collect();
            let outcome = if spec.kind == ModelKind::Lr && train.len() < 2 * p {
                Err(format!("{} training rows for {p} features", train.len()))
            } else if train.is_empty() {
                Err("no training rows".to_string())
            } else {
                let (x, y) = data.subset(&train);
                fit_model(&x, &y, spec)
                    .map(|m| m.predict(&data.x[i]).clamp(0.0, 100.0))
                    .map_err(|e| e.to_string())
            };
            let row = RowPrediction {
                country: data.countries[i],
                actual: data.y[i],
                predicted: outcome.as_ref().ok().copied(),
                train_excluded: data.excluded[i],
            };
            (row, outcome.map(|_| ()))
        })
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut fold_failures = Vec::new();
    let mut models_trained = 0;
    for (row, outcome) in folds {
        match outcome {
            Ok(()) => models_trained += 1,
            Err(reason) => fold_failures.push((row.country, reason)),
        }
        rows.push(row);
    }
    PredictionReport {
        model: spec.kind,
        rows,
        fold_failures,
        models_trained,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::tests::dataset;
    use proptest::prelude::*;

    #[test]
    fn boundaries() {
        assert_eq!(categorize(70.0).unwrap(), Category::Free);
        assert_eq!(categorize(30.0).unwrap(), Category::NotFree);
        assert_eq!(categorize(31.0).unwrap(), Category::PartlyFree);
        assert_eq!(categorize(30.5).unwrap(), Category::PartlyFree);
        assert_eq!(categorize(60.0).unwrap(), Category::PartlyFree);
        assert_eq!(categorize(61.0).unwrap(), Category::Free);
        assert_eq!(categorize(0.0).unwrap(), Category::NotFree);
        assert_eq!(categorize(100.0).unwrap(), Category::Free);
        assert!(categorize(-0.1).is_err());
        assert!(categorize(100.1).is_err());
        assert!(categorize(f64::NAN).is_err());
    }

    #[test]
    fn free_partly_free_swaps_are_merged() {
        let mut c = Confusion::default();
        c.add(Category::Free, Category::PartlyFree);
        c.add(Category::PartlyFree, Category::Free);
        c.add(Category::NotFree, Category::NotFree);
        assert!((c.accuracy() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.merged_accuracy(), 1.0);
    }

    #[test]
    fn identical_rows_predict_mean_of_others() {
        let d = dataset(&[(vec![0.5], 10.0), (vec![0.5], 20.0), (vec![0.5], 60.0)]);
        let r = loocv(&d, &ModelSpec::new(ModelKind::Dtla));
        let got: Vec<f64> = r.rows.iter().map(|r| r.predicted.unwrap()).collect();
        assert_eq!(got, vec![40.0, 35.0, 15.0]);
        assert_eq!(r.models_trained, 3);
    }

    #[test]
    fn planted_linear_data_is_recovered() {
        let rows: Vec<(Vec<f64>, f64)> = (0..30)
            .map(|i| {
                let a = (i % 6) as f64 / 5.0;
                let b = (i / 6) as f64 / 4.0;
                (vec![a, b], 10.0 + 50.0 * a + 30.0 * b)
            })
            .collect();
        let r = loocv(&dataset(&rows), &ModelSpec::new(ModelKind::Lr));
        assert!(r.fold_failures.is_empty());
        assert!(r.mean_abs_error() < 1e-6);
    }

    #[test]
    fn lr_with_too_few_rows_fails_the_fold() {
        let d = dataset(&[(vec![0.1, 0.2], 10.0), (vec![0.3, 0.1], 20.0), (vec![0.2, 0.9], 60.0)]);
        let r = loocv(&d, &ModelSpec::new(ModelKind::Lr));
        assert_eq!(r.fold_failures.len(), 3);
        assert_eq!(r.models_trained, 0);
        assert!(r.rows.iter().all(|r| r.predicted.is_none()));
    }

    #[test]
    fn excluded_rows_are_predicted_but_never_trained_on() {
        let mut d = dataset(&[(vec![0.0], 10.0), (vec![0.0], 20.0), (vec![0.0], 90.0)]);
        d.excluded[2] = true;
        let r = loocv(&d, &ModelSpec::new(ModelKind::Dtla));
        let got: Vec<f64> = r.rows.iter().map(|r| r.predicted.unwrap()).collect();
        assert_eq!(got, vec![20.0, 10.0, 15.0]);
    }

    #[test]
    fn report_is_reproducible() {
        let rows: Vec<(Vec<f64>, f64)> = (0..25)
            .map(|i| {
                (
                    vec![(i * 7 % 25) as f64 / 25.0, (i % 4) as f64 / 3.0],
                    (i * 37 % 100) as f64,
                )
            })
            .collect();
        for kind in ModelKind::ALL {
            let a = loocv(&dataset(&rows), &ModelSpec::new(kind));
            let b = loocv(&dataset(&rows), &ModelSpec::new(kind));
            assert_eq!(a.predictions_csv(), b.predictions_csv());
            assert_eq!(a.summary(), b.summary());
        }
    }

    #[test]
    fn residual_ranking_is_descending() {
        let rows: Vec<(Vec<f64>, f64)> = (0..20).map(|i| (vec![i as f64 / 20.0], (i * 13 % 97) as f64)).collect();
        let r = loocv(&dataset(&rows), &ModelSpec::new(ModelKind::Dtla));
        let ranked = r.residual_ranking();
        assert!(ranked.windows(2).all(|w| w[0].abs_error() >= w[1].abs_error()));
        let cdf = r.error_cdf();
        assert_eq!(cdf.last().unwrap().1, 1.0);
    }

    proptest! {
        #[test]
        fn merged_accuracy_dominates(cells in proptest::array::uniform9(0usize..50)) {
            let mut m = [[0; 3]; 3];
            for (k, v) in cells.iter().enumerate() {
                m[k / 3][k % 3] = *v;
            }
            let c = Confusion(m);
            prop_assert!(c.merged_accuracy() >= c.accuracy());
        }

        #[test]
        fn categorize_is_a_step_function(a in 0.0f64..=100.0, b in 0.0f64..=100.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(categorize(lo).unwrap() <= categorize(hi).unwrap());
        }
    }
}
