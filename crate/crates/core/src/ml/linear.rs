//! Ordinary least squares and LASSO by coordinate descent.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RIDGE_JITTER: f64 = 1e-8;
pub const LASSO_TOLERANCE: f64 = 1e-7;
const MAX_SWEEPS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn constant(value: f64, p: usize) -> Self {
        LinearModel {
            intercept: value,
            weights: vec![0.0; p],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Column means of `x` and the mean of `y`.
fn centers(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let n = y.len() as f64;
    let p = x.first().map_or(0, Vec::len);
    let mut mx = vec![0.0; p];
    for row in x {
        for (m, v) in mx.iter_mut().zip(row) {
            *m += v;
        }
    }
    mx.iter_mut().for_each(|m| *m /= n);
    (mx, y.iter().sum::<f64>() / n)
}

fn check_shape(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if y.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows for {} targets",
            x.len(),
            y.len()
        )));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidInput("ragged feature rows".to_string()));
    }
    Ok(p)
}

/// Least squares with intercept, solved through the Cholesky factor of the
/// centered normal equations. A singular system is retried with `1e-8` added
/// to the diagonal.
pub fn fit_lr(x: &[Vec<f64>], y: &[f64]) -> Result<LinearModel> {
    let p = check_shape(x, y)?;
    let n = y.len();
    let (mx, my) = centers(x, y);
    if p == 0 {
        return Ok(LinearModel::constant(my, 0));
    }
    let a = DMatrix::from_fn(n, p, |i, j| x[i][j] - mx[j]);
    let b = DVector::from_fn(n, |i, _| y[i] - my);
    let gram = a.transpose() * &a;
    let rhs = a.transpose() * b;
    let chol = gram.clone().cholesky().or_else(|| {
        log::debug!("normal equations singular; adding ridge jitter");
        (gram + DMatrix::identity(p, p) * RIDGE_JITTER).cholesky()
    });
    let Some(chol) = chol else {
        return Err(Error::Degenerate(format!("{n} rows, {p} features")));
    };
    let w = chol.solve(&rhs);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate(format!("{n} rows, {p} features")));
    }
    let intercept = my - w.iter().zip(&mx).map(|(w, m)| w * m).sum::<f64>();
    Ok(LinearModel {
        intercept,
        weights: w.iter().copied().collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit {
    pub model: LinearModel,
    pub lambda: f64,
    /// Objective after each full sweep; the first entry is the starting point.
    pub objective: Vec<f64>,
}

/// Centered copy of the data, column-major.
struct Centered {
    cols: Vec<Vec<f64>>,
    sq_norms: Vec<f64>,
    y: Vec<f64>,
    mx: Vec<f64>,
    my: f64,
}

impl Centered {
    fn new(x: &[Vec<f64>], y: &[f64]) -> Self {
        let (mx, my) = centers(x, y);
        let p = mx.len();
        let cols: Vec<Vec<f64>> = (0..p).map(|j| x.iter().map(|r| r[j] - mx[j]).collect()).collect();
        let sq_norms = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
        Centered {
            cols,
            sq_norms,
            y: y.iter().map(|v| v - my).collect(),
            mx,
            my,
        }
    }

    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    fn lambda_max(&self) -> f64 {
        self.cols
            .iter()
            .map(|c| c.iter().zip(&self.y).map(|(a, b)| a * b).sum::<f64>().abs() / self.n())
            .fold(0.0, f64::max)
    }

    fn objective(&self, w: &[f64], lambda: f64) -> f64 {
        let mut r = self.y.clone();
        for (c, &wj) in self.cols.iter().zip(w) {
            if wj != 0.0 {
                r.iter_mut().zip(c).for_each(|(r, v)| *r -= wj * v);
            }
        }
        r.iter().map(|v| v * v).sum::<f64>() / (2.0 * self.n()) + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn model(&self, w: Vec<f64>) -> LinearModel {
        let intercept = self.my - w.iter().zip(&self.mx).map(|(w, m)| w * m).sum::<f64>();
        LinearModel { intercept, weights: w }
    }

    /// Cyclic coordinate descent from `w`. Stops once a sweep moves no
    /// fitted value by more than `tol` and lowers the objective by at most `tol`.
    /// A sweep whose evaluated objective comes out higher is rounding noise at
    /// the optimum; it is discarded and descent stops.
    fn descend(&self, mut w: Vec<f64>, lambda: f64, tol: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut r = self.y.clone();
        for (c, &wj) in self.cols.iter().zip(&w) {
            r.iter_mut().zip(c).for_each(|(r, v)| *r -= wj * v);
        }
        let mut trace = vec![self.objective(&w, lambda)];
        for _ in 0..MAX_SWEEPS {
            let before = w.clone();
            let mut max_move: f64 = 0.0;
            for (j, c) in self.cols.iter().enumerate() {
                if self.sq_norms[j] == 0.0 {
                    w[j] = 0.0;
                    continue;
                }
                let old = w[j];
                let rho = c.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n + old * self.sq_norms[j] / n;
                let new = soft_threshold(rho, lambda) / (self.sq_norms[j] / n);
                if new != old {
                    let d = new - old;
                    r.iter_mut().zip(c).for_each(|(r, v)| *r -= d * v);
                    w[j] = new;
                    max_move = max_move.max(d.abs() * (self.sq_norms[j] / n).sqrt());
                }
            }
            let obj = self.objective(&w, lambda);
            let drop = trace.last().unwrap() - obj;
            if drop < 0.0 {
                w = before;
                break;
            }
            trace.push(obj);
            if max_move <= tol && drop <= tol {
                break;
            }
        }
        (w, trace)
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// LASSO at a fixed `lambda`, minimizing `RSS / 2n + lambda * |w|_1` with an
/// unpenalized intercept.
pub fn fit_lasso_at(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LassoFit> {
    let p = check_shape(x, y)?;
    let data = Centered::new(x, y);
    let (w, objective) = data.descend(vec![0.0; p], lambda, LASSO_TOLERANCE);
    Ok(LassoFit {
        model: data.model(w),
        lambda,
        objective,
    })
}

/// Smallest `lambda` at which every weight is zero.
pub fn lambda_max(x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    check_shape(x, y)?;
    Ok(Centered::new(x, y).lambda_max())
}

/// Geometric grid of `count` values from `max` down to `max * 10^-decades`.
pub fn lambda_grid(max: f64, count: usize, decades: f64) -> Vec<f64> {
    if count <= 1 {
        return vec![max];
    }
    (0..count)
        .map(|k| max * 10f64.powf(-decades * k as f64 / (count - 1) as f64))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoParams {
    pub grid_size: usize,
    pub decades: f64,
    pub folds: usize,
}

impl Default for LassoParams {
    fn default() -> Self {
        LassoParams {
            grid_size: 30,
            decades: 3.0,
            folds: 5,
        }
    }
}

/// Warm-started fits along a decreasing grid.
fn path(data: &Centered, grid: &[f64]) -> Vec<Vec<f64>> {
    let mut w = vec![0.0; data.cols.len()];
    grid.iter()
        .map(|&l| {
            w = data.descend(w.clone(), l, LASSO_TOLERANCE).0;
            w.clone()
        })
        .collect()
}

/// LASSO with `lambda` chosen by k-fold cross-validation over a geometric
/// grid. Folds come from a shuffle seeded with `seed`; ties go to the larger
/// `lambda`.
pub fn fit_lasso(x: &[Vec<f64>], y: &[f64], params: &LassoParams, seed: u64) -> Result<LassoFit> {
    let p = check_shape(x, y)?;
    let n = y.len();
    let full = Centered::new(x, y);
    let lmax = full.lambda_max();
    if lmax == 0.0 || n < 2 {
        return Ok(LassoFit {
            model: LinearModel::constant(full.my, p),
            lambda: lmax,
            objective: vec![full.objective(&vec![0.0; p], lmax)],
        });
    }
    let grid = lambda_grid(lmax, params.grid_size.max(1), params.decades);

    let k = params.folds.clamp(2, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut cv_error = vec![0.0; grid.len()];
    for fold in 0..k {
        let held: Vec<usize> = order.iter().copied().skip(fold).step_by(k).collect();
        let train: Vec<usize> = order.iter().copied().filter(|i| !held.contains(i)).collect();
        let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let data = Centered::new(&tx, &ty);
        for (g, w) in path(&data, &grid).into_iter().enumerate() {
            let m = data.model(w);
            cv_error[g] += held.iter().map(|&i| (m.predict(&x[i]) - y[i]).powi(2)).sum::<f64>();
        }
    }
    let best = cv_error
        .iter()
        .enumerate()
        .fold(0, |b, (g, &e)| if e < cv_error[b] { g } else { b });
    let lambda = grid[best];
    let ws = path(&full, &grid[..=best]);
    let warm = ws.into_iter().last().unwrap();
    let (w, objective) = full.descend(warm, lambda, LASSO_TOLERANCE);
    Ok(LassoFit {
        model: full.model(w),
        lambda,
        objective,
    })
}

/// Largest violation of the LASSO optimality conditions: `|g_j| <= lambda`
/// for zero weights and `g_j = -lambda * sign(w_j)` otherwise, where `g` is
/// the gradient of `RSS / 2n`.
pub fn kkt_violation(x: &[Vec<f64>], y: &[f64], model: &LinearModel, lambda: f64) -> f64 {
    let n = y.len() as f64;
    let r: Vec<f64> = x.iter().zip(y).map(|(row, &t)| t - model.predict(row)).collect();
    model
        .weights
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            let g = -x.iter().zip(&r).map(|(row, ri)| row[j] * ri).sum::<f64>() / n;
            if w == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g + lambda * w.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::Rng;

    pub(crate) fn random_problem(n: usize, p: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<f64> = (0..p)
            .map(|j| if j % 3 == 0 { 0.0 } else { rng.random_range(-5.0..5.0) })
            .collect();
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random::<f64>()).collect()).collect();
        let y = x
            .iter()
            .map(|r| 3.0 + r.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-0.5..0.5))
            .collect();
        (x, y)
    }

    #[test]
    fn exact_line() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 * i as f64 + 1.0).collect();
        let m = fit_lr(&x, &y).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-8);
        assert!((m.intercept - 1.0).abs() < 1e-8);
    }

    #[test]
    fn constant_target() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let m = fit_lr(&x, &[4.0; 6]).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-10));
        assert!((m.intercept - 4.0).abs() < 1e-10);
    }

    #[test]
    fn residuals_orthogonal_to_columns() {
        let (x, y) = random_problem(40, 6, 3);
        let m = fit_lr(&x, &y).unwrap();
        let r: Vec<f64> = x.iter().zip(&y).map(|(row, t)| t - m.predict(row)).collect();
        assert!(r.iter().sum::<f64>().abs() < 1e-6);
        for j in 0..6 {
            let dot: f64 = x.iter().zip(&r).map(|(row, ri)| row[j] * ri).sum();
            assert!(dot.abs() < 1e-6);
        }
    }

    #[test]
    fn collinear_columns_use_jitter() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..8).map(|i| 5.0 * i as f64).collect();
        let m = fit_lr(&x, &y).unwrap();
        for (row, t) in x.iter().zip(&y) {
            assert!((m.predict(row) - t).abs() < 1e-4);
        }
    }

    #[test]
    fn lasso_above_lambda_max_is_constant() {
        let (x, y) = random_problem(30, 5, 1);
        let lmax = lambda_max(&x, &y).unwrap();
        let fit = fit_lasso_at(&x, &y, lmax * 1.0001).unwrap();
        assert!(fit.model.weights.iter().all(|&w| w == 0.0));
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((fit.model.intercept - mean).abs() < 1e-12);
        let below = fit_lasso_at(&x, &y, lmax * 0.9).unwrap();
        assert!(below.model.weights.iter().any(|&w| w != 0.0));
    }

    #[test]
    fn lasso_zero_penalty_is_least_squares() {
        let (x, y) = random_problem(50, 5, 9);
        let ols = fit_lr(&x, &y).unwrap();
        let las = fit_lasso_at(&x, &y, 0.0).unwrap();
        for (a, b) in ols.weights.iter().zip(&las.model.weights) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn lasso_cv_is_deterministic_and_optimal() {
        let (x, y) = random_problem(40, 6, 5);
        let a = fit_lasso(&x, &y, &LassoParams::default(), 42).unwrap();
        let b = fit_lasso(&x, &y, &LassoParams::default(), 42).unwrap();
        assert_eq!(a, b);
        assert!(kkt_violation(&x, &y, &a.model, a.lambda) < 1e-6);
    }

    #[test]
    fn grid_spans_three_decades() {
        let g = lambda_grid(2.0, 4, 3.0);
        assert_eq!(g[0], 2.0);
        assert!((g[3] - 0.002).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }
}
