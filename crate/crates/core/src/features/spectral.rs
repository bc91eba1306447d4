//! Algebraic connectivity and node-removal robustness curves.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::SimpleGraph;
use crate::types::Asn;

pub const EIGEN_TOLERANCE: f64 = 1e-8;

fn laplacian_apply(g: &SimpleGraph, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        g.n(),
        (0..g.n()).map(|v| g.degree(v) as f64 * x[v] - g.adj[v].iter().map(|&w| x[w]).sum::<f64>()),
    )
}

/// Second-smallest Laplacian eigenvalue.
///
/// Lanczos iteration on the Laplacian restricted to the complement of the
/// constant vector, with full reorthogonalization. Stops when the residual of
/// the smallest Ritz pair drops below `tol`. Graphs with fewer than two nodes
/// give 0.
pub fn algebraic_connectivity_with(g: &SimpleGraph, tol: f64) -> f64 {
    let n = g.n();
    if n < 2 {
        return 0.0;
    }
    let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let deflate = |v: &mut DVector<f64>| {
        let c = ones.dot(v);
        v.axpy(-c, &ones, 1.0);
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q = DVector::from_iterator(n, (0..n).map(|_| rng.random::<f64>() - 0.5));
    deflate(&mut q);
    q /= q.norm();

    let max_steps = n - 1;
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(max_steps);
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut estimate = f64::NAN;

    for k in 0..max_steps {
        basis.push(q.clone());
        let mut w = laplacian_apply(g, &q);
        let a = q.dot(&w);
        alpha.push(a);
        // two passes of Gram-Schmidt against the whole basis
        for _ in 0..2 {
            deflate(&mut w);
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let b_next = w.norm();

        let m = alpha.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (imin, &theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let residual = (b_next * eig.eigenvectors[(m - 1, imin)]).abs();
        estimate = theta;
        let scale = theta.abs().max(1.0);
        if residual <= tol * scale || b_next <= tol * scale || k + 1 == max_steps {
            break;
        }
        beta.push(b_next);
        q = w / b_next;
    }
    estimate.max(0.0)
}

pub fn algebraic_connectivity(g: &SimpleGraph) -> f64 {
    algebraic_connectivity_with(g, EIGEN_TOLERANCE)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RobustnessMetric {
    AlgebraicConnectivity,
    LargestComponentFraction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessCurve {
    /// Raw metric after 0, 1, ... removals.
    pub raw: Vec<f64>,
    /// Curve divided by its first value and capped at 1.
    pub normalized: Vec<f64>,
    /// Trapezoid area over the removal range mapped to [0, 1].
    pub auc: f64,
}

fn measure(g: &SimpleGraph, alive: &[bool], total: usize, metric: RobustnessMetric) -> f64 {
    let keep: Vec<usize> = (0..g.n()).filter(|&v| alive[v]).collect();
    let sub = g.induced(&keep);
    let lcc = sub.largest_component();
    match metric {
        RobustnessMetric::LargestComponentFraction => {
            if total == 0 {
                0.0
            } else {
                lcc.len() as f64 / total as f64
            }
        }
        RobustnessMetric::AlgebraicConnectivity => {
            if lcc.len() < 2 {
                0.0
            } else {
                algebraic_connectivity(&sub.induced(&lcc))
            }
        }
    }
}

/// Removes nodes tier by tier (ASNs; those not in `g` are skipped), up to
/// `ceil(depth * n)` removals, measuring the metric on the largest connected
/// component. The curve has one point per removed node: inside a tier it is
/// interpolated linearly between the values before and after removing the
/// whole tier, so it does not depend on how tied nodes are labelled.
///
/// Zero removals give an AUC of 1. A curve whose first value is 0 has AUC 0.
pub fn robustness_auc(g: &SimpleGraph, tiers: &[Vec<Asn>], metric: RobustnessMetric, depth: f64) -> RobustnessCurve {
    let n = g.n();
    let index: std::collections::HashMap<Asn, usize> = g.labels.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let groups: Vec<Vec<usize>> = tiers
        .iter()
        .map(|t| t.iter().filter_map(|a| index.get(a).copied()).collect::<Vec<_>>())
        .filter(|t| !t.is_empty())
        .collect();
    let removable: usize = groups.iter().map(Vec::len).sum();
    let steps = ((depth * n as f64).ceil() as usize).min(removable);

    let mut alive = vec![true; n];
    let mut raw = Vec::with_capacity(steps + 1);
    let mut before = measure(g, &alive, n, metric);
    raw.push(before);
    for group in &groups {
        if raw.len() > steps {
            break;
        }
        for &v in group {
            alive[v] = false;
        }
        let after = measure(g, &alive, n, metric);
        let len = group.len();
        for i in 1..=len.min(steps + 1 - raw.len()) {
            raw.push(if i == len {
                after
            } else {
                before + (after - before) * i as f64 / len as f64
            });
        }
        before = after;
    }

    let first = raw[0];
    let normalized: Vec<f64> = if first > 0.0 {
        raw.iter().map(|&x| (x / first).min(1.0)).collect()
    } else {
        vec![0.0; raw.len()]
    };
    let auc = if steps == 0 {
        normalized[0]
    } else {
        let h = 1.0 / steps as f64;
        normalized.windows(2).map(|w| 0.5 * (w[0] + w[1]) * h).sum()
    };
    RobustnessCurve { raw, normalized, auc }
}

#[cfg(test)]
mod tests {
    use super::super::graph::tests::{complete, path, random};
    use super::*;

    fn dense_lambda2(g: &SimpleGraph) -> f64 {
        let n = g.n();
        let mut l = DMatrix::zeros(n, n);
        for v in 0..n {
            l[(v, v)] = g.degree(v) as f64;
            for &w in &g.adj[v] {
                l[(v, w)] = -1.0;
            }
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(l).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev[1]
    }

    #[test]
    fn complete_graph_spectrum() {
        for n in 4..=10 {
            assert!((algebraic_connectivity(&complete(n)) - n as f64).abs() < 1e-6);
        }
        assert!((algebraic_connectivity(&complete(5)) - 5.0).abs() < 1e-6);
    }

    #[test]
    fn path_graph_spectrum() {
        let expected = 2.0 - 2f64.sqrt();
        assert!((algebraic_connectivity(&path(4)) - expected).abs() < 1e-6);
        assert!((dense_lambda2(&path(4)) - expected).abs() < 1e-9);
    }

    #[test]
    fn matches_dense_solver() {
        for seed in 0..20 {
            let g = random(8 + (seed as usize % 20), 0.35, seed);
            let lcc = g.induced(&g.largest_component());
            if lcc.n() < 2 {
                continue;
            }
            let a = algebraic_connectivity(&lcc);
            let b = dense_lambda2(&lcc);
            assert!((a - b).abs() < 1e-6, "seed {seed}: {a} vs {b}");
        }
    }

    #[test]
    fn disconnected_graph_has_zero_connectivity() {
        let g = super::super::graph::tests::graph(4, &[(0, 1), (2, 3)]);
        assert!(algebraic_connectivity(&g).abs() < 1e-8);
    }

    #[test]
    fn no_removal_gives_unit_auc() {
        let g = complete(5);
        let c = robustness_auc(&g, &[vec![0], vec![1]], RobustnessMetric::AlgebraicConnectivity, 0.0);
        assert_eq!(c.auc, 1.0);
        assert_eq!(c.raw.len(), 1);
    }

    #[test]
    fn star_hub_removal_collapses_component_fraction() {
        let g = super::super::graph::tests::graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        // ceil(0.3 * 5) = 2 removals
        let c = robustness_auc(
            &g,
            &[vec![0], vec![1], vec![2]],
            RobustnessMetric::LargestComponentFraction,
            0.3,
        );
        assert_eq!(c.raw, vec![1.0, 0.2, 0.2]);
        assert!((c.auc - (0.5 * 1.2 + 0.5 * 0.4) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn component_fraction_curve_never_rises() {
        for seed in 0..10 {
            let g = random(15, 0.2, seed);
            let order: Vec<Vec<Asn>> = g.labels.iter().map(|&a| vec![a]).collect();
            let c = robustness_auc(&g, &order, RobustnessMetric::LargestComponentFraction, 0.3);
            for w in c.raw.windows(2) {
                assert!(w[1] <= w[0]);
            }
            assert!((0.0..=1.0).contains(&c.auc));
            let a = robustness_auc(&g, &order, RobustnessMetric::AlgebraicConnectivity, 0.3);
            assert!((0.0..=1.0).contains(&a.auc));
        }
    }

    #[test]
    fn tied_removals_are_interpolated() {
        // hub 0 with two leaf pairs hanging off 1 and 2
        let g = super::super::graph::tests::graph(5, &[(0, 1), (0, 2), (1, 3), (2, 4)]);
        let c = robustness_auc(
            &g,
            &[vec![1, 2], vec![0]],
            RobustnessMetric::LargestComponentFraction,
            0.6,
        );
        // removing {1,2} leaves components {0},{3},{4}: 1/5
        assert_eq!(c.raw.len(), 4);
        assert!((c.raw[1] - 0.6).abs() < 1e-12);
        assert_eq!(c.raw[2], 0.2);
        let swapped = robustness_auc(
            &g,
            &[vec![2, 1], vec![0]],
            RobustnessMetric::LargestComponentFraction,
            0.6,
        );
        assert_eq!(c, swapped);
    }

    #[test]
    fn cutoff_inside_a_tier() {
        let g = complete(4);
        let c = robustness_auc(&g, &[vec![0, 1, 2, 3]], RobustnessMetric::LargestComponentFraction, 0.5);
        assert_eq!(c.raw.len(), 3);
        assert!((c.raw[1] - 0.75).abs() < 1e-12 && (c.raw[2] - 0.5).abs() < 1e-12);
    }
}
