//! Order conditions, error coefficients and the fitness built from them.
//!
//! A tableau is of order `q` iff `sum_j w_j Phi_j(t) = 1/gamma(t)` for every
//! rooted tree with at most `q` nodes. The error coefficient of a tree is
//! `e(t) = 1 - gamma(t) * sum_j w_j Phi_j(t)`; per-order metrics and the
//! fitness are alpha-weighted means of `|e(t)|`.

use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tableau::{parameter_count, ButcherTableau};
use crate::trees::{cumulative_counts, trees_by_order, RootedTree, MAX_ORDER};

pub const DEFAULT_EPS_BASE: f64 = 1e-15;
pub const DEFAULT_AMPLIFICATION: f64 = 4.0;

/// Feasibility thresholds `c_p`, indexed by order starting at 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    values: Vec<f64>,
}

impl Thresholds {
    /// `c_p = N_p * amplification * eps_base`, where `N_p` is the number of
    /// trees of order at most `p`.
    pub fn from_counts(max_order: usize, eps_base: f64, amplification: f64) -> Result<Self> {
        if !(eps_base > 0.0 && amplification > 0.0) {
            return Err(Error::Config(
                "eps-base and amplification must be positive".into(),
            ));
        }
        let counts = cumulative_counts(max_order)?;
        Ok(Thresholds {
            values: counts
                .into_iter()
                .map(|n| n as f64 * amplification * eps_base)
                .collect(),
        })
    }

    pub fn default_for(max_order: usize) -> Result<Self> {
        Self::from_counts(max_order, DEFAULT_EPS_BASE, DEFAULT_AMPLIFICATION)
    }

    /// The same threshold for every order.
    pub fn uniform(max_order: usize, tol: f64) -> Self {
        Thresholds {
            values: vec![tol; max_order],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Thresholds { values }
    }

    /// `c_p` for `p >= 1`.
    pub fn get(&self, order: usize) -> f64 {
        self.values[order - 1]
    }

    pub fn max_order(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One tree of a [`ConditionSystem`].
#[derive(Clone, Debug)]
pub struct TreeCondition {
    pub tree: RootedTree,
    pub gamma: u64,
    pub alpha: u64,
    /// `alpha / sum(alpha)` over every tree of the system.
    pub weight: f64,
    children: Vec<usize>,
}

/// The residual system for orders `1..=max_order + 1` of an `s`-stage method.
///
/// Trees are stored bottom-up so that every child of a tree precedes it; one
/// pass over the list computes all elementary weights of a candidate.
#[derive(Clone, Debug)]
pub struct ConditionSystem {
    stages: usize,
    max_order: usize,
    explicit: bool,
    trees: Vec<TreeCondition>,
    ranges: Vec<Range<usize>>,
    alpha_per_order: Vec<f64>,
    thresholds: Thresholds,
}

/// Error coefficients and per-order metrics of one candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub errors: Vec<f64>,
    /// `metrics[p - 1]` is the order-`p` metric.
    pub metrics: Vec<f64>,
}

impl ConditionSystem {
    /// Conditions for order `max_order` plus the next order, with default
    /// thresholds.
    pub fn new(stages: usize, max_order: usize, explicit: bool) -> Result<Self> {
        if stages == 0 {
            return Err(Error::Bounds {
                what: "stages",
                value: 0,
                min: 1,
                max: usize::MAX,
            });
        }
        if !(1..MAX_ORDER).contains(&max_order) {
            return Err(Error::Bounds {
                what: "order",
                value: max_order,
                min: 1,
                max: MAX_ORDER - 1,
            });
        }
        let levels = trees_by_order(max_order + 1)?;
        let mut trees: Vec<TreeCondition> = Vec::new();
        let mut ranges = Vec::new();
        for level in levels {
            let start = trees.len();
            for tree in level {
                let children = tree
                    .children()
                    .iter()
                    .map(|child| {
                        trees
                            .iter()
                            .position(|tc| &tc.tree == child)
                            .expect("children precede parents")
                    })
                    .collect();
                trees.push(TreeCondition {
                    gamma: tree.gamma(),
                    alpha: tree.alpha(),
                    weight: 0.0,
                    tree,
                    children,
                });
            }
            ranges.push(start..trees.len());
        }
        let alpha_per_order: Vec<f64> = ranges
            .iter()
            .map(|r| trees[r.clone()].iter().map(|t| t.alpha as f64).sum())
            .collect();
        let total: f64 = alpha_per_order.iter().sum();
        for t in &mut trees {
            t.weight = t.alpha as f64 / total;
        }
        Ok(ConditionSystem {
            stages,
            max_order,
            explicit,
            trees,
            ranges,
            alpha_per_order,
            thresholds: Thresholds::default_for(max_order + 1)?,
        })
    }

    pub fn with_thresholds(mut self, thresholds: Thresholds) -> Result<Self> {
        if thresholds.max_order() < self.max_order + 1 {
            return Err(Error::Dimension {
                context: "thresholds",
                expected: self.max_order + 1,
                found: thresholds.max_order(),
            });
        }
        self.thresholds = thresholds;
        Ok(self)
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    /// The target order `q`; trees go up to `q + 1`.
    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn is_explicit(&self) -> bool {
        self.explicit
    }

    pub fn dimension(&self) -> usize {
        parameter_count(self.stages, self.explicit)
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn trees(&self) -> &[TreeCondition] {
        &self.trees
    }

    /// Trees of order `p`.
    pub fn trees_of_order(&self, order: usize) -> &[TreeCondition] {
        &self.trees[self.ranges[order - 1].clone()]
    }

    pub fn order_range(&self, order: usize) -> Range<usize> {
        self.ranges[order - 1].clone()
    }

    /// Sum of alpha over the trees of order `p`.
    pub fn alpha_sum(&self, order: usize) -> f64 {
        self.alpha_per_order[order - 1]
    }

    pub fn evaluate(&self, tableau: &ButcherTableau) -> Result<Evaluation> {
        if tableau.stages() != self.stages {
            return Err(Error::Dimension {
                context: "condition system stages",
                expected: self.stages,
                found: tableau.stages(),
            });
        }
        let a: Vec<f64> = tableau.a_rows().concat();
        Ok(self.evaluate_raw(&a, tableau.weights(), tableau.is_explicit()))
    }

    /// Evaluates a flat parameter vector in this system's layout.
    pub fn evaluate_params(&self, x: &[f64]) -> Evaluation {
        let s = self.stages;
        assert_eq!(x.len(), self.dimension(), "parameter vector length");
        let mut a = vec![0.0; s * s];
        let n_a = x.len() - s;
        if self.explicit {
            let mut k = 0;
            for i in 1..s {
                a[i * s..i * s + i].copy_from_slice(&x[k..k + i]);
                k += i;
            }
        } else {
            a.copy_from_slice(&x[..n_a]);
        }
        self.evaluate_raw(&a, &x[n_a..], self.explicit)
    }

    fn evaluate_raw(&self, a: &[f64], w: &[f64], lower_only: bool) -> Evaluation {
        let s = self.stages;
        let n = self.trees.len();
        // phi[t*s + j] = Phi_j(t); aphi = A * phi
        let mut phi = vec![1.0; n * s];
        let mut aphi = vec![0.0; n * s];
        let mut errors = Vec::with_capacity(n);
        for (idx, tc) in self.trees.iter().enumerate() {
            let own = &mut phi[idx * s..(idx + 1) * s];
            for &child in &tc.children {
                for j in 0..s {
                    own[j] *= aphi[child * s + j];
                }
            }
            let mut dot = 0.0;
            for j in 0..s {
                dot += w[j] * own[j];
            }
            errors.push(1.0 - tc.gamma as f64 * dot);
            for i in 0..s {
                let row = &a[i * s..(i + 1) * s];
                let cols = if lower_only { i } else { s };
                let mut acc = 0.0;
                for k in 0..cols {
                    acc += row[k] * own[k];
                }
                aphi[idx * s + i] = acc;
            }
        }
        let metrics = self
            .ranges
            .iter()
            .zip(&self.alpha_per_order)
            .map(|(range, alpha_sum)| {
                self.trees[range.clone()]
                    .iter()
                    .zip(&errors[range.clone()])
                    .map(|(tc, e)| tc.alpha as f64 * e.abs())
                    .sum::<f64>()
                    / alpha_sum
            })
            .collect();
        Evaluation { errors, metrics }
    }

    /// alpha-weighted mean of `|e(t)|` over every tree up to order `q + 1`.
    pub fn fitness_of(&self, eval: &Evaluation) -> f64 {
        let total: f64 = self.alpha_per_order.iter().sum();
        self.alpha_per_order
            .iter()
            .zip(&eval.metrics)
            .map(|(w, m)| w * m)
            .sum::<f64>()
            / total
    }

    /// Fitness for a lower target order `q <= max_order`, i.e. over trees up
    /// to order `q + 1` only.
    pub fn fitness_through(&self, eval: &Evaluation, target: usize) -> f64 {
        let orders = (target + 1).min(self.alpha_per_order.len());
        let alphas = &self.alpha_per_order[..orders];
        alphas
            .iter()
            .zip(&eval.metrics)
            .map(|(w, m)| w * m)
            .sum::<f64>()
            / alphas.iter().sum::<f64>()
    }

    pub fn fitness_params(&self, x: &[f64]) -> f64 {
        self.fitness_of(&self.evaluate_params(x))
    }

    /// Highest `p <= limit` such that every order up to `p` is below its
    /// threshold (0 if order 1 already fails).
    pub fn feasible_order(&self, eval: &Evaluation, limit: usize) -> usize {
        eval.metrics
            .iter()
            .take(limit)
            .enumerate()
            .take_while(|(i, m)| **m < self.thresholds.get(i + 1))
            .count()
    }
}

/// `Phi_j(tree)` for every stage `j`, by direct recursion.
pub fn elementary_weights(tableau: &ButcherTableau, tree: &RootedTree) -> Vec<f64> {
    let s = tableau.stages();
    let mut phi = vec![1.0; s];
    for child in tree.children() {
        let inner = elementary_weights(tableau, child);
        for (j, p) in phi.iter_mut().enumerate() {
            let row = tableau.a_row(j);
            *p *= row.iter().zip(&inner).map(|(a, v)| a * v).sum::<f64>();
        }
    }
    phi
}

pub fn error_coefficient(tableau: &ButcherTableau, tree: &RootedTree) -> f64 {
    let phi = elementary_weights(tableau, tree);
    let dot: f64 = tableau.weights().iter().zip(&phi).map(|(w, p)| w * p).sum();
    1.0 - tree.gamma() as f64 * dot
}

/// alpha-weighted mean of `|e(t)|` over the trees of order `p`.
pub fn order_metric(tableau: &ButcherTableau, order: usize) -> Result<f64> {
    let levels = trees_by_order(order)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for tree in &levels[order - 1] {
        let alpha = tree.alpha() as f64;
        num += alpha * error_coefficient(tableau, tree).abs();
        den += alpha;
    }
    Ok(num / den)
}

/// Fitness for target order `q`: alpha-weighted mean of `|e(t)|` over every
/// tree with at most `q + 1` nodes.
pub fn fitness(tableau: &ButcherTableau, order: usize) -> Result<f64> {
    let system = ConditionSystem::new(tableau.stages(), order, tableau.is_explicit())?;
    Ok(system.fitness_of(&system.evaluate(tableau)?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderLine {
    pub order: usize,
    pub metric: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub order: usize,
    pub lines: Vec<OrderLine>,
    pub feasible: bool,
}

/// True iff the order-`p` metric is below `c_p` for every `p <= order`.
pub fn is_feasible_to_order(
    tableau: &ButcherTableau,
    order: usize,
    thresholds: &Thresholds,
) -> Result<FeasibilityReport> {
    if thresholds.max_order() < order {
        return Err(Error::Dimension {
            context: "thresholds",
            expected: order,
            found: thresholds.max_order(),
        });
    }
    let mut lines = Vec::with_capacity(order);
    for p in 1..=order {
        let metric = order_metric(tableau, p)?;
        let threshold = thresholds.get(p);
        lines.push(OrderLine {
            order: p,
            metric,
            threshold,
            pass: metric < threshold,
        });
    }
    let feasible = lines.iter().all(|l| l.pass);
    Ok(FeasibilityReport {
        order,
        lines,
        feasible,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TreeLine {
    pub tree: String,
    pub order: usize,
    pub gamma: u64,
    pub alpha: u64,
    pub error: f64,
}

/// Everything the `verify` command reports about one tableau.
#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub stages: usize,
    pub explicit: bool,
    pub order: usize,
    pub feasible: bool,
    pub fitness: f64,
    /// Metrics for orders `1..=order + 1`; the last line is informational.
    pub metrics: Vec<OrderLine>,
    pub trees: Vec<TreeLine>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical_local_slope: Option<f64>,
}

pub fn verify(
    tableau: &ButcherTableau,
    order: usize,
    thresholds: &Thresholds,
) -> Result<VerificationReport> {
    if thresholds.max_order() < order {
        return Err(Error::Dimension {
            context: "thresholds",
            expected: order,
            found: thresholds.max_order(),
        });
    }
    let system = ConditionSystem::new(tableau.stages(), order, tableau.is_explicit())?;
    let eval = system.evaluate(tableau)?;
    let metrics: Vec<OrderLine> = eval
        .metrics
        .iter()
        .enumerate()
        .map(|(i, &metric)| {
            let p = i + 1;
            let threshold = if p <= thresholds.max_order() {
                thresholds.get(p)
            } else {
                f64::NAN
            };
            OrderLine {
                order: p,
                metric,
                threshold,
                pass: metric < threshold,
            }
        })
        .collect();
    let feasible = metrics[..order].iter().all(|l| l.pass);
    let trees = system
        .trees()
        .iter()
        .zip(&eval.errors)
        .map(|(tc, &error)| TreeLine {
            tree: tc.tree.to_string(),
            order: tc.tree.order(),
            gamma: tc.gamma,
            alpha: tc.alpha,
            error,
        })
        .collect();
    Ok(VerificationReport {
        stages: tableau.stages(),
        explicit: tableau.is_explicit(),
        order,
        feasible,
        fitness: system.fitness_of(&eval),
        metrics,
        trees,
        empirical_local_slope: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rk4() -> ButcherTableau {
        ButcherTableau::classical_rk4()
    }

    #[test]
    fn leaf_weights_are_ones() {
        let t = ButcherTableau::from_vector(&[0.3, -1.0, 2.0, 0.1, 0.2, 0.7], 3, true).unwrap();
        assert_eq!(elementary_weights(&t, &RootedTree::leaf()), vec![1.0; 3]);
    }

    #[test]
    fn printed_example_one_tableau_is_only_first_order() {
        // w = (0, 1), a21 = 1 gives w2*a21 = 1, so the order-2 condition fails.
        let t = ButcherTableau::from_vector(&[1.0, 0.0, 1.0], 2, true).unwrap();
        assert_eq!(error_coefficient(&t, &RootedTree::leaf()), 0.0);
        assert_eq!(error_coefficient(&t, &RootedTree::chain(2)), -1.0);
        let mid = ButcherTableau::explicit_midpoint();
        assert_eq!(error_coefficient(&mid, &RootedTree::chain(2)), 0.0);
    }

    #[test]
    fn rk4_errors_vanish_through_order_four() {
        for level in trees_by_order(4).unwrap() {
            for tree in level {
                assert!(error_coefficient(&rk4(), &tree).abs() <= 1e-15, "{tree}");
            }
        }
    }

    #[test]
    fn rk4_metrics() {
        assert!(order_metric(&rk4(), 4).unwrap() <= 1e-15);
        let m5 = order_metric(&rk4(), 5).unwrap();
        // Hand-summed: alpha-weighted |e| over the nine order-5 trees of RK4.
        assert!((m5 - 0.17534722222222218).abs() < 1e-15, "{m5}");
    }

    #[test]
    fn zero_weights_fail_order_one() {
        let t = ButcherTableau::from_vector(&[0.4, 0.0, 0.0], 2, true).unwrap();
        assert_eq!(order_metric(&t, 1).unwrap(), 1.0);
    }

    #[test]
    fn rk4_feasibility() {
        let thr = Thresholds::default_for(6).unwrap();
        assert!(is_feasible_to_order(&rk4(), 4, &thr).unwrap().feasible);
        assert!(!is_feasible_to_order(&rk4(), 5, &thr).unwrap().feasible);
    }

    #[test]
    fn default_thresholds_match_the_reference_table() {
        let thr = Thresholds::default_for(10).unwrap();
        assert_eq!(thr.get(1), 4e-15);
        assert_eq!(thr.get(4), 3.2e-14);
        assert_eq!(thr.get(10), 4.82e-12);
    }

    #[test]
    fn weights_lie_on_the_simplex() {
        for q in 1..=6 {
            let sys = ConditionSystem::new(3, q, true).unwrap();
            let sum: f64 = sys.trees().iter().map(|t| t.weight).sum();
            assert!((sum - 1.0).abs() < 1e-15);
            assert!(sys.trees().iter().all(|t| t.weight > 0.0));
        }
    }

    #[test]
    fn system_matches_direct_recursion() {
        let x = [0.3, -0.2, 0.9, 0.1, 0.25, 0.65];
        let t = ButcherTableau::from_vector(&x, 3, true).unwrap();
        let sys = ConditionSystem::new(3, 4, true).unwrap();
        let eval = sys.evaluate_params(&x);
        for (tc, e) in sys.trees().iter().zip(&eval.errors) {
            let direct = error_coefficient(&t, &tc.tree);
            assert!((e - direct).abs() <= 4.0 * f64::EPSILON * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn explicit_weights_ignore_later_rows() {
        let base = [0.3, -0.2, 0.9, 0.1, 0.25, 0.65, 0.5, 0.5, 0.5, 0.2];
        let t = ButcherTableau::from_vector(&base, 4, true).unwrap();
        let mut perturbed = base;
        // Row 3 (a41, a42, a43) only feeds Phi_4.
        perturbed[3] += 1.0;
        perturbed[4] -= 2.0;
        perturbed[5] += 0.5;
        let u = ButcherTableau::from_vector(&perturbed, 4, true).unwrap();
        for level in trees_by_order(5).unwrap() {
            for tree in level {
                let p = elementary_weights(&t, &tree);
                let q = elementary_weights(&u, &tree);
                assert_eq!(&p[..3], &q[..3], "{tree}");
            }
        }
    }

    #[test]
    fn feasible_order_counts_leading_passes() {
        let sys = ConditionSystem::new(4, 4, true).unwrap();
        let eval = sys.evaluate(&rk4()).unwrap();
        assert_eq!(sys.feasible_order(&eval, 5), 4);
        assert_eq!(sys.feasible_order(&eval, 3), 3);
    }

    #[test]
    fn stage_mismatch_is_reported() {
        let sys = ConditionSystem::new(3, 3, true).unwrap();
        assert!(matches!(sys.evaluate(&rk4()), Err(Error::Dimension { .. })));
    }

    proptest! {
        #[test]
        fn fitness_decomposes_over_orders(x in proptest::collection::vec(-1.0f64..1.0, 10), q in 1usize..5) {
            let t = ButcherTableau::from_vector(&x, 4, true).unwrap();
            let sys = ConditionSystem::new(4, q, true).unwrap();
            let f = fitness(&t, q).unwrap();
            let mut num = 0.0;
            let mut den = 0.0;
            for p in 1..=q + 1 {
                num += sys.alpha_sum(p) * order_metric(&t, p).unwrap();
                den += sys.alpha_sum(p);
            }
            prop_assert!((f - num / den).abs() <= 1e-14 * (1.0 + f.abs()));
        }

        #[test]
        fn metric_ignores_tree_order(x in proptest::collection::vec(-1.0f64..1.0, 10)) {
            let t = ButcherTableau::from_vector(&x, 4, true).unwrap();
            let levels = trees_by_order(5).unwrap();
            let forward = order_metric(&t, 5).unwrap();
            let mut rev = levels[4].clone();
            rev.reverse();
            let num: f64 = rev.iter().map(|tr| tr.alpha() as f64 * error_coefficient(&t, tr).abs()).sum();
            let den: f64 = rev.iter().map(|tr| tr.alpha() as f64).sum();
            prop_assert!((forward - num / den).abs() <= 4.0 * f64::EPSILON * forward);
        }
    }
}
