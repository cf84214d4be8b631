//! Total-variation ambiguity at a single node.
//!
//! For a node with children values `h` and nominal conditional probabilities
//! `q`, the worst-case expectation over `{p : TV(p, q) <= gamma}` equals the
//! risk measure `gamma * sup(h) + (1 - gamma) * CVaR_gamma(h)`. This module
//! evaluates that closed form, produces a maximizing distribution, solves the
//! restricted problem where some children are forced to zero probability, and
//! assigns children to the four primal categories used for effectiveness
//! identification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Sense};

/// Tolerance on probability masses (sums, budget comparisons).
pub const MASS_TOL: f64 = 1e-10;
/// Comparisons of a cumulative mass against a level such as `gamma`.
const LEVEL_TOL: f64 = 1e-12;

/// Equality tolerance on cost values, scaled by the largest value.
pub fn value_tol(sup: f64) -> f64 {
    1e-9 * sup.abs().max(1.0)
}

/// Child values with their nominal conditional probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDist {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl FiniteDist {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(Error::ParamOutOfRange(format!(
                "distribution needs matching non-empty vectors, got {} values and {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ParamOutOfRange("non-finite value in distribution".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::ParamOutOfRange("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::ParamOutOfRange(format!("probabilities sum to {total}")));
        }
        Ok(FiniteDist { values, probs })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest value over every child, including zero-probability ones.
    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(h, q)| h * q).sum()
    }

    fn tol(&self) -> f64 {
        value_tol(self.sup())
    }

    /// Child indices sorted by value, canonical order among equal values.
    fn ascending(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(a.cmp(&b)));
        order
    }
}

/// Nominal mass of the children whose value is at most `eta`.
pub fn psi(dist: &FiniteDist, eta: f64) -> f64 {
    let tol = dist.tol();
    dist.values
        .iter()
        .zip(&dist.probs)
        .filter(|(h, _)| **h <= eta + tol)
        .map(|(_, q)| q)
        .sum()
}

/// Left `beta`-quantile `inf{eta : psi(eta) >= beta}`; `beta = 0` gives the minimum.
pub fn var_level(dist: &FiniteDist, beta: f64) -> f64 {
    let order = dist.ascending();
    if beta <= 0.0 {
        return dist.values[order[0]];
    }
    let tol = dist.tol();
    let mut cum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let level = dist.values[order[k]];
        while k < order.len() && dist.values[order[k]] <= level + tol {
            cum += dist.probs[order[k]];
            k += 1;
        }
        if cum >= beta - LEVEL_TOL {
            return level;
        }
    }
    // beta within rounding of 1: the largest supported value.
    order
        .iter()
        .rev()
        .find(|&&i| dist.probs[i] > 0.0)
        .map(|&i| dist.values[i])
        .unwrap_or_else(|| dist.sup())
}

/// Largest value among children with positive nominal mass.
fn supported_sup(dist: &FiniteDist) -> f64 {
    dist.values
        .iter()
        .zip(&dist.probs)
        .filter(|(_, q)| **q > 0.0)
        .map(|(h, _)| *h)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Conditional value-at-risk of the nominal distribution at level `alpha`.
pub fn cvar(dist: &FiniteDist, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        return dist.mean();
    }
    if alpha >= 1.0 {
        return supported_sup(dist);
    }
    let v = var_level(dist, alpha);
    let tol = dist.tol();
    let tail: f64 = dist
        .values
        .iter()
        .zip(&dist.probs)
        .filter(|(h, _)| **h > v + tol)
        .map(|(h, q)| h * q)
        .sum();
    ((psi(dist, v) - alpha) * v + tail) / (1.0 - alpha)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseResult {
    pub value: f64,
    pub dist: Vec<f64>,
    /// False when another distribution in the ball attains the same value.
    pub tight: bool,
}

/// Total-variation distance `0.5 * sum |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn maximizer_is_unique(dist: &FiniteDist, p: &[f64], active: &[bool]) -> bool {
    let tol = dist.tol();
    let n = dist.len();
    for i in 0..n {
        if !active[i] {
            continue;
        }
        for j in (i + 1)..n {
            if !active[j] || (dist.values[i] - dist.values[j]).abs() > tol {
                continue;
            }
            let moved = (p[i] - dist.probs[i]).abs() > MASS_TOL || (p[j] - dist.probs[j]).abs() > MASS_TOL;
            if moved {
                return false;
            }
        }
    }
    true
}

/// Worst-case expectation over the TV ball of radius `gamma` around `q`,
/// with a maximizing distribution.
///
/// The maximizer starts from `q`, drains `min(gamma, 1 - q(argmax))` mass from
/// the lowest values upward, and places it on the first maximal child.
pub fn worst_case_expectation(dist: &FiniteDist, gamma: f64) -> WorstCaseResult {
    let gamma = gamma.clamp(0.0, 1.0);
    let sup = dist.sup();
    let tol = dist.tol();
    let value = if gamma >= 1.0 {
        sup
    } else {
        gamma * sup + (1.0 - gamma) * cvar(dist, gamma)
    };

    let is_top: Vec<bool> = dist.values.iter().map(|h| *h >= sup - tol).collect();
    let top_mass: f64 = dist.probs.iter().zip(&is_top).filter(|(_, t)| **t).map(|(q, _)| q).sum();
    let delta = gamma.min((1.0 - top_mass).max(0.0));
    let mut p = dist.probs.clone();
    let mut left = delta;
    for &i in &dist.ascending() {
        if left <= 0.0 || is_top[i] {
            break;
        }
        let take = p[i].min(left);
        p[i] -= take;
        left -= take;
    }
    let first_top = is_top.iter().position(|t| *t).expect("some child attains the maximum");
    p[first_top] += delta - left.max(0.0);

    debug_assert!(
        (p.iter().zip(&dist.values).map(|(a, h)| a * h).sum::<f64>() - value).abs() <= 1e-9 * value.abs().max(1.0),
        "maximizer and closed form disagree"
    );
    let active = vec![true; dist.len()];
    let tight = maximizer_is_unique(dist, &p, &active);
    WorstCaseResult { value, dist: p, tight }
}

/// Outcome of the restricted worst-case problem.
#[derive(Clone, Debug, PartialEq)]
pub enum Restricted {
    Feasible(WorstCaseResult),
    /// The removed children carry more nominal mass than the radius allows.
    Infeasible,
}

impl Restricted {
    /// Value with the `+inf` convention for an empty ambiguity set.
    pub fn value(&self) -> f64 {
        match self {
            Restricted::Feasible(r) => r.value,
            Restricted::Infeasible => f64::INFINITY,
        }
    }
}

/// Nominal mass that must be moved away when `removed` children get zero probability.
pub fn removed_mass(dist: &FiniteDist, removed: &[usize]) -> f64 {
    let mut seen = vec![false; dist.len()];
    removed
        .iter()
        .filter(|&&i| !std::mem::replace(&mut seen[i], true))
        .map(|&i| dist.probs[i])
        .sum()
}

/// `max p.h` over the TV ball intersected with `{p_i = 0 : i in removed}`,
/// solved as a linear program.
pub fn worst_case_expectation_restricted(dist: &FiniteDist, gamma: f64, removed: &[usize]) -> Result<Restricted> {
    let n = dist.len();
    if let Some(&bad) = removed.iter().find(|&&i| i >= n) {
        return Err(Error::ParamOutOfRange(format!("removed child {bad} out of {n}")));
    }
    let mass = removed_mass(dist, removed);
    if mass > gamma + MASS_TOL {
        return Ok(Restricted::Infeasible);
    }
    let mut active = vec![true; n];
    for &i in removed {
        active[i] = false;
    }

    let mut lp = LinearProgram::new();
    let mut p_var = vec![None; n];
    let mut dev_vars = Vec::new();
    let mut sum_row = Vec::new();
    for i in (0..n).filter(|&i| active[i]) {
        let p = lp.add_nonneg(-dist.values[i]);
        let d = lp.add_nonneg(0.0);
        p_var[i] = Some(p);
        dev_vars.push((d, 1.0));
        sum_row.push((p, 1.0));
        lp.add_row(vec![(d, 1.0), (p, -1.0)], Sense::Ge, -dist.probs[i]);
        lp.add_row(vec![(d, 1.0), (p, 1.0)], Sense::Ge, dist.probs[i]);
    }
    lp.add_row(sum_row, Sense::Eq, 1.0);
    lp.add_row(dev_vars, Sense::Le, (2.0 * gamma - mass).max(0.0));
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Ok(Restricted::Infeasible);
    }
    let p: Vec<f64> = p_var
        .iter()
        .map(|v| v.map_or(0.0, |j| sol.primal[j].max(0.0)))
        .collect();
    let tight = maximizer_is_unique(dist, &p, &active);
    Ok(Restricted::Feasible(WorstCaseResult {
        value: -sol.objective_value,
        dist: p,
        tight,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    C1,
    C2,
    C3,
    C4,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::C1 => "C1",
            Category::C2 => "C2",
            Category::C3 => "C3",
            Category::C4 => "C4",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimalCategories {
    pub labels: Vec<Category>,
    pub var_level: f64,
    pub sup_level: f64,
}

impl PrimalCategories {
    pub fn mass_of(&self, dist: &FiniteDist, cat: Category) -> f64 {
        self.labels
            .iter()
            .zip(dist.probs())
            .filter(|(c, _)| **c == cat)
            .map(|(_, q)| q)
            .sum()
    }

    pub fn count(&self, cat: Category) -> usize {
        self.labels.iter().filter(|c| **c == cat).count()
    }
}

/// Splits children into `h < VaR`, `h = VaR`, `VaR < h < sup` and `h = sup`.
/// A child at both VaR and sup is placed in C4.
pub fn categorize(dist: &FiniteDist, gamma: f64) -> PrimalCategories {
    let var = var_level(dist, gamma);
    let sup = dist.sup();
    let tol = value_tol(sup);
    let labels = dist
        .values
        .iter()
        .map(|&h| {
            if h >= sup - tol {
                Category::C4
            } else if (h - var).abs() <= tol {
                Category::C2
            } else if h < var {
                Category::C1
            } else {
                Category::C3
            }
        })
        .collect();
    PrimalCategories {
        labels,
        var_level: var,
        sup_level: sup,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const THIRD: f64 = 1.0 / 3.0;

    fn d123() -> FiniteDist {
        FiniteDist::new(vec![1.0, 2.0, 3.0], vec![THIRD, THIRD, 1.0 - 2.0 * THIRD]).unwrap()
    }

    /// min over eta of eta + E[(h - eta)+] / (1 - alpha), scanning eta over the support.
    fn cvar_scan(dist: &FiniteDist, alpha: f64) -> f64 {
        dist.values()
            .iter()
            .map(|&eta| {
                eta + dist
                    .values()
                    .iter()
                    .zip(dist.probs())
                    .map(|(h, q)| q * (h - eta).max(0.0))
                    .sum::<f64>()
                    / (1.0 - alpha)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn psi_examples() {
        let d = d123();
        assert_abs_diff_eq!(psi(&d, 2.0), 2.0 * THIRD, epsilon = 1e-15);
        assert_eq!(psi(&d, 0.5), 0.0);
        assert_abs_diff_eq!(psi(&d, 3.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn var_examples() {
        let d = d123();
        assert_eq!(var_level(&d, 0.5), 2.0);
        assert_eq!(var_level(&d, 0.0), 1.0);
        assert_eq!(var_level(&d, 1.0), 3.0);
        assert_eq!(var_level(&d, THIRD), 1.0);
        let z = FiniteDist::new(vec![1.0, 5.0, 2.0], vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(var_level(&z, 1.0), 2.0);
    }

    #[test]
    fn cvar_examples() {
        let d = d123();
        assert_abs_diff_eq!(cvar(&d, 0.0), 2.0, epsilon = 1e-15);
        assert_eq!(cvar(&d, 1.0), 3.0);
        // frozen from cvar_scan
        assert_abs_diff_eq!(cvar_scan(&d, 0.5), 8.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cvar(&d, 0.5), 8.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn worst_case_examples() {
        let d = d123();
        let r = worst_case_expectation(&d, 0.5);
        assert_abs_diff_eq!(r.value, 17.0 / 6.0, epsilon = 1e-12);
        for (a, b) in r.dist.iter().zip([0.0, 1.0 / 6.0, 5.0 / 6.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert!(r.tight);

        let r0 = worst_case_expectation(&d, 0.0);
        assert_abs_diff_eq!(r0.value, 2.0, epsilon = 1e-15);
        assert_eq!(r0.dist, d.probs().to_vec());

        let r1 = worst_case_expectation(&d, 1.0);
        assert_eq!(r1.value, 3.0);
        assert_abs_diff_eq!(r1.dist[2], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn worst_case_ties_go_to_first_max() {
        let d = FiniteDist::new(vec![4.0, 1.0, 4.0], vec![0.25, 0.5, 0.25]).unwrap();
        let r = worst_case_expectation(&d, 0.2);
        assert_abs_diff_eq!(r.dist[0], 0.45, epsilon = 1e-15);
        assert_abs_diff_eq!(r.dist[2], 0.25, epsilon = 1e-15);
        assert!(!r.tight);
    }

    #[test]
    fn restricted_examples() {
        let d = d123();
        let Restricted::Feasible(r) = worst_case_expectation_restricted(&d, 0.5, &[1]).unwrap() else {
            panic!("expected feasible");
        };
        assert_abs_diff_eq!(r.value, 16.0 / 6.0, epsilon = 1e-9);
        for (a, b) in r.dist.iter().zip([1.0 / 6.0, 0.0, 5.0 / 6.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }
        assert_eq!(worst_case_expectation_restricted(&d, 0.5, &[0, 1, 2]).unwrap(), Restricted::Infeasible);
        assert_eq!(Restricted::Infeasible.value(), f64::INFINITY);
    }

    #[test]
    fn restricted_zero_mass_child_is_nonbinding() {
        let d = FiniteDist::new(vec![1.0, 2.0, 3.0, 0.5], vec![0.3, 0.3, 0.4, 0.0]).unwrap();
        for gamma in [0.0, 0.2, 0.7, 1.0] {
            let full = worst_case_expectation(&d, gamma).value;
            let r = worst_case_expectation_restricted(&d, gamma, &[3]).unwrap();
            assert_abs_diff_eq!(r.value(), full, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_radius_restriction_is_infeasible() {
        let d = d123();
        assert_eq!(worst_case_expectation_restricted(&d, 0.0, &[2]).unwrap(), Restricted::Infeasible);
    }

    #[test]
    fn categorize_examples() {
        let d = d123();
        let c = categorize(&d, 0.5);
        assert_eq!(c.labels, [Category::C1, Category::C2, Category::C4]);
        assert_eq!(c.var_level, 2.0);
        assert_eq!(c.sup_level, 3.0);

        let flat = FiniteDist::new(vec![2.0; 3], vec![THIRD, THIRD, 1.0 - 2.0 * THIRD]).unwrap();
        assert!(categorize(&flat, 0.5).labels.iter().all(|c| *c == Category::C4));

        let skew = FiniteDist::new(vec![0.0, 10.0], vec![0.9, 0.1]).unwrap();
        let c = categorize(&skew, 0.05);
        assert_eq!(c.var_level, 0.0);
        assert_eq!(c.labels, [Category::C2, Category::C4]);
    }

    #[test]
    fn categorize_var_boundary() {
        // psi(1) = 1/3 >= 1/3, so VaR_{1/3} = 1
        let c = categorize(&d123(), THIRD);
        assert_eq!(c.var_level, 1.0);
        assert_eq!(c.labels, [Category::C2, Category::C3, Category::C4]);
    }

    #[test]
    fn rejects_bad_distributions() {
        assert!(FiniteDist::new(vec![], vec![]).is_err());
        assert!(FiniteDist::new(vec![1.0], vec![0.9]).is_err());
        assert!(FiniteDist::new(vec![1.0, 2.0], vec![1.2, -0.2]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn dist_strategy() -> impl Strategy<Value = FiniteDist> {
            (1usize..=10)
                .prop_flat_map(|n| (prop::collection::vec(-10.0f64..10.0, n), prop::collection::vec(0.0f64..1.0, n)))
                .prop_filter_map("degenerate weights", |(h, w)| {
                    let total: f64 = w.iter().sum();
                    if total < 1e-6 {
                        return None;
                    }
                    let mut q: Vec<f64> = w.iter().map(|x| x / total).collect();
                    let last = 1.0 - q[..q.len() - 1].iter().sum::<f64>();
                    *q.last_mut().unwrap() = last;
                    if last < 0.0 {
                        return None;
                    }
                    FiniteDist::new(h, q).ok()
                })
        }

        proptest! {
            #[test]
            fn value_is_bracketed_and_monotone(d in dist_strategy(), g1 in 0.0f64..1.0, g2 in 0.0f64..1.0) {
                let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
                let a = worst_case_expectation(&d, lo);
                let b = worst_case_expectation(&d, hi);
                prop_assert!(a.value <= b.value + 1e-9);
                prop_assert!(d.mean() <= a.value + 1e-9);
                prop_assert!(b.value <= d.sup() + 1e-9);
            }

            #[test]
            fn maximizer_is_in_the_ball(d in dist_strategy(), g in 0.0f64..1.0) {
                let r = worst_case_expectation(&d, g);
                prop_assert!(r.dist.iter().all(|p| *p >= 0.0));
                prop_assert!((r.dist.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
                prop_assert!(tv_distance(&r.dist, d.probs()) <= g + 1e-10);
                let dot: f64 = r.dist.iter().zip(d.values()).map(|(p, h)| p * h).sum();
                prop_assert!((dot - r.value).abs() <= 1e-9);
            }

            #[test]
            fn cvar_matches_scan(d in dist_strategy(), a in 0.01f64..0.99) {
                prop_assert!((cvar(&d, a) - cvar_scan(&d, a)).abs() <= 1e-9 * d.sup().abs().max(1.0));
            }

            #[test]
            fn restricted_never_exceeds_full(d in dist_strategy(), g in 0.0f64..1.0, pick in 0usize..10) {
                let removed = [pick % d.len()];
                let full = worst_case_expectation(&d, g).value;
                if let Restricted::Feasible(r) = worst_case_expectation_restricted(&d, g, &removed).unwrap() {
                    prop_assert!(r.value <= full + 1e-9);
                    prop_assert!(r.dist[removed[0]].abs() <= 1e-9);
                }
            }

            #[test]
            fn categories_partition(d in dist_strategy(), g in 0.01f64..0.99) {
                let c = categorize(&d, g);
                prop_assert_eq!(c.labels.len(), d.len());
                prop_assert!(c.count(Category::C4) >= 1);
                prop_assert!(c.mass_of(&d, Category::C1) < g + 1e-12);
            }
        }
    }
}
