//! Effectiveness by definition: re-solve with selected scenario paths or
//! realizations forced to zero probability and compare optimal values.
//!
//! Path removals restrict only the last-stage ambiguity sets of the parents of
//! the removed leaves; realization removals restrict only the stage-`t+1` set
//! of each affected node `w_t`, with the incoming state fixed by the optimal
//! policy. Every solve uses the extensive form.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::effectiveness::{eps_eff, Label};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpStatus};
use crate::risk::MASS_TOL;
use crate::solver::{build_subtree, evaluate_policy_restricted, Restrictions, SolveOutcome};
use crate::tree::{NodeId, ScenarioTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemovalKind {
    Paths,
    Realizations,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalSet {
    pub kind: RemovalKind,
    pub ids: BTreeSet<NodeId>,
}

impl RemovalSet {
    pub fn paths<I: IntoIterator<Item = S>, S: AsRef<str>>(ids: I) -> Self {
        RemovalSet {
            kind: RemovalKind::Paths,
            ids: ids.into_iter().map(|s| NodeId::from(s.as_ref())).collect(),
        }
    }

    pub fn realizations<I: IntoIterator<Item = S>, S: AsRef<str>>(ids: I) -> Self {
        RemovalSet {
            kind: RemovalKind::Realizations,
            ids: ids.into_iter().map(|s| NodeId::from(s.as_ref())).collect(),
        }
    }

    /// Path removal set from leaf indices.
    pub fn paths_from_indices(tree: &ScenarioTree, leaves: &[usize]) -> Self {
        Self::paths(leaves.iter().map(|&l| tree.id(l)))
    }

    /// Node indices, checked to exist and share one stage.
    fn resolve(&self, tree: &ScenarioTree) -> Result<Vec<usize>> {
        if self.ids.is_empty() {
            return Err(Error::InvalidRemoval("empty removal set".into()));
        }
        let idx = self
            .ids
            .iter()
            .map(|id| tree.index_of(id.as_str()))
            .collect::<Result<Vec<_>>>()?;
        let stage = tree.stage(idx[0]);
        if let Some(&bad) = idx.iter().find(|&&i| tree.stage(i) != stage) {
            return Err(Error::InvalidRemoval(format!(
                "{} is at stage {} but {} is at stage {stage}",
                tree.id(bad),
                tree.stage(bad),
                tree.id(idx[0])
            )));
        }
        match self.kind {
            RemovalKind::Paths => {
                if let Some(&bad) = idx.iter().find(|&&i| !tree.is_leaf(i)) {
                    return Err(Error::InvalidRemoval(format!("{} is not a leaf", tree.id(bad))));
                }
                if idx.len() == tree.leaves().len() {
                    return Err(Error::InvalidRemoval("cannot remove every scenario path".into()));
                }
            }
            RemovalKind::Realizations => {
                if stage == 1 {
                    return Err(Error::InvalidRemoval("the root cannot be removed".into()));
                }
            }
        }
        Ok(idx)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssessmentResult {
    /// Node whose value is compared: the root for paths, `w_t` for realizations.
    pub node: NodeId,
    /// Optimal value of the assessment problem; `+inf` when infeasible.
    pub value: f64,
    pub baseline: f64,
    /// Value of the assessment objective at the original optimal policy.
    pub at_policy: f64,
    pub verdict: Label,
    pub infeasible: bool,
    pub borderline: bool,
}

impl AssessmentResult {
    fn new(node: &str, value: f64, baseline: f64, at_policy: f64) -> Self {
        let eps = eps_eff(baseline);
        let infeasible = value.is_infinite();
        let diff = baseline - value;
        let verdict = if infeasible || diff > eps {
            Label::Effective
        } else {
            Label::Ineffective
        };
        let borderline = !infeasible && diff.abs() > eps && diff.abs() < 10.0 * eps;
        AssessmentResult {
            node: NodeId::from(node),
            value,
            baseline,
            at_policy,
            verdict,
            infeasible,
            borderline,
        }
    }

    pub fn is_effective(&self) -> bool {
        self.verdict == Label::Effective
    }
}

/// Groups removed nodes by parent: parent index -> child positions.
fn group_by_parent(tree: &ScenarioTree, nodes: &[usize]) -> Restrictions {
    let mut out: Restrictions = BTreeMap::new();
    for &n in nodes {
        let p = tree.parent_of(n).expect("non-root");
        let pos = tree.children_of(p).iter().position(|&c| c == n).expect("child of parent");
        out.entry(p).or_default().push(pos);
    }
    for v in out.values_mut() {
        v.sort_unstable();
    }
    out
}

/// Whether a restriction leaves the ambiguity set non-empty.
fn restriction_feasible(tree: &ScenarioTree, node: usize, removed: &[usize]) -> bool {
    let children = tree.children_of(node);
    let mass: f64 = removed.iter().map(|&k| tree.q(children[k])).sum();
    removed.len() < children.len() && mass <= tree.child_gamma(node) + MASS_TOL
}

/// Optimal value of the subtree at `root` under `restrictions`; `+inf` when a
/// restriction empties an ambiguity set.
fn restricted_value(
    tree: &ScenarioTree,
    root: usize,
    incoming: Option<&[f64]>,
    restrictions: &Restrictions,
) -> Result<f64> {
    if restrictions.iter().any(|(&n, r)| !restriction_feasible(tree, n, r)) {
        return Ok(f64::INFINITY);
    }
    let ext = build_subtree(tree, root, incoming, restrictions).expect("restrictions checked");
    let sol = solve_lp(&ext.lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective_value),
        LpStatus::Infeasible => Err(Error::InstanceInfeasible),
        LpStatus::Unbounded => Err(Error::InstanceUnbounded),
    }
}

fn at_policy(
    tree: &ScenarioTree,
    outcome: &SolveOutcome,
    root: usize,
    incoming: Option<&[f64]>,
    restrictions: &Restrictions,
) -> Result<f64> {
    if restrictions.iter().any(|(&n, r)| !restriction_feasible(tree, n, r)) {
        return Ok(f64::INFINITY);
    }
    Ok(evaluate_policy_restricted(tree, &outcome.policy, root, incoming, restrictions)?[root])
}

/// Assessment of a set of scenario paths against the optimal value in `outcome`.
pub fn assess_paths(tree: &ScenarioTree, set: &RemovalSet, outcome: &SolveOutcome) -> Result<AssessmentResult> {
    outcome.check_tree(tree)?;
    if set.kind != RemovalKind::Paths {
        return Err(Error::InvalidRemoval("expected scenario paths".into()));
    }
    let leaves = set.resolve(tree)?;
    let restrictions = group_by_parent(tree, &leaves);
    let root = tree.root();
    let value = restricted_value(tree, root, None, &restrictions)?;
    let mid = at_policy(tree, outcome, root, None, &restrictions)?;
    Ok(AssessmentResult::new(tree.id(root), value, outcome.objective, mid))
}

/// Conditional assessment of a set of same-stage realizations; one result per
/// affected parent, in tree order.
pub fn assess_realizations(
    tree: &ScenarioTree,
    set: &RemovalSet,
    outcome: &SolveOutcome,
) -> Result<Vec<AssessmentResult>> {
    outcome.check_tree(tree)?;
    if set.kind != RemovalKind::Realizations {
        return Err(Error::InvalidRemoval("expected realizations".into()));
    }
    let nodes = set.resolve(tree)?;
    group_by_parent(tree, &nodes)
        .into_iter()
        .map(|(parent, removed)| assess_at(tree, outcome, parent, removed))
        .collect()
}

fn assess_at(tree: &ScenarioTree, outcome: &SolveOutcome, node: usize, removed: Vec<usize>) -> Result<AssessmentResult> {
    let incoming = tree.parent_of(node).map(|p| outcome.policy.at(p));
    let restrictions: Restrictions = [(node, removed)].into_iter().collect();
    let value = restricted_value(tree, node, incoming, &restrictions)?;
    let mid = at_policy(tree, outcome, node, incoming, &restrictions)?;
    Ok(AssessmentResult::new(tree.id(node), value, outcome.q_values[node], mid))
}

/// Conditional assessment of the single realization `node` (stage >= 2).
pub fn assess_node(tree: &ScenarioTree, outcome: &SolveOutcome, node: usize) -> Result<AssessmentResult> {
    outcome.check_tree(tree)?;
    let parent = tree
        .parent_of(node)
        .ok_or_else(|| Error::InvalidRemoval("the root cannot be removed".into()))?;
    let pos = tree.children_of(parent).iter().position(|&c| c == node).expect("child of parent");
    assess_at(tree, outcome, parent, vec![pos])
}

/// Assessment of the single scenario path ending at `leaf`.
pub fn assess_leaf(tree: &ScenarioTree, outcome: &SolveOutcome, leaf: usize) -> Result<AssessmentResult> {
    assess_paths(tree, &RemovalSet::paths_from_indices(tree, &[leaf]), outcome)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityCheck {
    pub smaller: f64,
    pub larger: f64,
    /// The larger set is infeasible; such pairs are not compared.
    pub excluded: bool,
    pub holds: bool,
}

/// Checks that removing more paths cannot increase the optimal value.
/// The empty set stands for the original problem.
pub fn verify_monotonicity(
    tree: &ScenarioTree,
    outcome: &SolveOutcome,
    s1: &BTreeSet<NodeId>,
    s2: &BTreeSet<NodeId>,
) -> Result<MonotonicityCheck> {
    if !s1.is_subset(s2) {
        return Err(Error::InvalidRemoval("first set is not contained in the second".into()));
    }
    let value = |s: &BTreeSet<NodeId>| -> Result<f64> {
        if s.is_empty() {
            Ok(outcome.objective)
        } else {
            Ok(assess_paths(tree, &RemovalSet::paths(s.iter().map(|i| i.as_str())), outcome)?.value)
        }
    };
    let smaller = value(s1)?;
    let larger = value(s2)?;
    let excluded = larger.is_infinite();
    let holds = excluded || larger <= smaller + 1e-8 * smaller.abs().max(1.0);
    Ok(MonotonicityCheck {
        smaller,
        larger,
        excluded,
        holds,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnionIntersectionReport {
    pub union_effective: bool,
    /// True when the intersection is empty.
    pub intersection_ineffective: bool,
    pub subsets_ineffective: bool,
    pub subsets_checked: usize,
}

impl UnionIntersectionReport {
    pub fn holds(&self) -> bool {
        self.union_effective && self.intersection_ineffective && self.subsets_ineffective
    }
}

/// Union of an effective set with anything is effective; subsets of an
/// ineffective set, including its intersection with `s_any`, are ineffective.
/// Subsets are enumerated exhaustively for up to 4 paths, else singletons.
pub fn verify_union_intersection(
    tree: &ScenarioTree,
    outcome: &SolveOutcome,
    s_eff: &BTreeSet<NodeId>,
    s_ineff: &BTreeSet<NodeId>,
    s_any: &BTreeSet<NodeId>,
) -> Result<UnionIntersectionReport> {
    let verdict = |s: &BTreeSet<NodeId>| -> Result<Label> {
        if s.is_empty() {
            return Ok(Label::Ineffective);
        }
        Ok(assess_paths(tree, &RemovalSet::paths(s.iter().map(|i| i.as_str())), outcome)?.verdict)
    };
    if verdict(s_eff)? != Label::Effective {
        return Err(Error::InvalidRemoval("first set is not effective".into()));
    }
    if verdict(s_ineff)? != Label::Ineffective {
        return Err(Error::InvalidRemoval("second set is not ineffective".into()));
    }
    let union: BTreeSet<NodeId> = s_eff.union(s_any).cloned().collect();
    let union_effective = if union.len() == tree.leaves().len() {
        true
    } else {
        verdict(&union)? == Label::Effective
    };
    let inter: BTreeSet<NodeId> = s_ineff.intersection(s_any).cloned().collect();
    let intersection_ineffective = verdict(&inter)? == Label::Ineffective;

    let items: Vec<&NodeId> = s_ineff.iter().collect();
    let subsets: Vec<BTreeSet<NodeId>> = if items.len() <= 4 {
        (1..(1u32 << items.len()) - 1)
            .map(|mask| {
                items
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask & (1 << k) != 0)
                    .map(|(_, id)| (*id).clone())
                    .collect()
            })
            .collect()
    } else {
        items.iter().map(|id| [(*id).clone()].into_iter().collect()).collect()
    };
    let mut subsets_ineffective = true;
    for s in &subsets {
        if verdict(s)? != Label::Ineffective {
            subsets_ineffective = false;
        }
    }
    Ok(UnionIntersectionReport {
        union_effective,
        intersection_ineffective,
        subsets_ineffective,
        subsets_checked: subsets.len(),
    })
}
