//! Identification of effective realizations and scenario paths from the
//! primal categories of each node's children, without re-solving.
//!
//! Rules at a node with `0 < gamma < 1` and all nominal probabilities positive:
//!
//! | category | condition                                  | label        |
//! |----------|--------------------------------------------|--------------|
//! | C3, C4   |                                            | effective    |
//! | C1       |                                            | ineffective  |
//! | C2       | mass of C2 equals gamma                    | ineffective  |
//! | C2       | mass of C2 exceeds gamma and C2 is single  | effective    |
//! | C2       | otherwise                                  | unidentified |
//!
//! With [`C2MassRule::C1PlusC2`] the first C2 test uses the mass of C1 and C2
//! together. When VaR coincides with the supremum and several children attain
//! it, those children are left unidentified: one of them can be dropped and
//! the worst case moved onto another at no change in value.
//!
//! A path is effective when every realization on it is effective, and
//! ineffective as soon as one is, unless removing the leaf alone already
//! empties its parent's ambiguity set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::{categorize, value_tol, Category, FiniteDist, MASS_TOL};
use crate::solver::SolveOutcome;
use crate::tree::{NodeId, ScenarioTree};

/// Relative tolerance on a decrease of the optimal value.
pub const EPS_EFF_REL: f64 = 1e-6;

/// Smallest decrease of `baseline` that counts as strict.
pub fn eps_eff(baseline: f64) -> f64 {
    EPS_EFF_REL * baseline.abs().max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Effective,
    Ineffective,
    Unidentified,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Effective => "Effective",
            Label::Ineffective => "Ineffective",
            Label::Unidentified => "Unidentified",
        }
    }
}

/// Mass compared against gamma by the first C2 rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C2MassRule {
    #[default]
    C2Only,
    C1PlusC2,
}

impl std::str::FromStr for C2MassRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "c2_only" => Ok(C2MassRule::C2Only),
            "c1_plus_c2" => Ok(C2MassRule::C1PlusC2),
            other => Err(format!("unknown c2 mass rule `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassifyOptions {
    pub c2_rule: C2MassRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondLabel {
    pub node: NodeId,
    pub stage: usize,
    pub label: Label,
    pub category: Category,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLabel {
    pub leaf: NodeId,
    pub label: Label,
    /// Shallowest ineffective realization on the path.
    pub witness: Option<NodeId>,
    pub reason: String,
}

/// Labels of the children of one node given their values, probabilities and
/// the radius. Returns `(label, category, reason)` per child.
pub fn label_children(
    values: &[f64],
    probs: &[f64],
    gamma: f64,
    opts: ClassifyOptions,
) -> Result<Vec<(Label, Category, &'static str)>> {
    let dist = FiniteDist::new(values.to_vec(), probs.to_vec())?;
    let cats = categorize(&dist, gamma);
    if gamma <= 0.0 || gamma >= 1.0 {
        return Ok(cats.labels.iter().map(|&c| (Label::Unidentified, c, "gamma_degenerate")).collect());
    }
    if probs.iter().any(|&q| q <= 0.0) {
        return Ok(cats.labels.iter().map(|&c| (Label::Unidentified, c, "zero_nominal_prob")).collect());
    }
    let sup_tie = (cats.var_level - cats.sup_level).abs() <= value_tol(cats.sup_level) && cats.count(Category::C4) > 1;
    let c2_mass = cats.mass_of(&dist, Category::C2);
    let compared = match opts.c2_rule {
        C2MassRule::C2Only => c2_mass,
        C2MassRule::C1PlusC2 => c2_mass + cats.mass_of(&dist, Category::C1),
    };
    let c2_single = cats.count(Category::C2) == 1;
    Ok(cats
        .labels
        .iter()
        .map(|&c| {
            let (label, reason) = match c {
                Category::C4 if sup_tie => (Label::Unidentified, "sup_tie_at_var"),
                Category::C4 => (Label::Effective, "c4_sup"),
                Category::C3 => (Label::Effective, "c3_above_var"),
                Category::C1 => (Label::Ineffective, "c1_below_var"),
                Category::C2 if (compared - gamma).abs() <= MASS_TOL => (Label::Ineffective, "c2_mass_equals_gamma"),
                Category::C2 if c2_mass > gamma + MASS_TOL && c2_single => (Label::Effective, "c2_single_heavy"),
                Category::C2 => (Label::Unidentified, "c2_unresolved"),
            };
            (label, c, reason)
        })
        .collect())
}

/// Conditional labels of the children of `node`.
pub fn classify_node_children(
    outcome: &SolveOutcome,
    tree: &ScenarioTree,
    node: usize,
    opts: ClassifyOptions,
) -> Result<Vec<CondLabel>> {
    outcome.check_tree(tree)?;
    if node >= tree.len() {
        return Err(Error::UnknownNode(node.to_string()));
    }
    if tree.is_leaf(node) {
        return Err(Error::StageOutOfRange {
            stage: tree.stage(node),
            max: tree.stages() - 1,
        });
    }
    let h = outcome.child_costs(tree, node);
    let labels = label_children(&h, &tree.child_probs(node), tree.child_gamma(node), opts)?;
    Ok(tree
        .children_of(node)
        .iter()
        .zip(labels)
        .map(|(&c, (label, category, reason))| CondLabel {
            node: NodeId::from(tree.id(c)),
            stage: tree.stage(c),
            label,
            category,
            reason: reason.to_string(),
        })
        .collect())
}

/// Conditional labels of every non-root node, indexed like the tree.
pub fn classify_all(outcome: &SolveOutcome, tree: &ScenarioTree, opts: ClassifyOptions) -> Result<Vec<Option<CondLabel>>> {
    let mut out = vec![None; tree.len()];
    for i in tree.internal_nodes() {
        for (&c, label) in tree.children_of(i).iter().zip(classify_node_children(outcome, tree, i, opts)?) {
            out[c] = Some(label);
        }
    }
    Ok(out)
}

/// Path labels from conditional labels, one per leaf in tree order.
///
/// A leaf heavier than its parent's radius cannot be removed at all; its
/// assessment problem is infeasible and the path is effective by convention,
/// whatever the labels along it.
pub fn path_labels(tree: &ScenarioTree, cond: &[Option<CondLabel>]) -> Vec<PathLabel> {
    tree.leaves()
        .into_iter()
        .map(|leaf| {
            let leaf_id = NodeId::from(tree.id(leaf));
            let parent = tree.parent_of(leaf).expect("leaf below the root");
            if tree.q(leaf) > tree.child_gamma(parent) + MASS_TOL || tree.children_of(parent).len() == 1 {
                return PathLabel {
                    leaf: leaf_id,
                    label: Label::Effective,
                    witness: None,
                    reason: "removal_infeasible".into(),
                };
            }
            let mut label = Label::Effective;
            let mut witness = None;
            for &n in tree.path_to(leaf).iter().skip(1) {
                match cond[n].as_ref().map(|c| c.label) {
                    Some(Label::Ineffective) => {
                        label = Label::Ineffective;
                        witness = Some(NodeId::from(tree.id(n)));
                        break;
                    }
                    Some(Label::Effective) => {}
                    _ => label = Label::Unidentified,
                }
            }
            let reason = match label {
                Label::Effective => "all_effective",
                Label::Ineffective => "ineffective_on_path",
                Label::Unidentified => "unidentified_on_path",
            };
            PathLabel {
                leaf: leaf_id,
                label,
                witness,
                reason: reason.into(),
            }
        })
        .collect()
}

/// Path labels of every leaf.
pub fn classify_paths(outcome: &SolveOutcome, tree: &ScenarioTree, opts: ClassifyOptions) -> Result<Vec<PathLabel>> {
    let cond = classify_all(outcome, tree, opts)?;
    Ok(path_labels(tree, &cond))
}
