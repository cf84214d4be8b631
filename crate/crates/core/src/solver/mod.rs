//! Exact solution of the nested problem and policy evaluation.
//!
//! Two independent routes produce a [`SolveOutcome`]: one extensive-form LP
//! over the tree ([`solve_extensive`]) and nested Benders decomposition
//! ([`solve_benders`]). In both cases the per-node cost-to-go values are
//! recomputed by backward recursion at the returned policy, so they satisfy
//! the dynamic programming equations by construction.

mod benders;
mod extensive;

use serde::{Deserialize, Serialize};

pub use benders::{solve_benders, BendersOptions};
pub use extensive::{build_extensive, build_subtree, ExtensiveLp, Restrictions};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpStatus};
use crate::risk::{worst_case_expectation, worst_case_expectation_restricted, FiniteDist};
use crate::tree::ScenarioTree;

/// Absolute row-violation allowance (scaled by `1 + |rhs|`) when checking a policy.
pub const POLICY_FEAS_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Extensive,
    Benders,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Extensive => "extensive",
            SolverKind::Benders => "benders",
        }
    }
}

/// One decision vector per node, indexed like the tree's nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub decisions: Vec<Vec<f64>>,
}

impl Policy {
    pub fn at(&self, node: usize) -> &[f64] {
        &self.decisions[node]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutcome {
    /// Optimal value at the root.
    pub objective: f64,
    pub policy: Policy,
    /// Cost-to-go of every node at the policy.
    pub q_values: Vec<f64>,
    /// Worst-case conditional distribution over the children of each internal node.
    pub worst_case: Vec<Option<Vec<f64>>>,
    /// Whether that distribution is the unique maximizer.
    pub worst_case_tight: Vec<bool>,
    pub solver: SolverKind,
    /// Final relative Benders gap; zero for the extensive form.
    pub gap: f64,
    pub iterations: usize,
    /// Number of nodes the outcome was computed for.
    pub n_nodes: usize,
}

impl SolveOutcome {
    pub(crate) fn check_tree(&self, tree: &ScenarioTree) -> Result<()> {
        if self.n_nodes != tree.len() || self.policy.decisions.len() != tree.len() {
            return Err(Error::NotSolved);
        }
        Ok(())
    }

    /// `h` values of the children of `node`: `g_t(x*_t) + Q_{t+1}(child)`.
    pub fn child_costs(&self, tree: &ScenarioTree, node: usize) -> Vec<f64> {
        let g = tree.node_lp(node).stage_cost(self.policy.at(node));
        tree.children_of(node).iter().map(|&c| g + self.q_values[c]).collect()
    }

    /// Largest relative violation of `Q_t = g_t + rho(children)` over all nodes.
    pub fn recursion_residual(&self, tree: &ScenarioTree) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..tree.len() {
            let g = tree.node_lp(i).stage_cost(self.policy.at(i));
            let expected = if tree.is_leaf(i) {
                g
            } else {
                let dist = FiniteDist::new(
                    tree.children_of(i).iter().map(|&c| self.q_values[c]).collect(),
                    tree.child_probs(i),
                )
                .expect("validated tree");
                g + worst_case_expectation(&dist, tree.child_gamma(i)).value
            };
            let rel = (self.q_values[i] - expected).abs() / self.q_values[i].abs().max(1.0);
            worst = worst.max(rel);
        }
        worst
    }
}

fn child_dist(tree: &ScenarioTree, node: usize, values: &[f64]) -> FiniteDist {
    FiniteDist::new(
        tree.children_of(node).iter().map(|&c| values[c]).collect(),
        tree.child_probs(node),
    )
    .expect("validated tree")
}

/// Checks node-wise feasibility of `policy` and returns its stage costs.
fn stage_costs(tree: &ScenarioTree, policy: &Policy, nodes: &[usize], root_incoming: Option<&[f64]>) -> Result<Vec<f64>> {
    let mut costs = vec![0.0; tree.len()];
    for (k, &i) in nodes.iter().enumerate() {
        let nlp = tree.node_lp(i);
        let x = policy.at(i);
        if x.len() != nlp.n_vars() {
            return Err(Error::InfeasiblePolicy(tree.id(i).to_string()));
        }
        let parent_x = if k == 0 { root_incoming } else { tree.parent_of(i).map(|p| policy.at(p)) };
        let scale = 1.0
            + nlp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max)
            + x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if nlp.violation(x, parent_x) > POLICY_FEAS_TOL * scale {
            return Err(Error::InfeasiblePolicy(tree.id(i).to_string()));
        }
        costs[i] = nlp.stage_cost(x);
    }
    Ok(costs)
}

/// Bottom-up value of `policy`: leaves cost `g_T`, internal nodes
/// `g_t + worst-case expectation of the children values`.
pub fn evaluate_policy(tree: &ScenarioTree, policy: &Policy) -> Result<Vec<f64>> {
    evaluate_policy_restricted(tree, policy, tree.root(), None, &Restrictions::new())
}

/// Policy evaluation over the subtree at `root`, with restricted ambiguity
/// sets at the nodes listed in `restrictions`. Values are `+inf` where a
/// restriction empties the ambiguity set; entries outside the subtree are 0.
pub fn evaluate_policy_restricted(
    tree: &ScenarioTree,
    policy: &Policy,
    root: usize,
    root_incoming: Option<&[f64]>,
    restrictions: &Restrictions,
) -> Result<Vec<f64>> {
    if policy.decisions.len() != tree.len() {
        return Err(Error::NotSolved);
    }
    let order = tree.subtree(root);
    let root_incoming = if root == tree.root() {
        None
    } else {
        root_incoming.or_else(|| tree.parent_of(root).map(|p| policy.at(p)))
    };
    let costs = stage_costs(tree, policy, &order, root_incoming)?;
    let mut values = vec![0.0; tree.len()];
    for &i in order.iter().rev() {
        values[i] = if tree.is_leaf(i) {
            costs[i]
        } else {
            let gamma = tree.child_gamma(i);
            let children = tree.children_of(i);
            // An emptied ambiguity set anywhere below propagates as +inf.
            if children.iter().any(|&c| values[c].is_infinite()) {
                f64::INFINITY
            } else {
                let dist = child_dist(tree, i, &values);
                match restrictions.get(&i) {
                    None => costs[i] + worst_case_expectation(&dist, gamma).value,
                    Some(removed) => costs[i] + worst_case_expectation_restricted(&dist, gamma, removed)?.value(),
                }
            }
        };
    }
    Ok(values)
}

/// Optimal value of the subtree problem at `node` given the previous-stage
/// decision `incoming` (ignored at the root).
pub fn subtree_value(tree: &ScenarioTree, node: usize, incoming: Option<&[f64]>) -> Result<f64> {
    let ext = build_subtree(tree, node, incoming, &Restrictions::new()).expect("unrestricted");
    let sol = solve_lp(&ext.lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective_value),
        LpStatus::Infeasible => Err(Error::InstanceInfeasible),
        LpStatus::Unbounded => Err(Error::InstanceUnbounded),
    }
}

/// Re-optimizes every non-root decision top-down by solving the subtree
/// problem at its parent's decision, so that the policy is optimal at every
/// node and not only on the worst-case support.
fn make_time_consistent(tree: &ScenarioTree, mut policy: Policy) -> Result<Policy> {
    for &i in tree.subtree(tree.root()).iter().skip(1) {
        let parent = tree.parent_of(i).expect("non-root");
        let incoming = policy.at(parent).to_vec();
        let ext = build_subtree(tree, i, Some(&incoming), &Restrictions::new()).expect("unrestricted");
        let sol = solve_lp(&ext.lp)?;
        match sol.status {
            LpStatus::Optimal => policy.decisions[i] = ext.decisions(i, &sol.primal),
            LpStatus::Infeasible => return Err(Error::InstanceInfeasible),
            LpStatus::Unbounded => return Err(Error::InstanceUnbounded),
        }
    }
    Ok(policy)
}

pub(crate) fn finish_outcome(
    tree: &ScenarioTree,
    policy: Policy,
    solver: SolverKind,
    gap: f64,
    iterations: usize,
) -> Result<SolveOutcome> {
    let q_values = evaluate_policy(tree, &policy)?;
    let mut worst_case = vec![None; tree.len()];
    let mut worst_case_tight = vec![true; tree.len()];
    for i in tree.internal_nodes() {
        let r = worst_case_expectation(&child_dist(tree, i, &q_values), tree.child_gamma(i));
        worst_case[i] = Some(r.dist);
        worst_case_tight[i] = r.tight;
    }
    Ok(SolveOutcome {
        objective: q_values[tree.root()],
        policy,
        q_values,
        worst_case,
        worst_case_tight,
        solver,
        gap,
        iterations,
        n_nodes: tree.len(),
    })
}

/// Solves the extensive-form LP and returns a time-consistent optimal policy.
pub fn solve_extensive(tree: &ScenarioTree) -> Result<SolveOutcome> {
    let ext = build_extensive(tree);
    let sol = solve_lp(&ext.lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::InstanceInfeasible),
        LpStatus::Unbounded => return Err(Error::InstanceUnbounded),
    }
    let decisions = (0..tree.len()).map(|i| ext.decisions(i, &sol.primal)).collect();
    let policy = make_time_consistent(tree, Policy { decisions })?;
    let outcome = finish_outcome(tree, policy, SolverKind::Extensive, 0.0, 1)?;
    let drift = (outcome.objective - sol.objective_value).abs() / sol.objective_value.abs().max(1.0);
    if drift > 1e-6 {
        log::warn!(
            "extensive LP value {} and recomputed root value {} differ by {drift:e}",
            sol.objective_value,
            outcome.objective
        );
    }
    Ok(outcome)
}
