//! Nested Benders decomposition over the full scenario tree.
//!
//! Every pass visits all nodes. The forward pass solves each node problem at
//! its parent's trial decision, with `theta` bounded by the current outer
//! approximation of the worst-case expected cost-to-go. The backward pass
//! walks stages from `T - 1` to 1, re-solves the children at the node's trial
//! decision, weights their value and subgradient by one worst-case
//! distribution over the children values, and appends the aggregated cut
//!
//! ```text
//! theta >= sum_c p*_c (v_c + g_c' (x - x_hat))
//! ```
//!
//! which is valid because the risk measure is a maximum of expectations over
//! a fixed polytope. Infeasible children produce feasibility cuts from an
//! elastic phase-one problem.
//!
//! The method stops when every node's lower bound (its LP value) is within
//! `tol` of the value of the current policy below it, which makes the
//! returned policy near-optimal at every node and not only at the root.

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpSolution, LpStatus, Sense};
use crate::risk::{worst_case_expectation, FiniteDist};
use crate::tree::ScenarioTree;

use super::{evaluate_policy, finish_outcome, Policy, SolveOutcome, SolverKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BendersOptions {
    /// Relative gap tolerance.
    pub tol: f64,
    /// Maximum number of forward/backward passes.
    pub max_iter: usize,
}

impl Default for BendersOptions {
    fn default() -> Self {
        BendersOptions {
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

/// `alpha + beta' x`: a lower bound on theta (optimality) or a quantity that
/// must stay nonpositive (feasibility).
#[derive(Clone, Debug, PartialEq)]
struct Cut {
    alpha: f64,
    beta: Vec<f64>,
}

impl Cut {
    fn at(&self, x: &[f64]) -> f64 {
        self.alpha + self.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    fn same_as(&self, other: &Cut) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
        close(self.alpha, other.alpha) && self.beta.iter().zip(&other.beta).all(|(a, b)| close(*a, *b))
    }
}

#[derive(Clone, Debug, Default)]
struct NodeCuts {
    optimality: Vec<Cut>,
    feasibility: Vec<Cut>,
    theta_lower: f64,
}

enum NodeSolve {
    Solved { x: Vec<f64>, value: f64, subgradient: Vec<f64> },
    Infeasible,
}

struct NodeProblem {
    lp: LinearProgram,
    n_x: usize,
    n_stage_rows: usize,
}

fn node_problem(tree: &ScenarioTree, node: usize, cuts: &NodeCuts, incoming: Option<&[f64]>) -> NodeProblem {
    let nlp = tree.node_lp(node);
    let mut lp = LinearProgram::new();
    for j in 0..nlp.n_vars() {
        lp.add_var(nlp.cost[j], nlp.lower[j], nlp.upper[j]);
    }
    for (r, row) in nlp.rows.iter().enumerate() {
        lp.add_row(row.self_coefs.clone(), row.sense, nlp.effective_rhs(r, incoming));
    }
    if !tree.is_leaf(node) {
        let theta = lp.add_var(1.0, cuts.theta_lower, f64::INFINITY);
        for cut in &cuts.optimality {
            let mut coefs: Vec<(usize, f64)> = vec![(theta, 1.0)];
            coefs.extend(cut.beta.iter().enumerate().map(|(j, b)| (j, -b)));
            lp.add_row(coefs, Sense::Ge, cut.alpha);
        }
    }
    for cut in &cuts.feasibility {
        lp.add_row(cut.beta.iter().copied().enumerate().collect(), Sense::Le, -cut.alpha);
    }
    NodeProblem {
        lp,
        n_x: nlp.n_vars(),
        n_stage_rows: nlp.rows.len(),
    }
}

/// Derivative of the node value with respect to the parent decision.
fn link_subgradient(tree: &ScenarioTree, node: usize, duals: &[f64]) -> Vec<f64> {
    let parent = tree.parent_of(node).expect("non-root");
    let mut g = vec![0.0; tree.node_lp(parent).n_vars()];
    for (row, &pi) in tree.node_lp(node).rows.iter().zip(duals) {
        for &(j, a) in &row.link_coefs {
            g[j] -= pi * a;
        }
    }
    g
}

fn solve_node(tree: &ScenarioTree, node: usize, cuts: &NodeCuts, incoming: Option<&[f64]>) -> Result<NodeSolve> {
    let prob = node_problem(tree, node, cuts, incoming);
    let sol: LpSolution = solve_lp(&prob.lp)?;
    match sol.status {
        LpStatus::Optimal => {
            let subgradient = if incoming.is_some() {
                link_subgradient(tree, node, &sol.duals[..prob.n_stage_rows])
            } else {
                Vec::new()
            };
            Ok(NodeSolve::Solved {
                x: sol.primal[..prob.n_x].to_vec(),
                value: sol.objective_value,
                subgradient,
            })
        }
        LpStatus::Infeasible => Ok(NodeSolve::Infeasible),
        LpStatus::Unbounded => Err(Error::InstanceUnbounded),
    }
}

/// Feasibility cut on the parent decision from the elastic version of the
/// node problem at `incoming`.
fn feasibility_cut(tree: &ScenarioTree, node: usize, cuts: &NodeCuts, incoming: &[f64]) -> Result<Cut> {
    let nlp = tree.node_lp(node);
    let mut lp = LinearProgram::new();
    for j in 0..nlp.n_vars() {
        lp.add_var(0.0, nlp.lower[j], nlp.upper[j]);
    }
    let elastic = |lp: &mut LinearProgram, mut coefs: Vec<(usize, f64)>, sense: Sense, rhs: f64| {
        if sense != Sense::Le {
            coefs.push((lp.add_nonneg(1.0), 1.0));
        }
        if sense != Sense::Ge {
            coefs.push((lp.add_nonneg(1.0), -1.0));
        }
        lp.add_row(coefs, sense, rhs);
    };
    for (r, row) in nlp.rows.iter().enumerate() {
        elastic(&mut lp, row.self_coefs.clone(), row.sense, nlp.effective_rhs(r, Some(incoming)));
    }
    for cut in &cuts.feasibility {
        elastic(&mut lp, cut.beta.iter().copied().enumerate().collect(), Sense::Le, -cut.alpha);
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        // Bounds alone are inconsistent; no parent decision can help.
        return Err(Error::InstanceInfeasible);
    }
    let g = link_subgradient(tree, node, &sol.duals[..nlp.rows.len()]);
    let alpha = sol.objective_value - g.iter().zip(incoming).map(|(a, b)| a * b).sum::<f64>();
    Ok(Cut { alpha, beta: g })
}

/// Valid lower bounds on every node's cost-to-go, from a relaxation where the
/// parent decision may take any value within its bounds.
fn theta_lower_bounds(tree: &ScenarioTree) -> Result<Vec<f64>> {
    let mut total = vec![0.0; tree.len()];
    let mut theta = vec![0.0; tree.len()];
    for &i in tree.subtree(tree.root()).iter().rev() {
        if !tree.is_leaf(i) {
            theta[i] = tree
                .children_of(i)
                .iter()
                .map(|&c| total[c])
                .fold(f64::INFINITY, f64::min);
        }
        let nlp = tree.node_lp(i);
        let mut lp = LinearProgram::new();
        for j in 0..nlp.n_vars() {
            lp.add_var(nlp.cost[j], nlp.lower[j], nlp.upper[j]);
        }
        let parent_cols = tree.parent_of(i).map(|p| {
            let plp = tree.node_lp(p);
            (0..plp.n_vars())
                .map(|j| lp.add_var(0.0, plp.lower[j], plp.upper[j]))
                .collect::<Vec<_>>()
        });
        for row in &nlp.rows {
            let mut coefs = row.self_coefs.clone();
            if let Some(pc) = &parent_cols {
                coefs.extend(row.link_coefs.iter().map(|&(j, a)| (pc[j], a)));
            }
            lp.add_row(coefs, row.sense, row.rhs);
        }
        let sol = solve_lp(&lp)?;
        total[i] = match sol.status {
            LpStatus::Optimal => sol.objective_value + theta[i],
            LpStatus::Infeasible => return Err(Error::InstanceInfeasible),
            LpStatus::Unbounded => {
                let scale = nlp.cost.iter().map(|c| c.abs()).fold(1.0, f64::max);
                log::warn!("no finite cost-to-go bound at node `{}`; using a large constant", tree.id(i));
                -1e6 * scale
            }
        };
    }
    Ok(theta)
}

/// Solves the tree by nested Benders decomposition.
pub fn solve_benders(tree: &ScenarioTree, opts: BendersOptions) -> Result<SolveOutcome> {
    let n = tree.len();
    let order = tree.subtree(tree.root());
    let lower_bounds = theta_lower_bounds(tree)?;
    let mut cuts: Vec<NodeCuts> = lower_bounds
        .iter()
        .map(|&lb| NodeCuts {
            theta_lower: lb,
            ..NodeCuts::default()
        })
        .collect();
    let max_stage = tree.stages();
    let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);

    for pass in 1..=opts.max_iter {
        // Forward pass.
        let mut decisions: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut node_lb = vec![f64::NEG_INFINITY; n];
        let mut feasible = true;
        for &i in &order {
            let incoming = match tree.parent_of(i) {
                None => None,
                Some(p) => match &decisions[p] {
                    Some(x) => Some(x.clone()),
                    None => continue,
                },
            };
            match solve_node(tree, i, &cuts[i], incoming.as_deref())? {
                NodeSolve::Solved { x, value, .. } => {
                    node_lb[i] = value;
                    decisions[i] = Some(x);
                }
                NodeSolve::Infeasible => {
                    let Some(px) = incoming else {
                        return Err(Error::InstanceInfeasible);
                    };
                    let parent = tree.parent_of(i).unwrap();
                    let cut = feasibility_cut(tree, i, &cuts[i], &px)?;
                    cuts[parent].feasibility.push(cut);
                    feasible = false;
                }
            }
        }
        lower = node_lb[tree.root()];

        if feasible {
            let policy = Policy {
                decisions: decisions.iter().map(|d| d.clone().expect("visited")).collect(),
            };
            let values = evaluate_policy(tree, &policy)?;
            upper = values[tree.root()];
            let converged = (0..n).all(|i| values[i] - node_lb[i] <= opts.tol * node_lb[i].abs().max(1.0));
            let gap = (upper - lower).max(0.0) / lower.abs().max(1.0);
            log::debug!("benders pass {pass}: lower {lower}, upper {upper}, gap {gap:e}");
            if converged {
                return finish_outcome(tree, policy, SolverKind::Benders, gap, pass);
            }
        }

        // Backward pass, deepest internal stage first.
        for stage in (1..max_stage).rev() {
            for i in tree.stage_nodes(stage) {
                let Some(x_hat) = decisions[i].clone() else { continue };
                let children = tree.children_of(i);
                let mut values = Vec::with_capacity(children.len());
                let mut grads = Vec::with_capacity(children.len());
                let mut infeasible_child = false;
                for &c in children {
                    match solve_node(tree, c, &cuts[c], Some(&x_hat))? {
                        NodeSolve::Solved { value, subgradient, .. } => {
                            values.push(value);
                            grads.push(subgradient);
                        }
                        NodeSolve::Infeasible => {
                            let cut = feasibility_cut(tree, c, &cuts[c], &x_hat)?;
                            cuts[i].feasibility.push(cut);
                            infeasible_child = true;
                        }
                    }
                }
                if infeasible_child {
                    continue;
                }
                let dist = FiniteDist::new(values.clone(), tree.child_probs(i)).expect("validated tree");
                let p = worst_case_expectation(&dist, tree.child_gamma(i)).dist;
                let mut beta = vec![0.0; x_hat.len()];
                let mut alpha = 0.0;
                for ((pc, v), g) in p.iter().zip(&values).zip(&grads) {
                    alpha += pc * v;
                    for (b, gj) in beta.iter_mut().zip(g) {
                        *b += pc * gj;
                    }
                }
                alpha -= beta.iter().zip(&x_hat).map(|(b, x)| b * x).sum::<f64>();
                let cut = Cut { alpha, beta };
                if !cuts[i].optimality.iter().any(|c| c.same_as(&cut)) {
                    debug_assert!(cut.at(&x_hat).is_finite());
                    cuts[i].optimality.push(cut);
                }
            }
        }
    }
    Err(Error::IterationLimit {
        iterations: opts.max_iter,
        lower,
        upper,
    })
}
