//! Extensive-form LP of the nested problem over a (sub)tree.
//!
//! Each node gets its decision block `x`, a value variable `theta` and the
//! epigraph of its risk measure over the children:
//!
//! ```text
//! theta >= c'x + gamma * u + (1 - gamma) * eta + sum_c q_c s_c
//! u >= theta_c,   s_c >= theta_c - eta,   s_c >= 0
//! ```
//!
//! which is `c'x + gamma * sup + (1 - gamma) * CVaR_gamma` at the optimum.
//! A node can instead carry the LP dual of the restricted worst-case problem
//! (selected children forced to zero probability), which is how assessment
//! problems are assembled.

use std::collections::BTreeMap;
use std::ops::Range;

use crate::lp::{LinearProgram, Sense};
use crate::risk::MASS_TOL;
use crate::tree::ScenarioTree;

/// Column layout of an extensive LP.
#[derive(Clone, Debug)]
pub struct ExtensiveLp {
    pub lp: LinearProgram,
    /// Decision columns per node index; `None` outside the subtree.
    pub x_vars: Vec<Option<Range<usize>>>,
    pub theta: Vec<Option<usize>>,
    pub root: usize,
    pub names: Vec<String>,
}

impl ExtensiveLp {
    pub fn decisions(&self, node: usize, primal: &[f64]) -> Vec<f64> {
        let range = self.x_vars[node].clone().expect("node belongs to the subtree");
        primal[range].to_vec()
    }
}

/// Per-node replacement of the risk rows: node index -> removed child positions.
pub type Restrictions = BTreeMap<usize, Vec<usize>>;

/// Extensive form of the whole tree.
pub fn build_extensive(tree: &ScenarioTree) -> ExtensiveLp {
    build_subtree(tree, tree.root(), None, &Restrictions::new()).expect("no restriction to violate")
}

/// Extensive form of the subtree at `root` with the previous-stage decision
/// fixed to `incoming`. Returns `None` when a restriction removes more
/// nominal mass than its radius allows or every child of a node.
pub fn build_subtree(
    tree: &ScenarioTree,
    root: usize,
    incoming: Option<&[f64]>,
    restrictions: &Restrictions,
) -> Option<ExtensiveLp> {
    let order = tree.subtree(root);
    let mut lp = LinearProgram::new();
    let mut names = Vec::new();
    let mut x_vars = vec![None; tree.len()];
    let mut theta = vec![None; tree.len()];

    for &i in &order {
        let nlp = tree.node_lp(i);
        let start = lp.n_vars();
        let tpl = &tree.templates()[tree.stage(i) - 1];
        for j in 0..nlp.n_vars() {
            lp.add_var(0.0, nlp.lower[j], nlp.upper[j]);
            let label = tpl.var_names.get(j).cloned().unwrap_or_else(|| j.to_string());
            names.push(format!("x_{}_{}", tree.id(i), label));
        }
        x_vars[i] = Some(start..lp.n_vars());
        theta[i] = Some(lp.add_free(if i == root { 1.0 } else { 0.0 }));
        names.push(format!("theta_{}", tree.id(i)));
    }

    for &i in &order {
        let nlp = tree.node_lp(i);
        let xs = x_vars[i].clone().unwrap();
        let parent_cols = if i == root { None } else { tree.parent_of(i).and_then(|p| x_vars[p].clone()) };
        for (r, row) in nlp.rows.iter().enumerate() {
            let mut coefs: Vec<(usize, f64)> = row.self_coefs.iter().map(|&(j, a)| (xs.start + j, a)).collect();
            let rhs = match &parent_cols {
                Some(pc) => {
                    coefs.extend(row.link_coefs.iter().map(|&(j, a)| (pc.start + j, a)));
                    row.rhs
                }
                None => nlp.effective_rhs(r, if i == root { incoming } else { None }),
            };
            lp.add_row(coefs, row.sense, rhs);
        }

        let th = theta[i].unwrap();
        let mut value_row: Vec<(usize, f64)> = vec![(th, 1.0)];
        value_row.extend(nlp.cost.iter().enumerate().map(|(j, &c)| (xs.start + j, -c)));

        let children = tree.children_of(i);
        if children.is_empty() {
            lp.add_row(value_row, Sense::Ge, 0.0);
            continue;
        }
        let gamma = tree.child_gamma(i);
        match restrictions.get(&i) {
            None => add_tv_epigraph(tree, &mut lp, &mut names, &theta, i, gamma, value_row),
            Some(removed) => {
                add_restricted_dual(tree, &mut lp, &mut names, &theta, i, gamma, removed, value_row)?;
            }
        }
    }

    Some(ExtensiveLp {
        lp,
        x_vars,
        theta,
        root,
        names,
    })
}

fn add_tv_epigraph(
    tree: &ScenarioTree,
    lp: &mut LinearProgram,
    names: &mut Vec<String>,
    theta: &[Option<usize>],
    node: usize,
    gamma: f64,
    mut value_row: Vec<(usize, f64)>,
) {
    let id = tree.id(node).to_string();
    let children = tree.children_of(node);
    if gamma > 0.0 {
        let u = lp.add_free(0.0);
        names.push(format!("sup_{id}"));
        value_row.push((u, -gamma));
        for &c in children {
            lp.add_row(vec![(u, 1.0), (theta[c].unwrap(), -1.0)], Sense::Ge, 0.0);
        }
    }
    if gamma < 1.0 {
        let eta = lp.add_free(0.0);
        names.push(format!("var_{id}"));
        value_row.push((eta, -(1.0 - gamma)));
        for &c in children {
            let s = lp.add_nonneg(0.0);
            names.push(format!("excess_{}", tree.id(c)));
            value_row.push((s, -tree.q(c)));
            lp.add_row(vec![(s, 1.0), (theta[c].unwrap(), -1.0), (eta, 1.0)], Sense::Ge, 0.0);
        }
    }
    lp.add_row(value_row, Sense::Ge, 0.0);
}

/// Dual of `max p.theta  s.t.  TV(p, q) <= gamma, sum p = 1, p >= 0, p_removed = 0`.
#[allow(clippy::too_many_arguments)]
fn add_restricted_dual(
    tree: &ScenarioTree,
    lp: &mut LinearProgram,
    names: &mut Vec<String>,
    theta: &[Option<usize>],
    node: usize,
    gamma: f64,
    removed: &[usize],
    mut value_row: Vec<(usize, f64)>,
) -> Option<()> {
    let children = tree.children_of(node);
    let mut is_removed = vec![false; children.len()];
    for &k in removed {
        is_removed[k] = true;
    }
    let removed_mass: f64 = children
        .iter()
        .zip(&is_removed)
        .filter(|(_, r)| **r)
        .map(|(&c, _)| tree.q(c))
        .sum();
    if removed_mass > gamma + MASS_TOL || is_removed.iter().all(|&r| r) {
        return None;
    }
    let budget = (2.0 * gamma - removed_mass).max(0.0);
    let id = tree.id(node).to_string();
    let lambda = lp.add_free(0.0);
    names.push(format!("lambda_{id}"));
    let mu = lp.add_nonneg(0.0);
    names.push(format!("mu_{id}"));
    value_row.push((lambda, -1.0));
    value_row.push((mu, -budget));
    for (k, &c) in children.iter().enumerate() {
        if is_removed[k] {
            continue;
        }
        let up = lp.add_nonneg(0.0);
        names.push(format!("up_{}", tree.id(c)));
        let down = lp.add_nonneg(0.0);
        names.push(format!("down_{}", tree.id(c)));
        let q = tree.q(c);
        value_row.push((up, -q));
        value_row.push((down, q));
        lp.add_row(
            vec![(lambda, 1.0), (up, 1.0), (down, -1.0), (theta[c].unwrap(), -1.0)],
            Sense::Ge,
            0.0,
        );
        lp.add_row(vec![(mu, 1.0), (up, -1.0), (down, -1.0)], Sense::Ge, 0.0);
    }
    lp.add_row(value_row, Sense::Ge, 0.0);
    Some(())
}
