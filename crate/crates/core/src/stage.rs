//! Polyhedral stage problems.
//!
//! A [`StageTemplate`] describes the stage cost `c_t(xi)' x_t` and the feasible
//! set `{x_t : A_t(xi) x_t + B_t(xi) x_{t-1} (sense) b_t(xi), l <= x_t <= u}`
//! once per stage. Entries may be constants or affine in a named realization
//! field of the node, so randomness can sit in the cost, the right-hand side,
//! or the recourse matrix. [`materialize`] resolves a template against one
//! node and yields a numeric [`NodeLp`].
//!
//! Piecewise-linear stage costs are written with epigraph variables and rows
//! inside the same template.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::Sense;
use crate::tree::ScenarioTree;

/// A template entry: a number, or `scale * xi[field] + offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coef {
    Const(f64),
    Xi {
        xi: String,
        #[serde(default = "unit_scale")]
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
}

fn unit_scale() -> f64 {
    1.0
}

impl From<f64> for Coef {
    fn from(v: f64) -> Self {
        Coef::Const(v)
    }
}

impl Coef {
    pub fn xi(field: &str, scale: f64, offset: f64) -> Self {
        Coef::Xi {
            xi: field.to_string(),
            scale,
            offset,
        }
    }

    pub fn eval(&self, node_id: &str, xi: &BTreeMap<String, f64>) -> Result<f64> {
        match self {
            Coef::Const(v) => Ok(*v),
            Coef::Xi { xi: field, scale, offset } => xi
                .get(field)
                .map(|v| scale * v + offset)
                .ok_or_else(|| Error::MissingXiField {
                    node: node_id.to_string(),
                    field: field.clone(),
                }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateRow {
    #[serde(default)]
    pub self_coefs: Vec<(usize, Coef)>,
    #[serde(default)]
    pub link_coefs: Vec<(usize, Coef)>,
    pub sense: Sense,
    pub rhs: Coef,
}

/// `(lower, upper)`; `null` stands for an infinite bound.
pub type VarBound = (Option<Coef>, Option<Coef>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTemplate {
    pub n_vars: usize,
    pub cost: Vec<Coef>,
    #[serde(default)]
    pub rows: Vec<TemplateRow>,
    /// One entry per variable; an empty list means `x >= 0` throughout.
    #[serde(default)]
    pub var_bounds: Vec<VarBound>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub var_names: Vec<String>,
}

impl StageTemplate {
    pub(crate) fn check(&self, stage: usize, prev_vars: Option<usize>) -> std::result::Result<(), String> {
        if self.cost.len() != self.n_vars {
            return Err(format!("stage {stage} template has {} costs for {} variables", self.cost.len(), self.n_vars));
        }
        if !self.var_bounds.is_empty() && self.var_bounds.len() != self.n_vars {
            return Err(format!("stage {stage} template has {} bounds for {} variables", self.var_bounds.len(), self.n_vars));
        }
        if !self.var_names.is_empty() && self.var_names.len() != self.n_vars {
            return Err(format!("stage {stage} template has {} names for {} variables", self.var_names.len(), self.n_vars));
        }
        for (r, row) in self.rows.iter().enumerate() {
            if let Some(&(j, _)) = row.self_coefs.iter().find(|(j, _)| *j >= self.n_vars) {
                return Err(format!("stage {stage} row {r} references x_t[{j}]"));
            }
            match prev_vars {
                None if !row.link_coefs.is_empty() => {
                    return Err(format!("stage {stage} row {r} links to a nonexistent previous stage"));
                }
                Some(n_prev) => {
                    if let Some(&(j, _)) = row.link_coefs.iter().find(|(j, _)| *j >= n_prev) {
                        return Err(format!("stage {stage} row {r} references x_(t-1)[{j}]"));
                    }
                }
                None => {}
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeRow {
    pub self_coefs: Vec<(usize, f64)>,
    pub link_coefs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Numeric stage data of one node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeLp {
    pub node: usize,
    pub cost: Vec<f64>,
    pub rows: Vec<NodeRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl NodeLp {
    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn stage_cost(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Right-hand side of `row` once the previous-stage decision is fixed.
    pub fn effective_rhs(&self, row: usize, parent_x: Option<&[f64]>) -> f64 {
        let r = &self.rows[row];
        match parent_x {
            Some(px) => r.rhs - r.link_coefs.iter().map(|&(j, a)| a * px[j]).sum::<f64>(),
            None => r.rhs,
        }
    }

    /// Largest violation of the stage constraints by `x` given the parent decision.
    pub fn violation(&self, x: &[f64], parent_x: Option<&[f64]>) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            let lhs: f64 = row.self_coefs.iter().map(|&(j, a)| a * x[j]).sum();
            let rhs = self.effective_rhs(i, parent_x);
            let v = match row.sense {
                Sense::Le => lhs - rhs,
                Sense::Ge => rhs - lhs,
                Sense::Eq => (lhs - rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }
}

/// Resolves the stage template of `node` against its realization.
pub fn materialize(tree: &ScenarioTree, node: &str) -> Result<NodeLp> {
    let idx = tree.index_of(node)?;
    Ok(tree.node_lp(idx).clone())
}

pub(crate) fn materialize_raw(
    template: &StageTemplate,
    node_idx: usize,
    node_id: &str,
    xi: &BTreeMap<String, f64>,
) -> Result<NodeLp> {
    let eval = |c: &Coef| c.eval(node_id, xi);
    let cost = template.cost.iter().map(eval).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(template.rows.len());
    for row in &template.rows {
        let self_coefs = row
            .self_coefs
            .iter()
            .map(|(j, c)| Ok((*j, eval(c)?)))
            .collect::<Result<Vec<_>>>()?;
        let link_coefs = row
            .link_coefs
            .iter()
            .map(|(j, c)| Ok((*j, eval(c)?)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(NodeRow {
            self_coefs,
            link_coefs,
            sense: row.sense,
            rhs: eval(&row.rhs)?,
        });
    }
    let n = template.n_vars;
    let mut lower = vec![0.0; n];
    let mut upper = vec![f64::INFINITY; n];
    for (j, (lo, hi)) in template.var_bounds.iter().enumerate() {
        lower[j] = match lo {
            Some(c) => eval(c)?,
            None => f64::NEG_INFINITY,
        };
        upper[j] = match hi {
            Some(c) => eval(c)?,
            None => f64::INFINITY,
        };
    }
    let lp = NodeLp {
        node: node_idx,
        cost,
        rows,
        lower,
        upper,
    };
    let finite = lp.cost.iter().all(|v| v.is_finite())
        && lp.rows.iter().all(|r| {
            r.rhs.is_finite() && r.self_coefs.iter().chain(&r.link_coefs).all(|(_, a)| a.is_finite())
        })
        && lp.lower.iter().zip(&lp.upper).all(|(lo, hi)| !lo.is_nan() && !hi.is_nan() && lo <= hi);
    if !finite {
        return Err(Error::Validation {
            node: node_id.to_string(),
            rule: "stage data evaluates to non-finite values or crossed bounds".into(),
        });
    }
    Ok(lp)
}
