//! Scenario trees: instance ingestion, validation and navigation.
//!
//! Nodes keep the order in which they appear in the instance file. That
//! order is the canonical tie-break everywhere downstream, so two runs on the
//! same file always agree. Stages are numbered from 1 (the root) to `T`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stage::{self, NodeLp, StageTemplate};

/// Tolerance on the sum of sibling conditional probabilities.
pub const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: NodeId,
    pub stage: usize,
    pub parent: Option<NodeId>,
    /// Nominal probability conditional on the parent; ignored at the root.
    #[serde(default)]
    pub q: f64,
    #[serde(default)]
    pub xi: BTreeMap<String, f64>,
}

/// On-disk layout of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub name: String,
    pub stages: usize,
    pub gamma: Vec<f64>,
    pub nodes: Vec<TreeNode>,
    pub stage_templates: Vec<StageTemplate>,
    /// Set by generators whose stage problems stay feasible when the parent
    /// decision is zero.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_feasible: bool,
}

/// A validated, immutable scenario tree.
#[derive(Clone, Debug)]
pub struct ScenarioTree {
    name: String,
    stages: usize,
    gamma: Vec<f64>,
    nodes: Vec<TreeNode>,
    templates: Vec<StageTemplate>,
    zero_feasible: bool,
    index: HashMap<String, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    node_lps: Vec<NodeLp>,
}

fn invalid(node: impl Into<String>, rule: impl Into<String>) -> Error {
    Error::Validation {
        node: node.into(),
        rule: rule.into(),
    }
}

/// Reads and validates an instance file.
pub fn load_instance(path: impl AsRef<Path>) -> Result<ScenarioTree> {
    let text = std::fs::read_to_string(path)?;
    ScenarioTree::from_json(&text)
}

impl ScenarioTree {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    pub fn from_file(file: InstanceFile) -> Result<Self> {
        let t = file.stages;
        if t < 2 {
            return Err(invalid(&file.name, format!("instance needs at least 2 stages, got {t}")));
        }
        if file.gamma.len() != t - 1 {
            return Err(invalid(
                &file.name,
                format!("gamma has {} entries, expected {}", file.gamma.len(), t - 1),
            ));
        }
        for (k, g) in file.gamma.iter().enumerate() {
            if !(0.0..=1.0).contains(g) {
                return Err(invalid(&file.name, format!("gamma for stage {} is {g}, outside [0, 1]", k + 2)));
            }
        }
        if file.stage_templates.len() != t {
            return Err(invalid(
                &file.name,
                format!("{} stage templates for {t} stages", file.stage_templates.len()),
            ));
        }
        for (k, tpl) in file.stage_templates.iter().enumerate() {
            let prev = if k == 0 { None } else { Some(file.stage_templates[k - 1].n_vars) };
            tpl.check(k + 1, prev).map_err(|rule| invalid(&file.name, rule))?;
        }

        let mut index = HashMap::with_capacity(file.nodes.len());
        for (i, node) in file.nodes.iter().enumerate() {
            if node.id.0.is_empty() {
                return Err(invalid(format!("#{i}"), "empty node id"));
            }
            if index.insert(node.id.0.clone(), i).is_some() {
                return Err(invalid(&node.id.0, "duplicate node id"));
            }
            if node.stage < 1 || node.stage > t {
                return Err(invalid(&node.id.0, format!("stage {} outside 1..={t}", node.stage)));
            }
            if !node.q.is_finite() || !(0.0..=1.0).contains(&node.q) {
                return Err(invalid(&node.id.0, format!("probability {} outside [0, 1]", node.q)));
            }
            if let Some((k, v)) = node.xi.iter().find(|(_, v)| !v.is_finite()) {
                return Err(invalid(&node.id.0, format!("realization field `{k}` = {v} is not finite")));
            }
        }

        let n = file.nodes.len();
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut root = None;
        for (i, node) in file.nodes.iter().enumerate() {
            match (&node.parent, node.stage) {
                (None, 1) => {
                    if root.replace(i).is_some() {
                        return Err(invalid(&node.id.0, "more than one stage-1 node"));
                    }
                }
                (None, s) => return Err(invalid(&node.id.0, format!("orphan node at stage {s}"))),
                (Some(_), 1) => return Err(invalid(&node.id.0, "stage-1 node has a parent")),
                (Some(p), s) => {
                    let &pi = index
                        .get(&p.0)
                        .ok_or_else(|| invalid(&node.id.0, format!("orphan node: parent `{}` does not exist", p.0)))?;
                    if file.nodes[pi].stage + 1 != s {
                        return Err(invalid(
                            &node.id.0,
                            format!("stage gap: parent `{}` is at stage {}", p.0, file.nodes[pi].stage),
                        ));
                    }
                    parent[i] = Some(pi);
                    children[pi].push(i);
                }
            }
        }
        if root.is_none() {
            return Err(invalid(&file.name, "no stage-1 root node"));
        }
        if root != Some(0) {
            return Err(invalid(&file.nodes[root.unwrap()].id.0, "the root must be the first node in the file"));
        }
        for (i, node) in file.nodes.iter().enumerate() {
            if node.stage < t {
                if children[i].is_empty() {
                    return Err(invalid(&node.id.0, format!("leaf at stage {} < {t}", node.stage)));
                }
                let sum: f64 = children[i].iter().map(|&c| file.nodes[c].q).sum();
                if (sum - 1.0).abs() > PROB_SUM_TOL {
                    return Err(invalid(&node.id.0, format!("children probabilities sum to {sum}, not 1")));
                }
            }
        }

        let mut node_lps = Vec::with_capacity(n);
        for (i, node) in file.nodes.iter().enumerate() {
            let tpl = &file.stage_templates[node.stage - 1];
            node_lps.push(stage::materialize_raw(tpl, i, &node.id.0, &node.xi)?);
        }

        Ok(ScenarioTree {
            name: file.name,
            stages: t,
            gamma: file.gamma,
            nodes: file.nodes,
            templates: file.stage_templates,
            zero_feasible: file.zero_feasible,
            index,
            parent,
            children,
            node_lps,
        })
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            name: self.name.clone(),
            stages: self.stages,
            gamma: self.gamma.clone(),
            nodes: self.nodes.clone(),
            stage_templates: self.templates.clone(),
            zero_feasible: self.zero_feasible,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of stages `T`.
    pub fn stages(&self) -> usize {
        self.stages
    }

    /// Radii `[gamma_2, ..., gamma_T]`.
    pub fn gammas(&self) -> &[f64] {
        &self.gamma
    }

    /// Radius of the ambiguity set over the children of a node at `stage`.
    pub fn gamma_after(&self, stage: usize) -> f64 {
        self.gamma[stage - 1]
    }

    /// Radius used at the children of `node`.
    pub fn child_gamma(&self, node: usize) -> f64 {
        self.gamma_after(self.nodes[node].stage)
    }

    pub fn zero_feasible(&self) -> bool {
        self.zero_feasible
    }

    pub fn templates(&self) -> &[StageTemplate] {
        &self.templates
    }

    /// Copy of the tree with every stage radius set to `gamma`.
    pub fn with_uniform_gamma(&self, gamma: f64) -> Result<Self> {
        self.with_gammas(vec![gamma; self.stages - 1])
    }

    pub fn with_gammas(&self, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != self.stages - 1 || gamma.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(invalid(&self.name, format!("invalid radii {gamma:?}")));
        }
        let mut out = self.clone();
        out.gamma = gamma;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn node(&self, idx: usize) -> &TreeNode {
        &self.nodes[idx]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn id(&self, idx: usize) -> &str {
        &self.nodes[idx].id.0
    }

    pub fn stage(&self, idx: usize) -> usize {
        self.nodes[idx].stage
    }

    pub fn q(&self, idx: usize) -> f64 {
        self.nodes[idx].q
    }

    pub fn parent_of(&self, idx: usize) -> Option<usize> {
        self.parent[idx]
    }

    pub fn children_of(&self, idx: usize) -> &[usize] {
        &self.children[idx]
    }

    pub fn is_leaf(&self, idx: usize) -> bool {
        self.children[idx].is_empty()
    }

    pub fn node_lp(&self, idx: usize) -> &NodeLp {
        &self.node_lps[idx]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    /// Nominal conditional probabilities of the children of `idx`, in child order.
    pub fn child_probs(&self, idx: usize) -> Vec<f64> {
        self.children[idx].iter().map(|&c| self.nodes[c].q).collect()
    }

    /// Node indices at `stage`, in file order.
    pub fn stage_nodes(&self, stage: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.nodes[i].stage == stage).collect()
    }

    pub fn leaves(&self) -> Vec<usize> {
        self.stage_nodes(self.stages)
    }

    pub fn internal_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_leaf(i)).collect()
    }

    /// Nodes in breadth-first order from `start` (file order within a stage).
    pub fn subtree(&self, start: usize) -> Vec<usize> {
        let mut order = vec![start];
        let mut head = 0;
        while head < order.len() {
            let i = order[head];
            head += 1;
            order.extend_from_slice(&self.children[i]);
        }
        order
    }

    /// Stage-`t` ancestor of `idx` (which must sit at stage `>= t`).
    pub fn ancestor_at(&self, idx: usize, t: usize) -> usize {
        let mut cur = idx;
        while self.nodes[cur].stage > t {
            cur = self.parent[cur].expect("non-root nodes have parents");
        }
        cur
    }

    /// Root-to-`idx` path, root first.
    pub fn path_to(&self, idx: usize) -> Vec<usize> {
        let mut path = vec![idx];
        let mut cur = idx;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Nominal probability of reaching `idx` from the root.
    pub fn path_probability(&self, idx: usize) -> f64 {
        self.path_to(idx).iter().skip(1).map(|&i| self.nodes[i].q).product()
    }

    /// `C(node)`: children of `node` in instance-file order.
    pub fn children(&self, node: &str) -> Result<Vec<NodeId>> {
        let idx = self.index_of(node)?;
        Ok(self.children[idx].iter().map(|&c| self.nodes[c].id.clone()).collect())
    }

    /// `Pi_t(leaf)`: the stage-`t` ancestor of a stage-`T` node.
    pub fn project(&self, leaf: &str, t: usize) -> Result<NodeId> {
        let idx = self.index_of(leaf)?;
        if self.nodes[idx].stage != self.stages {
            return Err(invalid(leaf, "projection requires a stage-T node"));
        }
        if t < 1 || t > self.stages {
            return Err(Error::StageOutOfRange {
                stage: t,
                max: self.stages,
            });
        }
        Ok(self.nodes[self.ancestor_at(idx, t)].id.clone())
    }

    /// `a(S)`: distinct parents of a set of same-stage nodes, in file order.
    pub fn ancestor_set<'a, I>(&self, removal: I) -> Result<BTreeSet<NodeId>>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let idxs = removal
            .into_iter()
            .map(|id| self.index_of(id))
            .collect::<Result<Vec<_>>>()?;
        Ok(self
            .parents_of_set(&idxs)?
            .into_iter()
            .map(|p| self.nodes[p].id.clone())
            .collect())
    }

    /// Index form of [`ancestor_set`](Self::ancestor_set): parents of `set`, in file order.
    pub fn parents_of_set(&self, set: &[usize]) -> Result<Vec<usize>> {
        let Some(&first) = set.first() else {
            return Ok(Vec::new());
        };
        let stage = self.nodes[first].stage;
        let mut parents = BTreeSet::new();
        for &i in set {
            if self.nodes[i].stage != stage {
                return Err(Error::MixedStages(stage, self.nodes[i].stage));
            }
            match self.parent[i] {
                Some(p) => {
                    parents.insert(p);
                }
                None => return Err(invalid(self.id(i), "the root has no ancestor")),
            }
        }
        Ok(parents.into_iter().collect())
    }
}
