//! Serializable reports and their JSON, CSV and DOT renderings.
//!
//! JSON floats are written with 17 significant digits so that values
//! round-trip exactly; non-finite values become `null`.

use std::collections::BTreeMap;
use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::effectiveness::{classify_all, path_labels, C2MassRule, ClassifyOptions, CondLabel, Label, PathLabel};
use crate::error::Result;
use crate::oracle::{assess_leaf, assess_node, AssessmentResult, RemovalSet};
use crate::risk::Category;
use crate::solver::{solve_benders, solve_extensive, BendersOptions, SolveOutcome, SolverKind};
use crate::tree::ScenarioTree;

/// `serde_json` formatter printing every `f64` as `d.dddddddddddddddde±x`.
#[derive(Clone, Copy, Debug, Default)]
pub struct FullPrecision;

impl Formatter for FullPrecision {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", fmt_f64(value))
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// 17 significant digits in scientific notation, or `null` when not finite.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".to_string()
    }
}

/// Pretty JSON with [`FullPrecision`] floats and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let fmt = PrettyFull::default();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, fmt);
    value.serialize(&mut ser).expect("in-memory serialization");
    out.push(b'\n');
    String::from_utf8(out).expect("utf-8 JSON")
}

/// Pretty printer that delegates floats to [`FullPrecision`].
#[derive(Default)]
struct PrettyFull {
    pretty: serde_json::ser::PrettyFormatter<'static>,
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.pretty.$name(writer $(, $arg)*)
            }
        )*
    };
}

impl Formatter for PrettyFull {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        FullPrecision.write_f64(writer, value)
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        FullPrecision.write_f32(writer, value)
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NodeSolution {
    pub id: String,
    pub stage: usize,
    pub x: Vec<f64>,
    pub q_value: f64,
    /// Worst-case conditional probability of each child, keyed by child id.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_case_children: Option<BTreeMap<String, f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionReport {
    pub instance: String,
    pub solver: SolverKind,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
    pub nodes: Vec<NodeSolution>,
}

impl SolutionReport {
    pub fn new(tree: &ScenarioTree, outcome: &SolveOutcome) -> Self {
        let nodes = (0..tree.len())
            .map(|i| NodeSolution {
                id: tree.id(i).to_string(),
                stage: tree.stage(i),
                x: outcome.policy.at(i).to_vec(),
                q_value: outcome.q_values[i],
                worst_case_children: outcome.worst_case[i].as_ref().map(|p| {
                    tree.children_of(i)
                        .iter()
                        .zip(p)
                        .map(|(&c, &pc)| (tree.id(c).to_string(), pc))
                        .collect()
                }),
            })
            .collect();
        SolutionReport {
            instance: tree.name().to_string(),
            solver: outcome.solver,
            objective: outcome.objective,
            gap: outcome.gap,
            iterations: outcome.iterations,
            nodes,
        }
    }
}

/// Oracle verdict attached to a classified node or path.
#[derive(Clone, Debug, Serialize)]
pub struct OracleCheck {
    pub verdict: Label,
    pub value: f64,
    pub baseline: f64,
    pub infeasible: bool,
    pub borderline: bool,
    /// False when the easy-check label is definite and differs from the verdict.
    pub agrees: bool,
}

impl OracleCheck {
    pub fn new(label: Label, r: &AssessmentResult) -> Self {
        OracleCheck {
            verdict: r.verdict,
            value: r.value,
            baseline: r.baseline,
            infeasible: r.infeasible,
            borderline: r.borderline,
            agrees: label == Label::Unidentified || label == r.verdict,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NodeReport {
    pub id: String,
    pub stage: usize,
    pub category: Category,
    pub cond_label: Label,
    pub reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleCheck>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PathReport {
    pub id: String,
    pub path_label: Label,
    pub witness: Option<String>,
    pub reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleCheck>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Summary {
    pub realizations: usize,
    pub effective: usize,
    pub ineffective: usize,
    pub unidentified: usize,
    pub unidentified_fraction: f64,
    pub paths: usize,
    pub paths_effective: usize,
    pub paths_ineffective: usize,
    pub paths_unidentified: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_disagreements: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_borderline: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationReport {
    pub instance: String,
    pub gamma: Vec<f64>,
    pub objective: f64,
    pub c2_mass_rule: C2MassRule,
    pub nodes: Vec<NodeReport>,
    pub paths: Vec<PathReport>,
    pub summary: Summary,
}

impl ClassificationReport {
    /// Report without oracle checks; `cond` is indexed like the tree.
    pub fn new(
        tree: &ScenarioTree,
        outcome: &SolveOutcome,
        opts: ClassifyOptions,
        cond: &[Option<CondLabel>],
        paths: &[PathLabel],
    ) -> Self {
        let nodes: Vec<NodeReport> = cond
            .iter()
            .flatten()
            .map(|c| NodeReport {
                id: c.node.0.clone(),
                stage: c.stage,
                category: c.category,
                cond_label: c.label,
                reason: c.reason.clone(),
                oracle: None,
            })
            .collect();
        let paths: Vec<PathReport> = paths
            .iter()
            .map(|p| PathReport {
                id: p.leaf.0.clone(),
                path_label: p.label,
                witness: p.witness.as_ref().map(|w| w.0.clone()),
                reason: p.reason.clone(),
                oracle: None,
            })
            .collect();
        let mut report = ClassificationReport {
            instance: tree.name().to_string(),
            gamma: tree.gammas().to_vec(),
            objective: outcome.objective,
            c2_mass_rule: opts.c2_rule,
            nodes,
            paths,
            summary: Summary::default(),
        };
        report.refresh_summary();
        report
    }

    /// Recomputes the summary counts, including oracle tallies when present.
    pub fn refresh_summary(&mut self) {
        let count = |l: Label| self.nodes.iter().filter(|n| n.cond_label == l).count();
        let pcount = |l: Label| self.paths.iter().filter(|p| p.path_label == l).count();
        let checks: Vec<&OracleCheck> = self
            .nodes
            .iter()
            .filter_map(|n| n.oracle.as_ref())
            .chain(self.paths.iter().filter_map(|p| p.oracle.as_ref()))
            .collect();
        let has_oracle = !checks.is_empty();
        let unidentified = count(Label::Unidentified);
        self.summary = Summary {
            realizations: self.nodes.len(),
            effective: count(Label::Effective),
            ineffective: count(Label::Ineffective),
            unidentified,
            unidentified_fraction: if self.nodes.is_empty() {
                0.0
            } else {
                unidentified as f64 / self.nodes.len() as f64
            },
            paths: self.paths.len(),
            paths_effective: pcount(Label::Effective),
            paths_ineffective: pcount(Label::Ineffective),
            paths_unidentified: pcount(Label::Unidentified),
            oracle_disagreements: has_oracle.then(|| checks.iter().filter(|c| !c.agrees).count()),
            oracle_borderline: has_oracle.then(|| checks.iter().filter(|c| c.borderline).count()),
        };
    }

    /// Attaches oracle verdicts given in report order (non-root nodes in tree
    /// order, then leaves in tree order).
    pub fn attach_oracle(&mut self, nodes: &[AssessmentResult], paths: &[AssessmentResult]) {
        for (n, r) in self.nodes.iter_mut().zip(nodes) {
            n.oracle = Some(OracleCheck::new(n.cond_label, r));
        }
        for (p, r) in self.paths.iter_mut().zip(paths) {
            p.oracle = Some(OracleCheck::new(p.path_label, r));
        }
        self.refresh_summary();
    }

    pub fn disagreements(&self) -> usize {
        self.summary.oracle_disagreements.unwrap_or(0)
    }

    /// Graphviz rendering: edges into effective realizations are bold,
    /// ineffective dotted, unidentified thin.
    pub fn to_dot(&self, tree: &ScenarioTree) -> String {
        let label_of: BTreeMap<&str, Label> = self.nodes.iter().map(|n| (n.id.as_str(), n.cond_label)).collect();
        let mut out = String::from("digraph effectiveness {\n  rankdir=LR;\n  node [shape=circle, fontsize=10];\n");
        for i in 0..tree.len() {
            out.push_str(&format!("  \"{}\";\n", escape(tree.id(i))));
        }
        for i in 1..tree.len() {
            let p = tree.parent_of(i).expect("non-root");
            let style = match label_of.get(tree.id(i)) {
                Some(Label::Effective) => "style=solid, penwidth=2",
                Some(Label::Ineffective) => "style=dotted, penwidth=1",
                _ => "style=solid, penwidth=1",
            };
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [{style}];\n",
                escape(tree.id(p)),
                escape(tree.id(i))
            ));
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Solves and classifies without oracle checks.
pub fn classify_report(tree: &ScenarioTree, outcome: &SolveOutcome, opts: ClassifyOptions) -> Result<ClassificationReport> {
    let cond = classify_all(outcome, tree, opts)?;
    let paths = path_labels(tree, &cond);
    Ok(ClassificationReport::new(tree, outcome, opts, &cond, &paths))
}

/// Classification with every realization and path checked by the oracle.
pub fn classify_report_with_oracle(
    tree: &ScenarioTree,
    outcome: &SolveOutcome,
    opts: ClassifyOptions,
) -> Result<ClassificationReport> {
    let mut report = classify_report(tree, outcome, opts)?;
    let nodes = (1..tree.len())
        .map(|i| assess_node(tree, outcome, i))
        .collect::<Result<Vec<_>>>()?;
    let paths = tree
        .leaves()
        .into_iter()
        .map(|l| assess_leaf(tree, outcome, l))
        .collect::<Result<Vec<_>>>()?;
    report.attach_oracle(&nodes, &paths);
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct AssessmentEntry {
    pub node: String,
    pub value: f64,
    pub baseline: f64,
    pub verdict: Label,
    pub infeasible: bool,
    pub borderline: bool,
}

impl From<&AssessmentResult> for AssessmentEntry {
    fn from(r: &AssessmentResult) -> Self {
        AssessmentEntry {
            node: r.node.0.clone(),
            value: r.value,
            baseline: r.baseline,
            verdict: r.verdict,
            infeasible: r.infeasible,
            borderline: r.borderline,
        }
    }
}

/// A path assessment flattens to one entry; a realization assessment lists
/// one entry per affected node.
#[derive(Clone, Debug, Serialize)]
pub struct AssessmentReport {
    pub removal: RemovalSet,
    #[serde(flatten)]
    pub body: AssessmentBody,
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum AssessmentBody {
    Single(AssessmentEntry),
    PerNode { results: Vec<AssessmentEntry> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub objective: f64,
    pub n_effective_paths: usize,
    pub n_ineffective: usize,
    pub n_unidentified: usize,
}

/// Solves and classifies `tree` with every stage radius set to `gamma`.
pub fn sweep_point(tree: &ScenarioTree, gamma: f64, solver: SolverKind, opts: ClassifyOptions) -> Result<SweepRow> {
    let tree = tree.with_uniform_gamma(gamma)?;
    let outcome = match solver {
        SolverKind::Extensive => solve_extensive(&tree)?,
        SolverKind::Benders => solve_benders(&tree, BendersOptions::default())?,
    };
    let paths = path_labels(&tree, &classify_all(&outcome, &tree, opts)?);
    let count = |l: Label| paths.iter().filter(|p| p.label == l).count();
    Ok(SweepRow {
        gamma,
        objective: outcome.objective,
        n_effective_paths: count(Label::Effective),
        n_ineffective: count(Label::Ineffective),
        n_unidentified: count(Label::Unidentified),
    })
}

/// CSV with a header row; gamma is printed in shortest form, the objective
/// with 17 significant digits.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("gamma,objective,n_effective_paths,n_ineffective,n_unidentified\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.gamma,
            fmt_f64(r.objective),
            r.n_effective_paths,
            r.n_ineffective,
            r.n_unidentified
        ));
    }
    out
}
