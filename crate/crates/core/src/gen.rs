//! Seeded instance generators.
//!
//! All randomness comes from [`SplitMix64`], so an instance is a pure
//! function of its parameters and can be regenerated in any language:
//!
//! ```text
//! state  <- state + 0x9E3779B97F4A7C15            (wrapping)
//! z      <- state
//! z      <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9  (wrapping)
//! z      <- (z ^ (z >> 27)) * 0x94D049BB133111EB  (wrapping)
//! output <- z ^ (z >> 31)
//! ```
//!
//! A uniform double in `[0, 1)` is `(output >> 11) * 2^-53`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lp::Sense;
use crate::stage::{Coef, StageTemplate, TemplateRow};
use crate::tree::{InstanceFile, NodeId, ScenarioTree, TreeNode};

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_f64() * n as f64) as usize
    }
}

/// Parameters of [`gen_random`].
#[derive(Clone, Debug, PartialEq)]
pub struct RandomParams {
    pub seed: u64,
    pub stages: usize,
    pub branching: usize,
    pub n_vars: usize,
    pub gamma: f64,
    /// Weight of the parent's demand in a child's demand, in `[0, 1)`; 0 gives
    /// stagewise independent demands.
    pub dependence: f64,
}

impl RandomParams {
    pub fn new(seed: u64, stages: usize, branching: usize, gamma: f64) -> Self {
        RandomParams {
            seed,
            stages,
            branching,
            n_vars: 2,
            gamma,
            dependence: 0.0,
        }
    }
}

fn node(id: String, stage: usize, parent: Option<&str>, q: f64, xi: BTreeMap<String, f64>) -> TreeNode {
    TreeNode {
        id: NodeId(id),
        stage,
        parent: parent.map(NodeId::from),
        q,
        xi,
    }
}

/// Probabilities drawn uniformly on `[0.05, 1]` and normalized; the last entry
/// absorbs rounding so the vector sums to one.
fn nominal_probs(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.uniform(0.05, 1.0)).collect();
    let total: f64 = w.iter().sum();
    let mut q: Vec<f64> = w.iter().map(|x| x / total).collect();
    let head: f64 = q[..n - 1].iter().sum();
    q[n - 1] = 1.0 - head;
    q
}

/// Random multistage LP on a uniform tree.
///
/// Stage `t` has decisions `x_0..x_{n-1}` and one slack per covering row
///
/// ```text
/// sum_j a_ij x_j + slack_i + b_ii x_{t-1,i} >= d_i(xi),   sum_j x_j <= cap
/// ```
///
/// with positive costs and expensive slacks, so every stage problem is
/// feasible for any nonnegative parent decision and bounded below by zero.
/// Realizations drive the demands `d_i`, the cost of `x_0` and the
/// coefficient `a_00`.
pub fn gen_random(params: &RandomParams) -> Result<ScenarioTree> {
    let RandomParams {
        seed,
        stages,
        branching,
        n_vars,
        gamma,
        dependence,
    } = *params;
    if !(2..=4).contains(&stages) {
        return Err(Error::ParamOutOfRange(format!("stages {stages} not in 2..=4")));
    }
    if !(1..=4).contains(&branching) {
        return Err(Error::ParamOutOfRange(format!("branching {branching} not in 1..=4")));
    }
    if !(1..=3).contains(&n_vars) {
        return Err(Error::ParamOutOfRange(format!("n_vars {n_vars} not in 1..=3")));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::ParamOutOfRange(format!("gamma {gamma} not in [0, 1]")));
    }
    if !(0.0..1.0).contains(&dependence) {
        return Err(Error::ParamOutOfRange(format!("dependence {dependence} not in [0, 1)")));
    }
    let mut rng = SplitMix64::new(seed);
    let n = n_vars;

    let mut templates = Vec::with_capacity(stages);
    for t in 1..=stages {
        let mut cost: Vec<Coef> = (0..n)
            .map(|j| if j == 0 { Coef::xi("c0", 1.0, 0.0) } else { Coef::Const(rng.uniform(1.0, 5.0)) })
            .collect();
        cost.extend((0..n).map(|_| Coef::Const(rng.uniform(20.0, 40.0))));
        let mut rows = Vec::with_capacity(n + 1);
        for i in 0..n {
            let mut self_coefs = Vec::new();
            for j in 0..n {
                let a = if i == j {
                    if i == 0 {
                        Coef::xi("a00", 1.0, 0.0)
                    } else {
                        Coef::Const(rng.uniform(0.5, 1.5))
                    }
                } else if rng.next_f64() < 0.3 {
                    Coef::Const(rng.uniform(0.0, 0.5))
                } else {
                    continue;
                };
                self_coefs.push((j, a));
            }
            self_coefs.push((n + i, Coef::Const(1.0)));
            let link_coefs = if t > 1 { vec![(i, Coef::Const(rng.uniform(0.2, 0.8)))] } else { vec![] };
            rows.push(TemplateRow {
                self_coefs,
                link_coefs,
                sense: Sense::Ge,
                rhs: Coef::xi(&format!("d{i}"), 1.0, 0.0),
            });
        }
        rows.push(TemplateRow {
            self_coefs: (0..n).map(|j| (j, Coef::Const(1.0))).collect(),
            link_coefs: vec![],
            sense: Sense::Le,
            rhs: Coef::Const(rng.uniform(5.0, 10.0)),
        });
        let var_names = (0..n).map(|j| format!("x{j}")).chain((0..n).map(|i| format!("slack{i}"))).collect();
        templates.push(StageTemplate {
            n_vars: 2 * n,
            cost,
            rows,
            var_bounds: vec![],
            var_names,
        });
    }

    let draw_xi = |rng: &mut SplitMix64, parent: Option<&BTreeMap<String, f64>>| {
        let mut xi = BTreeMap::new();
        for i in 0..n {
            let key = format!("d{i}");
            let fresh = rng.uniform(1.0, 6.0);
            let d = match parent {
                Some(p) => dependence * p[&key] + (1.0 - dependence) * fresh,
                None => fresh,
            };
            xi.insert(key, d);
        }
        xi.insert("c0".to_string(), rng.uniform(1.0, 5.0));
        xi.insert("a00".to_string(), rng.uniform(0.5, 1.5));
        xi
    };

    let mut nodes = vec![node("n1_1".into(), 1, None, 1.0, draw_xi(&mut rng, None))];
    let mut frontier = vec![0usize];
    for t in 2..=stages {
        let mut next = Vec::new();
        let mut k = 0;
        for &p in &frontier {
            let q = nominal_probs(&mut rng, branching);
            let parent_id = nodes[p].id.0.clone();
            for qc in q {
                k += 1;
                let xi = draw_xi(&mut rng, Some(&nodes[p].xi));
                nodes.push(node(format!("n{t}_{k}"), t, Some(&parent_id), qc, xi));
                next.push(nodes.len() - 1);
            }
        }
        frontier = next;
    }

    ScenarioTree::from_file(InstanceFile {
        name: format!("random-s{seed}-t{stages}-b{branching}-n{n_vars}"),
        stages,
        gamma: vec![gamma; stages - 1],
        nodes,
        stage_templates: templates,
        zero_feasible: true,
    })
}

/// Parameters of [`gen_water_analog`].
#[derive(Clone, Debug, PartialEq)]
pub struct WaterParams {
    pub seed: u64,
    pub gamma: f64,
    /// Raise third-stage demand so that recycling matters there but not in
    /// stage 2 for the favourable (high supply, low demand) realizations.
    pub asymmetric: bool,
}

impl WaterParams {
    pub fn new(seed: u64) -> Self {
        WaterParams {
            seed,
            gamma: 0.5,
            asymmetric: true,
        }
    }
}

struct WaterLevels {
    supply: [f64; 2],
    demand: [f64; 2],
    recycle: f64,
}

/// Water-allocation analog: three stages, eight equally likely realizations
/// per node labelled `(supply, demand, treatment)` with supply and demand low
/// (L) or high (H) and the treatment plant disrupted (D) or not (N).
///
/// Each node decides local supply use `u <= supply`, recycled water
/// `r <= recycle * u` (zero when disrupted), external procurement `e` and
/// storage `s` carried to the next stage:
///
/// ```text
/// min u + 1.5 r + 8 e + 0.3 s   s.t.  u + r + e - s + s_prev >= demand
/// ```
///
/// Low supply, high demand and a disrupted plant is the strictly most costly
/// realization at every node.
pub fn gen_water_analog(params: &WaterParams) -> Result<ScenarioTree> {
    if !(0.0..=1.0).contains(&params.gamma) {
        return Err(Error::ParamOutOfRange(format!("gamma {} not in [0, 1]", params.gamma)));
    }
    let mut rng = SplitMix64::new(params.seed);
    let mut jitter = || rng.uniform(-0.1, 0.1);
    let stage2 = WaterLevels {
        supply: [4.0 + jitter(), 7.0 + jitter()],
        demand: [5.0 + jitter(), 8.0 + jitter()],
        recycle: 0.4 + 0.1 * jitter(),
    };
    let stage3 = if params.asymmetric {
        WaterLevels {
            supply: [4.0 + jitter(), 7.0 + jitter()],
            demand: [8.5 + jitter(), 11.0 + jitter()],
            recycle: 0.4 + 0.1 * jitter(),
        }
    } else {
        WaterLevels { ..stage2 }
    };
    let storage_cap = 1.0;

    let template = |first: bool| StageTemplate {
        n_vars: 4,
        cost: vec![Coef::Const(1.0), Coef::Const(1.5), Coef::Const(8.0), Coef::Const(0.3)],
        rows: vec![
            TemplateRow {
                self_coefs: vec![
                    (0, Coef::Const(1.0)),
                    (1, Coef::Const(1.0)),
                    (2, Coef::Const(1.0)),
                    (3, Coef::Const(-1.0)),
                ],
                link_coefs: if first { vec![] } else { vec![(3, Coef::Const(1.0))] },
                sense: Sense::Ge,
                rhs: Coef::xi("demand", 1.0, 0.0),
            },
            TemplateRow {
                self_coefs: vec![(1, Coef::Const(1.0)), (0, Coef::xi("recycle", -1.0, 0.0))],
                link_coefs: vec![],
                sense: Sense::Le,
                rhs: Coef::Const(0.0),
            },
        ],
        var_bounds: vec![
            (Some(Coef::Const(0.0)), Some(Coef::xi("supply", 1.0, 0.0))),
            (Some(Coef::Const(0.0)), None),
            (Some(Coef::Const(0.0)), None),
            (Some(Coef::Const(0.0)), Some(Coef::Const(storage_cap))),
        ],
        var_names: vec!["supply".into(), "recycled".into(), "external".into(), "storage".into()],
    };

    let xi_for = |levels: &WaterLevels, s: usize, d: usize, f: usize| -> BTreeMap<String, f64> {
        [
            ("supply", levels.supply[s]),
            ("demand", levels.demand[d]),
            ("recycle", if f == 0 { 0.0 } else { levels.recycle }),
            ("low_supply", (s == 0) as u8 as f64),
            ("high_demand", (d == 1) as u8 as f64),
            ("disrupted", (f == 0) as u8 as f64),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    };
    // Order: supply L/H, demand L/H, treatment D/N; index bits (s, d, f) with
    // s = 0 meaning low supply, d = 1 high demand, f = 0 disrupted.
    let combos: Vec<(usize, usize, usize, String)> = (0..2)
        .flat_map(|s| {
            (0..2).flat_map(move |d| {
                (0..2).map(move |f| {
                    let label = format!(
                        "{}{}{}",
                        if s == 0 { 'L' } else { 'H' },
                        if d == 0 { 'L' } else { 'H' },
                        if f == 0 { 'D' } else { 'N' }
                    );
                    (s, d, f, label)
                })
            })
        })
        .collect();

    let root_xi: BTreeMap<String, f64> = [("supply", 6.0), ("demand", 5.0), ("recycle", 0.4)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let mut nodes = vec![node("w".into(), 1, None, 1.0, root_xi)];
    let q = 1.0 / combos.len() as f64;
    for (s, d, f, label) in &combos {
        let id = format!("w.{label}");
        nodes.push(node(id.clone(), 2, Some("w"), q, xi_for(&stage2, *s, *d, *f)));
    }
    for (s2, d2, f2, parent_label) in &combos {
        let _ = (s2, d2, f2);
        let parent = format!("w.{parent_label}");
        for (s, d, f, label) in &combos {
            nodes.push(node(
                format!("{parent}.{label}"),
                3,
                Some(&parent),
                q,
                xi_for(&stage3, *s, *d, *f),
            ));
        }
    }

    ScenarioTree::from_file(InstanceFile {
        name: format!("water-analog-s{}", params.seed),
        stages: 3,
        gamma: vec![params.gamma; 2],
        nodes,
        stage_templates: vec![template(true), template(false), template(false)],
        zero_feasible: true,
    })
}

/// Realization label (`"LHD"` etc.) of a water-analog node id.
pub fn water_label(id: &str) -> &str {
    id.rsplit('.').next().unwrap_or(id)
}
