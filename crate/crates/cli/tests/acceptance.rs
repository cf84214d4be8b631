//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::BTreeSet;
use std::process::Command;
use std::time::Instant;

use drotree::effectiveness::{classify_all, path_labels, ClassifyOptions, Label};
use drotree::gen::{gen_random, gen_water_analog, water_label, RandomParams, SplitMix64, WaterParams};
use drotree::lp::{solve_lp, LinearProgram, LpStatus, Sense};
use drotree::oracle::{assess_leaf, assess_node, assess_paths, verify_monotonicity, verify_union_intersection, RemovalSet};
use drotree::risk::{worst_case_expectation, FiniteDist};
use drotree::solver::{solve_benders, solve_extensive, subtree_value, BendersOptions, SolveOutcome};
use drotree::{NodeId, ScenarioTree};

struct Outcome {
    pass: bool,
    detail: String,
}

fn panicked() -> Outcome {
    outcome(false, "panicked".to_string())
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Worst-case expectation as an LP over `p` with `p - q = up - down`.
fn tv_lp(values: &[f64], probs: &[f64], gamma: f64) -> f64 {
    let n = values.len();
    let mut lp = LinearProgram::new();
    let p: Vec<usize> = values.iter().map(|&h| lp.add_nonneg(-h)).collect();
    let up: Vec<usize> = (0..n).map(|_| lp.add_nonneg(0.0)).collect();
    let down: Vec<usize> = (0..n).map(|_| lp.add_nonneg(0.0)).collect();
    lp.add_row(p.iter().map(|&j| (j, 1.0)).collect(), Sense::Eq, 1.0);
    for i in 0..n {
        lp.add_row(vec![(p[i], 1.0), (up[i], -1.0), (down[i], 1.0)], Sense::Eq, probs[i]);
    }
    lp.add_row(up.iter().chain(&down).map(|&j| (j, 1.0)).collect(), Sense::Le, 2.0 * gamma);
    let sol = solve_lp(&lp).expect("small LP");
    assert_eq!(sol.status, LpStatus::Optimal);
    -sol.objective_value
}

fn random_case(rng: &mut SplitMix64) -> (Vec<f64>, Vec<f64>, f64) {
    let n = 1 + rng.below(10);
    let ties = rng.next_f64() < 0.3;
    let values: Vec<f64> = (0..n)
        .map(|_| {
            let v = rng.uniform(-5.0, 20.0);
            if ties {
                v.round()
            } else {
                v
            }
        })
        .collect();
    let mut w: Vec<f64> = (0..n)
        .map(|_| if rng.next_f64() < 0.15 { 0.0 } else { rng.uniform(0.01, 1.0) })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[0] = 1.0;
    }
    let total: f64 = w.iter().sum();
    let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
    let gamma = match rng.below(6) {
        0 => 0.0,
        1 => 1.0,
        2 => probs[..1 + rng.below(n)].iter().sum::<f64>().min(1.0),
        _ => rng.next_f64(),
    };
    (values, probs, gamma)
}

fn criterion_1() -> Outcome {
    let mut rng = SplitMix64::new(2024);
    let mut worst: f64 = 0.0;
    let mut endpoint_failures = 0;
    for _ in 0..1000 {
        let (values, probs, gamma) = random_case(&mut rng);
        let dist = FiniteDist::new(values.clone(), probs.clone()).unwrap();
        let closed = worst_case_expectation(&dist, gamma).value;
        worst = worst.max((closed - tv_lp(&values, &probs, gamma)).abs());
        if worst_case_expectation(&dist, 0.0).value != dist.mean() || worst_case_expectation(&dist, 1.0).value != dist.sup() {
            endpoint_failures += 1;
        }
    }
    outcome(
        worst <= 1e-8 && endpoint_failures == 0,
        format!("1000 cases, max |closed form - LP| = {worst:.2e}, endpoint mismatches = {endpoint_failures}"),
    )
}

fn random_instance(k: u64) -> ScenarioTree {
    let stages = 2 + (k as usize % 3);
    let branching = 1 + (k as usize / 3) % 4;
    let gamma = [0.1, 0.3, 0.5, 0.7, 0.9][k as usize % 5];
    gen_random(&RandomParams::new(500 + k, stages, branching, gamma)).unwrap()
}

fn criteria_2_and_3() -> (Outcome, Outcome) {
    let mut worst_rel: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut max_passes = 0;
    let mut worst_recursion: f64 = 0.0;
    let mut worst_subtree: f64 = 0.0;
    let mut resolves = 0;
    for k in 0..50u64 {
        let tree = random_instance(k);
        let ext = solve_extensive(&tree).unwrap();
        let ben = solve_benders(&tree, BendersOptions::default()).unwrap();
        worst_rel = worst_rel.max((ext.objective - ben.objective).abs() / ext.objective.abs().max(1.0));
        worst_gap = worst_gap.max(ben.gap);
        max_passes = max_passes.max(ben.iterations);

        let mut rng = SplitMix64::new(k);
        for out in [&ext, &ben] {
            worst_recursion = worst_recursion.max(out.recursion_residual(&tree));
            for _ in 0..10 {
                let i = 1 + rng.below(tree.len() - 1);
                let parent = tree.parent_of(i).unwrap();
                let v = subtree_value(&tree, i, Some(out.policy.at(parent))).unwrap();
                worst_subtree = worst_subtree.max((v - out.q_values[i]).abs() / out.q_values[i].abs().max(1.0));
                resolves += 1;
            }
        }
    }
    (
        outcome(
            worst_rel <= 1e-6 && worst_gap <= 1e-6 && max_passes <= 200,
            format!(
                "50 instances, max relative difference = {worst_rel:.2e}, max gap = {worst_gap:.2e}, max passes = {max_passes}"
            ),
        ),
        outcome(
            worst_recursion <= 1e-6 && worst_subtree <= 1e-6,
            format!(
                "100 solves, max recursion residual = {worst_recursion:.2e}, {resolves} subtree re-solves, max deviation = {worst_subtree:.2e}"
            ),
        ),
    )
}

struct Classified {
    tree: ScenarioTree,
    out: SolveOutcome,
    cond: Vec<Option<Label>>,
    paths: Vec<Label>,
}

fn classified_instances() -> Vec<Classified> {
    let gammas = [0.1, 0.3, 0.5, 0.7, 0.9];
    (0..30u64)
        .map(|k| {
            let params = RandomParams::new(900 + k, 3, 2 + (k as usize % 3), gammas[k as usize % 5]);
            let tree = gen_random(&params).unwrap();
            let out = solve_extensive(&tree).unwrap();
            let labels = classify_all(&out, &tree, ClassifyOptions::default()).unwrap();
            let paths = path_labels(&tree, &labels).into_iter().map(|p| p.label).collect();
            let cond = labels.into_iter().map(|c| c.map(|c| c.label)).collect();
            Classified { tree, out, cond, paths }
        })
        .collect()
}

fn criteria_4_and_5(instances: &[Classified]) -> (Outcome, Outcome) {
    let (mut labelled, mut unidentified, mut disagree) = (0, 0, 0);
    let (mut path_labelled, mut path_disagree, mut restated, mut restate_fail) = (0, 0, 0, 0);
    let mut all_positive = true;
    for c in instances {
        let tree = &c.tree;
        all_positive &= (1..tree.len()).all(|i| tree.q(i) > 0.0);
        let mut oracle_cond = vec![None; tree.len()];
        for i in 1..tree.len() {
            let r = assess_node(tree, &c.out, i).unwrap();
            match c.cond[i].unwrap() {
                Label::Unidentified => unidentified += 1,
                l => {
                    labelled += 1;
                    if l != r.verdict {
                        disagree += 1;
                    }
                }
            }
            oracle_cond[i] = Some(r.verdict);
        }
        for (leaf, &label) in tree.leaves().into_iter().zip(&c.paths) {
            let r = assess_leaf(tree, &c.out, leaf).unwrap();
            if label != Label::Unidentified {
                path_labelled += 1;
                if label != r.verdict {
                    path_disagree += 1;
                }
            }
            if !r.infeasible {
                restated += 1;
                let all_effective = tree.path_to(leaf)[1..]
                    .iter()
                    .all(|&n| oracle_cond[n] == Some(Label::Effective));
                if all_effective != r.is_effective() {
                    restate_fail += 1;
                }
            }
        }
    }
    let total = labelled + unidentified;
    (
        outcome(
            all_positive && disagree == 0,
            format!(
                "{labelled} labelled realizations, {disagree} disagreements, unidentified fraction = {:.3} ({unidentified}/{total})",
                unidentified as f64 / total as f64
            ),
        ),
        outcome(
            path_disagree == 0 && restate_fail == 0,
            format!(
                "(a) {path_labelled} labelled paths, {path_disagree} disagreements; (b) {restated} well-defined leaves, {restate_fail} violations"
            ),
        ),
    )
}

fn pick(rng: &mut SplitMix64, from: &[usize], k: usize) -> Vec<usize> {
    let mut pool = from.to_vec();
    let mut out = Vec::new();
    while out.len() < k && !pool.is_empty() {
        out.push(pool.swap_remove(rng.below(pool.len())));
    }
    out
}

fn ids(tree: &ScenarioTree, idx: &[usize]) -> BTreeSet<NodeId> {
    idx.iter().map(|&i| NodeId::from(tree.id(i))).collect()
}

fn criterion_6() -> Outcome {
    let mut rng = SplitMix64::new(66);
    let (mut checked, mut excluded, mut violations) = (0, 0, 0);
    let mut worst: f64 = f64::NEG_INFINITY;
    for k in 0..10u64 {
        let tree = gen_random(&RandomParams::new(1200 + k, 3, 3 + (k as usize % 2), 0.7)).unwrap();
        let out = solve_extensive(&tree).unwrap();
        let leaves = tree.leaves();
        for _ in 0..2 {
            let size = 2 + rng.below(2);
            let s2_idx = pick(&mut rng, &leaves, size);
            let s1_idx = &s2_idx[..1 + rng.below(s2_idx.len() - 1)];
            let m = verify_monotonicity(&tree, &out, &ids(&tree, s1_idx), &ids(&tree, &s2_idx)).unwrap();
            if m.excluded {
                excluded += 1;
                continue;
            }
            checked += 1;
            worst = worst.max(m.larger - m.smaller);
            if !m.holds {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0 && checked > 0,
        format!("20 nested pairs, {checked} feasible, {excluded} excluded as infeasible, {violations} violations, max Q(S2) - Q(S1) = {worst:.2e}"),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = SplitMix64::new(77);
    let (mut triples, mut failures, mut seed) = (0, 0, 1300u64);
    while triples < 10 && seed < 1400 {
        let tree = gen_random(&RandomParams::new(seed, 3, 3 + (seed as usize % 2), 0.6)).unwrap();
        seed += 1;
        let out = solve_extensive(&tree).unwrap();
        let leaves = tree.leaves();
        let verdicts: Vec<Label> = leaves.iter().map(|&l| assess_leaf(&tree, &out, l).unwrap().verdict).collect();
        let eff: Vec<usize> = leaves.iter().zip(&verdicts).filter(|(_, v)| **v == Label::Effective).map(|(l, _)| *l).collect();
        let ineff: Vec<usize> = leaves.iter().zip(&verdicts).filter(|(_, v)| **v == Label::Ineffective).map(|(l, _)| *l).collect();
        if eff.is_empty() || ineff.is_empty() {
            continue;
        }
        let s_eff = ids(&tree, &pick(&mut rng, &eff, 1));
        let mut s_ineff = ids(&tree, &pick(&mut rng, &ineff, 2));
        let pair_ineffective = assess_paths(&tree, &RemovalSet::paths(s_ineff.iter().map(|i| i.as_str())), &out)
            .map(|r| r.verdict == Label::Ineffective)
            .unwrap_or(false);
        if !pair_ineffective {
            s_ineff = s_ineff.into_iter().take(1).collect();
        }
        let size = 1 + rng.below(3);
        let s_any = ids(&tree, &pick(&mut rng, &leaves, size));
        let report = verify_union_intersection(&tree, &out, &s_eff, &s_ineff, &s_any).unwrap();
        triples += 1;
        if !report.holds() {
            failures += 1;
        }
    }
    outcome(
        triples == 10 && failures == 0,
        format!("{triples} triples, {failures} failed assertions"),
    )
}

fn criterion_8() -> Outcome {
    let mut cases = Vec::new();
    for k in 0..5u64 {
        cases.push(gen_random(&RandomParams::new(1500 + k, 3 + (k as usize % 2), 2 + (k as usize % 3), 0.6)).unwrap());
    }
    let mut w = WaterParams::new(1);
    w.gamma = 0.95;
    cases.push(gen_water_analog(&w).unwrap());
    let mut ok = 0;
    for tree in &cases {
        let out = solve_extensive(tree).unwrap();
        let parent = tree.stage_nodes(tree.stages() - 1)[0];
        let set = RemovalSet::paths(tree.children_of(parent).iter().map(|&c| tree.id(c)));
        let r = assess_paths(tree, &set, &out).unwrap();
        if r.infeasible && r.value == f64::INFINITY && r.verdict == Label::Effective {
            ok += 1;
        }
    }
    outcome(
        ok == cases.len(),
        format!("{ok}/{} full-sibling removals infeasible with value +inf and verdict Effective", cases.len()),
    )
}

fn effective_pattern(tree: &ScenarioTree, cond: &[Option<Label>], node: usize) -> BTreeSet<String> {
    tree.children_of(node)
        .iter()
        .filter(|&&c| cond[c] == Some(Label::Effective))
        .map(|&c| water_label(tree.id(c)).to_string())
        .collect()
}

fn criterion_9() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for gamma in [0.9, 0.925, 0.95] {
        let mut w = WaterParams::new(1);
        w.gamma = gamma;
        let tree = gen_water_analog(&w).unwrap();
        let out = solve_extensive(&tree).unwrap();
        let cond = classify_all(&out, &tree, ClassifyOptions::default()).unwrap();
        let effective: Vec<String> = path_labels(&tree, &cond)
            .into_iter()
            .filter(|p| p.label == Label::Effective)
            .map(|p| p.leaf.0)
            .collect();
        let oracle_effective: Vec<String> = tree
            .leaves()
            .into_iter()
            .filter(|&l| assess_leaf(&tree, &out, l).unwrap().is_effective())
            .map(|l| tree.id(l).to_string())
            .collect();
        let ok = effective == ["w.LHD.LHD"] && oracle_effective == effective;
        pass &= ok;
        notes.push(format!("gamma {gamma}: {} effective ({})", effective.len(), effective.join(",")));
    }
    let mut w = WaterParams::new(1);
    w.gamma = 0.05;
    let tree = gen_water_analog(&w).unwrap();
    let out = solve_extensive(&tree).unwrap();
    let cond: Vec<Option<Label>> = classify_all(&out, &tree, ClassifyOptions::default())
        .unwrap()
        .into_iter()
        .map(|c| c.map(|c| c.label))
        .collect();
    let stage2 = effective_pattern(&tree, &cond, tree.root());
    let differing = tree
        .stage_nodes(2)
        .into_iter()
        .filter(|&n| effective_pattern(&tree, &cond, n) != stage2)
        .count();
    pass &= differing > 0;
    notes.push(format!(
        "gamma 0.05: stage-2 effective set {{{}}}, {differing}/8 stage-3 sets differ",
        stage2.into_iter().collect::<Vec<_>>().join(",")
    ));
    outcome(pass, notes.join("; "))
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_drotree");
    let run = |args: &[&str]| {
        let status = Command::new(bin).args(args).current_dir(dir.path()).output().unwrap();
        assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
    };
    run(&["gen", "--water", "1", "--gamma", "0.6", "--out", "water.json"]);
    run(&["gen", "--random", "7,3,3", "--gamma", "0.4", "--out", "random.json"]);
    let mut identical = 0;
    for inst in ["water.json", "random.json"] {
        for (k, jobs) in ["1", "4"].iter().enumerate() {
            run(&["--jobs", jobs, "classify", inst, "--oracle", "--out", &format!("{inst}.{k}.report"), "--dot", &format!("{inst}.{k}.dot")]);
        }
        let read = |name: String| std::fs::read(dir.path().join(name)).unwrap();
        if read(format!("{inst}.0.report")) == read(format!("{inst}.1.report"))
            && read(format!("{inst}.0.dot")) == read(format!("{inst}.1.dot"))
        {
            identical += 1;
        }
    }
    outcome(identical == 2, format!("{identical}/2 instances give byte-identical reports across runs with 1 and 4 workers"))
}

fn main() {
    let start = Instant::now();
    let results: Vec<(u32, &str, Outcome)> = std::thread::scope(|s| {
        let c1 = s.spawn(criterion_1);
        let c23 = s.spawn(criteria_2_and_3);
        let c45 = s.spawn(|| criteria_4_and_5(&classified_instances()));
        let c6 = s.spawn(criterion_6);
        let c7 = s.spawn(criterion_7);
        let c8 = s.spawn(criterion_8);
        let c9 = s.spawn(criterion_9);
        let c10 = s.spawn(criterion_10);
        let (o2, o3) = c23.join().unwrap_or_else(|_| (panicked(), panicked()));
        let (o4, o5) = c45.join().unwrap_or_else(|_| (panicked(), panicked()));
        vec![
            (1, "risk closed form vs LP", c1.join().unwrap_or_else(|_| panicked())),
            (2, "extensive vs Benders", o2),
            (3, "recursion and time consistency", o3),
            (4, "classifier soundness vs oracle", o4),
            (5, "path identification end to end", o5),
            (6, "path removal monotonicity", c6.join().unwrap_or_else(|_| panicked())),
            (7, "union and subset effectiveness", c7.join().unwrap_or_else(|_| panicked())),
            (8, "infeasible assessment convention", c8.join().unwrap_or_else(|_| panicked())),
            (9, "water analog structure", c9.join().unwrap_or_else(|_| panicked())),
            (10, "deterministic reports", c10.join().unwrap_or_else(|_| panicked())),
        ]
    });
    let mut failed = 0;
    for (n, name, o) in &results {
        println!("{} [{n:>2}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
