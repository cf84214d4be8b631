use approx::assert_relative_eq;

use drotree::gen::{gen_random, RandomParams};
use drotree::lp::{solve_lp, LinearProgram, LpStatus};
use drotree::solver::{solve_benders, solve_extensive, subtree_value, BendersOptions};
use drotree::ScenarioTree;

/// Risk-neutral value as one LP weighting each node's cost by its path probability.
fn expectation_lp(tree: &ScenarioTree) -> f64 {
    let mut lp = LinearProgram::new();
    let mut cols = Vec::with_capacity(tree.len());
    for i in 0..tree.len() {
        let nlp = tree.node_lp(i);
        let w = tree.path_probability(i);
        let start = lp.n_vars();
        for j in 0..nlp.n_vars() {
            lp.add_var(w * nlp.cost[j], nlp.lower[j], nlp.upper[j]);
        }
        cols.push(start);
    }
    for i in 0..tree.len() {
        let nlp = tree.node_lp(i);
        for row in &nlp.rows {
            let mut coefs: Vec<(usize, f64)> = row.self_coefs.iter().map(|&(j, a)| (cols[i] + j, a)).collect();
            if let Some(p) = tree.parent_of(i) {
                coefs.extend(row.link_coefs.iter().map(|&(j, a)| (cols[p] + j, a)));
            }
            lp.add_row(coefs, row.sense, row.rhs);
        }
    }
    let sol = solve_lp(&lp).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    sol.objective_value
}

#[test]
fn risk_neutral_matches_expectation_lp() {
    for seed in 0..6 {
        let tree = gen_random(&RandomParams::new(seed, 2 + seed as usize % 3, 2 + seed as usize % 2, 0.0)).unwrap();
        let out = solve_extensive(&tree).unwrap();
        assert_relative_eq!(out.objective, expectation_lp(&tree), max_relative = 1e-8);
    }
}

#[test]
fn extensive_and_benders_agree_on_random_trees() {
    for seed in 0..12u64 {
        let stages = 2 + seed as usize % 3;
        let branching = 1 + seed as usize % 4;
        let gamma = [0.0, 0.2, 0.45, 0.8, 1.0][seed as usize % 5];
        let tree = gen_random(&RandomParams::new(40 + seed, stages, branching, gamma)).unwrap();
        let ext = solve_extensive(&tree).unwrap();
        let ben = solve_benders(&tree, BendersOptions::default()).unwrap();
        let rel = (ext.objective - ben.objective).abs() / ext.objective.abs().max(1.0);
        assert!(rel <= 1e-6, "seed {seed}: {} vs {}", ext.objective, ben.objective);
        assert!(ben.gap <= 1e-6 && ben.iterations <= 200);
        assert!(ext.recursion_residual(&tree) <= 1e-6);
        assert!(ben.recursion_residual(&tree) <= 1e-6);
    }
}

#[test]
fn policy_is_optimal_on_every_subtree() {
    for seed in 0..4u64 {
        let tree = gen_random(&RandomParams::new(70 + seed, 3, 3, 0.35)).unwrap();
        for out in [
            solve_extensive(&tree).unwrap(),
            solve_benders(&tree, BendersOptions::default()).unwrap(),
        ] {
            for i in 1..tree.len() {
                let parent = tree.parent_of(i).unwrap();
                let v = subtree_value(&tree, i, Some(out.policy.at(parent))).unwrap();
                assert_relative_eq!(v, out.q_values[i], max_relative = 1e-6);
            }
        }
    }
}

#[test]
fn generated_instances_round_trip() {
    let tree = gen_random(&RandomParams::new(9, 3, 2, 0.4)).unwrap();
    let text = serde_json::to_string(&tree.to_file()).unwrap();
    let back = ScenarioTree::from_json(&text).unwrap();
    assert_eq!(serde_json::to_string(&back.to_file()).unwrap(), text);
    assert_relative_eq!(
        solve_extensive(&back).unwrap().objective,
        solve_extensive(&tree).unwrap().objective,
        max_relative = 1e-12
    );
}
