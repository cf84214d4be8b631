use std::collections::BTreeSet;

use drotree::effectiveness::{classify_all, path_labels, ClassifyOptions, Label};
use drotree::gen::{gen_water_analog, water_label, WaterParams};
use drotree::solver::solve_extensive;
use drotree::ScenarioTree;

fn water(gamma: f64, asymmetric: bool) -> ScenarioTree {
    let mut p = WaterParams::new(1);
    p.gamma = gamma;
    p.asymmetric = asymmetric;
    gen_water_analog(&p).unwrap()
}

fn effective_paths(tree: &ScenarioTree) -> BTreeSet<String> {
    let out = solve_extensive(tree).unwrap();
    let cond = classify_all(&out, tree, ClassifyOptions::default()).unwrap();
    path_labels(tree, &cond)
        .into_iter()
        .filter(|p| p.label == Label::Effective)
        .map(|p| p.leaf.0)
        .collect()
}

/// Effective-label pattern over the eight children of `node`.
fn pattern(tree: &ScenarioTree, node: usize) -> Vec<(String, Label)> {
    let out = solve_extensive(tree).unwrap();
    let cond = classify_all(&out, tree, ClassifyOptions::default()).unwrap();
    tree.children_of(node)
        .iter()
        .map(|&c| (water_label(tree.id(c)).to_string(), cond[c].as_ref().unwrap().label))
        .collect()
}

#[test]
fn single_critical_path_at_high_robustness() {
    for gamma in [0.9, 0.95] {
        let eff = effective_paths(&water(gamma, true));
        assert_eq!(eff.into_iter().collect::<Vec<_>>(), vec!["w.LHD.LHD".to_string()]);
    }
}

#[test]
fn stage_patterns_differ_at_low_robustness() {
    let tree = water(0.05, true);
    let root = pattern(&tree, tree.root());
    let later = pattern(&tree, tree.index_of("w.HLN").unwrap());
    assert_ne!(root, later);
    // The favourable realizations tie in stage 2 only.
    assert!(root.iter().any(|(l, lab)| l == "HLD" && *lab == Label::Unidentified));
}

#[test]
fn effective_paths_shrink_as_gamma_grows() {
    let tree = water(0.5, true);
    let mut prev: Option<BTreeSet<String>> = None;
    for k in 1..=19 {
        let gamma = k as f64 * 0.05;
        let eff = effective_paths(&tree.with_uniform_gamma(gamma).unwrap());
        if let Some(p) = &prev {
            assert!(eff.is_subset(p), "gamma {gamma}");
        }
        prev = Some(eff);
    }
}
