//! Exact solver against the lattice oracle, payoff recursion and audit.

mod common;

use common::reach_probs;
use sefce_core::game::{
    build_fig1, build_fig6, build_promise_game, build_tantrum, enumerate, random_tree, Game, GameTree, NodeSpec,
    Owner,
};
use sefce_core::rng::{stream, streams};
use sefce_core::solver::{extract_strategy, solve, DEFAULT_STATE_BUDGET};
use sefce_core::verify::{audit_ic, best_response, expected_payoffs, oracle_solve, spe_profile};

fn leaf(r1: f64, r2: f64) -> NodeSpec {
    NodeSpec {
        owner: Owner::Leaf,
        children: vec![],
        labels: vec![],
        probs: vec![],
        payoffs: Some((r1, r2)),
        features: vec![],
    }
}

fn inner(owner: Owner, children: Vec<usize>, probs: Vec<f64>) -> NodeSpec {
    NodeSpec {
        owner,
        children,
        labels: vec![],
        probs,
        payoffs: None,
        features: vec![],
    }
}

#[test]
fn random_trees_agree_with_the_lattice_oracle() {
    let mut rng = stream(21, streams::RANDOM_TREE);
    for i in 0..150 {
        let t = random_tree(&mut rng, 40, if i % 2 == 0 { 0.0 } else { 0.3 });
        let exact = solve(&t).unwrap().opt;
        let (_, lattice) = oracle_solve(&t, 201).unwrap();
        assert!((exact.1 - lattice).abs() <= 1e-6, "tree {i}: {exact:?} vs {lattice}");
    }
}

#[test]
fn extracted_profiles_realise_the_optimum_and_are_compliant() {
    let mut rng = stream(22, streams::RANDOM_TREE);
    for i in 0..100 {
        let t = random_tree(&mut rng, 200, 0.2);
        let r = solve(&t).unwrap();
        let (r1, r2) = expected_payoffs(&t, &r.profile, &t.root()).unwrap();
        assert!((r1 - r.opt.1).abs() <= 1e-7, "tree {i}: R1 {r1} vs {:?}", r.opt);
        assert!((r2 - r.opt.0).abs() <= 1e-7, "tree {i}: R2 {r2} vs {:?}", r.opt);
        let a = audit_ic(&t, &r.profile, &r.bounds).unwrap();
        assert!(a.compliant, "tree {i}: min slack {}", a.min_slack);
    }
}

#[test]
fn every_promise_on_path_is_inside_its_frontier() {
    let mut rng = stream(23, streams::RANDOM_TREE);
    for _ in 0..50 {
        let t = random_tree(&mut rng, 200, 0.2);
        let r = solve(&t).unwrap();
        let reach = reach_probs(&t, &r.profile);
        for (s, w) in reach {
            if w == 0.0 || t.owner(&s) == Owner::Leaf {
                continue;
            }
            let mu = r.profile.get(&s).unwrap().promise.expect("on-path promise");
            let f = &r.epfs[&s];
            assert!(f.contains(mu), "promise {mu} outside [{}, {}]", f.lo(), f.hi());
        }
    }
}

#[test]
fn commitment_is_worth_at_least_subgame_perfection() {
    let mut rng = stream(24, streams::RANDOM_TREE);
    for _ in 0..100 {
        let t = random_tree(&mut rng, 100, 0.2);
        let opt = solve(&t).unwrap().opt.1;
        let spe = spe_profile(&t).unwrap();
        let (r1, _) = expected_payoffs(&t, &spe, &t.root()).unwrap();
        assert!(opt >= r1 - 1e-9, "{opt} < {r1}");
    }
}

#[test]
fn pure_recommendations_survive_follower_best_responses() {
    let mut rng = stream(25, streams::RANDOM_TREE);
    let mut checked = 0;
    for _ in 0..200 {
        let t = random_tree(&mut rng, 100, 0.0);
        let r = solve(&t).unwrap();
        let pure = r
            .profile
            .decisions
            .iter()
            .filter(|(s, _)| t.owner(s) == Owner::Follower)
            .all(|(_, d)| d.support() == 1);
        if !pure {
            continue;
        }
        let (_, v) = best_response(&t, &r.profile, &t.root()).unwrap();
        assert!((v - r.opt.0).abs() <= 1e-9, "{v} vs {:?}", r.opt);
        checked += 1;
    }
    assert!(checked >= 50, "only {checked} trees had pure follower play");
}

#[test]
fn fixture_optima() {
    let r = solve(&build_fig6()).unwrap();
    assert_eq!(r.opt, (0.0, 4.5));
    let r = solve(&build_promise_game(-30.0, 1.0, 0.1).unwrap()).unwrap();
    assert!((r.opt.1 - (10.0 - 11.0 / 1.9)).abs() <= 1e-9, "{:?}", r.opt);
    assert!(r.opt.0.abs() <= 1e-9);
    let r = solve(&build_promise_game(-10.0, -1.0, 0.1).unwrap()).unwrap();
    assert!((r.opt.1 - (10.0 - 11.0 / 1.9)).abs() <= 1e-9, "{:?}", r.opt);
}

#[test]
fn chance_node_combines_children_by_max_convolution() {
    // fair coin between the three-leaf commitment subgame and a sure (2, 0)
    let nodes = vec![
        inner(Owner::Chance, vec![1, 5], vec![0.5, 0.5]),
        inner(Owner::Follower, vec![2, 4], vec![]),
        inner(Owner::Leader, vec![3, 6], vec![]),
        leaf(10.0, -1.0),
        leaf(0.0, 0.0),
        leaf(2.0, 0.0),
        leaf(-1.0, 1.0),
    ];
    let g = GameTree::new(nodes).unwrap();
    let r = solve(&g).unwrap();
    assert!((r.opt.1 - (0.5 * 4.5 + 0.5 * 2.0)).abs() <= 1e-12, "{:?}", r.opt);
    assert!(r.opt.0.abs() <= 1e-12);
    let root = &r.epfs[&0];
    assert!((root.lo() - 0.0).abs() <= 1e-12 && (root.hi() - 0.5).abs() <= 1e-12);
    assert!((root.eval(0.5) - 0.5 * (-1.0) - 1.0).abs() <= 1e-12);
    let (lattice_mu, lattice) = oracle_solve(&g, 101).unwrap();
    assert!((lattice - r.opt.1).abs() <= 1e-9 && lattice_mu.abs() <= 1e-9);
}

#[test]
fn extraction_at_a_requested_promise() {
    let g = build_fig1(0.0, 0.0);
    let r = solve(&g).unwrap();
    for mu in [0.0, 0.25, 0.5, 1.0] {
        let p = extract_strategy(&g, &r.epfs, &r.bounds, Some(mu)).unwrap();
        let (r1, r2) = expected_payoffs(&g, &p, &0).unwrap();
        assert!((r2 - mu).abs() <= 1e-12);
        assert!((r1 - r.epfs[&0].eval(mu)).abs() <= 1e-12);
        assert!(audit_ic(&g, &p, &r.bounds).unwrap().compliant);
    }
    assert!(extract_strategy(&g, &r.epfs, &r.bounds, Some(1.5)).is_err());
}

#[test]
fn budget_is_enforced() {
    let g = build_tantrum(6, vec![1.0; 6], vec![2.0; 6]).unwrap();
    assert!(enumerate(&g, &g.root(), 10).is_err());
    assert!(enumerate(&g, &g.root(), DEFAULT_STATE_BUDGET).is_ok());
    assert!(sefce_core::solver::solve_from(&g, &g.root(), 10).is_err());
}
