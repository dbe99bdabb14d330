use std::sync::OnceLock;

use amo_core::cantor::*;
use amo_core::circle::{circle_dist, AlphaSpec, CirclePoint};
use amo_core::mass::*;
use proptest::prelude::*;

fn faithful() -> &'static (CantorTree, MassDistribution) {
    static CELL: OnceLock<(CantorTree, MassDistribution)> = OnceLock::new();
    CELL.get_or_init(|| {
        let tree = build_tree(
            &AlphaSpec::golden(),
            1.0,
            &ConstructionConstants::faithful(),
            1,
            BranchPolicy::Full,
        )
        .unwrap();
        let mu = assign_mass(&tree);
        (tree, mu)
    })
}

fn toy() -> &'static (CantorTree, MassDistribution) {
    static CELL: OnceLock<(CantorTree, MassDistribution)> = OnceLock::new();
    CELL.get_or_init(|| {
        let tree = build_tree(
            &AlphaSpec::golden(),
            2.0,
            &ConstructionConstants::toy(),
            3,
            BranchPolicy::Sample { branches: 2 },
        )
        .unwrap();
        let mu = assign_mass(&tree);
        (tree, mu)
    })
}

#[test]
fn root_carries_unit_mass() {
    let (tree, mu) = faithful();
    assert_eq!(mu.mass(0), 1.0);
    let total: f64 = tree.root().children.iter().map(|&c| mu.mass(c)).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn single_child_inherits_parent_mass() {
    let (full, _) = faithful();
    let mut tree = full.clone();
    let keep = tree.nodes[0].children[3];
    tree.nodes[0].children = vec![keep];
    let mu = assign_mass(&tree);
    assert_eq!(mu.node_mass[keep], mu.node_mass[0]);
}

#[test]
fn level_one_masses_follow_inverse_scale() {
    let (tree, mu) = faithful();
    let kids = &tree.root().children;
    let inv: Vec<f64> = kids
        .iter()
        .map(|&c| 1.0 / tree.nodes[c].n.to_string().parse::<f64>().unwrap())
        .collect();
    let total: f64 = inv.iter().sum();
    for (&c, w) in kids.iter().zip(&inv) {
        assert!((mu.mass(c) - w / total).abs() <= 1e-14 * mu.mass(c).max(1e-30));
    }
}

#[test]
fn faithful_node_bound_holds() {
    let (tree, mu) = faithful();
    assert!(mu.node_bound_violations(tree).is_empty());
    let a0 = tree.constants.a0;
    for (i, node) in tree.level(1) {
        let n: f64 = node.n.to_string().parse().unwrap();
        assert!(mu.mass(i) <= 2f64.powi(14) * a0 / (n * node.delta));
    }
}

#[test]
fn toy_children_sum_to_parent() {
    let (tree, mu) = toy();
    assert!(mu.max_consistency_error(tree) < 2f64.powi(-100));
    assert!(mu.node_bound_violations(tree).is_empty());
}

#[test]
fn mass_of_ball_guards() {
    let (tree, mu) = faithful();
    let x = CirclePoint::from_f64(0.3, tree.precision_bits);
    assert_eq!(mass_of_ball(tree, mu, &x, 1.0).unwrap(), 1.0);
    assert_eq!(mass_of_ball(tree, mu, &x, 7.5).unwrap(), 1.0);
    assert!(mass_of_ball(tree, mu, &x, 0.0).is_err());
    assert!(mass_of_ball(tree, mu, &x, -1.0).is_err());
}

#[test]
fn small_ball_sees_one_annulus() {
    let (tree, mu) = faithful();
    let r0 = ln_first_gap(tree).unwrap().exp();
    for &leaf in tree.leaves().iter().step_by(17) {
        let p = cantor_point(tree, leaf).unwrap();
        let m = mass_of_ball(tree, mu, &p.point, r0 / 2.0).unwrap();
        let expected = mu.mass(leaf);
        assert!(
            (m - expected).abs() <= 1e-12 * expected,
            "{m} vs {expected}"
        );
    }
}

#[test]
fn ball_between_two_annuli_sees_both() {
    let (tree, mu) = faithful();
    let rot = tree.rotation().unwrap();
    let kids = &tree.root().children;
    // closest pair of level-1 centers
    let mut best = (f64::INFINITY, 0, 0);
    for (i, &a) in kids.iter().enumerate() {
        for &b in &kids[i + 1..] {
            let d = circle_dist(
                &rot.point_u(&tree.nodes[a].n),
                &rot.point_u(&tree.nodes[b].n),
            );
            if d.to_f64() < best.0 {
                best = (d.to_f64(), a, b);
            }
        }
    }
    let (d, a, b) = best;
    let xa = rot.point_u(&tree.nodes[a].n).value_f64();
    let xb = rot.point_u(&tree.nodes[b].n).value_f64();
    let mid = if (xa - xb).abs() <= 0.5 {
        0.5 * (xa + xb)
    } else {
        (0.5 * (xa + xb) + 0.5).fract()
    };
    let x = CirclePoint::from_f64(mid, tree.precision_bits);
    // every other center is at least 1.5 d from the midpoint
    let m = mass_of_ball(tree, mu, &x, 0.75 * d).unwrap();
    let expected = mu.mass(a) + mu.mass(b);
    assert!(
        (m - expected).abs() <= 1e-12 * expected,
        "{m} vs {expected}"
    );
    assert_eq!(mass_of_ball(tree, mu, &x, 0.25 * d).unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ball_mass_is_monotone(x in 0.0..1.0f64, ln_r in -60.0..-0.01f64, step in 0.0..5.0f64) {
        let (tree, mu) = faithful();
        let p = CirclePoint::from_f64(x, tree.precision_bits);
        let scan = BallScanner::new(tree).unwrap();
        let small = scan.ln_mass_of_ball(mu, &p, ln_r - step);
        let big = scan.ln_mass_of_ball(mu, &p, ln_r);
        prop_assert!(small <= big);
        prop_assert!(big <= 0.0);
    }
}

#[test]
fn faithful_mdp_certificate_passes() {
    let (tree, mu) = faithful();
    let ln_r0 = ln_first_gap(tree).unwrap();
    let grid = default_r_grid(-72.0, ln_r0, 8);
    let cert = mdp_certificate(tree, mu, 1000, &grid).unwrap();
    assert_eq!(cert.samples.len(), 1000);
    assert!(cert.pass, "worst margin {}", cert.worst_margin);
    let a0 = tree.constants.a0;
    assert!((cert.constant - 2f64.powi(32) * a0).abs() < 1e-6 * cert.constant);
    // conclusion >= 2^{-32} a0^{-1}
    let conclusion = cert.ln_conclusion.unwrap();
    assert!(conclusion >= -(32.0 * std::f64::consts::LN_2 + a0.ln()) - 1e-12);
    assert!(cert.ln_derived_constant <= cert.ln_constant);
    assert!(cert
        .samples_csv()
        .starts_with("leaf,x,ln_r,ln_mass_upper,ln_bound,pass\n"));
    let json: serde_json::Value = serde_json::from_str(&cert.to_json()).unwrap();
    assert_eq!(json["pass"], true);
}

#[test]
fn toy_mdp_certificate_passes() {
    let (tree, mu) = toy();
    let ln_r0 = ln_first_gap(tree).unwrap();
    let leaves = tree.leaves().len();
    let grid = default_r_grid(-8000.0, ln_r0, 8);
    let cert = mdp_certificate(tree, mu, 8 * leaves, &grid).unwrap();
    assert!(cert.pass, "worst margin {}", cert.worst_margin);
    assert_eq!(cert.ln_constant, cert.ln_derived_constant);
    assert!(cert.samples.len() + cert.excluded >= 8 * leaves);
    assert!(cert.ln_conclusion.is_some());
}

#[test]
fn radii_beyond_first_gap_are_excluded() {
    let (tree, mu) = faithful();
    let ln_r0 = ln_first_gap(tree).unwrap();
    let cert = mdp_certificate(tree, mu, 10, &[ln_r0 + 1e-3]).unwrap();
    assert!(cert.samples.is_empty());
    assert_eq!(cert.excluded, tree.leaves().len());
    assert!(!cert.pass);
    assert!(mdp_certificate(tree, mu, 0, &[ln_r0 - 1.0]).is_err());
    assert!(mdp_certificate(tree, mu, 1, &[]).is_err());
}
