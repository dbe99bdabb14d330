use std::sync::OnceLock;

use amo_core::cantor::*;
use amo_core::circle::{circle_dist, AlphaSpec};
use amo_core::mass::ln_first_gap;
use amo_core::resonance::{classify_d_delta, psi_hits, resonance_strength, Threshold};
use amo_core::Error;
use num_bigint::BigUint;

fn golden() -> AlphaSpec {
    AlphaSpec::golden()
}

fn faithful_tree() -> &'static CantorTree {
    static TREE: OnceLock<CantorTree> = OnceLock::new();
    TREE.get_or_init(|| {
        build_tree(
            &golden(),
            1.0,
            &ConstructionConstants::faithful(),
            1,
            BranchPolicy::Full,
        )
        .unwrap()
    })
}

fn toy_tree() -> &'static CantorTree {
    static TREE: OnceLock<CantorTree> = OnceLock::new();
    TREE.get_or_init(|| {
        build_tree(
            &golden(),
            2.0,
            &ConstructionConstants::toy(),
            3,
            BranchPolicy::Sample { branches: 2 },
        )
        .unwrap()
    })
}

fn index_of_q(sel: &mut Selector, q: u32) -> usize {
    (0..64)
        .find(|&k| sel.q(k).unwrap() == BigUint::from(q))
        .expect("denominator present")
}

#[test]
fn delta_sequence_examples() {
    assert!((delta_sequence(f64::INFINITY, 1e6) - 2.6258).abs() < 1e-4);
    for k in [1.0, 10.0, 21.0, 1e9] {
        assert_eq!(delta_sequence(0.5, k), 0.5);
    }
    assert_eq!(delta_sequence(2.0, 10.0), 1.0);
    assert_eq!(delta_sequence(f64::INFINITY, 20.0), 1.0);
}

#[test]
fn level_delta_by_mode() {
    assert_eq!(level_delta(Mode::Toy, 2.0, 3), 2.0);
    assert_eq!(level_delta(Mode::Faithful, 2.0, 3), 1.0);
    // infinite target follows the sequence in both modes
    assert_eq!(level_delta(Mode::Toy, f64::INFINITY, 3), 1.0);
}

#[test]
fn constants_validation() {
    let mut k = ConstructionConstants::faithful();
    assert!(k.validate(1.0).is_ok());
    k.c = 1e-2;
    assert!(k.validate(1.0).is_err());
    let mut k = ConstructionConstants::faithful();
    k.a_factor = 2f64.powi(-8);
    assert!(k.validate(1.0).is_err());
    let mut k = ConstructionConstants::faithful();
    k.a0 = 2f64.powi(-10);
    assert!(k.validate(1.0).is_err());
    let mut k = ConstructionConstants::toy();
    assert!(k.validate(2.0).is_ok());
    k.c = 0.4;
    assert!(k.validate(2.0).is_err());
}

#[test]
fn interval_selection_on_unit_interval() {
    let mut sel = Selector::new(&golden(), &ConstructionConstants::faithful()).unwrap();
    let k = index_of_q(&mut sel, 987);
    let s = sel.select_in_interval(0.0, 1.0, k, 1.0).unwrap();
    assert_eq!(s.q, BigUint::from(987u32));
    let n = s.selected.len();
    assert!((123..=494).contains(&n), "#D = {n}");
    assert!(n as f64 >= s.lower_bound && n as f64 <= s.upper_bound);
    assert!(s.discrepancy_applicable);
    for m in &s.selected {
        assert!(m >= &BigUint::from(494u32) && m < &BigUint::from(987u32));
    }
}

#[test]
fn narrow_interval_is_inadmissible() {
    let mut sel = Selector::new(&golden(), &ConstructionConstants::faithful()).unwrap();
    let k = index_of_q(&mut sel, 987);
    let e = sel.select_in_interval(0.5, 0.5 + 1e-6, k, 1.0).unwrap_err();
    assert!(matches!(e, Error::InadmissibleScale { .. }), "{e:?}");
}

#[test]
fn toy_interval_selection_records_margin() {
    let mut sel = Selector::new(&golden(), &ConstructionConstants::toy()).unwrap();
    let k = index_of_q(&mut sel, 233);
    match sel.select_in_interval(0.2, 0.4, k, 2.0) {
        Ok(s) => {
            assert!(s.selected.len() as f64 >= 0.025 * 233.0);
            assert!(s.discrepancy_margin.is_finite());
        }
        Err(Error::InadmissibleScale { reason, .. }) => assert!(!reason.is_empty()),
        Err(e) => panic!("{e:?}"),
    }
}

fn toy_annulus() -> (Annulus, BigUint) {
    // n = 3 in the window of q = 5, with |A| = 2(1 - c)e^{-nδ} = 0.01
    let c = ConstructionConstants::toy().c;
    let delta = (2.0 * (1.0 - c) / 0.01f64).ln() / 3.0;
    let a = Annulus {
        n: BigUint::from(3u32),
        delta,
        c,
    };
    (a, BigUint::from(5u32))
}

#[test]
fn toy_annulus_selection_count() {
    let (a, wq) = toy_annulus();
    assert!((a.ln_measure().exp() - 0.01).abs() < 1e-12);
    let mut sel = Selector::new(&golden(), &ConstructionConstants::toy()).unwrap();
    let k = index_of_q(&mut sel, 6765);
    let s = sel.select_in_annulus(&a, &wq, k, 2.0).unwrap();
    assert!(s.selected.len() >= 8, "#D = {}", s.selected.len());
    assert!(s.selected.len() as f64 <= s.upper_bound);
    let rot = sel.rotation(256).unwrap();
    let center = a.center(&rot);
    for n in &s.selected {
        let d = circle_dist(&rot.point_u(n), &center).to_f64();
        let r = (-(n.to_string().parse::<f64>().unwrap()) * 2.0).exp();
        // the child ball sits inside A = B(3α, R) \ B(3α, cR)
        assert!(d - r >= a.ln_inner().exp() && d + r <= a.ln_outer().exp());
    }
}

#[test]
fn annulus_scale_too_close_is_inadmissible() {
    let (a, wq) = toy_annulus();
    let mut sel = Selector::new(&golden(), &ConstructionConstants::toy()).unwrap();
    let l = index_of_q(&mut sel, 5);
    let e = sel.select_in_annulus(&a, &wq, l + 1, 2.0).unwrap_err();
    assert!(matches!(e, Error::InadmissibleScale { .. }), "{e:?}");
}

#[test]
fn faithful_filter_removal_within_volume_bound() {
    for (_, node) in faithful_tree().level(0) {
        for s in &node.expansion.as_ref().unwrap().subscales {
            let a = s.selection.filtered as f64;
            assert!(a <= s.selection.q.to_string().parse::<f64>().unwrap() / 24.0);
        }
    }
}

#[test]
fn thinning_keeps_first_subscale_and_half_of_the_rest() {
    for tree in [faithful_tree(), toy_tree()] {
        for node in &tree.nodes {
            let Some(exp) = &node.expansion else { continue };
            let first = &exp.subscales[0];
            assert_eq!(first.removed, 0);
            assert_eq!(first.kept, first.selection.selected);
            for s in &exp.subscales {
                assert!(2 * s.removed <= s.selection.selected.len());
                assert_eq!(s.kept.len() + s.removed, s.selection.selected.len());
            }
        }
    }
}

#[test]
fn thinned_centers_are_packing_separated() {
    let tree = faithful_tree();
    let rot = tree.rotation().unwrap();
    let exp = tree.root().expansion.as_ref().unwrap();
    let last_q = &exp.subscales.last().unwrap().selection.q;
    let ln_gap = std::f64::consts::LN_2 + exp.ln_a_prev
        - exp.delta_t.ln()
        - last_q.to_string().parse::<f64>().unwrap().ln();
    let pts: Vec<_> = exp
        .subscales
        .iter()
        .flat_map(|s| s.kept.iter())
        .map(|n| rot.point_u(n))
        .collect();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            assert!(circle_dist(&pts[i], &pts[j]).ln_lower() > ln_gap);
        }
    }
}

#[test]
fn thin_selection_single_subscale_is_identity() {
    let mut sel = Selector::new(&golden(), &ConstructionConstants::faithful()).unwrap();
    let k = index_of_q(&mut sel, 144);
    let s = sel.select_in_interval(0.0, 1.0, k, 1.0).unwrap();
    let rot = sel.rotation(256).unwrap();
    let out = thin_selection(&rot, std::slice::from_ref(&s), (2f64.powi(-11)).ln(), 1.0).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].kept, s.selected);
}

#[test]
fn choose_k_on_unit_interval() {
    for consts in [
        ConstructionConstants::toy(),
        ConstructionConstants::faithful(),
    ] {
        let mut sel = Selector::new(&golden(), &consts).unwrap();
        let region = Region::Interval { lo: 0.0, hi: 1.0 };
        let (k, subs, _) = sel.choose_k(&region, 1.0, consts.a0.ln(), 2, 1).unwrap();
        assert!(k < 16, "k = {k}");
        assert_eq!(subs.len(), 2);
    }
}

#[test]
fn thin_faithful_annulus_exceeds_cap() {
    let consts = ConstructionConstants::faithful();
    let mut sel = Selector::new(&golden(), &consts).unwrap();
    // |A| ≈ 2e-12 at n = 27 in the window of q = 34
    let a = Annulus {
        n: BigUint::from(27u32),
        delta: (1e12f64).ln() / 27.0,
        c: consts.c,
    };
    let region = Region::Annulus {
        annulus: a,
        window_q: BigUint::from(34u32),
    };
    let e = sel.choose_k(&region, 1.1, -30.0, 2, 9).unwrap_err();
    assert!(
        matches!(e, Error::CapExceeded { .. } | Error::ResourceCap { .. }),
        "{e:?}"
    );
}

#[test]
fn build_rejects_bad_inputs() {
    let k = ConstructionConstants::faithful();
    assert!(build_tree(&golden(), 1.0, &k, 0, BranchPolicy::Full).is_err());
    assert!(build_tree(&golden(), 0.0, &k, 1, BranchPolicy::Full).is_err());
    assert!(build_tree(&golden(), 1.0, &k, 1, BranchPolicy::Sample { branches: 0 }).is_err());
}

#[test]
fn faithful_second_level_is_infeasible() {
    let e = build_tree(
        &golden(),
        1.0,
        &ConstructionConstants::faithful(),
        2,
        BranchPolicy::Sample { branches: 1 },
    )
    .unwrap_err();
    match e {
        Error::CapExceeded { path, diagnostics } => {
            assert_eq!(path, "0");
            assert!(diagnostics.contains("sub-scales"));
        }
        e => panic!("{e:?}"),
    }
}

#[test]
fn faithful_first_level_audit_passes() {
    let tree = faithful_tree();
    assert!(tree.level(1).count() > 100);
    let rep = verify_tree(tree, 1).unwrap();
    let fails: Vec<_> = rep.failures().collect();
    assert!(rep.pass, "{fails:?}");
    for check in [
        "packing-identity",
        "selection-lower",
        "kept-lower",
        "thinning-half",
        "nesting",
        "packing-disjoint",
    ] {
        assert!(rep.count(check) > 0, "{check}");
    }
    assert!(rep.to_csv().starts_with("node,check,pass,margin\n"));
}

#[test]
fn toy_depth_three_audit_passes() {
    let tree = toy_tree();
    assert!(tree.level(3).count() > 0);
    let rep = verify_tree(tree, 7).unwrap();
    let fails: Vec<_> = rep.failures().collect();
    assert!(rep.pass, "{fails:?}");
    assert!(rep.count("exclusion") > 0);
    for t in 1..=3 {
        assert!(tree.level(t).all(|(_, n)| n.delta == 2.0));
    }
}

#[test]
fn corrupted_child_is_flagged() {
    let mut tree = faithful_tree().clone();
    let kids = tree.root().children.clone();
    let moved = tree.nodes[kids[0]].n.clone();
    tree.nodes[kids[1]].n = moved.clone();
    let exp = tree.nodes[0].expansion.as_mut().unwrap();
    for s in &mut exp.subscales {
        if let Some(slot) = s.kept.iter_mut().find(|n| **n != moved) {
            *slot = moved.clone();
            break;
        }
    }
    let rep = verify_tree(&tree, 1).unwrap();
    assert!(!rep.pass);
    assert!(rep.failures().any(|e| e.check == "packing-disjoint"));
}

#[test]
fn canonical_json_is_deterministic_and_round_trips() {
    let a = faithful_tree();
    let b = build_tree(
        &golden(),
        1.0,
        &ConstructionConstants::faithful(),
        1,
        BranchPolicy::Full,
    )
    .unwrap();
    let ja = a.to_canonical_json();
    assert_eq!(ja, b.to_canonical_json());
    let back = CantorTree::from_json(&ja).unwrap();
    assert_eq!(&back, a);
    assert!(CantorTree::from_json("{").is_err());
}

#[test]
fn cantor_point_lies_in_leaf_annulus() {
    let tree = faithful_tree();
    let rot = tree.rotation().unwrap();
    for leaf in tree.leaves().into_iter().take(20) {
        let p = cantor_point(tree, leaf).unwrap();
        let ann = tree.nodes[leaf].annulus(tree.constants.c).unwrap();
        let d = circle_dist(&p.point, &ann.center(&rot));
        assert!(d.ln_lower() >= ann.ln_inner() && d.ln_upper() <= ann.ln_outer());
        assert_eq!(p.witnesses, vec![tree.nodes[leaf].n.clone()]);
    }
    assert!(cantor_point(tree, 0).is_err());
}

#[test]
fn distinct_leaves_are_gap_separated() {
    let tree = faithful_tree();
    let ln_gap = ln_first_gap(tree).unwrap();
    let leaves = tree.leaves();
    let pts: Vec<_> = leaves
        .iter()
        .step_by(13)
        .map(|&l| cantor_point(tree, l).unwrap().point)
        .collect();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            assert!(circle_dist(&pts[i], &pts[j]).ln_lower() >= ln_gap);
        }
    }
}

#[test]
fn deep_leaves_nest_in_their_parents() {
    let tree = toy_tree();
    let rot = tree.rotation().unwrap();
    let c = tree.constants.c;
    let ln_ulp = -(rot.bits() as f64) * std::f64::consts::LN_2;
    for (i, node) in tree.level(3) {
        let p = cantor_point(tree, i).unwrap();
        assert_eq!(p.witnesses.len(), 3);
        for &a in &tree.branch(i) {
            let ann = tree.nodes[a].annulus(c).unwrap();
            let d = circle_dist(&p.point, &ann.center(&rot));
            if ann.ln_inner() > ln_ulp {
                assert!(d.ln_lower() >= ann.ln_inner() && d.ln_upper() <= ann.ln_outer());
            } else {
                // below the working precision: the point is the center up to
                // the n ulps accumulated by nα
                let slack = (tree.nodes[a].n.bits() as f64 + 8.0) * std::f64::consts::LN_2;
                assert!(d.ln_upper() <= ln_ulp + slack, "{}", d.ln_upper());
            }
        }
        assert_eq!(node.level, 3);
    }
}

/// Window from the level-1 denominator to twice the deepest witness that a
/// direct scan can reach.
fn scan_window(p: &CantorPoint) -> (u64, u64) {
    let lo: u64 = p.window_qs[0].to_string().parse().unwrap();
    let deepest = p
        .witnesses
        .iter()
        .filter_map(|w| w.to_string().parse::<u64>().ok())
        .filter(|&w| w <= 1_000_000)
        .max()
        .unwrap();
    (lo, 2 * deepest)
}

#[test]
fn deep_leaves_have_target_resonance() {
    let tree = toy_tree();
    let alpha = &tree.alpha;
    for (i, _) in tree.level(3) {
        let p = cantor_point(tree, i).unwrap();
        let (lo, hi) = scan_window(&p);
        let est = resonance_strength(alpha, &p.point, lo, hi).unwrap();
        assert!((1.8..=2.2).contains(&est.value), "leaf {i}: {}", est.value);
        let v = classify_d_delta(alpha, &p.point, 2.0, (lo, hi), 0.2).unwrap();
        assert!(v.consistent, "leaf {i}: {v:?}");
    }
}

#[test]
fn deep_leaf_hits_every_scanned_level() {
    let tree = toy_tree();
    let leaf = tree.first_deep_leaf();
    let p = cantor_point(tree, leaf).unwrap();
    let (_, hi) = scan_window(&p);
    let hits = psi_hits(
        &tree.alpha,
        &p.point,
        &Threshold::Exponential { eta: 1.0 },
        hi,
    )
    .unwrap();
    let ks: Vec<i64> = hits.iter().map(|h| h.k).collect();
    for w in &p.witnesses {
        if let Ok(w) = w.to_string().parse::<i64>() {
            if w <= hi as i64 {
                assert!(ks.contains(&w), "witness {w} missing from {ks:?}");
            }
        }
    }
}
