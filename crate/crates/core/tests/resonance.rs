use amo_core::circle::{orbit_point, AlphaSpec, CirclePoint};
use amo_core::resonance::*;
use num_bigint::BigInt;
use proptest::prelude::*;

#[test]
fn exact_orbit_point_is_infinitely_resonant() {
    let g = AlphaSpec::golden();
    let x = orbit_point(&g, &BigInt::from(3), 256).unwrap();
    let est = resonance_strength(&g, &x, 1, 1000).unwrap();
    assert_eq!(est.value, f64::INFINITY);
    assert_eq!(est.exact_orbit_hit, Some(3));
    // outside the window the orbit index is irrelevant
    let est = resonance_strength(&g, &x, 10, 1000).unwrap();
    assert!(est.value.is_finite());
}

#[test]
fn generic_point_has_small_estimate() {
    let g = AlphaSpec::golden();
    let x = CirclePoint::from_f64(0.5, 256);
    let late = resonance_strength(&g, &x, 1000, 10_000).unwrap();
    println!("x=0.5 window (1e3,1e4): {}", late.value);
    assert!(late.value < 0.01);
    // the full window is dominated by k = 1: -ln ‖0.5 - φ‖
    let full = resonance_strength(&g, &x, 1, 10_000).unwrap();
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    assert!((full.value + (phi - 0.5f64).ln()).abs() < 1e-12);
    assert_eq!(full.witness_ks[0], 1);
}

#[test]
fn empty_window_rejected() {
    let g = AlphaSpec::golden();
    let x = CirclePoint::from_f64(0.5, 256);
    assert!(resonance_strength(&g, &x, 0, 10).is_err());
    assert!(resonance_strength(&g, &x, 20, 10).is_err());
}

#[test]
fn exact_hit_listed() {
    let g = AlphaSpec::silver();
    let x = orbit_point(&g, &BigInt::from(-7), 256).unwrap();
    let hits = psi_hits(&g, &x, &Threshold::Exponential { eta: 3.0 }, 100).unwrap();
    let h = hits.iter().find(|h| h.k == -7).expect("exact hit missing");
    assert_eq!(h.dist, 0.0);
    assert!(hits.iter().all(|h| h.dist < h.threshold));
}

#[test]
fn random_points_rarely_hit() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let g = AlphaSpec::golden();
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..5 {
        let x0: f64 = rng.gen();
        let x = CirclePoint::from_f64(x0, 256);
        let hits = psi_hits(&g, &x, &Threshold::Exponential { eta: 5.0 }, 1000).unwrap();
        // direct f64 scan oracle
        let brute: Vec<i64> = (1..=1000i64)
            .flat_map(|k| [k, -k])
            .filter(|&k| {
                let d = (x0 - k as f64 * phi).rem_euclid(1.0);
                d.min(1.0 - d) < (-(k.abs() as f64) * 5.0).exp()
            })
            .collect();
        assert_eq!(hits.iter().map(|h| h.k).collect::<Vec<_>>(), brute);
    }
}

#[test]
fn table_threshold() {
    let g = AlphaSpec::golden();
    let x = CirclePoint::from_f64(0.0, 256);
    let hits = psi_hits(&g, &x, &Threshold::Table(vec![0.4, 0.1, 0.3]), 50).unwrap();
    // ‖φ‖ = 0.382, ‖2φ‖ = 0.236, ‖3φ‖ = 0.146
    let ks: Vec<i64> = hits.iter().map(|h| h.k).collect();
    assert_eq!(ks, vec![1, -1, 3, -3]);
    let csv = hits_csv(&hits);
    assert!(csv.starts_with("k,dist,threshold,log_ratio\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn zero_is_not_resonant_at_unit_rate() {
    let g = AlphaSpec::golden();
    let x = CirclePoint::zero(256);
    // k = 1 gives -ln ‖φ‖ = 0.962, so the default 10% band would catch it
    let v = classify_d_delta(&g, &x, 1.0, (1, 1000), 0.02).unwrap();
    assert!(!v.lower_evidence);
    let v = classify_d_delta(&g, &x, 1.0, (2, 1000), default_tolerance(1.0)).unwrap();
    assert!(!v.lower_evidence);
}

#[test]
fn infinite_target_needs_exact_hit() {
    let g = AlphaSpec::golden();
    let x = orbit_point(&g, &BigInt::from(5), 256).unwrap();
    assert!(
        classify_d_delta(&g, &x, f64::INFINITY, (1, 100), 1.0)
            .unwrap()
            .consistent
    );
    let y = CirclePoint::from_f64(0.3, 256);
    assert!(
        !classify_d_delta(&g, &y, f64::INFINITY, (1, 100), 1.0)
            .unwrap()
            .consistent
    );
    assert!(classify_d_delta(&g, &y, 0.0, (1, 100), 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn window_monotone(x0 in 0.0..1.0f64, lo in 1u64..50, hi in 50u64..400, extra in 1u64..200) {
        let g = AlphaSpec::silver();
        let x = CirclePoint::from_f64(x0, 128);
        let small = resonance_strength(&g, &x, lo.max(2), hi).unwrap().value;
        let big = resonance_strength(&g, &x, lo.max(2) - 1, hi + extra).unwrap().value;
        prop_assert!(big >= small);
    }
}
