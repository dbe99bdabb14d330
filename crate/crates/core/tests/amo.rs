use std::sync::OnceLock;

use amo_core::amo::*;
use amo_core::circle::AlphaSpec;
use amo_core::gauge::Cover;
use amo_core::Error;
use proptest::prelude::*;

fn r(p: u64, q: u64) -> Rational {
    Rational::new(p, q).unwrap()
}

fn golden_ladder() -> &'static Vec<Rational> {
    static L: OnceLock<Vec<Rational>> = OnceLock::new();
    L.get_or_init(|| convergent_ladder(&AlphaSpec::golden(), 377).unwrap())
}

fn params(lambda: f64, alpha: Frequency, theta: f64) -> AmoParams {
    AmoParams {
        lambda,
        alpha,
        theta,
    }
}

#[test]
fn rational_validation_and_parsing() {
    assert!(Rational::new(1, 0).is_err());
    assert!(Rational::new(5, 5).is_err());
    assert!(Rational::new(2, 4).is_err());
    assert_eq!(Rational::new(0, 1).unwrap(), r(0, 1));
    let x: Rational = "2/5".parse().unwrap();
    assert_eq!(x, r(2, 5));
    assert_eq!(x.to_string(), "2/5");
    assert!("3".parse::<Rational>().is_err());
    assert!("a/5".parse::<Rational>().is_err());
}

#[test]
fn golden_ladder_convergents() {
    let got: Vec<String> = golden_ladder().iter().map(|f| f.to_string()).collect();
    let want = [
        "0/1", "1/2", "2/3", "3/5", "5/8", "8/13", "13/21", "21/34", "34/55", "55/89", "89/144",
        "144/233", "233/377",
    ];
    assert_eq!(got, want);
}

#[test]
fn transfer_single_step_free() {
    let m = transfer_matrix(&params(0.0, Frequency::Rational(r(1, 2)), 0.0), 0.0, 1).unwrap();
    assert_eq!(m.ln_scale, 0.0);
    assert_eq!(
        m.matrix.as_slice(),
        nalgebra::Matrix2::new(0.0, -1.0, 1.0, 0.0).as_slice()
    );
    assert!(transfer_matrix(&params(0.0, Frequency::Rational(r(1, 2)), 0.0), 0.0, 0).is_err());
    assert!(transfer_matrix(&params(-1.0, Frequency::Rational(r(1, 2)), 0.0), 0.0, 1).is_err());
    assert!(transfer_matrix(&params(1.0, Frequency::Rational(r(1, 2)), 1.0), 0.0, 1).is_err());
}

#[test]
fn transfer_growth_outside_free_spectrum() {
    let p = params(0.0, Frequency::Irrational(AlphaSpec::golden()), 0.0);
    let root = (3.0 + 5f64.sqrt()) / 2.0;
    let a = transfer_matrix(&p, 3.0, 40).unwrap();
    let b = transfer_matrix(&p, 3.0, 41).unwrap();
    let ratio = (b.matrix[(0, 0)] / a.matrix[(0, 0)]) * (b.ln_scale - a.ln_scale).exp();
    assert!((ratio - root).abs() < 1e-12, "{ratio}");
    // renormalized products keep track of the scale
    let big = transfer_matrix(&p, 3.0, 2000).unwrap();
    assert!(big.ln_scale > 0.0);
    let rate = (big.matrix.amax().ln() + big.ln_scale) / 2000.0;
    assert!((rate - root.ln()).abs() < 1e-3);
}

proptest! {
    #[test]
    fn transfer_determinant_is_one(
        lambda in 0.0..1.0f64,
        e in -4.0..4.0f64,
        theta in 0.0..1.0f64,
        n in 1u64..60,
        rational in any::<bool>(),
    ) {
        let alpha = if rational {
            Frequency::Rational(r(34, 55))
        } else {
            Frequency::Irrational(AlphaSpec::golden())
        };
        let m = transfer_matrix(&params(lambda, alpha, theta), e, n).unwrap();
        let scale = (m.matrix.amax().ln() + m.ln_scale).exp();
        // rounding in ad - bc is relative to the squared norm
        prop_assert!((m.determinant() - 1.0).abs() <= 1e-12 * scale * scale.max(1.0));
    }

    #[test]
    fn beta_delta_round_trip(beta in 0.5001..0.9999f64, lambda in 0.01..0.99f64) {
        let d = delta_of_beta(beta, lambda).unwrap();
        prop_assert!(d >= -lambda.ln() - 1e-12);
        let b = beta_of_delta(d, lambda).unwrap();
        prop_assert!((b - beta).abs() <= 1e-9);
    }
}

#[test]
fn beta_delta_examples() {
    let d = delta_of_beta(0.75, 0.5).unwrap();
    assert!((d - 1.039721).abs() < 1e-6);
    assert_eq!(delta_of_beta(0.5, 0.5).unwrap(), f64::INFINITY);
    assert!(delta_of_beta(0.5 + 1e-9, 0.5).unwrap() > 1e8);
    let near_one = delta_of_beta(1.0 - 1e-9, 0.5).unwrap();
    assert!((near_one - 2f64.ln()).abs() < 1e-6);
    assert_eq!(beta_of_delta(f64::INFINITY, 0.5).unwrap(), 0.5);
    assert!((beta_of_delta(2f64.ln(), 0.5).unwrap() - 1.0).abs() < 1e-12);
    for bad in [
        delta_of_beta(1.0, 0.5),
        delta_of_beta(0.4, 0.5),
        delta_of_beta(0.7, 1.0),
    ] {
        assert!(matches!(bad, Err(Error::Domain(_))));
    }
    assert!(matches!(beta_of_delta(0.5, 0.5), Err(Error::Domain(_))));
    assert!(matches!(beta_of_delta(1.0, 0.0), Err(Error::Domain(_))));
}

#[test]
fn free_spectrum_is_one_band() {
    for f in [r(0, 1), r(1, 2), r(2, 5), r(55, 144)] {
        let s = approximant_spectrum(0.0, f, ThetaPolicy::TwoPhase).unwrap();
        assert_eq!(s.bands, vec![(-2.0, 2.0)], "{f}");
    }
}

#[test]
fn constant_potential_union() {
    let s = approximant_spectrum(0.5, r(0, 1), ThetaPolicy::TwoPhase).unwrap();
    assert_eq!(s.bands.len(), 1);
    assert!((s.bands[0].0 + 3.0).abs() < 1e-12 && (s.bands[0].1 - 3.0).abs() < 1e-12);
}

#[test]
fn period_two_closed_form() {
    let s = approximant_spectrum(0.5, r(1, 2), ThetaPolicy::TwoPhase).unwrap();
    let root5 = 5f64.sqrt();
    assert_eq!(s.bands.len(), 1);
    assert!((s.bands[0].0 + root5).abs() < 1e-13 && (s.bands[0].1 - root5).abs() < 1e-13);
    // θ = 0: v = ±1, bands E² ∈ [1, 5]
    let ph = phase_bands(0.5, r(1, 2), Phase { i: 0, m: 1 });
    let want = [(-root5, -1.0), (1.0, root5)];
    for (b, w) in ph.bands.iter().zip(want) {
        assert!(
            (b.0 - w.0).abs() < 1e-13 && (b.1 - w.1).abs() < 1e-13,
            "{b:?}"
        );
    }
    let t = IdsTable::new(s);
    assert!((t.n(0.0) - 0.5).abs() < 1e-15);
    assert!((t.n(-1.0) - 0.25).abs() < 0.25);
}

#[test]
fn spectra_are_symmetric_and_bounded() {
    for &f in golden_ladder().iter().skip(1).take(10) {
        let s = approximant_spectrum(0.5, f, ThetaPolicy::TwoPhase).unwrap();
        let b = &s.bands;
        assert!(b.len() as u64 <= f.q);
        assert!(b[0].0 >= -3.0 && b[b.len() - 1].1 <= 3.0);
        for i in 0..b.len() {
            let m = b[b.len() - 1 - i];
            assert!(
                (b[i].0 + m.1).abs() < 1e-12 && (b[i].1 + m.0).abs() < 1e-12,
                "{f}"
            );
        }
        assert!(b.windows(2).all(|w| w[0].1 < w[1].0));
        let (dn, de) = IdsTable::new(s).symmetry_defect();
        assert!(dn < 1e-12 && de < 1e-12, "{f}: {dn:e} {de:e}");
    }
}

#[test]
fn duality_scales_band_hulls() {
    for &f in golden_ladder().iter().take(12) {
        let s = approximant_spectrum(0.5, f, ThetaPolicy::TwoPhase).unwrap();
        let d = approximant_spectrum(2.0, f, ThetaPolicy::TwoPhase).unwrap();
        assert_eq!(s.hulls.len(), d.hulls.len());
        for (a, b) in s.hulls.iter().zip(&d.hulls) {
            assert!(
                (a.0 - 0.5 * b.0).abs() <= 1e-10 && (a.1 - 0.5 * b.1).abs() <= 1e-10,
                "{f}"
            );
        }
    }
}

#[test]
fn total_length_decreases_towards_limit() {
    let mut prev = f64::INFINITY;
    for &f in golden_ladder() {
        let s = approximant_spectrum(0.5, f, ThetaPolicy::TwoPhase).unwrap();
        let len = s.measure();
        assert!(len <= prev + 1e-12, "{f}: {len} > {prev}");
        assert!(len >= 4.0 * (1.0 - 0.5) - 1e-12, "{f}: {len}");
        // merging gaps below the tolerance only adds length
        assert!(s.total_length() >= len - 1e-12);
        prev = len;
    }
}

#[test]
fn phase_grid_stays_inside_two_phase_union() {
    let two = approximant_spectrum(0.5, r(3, 5), ThetaPolicy::TwoPhase).unwrap();
    let grid = approximant_spectrum(0.5, r(3, 5), ThetaPolicy::Grid { m: 6 }).unwrap();
    assert_eq!(grid.phases.len(), 7);
    let w: f64 = grid.phases.iter().map(|p| p.weight).sum();
    assert!((w - 1.0).abs() < 1e-15);
    for b in &grid.bands {
        assert!(two.contains(b.0 + 1e-12) && two.contains(b.1 - 1e-12));
    }
    assert!((grid.total_length() - two.total_length()).abs() < 1e-9);
}

#[test]
fn ids_limits_and_monotonicity() {
    assert!((ids(0.0, r(2, 5), 0.0).unwrap() - 0.5).abs() < 1e-15);
    let t = IdsTable::build(0.5, r(8, 13), ThetaPolicy::TwoPhase).unwrap();
    assert_eq!(t.n(-3.5), 0.0);
    assert_eq!(t.n(3.5), 1.0);
    let mut prev = 0.0;
    for i in 0..=4000 {
        let e = -3.0 + 6.0 * i as f64 / 4000.0;
        let n = t.n(e);
        assert!(n >= prev - 1e-15 && (0.0..=1.0).contains(&n));
        prev = n;
    }
    // each gap sits at j/q
    for g in gap_labels(&t).iter().filter(|g| g.open_in_union) {
        let mid = 0.5 * (g.lo + g.hi);
        assert!((t.n(mid) - g.j as f64 / 13.0).abs() < 1e-12, "gap {}", g.j);
    }
    assert!(t.breakpoints_csv().starts_with("E,N\n"));
    assert!(t.breakpoints.windows(2).all(|w| w[0].0 <= w[1].0));
}

#[test]
fn gap_labels_examples() {
    let half = gap_labels(&IdsTable::build(0.5, r(1, 2), ThetaPolicy::TwoPhase).unwrap());
    assert_eq!(half.len(), 1);
    assert_eq!((half[0].j, half[0].k), (1, 1));
    assert!((half[0].ids_value - 0.5).abs() < 1e-15);
    assert!(half[0].ambiguous);

    assert!(gap_labels(&IdsTable::build(0.0, r(2, 5), ThetaPolicy::TwoPhase).unwrap()).is_empty());

    let five = gap_labels(&IdsTable::build(0.5, r(2, 5), ThetaPolicy::TwoPhase).unwrap());
    let ks: Vec<(u64, i64)> = five.iter().map(|g| (g.j, g.k)).collect();
    assert_eq!(ks, vec![(1, -2), (2, 1), (3, -1), (4, 2)]);
    for g in &five {
        assert_eq!((2 * g.k).rem_euclid(5), g.j as i64);
        assert!(!g.ambiguous && g.open_in_union);
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[test]
fn holder_envelope_free_interior() {
    let t = IdsTable::build(0.0, r(2, 5), ThetaPolicy::TwoPhase).unwrap();
    let h = holder_check(&t, &[0.3, -1.1], &log_grid(1e-6, 0.1, 20)).unwrap();
    assert!(h.violations.is_empty());
    assert!(h.c_low > 0.0 && h.c_high.is_finite());
    // Lipschitz interior: increments are ~ ε
    for &(_, eps, d) in &h.rows {
        let ratio = d / eps;
        assert!(ratio > 0.3 && ratio < 1.0, "{ratio}");
    }
    assert!(h.rows_csv().starts_with("E,eps,increment\n"));
}

#[test]
fn holder_envelope_golden_approximant() {
    let t = IdsTable::build(0.5, r(89, 144), ThetaPolicy::TwoPhase).unwrap();
    let es = t.spread_energies(100);
    assert_eq!(es.len(), 100);
    let h = holder_check(&t, &es, &log_grid(1e-6, 0.1, 26)).unwrap();
    assert!(h.violations.is_empty());
    assert!(h.c_low > 0.0 && h.c_high < f64::INFINITY);
    // band edges: one-sided square-root increments stay inside
    let edges: Vec<f64> = t.spectrum.bands.iter().flat_map(|b| [b.0, b.1]).collect();
    let he = holder_check(&t, &edges, &log_grid(1e-6, 0.1, 26)).unwrap();
    assert!(he.violations.is_empty());
}

#[test]
fn holder_preconditions() {
    let t = IdsTable::build(0.5, r(2, 5), ThetaPolicy::TwoPhase).unwrap();
    let gap = gap_labels(&t)[0].clone();
    let mid = 0.5 * (gap.lo + gap.hi);
    assert!(matches!(
        holder_check(&t, &[mid], &[1e-3]),
        Err(Error::Precondition(_))
    ));
    let e = t.spectrum.bands[0].0;
    assert!(matches!(
        holder_check(&t, &[e], &[1.0]),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn transport_case_two_splits_at_gap() {
    for f in [r(3, 5), r(8, 13)] {
        let t = IdsTable::build(0.5, f, ThetaPolicy::TwoPhase).unwrap();
        let c = fitted_constant(&t).unwrap();
        assert!(c > 0.0 && c < 1.0);
        let g = &gap_labels(&t)[0];
        let lim = (c / 6.0).powi(2);
        let cover = Cover::new(vec![(g.ids_value - 0.3 * lim, g.ids_value + 0.3 * lim)]).unwrap();
        let rep = transport_cover(&t, &cover, 2.0, Direction::DToF, c).unwrap();
        let p = &rep.pieces[0];
        assert_eq!(p.case, 2, "{f}");
        assert_eq!(p.image.len(), 2);
        assert!(p.image[0].1 <= g.lo + 1e-12 && p.image[1].0 >= g.hi - 1e-12);
        assert!(p.cubic_ok);
        assert!(rep.pass && rep.ratio <= 2.0 * 9.0);
    }
}

#[test]
fn transport_case_one_inside_band() {
    let t = IdsTable::build(0.5, r(8, 13), ThetaPolicy::TwoPhase).unwrap();
    let c = fitted_constant(&t).unwrap();
    let lim = (c / 6.0).powi(2);
    let b = t.spectrum.bands[4];
    let level = t.n(0.5 * (b.0 + b.1));
    let cover = Cover::new(vec![
        (level - 0.4 * lim, level + 0.4 * lim),
        (level + 0.5 * lim, level + 0.9 * lim),
    ])
    .unwrap();
    let rep = transport_cover(&t, &cover, 1.5, Direction::DToF, c).unwrap();
    assert_eq!(rep.case1, 2);
    assert!(rep
        .pieces
        .iter()
        .all(|p| p.case == 1 && p.image.len() == 1 && p.cubic_ok));
    assert!(rep.pass);
    assert_eq!(rep.bound, 2.0 * 1.5f64.exp2().powf(3f64.log2()));
}

#[test]
fn transport_forward_bound() {
    let t = IdsTable::build(0.5, r(21, 34), ThetaPolicy::TwoPhase).unwrap();
    let c = fitted_constant(&t).unwrap();
    let len = 0.5 * c.powi(6);
    let cover = Cover::new(
        t.spread_energies(40)
            .into_iter()
            .map(|e| (e - 0.5 * len, e + 0.5 * len))
            .collect(),
    )
    .unwrap();
    for s in [0.5, 1.0, 2.0] {
        let rep = transport_cover(&t, &cover, s, Direction::FToD, c).unwrap();
        assert!(rep.pass, "s={s}: ratio {}", rep.ratio);
        assert!(rep.ratio <= 3f64.powf(s));
    }
}

#[test]
fn transport_rejects_large_covers() {
    let t = IdsTable::build(0.5, r(3, 5), ThetaPolicy::TwoPhase).unwrap();
    let c = fitted_constant(&t).unwrap();
    let full = Cover::new(vec![(0.0, 1.0)]).unwrap();
    assert!(matches!(
        transport_cover(&t, &full, 2.0, Direction::DToF, c),
        Err(Error::Precondition(_))
    ));
    let wide = Cover::new(vec![(-0.5, 0.5)]).unwrap();
    assert!(matches!(
        transport_cover(&t, &wide, 2.0, Direction::FToD, c),
        Err(Error::Precondition(_))
    ));
    assert!(transport_cover(&t, &full, 2.0, Direction::DToF, 1.5).is_err());
}

fn radii() -> Vec<f64> {
    log_grid(1e-4, 1e-11, 21)
}

#[test]
fn local_dimension_free_case() {
    let ladder = &golden_ladder()[10..];
    let est = local_dim_estimate(0.0, ladder, 0.3, &radii(), None).unwrap();
    assert!((est.lower_est - 1.0).abs() < 0.05 && (est.upper_est - 1.0).abs() < 0.05);
    assert!(est.spread < 0.05);
}

#[test]
fn local_dimension_gap_edge_and_generic() {
    let ladder = &golden_ladder()[10..];
    let fine = IdsTable::build(0.5, *ladder.last().unwrap(), ThetaPolicy::TwoPhase).unwrap();
    let labels = gap_labels(&fine);
    let big = labels
        .iter()
        .max_by(|a, b| (a.hi - a.lo).total_cmp(&(b.hi - b.lo)))
        .unwrap();
    assert_eq!(big.k.abs(), 1);
    let edge = local_dim_estimate(0.5, ladder, big.lo, &radii(), None).unwrap();
    assert!(
        (0.35..=0.65).contains(&edge.lower_est),
        "{}",
        edge.lower_est
    );

    let b = fine.spectrum.bands[fine.spectrum.bands.len() / 3];
    let generic = local_dim_estimate(0.5, ladder, 0.5 * (b.0 + b.1), &radii(), None).unwrap();
    assert!(
        (0.9..=1.1).contains(&generic.upper_est),
        "{}",
        generic.upper_est
    );
}

#[test]
fn local_dimension_guards() {
    let ladder = &golden_ladder()[10..];
    let fine = IdsTable::build(0.5, *ladder.last().unwrap(), ThetaPolicy::TwoPhase).unwrap();
    let g = &gap_labels(&fine)[0];
    let in_gap = 0.5 * (g.lo + g.hi);
    assert!(matches!(
        local_dim_estimate(0.5, ladder, in_gap, &radii(), None),
        Err(Error::Precondition(_))
    ));
    let mut up = radii();
    up.reverse();
    assert!(local_dim_estimate(0.5, ladder, 0.0, &up, None).is_err());
    assert!(local_dim_estimate(0.5, &[], 0.0, &radii(), None).is_err());
    // the edge of the big gap falls in a gap of an intermediate rung
    let big = gap_labels(&fine)
        .into_iter()
        .max_by(|a, b| (a.hi - a.lo).total_cmp(&(b.hi - b.lo)))
        .unwrap();
    let strict = local_dim_estimate(0.5, ladder, big.lo, &radii(), Some(1e-6));
    assert!(matches!(strict, Err(Error::Instability(_))), "{strict:?}");
}

#[test]
fn csv_interfaces() {
    let s = approximant_spectrum(0.5, r(2, 5), ThetaPolicy::TwoPhase).unwrap();
    let csv = bands_csv(&s);
    assert!(csv.starts_with("q,band_index,E_lo,E_hi\n"));
    assert_eq!(csv.lines().count(), 1 + s.bands.len());
    let rows = butterfly(0.5, 8).unwrap();
    assert!(rows.iter().all(|row| row.q() <= 8));
    let qs: std::collections::BTreeSet<u64> = rows.iter().map(|row| row.q()).collect();
    assert_eq!(qs.len(), 8);
    let csv = butterfly_csv(&rows);
    assert!(csv.starts_with("p,q,E_lo,E_hi\n"));
    let total: usize = rows.iter().map(|row| row.bands.len()).sum();
    assert_eq!(csv.lines().count(), 1 + total);
}
