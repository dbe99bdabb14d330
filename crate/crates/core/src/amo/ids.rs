use std::fmt::Write as _;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use super::spectrum::{approximant_spectrum, PhaseSpectrum, SpectrumApprox, MERGE_TOL};
use super::{Rational, ThetaPolicy};
use crate::error::{Error, Result};

/// `(sign, ln |·|)` of `Π (e - r_i)`.
fn signed_ln_product(e: f64, roots: &[f64]) -> (f64, f64) {
    let mut sign = 1.0;
    let mut ln = 0.0;
    for &r in roots {
        let d = e - r;
        if d < 0.0 {
            sign = -sign;
        }
        ln += d.abs().ln();
    }
    (sign, ln)
}

/// `N_θ(E)`: `j/q` on the gap above band `j - 1`, `(j + φ/π)/q` inside band `j`.
///
/// The Bloch phase uses `D - 2 = Π(E - periodic)` and `D + 2 = Π(E - antiperiodic)`
/// so that it stays accurate next to the band edges.
fn phase_ids(ph: &PhaseSpectrum, e: f64) -> f64 {
    let q = ph.bands.len();
    let below = ph.bands.partition_point(|b| b.1 < e);
    if below == q {
        return 1.0;
    }
    let (lo, _) = ph.bands[below];
    if e < lo {
        return below as f64 / q as f64;
    }
    // D = 2s at the bottom of band j
    let s_positive = (q + below) % 2 == 0;
    let (sp, lp) = signed_ln_product(e, &ph.periodic);
    let (sa, la) = signed_ln_product(e, &ph.antiperiodic);
    // (1 - cos φ, 1 + cos φ) up to the common factor 1/2
    let ((s1, l1), (s2, l2)) = if s_positive {
        ((-sp, lp), (sa, la))
    } else {
        ((sa, la), (-sp, lp))
    };
    let phi = if s1 <= 0.0 || l1 == f64::NEG_INFINITY {
        0.0
    } else if s2 <= 0.0 || l2 == f64::NEG_INFINITY {
        std::f64::consts::PI
    } else {
        2.0 * ((l1 - l2) / 2.0).exp().atan()
    };
    (below as f64 + phi / std::f64::consts::PI) / q as f64
}

/// Integrated density of states of a periodic approximant, averaged over the
/// phase policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsTable {
    pub spectrum: SpectrumApprox,
    /// `(E, N(E))` at every band edge of every phase, ascending in `E`.
    pub breakpoints: Vec<(f64, f64)>,
}

impl IdsTable {
    pub fn new(spectrum: SpectrumApprox) -> Self {
        let mut edges: Vec<f64> = spectrum
            .phases
            .iter()
            .flat_map(|p| p.bands.iter().flat_map(|b| [b.0, b.1]))
            .collect();
        edges.sort_by(f64::total_cmp);
        let mut t = IdsTable {
            spectrum,
            breakpoints: vec![],
        };
        t.breakpoints = edges.iter().map(|&e| (e, t.n(e))).collect();
        t
    }

    pub fn build(lambda: f64, r: Rational, policy: ThetaPolicy) -> Result<Self> {
        Ok(Self::new(approximant_spectrum(lambda, r, policy)?))
    }

    pub fn q(&self) -> u64 {
        self.spectrum.q()
    }

    pub fn n(&self, e: f64) -> f64 {
        self.spectrum
            .phases
            .iter()
            .map(|p| p.weight * phase_ids(p, e))
            .sum()
    }

    /// `sup {E : N(E) <= level}`, a point of the spectrum.
    pub fn sup_below(&self, level: f64) -> f64 {
        self.bisect(|e| self.n(e) <= level)
    }

    /// `inf {E : N(E) >= level}`, a point of the spectrum.
    pub fn inf_above(&self, level: f64) -> f64 {
        self.bisect(|e| self.n(e) < level)
    }

    /// Last `E` with `pred(E)` for a predicate that holds on a left ray.
    fn bisect(&self, pred: impl Fn(f64) -> bool) -> f64 {
        let bands = &self.spectrum.bands;
        let (mut lo, mut hi) = (bands[0].0, bands[bands.len() - 1].1);
        if !pred(lo) {
            return lo;
        }
        if pred(hi) {
            return hi;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if pred(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // the answer is a spectrum point; snap out of gaps
        self.snap(lo)
    }

    fn snap(&self, lo: f64) -> f64 {
        if self.spectrum.contains(lo) {
            lo
        } else {
            let b = &self.spectrum.bands;
            b[b.partition_point(|x| x.1 < lo).min(b.len() - 1)].0
        }
    }

    /// The union gap `(E-, E+)` containing `e`, if any.
    pub fn gap_around(&self, e: f64) -> Option<(f64, f64)> {
        self.spectrum
            .bands
            .windows(2)
            .map(|w| (w[0].1, w[1].0))
            .find(|&(a, b)| a < e && e < b)
    }

    /// `max |N_i + N_{m-1-i} - 1|` and `max |E_i + E_{m-1-i}|` over mirrored
    /// breakpoints.
    pub fn symmetry_defect(&self) -> (f64, f64) {
        let b = &self.breakpoints;
        let m = b.len();
        (0..m).fold((0.0f64, 0.0f64), |acc, i| {
            let (e1, n1) = b[i];
            let (e2, n2) = b[m - 1 - i];
            (acc.0.max((n1 + n2 - 1.0).abs()), acc.1.max((e1 + e2).abs()))
        })
    }

    /// `count` energies at the midpoints of equal-length slices of the bands.
    pub fn spread_energies(&self, count: usize) -> Vec<f64> {
        let total = self.spectrum.total_length();
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let mut target = total * (i as f64 + 0.5) / count as f64;
            for &(lo, hi) in &self.spectrum.bands {
                if target <= hi - lo {
                    out.push(lo + target);
                    break;
                }
                target -= hi - lo;
            }
        }
        out
    }

    /// CSV with header `E,N`.
    pub fn breakpoints_csv(&self) -> String {
        let mut s = String::from("E,N\n");
        for (e, n) in &self.breakpoints {
            let _ = writeln!(s, "{e},{n}");
        }
        s
    }
}

/// `N(E)` of the two-phase approximant.
pub fn ids(lambda: f64, r: Rational, e: f64) -> Result<f64> {
    Ok(IdsTable::build(lambda, r, ThetaPolicy::TwoPhase)?.n(e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapLabel {
    /// Bands below the gap.
    pub j: u64,
    /// `N` on the gap, `j/q`.
    pub ids_value: f64,
    pub lo: f64,
    pub hi: f64,
    /// The gap survives the union over phases.
    pub open_in_union: bool,
    /// `k p ≡ j (mod q)` with `|k|` minimal.
    pub k: i64,
    /// `k` and `k - q` tie; the positive one is reported.
    pub ambiguous: bool,
}

/// Gaps open for at least one phase, with their labels.
pub fn gap_labels(table: &IdsTable) -> Vec<GapLabel> {
    let spec = &table.spectrum;
    let (p, q) = (spec.frequency.p as i64, spec.q() as i64);
    let inv = p.extended_gcd(&q).x.rem_euclid(q.max(1));
    let mut out = Vec::new();
    for j in 1..q as usize {
        let open = spec
            .phases
            .iter()
            .any(|ph| ph.bands[j].0 - ph.bands[j - 1].1 > MERGE_TOL);
        if !open {
            continue;
        }
        let k0 = (j as i64 * inv).rem_euclid(q);
        let (k, ambiguous) = match (2 * k0).cmp(&q) {
            std::cmp::Ordering::Less => (k0, false),
            std::cmp::Ordering::Equal => (k0, true),
            std::cmp::Ordering::Greater => (k0 - q, false),
        };
        let (lo, hi) = (spec.hulls[j - 1].1, spec.hulls[j].0);
        out.push(GapLabel {
            j: j as u64,
            ids_value: j as f64 / q as f64,
            lo,
            hi,
            open_in_union: hi - lo > MERGE_TOL,
            k,
            ambiguous,
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub samples: Vec<f64>,
    pub eps: Vec<f64>,
    /// Largest `c` with `c ε^{3/2} <= N(E+ε) - N(E-ε)` on all samples.
    pub c_low: f64,
    /// Smallest `C` with `N(E+ε) - N(E-ε) <= C ε^{1/2}` on all samples.
    pub c_high: f64,
    /// `min(c_low, 1/c_high)`: a single constant for both sides.
    pub c: f64,
    /// `(E, ε, increment)` rows where no positive constant works.
    pub violations: Vec<(f64, f64, f64)>,
    pub rows: Vec<(f64, f64, f64)>,
}

impl HolderReport {
    /// CSV with header `E,eps,increment`.
    pub fn rows_csv(&self) -> String {
        let mut s = String::from("E,eps,increment\n");
        for (e, eps, d) in &self.rows {
            let _ = writeln!(s, "{e},{eps},{d}");
        }
        s
    }
}

/// Fits the envelope `c ε^{3/2} <= N(E+ε) - N(E-ε) <= C ε^{1/2}`.
pub fn holder_check(table: &IdsTable, e_samples: &[f64], eps_grid: &[f64]) -> Result<HolderReport> {
    if let Some(e) = e_samples.iter().find(|&&e| !table.spectrum.contains(e)) {
        return Err(Error::Precondition(format!("E = {e} is not in the bands")));
    }
    if let Some(eps) = eps_grid.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::Precondition(format!("ε = {eps} outside (0, 1)")));
    }
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let (mut c_low, mut c_high) = (f64::INFINITY, 0.0f64);
    for &e in e_samples {
        for &eps in eps_grid {
            let d = table.n(e + eps) - table.n(e - eps);
            rows.push((e, eps, d));
            if !(d > 0.0 && d.is_finite()) {
                violations.push((e, eps, d));
                continue;
            }
            c_low = c_low.min(d / eps.powf(1.5));
            c_high = c_high.max(d / eps.sqrt());
        }
    }
    if !violations.is_empty() {
        c_low = 0.0;
    }
    Ok(HolderReport {
        samples: e_samples.to_vec(),
        eps: eps_grid.to_vec(),
        c_low,
        c_high,
        c: c_low.min(1.0 / c_high),
        violations,
        rows,
    })
}
