use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::dd::Dd;
use super::Rational;
use crate::error::{Error, Result};

/// Gaps narrower than this are treated as closed when merging bands.
pub(crate) const MERGE_TOL: f64 = 1e-11;

/// Phases `θ` that stand in for the union over all `θ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum ThetaPolicy {
    /// `θ ∈ {0, 1/(2q)}`, where the discriminant's phase term is extremal.
    TwoPhase,
    /// `θ_i = i / (2 m q)` for `i = 0..=m`.
    Grid { m: usize },
}

impl ThetaPolicy {
    /// Phases `θ_i = i / (2 m q)` with trapezoid weights summing to one.
    pub fn phases(&self) -> Vec<(Phase, f64)> {
        let m = match *self {
            ThetaPolicy::TwoPhase => 1,
            ThetaPolicy::Grid { m } => m.max(1) as u64,
        };
        (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m { 0.5 } else { 1.0 };
                (Phase { i, m }, w / m as f64)
            })
            .collect()
    }
}

/// The phase `θ = i / (2 m q)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub i: u64,
    pub m: u64,
}

impl Phase {
    pub fn theta(&self, q: u64) -> f64 {
        self.i as f64 / (2 * self.m * q) as f64
    }
}

/// `cos(π a / n)`, exactly odd under `a ↦ n - a`.
fn cos_pi_ratio(a: u64, n: u64) -> f64 {
    let mut a = a % (2 * n);
    if a > n {
        a = 2 * n - a;
    }
    match (2 * a).cmp(&n) {
        std::cmp::Ordering::Equal => 0.0,
        std::cmp::Ordering::Less => (std::f64::consts::PI * a as f64 / n as f64).cos(),
        std::cmp::Ordering::Greater => -(std::f64::consts::PI * (n - a) as f64 / n as f64).cos(),
    }
}

/// `v_k = 2λ cos(2π(k p / q + θ))` over one period.
fn potential(lambda: f64, r: Rational, phase: Phase) -> Vec<f64> {
    let n = phase.m * r.q;
    (0..r.q)
        .map(|k| 2.0 * lambda * cos_pi_ratio(2 * phase.m * (k * r.p % r.q) + phase.i, n))
        .collect()
}

/// `(D(E), D'(E))` with `D` the period trace, `D` in double-double.
fn discriminant(v: &[f64], e: f64) -> (Dd, f64) {
    // rows of the running product and of its derivative
    let (mut a, mut b) = ([Dd::ONE, Dd::ZERO], [Dd::ZERO, Dd::ONE]);
    let (mut da, mut db) = ([0.0f64; 2], [0.0f64; 2]);
    for &vk in v {
        let x = Dd::diff(e, vk);
        let na = [x.mul(a[0]).sub(b[0]), x.mul(a[1]).sub(b[1])];
        let xf = x.to_f64();
        let nda = [
            a[0].to_f64() + xf * da[0] - db[0],
            a[1].to_f64() + xf * da[1] - db[1],
        ];
        db = da;
        da = nda;
        b = a;
        a = na;
    }
    (a[0].add(b[1]), da[0] + db[1])
}

/// Newton-polishes a root of `D(E) = target` starting from the eigenvalue.
fn polish(v: &[f64], e0: f64, target: f64) -> f64 {
    let mut e = e0;
    for _ in 0..100 {
        let (d, dp) = discriminant(v, e);
        let f = d
            .sub(Dd {
                hi: target,
                lo: 0.0,
            })
            .to_f64();
        if f == 0.0 || dp == 0.0 || !dp.is_finite() {
            break;
        }
        let next = e - f / dp;
        if (next - e0).abs() > POLISH_RADIUS || !next.is_finite() {
            return e0;
        }
        if next == e {
            break;
        }
        e = next;
    }
    e
}

/// Largest accepted move away from the solver eigenvalue.
const POLISH_RADIUS: f64 = 1e-9;

/// Spectrum of one periodic operator `H_θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpectrum {
    pub phase: Phase,
    pub weight: f64,
    /// Roots of `D(E) = 2`, ascending.
    pub periodic: Vec<f64>,
    /// Roots of `D(E) = -2`, ascending.
    pub antiperiodic: Vec<f64>,
    /// The `q` bands `{|D| <= 2}`, ascending.
    pub bands: Vec<(f64, f64)>,
}

/// Eigenvalues of the `q`-periodic (`sign = 1`) or antiperiodic (`sign = -1`)
/// problem, polished on the discriminant.
fn floquet_eigenvalues(v: &[f64], sign: f64) -> Vec<f64> {
    let q = v.len();
    if q == 1 {
        return vec![v[0] + 2.0 * sign];
    }
    let mut h = DMatrix::<f64>::zeros(q, q);
    for k in 0..q {
        h[(k, k)] = v[k];
        if k + 1 < q {
            h[(k, k + 1)] = 1.0;
            h[(k + 1, k)] = 1.0;
        }
    }
    h[(0, q - 1)] += sign;
    h[(q - 1, 0)] += sign;
    let mut ev: Vec<f64> = h
        .symmetric_eigenvalues()
        .iter()
        .map(|&e| polish(v, e, 2.0 * sign))
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Bands of `H_θ`: consecutive pairs of the sorted Floquet eigenvalues.
pub fn phase_bands(lambda: f64, r: Rational, phase: Phase) -> PhaseSpectrum {
    let v = potential(lambda, r, phase);
    let periodic = floquet_eigenvalues(&v, 1.0);
    let antiperiodic = floquet_eigenvalues(&v, -1.0);
    let bound = 2.0 + 2.0 * lambda;
    let mut all: Vec<f64> = periodic.iter().chain(&antiperiodic).copied().collect();
    all.sort_by(f64::total_cmp);
    let bands = all
        .chunks(2)
        .map(|c| (c[0].max(-bound), c[1].min(bound)))
        .collect();
    PhaseSpectrum {
        phase,
        weight: 1.0,
        periodic,
        antiperiodic,
        bands,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumApprox {
    pub lambda: f64,
    pub frequency: Rational,
    pub theta_policy: ThetaPolicy,
    pub phases: Vec<PhaseSpectrum>,
    /// Band `j` swept over all phases.
    pub hulls: Vec<(f64, f64)>,
    /// Merged union of the hulls.
    pub bands: Vec<(f64, f64)>,
}

impl SpectrumApprox {
    pub fn q(&self) -> u64 {
        self.frequency.q
    }

    /// Length of the merged bands, gaps below the merge tolerance included.
    pub fn total_length(&self) -> f64 {
        self.bands.iter().map(|b| b.1 - b.0).sum()
    }

    /// Lebesgue measure of the union of the hulls, without merging.
    pub fn measure(&self) -> f64 {
        let mut h = self.hulls.clone();
        h.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut total = 0.0;
        let mut cur = h[0];
        for &x in &h[1..] {
            if x.0 <= cur.1 {
                cur.1 = cur.1.max(x.1);
            } else {
                total += cur.1 - cur.0;
                cur = x;
            }
        }
        total + cur.1 - cur.0
    }

    pub fn contains(&self, e: f64) -> bool {
        self.bands.iter().any(|&(lo, hi)| lo <= e && e <= hi)
    }
}

/// Bands of the `q`-periodic approximant, united over the phase policy.
///
/// Each band edge moves monotonically with `cos(2πqθ)`, so the hull of band
/// `j` over the policy phases is its union over all `θ`.
pub fn approximant_spectrum(
    lambda: f64,
    frequency: Rational,
    theta_policy: ThetaPolicy,
) -> Result<SpectrumApprox> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(
            "lambda must be a finite non-negative number",
        ));
    }
    let phases: Vec<PhaseSpectrum> = theta_policy
        .phases()
        .into_iter()
        .map(|(phase, w)| PhaseSpectrum {
            weight: w,
            ..phase_bands(lambda, frequency, phase)
        })
        .collect();
    let hulls: Vec<(f64, f64)> = (0..frequency.q as usize)
        .map(|j| {
            phases
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, p| {
                    (acc.0.min(p.bands[j].0), acc.1.max(p.bands[j].1))
                })
        })
        .collect();
    let bands = merge(&hulls);
    Ok(SpectrumApprox {
        lambda,
        frequency,
        theta_policy,
        phases,
        hulls,
        bands,
    })
}

pub(crate) fn merge(intervals: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = intervals.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in sorted {
        match out.last_mut() {
            Some(last) if lo <= last.1 + MERGE_TOL => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// CSV with header `q,band_index,E_lo,E_hi`.
pub fn bands_csv(spec: &SpectrumApprox) -> String {
    let mut s = String::from("q,band_index,E_lo,E_hi\n");
    for (i, (lo, hi)) in spec.bands.iter().enumerate() {
        let _ = writeln!(s, "{},{i},{lo},{hi}", spec.q());
    }
    s
}

/// Two-phase band unions for every reduced `p/q` with `q <= q_max`.
pub fn butterfly(lambda: f64, q_max: u64) -> Result<Vec<SpectrumApprox>> {
    let mut out = Vec::new();
    for q in 1..=q_max {
        for p in 0..q {
            if let Ok(r) = Rational::new(p, q) {
                out.push(approximant_spectrum(lambda, r, ThetaPolicy::TwoPhase)?);
            }
        }
    }
    Ok(out)
}

/// CSV with header `p,q,E_lo,E_hi`.
pub fn butterfly_csv(rows: &[SpectrumApprox]) -> String {
    let mut s = String::from("p,q,E_lo,E_hi\n");
    for spec in rows {
        for (lo, hi) in &spec.bands {
            let _ = writeln!(s, "{},{},{lo},{hi}", spec.frequency.p, spec.frequency.q);
        }
    }
    s
}
