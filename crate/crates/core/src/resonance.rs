//! Windowed resonance strength `max (-ln ‖x - kα‖)/|k|` and hit lists.
//!
//! The resonance strength of a point is a limsup; everything here is a
//! finite-window maximum and makes no claim about convergence.

use std::fmt::Write as _;

use num_bigint::{BigInt, BigUint};
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::circle::{circle_dist, AlphaSpec, CirclePoint, Rotation, DEFAULT_SCAN_CAP};
use crate::error::{Error, Result};

/// Witnesses kept per estimate.
const MAX_WITNESSES: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceEstimate {
    pub window: (u64, u64),
    /// `+inf` when `x` is certified to be an orbit point inside the window.
    #[serde(with = "crate::serde_f64")]
    pub value: f64,
    pub witness_ks: Vec<i64>,
    pub exact_orbit_hit: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitRecord {
    pub k: i64,
    pub dist: f64,
    pub threshold: f64,
    /// `-ln(dist)/|k|`.
    #[serde(with = "crate::serde_f64")]
    pub log_ratio: f64,
}

/// Threshold `ψ(|k|)` for a hit list.
#[derive(Clone, Debug, PartialEq)]
pub enum Threshold {
    /// `e^{-|k| η}`.
    Exponential { eta: f64 },
    /// `table[|k| - 1]`; `|k|` past the end never hits.
    Table(Vec<f64>),
}

impl Threshold {
    fn ln_at(&self, k: u64) -> f64 {
        match self {
            Threshold::Exponential { eta } => -(k as f64) * eta,
            Threshold::Table(t) => t
                .get((k - 1) as usize)
                .map_or(f64::NEG_INFINITY, |v| v.ln()),
        }
    }
}

fn exact_index(x: &CirclePoint) -> Option<i64> {
    x.orbit_index.as_ref().and_then(|k| k.to_i64())
}

/// One step of the scan: `‖x - kα‖` for `k` and `-k`.
struct OrbitScan {
    rot: Rotation,
    x: CirclePoint,
    pos: CirclePoint,
    k: u64,
}

impl OrbitScan {
    fn new(alpha: &AlphaSpec, x: &CirclePoint, k_start: u64, k_end: u64) -> Result<Self> {
        let end_bits = 64 - k_end.leading_zeros();
        let bits = x.bits.max(alpha.precision_bits) + end_bits + 16;
        let rot = Rotation::new(alpha, bits)?;
        let x = x.at_bits(bits);
        let start = k_start.saturating_sub(1);
        let pos = rot.point(&BigInt::from(start));
        Ok(OrbitScan {
            rot,
            x,
            pos,
            k: start,
        })
    }

    /// Advances to the next `k` and returns the two signed distances.
    fn step(&mut self) -> (u64, [crate::circle::CircleDistance; 2]) {
        self.k += 1;
        let m = self.rot.modulus();
        self.pos.value += &self.rot.fixed.num;
        if &self.pos.value >= m {
            self.pos.value -= m;
        }
        self.pos.err_ulps += &self.rot.fixed.err_ulps;
        let neg = CirclePoint {
            bits: self.pos.bits,
            value: if self.pos.value.is_zero() {
                BigUint::zero()
            } else {
                m - &self.pos.value
            },
            err_ulps: self.pos.err_ulps.clone(),
            orbit_index: None,
        };
        (
            self.k,
            [circle_dist(&self.x, &self.pos), circle_dist(&self.x, &neg)],
        )
    }
}

fn check_window(k_min: u64, k_max: u64) -> Result<()> {
    if k_min == 0 || k_min > k_max {
        return Err(Error::invalid("window needs 1 <= K_min <= K_max"));
    }
    if k_max > DEFAULT_SCAN_CAP {
        return Err(Error::ResourceCap {
            requested: k_max as u128,
            cap: DEFAULT_SCAN_CAP as u128,
        });
    }
    Ok(())
}

/// `max_{K_min <= |k| <= K_max} (-ln ‖x - kα‖)/|k|`.
pub fn resonance_strength(
    alpha: &AlphaSpec,
    x: &CirclePoint,
    k_min: u64,
    k_max: u64,
) -> Result<ResonanceEstimate> {
    check_window(k_min, k_max)?;
    if let Some(k) = exact_index(x) {
        if k != 0 && (k_min..=k_max).contains(&k.unsigned_abs()) {
            return Ok(ResonanceEstimate {
                window: (k_min, k_max),
                value: f64::INFINITY,
                witness_ks: vec![k],
                exact_orbit_hit: Some(k),
            });
        }
    }
    let mut scan = OrbitScan::new(alpha, x, k_min, k_max)?;
    let mut ratios: Vec<(f64, i64)> = Vec::new();
    while scan.k < k_max {
        let (k, dists) = scan.step();
        for (d, sign) in dists.iter().zip([1i64, -1]) {
            if !d.certainly_positive() {
                return Err(Error::InconclusivePrecision { k: sign * k as i64 });
            }
            ratios.push((-d.ln() / k as f64, sign * k as i64));
        }
    }
    let value = ratios.iter().map(|r| r.0).fold(0.0, f64::max);
    // near-suprema: within 1% of the maximum, best first
    ratios.retain(|r| r.0 >= 0.99 * value);
    ratios.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.abs().cmp(&b.1.abs())));
    ratios.truncate(MAX_WITNESSES);
    Ok(ResonanceEstimate {
        window: (k_min, k_max),
        value,
        witness_ks: ratios.into_iter().map(|r| r.1).collect(),
        exact_orbit_hit: None,
    })
}

/// All `1 <= |k| <= K` with `‖x - kα‖ < threshold(|k|)`, by increasing `|k|`
/// (positive `k` first on ties). Only certified hits are reported.
pub fn psi_hits(
    alpha: &AlphaSpec,
    x: &CirclePoint,
    threshold: &Threshold,
    k_max: u64,
) -> Result<Vec<HitRecord>> {
    check_window(1, k_max)?;
    let exact = exact_index(x);
    let mut scan = OrbitScan::new(alpha, x, 1, k_max)?;
    let mut out = Vec::new();
    while scan.k < k_max {
        let (k, dists) = scan.step();
        let ln_thr = threshold.ln_at(k);
        for (d, sign) in dists.iter().zip([1i64, -1]) {
            let sk = sign * k as i64;
            if exact == Some(sk) {
                out.push(HitRecord {
                    k: sk,
                    dist: 0.0,
                    threshold: ln_thr.exp(),
                    log_ratio: f64::INFINITY,
                });
            } else if d.ln_upper() < ln_thr {
                out.push(HitRecord {
                    k: sk,
                    dist: d.to_f64(),
                    threshold: ln_thr.exp(),
                    log_ratio: -d.ln() / k as f64,
                });
            }
        }
    }
    Ok(out)
}

/// Comma-separated hit table with header `k,dist,threshold,log_ratio`.
pub fn hits_csv(hits: &[HitRecord]) -> String {
    let mut s = String::from("k,dist,threshold,log_ratio\n");
    for h in hits {
        let _ = writeln!(s, "{},{:e},{:e},{}", h.k, h.dist, h.threshold, h.log_ratio);
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaVerdict {
    pub consistent: bool,
    /// Some `k` in the window reaches `δ - tol`.
    pub lower_evidence: bool,
    /// No `k` in the window reaches `δ + tol`.
    pub upper_evidence: bool,
    pub estimate: ResonanceEstimate,
}

/// Finite-window consistency of `x` with resonance strength `delta_target`.
///
/// `delta_target = +inf` is consistent only with a certified orbit hit.
pub fn classify_d_delta(
    alpha: &AlphaSpec,
    x: &CirclePoint,
    delta_target: f64,
    window: (u64, u64),
    tol: f64,
) -> Result<DeltaVerdict> {
    if !(delta_target > 0.0) {
        return Err(Error::invalid("delta_target must lie in (0, +inf]"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    let estimate = resonance_strength(alpha, x, window.0, window.1)?;
    let (lower, upper) = if delta_target.is_infinite() {
        (estimate.exact_orbit_hit.is_some(), true)
    } else {
        (
            estimate.value >= delta_target - tol,
            estimate.value < delta_target + tol,
        )
    };
    Ok(DeltaVerdict {
        consistent: lower && upper,
        lower_evidence: lower,
        upper_evidence: upper,
        estimate,
    })
}

/// Default tolerance: 10% of the target.
pub fn default_tolerance(delta_target: f64) -> f64 {
    0.1 * delta_target
}
