use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::alpha::{AlphaSpec, Denominators};
use super::point::{f64_to_fixed, ratio_to_f64, Rotation};
use crate::error::{Error, Result};

/// Default bound on exhaustive scans over `k`.
pub const DEFAULT_SCAN_CAP: u64 = 2_000_000;

fn scan_bits(alpha: &AlphaSpec) -> u32 {
    alpha.precision_bits.max(128) + 64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub n: usize,
    pub q_n: u64,
    pub q_prev: u64,
    /// `min_{1 <= k < q_n} ‖kα‖`, or `None` for an empty range.
    pub min_dist: Option<f64>,
    pub argmin: Option<u64>,
    pub threshold: f64,
    pub min_at_q_prev: bool,
    pub above_threshold: bool,
    pub pass: bool,
}

/// Exhaustive check of `‖kα‖ >= ‖q_{n-1}α‖ > 1/(2 q_n)` for `1 <= k < q_n`.
///
/// The same scan certifies pairwise separation of `kα, k'α` for distinct
/// `k, k' <= q_n`, since `|k - k'| < q_n`.
pub fn check_separation(alpha: &AlphaSpec, n: usize, cap: u64) -> Result<SeparationReport> {
    if n == 0 {
        return Err(Error::invalid("level index n must be at least 1"));
    }
    let mut den = Denominators::new(alpha)?;
    let q_n = den.get(n)?.clone();
    let q_prev = den.get(n - 1)?.to_u64().unwrap_or(u64::MAX);
    let q_n = match q_n.to_u64() {
        Some(q) if q <= cap => q,
        _ => {
            return Err(Error::ResourceCap {
                requested: q_n.to_u128().unwrap_or(u128::MAX),
                cap: cap as u128,
            })
        }
    };
    let threshold = 1.0 / (2.0 * q_n as f64);
    if q_n <= 1 {
        return Ok(SeparationReport {
            n,
            q_n,
            q_prev,
            min_dist: None,
            argmin: None,
            threshold,
            min_at_q_prev: true,
            above_threshold: true,
            pass: true,
        });
    }
    let rot = Rotation::new(alpha, scan_bits(alpha))?;
    let m = rot.modulus().clone();
    let half = &m >> 1u32;
    let step = rot.fixed.num.clone();
    let mut x = BigUint::zero();
    let mut best: Option<(BigUint, u64)> = None;
    let mut tie = false;
    for k in 1..q_n {
        x += &step;
        if x >= m {
            x -= &m;
        }
        let d = if x > half { &m - &x } else { x.clone() };
        match &best {
            Some((b, _)) if d > *b => {}
            Some((b, _)) if d == *b => tie = true,
            _ => {
                best = Some((d, k));
                tie = false;
            }
        }
    }
    let (best_val, argmin) = best.expect("range non-empty");
    let min_dist = ratio_to_f64(&best_val, rot.bits());
    // err per point is at most q_n * 2 ulps, far below any gap found here
    let thr_fixed = (&m) / (BigUint::from(q_n) * 2u32);
    let err = BigUint::from(q_n) * &rot.fixed.err_ulps;
    let above = best_val > &thr_fixed + &err;
    let at_prev = argmin == q_prev && !tie;
    Ok(SeparationReport {
        n,
        q_n,
        q_prev,
        min_dist: Some(min_dist),
        argmin: Some(argmin),
        threshold,
        min_at_q_prev: at_prev,
        above_threshold: above,
        pass: at_prev && above,
    })
}

/// Conservative discrepancy estimate `D̂_n = (3/n) Σ_{k: q_k <= n} a_{k+1}`.
pub fn discrepancy_estimate(alpha: &AlphaSpec, n: u64) -> Result<f64> {
    discrepancy_estimate_big(alpha, &BigUint::from(n))
}

/// [`discrepancy_estimate`] for arbitrary-size `n`, capped at 1.
pub fn discrepancy_estimate_big(alpha: &AlphaSpec, n: &BigUint) -> Result<f64> {
    discrepancy_with(&mut Denominators::new(alpha)?, n)
}

/// [`discrepancy_estimate_big`] reusing a denominator table.
pub fn discrepancy_with(den: &mut Denominators, n: &BigUint) -> Result<f64> {
    if n.is_zero() {
        return Ok(f64::INFINITY);
    }
    let mut k = 0;
    let mut sum = 0.0;
    while den.get(k)? <= n {
        sum += den.quotient(k + 1)? as f64;
        k += 1;
    }
    let ln = (3.0 * sum).ln() - super::point::ln_ratio(n, 0);
    Ok(ln.exp().min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub n_range: (u64, u64),
    pub interval: (f64, f64),
    pub count: u64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub applicable: bool,
    pub discrepancy_estimate: f64,
    /// Only meaningful when `applicable`.
    pub within_bounds: bool,
}

/// `#{m <= k < n : kα mod 1 ∈ (a, b)}` with the two-sided count bound.
pub fn count_in_interval(
    alpha: &AlphaSpec,
    m: u64,
    n: u64,
    interval: (f64, f64),
) -> Result<DiscrepancyReport> {
    let (a, b) = interval;
    if m >= n {
        return Err(Error::invalid("need m < n"));
    }
    if !(0.0 <= a && a < b && b <= 1.0) {
        return Err(Error::invalid("need 0 <= a < b <= 1"));
    }
    let len = n - m;
    let count = if a == 0.0 && b == 1.0 {
        // the orbit never hits 0 for k != 0, and k = 0 is excluded only when m > 0
        if m == 0 {
            len - 1
        } else {
            len
        }
    } else {
        exact_count(alpha, m, n, a, b)?
    };
    let dhat = discrepancy_estimate(alpha, len)?;
    let width = b - a;
    let applicable = width > 2.0 * dhat;
    let lower_bound = width * len as f64 / 2.0;
    let upper_bound = 2.0 * width * len as f64;
    let within = (count as f64) >= lower_bound && (count as f64) <= upper_bound;
    Ok(DiscrepancyReport {
        n_range: (m, n),
        interval,
        count,
        lower_bound,
        upper_bound,
        applicable,
        discrepancy_estimate: dhat,
        within_bounds: within,
    })
}

fn exact_count(alpha: &AlphaSpec, m: u64, n: u64, a: f64, b: f64) -> Result<u64> {
    let mut bits = scan_bits(alpha);
    for _ in 0..4 {
        let rot = Rotation::new(alpha, bits)?;
        let modulus = rot.modulus().clone();
        let lo = f64_to_fixed(a, bits);
        let hi = f64_to_fixed(b, bits);
        let step = rot.fixed.num.clone();
        let mut x = rot.residue(&BigUint::from(m));
        let err = BigUint::from(n) * &rot.fixed.err_ulps;
        let mut count = 0u64;
        let mut ambiguous = false;
        for k in m..n {
            if k > m {
                x += &step;
                if x >= modulus {
                    x -= &modulus;
                }
            }
            if k == 0 {
                // 0·α = 0 exactly; (a, b) is open
                if a < 0.0 {
                    count += 1;
                }
                continue;
            }
            let inside_lo = x > &lo + &err;
            let inside_hi = &x + &err < hi;
            let out_lo = &x + &err <= lo;
            let out_hi = x >= &hi + &err;
            if inside_lo && inside_hi {
                count += 1;
            } else if !(out_lo || out_hi) {
                ambiguous = true;
                break;
            }
        }
        if !ambiguous {
            return Ok(count);
        }
        bits *= 2;
    }
    Err(Error::PrecisionExhausted(
        "orbit point too close to an interval endpoint".into(),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcVerdict {
    pub pass: bool,
    pub worst_k: u64,
    /// `min_k ‖kα‖ |k|^τ` over the scan.
    pub worst_value: f64,
    pub scanned: u64,
}

/// Finite scan of `‖kα‖ >= γ / |k|^τ` for `1 <= |k| <= K`.
///
/// A pass is evidence only: the condition quantifies over all `k`.
pub fn dc_check(alpha: &AlphaSpec, gamma: f64, tau: f64, k_max: u64) -> Result<DcVerdict> {
    if gamma <= 0.0 {
        return Err(Error::invalid("gamma must be positive"));
    }
    if k_max == 0 {
        return Err(Error::invalid("scan bound K must be at least 1"));
    }
    let rot = Rotation::new(alpha, scan_bits(alpha))?;
    let m = rot.modulus().clone();
    let half = &m >> 1u32;
    let step = rot.fixed.num.clone();
    let mut x = BigUint::zero();
    let mut worst = (f64::INFINITY, 0u64);
    for k in 1..=k_max {
        x += &step;
        if x >= m {
            x -= &m;
        }
        let d = if x > half { &m - &x } else { x.clone() };
        let v = ratio_to_f64(&d, rot.bits()) * (k as f64).powf(tau);
        if v < worst.0 {
            worst = (v, k);
        }
    }
    // ‖-kα‖ = ‖kα‖, so negative k add nothing
    Ok(DcVerdict {
        pass: worst.0 >= gamma,
        worst_k: worst.1,
        worst_value: worst.0,
        scanned: k_max,
    })
}

/// Smallest `x >= 0` with `l <= (a·x) mod m <= r`, for `l <= r < m`.
///
/// Euclid-style descent: if no multiple of `a` lies in `[l, r]`, the problem
/// reduces to the same question for `(m mod a, a)`.
pub fn min_hit(a: &BigUint, m: &BigUint, l: &BigUint, r: &BigUint) -> Option<BigUint> {
    debug_assert!(l <= r && r < m);
    let mut stack: Vec<(BigUint, BigUint, BigUint)> = Vec::new();
    let mut a = a % m;
    let mut m = m.clone();
    let mut l = l.clone();
    let mut r = r.clone();
    let base = loop {
        if l.is_zero() {
            break Some(BigUint::zero());
        }
        if a.is_zero() {
            break None;
        }
        let k = ceil_div(&l, &a);
        if &a * &k <= r {
            break Some(k);
        }
        let na = &m % &a;
        let nl = &a - (&r % &a);
        let nr = &a - (&l % &a);
        let nm = a.clone();
        stack.push((a, m, l));
        a = na;
        m = nm;
        l = nl;
        r = nr;
    };
    let mut y = base?;
    while let Some((a, m, l)) = stack.pop() {
        y = ceil_div(&(l + m * y), &a);
    }
    Some(y)
}

fn ceil_div(x: &BigUint, d: &BigUint) -> BigUint {
    (x + d - 1u32) / d
}

/// Smallest `x >= 0` with `(a·x + b) mod m` in the wrapped arc
/// `[lo, lo + len] mod m`.
pub fn first_hit_arc(
    a: &BigUint,
    b: &BigUint,
    m: &BigUint,
    lo: &BigUint,
    len: &BigUint,
) -> Option<BigUint> {
    if len >= m {
        return Some(BigUint::zero());
    }
    let b = b % m;
    let start = (lo % m + m - &b) % m;
    let end = &start + len;
    if &end < m {
        min_hit(a, m, &start, &end)
    } else {
        let first = min_hit(a, m, &start, &(m - 1u32));
        let second = min_hit(a, m, &BigUint::zero(), &(end - m));
        match (first, second) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        }
    }
}

/// All `n ∈ [n0, n1)` with `n·α` residue in the arc, in increasing order.
pub fn hits_in_arc(
    rot: &Rotation,
    n0: &BigUint,
    n1: &BigUint,
    lo: &BigUint,
    len: &BigUint,
    limit: usize,
) -> Result<Vec<BigUint>> {
    let a = &rot.fixed.num;
    let m = rot.modulus();
    let mut out = Vec::new();
    let mut cur = n0.clone();
    while &cur < n1 {
        let b = rot.residue(&cur);
        let Some(x) = first_hit_arc(a, &b, m, lo, len) else {
            break;
        };
        let n = &cur + x;
        if &n >= n1 {
            break;
        }
        out.push(n.clone());
        if out.len() > limit {
            return Err(Error::ResourceCap {
                requested: out.len() as u128,
                cap: limit as u128,
            });
        }
        cur = n + BigUint::one();
    }
    Ok(out)
}
