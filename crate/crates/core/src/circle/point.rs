use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::alpha::{AlphaSpec, FixedAlpha};
use crate::error::Result;

const LN2: f64 = std::f64::consts::LN_2;

/// Natural log of `num · 2^{-bits}`; `-inf` for zero.
pub fn ln_ratio(num: &BigUint, bits: u32) -> f64 {
    if num.is_zero() {
        return f64::NEG_INFINITY;
    }
    let b = num.bits();
    let shift = b.saturating_sub(64);
    let top = (num >> shift).to_u64().expect("at most 64 bits") as f64;
    top.ln() + (shift as f64 - bits as f64) * LN2
}

/// `num · 2^{-bits}` rounded from the leading 64 bits.
pub fn ratio_to_f64(num: &BigUint, bits: u32) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let shift = num.bits().saturating_sub(64);
    let mut x = (num >> shift).to_u64().expect("at most 64 bits") as f64;
    let mut e = shift as i64 - bits as i64;
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
        if x == 0.0 {
            return 0.0;
        }
    }
    x * 2f64.powi(e as i32)
}

/// `floor(e^{ln_r} · 2^bits)`; zero when below one ulp.
pub fn exp_to_fixed(ln_r: f64, bits: u32) -> BigUint {
    if ln_r == f64::NEG_INFINITY {
        return BigUint::zero();
    }
    let e2 = ln_r / LN2 + bits as f64;
    if e2 < 0.0 {
        return BigUint::zero();
    }
    // e^{ln_r} 2^bits = 2^{whole} · 2^{frac}, mantissa taken to 52 bits
    let whole = e2.floor();
    let frac = e2 - whole;
    let mant = (frac.exp2() * (1u64 << 52) as f64) as u64;
    let whole = whole as i64 - 52;
    let m = BigUint::from(mant);
    if whole >= 0 {
        m << (whole as u64)
    } else {
        m >> ((-whole) as u64)
    }
}

/// Exact fixed-point image of a double in `[0, 1]`.
pub fn f64_to_fixed(x: f64, bits: u32) -> BigUint {
    assert!((0.0..=1.0).contains(&x), "value {x} outside [0, 1]");
    if x == 0.0 {
        return BigUint::zero();
    }
    let (mant, exp) = decompose(x);
    let shift = exp + bits as i64;
    let m = BigUint::from(mant);
    if shift >= 0 {
        m << (shift as u64)
    } else {
        m >> ((-shift) as u64)
    }
}

fn decompose(x: f64) -> (u64, i64) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    }
}

/// A point of `ℝ/ℤ` held as `value · 2^{-bits}` with a certified error radius.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CirclePoint {
    pub bits: u32,
    pub value: BigUint,
    pub err_ulps: BigUint,
    /// Set when the point is known to equal `kα` exactly.
    pub orbit_index: Option<BigInt>,
}

impl CirclePoint {
    pub fn zero(bits: u32) -> Self {
        CirclePoint {
            bits,
            value: BigUint::zero(),
            err_ulps: BigUint::zero(),
            orbit_index: None,
        }
    }

    pub fn from_f64(x: f64, bits: u32) -> Self {
        let x = x.rem_euclid(1.0);
        let modulus = BigUint::one() << bits;
        CirclePoint {
            bits,
            value: f64_to_fixed(x, bits) % modulus,
            err_ulps: BigUint::zero(),
            orbit_index: None,
        }
    }

    pub fn value_f64(&self) -> f64 {
        ratio_to_f64(&self.value, self.bits)
    }

    pub fn error_bound(&self) -> f64 {
        ratio_to_f64(&self.err_ulps, self.bits)
    }

    pub fn ln_error_bound(&self) -> f64 {
        ln_ratio(&self.err_ulps, self.bits)
    }

    pub fn modulus(&self) -> BigUint {
        BigUint::one() << self.bits
    }

    /// Same point expressed with `bits` fractional bits (rounding widens the error).
    pub fn at_bits(&self, bits: u32) -> CirclePoint {
        if bits >= self.bits {
            let s = bits - self.bits;
            CirclePoint {
                bits,
                value: &self.value << s,
                err_ulps: &self.err_ulps << s,
                orbit_index: self.orbit_index.clone(),
            }
        } else {
            let s = self.bits - bits;
            CirclePoint {
                bits,
                value: &self.value >> s,
                err_ulps: (&self.err_ulps >> s) + 1u32,
                orbit_index: self.orbit_index.clone(),
            }
        }
    }

    /// `self ± e^{ln_r}`; offsets below one ulp are absorbed into the error.
    pub fn shifted(&self, ln_r: f64, positive: bool) -> CirclePoint {
        let off = exp_to_fixed(ln_r, self.bits);
        let m = self.modulus();
        let mut out = self.clone();
        out.orbit_index = None;
        if off.is_zero() {
            out.err_ulps += 1u32;
            return out;
        }
        out.value = if positive {
            (&self.value + &off) % &m
        } else {
            (&self.value + &m - (&off % &m)) % &m
        };
        // the offset is a 52-bit mantissa truncation of e^{ln_r}
        out.err_ulps += (&off >> 50u32) + 1u32;
        out
    }
}

/// `‖x - y‖_{ℝ/ℤ}` with its error radius, in ulps of `bits`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CircleDistance {
    pub bits: u32,
    pub value: BigUint,
    pub err_ulps: BigUint,
}

impl CircleDistance {
    pub fn to_f64(&self) -> f64 {
        ratio_to_f64(&self.value, self.bits)
    }

    pub fn error_bound(&self) -> f64 {
        ratio_to_f64(&self.err_ulps, self.bits)
    }

    pub fn ln(&self) -> f64 {
        ln_ratio(&self.value, self.bits)
    }

    /// ln of the smallest distance compatible with the enclosure.
    pub fn ln_lower(&self) -> f64 {
        if self.value <= self.err_ulps {
            f64::NEG_INFINITY
        } else {
            ln_ratio(&(&self.value - &self.err_ulps), self.bits)
        }
    }

    pub fn ln_upper(&self) -> f64 {
        ln_ratio(&(&self.value + &self.err_ulps), self.bits)
    }

    /// True when the enclosure excludes zero.
    pub fn certainly_positive(&self) -> bool {
        self.value > self.err_ulps
    }
}

/// `min_j |x - y + j|`.
pub fn circle_dist(x: &CirclePoint, y: &CirclePoint) -> CircleDistance {
    let bits = x.bits.max(y.bits);
    let (x, y) = (x.at_bits(bits), y.at_bits(bits));
    let m = BigUint::one() << bits;
    let diff = if x.value >= y.value {
        &x.value - &y.value
    } else {
        &x.value + &m - &y.value
    };
    let other = &m - &diff;
    let value = if diff <= other { diff } else { other };
    CircleDistance {
        bits,
        value,
        err_ulps: &x.err_ulps + &y.err_ulps,
    }
}

/// Orbit points `kα mod 1` at a fixed working precision.
#[derive(Clone, Debug)]
pub struct Rotation {
    pub fixed: FixedAlpha,
    modulus: BigUint,
}

impl Rotation {
    pub fn new(alpha: &AlphaSpec, bits: u32) -> Result<Self> {
        let fixed = alpha.fixed(bits)?;
        let modulus = fixed.modulus();
        Ok(Rotation { fixed, modulus })
    }

    pub fn bits(&self) -> u32 {
        self.fixed.bits
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    /// Fixed-point residue of `n·α` (no error attached).
    pub fn residue(&self, n: &BigUint) -> BigUint {
        (n * &self.fixed.num) % &self.modulus
    }

    pub fn point(&self, k: &BigInt) -> CirclePoint {
        let mag = k.magnitude();
        let r = self.residue(mag);
        let value = if k.sign() == Sign::Minus && !r.is_zero() {
            &self.modulus - r
        } else {
            r
        };
        CirclePoint {
            bits: self.bits(),
            value,
            err_ulps: mag * &self.fixed.err_ulps,
            orbit_index: Some(k.clone()),
        }
    }

    pub fn point_u(&self, n: &BigUint) -> CirclePoint {
        self.point(&BigInt::from(n.clone()))
    }
}

/// `kα mod 1`, with the working precision raised until the error contract
/// `error_bound <= 2^{-bits/2}` holds.
pub fn orbit_point(alpha: &AlphaSpec, k: &BigInt, precision_bits: u32) -> Result<CirclePoint> {
    if k.is_zero() {
        let mut p = CirclePoint::zero(precision_bits);
        p.orbit_index = Some(BigInt::zero());
        return Ok(p);
    }
    let kb = k.magnitude().bits() as u32;
    let bits = precision_bits.max(kb + 16) + kb + 8;
    Ok(Rotation::new(alpha, bits)?.point(k))
}
