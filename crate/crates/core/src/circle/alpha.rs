use num_bigint::{BigInt, BigUint, Sign};
use num_integer::{Integer, Roots};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PRECISION_BITS: u32 = 256;

/// How a finite list of partial quotients continues.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum TailPolicy {
    /// Repeat the last `period` quotients forever.
    Periodic { period: usize },
    /// Keep adding `step` to the last quotient: `[0; 1, 2, 3, ...]`.
    Linear { step: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AlphaKind {
    /// `α = (p + √d) / q`.
    Quadratic { p: i64, q: i64, d: u64 },
    /// `α = [0; a_1, a_2, ...]` with the prefix extended by `tail`.
    CfPrefix {
        quotients: Vec<u64>,
        tail: TailPolicy,
    },
    /// A decimal literal taken as exact to half a unit in its last digit.
    Decimal { digits: String },
}

/// An irrational frequency in `(0, 1)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphaSpec {
    #[serde(flatten)]
    pub kind: AlphaKind,
    pub precision_bits: u32,
}

/// Fixed-point enclosure `α ∈ [num - err, num + err] · 2^{-bits}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedAlpha {
    pub bits: u32,
    pub num: BigUint,
    pub err_ulps: BigUint,
}

impl AlphaSpec {
    pub fn new(kind: AlphaKind) -> Self {
        AlphaSpec {
            kind,
            precision_bits: DEFAULT_PRECISION_BITS,
        }
    }

    /// `(√5 - 1) / 2`.
    pub fn golden() -> Self {
        Self::new(AlphaKind::Quadratic { p: -1, q: 2, d: 5 })
    }

    /// `√2 - 1`.
    pub fn silver() -> Self {
        Self::new(AlphaKind::Quadratic { p: -1, q: 1, d: 2 })
    }

    /// `[0; 1, 2, 3, 4, ...]`.
    pub fn linear_cf() -> Self {
        Self::new(AlphaKind::CfPrefix {
            quotients: vec![1],
            tail: TailPolicy::Linear { step: 1 },
        })
    }

    pub fn decimal(digits: &str) -> Self {
        Self::new(AlphaKind::Decimal {
            digits: digits.to_string(),
        })
    }

    pub fn with_precision(mut self, bits: u32) -> Self {
        self.precision_bits = bits;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.precision_bits < 64 {
            return Err(Error::invalid(format!(
                "precision_bits must be at least 64, got {}",
                self.precision_bits
            )));
        }
        match &self.kind {
            AlphaKind::Quadratic { p, q, d } => {
                if *q < 1 {
                    return Err(Error::invalid("quadratic alpha needs q >= 1"));
                }
                let s = d.sqrt();
                if s * s == *d {
                    return Err(Error::invalid(format!("d = {d} is a perfect square")));
                }
                let top = *p as i128 + s as i128;
                if top < 0 || top >= *q as i128 {
                    return Err(Error::invalid("quadratic alpha is not in (0, 1)"));
                }
            }
            AlphaKind::CfPrefix { quotients, tail } => {
                if quotients.is_empty() || quotients.contains(&0) {
                    return Err(Error::invalid(
                        "cf prefix needs at least one positive partial quotient",
                    ));
                }
                match tail {
                    TailPolicy::Periodic { period } => {
                        if *period == 0 || *period > quotients.len() {
                            return Err(Error::invalid("periodic tail period out of range"));
                        }
                    }
                    TailPolicy::Linear { .. } => {}
                }
            }
            AlphaKind::Decimal { digits } => {
                let (n, d) = parse_decimal(digits)?;
                if n.is_zero() || d == 0 {
                    return Err(Error::invalid("decimal alpha must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn quotient_stream(&self) -> Result<QuotientStream> {
        self.validate()?;
        Ok(match &self.kind {
            AlphaKind::Quadratic { p, q, d } => QuotientStream::quadratic(*p, *q, *d),
            AlphaKind::CfPrefix { quotients, tail } => QuotientStream::Prefix {
                quotients: quotients.clone(),
                tail: tail.clone(),
                index: 0,
            },
            AlphaKind::Decimal { digits } => {
                let (n, d) = parse_decimal(digits)?;
                let den: BigInt = BigInt::from(10u32).pow(d) * 2u32;
                let n: BigInt = BigInt::from(n) * 2u32;
                QuotientStream::Bracket {
                    lo: (&n - 1u32, den.clone()),
                    hi: (n + 1u32, den),
                    first: true,
                    certified: 0,
                }
            }
        })
    }

    pub fn partial_quotients(&self, depth: usize) -> Result<Vec<u64>> {
        let mut s = self.quotient_stream()?;
        (0..depth).map(|_| s.next_quotient()).collect()
    }

    pub fn cf_expand(&self, depth: usize) -> Result<ContinuedFraction> {
        if depth == 0 {
            return Err(Error::invalid("depth must be at least 1"));
        }
        Ok(ContinuedFraction::from_quotients(
            self.partial_quotients(depth)?,
        ))
    }

    /// Fixed-point enclosure of α with `bits` fractional bits.
    pub fn fixed(&self, bits: u32) -> Result<FixedAlpha> {
        self.validate()?;
        let one = BigInt::one() << bits;
        let (num, err) = match &self.kind {
            AlphaKind::Quadratic { p, q, d } => {
                let root = (BigInt::from(*d) << (2 * bits)).sqrt();
                let n = (BigInt::from(*p) << bits) + root;
                (n.div_floor(&BigInt::from(*q)), BigUint::from(2u32))
            }
            AlphaKind::CfPrefix { .. } => {
                let mut s = self.quotient_stream()?;
                let target = BigUint::one() << (bits / 2 + 2);
                let (mut p0, mut q0) = (BigUint::one(), BigUint::zero());
                let (mut p1, mut q1) = (BigUint::zero(), BigUint::one());
                while q1 <= target {
                    let a = BigUint::from(s.next_quotient()?);
                    let p2 = &a * &p1 + &p0;
                    let q2 = &a * &q1 + &q0;
                    p0 = std::mem::replace(&mut p1, p2);
                    q0 = std::mem::replace(&mut q1, q2);
                }
                let n = (p1 << bits) / q1;
                (BigInt::from(n), BigUint::from(2u32))
            }
            AlphaKind::Decimal { digits } => {
                let (n, d) = parse_decimal(digits)?;
                let den = BigUint::from(10u32).pow(d);
                let num = (BigUint::from(n) << bits) / &den;
                let half = (BigUint::one() << bits).div_ceil(&(den * 2u32)) + 1u32;
                let limit = BigUint::one() << (bits / 2);
                if half > limit {
                    return Err(Error::PrecisionExhausted(format!(
                        "decimal literal with {d} digits cannot certify {bits} bits"
                    )));
                }
                (BigInt::from(num), half)
            }
        };
        let num = num
            .mod_floor(&one)
            .to_biguint()
            .expect("non-negative after mod");
        Ok(FixedAlpha {
            bits,
            num,
            err_ulps: err,
        })
    }

    /// Double-precision value, for diagnostics and plots only.
    pub fn approx_f64(&self) -> f64 {
        match self.fixed(128) {
            Ok(f) => f.to_f64(),
            Err(_) => match &self.kind {
                AlphaKind::Decimal { digits } => digits.parse().unwrap_or(f64::NAN),
                _ => f64::NAN,
            },
        }
    }
}

impl FixedAlpha {
    pub fn to_f64(&self) -> f64 {
        super::point::ratio_to_f64(&self.num, self.bits)
    }

    pub fn modulus(&self) -> BigUint {
        BigUint::one() << self.bits
    }
}

fn parse_decimal(s: &str) -> Result<(BigUint, u32)> {
    let s = s.trim();
    let frac = s
        .strip_prefix("0.")
        .or_else(|| s.strip_prefix('.'))
        .ok_or_else(|| Error::invalid(format!("decimal alpha must look like 0.ddd, got {s:?}")))?;
    if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::invalid(format!("bad decimal literal {s:?}")));
    }
    let n = BigUint::parse_bytes(frac.as_bytes(), 10).expect("digits checked");
    Ok((n, frac.len() as u32))
}

/// Source of partial quotients `a_1, a_2, ...`.
pub(crate) enum QuotientStream {
    /// State `x = (p + √d) / q` with `q | d - p²`.
    Quadratic { p: i128, q: i128, d: i128, s: i128 },
    Prefix {
        quotients: Vec<u64>,
        tail: TailPolicy,
        index: usize,
    },
    /// Simultaneous Euclid on both ends of a rational enclosure.
    Bracket {
        lo: (BigInt, BigInt),
        hi: (BigInt, BigInt),
        first: bool,
        certified: usize,
    },
}

impl QuotientStream {
    fn quadratic(p: i64, q: i64, d: u64) -> Self {
        let (mut p, mut q, mut d) = (p as i128, q as i128, d as i128);
        if (d - p * p) % q != 0 {
            let aq = q.abs();
            p *= aq;
            d *= q * q;
            q *= aq;
        }
        // α < 1, so the first step is the reciprocal: 1/α = (-p + √d) / ((d - p²)/q).
        let q1 = (d - p * p) / q;
        let s = (d as u128).sqrt() as i128;
        QuotientStream::Quadratic { p: -p, q: q1, d, s }
    }

    pub(crate) fn next_quotient(&mut self) -> Result<u64> {
        match self {
            QuotientStream::Quadratic { p, q, d, s } => {
                let a = if *q > 0 {
                    (*p + *s).div_euclid(*q)
                } else {
                    -((*p + *s).div_euclid(-*q) + 1)
                };
                let p_next = a * *q - *p;
                let q_next = (*d - p_next * p_next) / *q;
                *p = p_next;
                *q = q_next;
                u64::try_from(a)
                    .map_err(|_| Error::Violation("non-positive partial quotient".into()))
            }
            QuotientStream::Prefix {
                quotients,
                tail,
                index,
            } => {
                let i = *index;
                *index += 1;
                if i < quotients.len() {
                    return Ok(quotients[i]);
                }
                let n = quotients.len();
                Ok(match tail {
                    TailPolicy::Periodic { period } => quotients[n - *period + (i - n) % *period],
                    TailPolicy::Linear { step } => quotients[n - 1] + *step * (i - n + 1) as u64,
                })
            }
            QuotientStream::Bracket {
                lo,
                hi,
                first,
                certified,
            } => {
                // Invert both ends (they swap order under x -> 1/x).
                if *first {
                    *first = false;
                }
                let (ln, ld) = lo.clone();
                let (hn, hd) = hi.clone();
                if ln.is_zero() || hn.is_zero() || ln.sign() == Sign::Minus {
                    return Err(Error::PrecisionExhausted(format!(
                        "decimal enclosure certifies only {certified} partial quotients"
                    )));
                }
                // reciprocal of [lo, hi] is [hd/hn, ld/ln]
                let a_lo = hd.div_floor(&hn);
                let a_hi = ld.div_floor(&ln);
                if a_lo != a_hi || a_lo.is_zero() {
                    return Err(Error::PrecisionExhausted(format!(
                        "decimal enclosure certifies only {certified} partial quotients"
                    )));
                }
                let a = a_lo;
                // new enclosure of the fractional part: [hd/hn - a, ld/ln - a]
                let new_lo = (&hd - &a * &hn, hn);
                let new_hi = (&ld - &a * &ln, ln);
                *lo = new_lo;
                *hi = new_hi;
                *certified += 1;
                a.to_u64()
                    .filter(|_| a.is_positive())
                    .ok_or_else(|| Error::PrecisionExhausted("partial quotient overflow".into()))
            }
        }
    }
}

/// Partial quotients `a_1..a_K` and convergents `p_k / q_k` of `α = [0; a_1, ...]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContinuedFraction {
    pub partial_quotients: Vec<u64>,
    pub convergents: Vec<(BigUint, BigUint)>,
}

impl ContinuedFraction {
    pub fn from_quotients(partial_quotients: Vec<u64>) -> Self {
        let mut convergents = Vec::with_capacity(partial_quotients.len());
        let (mut p0, mut q0) = (BigUint::one(), BigUint::zero());
        let (mut p1, mut q1) = (BigUint::zero(), BigUint::one());
        for &a in &partial_quotients {
            let a = BigUint::from(a);
            let p2 = &a * &p1 + &p0;
            let q2 = &a * &q1 + &q0;
            p0 = std::mem::replace(&mut p1, p2);
            q0 = std::mem::replace(&mut q1, q2);
            convergents.push((p1.clone(), q1.clone()));
        }
        ContinuedFraction {
            partial_quotients,
            convergents,
        }
    }

    pub fn depth(&self) -> usize {
        self.partial_quotients.len()
    }

    /// `q_k` for `k = 1..=depth`, with `q_0 = 1` at index 0.
    pub fn denominators(&self) -> Vec<BigUint> {
        std::iter::once(BigUint::one())
            .chain(self.convergents.iter().map(|(_, q)| q.clone()))
            .collect()
    }

    /// Checks recurrence, determinant and `q_{k+2} >= 2 q_k` exactly.
    pub fn verify_identities(&self) -> Result<()> {
        let qs = self.denominators();
        let ps: Vec<BigUint> = std::iter::once(BigUint::zero())
            .chain(self.convergents.iter().map(|(p, _)| p.clone()))
            .collect();
        let mut q_prev = BigUint::zero();
        let mut p_prev = BigUint::one();
        for k in 1..qs.len() {
            let a = BigUint::from(self.partial_quotients[k - 1]);
            if qs[k] != &a * &qs[k - 1] + &q_prev || ps[k] != &a * &ps[k - 1] + &p_prev {
                return Err(Error::Violation(format!(
                    "convergent recurrence fails at k={k}"
                )));
            }
            let lhs = BigInt::from(ps[k].clone()) * BigInt::from(qs[k - 1].clone());
            let rhs = BigInt::from(ps[k - 1].clone()) * BigInt::from(qs[k].clone());
            if (lhs - rhs).abs() != BigInt::one() {
                return Err(Error::Violation(format!("determinant is not ±1 at k={k}")));
            }
            if k >= 2 && qs[k] < &qs[k - 2] * 2u32 {
                return Err(Error::Violation(format!("q_{k} < 2 q_{}", k - 2)));
            }
            q_prev = qs[k - 1].clone();
            p_prev = ps[k - 1].clone();
        }
        Ok(())
    }
}

/// Lazily grown table of denominators `q_0 = 1, q_1, q_2, ...`.
pub struct Denominators {
    stream: QuotientStream,
    pub quotients: Vec<u64>,
    pub q: Vec<BigUint>,
}

impl Denominators {
    pub fn new(alpha: &AlphaSpec) -> Result<Self> {
        Ok(Denominators {
            stream: alpha.quotient_stream()?,
            quotients: Vec::new(),
            q: vec![BigUint::one()],
        })
    }

    /// `q_k`, extending the table as needed.
    pub fn get(&mut self, k: usize) -> Result<&BigUint> {
        while self.q.len() <= k {
            let a = self.stream.next_quotient()?;
            let n = self.q.len();
            let prev2 = if n >= 2 {
                self.q[n - 2].clone()
            } else {
                BigUint::zero()
            };
            let next = BigUint::from(a) * &self.q[n - 1] + prev2;
            self.quotients.push(a);
            self.q.push(next);
        }
        Ok(&self.q[k])
    }

    /// `a_k` for `k >= 1`.
    pub fn quotient(&mut self, k: usize) -> Result<u64> {
        self.get(k)?;
        Ok(self.quotients[k - 1])
    }

    /// Smallest index `k` with `q_k >= bound`.
    pub fn first_at_least(&mut self, bound: &BigUint) -> Result<usize> {
        let mut k = 0;
        while self.get(k)? < bound {
            k += 1;
        }
        Ok(k)
    }

    /// The index `l` with `q_l / 2 <= n < q_l`, if `n` sits in such a window.
    pub fn window_of(&mut self, n: &BigUint) -> Result<Option<usize>> {
        let mut k = 0;
        loop {
            let q = self.get(k)?.clone();
            if &q > n {
                let twice = n * 2u32;
                return Ok(if twice >= q { Some(k) } else { None });
            }
            k += 1;
        }
    }
}

pub fn bigint_to_f64(x: &BigInt) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
