use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::{big_f64, ln_add, ln_big, Annulus, ConstructionConstants, Mode};
use crate::circle::{
    circle_dist, discrepancy_with, exp_to_fixed, f64_to_fixed, hits_in_arc, AlphaSpec, CirclePoint,
    Denominators, Rotation, DEFAULT_SCAN_CAP,
};
use crate::error::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

/// Where the children of a node are selected.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    /// Non-wrapping `[lo, hi] ⊂ [0, 1]`.
    Interval { lo: f64, hi: f64 },
    /// An annulus whose center index sits in the window `q_l/2 <= n < q_l`.
    Annulus { annulus: Annulus, window_q: BigUint },
}

impl Region {
    pub fn ln_measure(&self) -> f64 {
        match self {
            Region::Interval { lo, hi } => (hi - lo).ln(),
            Region::Annulus { annulus, .. } => annulus.ln_measure(),
        }
    }

    /// Log-measure of the shrunken region the orbit is counted in.
    pub fn ln_inner_measure(&self, c: f64) -> f64 {
        match self {
            Region::Interval { .. } => self.ln_measure(),
            // |B((1-c)R) \ B(2cR)| = 2R(1 - 3c)
            Region::Annulus { annulus, .. } => (2.0 * (1.0 - 3.0 * c)).ln() + annulus.ln_outer(),
        }
    }
}

/// One selection `D̃_k` with its bounds and margins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    #[serde(with = "crate::serde_dec")]
    pub q: BigUint,
    /// Orbit points of the window inside the shrunken region.
    pub candidates: usize,
    /// Candidates removed for meeting an intermediate exclusion ball.
    pub filtered: usize,
    /// Exclusion indices scanned: `[m_lo, m_hi)`.
    #[serde(with = "crate::serde_dec")]
    pub m_lo: BigUint,
    #[serde(with = "crate::serde_dec")]
    pub m_hi: BigUint,
    #[serde(with = "crate::serde_dec_vec")]
    pub selected: Vec<BigUint>,
    /// `(1/8)|A| q` and `|A| q`.
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub discrepancy_applicable: bool,
    /// `|A'| / (2 D̂)`; applicability means a ratio above 1.
    pub discrepancy_margin: f64,
}

/// A selection after thinning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subscale {
    pub i: usize,
    pub selection: Selection,
    /// `#𝓔`, the entries removed by thinning.
    pub removed: usize,
    #[serde(with = "crate::serde_dec_vec")]
    pub kept: Vec<BigUint>,
}

/// Selection machinery bound to one frequency; caches denominators and
/// fixed-point rotations.
pub struct Selector {
    pub alpha: AlphaSpec,
    pub constants: ConstructionConstants,
    den: Denominators,
    rotations: HashMap<u32, Rotation>,
}

fn inadmissible(k: usize, reason: impl Into<String>) -> Error {
    Error::InadmissibleScale {
        k,
        reason: reason.into(),
    }
}

fn ceil_half(q: &BigUint) -> BigUint {
    (q + 1u32) >> 1u32
}

impl Selector {
    pub fn new(alpha: &AlphaSpec, constants: &ConstructionConstants) -> Result<Self> {
        alpha.validate()?;
        Ok(Selector {
            alpha: alpha.clone(),
            constants: constants.clone(),
            den: Denominators::new(alpha)?,
            rotations: HashMap::new(),
        })
    }

    pub fn q(&mut self, k: usize) -> Result<BigUint> {
        Ok(self.den.get(k)?.clone())
    }

    pub fn denominators(&mut self) -> &mut Denominators {
        &mut self.den
    }

    /// Rotation with at least `bits` fractional bits (rounded up to 256).
    pub fn rotation(&mut self, bits: u32) -> Result<Rotation> {
        let bits = bits.max(self.alpha.precision_bits).div_ceil(256) * 256;
        if !self.rotations.contains_key(&bits) {
            let rot = Rotation::new(&self.alpha, bits)?;
            self.rotations.insert(bits, rot);
        }
        Ok(self.rotations[&bits].clone())
    }

    /// Working precision resolving features of size `e^{ln_feature}` for
    /// orbit indices below `q`.
    pub fn bits_for(q: &BigUint, ln_feature: f64) -> u32 {
        let feature_bits = if ln_feature.is_finite() {
            (-ln_feature / LN2).max(0.0).ceil() as u64
        } else {
            0
        };
        (q.bits() + feature_bits + 96) as u32
    }

    fn common_checks(
        &mut self,
        k: usize,
        delta: f64,
        region: &Region,
    ) -> Result<(BigUint, BigUint, f64, f64, f64, bool)> {
        if k == 0 {
            return Err(inadmissible(k, "scale index must be at least 1"));
        }
        let q = self.q(k)?;
        if q < BigUint::from(2u32) {
            return Err(inadmissible(k, "empty window"));
        }
        let n0 = ceil_half(&q);
        let ln_q = ln_big(&q);
        // e^{-δ q/2} < 1/(4q): the window's balls are below the separation scale
        let ln_rmax = -big_f64(&n0) * delta;
        if ln_rmax >= -(4.0f64.ln() + ln_q) {
            return Err(inadmissible(k, "window radii exceed 1/(4q_k)"));
        }
        let ln_a = region.ln_measure();
        let lower = (ln_a + ln_q).exp() / 8.0;
        let upper = (ln_a + ln_q).exp();
        let len = &q - &n0;
        let dhat = discrepancy_with(&mut self.den, &len)?;
        let ln_margin = region.ln_inner_measure(self.constants.c) - (2.0 * dhat).ln();
        let applicable = ln_margin > 0.0;
        if self.constants.mode == Mode::Faithful && !applicable {
            return Err(inadmissible(
                k,
                format!(
                    "discrepancy not applicable (margin {:.3e})",
                    ln_margin.exp()
                ),
            ));
        }
        Ok((q, n0, lower, upper, ln_margin.exp(), applicable))
    }

    fn finish(
        &self,
        k: usize,
        q: BigUint,
        selected: Vec<BigUint>,
        candidates: usize,
        filtered: usize,
        m_range: (BigUint, BigUint),
        bounds: (f64, f64, f64, bool),
    ) -> Result<Selection> {
        let (lower, upper, margin, applicable) = bounds;
        let count = selected.len() as f64;
        if count < lower || count > upper {
            return Err(inadmissible(
                k,
                format!("count {count} outside [{lower:.4}, {upper:.4}]"),
            ));
        }
        Ok(Selection {
            index: k,
            q,
            candidates,
            filtered,
            m_lo: m_range.0,
            m_hi: m_range.1,
            selected,
            lower_bound: lower,
            upper_bound: upper,
            discrepancy_applicable: applicable,
            discrepancy_margin: margin,
        })
    }

    /// `D̃_k[I]`: window indices whose whole ball `B(nα, e^{-nδ})` lies in `I`.
    pub fn select_in_interval(
        &mut self,
        lo: f64,
        hi: f64,
        k: usize,
        delta: f64,
    ) -> Result<Selection> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::invalid("interval must satisfy 0 <= lo < hi <= 1"));
        }
        let region = Region::Interval { lo, hi };
        let (q, n0, lower, upper, margin, applicable) = self.common_checks(k, delta, &region)?;
        let ln_rmax = -big_f64(&n0) * delta;
        let bits = Self::bits_for(&q, ln_rmax.max(-2000.0));
        let rot = self.rotation(bits)?;
        let bits = rot.bits();
        let err = &q * &rot.fixed.err_ulps + 4u32;
        let r = exp_to_fixed(ln_rmax, bits) + 1u32;
        let lo_f = f64_to_fixed(lo, bits) + &r + &err;
        let hi_f = f64_to_fixed(hi, bits);
        let shrink = &r + &err;
        if hi_f <= &lo_f + &shrink {
            return Err(inadmissible(k, "interval narrower than the window radii"));
        }
        let len = hi_f - &shrink - &lo_f;
        let hits = hits_in_arc(&rot, &n0, &q, &lo_f, &len, self.constants.max_selection)?;
        let count = hits.len();
        self.finish(
            k,
            q,
            hits,
            count,
            0,
            (BigUint::zero(), BigUint::zero()),
            (lower, upper, margin, applicable),
        )
    }

    /// `D̃_k[A(ℓ)] = D' \ F_k` for an annulus of level parameter `annulus.delta`.
    ///
    /// `window_q` is `q_l` with `q_l/2 <= ℓ < q_l`; exclusion is enforced
    /// for `q_l <= m < q_k`. Past `M* = ln(4 c q_k)/δ` no ball
    /// `B(mα, c e^{-mδ})` can meet a window annulus, by the separation
    /// `‖(n - m)α‖ > 1/(2q_k)`, so only `m <= M*` is scanned.
    pub fn select_in_annulus(
        &mut self,
        annulus: &Annulus,
        window_q: &BigUint,
        k: usize,
        delta: f64,
    ) -> Result<Selection> {
        let c = self.constants.c;
        if delta < annulus.delta {
            return Err(Error::invalid(
                "child parameter must not be below the parent's",
            ));
        }
        let region = Region::Annulus {
            annulus: annulus.clone(),
            window_q: window_q.clone(),
        };
        let (q, n0, lower, upper, margin, applicable) = self.common_checks(k, delta, &region)?;
        if &q <= window_q {
            return Err(inadmissible(k, "scale not above the parent window"));
        }
        let ln_out = annulus.ln_outer();
        let ln_rmax = -big_f64(&n0) * delta;
        // balls centred in A' stay inside A(ℓ) once their radius is below cR
        if ln_rmax > c.ln() + ln_out {
            return Err(inadmissible(k, "window radii exceed c·e^{-ℓδ'}"));
        }
        let bits = Self::bits_for(&q, c.ln() + ln_out);
        let rot = self.rotation(bits)?;
        let bits = rot.bits();
        let m = rot.modulus().clone();
        let center = annulus.center(&rot);
        let err = &center.err_ulps + &q * &rot.fixed.err_ulps + 4u32;
        let r_out = exp_to_fixed((1.0 - c).ln() + ln_out, bits);
        let r_in = exp_to_fixed((2.0 * c).ln() + ln_out, bits) + 1u32;
        if r_out <= &r_in + &err * 2u32 {
            return Err(inadmissible(k, "annulus below working resolution"));
        }
        let len = &r_out - &r_in - &err * 2u32;
        let up_lo = (&center.value + &r_in + &err) % &m;
        let down_lo = (&center.value + &m - (&r_out % &m) + &err) % &m;
        let cap = self.constants.max_selection;
        let mut hits = hits_in_arc(&rot, &n0, &q, &up_lo, &len, cap)?;
        hits.extend(hits_in_arc(&rot, &n0, &q, &down_lo, &len, cap)?);
        hits.sort();
        hits.dedup();
        let candidates = hits.len();

        // exclusion scan range [q_l, min(q_k, M* + 1))
        let m_star = ((4.0 * c).ln() + ln_big(&q)) / delta;
        let m_lo = window_q.clone();
        let m_hi = if m_star.is_finite() && m_star >= 0.0 {
            let ms = BigUint::from(m_star.floor() as u128) + 1u32;
            ms.min(q.clone())
        } else {
            q.clone()
        };
        let mut kept = hits;
        if m_hi > m_lo {
            let span = &m_hi - &m_lo;
            if span > BigUint::from(DEFAULT_SCAN_CAP) {
                return Err(Error::ResourceCap {
                    requested: u128::try_from(&span).unwrap_or(u128::MAX),
                    cap: DEFAULT_SCAN_CAP as u128,
                });
            }
            let pts: Vec<(CirclePoint, f64)> = kept
                .iter()
                .map(|n| (rot.point_u(n), -big_f64(n) * delta))
                .collect();
            let mut remove = vec![false; kept.len()];
            let mut mm = m_lo.clone();
            while mm < m_hi {
                let mp = rot.point_u(&mm);
                let ln_ball = c.ln() - big_f64(&mm) * delta;
                for (idx, (p, ln_rn)) in pts.iter().enumerate() {
                    if remove[idx] || kept[idx] == mm {
                        continue;
                    }
                    let d = circle_dist(p, &mp);
                    if d.ln_lower() <= ln_add(*ln_rn, ln_ball) {
                        remove[idx] = true;
                    }
                }
                mm += 1u32;
            }
            let mut it = remove.iter();
            kept.retain(|_| !*it.next().unwrap());
        }
        let filtered = candidates - kept.len();
        self.finish(
            k,
            q,
            kept,
            candidates,
            filtered,
            (m_lo, m_hi),
            (lower, upper, margin, applicable),
        )
    }

    pub fn select(&mut self, region: &Region, k: usize, delta: f64) -> Result<Selection> {
        match region {
            Region::Interval { lo, hi } => self.select_in_interval(*lo, *hi, k, delta),
            Region::Annulus { annulus, window_q } => {
                self.select_in_annulus(annulus, window_q, k, delta)
            }
        }
    }

    /// Searches `k >= k_floor` for a scale at which all `j` sub-scales
    /// `k, k+2, ..., k+2(j-1)` select and thin within their bounds, and every
    /// window annulus fits in its packing ball `B(nα, a/(δn))`.
    pub fn choose_k(
        &mut self,
        region: &Region,
        delta: f64,
        ln_a: f64,
        j: usize,
        k_floor: usize,
    ) -> Result<(usize, Vec<Subscale>, Vec<(usize, String)>)> {
        let mut rejected = Vec::new();
        let k_floor = k_floor.max(1);
        for k in k_floor..k_floor + self.constants.k_search_cap {
            match self.try_scale(region, delta, ln_a, j, k) {
                Ok(subs) => return Ok((k, subs, rejected)),
                Err(Error::InadmissibleScale { reason, .. }) => rejected.push((k, reason)),
                Err(Error::Violation(reason)) => rejected.push((k, reason)),
                Err(e) => return Err(e),
            }
        }
        let tail: Vec<String> = rejected
            .iter()
            .rev()
            .take(4)
            .map(|(k, r)| format!("k={k}: {r}"))
            .collect();
        Err(Error::CapExceeded {
            path: String::new(),
            diagnostics: format!(
                "no admissible scale in [{k_floor}, {}); last: {}",
                k_floor + self.constants.k_search_cap,
                tail.join("; ")
            ),
        })
    }

    fn try_scale(
        &mut self,
        region: &Region,
        delta: f64,
        ln_a: f64,
        j: usize,
        k: usize,
    ) -> Result<Vec<Subscale>> {
        let mut sels = Vec::with_capacity(j);
        for i in 0..j {
            let idx = k + 2 * i;
            let q = self.q(idx)?;
            let n0 = ceil_half(&q);
            // e^{-nδ} <= a/(δn) at the window start (the gap only widens above it)
            let n0f = big_f64(&n0);
            if -n0f * delta > ln_a - delta.ln() - n0f.ln() {
                return Err(inadmissible(
                    idx,
                    "window annuli exceed their packing balls",
                ));
            }
            sels.push(self.select(region, idx, delta)?);
        }
        let bits = sels
            .iter()
            .map(|s| Self::bits_for(&s.q, ln_a - delta.ln()))
            .max()
            .unwrap_or(0)
            .max(match region {
                Region::Annulus { annulus, .. } => {
                    Self::bits_for(&sels[j - 1].q, self.constants.c.ln() + annulus.ln_outer())
                }
                Region::Interval { .. } => 0,
            });
        let rot = self.rotation(bits)?;
        thin_selection(&rot, &sels, ln_a, delta)
    }

    /// Precision used for nodes selected at denominator `q` inside `region`.
    pub fn region_bits(&self, q: &BigUint, region: &Region, ln_a: f64, delta: f64) -> u32 {
        let base = Self::bits_for(q, ln_a - delta.ln());
        match region {
            Region::Annulus { annulus, .. } => base.max(Self::bits_for(
                q,
                self.constants.c.ln() + annulus.ln_outer(),
            )),
            Region::Interval { .. } => base,
        }
        .max(self.alpha.precision_bits)
        .div_ceil(256)
            * 256
    }
}

/// `ln(a/(δn))`, the packing radius of index `n`.
pub(crate) fn ln_packing_radius(ln_a: f64, delta: f64, n: &BigUint) -> f64 {
    ln_a - delta.ln() - ln_big(n)
}

/// Thins sub-scales `i >= 1` against the surviving balls of all earlier ones,
/// so that `{B(nα, a/(δn))}` over the union is pairwise disjoint.
pub fn thin_selection(
    rot: &Rotation,
    selections: &[Selection],
    ln_a: f64,
    delta: f64,
) -> Result<Vec<Subscale>> {
    let mut survivors: Vec<(CirclePoint, f64)> = Vec::new();
    let mut out = Vec::with_capacity(selections.len());
    for (i, sel) in selections.iter().enumerate() {
        let mut kept = Vec::new();
        let mut fresh = Vec::new();
        for n in &sel.selected {
            let p = rot.point_u(n);
            let r = ln_packing_radius(ln_a, delta, n);
            let hit = i > 0
                && survivors
                    .iter()
                    .any(|(s, rs)| circle_dist(&p, s).ln_lower() <= ln_add(r, *rs));
            if !hit {
                kept.push(n.clone());
                fresh.push((p, r));
            }
        }
        survivors.extend(fresh);
        let removed = sel.selected.len() - kept.len();
        if 2 * kept.len() < sel.selected.len() {
            return Err(Error::Violation(format!(
                "thinning kept {} of {} at index {}",
                kept.len(),
                sel.selected.len(),
                sel.index
            )));
        }
        out.push(Subscale {
            i,
            selection: sel.clone(),
            removed,
            kept,
        });
    }
    Ok(out)
}
