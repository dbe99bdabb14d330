//! Gauge functions, cover sums, the Borel–Cantelli tail and a diagnostic
//! log-dimension fit.

use std::fmt::Write as _;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::cantor::CantorTree;
use crate::circle::{ln_ratio, CirclePoint};
use crate::error::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GaugeFunction {
    /// `(-ln r)^{-s}`.
    LogPower { s: f64 },
    /// `r^s`.
    Power { s: f64 },
    /// Piecewise-linear through `(r_i, value_i)`, starting at `(0, 0)`.
    Table { r: Vec<f64>, value: Vec<f64> },
}

impl GaugeFunction {
    pub fn log_power(s: f64) -> Self {
        GaugeFunction::LogPower { s }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GaugeFunction::LogPower { s } | GaugeFunction::Power { s } => {
                if !(*s > 0.0 && s.is_finite()) {
                    return Err(Error::invalid("gauge exponent must be positive"));
                }
            }
            GaugeFunction::Table { r, value } => {
                if r.len() != value.len() || r.len() < 2 || r[0] != 0.0 || value[0] != 0.0 {
                    return Err(Error::invalid(
                        "table needs matching rows starting at (0, 0)",
                    ));
                }
                if r.windows(2).any(|w| w[1] <= w[0]) || value.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid("table must be strictly increasing"));
                }
            }
        }
        Ok(())
    }

    /// `ω(e^{ln_r})` without forming `r`; `ln_r = -inf` gives `0`.
    pub fn eval_ln(&self, ln_r: f64) -> Result<f64> {
        self.validate()?;
        if ln_r == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        match self {
            GaugeFunction::LogPower { s } => {
                if ln_r >= 0.0 {
                    return Err(Error::Domain(format!(
                        "log-power gauge needs r < 1, got ln r = {ln_r}"
                    )));
                }
                Ok((-ln_r).powf(-s))
            }
            GaugeFunction::Power { s } => Ok((s * ln_r).exp()),
            GaugeFunction::Table { r, value } => {
                let x = ln_r.exp();
                let i = r.partition_point(|&ri| ri <= x);
                if i == r.len() {
                    return Err(Error::Domain(format!("r = {x} beyond the table")));
                }
                let (r0, r1, v0, v1) = (r[i - 1], r[i], value[i - 1], value[i]);
                Ok(v0 + (v1 - v0) * (x - r0) / (r1 - r0))
            }
        }
    }
}

/// `ω(r)` for `r >= 0`.
pub fn omega_eval(g: &GaugeFunction, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("radius {r} is negative")));
    }
    g.eval_ln(r.ln())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pub intervals: Vec<(f64, f64)>,
}

impl Cover {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.iter().any(|&(a, b)| !(b > a)) {
            return Err(Error::invalid("cover intervals must satisfy a < b"));
        }
        Ok(Cover { intervals })
    }

    pub fn mesh(&self) -> f64 {
        self.intervals
            .iter()
            .map(|&(a, b)| b - a)
            .fold(0.0, f64::max)
    }
}

/// `Σ ω(b_i - a_i)`.
pub fn cover_sum(cover: &Cover, g: &GaugeFunction) -> Result<f64> {
    cover
        .intervals
        .iter()
        .map(|&(a, b)| omega_eval(g, b - a))
        .sum()
}

/// Nodes covering the built set at level `t`: the level-`t` nodes and every
/// shallower leaf.
pub fn level_frontier(tree: &CantorTree, t: usize) -> Vec<usize> {
    (1..tree.nodes.len())
        .filter(|&i| {
            let n = &tree.nodes[i];
            n.level == t || (n.level < t && n.children.is_empty())
        })
        .collect()
}

/// Gauge sum of the level-`t` cover by the outer balls `B(nα, e^{-nδ})`.
pub fn level_cover_sum(tree: &CantorTree, t: usize, g: &GaugeFunction) -> Result<f64> {
    let c = tree.constants.c;
    level_frontier(tree, t)
        .into_iter()
        .map(|i| g.eval_ln(LN2 + tree.nodes[i].annulus(c).expect("non-root").ln_outer()))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailVerdict {
    Convergent,
    Divergent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSum {
    pub eta: f64,
    pub s: f64,
    pub k_start: u64,
    /// Terms summed explicitly.
    pub terms: u64,
    /// Certified bracket for `Σ_{k >= K} 2(kη - ln 2)^{-s}`.
    #[serde(with = "crate::serde_f64")]
    pub lower: f64,
    #[serde(with = "crate::serde_f64")]
    pub upper: f64,
    #[serde(with = "crate::serde_f64")]
    pub value: f64,
    /// `2 η^{-1} (s-1)^{-1} (Kη - ln 2)^{1-s}`, the integral from `K`.
    #[serde(with = "crate::serde_f64")]
    pub closed_form: f64,
    pub verdict: TailVerdict,
}

/// Explicit terms before switching to the integral bracket.
const TAIL_TERMS: u64 = 100_000;

fn tail_term(eta: f64, s: f64, k: u64) -> f64 {
    2.0 * (k as f64 * eta - LN2).powf(-s)
}

/// `∫_a^∞ 2(xη - ln 2)^{-s} dx`.
fn tail_integral(eta: f64, s: f64, a: f64) -> f64 {
    if s <= 1.0 {
        return f64::INFINITY;
    }
    2.0 * (a * eta - LN2).powf(1.0 - s) / (eta * (s - 1.0))
}

/// `Σ_{k0 <= k <= k1} 2(kη - ln 2)^{-s}`, largest terms last.
pub fn partial_sum(eta: f64, s: f64, k0: u64, k1: u64) -> f64 {
    (k0..=k1).rev().map(|k| tail_term(eta, s, k)).sum()
}

/// `Σ_{k >= K} 2 ω_s(2 e^{-kη})`.
pub fn borel_cantelli_tail(eta: f64, s: f64, k_start: u64) -> Result<TailSum> {
    if !(eta > 0.0 && eta.is_finite()) || !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid("eta and s must be positive"));
    }
    if k_start < 2 || k_start as f64 * eta <= LN2 {
        return Err(Error::invalid("need K >= 2 and K η > ln 2"));
    }
    let closed_form = tail_integral(eta, s, k_start as f64);
    if s <= 1.0 {
        return Ok(TailSum {
            eta,
            s,
            k_start,
            terms: 0,
            lower: f64::INFINITY,
            upper: f64::INFINITY,
            value: f64::INFINITY,
            closed_form,
            verdict: TailVerdict::Divergent,
        });
    }
    let last = k_start + TAIL_TERMS - 1;
    let head = partial_sum(eta, s, k_start, last);
    // decreasing terms: ∫_{N+1}^∞ <= Σ_{k > N} <= ∫_N^∞
    let lower = head + tail_integral(eta, s, (last + 1) as f64);
    let upper = head + tail_integral(eta, s, last as f64);
    Ok(TailSum {
        eta,
        s,
        k_start,
        terms: TAIL_TERMS,
        lower,
        upper,
        value: 0.5 * (lower + upper),
        closed_form,
        verdict: TailVerdict::Convergent,
    })
}

/// CSV with header `K,tail,lower,upper`.
pub fn tail_table(eta: f64, s: f64, ks: &[u64]) -> Result<String> {
    let mut out = String::from("K,tail,lower,upper\n");
    for &k in ks {
        let t = borel_cantelli_tail(eta, s, k)?;
        let _ = writeln!(out, "{k},{:e},{:e},{:e}", t.value, t.lower, t.upper);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogDimFit {
    /// `(ln r, N(r))`.
    pub counts: Vec<(f64, usize)>,
    /// Slope of `ln N` against `ln(-ln r)`.
    pub s: f64,
    pub stderr: f64,
    /// Slope of `ln N` against `-ln r`; near zero for log-scaling sets.
    pub power_slope: f64,
    pub log_scaling: bool,
}

impl LogDimFit {
    pub fn band(&self) -> (f64, f64) {
        (self.s - 2.0 * self.stderr, self.s + 2.0 * self.stderr)
    }

    /// CSV with header `ln_r,count`.
    pub fn counts_csv(&self) -> String {
        let mut out = String::from("ln_r,count\n");
        for (lr, n) in &self.counts {
            let _ = writeln!(out, "{lr},{n}");
        }
        out
    }
}

/// Power slopes above this are treated as positive box dimension.
const POWER_SLOPE_CUT: f64 = 0.25;

/// Greedy cover count of sorted fixed-point values by intervals of length
/// `e^{ln_r}` (optimal on the line).
fn cover_count(sorted: &[BigUint], bits: u32, ln_r: f64) -> usize {
    let mut count = 0;
    let mut start: Option<&BigUint> = None;
    for v in sorted {
        let inside = start.is_some_and(|s| ln_ratio(&(v - s), bits) <= ln_r);
        if !inside {
            count += 1;
            start = Some(v);
        }
    }
    count
}

/// Least-squares fit of `ln N(r)` against `ln(-ln r)`; diagnostic only.
pub fn log_dim_estimate(points: &[CirclePoint], ln_scales: &[f64]) -> Result<LogDimFit> {
    if ln_scales.len() < 2 {
        return Err(Error::invalid("need at least two scales"));
    }
    if points.is_empty() {
        return Err(Error::invalid("empty sample"));
    }
    if ln_scales.iter().any(|&l| !(l < 0.0)) {
        return Err(Error::invalid("scales must lie in (0, 1)"));
    }
    let bits = points.iter().map(|p| p.bits).max().expect("non-empty");
    let mut vals: Vec<BigUint> = points.iter().map(|p| p.at_bits(bits).value).collect();
    vals.sort();
    let counts: Vec<(f64, usize)> = ln_scales
        .iter()
        .map(|&l| (l, cover_count(&vals, bits, l)))
        .collect();
    if counts.iter().all(|c| c.1 == counts[0].1) {
        return Err(Error::DegenerateFit(format!(
            "all {} scales give N = {}",
            counts.len(),
            counts[0].1
        )));
    }
    let ys: Vec<f64> = counts.iter().map(|c| (c.1 as f64).ln()).collect();
    let xs: Vec<f64> = counts.iter().map(|c| (-c.0).ln()).collect();
    let (s, stderr) = fit(&xs, &ys);
    let (power_slope, _) = fit(&counts.iter().map(|c| -c.0).collect::<Vec<_>>(), &ys);
    Ok(LogDimFit {
        counts,
        s,
        stderr,
        power_slope,
        log_scaling: power_slope < POWER_SLOPE_CUT,
    })
}

/// Slope and its standard error.
fn fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let stderr = if xs.len() > 2 && sxx > 0.0 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, stderr)
}
