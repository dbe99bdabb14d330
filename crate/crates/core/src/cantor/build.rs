use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::select::{Region, Selector};
use super::{
    big_f64, delta_sequence, CantorNode, CantorTree, ConstructionConstants, LevelParams, Mode,
};
use crate::circle::{exp_to_fixed, AlphaSpec};
use crate::error::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

/// Which selected children are expanded into the next level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum BranchPolicy {
    Full,
    /// The `branches` children with the smallest orbit index.
    Sample {
        branches: usize,
    },
}

/// The level parameter `δ_t`.
///
/// Faithful mode follows `δ_t = min{δ, ln ln t}` (`min{δ, 1}` for `t < 21`);
/// toy mode keeps `δ_t = δ` at every level so that the target strength is
/// visible at reachable depths.
pub fn level_delta(mode: Mode, delta: f64, t: usize) -> f64 {
    match mode {
        Mode::Toy if delta.is_finite() => delta,
        _ => delta_sequence(delta, t as f64),
    }
}

/// `ln a = ln(2^{-14} n δ e^{-nδ})` for a node `n` with parameter `δ`.
pub(crate) fn ln_packing_scale(constants: &ConstructionConstants, n: &BigUint, delta: f64) -> f64 {
    constants.a_factor.ln() + ln_decay(big_f64(n) * delta)
}

/// `ln(x e^{-x})`, `-inf` once `x` leaves the f64 range.
pub(crate) fn ln_decay(x: f64) -> f64 {
    if x.is_finite() {
        x.ln() - x
    } else {
        f64::NEG_INFINITY
    }
}

/// Smallest `h >= 1` such that `2^{-14} n δ e^{-nδ} < min{2^{-16} a, 2^{-10} δ_next}`
/// for every `n >= q_h / 2`.
pub(crate) fn threshold_index(
    sel: &mut Selector,
    delta: f64,
    ln_a_prev: f64,
    delta_next: f64,
) -> Result<usize> {
    let k = &sel.constants;
    let rhs = (k.decay_factor.ln() + ln_a_prev).min(k.cap_factor.ln() + delta_next.ln());
    let lnf = k.a_factor.ln();
    // decreasing in n once nδ >= 1
    let g = |n: f64| lnf + (n * delta).ln() - n * delta;
    let start = (1.0 / delta).ceil().max(1.0);
    let n_star = if g(start) < rhs {
        start
    } else {
        let mut lo = start;
        let mut hi = start * 2.0;
        while g(hi) >= rhs {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::CapExceeded {
                    path: String::new(),
                    diagnostics: "threshold index beyond f64 range".into(),
                });
            }
        }
        while hi - lo > 1.0 {
            let mid = ((lo + hi) / 2.0).floor();
            if g(mid) < rhs {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    // ceil(q_h/2) >= n*  <=>  q_h >= 2n* - 1
    let bound = BigUint::from((2.0 * n_star - 1.0) as u128);
    Ok(sel.denominators().first_at_least(&bound)?.max(1))
}

/// `(j, log2 P)` with `1/2 <= j P a/δ <= 1`.
pub(crate) fn subscale_count(
    constants: &ConstructionConstants,
    ln_a: f64,
    delta: f64,
) -> Result<(usize, i64)> {
    let (j, p) = match constants.packing_log2 {
        None => {
            // P a/δ ∈ [1/4, 1/2) gives j = 2
            let p = (-2.0 - ln_a / LN2 + delta.log2()).ceil() as i64;
            (2usize, p)
        }
        Some(p) => {
            let ln_x = p as f64 * LN2 + ln_a - delta.ln();
            // tolerance absorbs the rounding of exp(ln x) at exact powers of two
            let j = (0.5 / ln_x.exp() - 1e-9).ceil();
            if !(j <= constants.max_subscales as f64) {
                return Err(Error::CapExceeded {
                    path: String::new(),
                    diagnostics: format!(
                        "j = {j:.3e} sub-scales needed, cap {}",
                        constants.max_subscales
                    ),
                });
            }
            (j.max(1.0) as usize, p)
        }
    };
    if !packing_identity_holds(j, p, ln_a, delta) {
        return Err(Error::Violation(format!(
            "no integer j with 1/2 <= j 2^{p} a/δ <= 1"
        )));
    }
    Ok((j, p))
}

pub(crate) fn packing_identity_holds(j: usize, p: i64, ln_a: f64, delta: f64) -> bool {
    let v = (j as f64).ln() + p as f64 * LN2 + ln_a - delta.ln();
    v >= -LN2 - 1e-12 && v <= 1e-12
}

fn with_path(e: Error, path: &str) -> Error {
    match e {
        Error::CapExceeded { diagnostics, .. } => Error::CapExceeded {
            path: path.to_string(),
            diagnostics,
        },
        Error::InadmissibleScale { k, reason } => Error::InadmissibleScale {
            k,
            reason: format!("{path}: {reason}"),
        },
        other => other,
    }
}

/// Builds the first `depth` levels.
pub fn build_tree(
    alpha: &AlphaSpec,
    delta_target: f64,
    constants: &ConstructionConstants,
    depth: usize,
    policy: BranchPolicy,
) -> Result<CantorTree> {
    if depth == 0 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    if !(delta_target > 0.0) {
        return Err(Error::invalid("delta must lie in (0, +inf]"));
    }
    if let BranchPolicy::Sample { branches: 0 } = policy {
        return Err(Error::invalid("sample policy needs at least one branch"));
    }
    let mode = constants.mode;
    constants.validate(level_delta(mode, delta_target, 1))?;
    let mut sel = Selector::new(alpha, constants)?;
    let mut nodes = vec![CantorNode {
        path: vec![],
        level: 0,
        n: BigUint::from(0u32),
        delta: 0.0,
        subscale: 0,
        window_q: BigUint::from(1u32),
        parent: None,
        children: vec![],
        expansion: None,
    }];
    let mut precision = alpha.precision_bits;
    let mut frontier = vec![0usize];
    for t in 1..=depth {
        let delta_t = level_delta(mode, delta_target, t);
        let delta_next = level_delta(mode, delta_target, t + 1);
        let mut next = Vec::new();
        for &p in &frontier {
            let path = nodes[p].path_string();
            let (region, ln_a_prev) = if p == 0 {
                (Region::Interval { lo: 0.0, hi: 1.0 }, constants.a0.ln())
            } else {
                let node = &nodes[p];
                let ann = node.annulus(constants.c).expect("non-root");
                let ln_a = ln_packing_scale(constants, &node.n, node.delta);
                (
                    Region::Annulus {
                        annulus: ann,
                        window_q: node.window_q.clone(),
                    },
                    ln_a,
                )
            };
            if !ln_a_prev.is_finite() {
                return Err(Error::CapExceeded {
                    path,
                    diagnostics: "packing scale below the f64 exponent range".into(),
                });
            }
            let a_cap = constants.cap_factor.ln() + delta_t.ln().min(0.0);
            if ln_a_prev >= a_cap {
                return Err(Error::Violation(format!(
                    "{path}: packing scale not below min(2^-10, 2^-10 δ_t)"
                )));
            }
            let h = threshold_index(&mut sel, delta_t, ln_a_prev, delta_next)
                .map_err(|e| with_path(e, &path))?;
            let (j, p_log2) =
                subscale_count(constants, ln_a_prev, delta_t).map_err(|e| with_path(e, &path))?;
            // below q = 1/|A| the expected count is under one point
            let inv_measure = exp_to_fixed(-region.ln_measure(), 0);
            let k_floor = h.max(sel.denominators().first_at_least(&inv_measure)?);
            let (k, subs, rejected) = sel
                .choose_k(&region, delta_t, ln_a_prev, j, k_floor)
                .map_err(|e| with_path(e, &path))?;
            let bits = sel.region_bits(
                &subs.last().expect("j >= 1").selection.q,
                &region,
                ln_a_prev,
                delta_t,
            );
            precision = precision.max(bits);
            let mut ids = Vec::new();
            for sub in &subs {
                for n in &sub.kept {
                    let id = nodes.len();
                    let mut cpath = nodes[p].path.clone();
                    cpath.push(ids.len() as u32);
                    nodes.push(CantorNode {
                        path: cpath,
                        level: t,
                        n: n.clone(),
                        delta: delta_t,
                        subscale: sub.selection.index,
                        window_q: sub.selection.q.clone(),
                        parent: Some(p),
                        children: vec![],
                        expansion: None,
                    });
                    ids.push(id);
                }
            }
            if t < depth {
                let mut order = ids.clone();
                order.sort_by(|&a, &b| nodes[a].n.cmp(&nodes[b].n));
                if let BranchPolicy::Sample { branches } = policy {
                    order.truncate(branches);
                }
                next.extend(order);
            }
            nodes[p].children = ids;
            nodes[p].expansion = Some(LevelParams {
                t,
                delta_t,
                delta_next,
                ln_a_prev,
                h_t: h,
                k_t: k,
                j_t: j,
                packing_log2: p_log2,
                precision_bits: bits,
                subscales: subs,
                rejected,
            });
        }
        frontier = next;
    }
    Ok(CantorTree {
        alpha: alpha.clone(),
        delta_target,
        constants: constants.clone(),
        depth,
        policy,
        precision_bits: precision,
        nodes,
    })
}
