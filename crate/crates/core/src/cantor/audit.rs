use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::build::{ln_decay, ln_packing_scale, packing_identity_holds, threshold_index};
use super::select::{ln_packing_radius, Selector};
use super::{big_f64, ln_big, CantorTree};
use crate::circle::{circle_dist, exp_to_fixed, CirclePoint, Rotation};
use crate::error::Result;

/// Sampled exclusion indices per node.
const EXCLUSION_M_SAMPLES: usize = 50;
const SIGNED_RATIO_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub node: String,
    pub check: String,
    pub pass: bool,
    /// Log-ratio slack of the inequality; positive when it holds.
    #[serde(with = "crate::serde_f64")]
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub pass: bool,
    pub entries: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn failures(&self) -> impl Iterator<Item = &AuditEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }

    pub fn count(&self, check: &str) -> usize {
        self.entries.iter().filter(|e| e.check == check).count()
    }

    /// Header `node,check,pass,margin`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node,check,pass,margin\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{},{}", e.node, e.check, e.pass, e.margin);
        }
        s
    }
}

/// Upper bound on `e^{ln} · 2^bits` in ulps.
fn fixed_up(ln: f64, bits: u32) -> BigUint {
    let x = exp_to_fixed(ln, bits);
    let slack = (&x >> 50u32) + 1u32;
    x + slack
}

/// Lower bound on `e^{ln} · 2^bits` in ulps.
fn fixed_down(ln: f64, bits: u32) -> BigUint {
    let x = exp_to_fixed(ln, bits);
    let slack = (&x >> 50u32) + 1u32;
    if x > slack {
        x - slack
    } else {
        BigUint::zero()
    }
}

fn ln_fixed(x: &BigUint, bits: u32) -> f64 {
    crate::circle::ln_ratio(x, bits)
}

struct Recorder {
    entries: Vec<AuditEntry>,
}

impl Recorder {
    fn push(&mut self, node: &str, check: &str, pass: bool, margin: f64) {
        self.entries.push(AuditEntry {
            node: node.to_string(),
            check: check.to_string(),
            pass,
            margin,
        });
    }
}

/// Independent re-check of every recorded selection: nesting, packing-ball
/// disjointness, cardinalities, sampled exclusion and parameter identities.
pub fn verify_tree(tree: &CantorTree, seed: u64) -> Result<AuditReport> {
    let rot = tree.rotation()?;
    let bits = rot.bits();
    let consts = &tree.constants;
    let c = consts.c;
    let mut sel = Selector::new(&tree.alpha, consts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rec = Recorder { entries: vec![] };
    for (pid, parent) in tree.nodes.iter().enumerate() {
        let Some(exp) = &parent.expansion else {
            continue;
        };
        let pname = parent.path_string();
        let delta = exp.delta_t;
        let ln_a = exp.ln_a_prev;

        // parameter identities
        let ln_a_expected = if pid == 0 {
            consts.a0.ln()
        } else {
            ln_packing_scale(consts, &parent.n, parent.delta)
        };
        let drift = (ln_a - ln_a_expected).abs();
        rec.push(
            &pname,
            "packing-scale",
            drift <= SIGNED_RATIO_TOL * ln_a.abs().max(1.0),
            -drift,
        );
        let ln_cap = consts.cap_factor.ln() + delta.ln().min(0.0);
        rec.push(&pname, "packing-cap", ln_a < ln_cap, ln_cap - ln_a);
        rec.push(
            &pname,
            "packing-identity",
            packing_identity_holds(exp.j_t, exp.packing_log2, ln_a, delta),
            0.0,
        );
        let h = threshold_index(&mut sel, delta, ln_a, exp.delta_next)?;
        rec.push(
            &pname,
            "threshold-index",
            h == exp.h_t && exp.k_t >= h,
            (exp.k_t as f64) - h as f64,
        );
        let indices_ok = exp.subscales.len() == exp.j_t
            && exp
                .subscales
                .iter()
                .enumerate()
                .all(|(i, s)| s.i == i && s.selection.index == exp.k_t + 2 * i);
        rec.push(&pname, "subscale-indices", indices_ok, 0.0);

        // cardinalities
        let ln_measure = match parent.annulus(c) {
            Some(a) => a.ln_measure(),
            None => 0.0,
        };
        for s in &exp.subscales {
            let q = sel.q(s.selection.index)?;
            rec.push(&pname, "window-denominator", q == s.selection.q, 0.0);
            let aq = (ln_measure + ln_big(&q)).exp();
            let sel_n = s.selection.selected.len() as f64;
            let kept = s.kept.len() as f64;
            rec.push(
                &pname,
                "selection-lower",
                sel_n >= aq / 8.0,
                (sel_n / (aq / 8.0)).ln(),
            );
            rec.push(&pname, "selection-upper", sel_n <= aq, (aq / sel_n).ln());
            rec.push(
                &pname,
                "kept-lower",
                kept >= aq / 16.0,
                (kept / (aq / 16.0)).ln(),
            );
            rec.push(&pname, "kept-upper", kept <= aq, (aq / kept).ln());
            rec.push(
                &pname,
                "thinning-half",
                2.0 * kept >= sel_n,
                (2.0 * kept / sel_n).ln(),
            );
            let in_window = s.kept.iter().all(|n| {
                let twice = n * 2u32;
                twice >= q && n < &q && s.selection.selected.contains(n)
            });
            rec.push(&pname, "window-membership", in_window, 0.0);
        }

        // per-child nesting, packing containment and the threshold at the child scale
        let pcenter = (pid != 0).then(|| rot.point_u(&parent.n));
        let rhs =
            (consts.decay_factor.ln() + ln_a).min(consts.cap_factor.ln() + exp.delta_next.ln());
        let mut balls: Vec<(CirclePoint, f64, String)> = Vec::new();
        for &cid in &parent.children {
            let child = &tree.nodes[cid];
            let cname = child.path_string();
            let center = rot.point_u(&child.n);
            let ann = child.annulus(c).expect("non-root child");
            let ln_r = ann.ln_outer();
            let r = fixed_up(ln_r, bits);
            match &pcenter {
                None => {
                    let m = rot.modulus();
                    let lo_ok = center.value > &center.err_ulps + &r;
                    let hi_ok = &center.value + &center.err_ulps + &r < *m;
                    let slack = if lo_ok && hi_ok {
                        let lo = &center.value - &center.err_ulps - &r;
                        let hi = m - (&center.value + &center.err_ulps + &r);
                        ln_fixed(&lo.min(hi), bits)
                    } else {
                        f64::NEG_INFINITY
                    };
                    rec.push(&cname, "nesting", lo_ok && hi_ok, slack - ln_r);
                }
                Some(pc) => {
                    let pa = parent.annulus(c).expect("non-root parent");
                    let d = circle_dist(&center, pc);
                    let outer = fixed_down(pa.ln_outer(), bits);
                    let inner = fixed_up(pa.ln_inner(), bits);
                    let far = &d.value + &d.err_ulps + &r;
                    let near_ok = d.value > &d.err_ulps + &r + &inner;
                    let far_ok = far < outer;
                    let margin = if near_ok && far_ok {
                        let a = &d.value - &d.err_ulps - &r - &inner;
                        let b = &outer - &far;
                        ln_fixed(&a.min(b), bits) - pa.ln_outer()
                    } else {
                        f64::NEG_INFINITY
                    };
                    rec.push(&cname, "nesting", near_ok && far_ok, margin);
                }
            }
            let ln_pack = ln_packing_radius(ln_a, delta, &child.n);
            rec.push(
                &cname,
                "annulus-in-packing-ball",
                ln_r <= ln_pack,
                ln_pack - ln_r,
            );
            let lhs = consts.a_factor.ln() + ln_decay(big_f64(&child.n) * delta);
            rec.push(&cname, "decay-threshold", lhs < rhs, rhs - lhs);
            balls.push((center, ln_pack, cname));
        }

        // packing balls of siblings: sorted neighbours (with wraparound) suffice
        if balls.len() >= 2 {
            balls.sort_by(|a, b| a.0.value.cmp(&b.0.value));
            let count = balls.len();
            for i in 0..count {
                let (p, rp, name) = &balls[i];
                let (q, rq, _) = &balls[(i + 1) % count];
                if count == 2 && i == 1 {
                    break;
                }
                let d = circle_dist(p, q);
                let need = fixed_up(*rp, bits) + fixed_up(*rq, bits);
                let ok = d.value > &d.err_ulps + &need;
                let margin = if d.value > d.err_ulps {
                    ln_fixed(&(&d.value - &d.err_ulps), bits) - ln_fixed(&need, bits)
                } else {
                    f64::NEG_INFINITY
                };
                rec.push(name, "packing-disjoint", ok, margin);
            }
        }

        // sampled exclusion ‖x - mα‖ > c e^{-mδ} for q_l <= m < q_k
        if pid != 0 {
            for &cid in &parent.children {
                let child = &tree.nodes[cid];
                exclusion_samples(&mut rec, &rot, child, &parent.window_q, c, &mut rng);
            }
        }
    }
    let pass = rec.entries.iter().all(|e| e.pass);
    Ok(AuditReport {
        pass,
        entries: rec.entries,
    })
}

fn random_below(rng: &mut ChaCha8Rng, span: &BigUint) -> BigUint {
    let limbs = span.bits().div_ceil(64) as usize + 1;
    let digits: Vec<u64> = (0..limbs).map(|_| rng.gen()).collect();
    BigUint::from_slice(
        &digits
            .iter()
            .flat_map(|d| [*d as u32, (*d >> 32) as u32])
            .collect::<Vec<_>>(),
    ) % span
}

fn exclusion_samples(
    rec: &mut Recorder,
    rot: &Rotation,
    child: &super::CantorNode,
    q_l: &BigUint,
    c: f64,
    rng: &mut ChaCha8Rng,
) {
    let name = child.path_string();
    let q_k = &child.window_q;
    if q_k <= q_l {
        rec.push(&name, "exclusion", false, f64::NEG_INFINITY);
        return;
    }
    let span = q_k - q_l;
    let mut ms: Vec<BigUint> = Vec::new();
    let mut m = q_l.clone();
    while ms.len() < EXCLUSION_M_SAMPLES / 2 && &m < q_k {
        ms.push(m.clone());
        m += 1u32;
    }
    while ms.len() < EXCLUSION_M_SAMPLES {
        ms.push(q_l + random_below(rng, &span));
    }
    let ann = child.annulus(c).expect("non-root");
    let center = rot.point_u(&child.n);
    let resolvable = !exp_to_fixed(ann.ln_inner(), rot.bits()).is_zero();
    // radii strictly inside (cR, R], on both sides
    let mut xs = Vec::new();
    for frac in [0.25f64, 0.9] {
        let ln_rho = (c + frac * (1.0 - c)).ln() + ann.ln_outer();
        xs.push(center.shifted(ln_rho, true));
        xs.push(center.shifted(ln_rho, false));
    }
    let mut worst = f64::INFINITY;
    let mut ok = true;
    let mut pairs = 0usize;
    for m in &ms {
        if m == &child.n && !resolvable {
            continue;
        }
        let mp = rot.point_u(m);
        let ln_ball = c.ln() - big_f64(m) * child.delta;
        let ball = fixed_up(ln_ball, rot.bits());
        for x in &xs {
            let d = circle_dist(x, &mp);
            pairs += 1;
            let good = d.value > &d.err_ulps + &ball;
            let margin = if d.value > d.err_ulps {
                ln_fixed(&(&d.value - &d.err_ulps), rot.bits()) - ln_ball
            } else {
                f64::NEG_INFINITY
            };
            worst = worst.min(margin);
            ok &= good;
        }
    }
    rec.push(&name, "exclusion", ok && pairs >= 100, worst);
}
