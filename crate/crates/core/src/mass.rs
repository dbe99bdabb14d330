//! The probability measure carried by a built Cantor tree and its
//! ball-mass certificate for the `(-ln r)^{-1}` gauge.
//!
//! Masses are fixed-point fractions with [`MASS_BITS`] fractional bits.
//! Each child of a node receives the share `n_c^{-1} / Σ n^{-1}` of its
//! parent, the sum running over every selected child (the common factor
//! `δ_t^{-1}` cancels). Unexpanded nodes keep their full share.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::cantor::{cantor_point, ln_add, ln_big, CantorTree, Mode};
use crate::circle::{circle_dist, ln_ratio, ratio_to_f64, CirclePoint};
use crate::error::Result;

/// Fractional bits of a node mass.
pub const MASS_BITS: u32 = 256;
/// Guard bits of the child weights `2^W / n`.
const WEIGHT_GUARD: u32 = 64;
const LN2: f64 = std::f64::consts::LN_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub node: usize,
    /// `ln Σ_children n^{-1}`.
    pub ln_weight_sum: f64,
    pub children: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassDistribution {
    pub frac_bits: u32,
    /// Indexed like `tree.nodes`; floor-rounded.
    #[serde(with = "crate::serde_dec_vec")]
    pub node_mass: Vec<BigUint>,
    pub a0: f64,
    pub normalizers: Vec<Normalizer>,
}

/// Distributes unit mass over the tree, level by level.
pub fn assign_mass(tree: &CantorTree) -> MassDistribution {
    let mut mass = vec![BigUint::zero(); tree.nodes.len()];
    mass[0] = BigUint::one() << MASS_BITS;
    let mut normalizers = Vec::new();
    // parents precede children in node order
    for p in 0..tree.nodes.len() {
        let kids = &tree.nodes[p].children;
        if kids.is_empty() {
            continue;
        }
        let max_bits = kids
            .iter()
            .map(|&c| tree.nodes[c].n.bits())
            .max()
            .unwrap_or(0) as u32;
        let w_bits = MASS_BITS + WEIGHT_GUARD + max_bits;
        let weights: Vec<BigUint> = kids
            .iter()
            .map(|&c| (BigUint::one() << w_bits) / &tree.nodes[c].n)
            .collect();
        let total: BigUint = weights.iter().sum();
        for (&c, w) in kids.iter().zip(&weights) {
            mass[c] = &mass[p] * w / &total;
        }
        normalizers.push(Normalizer {
            node: p,
            ln_weight_sum: ln_ratio(&total, w_bits),
            children: kids.len(),
        });
    }
    MassDistribution {
        frac_bits: MASS_BITS,
        node_mass: mass,
        a0: tree.constants.a0,
        normalizers,
    }
}

impl MassDistribution {
    pub fn mass(&self, node: usize) -> f64 {
        ratio_to_f64(&self.node_mass[node], self.frac_bits)
    }

    pub fn ln_mass(&self, node: usize) -> f64 {
        ln_ratio(&self.node_mass[node], self.frac_bits)
    }

    /// `|Σ children - node| / node` for an expanded node, `0` otherwise.
    pub fn consistency_error(&self, tree: &CantorTree, node: usize) -> f64 {
        let kids = &tree.nodes[node].children;
        let own = &self.node_mass[node];
        if kids.is_empty() || own.is_zero() {
            return 0.0;
        }
        let sum: BigUint = kids.iter().map(|&c| &self.node_mass[c]).sum();
        let diff = if &sum >= own { &sum - own } else { own - &sum };
        (ln_ratio(&diff, 0) - ln_ratio(own, 0)).exp()
    }

    pub fn max_consistency_error(&self, tree: &CantorTree) -> f64 {
        (0..tree.nodes.len())
            .map(|i| self.consistency_error(tree, i))
            .fold(0.0, f64::max)
    }

    /// `ln` of the a-priori bound on `μ(A(n))`.
    ///
    /// Faithful mode uses `2^{14} a0 / (nδ)`. Toy mode re-derives the
    /// recursion from the audited count `#D >= |A| q / 16` and `n <= q`:
    /// `μ(A(n_1)) <= (16 δ_1 / j_1) / (n_1 δ_1)` and
    /// `μ(A(n_t)) <= 16 δ_t e^{n δ} / (j_t n δ) · μ-bound(parent) · (n_t δ_t)^{-1}`.
    pub fn ln_node_bound(&self, tree: &CantorTree, node: usize) -> f64 {
        ln_node_constant(tree, node) - ln_n_delta(tree, node)
    }

    /// Nodes whose mass exceeds [`MassDistribution::ln_node_bound`].
    pub fn node_bound_violations(&self, tree: &CantorTree) -> Vec<usize> {
        (1..tree.nodes.len())
            .filter(|&i| self.ln_mass(i) > self.ln_node_bound(tree, i))
            .collect()
    }
}

fn ln_n_delta(tree: &CantorTree, node: usize) -> f64 {
    let n = &tree.nodes[node];
    ln_big(&n.n) + n.delta.ln()
}

/// `ln C` with `μ(A(n)) <= C (nδ)^{-1}`.
fn ln_node_constant(tree: &CantorTree, node: usize) -> f64 {
    let k = &tree.constants;
    if k.mode == Mode::Faithful {
        return 14.0 * LN2 + k.a0.ln();
    }
    let nd = &tree.nodes[node];
    let p = nd.parent.expect("non-root");
    let lp = tree.nodes[p].expansion.as_ref().expect("parent expanded");
    let base = 4.0 * LN2 + lp.delta_t.ln() - (lp.j_t as f64).ln();
    if p == 0 {
        return base;
    }
    let nd_p = crate::cantor::big_f64(&tree.nodes[p].n) * tree.nodes[p].delta;
    base + ln_node_constant(tree, p) + nd_p - ln_n_delta(tree, p)
}

/// Certified decision whether `B(x, r)` meets the annulus of `node`.
///
/// The annulus is `B(c, R) \ B(c, cR)`; the test errs towards "meets".
fn meets(center: &CirclePoint, x: &CirclePoint, ln_r: f64, ln_outer: f64, ln_inner: f64) -> bool {
    let d = circle_dist(x, center);
    d.ln_lower() < ln_add(ln_outer, ln_r) && ln_add(d.ln_upper(), ln_r) > ln_inner
}

/// Node centers at tree precision, computed once per tree.
pub struct BallScanner<'a> {
    tree: &'a CantorTree,
    centers: Vec<CirclePoint>,
}

impl<'a> BallScanner<'a> {
    pub fn new(tree: &'a CantorTree) -> Result<Self> {
        let rot = tree.rotation()?;
        let centers = tree.nodes.iter().map(|n| rot.point_u(&n.n)).collect();
        Ok(BallScanner { tree, centers })
    }

    /// Upper bound for `μ(B(x, e^{ln_r}))`.
    pub fn ln_mass_of_ball(&self, mu: &MassDistribution, x: &CirclePoint, ln_r: f64) -> f64 {
        if ln_r >= 0.0 {
            return 0.0;
        }
        let x = x.at_bits(self.tree.precision_bits);
        let c = self.tree.constants.c;
        let mut total = BigUint::zero();
        let mut stack = self.tree.nodes[0].children.clone();
        let mut terms = 0u32;
        while let Some(i) = stack.pop() {
            let ann = self.tree.nodes[i].annulus(c).expect("non-root");
            if !meets(&self.centers[i], &x, ln_r, ann.ln_outer(), ann.ln_inner()) {
                continue;
            }
            let kids = &self.tree.nodes[i].children;
            if kids.is_empty() {
                total += &mu.node_mass[i];
                terms += 1;
            } else {
                stack.extend(kids.iter().copied());
            }
        }
        // each floor-rounded mass is at most one ulp short
        total += terms;
        ln_ratio(&total, mu.frac_bits).min(0.0)
    }
}

/// Upper bound for `μ(B(x, r))`: the mass of every deepest reached node
/// whose annulus meets the ball.
pub fn mass_of_ball(
    tree: &CantorTree,
    mu: &MassDistribution,
    x: &CirclePoint,
    r: f64,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(crate::Error::invalid("radius must be positive"));
    }
    if r >= 1.0 {
        return Ok(1.0);
    }
    Ok(BallScanner::new(tree)?
        .ln_mass_of_ball(mu, &x.clone(), r.ln())
        .exp())
}

/// `ln r_0`: the smallest gap between the outer balls of two level-1 annuli
/// (`1/2` minus the radius for a single annulus).
pub fn ln_first_gap(tree: &CantorTree) -> Result<f64> {
    let rot = tree.rotation()?;
    let c = tree.constants.c;
    let mut pts: Vec<(CirclePoint, f64)> = tree.nodes[0]
        .children
        .iter()
        .map(|&i| {
            let n = &tree.nodes[i];
            (
                rot.point_u(&n.n),
                n.annulus(c).expect("non-root").ln_outer(),
            )
        })
        .collect();
    if pts.len() == 1 {
        return Ok((0.5 - pts[0].1.exp()).ln());
    }
    pts.sort_by(|a, b| a.0.value.cmp(&b.0.value));
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        let (a, ra) = &pts[i];
        let (b, rb) = &pts[(i + 1) % pts.len()];
        let d = circle_dist(a, b).ln_lower();
        let reach = ln_add(*ra, *rb);
        // ln(d - reach), -inf when the balls touch
        let gap = if d > reach {
            d + (-(reach - d).exp()).ln_1p()
        } else {
            f64::NEG_INFINITY
        };
        best = best.min(gap);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpSample {
    pub leaf: String,
    pub x: f64,
    pub ln_r: f64,
    #[serde(with = "crate::serde_f64")]
    pub ln_mass_upper: f64,
    pub ln_bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpCertificate {
    pub mode: Mode,
    pub samples: Vec<MdpSample>,
    /// `(x, r)` pairs skipped because `r` is below the leaf's outer radius.
    pub excluded: usize,
    /// `ln` of the ball constant: `2^{32} a0` in faithful mode.
    pub ln_constant: f64,
    /// Ball constant re-derived from the tree's own scales and masses.
    pub ln_derived_constant: f64,
    #[serde(with = "crate::serde_f64")]
    pub constant: f64,
    pub ln_r0: f64,
    /// Lower bound `μ(C) / constant` for the gauge measure, `None` on failure.
    pub ln_conclusion: Option<f64>,
    /// Smallest `ln bound - ln mass` over the samples.
    pub worst_margin: f64,
    pub pass: bool,
}

/// `ln` of the constant in `μ(B(x, r)) <= K (-ln r)^{-1}` re-derived with the
/// configured constants and the actual node masses.
///
/// A ball that meets one annulus per level down to a leaf is bounded by the
/// leaf mass, so `K >= μ(A) n δ`. A ball that first splits below a node `p`
/// is bounded by `2^8 δ_t / (a j_t) · μ(A(p)) n_p δ_p` where `a` is `p`'s
/// packing scale.
pub fn ln_derived_constant(tree: &CantorTree, mu: &MassDistribution) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 1..tree.nodes.len() {
        let single = mu.ln_mass(i) + ln_n_delta(tree, i);
        best = best.max(single);
        if let Some(lp) = &tree.nodes[i].expansion {
            let split = 8.0 * LN2 + lp.delta_t.ln() - lp.ln_a_prev - (lp.j_t as f64).ln() + single;
            best = best.max(split);
        }
    }
    best
}

/// Geometric grid of `count` radii in `(e^{ln_lo}, r_0)`.
pub fn default_r_grid(ln_lo: f64, ln_r0: f64, count: usize) -> Vec<f64> {
    let count = count.max(1);
    (0..count)
        .map(|i| ln_lo + (ln_r0 - ln_lo) * (i as f64 + 0.5) / count as f64)
        .collect()
}

/// Checks `μ(B(x, r)) <= K ω_1(r)` on `sample_count` pairs of a Cantor point
/// per leaf and a radius from `ln_r_grid`.
///
/// Radii outside `[e^{-nδ}, r_0)` for the sampled leaf are skipped.
pub fn mdp_certificate(
    tree: &CantorTree,
    mu: &MassDistribution,
    sample_count: usize,
    ln_r_grid: &[f64],
) -> Result<MdpCertificate> {
    if sample_count == 0 || ln_r_grid.is_empty() {
        return Err(crate::Error::invalid(
            "need at least one sample and one radius",
        ));
    }
    let ln_r0 = ln_first_gap(tree)?;
    let derived = ln_derived_constant(tree, mu);
    let ln_constant = match tree.constants.mode {
        Mode::Faithful => 32.0 * LN2 + tree.constants.a0.ln(),
        Mode::Toy => derived,
    };
    let scanner = BallScanner::new(tree)?;
    let leaves = tree.leaves();
    let points = leaves
        .iter()
        .map(|&l| cantor_point(tree, l).map(|p| p.point))
        .collect::<Result<Vec<_>>>()?;
    let c = tree.constants.c;
    let mut samples = Vec::new();
    let mut excluded = 0;
    'outer: for &ln_r in ln_r_grid {
        for (li, &leaf) in leaves.iter().enumerate() {
            if samples.len() == sample_count {
                break 'outer;
            }
            let ln_outer = tree.nodes[leaf].annulus(c).expect("non-root").ln_outer();
            if ln_r < ln_outer || ln_r >= ln_r0 {
                excluded += 1;
                continue;
            }
            let ln_mass = scanner.ln_mass_of_ball(mu, &points[li], ln_r);
            let ln_bound = ln_constant - (-ln_r).ln();
            samples.push(MdpSample {
                leaf: tree.nodes[leaf].path_string(),
                x: points[li].value_f64(),
                ln_r,
                ln_mass_upper: ln_mass,
                ln_bound,
                pass: ln_mass <= ln_bound,
            });
        }
    }
    let pass = !samples.is_empty() && samples.iter().all(|s| s.pass);
    let worst_margin = samples
        .iter()
        .map(|s| s.ln_bound - s.ln_mass_upper)
        .fold(f64::INFINITY, f64::min);
    Ok(MdpCertificate {
        mode: tree.constants.mode,
        samples,
        excluded,
        ln_constant,
        ln_derived_constant: derived,
        constant: ln_constant.exp(),
        ln_r0,
        ln_conclusion: pass.then_some(-ln_constant),
        worst_margin,
        pass,
    })
}

impl MdpCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    /// Header `leaf,x,ln_r,ln_mass_upper,ln_bound,pass`.
    pub fn samples_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::from("leaf,x,ln_r,ln_mass_upper,ln_bound,pass\n");
        for m in &self.samples {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                m.leaf, m.x, m.ln_r, m.ln_mass_upper, m.ln_bound, m.pass
            );
        }
        s
    }
}
