//! The annulus Cantor construction inside the set of points with prescribed
//! resonance strength.
//!
//! Level `t` consists of annuli `A(n) = B(nα, e^{-nδ_t}) \ B(nα, c e^{-nδ_t})`.
//! Level 1 is selected inside `[0, 1]`; each deeper level is selected inside
//! one annulus of the previous level. All radii are handled through their
//! natural logarithms, since `e^{-nδ}` underflows `f64` from level 2 on.

mod audit;
mod build;
mod select;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::circle::{AlphaSpec, CirclePoint, Rotation};
use crate::error::{Error, Result};

pub use audit::{verify_tree, AuditEntry, AuditReport};
pub use build::{build_tree, level_delta, BranchPolicy};
pub use select::{thin_selection, Region, Selection, Selector, Subscale};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// The constants of the proof, unchanged.
    Faithful,
    /// All powers of two configurable, so that several levels fit in memory.
    Toy,
}

/// The constants of the construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionConstants {
    pub mode: Mode,
    /// Inner-to-outer radius ratio of every annulus.
    pub c: f64,
    /// Packing scale of level 1.
    pub a0: f64,
    /// `2^{-14}` in `a_t = 2^{-14} n δ e^{-nδ}`.
    pub a_factor: f64,
    /// `log2` of `2^9` in `1/2 <= j 2^9 a/δ <= 1`; `None` picks the power
    /// of two that makes `j = 2`.
    pub packing_log2: Option<i64>,
    /// `2^{-10}` in `a < min{2^{-10}, 2^{-10} δ}`.
    pub cap_factor: f64,
    /// `2^{-16}` in the threshold `a_t < 2^{-16} a_{t-1}`.
    pub decay_factor: f64,
    /// Upper bound on `j_t`.
    pub max_subscales: usize,
    /// Number of scale indices tried above the floor.
    pub k_search_cap: usize,
    /// Upper bound on the size of one selection.
    pub max_selection: usize,
}

impl ConstructionConstants {
    pub fn faithful() -> Self {
        ConstructionConstants {
            mode: Mode::Faithful,
            c: 1e-3,
            a0: 2f64.powi(-11),
            a_factor: 2f64.powi(-14),
            packing_log2: Some(9),
            cap_factor: 2f64.powi(-10),
            decay_factor: 2f64.powi(-16),
            max_subscales: 64,
            k_search_cap: 48,
            max_selection: 200_000,
        }
    }

    pub fn toy() -> Self {
        ConstructionConstants {
            mode: Mode::Toy,
            c: 0.01,
            a0: 2f64.powi(-3),
            a_factor: 2f64.powi(-8),
            packing_log2: None,
            cap_factor: 2f64.powi(-2),
            decay_factor: 2f64.powi(-4),
            max_subscales: 64,
            k_search_cap: 48,
            max_selection: 200_000,
        }
    }

    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Faithful => Self::faithful(),
            Mode::Toy => Self::toy(),
        }
    }

    /// Checks the standing assumptions on `c` and `a0` for first-level
    /// parameter `delta1`.
    pub fn validate(&self, delta1: f64) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0 / 3.0) {
            return Err(Error::invalid("c must lie in (0, 1/3)"));
        }
        let a_cap = self.cap_factor.min(self.cap_factor * delta1);
        if !(self.a0 > 0.0 && self.a0 < a_cap) {
            return Err(Error::invalid(format!(
                "a0 = {} must lie in (0, {a_cap})",
                self.a0
            )));
        }
        for (name, v) in [
            ("a_factor", self.a_factor),
            ("cap_factor", self.cap_factor),
            ("decay_factor", self.decay_factor),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1]")));
            }
        }
        if self.max_subscales == 0 || self.k_search_cap == 0 || self.max_selection == 0 {
            return Err(Error::invalid("search bounds must be positive"));
        }
        if self.mode == Mode::Faithful {
            let proof = Self::faithful();
            if self.a_factor != proof.a_factor
                || self.packing_log2 != proof.packing_log2
                || self.cap_factor != proof.cap_factor
                || self.decay_factor != proof.decay_factor
            {
                return Err(Error::invalid(
                    "faithful mode does not accept overrides of the powers of two",
                ));
            }
            let c_cap = (1.0 / 24.0f64).powi(2) * (1.0 - (-delta1).exp());
            if self.c >= c_cap {
                return Err(Error::invalid(format!(
                    "faithful mode needs c < {c_cap:.6e}"
                )));
            }
        }
        Ok(())
    }
}

/// `min{δ, ln ln k}` for `k >= 21`, else `min{δ, 1}`.
pub fn delta_sequence(delta: f64, k: f64) -> f64 {
    if k >= 21.0 {
        delta.min(k.ln().ln())
    } else {
        delta.min(1.0)
    }
}

pub(crate) fn big_f64(n: &BigUint) -> f64 {
    n.to_f64().unwrap_or(f64::INFINITY)
}

pub(crate) fn ln_big(n: &BigUint) -> f64 {
    crate::circle::ln_ratio(n, 0)
}

/// `ln(e^x + e^y)`.
pub(crate) fn ln_add(x: f64, y: f64) -> f64 {
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `A(n)` for parameter `delta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    #[serde(with = "crate::serde_dec")]
    pub n: BigUint,
    pub delta: f64,
    pub c: f64,
}

impl Annulus {
    /// `-nδ`.
    pub fn ln_outer(&self) -> f64 {
        -(big_f64(&self.n) * self.delta)
    }

    pub fn ln_inner(&self) -> f64 {
        self.c.ln() + self.ln_outer()
    }

    /// `ln |A| = ln 2(1 - c) - nδ`.
    pub fn ln_measure(&self) -> f64 {
        (2.0 * (1.0 - self.c)).ln() + self.ln_outer()
    }

    pub fn center(&self, rot: &Rotation) -> CirclePoint {
        rot.point_u(&self.n)
    }
}

/// Parameters of one local level: the children of one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelParams {
    /// Level of the children.
    pub t: usize,
    pub delta_t: f64,
    pub delta_next: f64,
    /// `ln a_{t-1}`.
    #[serde(with = "crate::serde_f64")]
    pub ln_a_prev: f64,
    pub h_t: usize,
    pub k_t: usize,
    pub j_t: usize,
    pub packing_log2: i64,
    pub precision_bits: u32,
    pub subscales: Vec<Subscale>,
    /// Scale indices tried before `k_t`, with the reason each was rejected.
    pub rejected: Vec<(usize, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CantorNode {
    pub path: Vec<u32>,
    pub level: usize,
    #[serde(with = "crate::serde_dec")]
    pub n: BigUint,
    pub delta: f64,
    /// Index `k_t + 2i` of the denominator window `n` was selected from.
    pub subscale: usize,
    #[serde(with = "crate::serde_dec")]
    pub window_q: BigUint,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub expansion: Option<LevelParams>,
}

impl CantorNode {
    pub fn annulus(&self, c: f64) -> Option<Annulus> {
        (self.level > 0).then(|| Annulus {
            n: self.n.clone(),
            delta: self.delta,
            c,
        })
    }

    pub fn path_string(&self) -> String {
        if self.path.is_empty() {
            return "root".into();
        }
        self.path
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(".")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CantorTree {
    pub alpha: AlphaSpec,
    #[serde(with = "crate::serde_f64")]
    pub delta_target: f64,
    pub constants: ConstructionConstants,
    pub depth: usize,
    pub policy: BranchPolicy,
    pub precision_bits: u32,
    /// Node 0 is the root interval `[0, 1]`.
    pub nodes: Vec<CantorNode>,
}

impl CantorTree {
    pub fn root(&self) -> &CantorNode {
        &self.nodes[0]
    }

    pub fn level(&self, t: usize) -> impl Iterator<Item = (usize, &CantorNode)> {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.level == t)
    }

    pub fn rotation(&self) -> Result<Rotation> {
        Rotation::new(&self.alpha, self.precision_bits)
    }

    /// Node indices from the root to `leaf`, root excluded.
    pub fn branch(&self, leaf: usize) -> Vec<usize> {
        let mut out = vec![];
        let mut cur = Some(leaf);
        while let Some(i) = cur {
            if i == 0 {
                break;
            }
            out.push(i);
            cur = self.nodes[i].parent;
        }
        out.reverse();
        out
    }

    /// First node with the given dotted path.
    pub fn find(&self, path: &[u32]) -> Option<usize> {
        self.nodes.iter().position(|n| n.path == path)
    }

    /// Deepest nodes reached along the leftmost expanded branch.
    pub fn first_deep_leaf(&self) -> usize {
        let mut cur = 0;
        loop {
            let node = &self.nodes[cur];
            match node
                .children
                .iter()
                .find(|&&c| !self.nodes[c].children.is_empty())
                .or(node.children.first())
            {
                Some(&c) => cur = c,
                None => return cur,
            }
        }
    }

    pub fn leaves(&self) -> Vec<usize> {
        (1..self.nodes.len())
            .filter(|&i| self.nodes[i].children.is_empty())
            .collect()
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::invalid(format!("tree json: {e}")))
    }
}

/// A point of the limit set near a leaf, with the orbit indices it was
/// built from.
#[derive(Clone, Debug, PartialEq)]
pub struct CantorPoint {
    pub point: CirclePoint,
    /// `n_1, n_2, ...` along the branch.
    pub witnesses: Vec<BigUint>,
    pub deltas: Vec<f64>,
    /// Denominators `q_{k_t + 2 i_t}` of the windows along the branch.
    pub window_qs: Vec<BigUint>,
}

/// Point at radius `(1 + c)/2 · e^{-nδ}` from the leaf center, on the side
/// facing away from the parent center (the positive side at level 1).
pub fn cantor_point(tree: &CantorTree, leaf: usize) -> Result<CantorPoint> {
    if leaf == 0 || leaf >= tree.nodes.len() {
        return Err(Error::invalid("leaf must be a non-root node index"));
    }
    if !tree.nodes[leaf].children.is_empty() {
        return Err(Error::invalid("branch must end at a leaf"));
    }
    let rot = tree.rotation()?;
    let node = &tree.nodes[leaf];
    let center = rot.point_u(&node.n);
    let positive = match node.parent {
        Some(p) if p != 0 => {
            let pc = rot.point_u(&tree.nodes[p].n);
            let m = rot.modulus();
            let diff = (&center.value + m - &pc.value) % m;
            diff < (m >> 1u32)
        }
        _ => true,
    };
    let ann = node.annulus(tree.constants.c).expect("non-root");
    let ln_r = ((1.0 + tree.constants.c) / 2.0).ln() + ann.ln_outer();
    let point = center.shifted(ln_r, positive);
    let branch = tree.branch(leaf);
    Ok(CantorPoint {
        point,
        witnesses: branch.iter().map(|&i| tree.nodes[i].n.clone()).collect(),
        deltas: branch.iter().map(|&i| tree.nodes[i].delta).collect(),
        window_qs: branch
            .iter()
            .map(|&i| tree.nodes[i].window_q.clone())
            .collect(),
    })
}
