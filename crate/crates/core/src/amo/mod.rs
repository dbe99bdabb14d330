//! Periodic approximants of the almost Mathieu operator
//! `(Hu)(n) = u(n-1) + u(n+1) + 2λ cos(2π(θ + nα)) u(n)`.
//!
//! Irrational frequencies enter only through their convergents `p/q`. Band
//! edges come from the periodic and antiperiodic `q × q` problems; inside a
//! band the integrated density of states is interpolated by the Bloch phase.

mod dd;
mod ids;
mod localdim;
mod spectrum;
mod transport;

pub use ids::{gap_labels, holder_check, ids, GapLabel, HolderReport, IdsTable};
pub use localdim::{local_dim_estimate, LocalDimEstimate, LocalDimRung};
pub use spectrum::{
    approximant_spectrum, bands_csv, butterfly, butterfly_csv, phase_bands, Phase, PhaseSpectrum,
    SpectrumApprox, ThetaPolicy,
};
pub use transport::{fitted_constant, transport_cover, Direction, TransportPiece, TransportReport};

use nalgebra::Matrix2;
use num_integer::Integer;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::circle::AlphaSpec;
use crate::error::{Error, Result};

/// Rational frequency `p/q` in lowest terms, `0 <= p < q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub p: u64,
    pub q: u64,
}

impl Rational {
    pub fn new(p: u64, q: u64) -> Result<Self> {
        if q == 0 || p >= q || p.gcd(&q) != 1 {
            return Err(Error::invalid(format!(
                "{p}/{q} is not a reduced fraction in [0, 1)"
            )));
        }
        Ok(Rational { p, q })
    }

    /// `frac(k p / q)` without rounding the product.
    pub fn phase_of(&self, k: u64) -> f64 {
        ((k % self.q) * self.p % self.q) as f64 / self.q as f64
    }
}

impl std::fmt::Display for Rational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.p, self.q)
    }
}

impl std::str::FromStr for Rational {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (p, q) = s
            .split_once('/')
            .ok_or_else(|| Error::invalid(format!("expected p/q, got {s:?}")))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<u64>()
                .map_err(|e| Error::invalid(format!("{s:?}: {e}")))
        };
        Rational::new(parse(p)?, parse(q)?)
    }
}

/// Convergents `p_k/q_k` of `alpha` with `q_k <= q_max`.
pub fn convergent_ladder(alpha: &AlphaSpec, q_max: u64) -> Result<Vec<Rational>> {
    let mut out = Vec::new();
    let mut depth = 8;
    loop {
        let cf = alpha.cf_expand(depth)?;
        out.clear();
        for (p, q) in &cf.convergents {
            match (p.to_u64(), q.to_u64()) {
                (Some(p), Some(q)) if q <= q_max => out.push(Rational::new(p % q.max(1), q)?),
                _ => return Ok(out),
            }
        }
        depth *= 2;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Frequency {
    Rational(Rational),
    /// Evaluated through its double-precision value.
    Irrational(AlphaSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmoParams {
    pub lambda: f64,
    pub alpha: Frequency,
    pub theta: f64,
}

impl AmoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(
                "lambda must be a finite non-negative number",
            ));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::invalid("theta must lie in [0, 1)"));
        }
        Ok(())
    }

    /// `2λ cos(2π(kα + θ))`.
    pub fn potential(&self, k: u64) -> f64 {
        self.potential_at(k, self.irrational_value())
    }

    fn irrational_value(&self) -> Option<f64> {
        match &self.alpha {
            Frequency::Rational(_) => None,
            Frequency::Irrational(a) => Some(a.approx_f64()),
        }
    }

    fn potential_at(&self, k: u64, irrational: Option<f64>) -> f64 {
        let x = match (&self.alpha, irrational) {
            (Frequency::Rational(r), _) => r.phase_of(k),
            (_, Some(a)) => (k as f64 * a).fract(),
            (_, None) => unreachable!("irrational value precomputed"),
        };
        2.0 * self.lambda * (std::f64::consts::TAU * (x + self.theta)).cos()
    }
}

/// `M = e^{ln_scale} · matrix`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferProduct {
    pub matrix: Matrix2<f64>,
    pub ln_scale: f64,
}

impl TransferProduct {
    pub fn determinant(&self) -> f64 {
        let d = self.matrix.determinant();
        d.signum() * (d.abs().ln() + 2.0 * self.ln_scale).exp()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace() * self.ln_scale.exp()
    }
}

const RENORM_AT: f64 = 1e64;

/// `A_{n-1} ⋯ A_0` with `A_k = [[E - v_k, -1], [1, 0]]`.
pub fn transfer_matrix(params: &AmoParams, energy: f64, n: u64) -> Result<TransferProduct> {
    params.validate()?;
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut m = Matrix2::identity();
    let mut ln_scale = 0.0;
    let irrational = params.irrational_value();
    for k in 0..n {
        let step = Matrix2::new(energy - params.potential_at(k, irrational), -1.0, 1.0, 0.0);
        m = step * m;
        let norm = m.amax();
        if norm > RENORM_AT {
            m /= norm;
            ln_scale += norm.ln();
        }
    }
    Ok(TransferProduct {
        matrix: m,
        ln_scale,
    })
}

/// `δ = β ln λ / (1 - 2β)` for `β ∈ [1/2, 1)`, `λ ∈ (0, 1)`.
pub fn delta_of_beta(beta: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(0.5..1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta = {beta} outside [1/2, 1)")));
    }
    if beta == 0.5 {
        return Ok(f64::INFINITY);
    }
    Ok(beta * lambda.ln() / (1.0 - 2.0 * beta))
}

/// Inverse of [`delta_of_beta`]: `β = δ / (2δ + ln λ)`, `β(+inf) = 1/2`.
pub fn beta_of_delta(delta: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if delta.is_nan() || delta < -lambda.ln() {
        return Err(Error::Domain(format!(
            "delta = {delta} below -ln λ = {}",
            -lambda.ln()
        )));
    }
    if delta.is_infinite() {
        return Ok(0.5);
    }
    Ok(delta / (2.0 * delta + lambda.ln()))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!("lambda = {lambda} outside (0, 1)")));
    }
    Ok(())
}
