use serde::{Deserialize, Serialize};

use super::ids::IdsTable;
use super::{Rational, ThetaPolicy};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalDimRung {
    pub frequency: Rational,
    pub in_spectrum: bool,
    /// `(ln r, ln μ(B(E, r)))`.
    pub masses: Vec<(f64, f64)>,
    /// Finite-difference slopes of `ln μ` against `ln r` between consecutive radii.
    pub slopes: Vec<f64>,
    #[serde(with = "crate::serde_f64")]
    pub lower: f64,
    #[serde(with = "crate::serde_f64")]
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalDimEstimate {
    pub energy: f64,
    #[serde(with = "crate::serde_f64")]
    pub lower_est: f64,
    #[serde(with = "crate::serde_f64")]
    pub upper_est: f64,
    pub rungs: Vec<LocalDimRung>,
    /// Largest change of either estimate between the two finest rungs.
    #[serde(with = "crate::serde_f64")]
    pub spread: f64,
}

fn rung(lambda: f64, r: Rational, e: f64, ln_radii: &[f64]) -> Result<LocalDimRung> {
    let table = IdsTable::build(lambda, r, ThetaPolicy::TwoPhase)?;
    let masses: Vec<(f64, f64)> = ln_radii
        .iter()
        .map(|&lr| {
            let r = lr.exp();
            (lr, (table.n(e + r) - table.n(e - r)).ln())
        })
        .collect();
    let slopes: Vec<f64> = masses
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect();
    let tail = &slopes[slopes.len() / 2..];
    let finite = tail.iter().copied().filter(|s| s.is_finite());
    let (lower, upper) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |acc, s| {
        (acc.0.min(s), acc.1.max(s))
    });
    Ok(LocalDimRung {
        frequency: r,
        in_spectrum: table.spectrum.contains(e),
        masses,
        slopes,
        lower,
        upper,
    })
}

/// Local dimension surrogate at `e` from the approximant density of states.
///
/// The measure of `B(E, r)` is `N(E + r) - N(E - r)` on each rung of the
/// ladder; the estimates are the extreme slopes over the smaller half of
/// `r_grid` on the finest rung. With `stability_tol` set, a larger change
/// between the two finest rungs is an error.
pub fn local_dim_estimate(
    lambda: f64,
    ladder: &[Rational],
    e: f64,
    r_grid: &[f64],
    stability_tol: Option<f64>,
) -> Result<LocalDimEstimate> {
    if ladder.is_empty() || r_grid.len() < 3 {
        return Err(Error::invalid("need a ladder and at least three radii"));
    }
    if r_grid.windows(2).any(|w| !(w[1] < w[0])) || !(r_grid[r_grid.len() - 1] > 0.0) {
        return Err(Error::invalid("radii must be positive and decreasing"));
    }
    let ln_radii: Vec<f64> = r_grid.iter().map(|r| r.ln()).collect();
    let rungs = ladder
        .iter()
        .map(|&r| rung(lambda, r, e, &ln_radii))
        .collect::<Result<Vec<_>>>()?;
    let finest = rungs.last().expect("non-empty");
    if !finest.in_spectrum {
        return Err(Error::Precondition(format!(
            "E = {e} is not in the bands of {}",
            finest.frequency
        )));
    }
    let spread = match rungs.len() {
        1 => 0.0,
        n => {
            let prev = &rungs[n - 2];
            (finest.lower - prev.lower)
                .abs()
                .max((finest.upper - prev.upper).abs())
        }
    };
    let spread = if spread.is_nan() {
        f64::INFINITY
    } else {
        spread
    };
    if let Some(tol) = stability_tol {
        if !(spread <= tol) {
            return Err(Error::Instability(format!(
                "slopes move by {spread} between {} and {} (tolerance {tol})",
                rungs[rungs.len().saturating_sub(2)].frequency,
                finest.frequency
            )));
        }
    }
    Ok(LocalDimEstimate {
        energy: e,
        lower_est: finest.lower,
        upper_est: finest.upper,
        spread,
        rungs,
    })
}
