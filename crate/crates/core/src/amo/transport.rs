use serde::{Deserialize, Serialize};

use super::ids::{holder_check, IdsTable};
use crate::error::{Error, Result};
use crate::gauge::{omega_eval, Cover, GaugeFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Energy intervals mapped to their IDS images.
    FToD,
    /// IDS intervals pulled back to spectrum intervals, split at a gap when
    /// the middle third misses the spectrum.
    DToF,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPiece {
    pub source: (f64, f64),
    pub image: Vec<(f64, f64)>,
    /// `1` or `2` for the pull-back; `0` for the forward map.
    pub case: u8,
    /// `|N(I)| >= |I|^3` for every pulled-back piece.
    pub cubic_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportReport {
    pub direction: Direction,
    pub s: f64,
    /// Hölder constant used for the smallness preconditions.
    pub c: f64,
    pub pieces: Vec<TransportPiece>,
    pub source_sum: f64,
    pub transported_sum: f64,
    pub ratio: f64,
    /// `3^s` forward, `2 · 3^s` backward.
    pub bound: f64,
    pub case1: usize,
    pub case2: usize,
    pub pass: bool,
}

/// Envelope constant fitted on the band edges and an even spread of band
/// energies over `ε ∈ [1e-9, 0.5]`.
pub fn fitted_constant(table: &IdsTable) -> Result<f64> {
    let mut es = table.spread_energies(200);
    es.extend(table.spectrum.bands.iter().flat_map(|b| [b.0, b.1]));
    let eps: Vec<f64> = (0..=40)
        .map(|i| (1e-9f64.ln() + (0.5f64.ln() - 1e-9f64.ln()) * i as f64 / 40.0).exp())
        .collect();
    let rep = holder_check(table, &es, &eps)?;
    if !rep.violations.is_empty() {
        return Err(Error::Precondition(format!(
            "{} samples with non-positive increments",
            rep.violations.len()
        )));
    }
    Ok(rep.c)
}

fn len(i: (f64, f64)) -> f64 {
    i.1 - i.0
}

/// Moves a cover between the energy side and the IDS side and compares the
/// `ω_s` sums.
pub fn transport_cover(
    table: &IdsTable,
    cover: &Cover,
    s: f64,
    direction: Direction,
    c: f64,
) -> Result<TransportReport> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::invalid("Hölder constant must lie in (0, 1)"));
    }
    let g = GaugeFunction::log_power(s);
    let mut pieces = Vec::with_capacity(cover.intervals.len());
    let (mut source_sum, mut transported_sum) = (0.0, 0.0);
    let (mut case1, mut case2) = (0, 0);
    let three_s = 3f64.powf(s);
    let bound = match direction {
        Direction::FToD => three_s,
        Direction::DToF => 2.0 * three_s,
    };
    for &(a, b) in &cover.intervals {
        match direction {
            Direction::FToD => {
                if b - a > c.powi(6) {
                    return Err(Error::Precondition(format!(
                        "|I| = {} exceeds c^6 = {}",
                        b - a,
                        c.powi(6)
                    )));
                }
                let img = (table.n(a), table.n(b));
                source_sum += omega_eval(&g, b - a)?;
                transported_sum += omega_eval(&g, len(img))?;
                pieces.push(TransportPiece {
                    source: (a, b),
                    image: vec![img],
                    case: 0,
                    cubic_ok: true,
                });
            }
            Direction::DToF => {
                let limit = (c / 6.0).powi(2);
                if a < 0.0 || b > 1.0 || b - a > limit {
                    return Err(Error::Precondition(format!(
                        "J = [{a}, {b}] not inside [0, 1] with |J| <= (c/6)^2 = {limit}"
                    )));
                }
                let e1 = table.sup_below(a);
                let e2 = table.inf_above(b);
                if e2 - e1 >= 0.5 {
                    return Err(Error::Precondition(format!(
                        "pull-back [{e1}, {e2}] is not shorter than 1/2"
                    )));
                }
                let third = (e2 - e1) / 3.0;
                let (m1, m2) = (e1 + third, e2 - third);
                let middle_hits = table
                    .spectrum
                    .bands
                    .iter()
                    .any(|&(lo, hi)| lo <= m2 && hi >= m1);
                let (case, image) = if middle_hits {
                    case1 += 1;
                    (1, vec![(e1, e2)])
                } else {
                    case2 += 1;
                    let (gm, gp) = table
                        .gap_around(0.5 * (m1 + m2))
                        .expect("middle third lies in a gap");
                    (2, vec![(e1, gm), (gp, e2)])
                };
                let cubic_ok = image
                    .iter()
                    .all(|&(x, y)| table.n(y) - table.n(x) >= (y - x).powi(3));
                source_sum += omega_eval(&g, b - a)?;
                transported_sum += omega_eval(&g, image.iter().map(|&p| len(p)).sum())?;
                pieces.push(TransportPiece {
                    source: (a, b),
                    image,
                    case,
                    cubic_ok,
                });
            }
        }
    }
    let ratio = if source_sum > 0.0 {
        transported_sum / source_sum
    } else {
        0.0
    };
    let pass = ratio <= bound && pieces.iter().all(|p| p.cubic_ok);
    Ok(TransportReport {
        direction,
        s,
        c,
        pieces,
        source_sum,
        transported_sum,
        ratio,
        bound,
        case1,
        case2,
        pass,
    })
}
