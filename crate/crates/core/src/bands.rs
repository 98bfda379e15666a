//! Uniform confidence bands for the population CDF.

use serde::{Deserialize, Serialize};

use crate::empirical::{EstimatorKind, IndicatorGrid};
use crate::error::{Error, Result};
use crate::popgen::Population;

/// `center(t) +/- q_hat / sqrt(N)` on a grid. Bounds are not clipped to [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceBand {
    pub grid: IndicatorGrid,
    pub center: Vec<f64>,
    pub q_hat: f64,
    pub half_width_cdf: f64,
    pub gamma: f64,
    pub kind: EstimatorKind,
    pub n_units: usize,
}

/// One row of a band dump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub t: f64,
    pub lower: f64,
    pub center: f64,
    pub upper: f64,
}

impl ConfidenceBand {
    /// Full width on the CDF scale, `2 q_hat / sqrt(N)`.
    pub fn width(&self) -> f64 {
        2.0 * self.half_width_cdf
    }

    pub fn lower(&self) -> Vec<f64> {
        self.center.iter().map(|c| c - self.half_width_cdf).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.center.iter().map(|c| c + self.half_width_cdf).collect()
    }

    /// Rows for display; with `clip` the bounds are clamped to [0, 1]. Clipping
    /// only affects this view, never [`covers`] or [`ConfidenceBand::width`].
    pub fn rows(&self, clip: bool) -> Vec<BandRow> {
        let fix = |v: f64| if clip { v.clamp(0.0, 1.0) } else { v };
        self.grid
            .thresholds()
            .iter()
            .zip(&self.center)
            .map(|(&t, &c)| BandRow {
                t,
                lower: fix(c - self.half_width_cdf),
                center: c,
                upper: fix(c + self.half_width_cdf),
            })
            .collect()
    }
}

pub fn build_band(
    grid: &IndicatorGrid,
    estimator_values: Vec<f64>,
    q_hat: f64,
    n_units: usize,
    gamma: f64,
    kind: EstimatorKind,
) -> Result<ConfidenceBand> {
    if !(q_hat >= 0.0 && q_hat.is_finite()) {
        return Err(Error::Domain(format!("q_hat = {q_hat} must be finite and nonnegative")));
    }
    if estimator_values.len() != grid.len() {
        return Err(Error::Shape("estimator values do not match the grid".into()));
    }
    if n_units == 0 {
        return Err(Error::EmptyPopulation);
    }
    Ok(ConfidenceBand {
        grid: grid.clone(),
        center: estimator_values,
        q_hat,
        half_width_cdf: q_hat / (n_units as f64).sqrt(),
        gamma,
        kind,
        n_units,
    })
}

/// `sqrt(N) max_t |center(t) - F_N(t)| <= q_hat` over the band's grid. The
/// grid must contain every population jump for this to be the exact sup.
pub fn covers(band: &ConfidenceBand, pop: &Population) -> bool {
    let root_n = (pop.n_units() as f64).sqrt();
    let dev = band
        .grid
        .thresholds()
        .iter()
        .zip(&band.center)
        .fold(0.0_f64, |m, (&t, &c)| m.max((c - pop.cdf(t)).abs()));
    root_n * dev <= band.q_hat
}
