//! Empirical processes indexed by the indicator class `{ y <= t }`.
//!
//! All processes here are right-continuous step functions of `t` that jump
//! only at population `y` values, so evaluating them on the distinct
//! population values gives their exact supremum over the real line.

use serde::{Deserialize, Serialize};

use crate::design::{DesignProbs, SampleDraw};
use crate::error::{Error, Result};
use crate::popgen::Population;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSource {
    PopulationJumps,
    SampledJumps,
    Custom,
}

/// Strictly ascending evaluation thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorGrid {
    thresholds: Vec<f64>,
    source: GridSource,
}

impl IndicatorGrid {
    pub fn new(thresholds: Vec<f64>, source: GridSource) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::Shape("indicator grid is empty".into()));
        }
        if thresholds.iter().any(|t| t.is_nan()) {
            return Err(Error::Parameter("grid threshold is NaN".into()));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Shape("grid thresholds must be strictly ascending".into()));
        }
        Ok(Self { thresholds, source })
    }

    /// Distinct population `y` values.
    pub fn population_jumps(pop: &Population) -> Self {
        Self { thresholds: pop.jump_points(), source: GridSource::PopulationJumps }
    }

    /// Distinct `y` values of the sampled units.
    pub fn sampled_jumps(pop: &Population, draw: &SampleDraw) -> Result<Self> {
        let mut t: Vec<f64> = draw.sampled_indices().iter().map(|&i| pop.y()[i]).collect();
        if t.is_empty() {
            return Err(Error::EmptySample);
        }
        t.sort_by(f64::total_cmp);
        t.dedup();
        Ok(Self { thresholds: t, source: GridSource::SampledJumps })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn source(&self) -> GridSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Ht,
    Hajek,
    TildeHajek,
    Classical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessValues {
    pub grid: IndicatorGrid,
    pub values: Vec<f64>,
    pub kind: ProcessKind,
}

impl ProcessValues {
    pub fn sup_norm(&self) -> f64 {
        sup_norm_stat(self)
    }
}

fn check_lengths(pop: &Population, draw: &SampleDraw, probs: &DesignProbs) -> Result<()> {
    let n = pop.n_units();
    if draw.len() != n || probs.len() != n {
        return Err(Error::Shape(format!(
            "population has {n} units, draw {} and design {}",
            draw.len(),
            probs.len()
        )));
    }
    Ok(())
}

/// For each threshold, the sum of `weight(i)` over units with `y_i <= t`,
/// accumulated in ascending-`y` order. Also returns the unit count per
/// threshold and the grand total (the same accumulation carried to the end).
fn cumulative<F>(pop: &Population, grid: &IndicatorGrid, mut weight: F) -> (Vec<f64>, Vec<usize>, f64)
where
    F: FnMut(usize) -> f64,
{
    let order = pop.order();
    let sorted = pop.sorted_y();
    let mut sums = Vec::with_capacity(grid.len());
    let mut counts = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    let mut k = 0;
    for &t in grid.thresholds() {
        while k < sorted.len() && sorted[k] <= t {
            acc += weight(order[k]);
            k += 1;
        }
        sums.push(acc);
        counts.push(k);
    }
    while k < sorted.len() {
        acc += weight(order[k]);
        k += 1;
    }
    (sums, counts, acc)
}

#[inline]
fn ipw(draw: &SampleDraw, probs: &DesignProbs, i: usize) -> f64 {
    if draw.is_sampled(i) {
        1.0 / probs.pi()[i]
    } else {
        0.0
    }
}

/// Horvitz-Thompson process: `N^{-1/2} sum_i (S_i / pi_i - 1) I(Y_i <= t)`.
pub fn ht_process(
    pop: &Population,
    draw: &SampleDraw,
    probs: &DesignProbs,
    grid: &IndicatorGrid,
) -> Result<ProcessValues> {
    check_lengths(pop, draw, probs)?;
    let (sums, _, _) = cumulative(pop, grid, |i| ipw(draw, probs, i) - 1.0);
    let scale = 1.0 / (pop.n_units() as f64).sqrt();
    Ok(ProcessValues {
        grid: grid.clone(),
        values: sums.into_iter().map(|s| s * scale).collect(),
        kind: ProcessKind::Ht,
    })
}

/// `N_hat = sum_i S_i / pi_i`.
pub fn n_hat(draw: &SampleDraw, probs: &DesignProbs) -> f64 {
    draw.sampled_indices().iter().map(|&i| 1.0 / probs.pi()[i]).sum()
}

/// Hájek process: `sqrt(N) (F_hajek(t) - F_N(t))`.
pub fn hajek_process(
    pop: &Population,
    draw: &SampleDraw,
    probs: &DesignProbs,
    grid: &IndicatorGrid,
) -> Result<ProcessValues> {
    check_lengths(pop, draw, probs)?;
    let (sums, counts, total) = cumulative(pop, grid, |i| ipw(draw, probs, i));
    if total == 0.0 {
        return Err(Error::EmptySample);
    }
    let n = pop.n_units() as f64;
    let root_n = n.sqrt();
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| root_n * (s / total - c as f64 / n))
        .collect();
    Ok(ProcessValues { grid: grid.clone(), values, kind: ProcessKind::Hajek })
}

/// `N^{-1/2} sum_i (S_i / pi_i - 1) (I(Y_i <= t) - F_N(t))`, the linear
/// part of the Hájek process.
pub fn tilde_hajek_process(
    pop: &Population,
    draw: &SampleDraw,
    probs: &DesignProbs,
    grid: &IndicatorGrid,
) -> Result<ProcessValues> {
    check_lengths(pop, draw, probs)?;
    let (sums, counts, total) = cumulative(pop, grid, |i| ipw(draw, probs, i) - 1.0);
    let n = pop.n_units() as f64;
    let scale = 1.0 / n.sqrt();
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| scale * (s - (c as f64 / n) * total))
        .collect();
    Ok(ProcessValues { grid: grid.clone(), values, kind: ProcessKind::TildeHajek })
}

/// Classical process `sqrt(N) (F_N(t) - P(t))` against a caller-supplied
/// reference CDF `P`.
pub fn classical_process<F>(pop: &Population, reference_cdf: F, grid: &IndicatorGrid) -> ProcessValues
where
    F: Fn(f64) -> f64,
{
    let n = pop.n_units() as f64;
    let values = grid
        .thresholds()
        .iter()
        .map(|&t| n.sqrt() * (pop.cdf(t) - reference_cdf(t)))
        .collect();
    ProcessValues { grid: grid.clone(), values, kind: ProcessKind::Classical }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ht,
    Hajek,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 2] = [EstimatorKind::Ht, EstimatorKind::Hajek];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ht => "ht",
            EstimatorKind::Hajek => "hajek",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ht" | "horvitz-thompson" => Ok(EstimatorKind::Ht),
            "hajek" | "hájek" => Ok(EstimatorKind::Hajek),
            _ => Err(Error::Parameter(format!("unknown estimator `{s}` (expected ht or hajek)"))),
        }
    }
}

/// Estimated population CDF on every grid threshold.
///
/// The HT estimate `N^{-1} sum S_i I(Y_i <= t) / pi_i` can exceed one; the
/// Hájek estimate divides by `N_hat` instead and is a proper CDF.
pub fn estimate_cdf_on_grid(
    kind: EstimatorKind,
    pop: &Population,
    draw: &SampleDraw,
    probs: &DesignProbs,
    grid: &IndicatorGrid,
) -> Result<Vec<f64>> {
    check_lengths(pop, draw, probs)?;
    let (sums, _, total) = cumulative(pop, grid, |i| ipw(draw, probs, i));
    match kind {
        EstimatorKind::Ht => {
            let n = pop.n_units() as f64;
            Ok(sums.into_iter().map(|s| s / n).collect())
        }
        EstimatorKind::Hajek => {
            if total == 0.0 {
                return Err(Error::EmptySample);
            }
            Ok(sums.into_iter().map(|s| s / total).collect())
        }
    }
}

/// Single-threshold form of [`estimate_cdf_on_grid`].
pub fn estimate_cdf(
    kind: EstimatorKind,
    pop: &Population,
    draw: &SampleDraw,
    probs: &DesignProbs,
    t: f64,
) -> Result<f64> {
    let grid = IndicatorGrid::new(vec![t], GridSource::Custom)?;
    Ok(estimate_cdf_on_grid(kind, pop, draw, probs, &grid)?[0])
}

/// `max_t |value(t)|` over the grid.
pub fn sup_norm_stat(values: &ProcessValues) -> f64 {
    values.values.iter().fold(0.0, |m, v| m.max(v.abs()))
}
