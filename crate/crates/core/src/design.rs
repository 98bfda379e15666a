//! Poisson sampling with capped PPS inclusion probabilities.
//!
//! Inclusion probabilities are `pi_i = min(c * w_i / sum(w), 1)` where the cap
//! constant `c` is chosen so that the expected sample size `sum(pi)` equals a
//! target `n`. The constant is found exactly by water-filling: the largest
//! weights are capped at one in turn until the remaining units can absorb the
//! rest of the target proportionally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{purpose, Stream};

/// First-order inclusion probabilities of a Poisson design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignProbs {
    pi: Vec<f64>,
    cap_constant: Option<f64>,
    target_expected_size: f64,
}

impl DesignProbs {
    /// Wraps explicit probabilities. Zeros are accepted here (test designs);
    /// the target size is set to `sum(pi)` and no cap constant is recorded.
    pub fn from_probabilities(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        if let Some(i) = pi.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain(format!("pi[{i}] = {} is outside [0, 1]", pi[i])));
        }
        let target_expected_size = pi.iter().sum();
        Ok(Self { pi, cap_constant: None, target_expected_size })
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    /// `c_N`, when the probabilities came from [`inclusion_probs`].
    pub fn cap_constant(&self) -> Option<f64> {
        self.cap_constant
    }

    pub fn target_expected_size(&self) -> f64 {
        self.target_expected_size
    }

    pub fn expected_size(&self) -> f64 {
        self.pi.iter().sum()
    }

    pub fn min_pi(&self) -> f64 {
        self.pi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_pi(&self) -> f64 {
        self.pi.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Realized Poisson sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleDraw {
    indicators: Vec<bool>,
    sampled_indices: Vec<usize>,
}

impl SampleDraw {
    pub fn from_indicators(indicators: Vec<bool>) -> Self {
        let sampled_indices = indicators
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| s.then_some(i))
            .collect();
        Self { indicators, sampled_indices }
    }

    pub fn indicators(&self) -> &[bool] {
        &self.indicators
    }

    /// Ascending indices of the sampled units.
    pub fn sampled_indices(&self) -> &[usize] {
        &self.sampled_indices
    }

    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }

    pub fn realized_size(&self) -> usize {
        self.sampled_indices.len()
    }

    pub fn is_sampled(&self, i: usize) -> bool {
        self.indicators[i]
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Parameter(format!(
            "weight[{i}] = {} must be positive and finite",
            weights[i]
        )));
    }
    Ok(())
}

/// Water-fill solution: the cap constant and the smallest capped weight
/// (`None` when nothing is capped).
struct WaterFill {
    cap: f64,
    cap_floor: Option<f64>,
}

fn water_fill(weights: &[f64], target: f64) -> Result<WaterFill> {
    check_weights(weights)?;
    let n = weights.len();
    if !(target.is_finite() && (0.0..=n as f64).contains(&target)) {
        return Err(Error::Domain(format!("target expected size {target} is outside [0, {n}]")));
    }
    if target == 0.0 {
        return Ok(WaterFill { cap: 0.0, cap_floor: None });
    }
    let total: f64 = weights.iter().sum();
    let min_w = weights.iter().copied().fold(f64::INFINITY, f64::min);
    if target == n as f64 {
        return Ok(WaterFill { cap: total / min_w, cap_floor: Some(min_w) });
    }

    let mut desc: Vec<f64> = weights.iter().map(|w| w / total).collect();
    desc.sort_by(|a, b| b.total_cmp(a));
    // tail[k] = sum of desc[k..], accumulated from the small end.
    let mut tail = vec![0.0; n + 1];
    for k in (0..n).rev() {
        tail[k] = tail[k + 1] + desc[k];
    }
    for k in 0..n {
        let cap = (target - k as f64) / tail[k];
        if cap * desc[k] <= 1.0 {
            let cap_floor = (k > 0).then(|| {
                let q = desc[k - 1];
                weights.iter().copied().filter(|w| w / total >= q).fold(f64::INFINITY, f64::min)
            });
            return Ok(WaterFill { cap, cap_floor });
        }
    }
    unreachable!("water fill terminates before every unit is capped when target < N")
}

/// Solves `sum_i min(c * w_i / sum(w), 1) = target` for `c`.
///
/// `target = 0` gives `c = 0`; `target = N` gives the smallest constant that
/// caps every unit, `sum(w) / min(w)`.
pub fn solve_cap_constant(weights: &[f64], target_expected_size: f64) -> Result<f64> {
    water_fill(weights, target_expected_size).map(|wf| wf.cap)
}

/// Capped PPS inclusion probabilities with expected size `target_expected_size > 0`.
pub fn inclusion_probs(weights: &[f64], target_expected_size: f64) -> Result<DesignProbs> {
    if target_expected_size.is_nan() || target_expected_size <= 0.0 {
        return Err(Error::Domain(format!(
            "target expected size must be positive, got {target_expected_size}"
        )));
    }
    let WaterFill { cap, cap_floor } = water_fill(weights, target_expected_size)?;
    let total: f64 = weights.iter().sum();
    let pi = weights
        .iter()
        .map(|&w| match cap_floor {
            Some(floor) if w >= floor => 1.0,
            _ => (cap * w / total).min(1.0),
        })
        .collect();
    Ok(DesignProbs { pi, cap_constant: Some(cap), target_expected_size })
}

/// Draws a Poisson sample: unit `i` is included iff `U_i <= pi_i`.
pub fn draw_sample(probs: &DesignProbs, seed: u64) -> SampleDraw {
    draw_sample_with(probs, &mut Stream::keyed(seed, &[purpose::SAMPLE]))
}

/// [`draw_sample`] consuming one uniform per unit from `stream`.
pub fn draw_sample_with(probs: &DesignProbs, stream: &mut Stream) -> SampleDraw {
    SampleDraw::from_indicators(probs.pi.iter().map(|&p| stream.uniform() <= p).collect())
}

/// Law of the size weight used to solve for the limit constant.
#[derive(Clone, Debug)]
pub enum WeightLaw<'a> {
    /// Equal mass on each listed weight.
    Empirical(&'a [f64]),
    /// Finite discrete law.
    Discrete { values: &'a [f64], probs: &'a [f64] },
}

impl WeightLaw<'_> {
    fn validate(&self) -> Result<()> {
        match self {
            WeightLaw::Empirical(w) => check_weights(w),
            WeightLaw::Discrete { values, probs } => {
                check_weights(values)?;
                if values.len() != probs.len() {
                    return Err(Error::Shape("values and probs differ in length".into()));
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::Parameter("probabilities must be nonnegative".into()));
                }
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::Parameter(format!("probabilities sum to {s}, not 1")));
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            WeightLaw::Empirical(w) => w.iter().sum::<f64>() / w.len() as f64,
            WeightLaw::Discrete { values, probs } => values.iter().zip(*probs).map(|(v, p)| v * p).sum(),
        }
    }

    fn min(&self) -> f64 {
        let vals = match self {
            WeightLaw::Empirical(w) => *w,
            WeightLaw::Discrete { values, .. } => *values,
        };
        vals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `E min(theta * w / E w, 1)`.
    pub fn capped_mean(&self, theta: f64) -> f64 {
        let scale = theta / self.mean();
        match self {
            WeightLaw::Empirical(w) => {
                w.iter().map(|&x| (scale * x).min(1.0)).sum::<f64>() / w.len() as f64
            }
            WeightLaw::Discrete { values, probs } => {
                values.iter().zip(*probs).map(|(&x, p)| p * (scale * x).min(1.0)).sum()
            }
        }
    }
}

/// Solves `E min(theta * w / E w, 1) = alpha` by bisection, iterating until
/// the bracket cannot shrink further in floating point.
pub fn solve_theta(alpha: f64, law: &WeightLaw<'_>) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    law.validate()?;
    let mut lo = 0.0_f64;
    // At theta = E w / min w every unit is capped.
    let mut hi = law.mean() / law.min();
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if law.capped_mean(mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Capped weight `min(w, E w / theta)`.
#[inline]
pub fn w_theta(weight: f64, theta: f64, mean_weight: f64) -> f64 {
    weight.min(mean_weight / theta)
}

/// Largest population for which [`enumerate_design`] builds the full table.
pub const ENUMERATION_LIMIT: usize = 20;

/// Every sample of a small population together with its design probability.
///
/// Atom `k` is the sample whose indicator string `s_1 s_2 ... s_N`, read as a
/// binary number with `s_1` most significant, equals `k`.
#[derive(Clone, Debug)]
pub struct DesignOracle {
    n_units: usize,
    atoms: Vec<f64>,
}

impl DesignOracle {
    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn atom_probabilities(&self) -> &[f64] {
        &self.atoms
    }

    /// Indicator vector of atom `k`.
    pub fn atom(&self, k: usize) -> SampleDraw {
        let n = self.n_units;
        SampleDraw::from_indicators((0..n).map(|i| (k >> (n - 1 - i)) & 1 == 1).collect())
    }

    /// Maps a single uniform `d` in (0, 1] to a sample by walking the
    /// cumulative atom probabilities in atom order.
    pub fn select(&self, d: f64) -> SampleDraw {
        let mut acc = 0.0;
        for (k, p) in self.atoms.iter().enumerate() {
            acc += p;
            if d <= acc {
                return self.atom(k);
            }
        }
        // d exceeded the rounded total; take the last atom with positive mass.
        let last = self.atoms.iter().rposition(|&p| p > 0.0).unwrap_or(self.atoms.len() - 1);
        self.atom(last)
    }
}

/// Enumerates all `2^N` samples of a Poisson design.
pub fn enumerate_design(probs: &DesignProbs) -> Result<DesignOracle> {
    let n = probs.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::TooLarge { n, limit: ENUMERATION_LIMIT });
    }
    let mut atoms = vec![1.0; 1 << n];
    for (k, atom) in atoms.iter_mut().enumerate() {
        for (i, &p) in probs.pi.iter().enumerate() {
            *atom *= if (k >> (n - 1 - i)) & 1 == 1 { p } else { 1.0 - p };
        }
    }
    Ok(DesignOracle { n_units: n, atoms })
}

/// Exact design expectation `sum_s statistic(s) * p(s)`. Atoms with zero
/// probability are skipped so statistics undefined on them are never evaluated.
pub fn design_expectation<F>(oracle: &DesignOracle, mut statistic: F) -> f64
where
    F: FnMut(&SampleDraw) -> f64,
{
    oracle
        .atoms
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(k, &p)| p * statistic(&oracle.atom(k)))
        .sum()
}
