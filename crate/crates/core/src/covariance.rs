//! Design covariances of the HT and Hájek processes over indicator grids.
//!
//! For Poisson designs the indicators are independent, so the design
//! covariance of the HT process reduces to
//! `Sigma'_N(s, t) = N^{-1} sum_i (1 - pi_i) / pi_i I(Y_i <= s) I(Y_i <= t)`.
//! Because the class is nested (`I(y <= s) I(y <= t) = I(y <= min(s, t))`),
//! every matrix here is assembled from one cumulative sum over the units
//! sorted by `y`, in `O(N log N + r^2)`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::design::{w_theta, DesignProbs, SampleDraw};
use crate::empirical::IndicatorGrid;
use crate::error::{Error, Result};
use crate::popgen::Population;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovKind {
    SigmaPrimeHat,
    SigmaDoublePrimeHat,
    SigmaPrimeN,
    Limit,
}

/// Symmetric covariance matrix indexed by an indicator grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CovMatrix {
    pub entries: Array2<f64>,
    pub grid: IndicatorGrid,
    pub kind: CovKind,
}

impl CovMatrix {
    pub fn new(entries: Array2<f64>, grid: IndicatorGrid, kind: CovKind) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c || r != grid.len() {
            return Err(Error::Shape(format!(
                "{r}x{c} matrix does not match a grid of {} points",
                grid.len()
            )));
        }
        Ok(Self { entries, grid, kind })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.diag().sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let a = &self.entries;
        let mut worst = 0.0_f64;
        for i in 0..self.dim() {
            for j in 0..i {
                worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
            }
        }
        worst
    }

    /// Replaces the matrix by `(A + A^T) / 2`.
    pub fn symmetrize(&mut self) {
        let n = self.dim();
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (self.entries[[i, j]] + self.entries[[j, i]]);
                self.entries[[i, j]] = m;
                self.entries[[j, i]] = m;
            }
        }
    }

    /// True when every eigenvalue is at least `-tol_rel * trace`, decided by
    /// attempting a Cholesky factorization of `A + tol_rel * |trace| I`.
    pub fn is_psd(&self, tol_rel: f64) -> bool {
        let n = self.dim();
        let shift = tol_rel * self.trace().abs();
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = self.entries[[j, j]] + shift;
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if d < 0.0 || !d.is_finite() {
                return false;
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in j + 1..n {
                let mut s = self.entries[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = if d > 0.0 { s / d } else { 0.0 };
            }
        }
        true
    }
}

fn check_lengths(pop: &Population, probs: &DesignProbs, draw: Option<&SampleDraw>) -> Result<()> {
    let n = pop.n_units();
    if probs.len() != n || draw.is_some_and(|d| d.len() != n) {
        return Err(Error::Shape("population, design and draw lengths differ".into()));
    }
    Ok(())
}

/// Cumulative sums of a unit weight over the units with `y <= t` for each
/// grid threshold, accumulated in ascending-`y` order, plus the grand total.
fn cumulative<F: Fn(usize) -> f64>(pop: &Population, grid: &IndicatorGrid, weight: F) -> (Vec<f64>, f64) {
    let order = pop.order();
    let sorted = pop.sorted_y();
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    let mut k = 0;
    for &t in grid.thresholds() {
        while k < sorted.len() && sorted[k] <= t {
            acc += weight(order[k]);
            k += 1;
        }
        out.push(acc);
    }
    while k < sorted.len() {
        acc += weight(order[k]);
        k += 1;
    }
    (out, acc)
}

/// Matrix `m[i][j] = scale * cum[min(i, j)]` (grid is ascending).
fn min_kernel(cum: &[f64], scale: f64) -> Array2<f64> {
    let r = cum.len();
    Array2::from_shape_fn((r, r), |(i, j)| scale * cum[i.min(j)])
}

/// Exact design covariance `E_d G'_N f G'_N g` of the HT process.
pub fn sigma_prime_n(pop: &Population, probs: &DesignProbs, grid: &IndicatorGrid) -> Result<CovMatrix> {
    check_lengths(pop, probs, None)?;
    let pi = probs.pi();
    let (cum, _) = cumulative(pop, grid, |i| (1.0 - pi[i]) / pi[i]);
    let entries = min_kernel(&cum, 1.0 / pop.n_units() as f64);
    CovMatrix::new(entries, grid.clone(), CovKind::SigmaPrimeN)
}

#[inline]
fn hat_weight(draw: &SampleDraw, pi: &[f64], i: usize) -> f64 {
    if draw.is_sampled(i) {
        (1.0 - pi[i]) / (pi[i] * pi[i])
    } else {
        0.0
    }
}

/// HT-weighted estimator of `Sigma'_N`:
/// `N^{-1} sum_k S_k (1 - pi_k) / pi_k^2 I(Y_k <= s) I(Y_k <= t)`.
pub fn sigma_prime_hat(
    pop: &Population,
    draw: &SampleDraw,
    probs: &DesignProbs,
    grid: &IndicatorGrid,
) -> Result<CovMatrix> {
    check_lengths(pop, probs, Some(draw))?;
    let pi = probs.pi();
    let (cum, _) = cumulative(pop, grid, |i| hat_weight(draw, pi, i));
    let entries = min_kernel(&cum, 1.0 / pop.n_units() as f64);
    CovMatrix::new(entries, grid.clone(), CovKind::SigmaPrimeHat)
}

/// Estimator of the Hájek-process covariance with Hájek-centred indicators,
/// normalized by `N_hat`.
pub fn sigma_double_prime_hat(
    pop: &Population,
    draw: &SampleDraw,
    probs: &DesignProbs,
    grid: &IndicatorGrid,
) -> Result<CovMatrix> {
    check_lengths(pop, probs, Some(draw))?;
    let pi = probs.pi();
    let (a, a_tot) = cumulative(pop, grid, |i| hat_weight(draw, pi, i));
    let (b, n_hat) = cumulative(pop, grid, |i| if draw.is_sampled(i) { 1.0 / pi[i] } else { 0.0 });
    if n_hat == 0.0 {
        return Err(Error::EmptySample);
    }
    let mean: Vec<f64> = b.iter().map(|v| v / n_hat).collect();
    let r = grid.len();
    let mut entries = Array2::<f64>::zeros((r, r));
    for i in 0..r {
        for j in i..r {
            // sum_k a_k (I_ki - m_i)(I_kj - m_j) for t_i <= t_j, grouped so
            // that a threshold covering every sampled unit (m = 1) cancels exactly.
            let v = ((a[i] - mean[i] * a[j]) - mean[j] * (a[i] - mean[i] * a_tot)) / n_hat;
            entries[[i, j]] = v;
            entries[[j, i]] = v;
        }
    }
    CovMatrix::new(entries, grid.clone(), CovKind::SigmaDoublePrimeHat)
}

/// Limit-law quantities: the constant `theta` and the mean weight `E w`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitModel {
    pub theta: f64,
    pub mean_weight: f64,
}

impl LimitModel {
    fn check(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.mean_weight > 0.0) {
            return Err(Error::Domain("theta and mean weight must be positive".into()));
        }
        Ok(())
    }

    /// `w_theta (E w / theta - w_theta) / w_theta^2`.
    #[inline]
    fn kernel(&self, w: f64) -> f64 {
        let wt = w_theta(w, self.theta, self.mean_weight);
        wt * (self.mean_weight / self.theta - wt) / (wt * wt)
    }
}

/// Joint draws of `(Y, w(X))` used for plug-in limit expectations.
#[derive(Clone, Copy, Debug)]
pub struct JointSample<'a> {
    pub y: &'a [f64],
    pub w: &'a [f64],
}

impl<'a> JointSample<'a> {
    pub fn new(y: &'a [f64], w: &'a [f64]) -> Result<Self> {
        if y.len() != w.len() || y.is_empty() {
            return Err(Error::Shape("joint sample must be nonempty with equal lengths".into()));
        }
        Ok(Self { y, w })
    }

    fn len(&self) -> f64 {
        self.y.len() as f64
    }

    fn cdf(&self, t: f64) -> f64 {
        self.y.iter().filter(|&&y| y <= t).count() as f64 / self.len()
    }
}

#[inline]
fn ind(y: f64, t: f64) -> f64 {
    if y <= t {
        1.0
    } else {
        0.0
    }
}

/// Plug-in limit covariance of the HT process at `(s, t)`.
pub fn sigma_prime_limit(s: f64, t: f64, model: LimitModel, sample: JointSample<'_>) -> Result<f64> {
    model.check()?;
    let sum: f64 = sample
        .y
        .iter()
        .zip(sample.w)
        .map(|(&y, &w)| model.kernel(w) * ind(y, s) * ind(y, t))
        .sum();
    Ok(sum / sample.len())
}

/// Plug-in limit covariance of the Hájek process at `(s, t)`: indicators are
/// centred at the joint sample's own CDF.
pub fn sigma_double_prime_limit(s: f64, t: f64, model: LimitModel, sample: JointSample<'_>) -> Result<f64> {
    model.check()?;
    let (fs, ft) = (sample.cdf(s), sample.cdf(t));
    let sum: f64 = sample
        .y
        .iter()
        .zip(sample.w)
        .map(|(&y, &w)| model.kernel(w) * (ind(y, s) - fs) * (ind(y, t) - ft))
        .sum();
    Ok(sum / sample.len())
}

/// Limit covariance matrix over a grid (HT form, or Hájek form when `centred`).
pub fn limit_matrix(
    grid: &IndicatorGrid,
    model: LimitModel,
    sample: JointSample<'_>,
    centred: bool,
) -> Result<CovMatrix> {
    let t = grid.thresholds();
    let r = t.len();
    let mut entries = Array2::<f64>::zeros((r, r));
    for i in 0..r {
        for j in i..r {
            let v = if centred {
                sigma_double_prime_limit(t[i], t[j], model, sample)?
            } else {
                sigma_prime_limit(t[i], t[j], model, sample)?
            };
            entries[[i, j]] = v;
            entries[[j, i]] = v;
        }
    }
    CovMatrix::new(entries, grid.clone(), CovKind::Limit)
}

/// Intrinsic semimetric of the HT limit, `sqrt(Sigma'(f - g, f - g))`,
/// obtained from the limit covariance by bilinearity.
pub fn rho_prime(s: f64, t: f64, model: LimitModel, sample: JointSample<'_>) -> Result<f64> {
    let ss = sigma_prime_limit(s, s, model, sample)?;
    let st = sigma_prime_limit(s, t, model, sample)?;
    let tt = sigma_prime_limit(t, t, model, sample)?;
    Ok((ss - 2.0 * st + tt).max(0.0).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemimetricKind {
    /// `L2` distance between the indicators.
    Rho,
    /// `L2` distance after centring at the expectation.
    RhoC,
    /// `L2` distance of the indicators divided by the capped weight.
    RhoW,
}

/// Empirical semimetric between `I(y <= s)` and `I(y <= t)` over `sample`.
/// `model` is only consulted for [`SemimetricKind::RhoW`].
pub fn semimetric(
    kind: SemimetricKind,
    s: f64,
    t: f64,
    sample: JointSample<'_>,
    model: LimitModel,
) -> Result<f64> {
    let m = sample.len();
    let diffs = sample.y.iter().map(|&y| ind(y, s) - ind(y, t));
    let sq = match kind {
        SemimetricKind::Rho => diffs.map(|d| d * d).sum::<f64>() / m,
        SemimetricKind::RhoC => {
            let d: Vec<f64> = diffs.collect();
            let mean = d.iter().sum::<f64>() / m;
            d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m
        }
        SemimetricKind::RhoW => {
            model.check()?;
            diffs
                .zip(sample.w)
                .map(|(d, &w)| (d / w_theta(w, model.theta, model.mean_weight)).powi(2))
                .sum::<f64>()
                / m
        }
    };
    Ok(sq.sqrt())
}

/// Lindeberg statistic for the indicator vector `f = (I(y <= t_1), ..., I(y <= t_r))`:
/// `N^{-1} sum_i (1 - pi_i) / pi_i |f(Y_i)|^2 I(|f(Y_i)| > pi_i sqrt(N) eps)`.
pub fn lindeberg_stat(pop: &Population, probs: &DesignProbs, grid: &IndicatorGrid, epsilon: f64) -> Result<f64> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Domain(format!("epsilon = {epsilon} must be positive")));
    }
    check_lengths(pop, probs, None)?;
    let t = grid.thresholds();
    let root_n = (pop.n_units() as f64).sqrt();
    let sum: f64 = pop
        .y()
        .iter()
        .zip(probs.pi())
        .map(|(&y, &p)| {
            // Number of thresholds t with y <= t.
            let sq_norm = (t.len() - t.partition_point(|&v| v < y)) as f64;
            if sq_norm.sqrt() > p * root_n * epsilon {
                (1.0 - p) / p * sq_norm
            } else {
                0.0
            }
        })
        .sum();
    Ok(sum / pop.n_units() as f64)
}
