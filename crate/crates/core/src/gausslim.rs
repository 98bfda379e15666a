//! Gaussian limit simulation on a finite grid: Cholesky factorization of an
//! estimated covariance, sup norms of `L Z` for standard normal `Z`, and
//! order-statistic quantiles of those sup norms.

use ndarray::{Array2, ArrayView2};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::covariance::{CovKind, CovMatrix};
use crate::error::{Error, Result};
use crate::rng::{purpose, Stream};

/// Draws per independent substream; fixed so that results do not depend on
/// how blocks are spread over threads.
pub const DRAW_BLOCK: usize = 64;

/// Maximum number of doublings of the diagonal shift.
pub const JITTER_DOUBLINGS: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JitterPolicy {
    None,
    /// On pivot failure add `eps_rel * trace / r` to the diagonal, doubling
    /// the shift up to [`JITTER_DOUBLINGS`] times.
    Scaled(f64),
}

impl Default for JitterPolicy {
    fn default() -> Self {
        JitterPolicy::Scaled(1e-10)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CholFactor {
    pub lower: Array2<f64>,
    pub jitter_applied: f64,
    pub source_kind: CovKind,
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// `L L^T`.
    pub fn reconstruct(&self) -> Array2<f64> {
        self.lower.dot(&self.lower.t())
    }
}

/// Row-major lower factor of `a + shift I`, or the failing pivot index.
fn factor(a: ArrayView2<'_, f64>, shift: f64) -> std::result::Result<Array2<f64>, usize> {
    let n = a.nrows();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let (head, tail) = l.split_at_mut(j * n);
        let row_j = &mut tail[..n];
        for i in 0..j {
            let row_i = &head[i * n..i * n + i];
            let dot: f64 = row_i.iter().zip(&row_j[..i]).map(|(x, y)| x * y).sum();
            row_j[i] = (a[[j, i]] - dot) / head[i * n + i];
        }
        let d = a[[j, j]] + shift - row_j[..j].iter().map(|x| x * x).sum::<f64>();
        if !(d > 0.0 && d.is_finite()) {
            return Err(j);
        }
        row_j[j] = d.sqrt();
    }
    Ok(Array2::from_shape_vec((n, n), l).expect("square buffer"))
}

/// Cholesky factorization of a symmetric PSD covariance with optional
/// diagonal jitter. An all-zero matrix yields the zero factor.
pub fn cholesky_psd(matrix: &CovMatrix, policy: JitterPolicy) -> Result<CholFactor> {
    let a = &matrix.entries;
    let n = matrix.dim();
    let max_abs = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !max_abs.is_finite() {
        return Err(Error::Shape("covariance matrix has non-finite entries".into()));
    }
    if matrix.max_asymmetry() > 1e-12 * max_abs.max(1.0) {
        return Err(Error::Shape("covariance matrix is not symmetric".into()));
    }
    let source_kind = matrix.kind;
    if max_abs == 0.0 {
        return Ok(CholFactor { lower: Array2::zeros((n, n)), jitter_applied: 0.0, source_kind });
    }
    let mut sym = matrix.clone();
    sym.symmetrize();

    let pivot = match factor(sym.entries.view(), 0.0) {
        Ok(lower) => return Ok(CholFactor { lower, jitter_applied: 0.0, source_kind }),
        Err(p) => p,
    };
    let JitterPolicy::Scaled(eps_rel) = policy else {
        return Err(Error::Factorization { pivot, jitter: 0.0 });
    };
    let base = eps_rel * sym.trace() / n as f64;
    let mut last = (pivot, 0.0);
    if base > 0.0 {
        for k in 0..=JITTER_DOUBLINGS {
            let jitter = base * f64::from(1u32 << k);
            match factor(sym.entries.view(), jitter) {
                Ok(lower) => return Ok(CholFactor { lower, jitter_applied: jitter, source_kind }),
                Err(p) => last = (p, jitter),
            }
        }
    }
    Err(Error::Factorization { pivot: last.0, jitter: last.1 })
}

/// Ascending sup norms `max_k |(L Z_b)_k|`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupNormSample {
    values: Vec<f64>,
}

impl SupNormSample {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Parameter("sup norms must be finite and nonnegative".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn draws(&self) -> usize {
        self.values.len()
    }

    pub fn quantile(&self, gamma: f64) -> Result<f64> {
        quantile(self, gamma)
    }

    /// `index,value` rows for debugging dumps.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{v}\n", i + 1));
        }
        out
    }
}

/// Standard normal vectors `Z_b` of one block, one per column, filled draw by draw.
fn normal_block(r: usize, draws: usize, seed: u64, block: usize) -> Array2<f64> {
    let start = block * DRAW_BLOCK;
    let cols = DRAW_BLOCK.min(draws - start);
    let mut stream = Stream::keyed(seed, &[purpose::GAUSSIAN, block as u64]);
    let mut z = Array2::<f64>::zeros((r, cols));
    for b in 0..cols {
        for k in 0..r {
            z[[k, b]] = stream.std_normal();
        }
    }
    z
}

/// The simulated vectors `L Z_b` themselves, one per column, in draw order.
pub fn simulate_vectors(factor: &CholFactor, draws: usize, seed: u64) -> Array2<f64> {
    let r = factor.dim();
    let mut out = Array2::<f64>::zeros((r, draws));
    for block in 0..draws.div_ceil(DRAW_BLOCK) {
        let g = factor.lower.dot(&normal_block(r, draws, seed, block));
        let start = block * DRAW_BLOCK;
        out.slice_mut(ndarray::s![.., start..start + g.ncols()]).assign(&g);
    }
    out
}

/// Sup norms for one block of draws, one per factor, all driven by the same
/// normal vectors.
fn simulate_block(factors: &[&CholFactor], r: usize, draws: usize, seed: u64, block: usize) -> Vec<Vec<f64>> {
    let z = normal_block(r, draws, seed, block);
    factors
        .iter()
        .map(|f| {
            let g = f.lower.dot(&z);
            g.columns().into_iter().map(|c| c.iter().fold(0.0_f64, |m, v| m.max(v.abs()))).collect()
        })
        .collect()
}

/// Simulates `draws` sup norms for each factor, sharing the normal vectors
/// across factors. All factors must have the same dimension.
pub fn simulate_sup_norms_shared(factors: &[&CholFactor], draws: usize, seed: u64) -> Result<Vec<SupNormSample>> {
    if draws == 0 {
        return Err(Error::Parameter("draws must be at least 1".into()));
    }
    let Some(first) = factors.first() else {
        return Ok(Vec::new());
    };
    let r = first.dim();
    if factors.iter().any(|f| f.dim() != r) {
        return Err(Error::Shape("factors differ in dimension".into()));
    }
    let blocks = draws.div_ceil(DRAW_BLOCK);
    #[cfg(feature = "parallel")]
    let per_block: Vec<Vec<Vec<f64>>> =
        (0..blocks).into_par_iter().map(|b| simulate_block(factors, r, draws, seed, b)).collect();
    #[cfg(not(feature = "parallel"))]
    let per_block: Vec<Vec<Vec<f64>>> = (0..blocks).map(|b| simulate_block(factors, r, draws, seed, b)).collect();

    (0..factors.len())
        .map(|fi| {
            let values = per_block.iter().flat_map(|b| b[fi].iter().copied()).collect();
            SupNormSample::from_values(values)
        })
        .collect()
}

/// Sup norms of `draws` simulated vectors `L Z_b`, sorted ascending.
pub fn simulate_sup_norms(factor: &CholFactor, draws: usize, seed: u64) -> Result<SupNormSample> {
    Ok(simulate_sup_norms_shared(&[factor], draws, seed)?.remove(0))
}

/// Order-statistic quantile: the `ceil(gamma * B)`-th smallest value
/// (1-based); `gamma = 1` gives the maximum.
pub fn quantile(sample: &SupNormSample, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("gamma = {gamma} must lie in (0, 1]")));
    }
    let b = sample.values.len();
    if b == 0 {
        return Err(Error::Parameter("empty sup-norm sample".into()));
    }
    // Guard against products like 0.95 * 1000 landing one ulp above an integer.
    let rank = ((gamma * b as f64) - 1e-9).ceil().clamp(1.0, b as f64) as usize;
    Ok(sample.values[rank - 1])
}
