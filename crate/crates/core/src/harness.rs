//! Replicated coverage study for uniform CDF bands under Poisson PPS sampling.
//!
//! One replicate: generate a population, draw a Poisson sample with
//! probabilities proportional to `x` and expected size `floor(alpha N)`,
//! compute the sup-norm errors of the HT and Hájek CDF estimators over the
//! population jumps, estimate the limit covariances on the sampled jumps,
//! simulate the Gaussian limit, and check each band against `F_N`.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::bands::{build_band, covers};
use crate::covariance::{sigma_double_prime_hat, sigma_prime_hat};
use crate::design::{draw_sample, inclusion_probs, DesignProbs, SampleDraw};
use crate::empirical::{
    estimate_cdf_on_grid, hajek_process, ht_process, n_hat, sup_norm_stat, EstimatorKind, IndicatorGrid,
};
use crate::error::{Error, Result};
use crate::gausslim::{cholesky_psd, quantile, simulate_sup_norms_shared, CholFactor, JitterPolicy};
use crate::popgen::{generate_population, PopModel, Population};
use crate::rng::derive_seed;

fn default_inner_draws() -> usize {
    1000
}

fn default_processes() -> Vec<EstimatorKind> {
    EstimatorKind::ALL.to_vec()
}

fn default_jitter() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub population_sizes: Vec<usize>,
    pub sampling_fractions: Vec<f64>,
    pub gammas: Vec<f64>,
    pub replicates: usize,
    #[serde(default = "default_inner_draws")]
    pub inner_draws: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub pop_model: PopModel,
    #[serde(default = "default_processes")]
    pub processes: Vec<EstimatorKind>,
    #[serde(default = "default_jitter")]
    pub jitter_eps_rel: f64,
}

impl ExperimentConfig {
    /// The full coverage study: N in {1000, 2000, 4000}, alpha in
    /// {0.05, 0.10}, gamma in {0.90, 0.95, 0.99}, 1000 replicates and 1000
    /// Gaussian draws each.
    pub fn study_grid(master_seed: u64) -> Self {
        Self {
            population_sizes: vec![1000, 2000, 4000],
            sampling_fractions: vec![0.05, 0.10],
            gammas: vec![0.90, 0.95, 0.99],
            replicates: 1000,
            inner_draws: 1000,
            master_seed,
            pop_model: PopModel::default(),
            processes: default_processes(),
            jitter_eps_rel: default_jitter(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Fractions may equal 1 (a census); gammas must lie in (0, 1).
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.population_sizes.is_empty() || self.sampling_fractions.is_empty() || self.gammas.is_empty() {
            return bad("population_sizes, sampling_fractions and gammas must be nonempty".into());
        }
        for &n in &self.population_sizes {
            for &a in &self.sampling_fractions {
                if !(a > 0.0 && a <= 1.0) {
                    return bad(format!("sampling fraction {a} is outside (0, 1]"));
                }
                if expected_size(n, a) < 1.0 {
                    return bad(format!("N = {n}, alpha = {a} gives an expected sample size below 1"));
                }
            }
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
            return bad(format!("gamma {g} is outside (0, 1)"));
        }
        if self.replicates == 0 || self.inner_draws == 0 {
            return bad("replicates and inner_draws must be at least 1".into());
        }
        if self.processes.is_empty() {
            return bad("processes must name at least one of ht, hajek".into());
        }
        if !(self.jitter_eps_rel >= 0.0 && self.jitter_eps_rel.is_finite()) {
            return bad("jitter_eps_rel must be finite and nonnegative".into());
        }
        self.pop_model.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn cells(&self) -> Vec<Cell> {
        self.population_sizes
            .iter()
            .flat_map(|&n_units| self.sampling_fractions.iter().map(move |&alpha| Cell { n_units, alpha }))
            .collect()
    }

    fn jitter_policy(&self) -> JitterPolicy {
        if self.jitter_eps_rel > 0.0 {
            JitterPolicy::Scaled(self.jitter_eps_rel)
        } else {
            JitterPolicy::None
        }
    }
}

/// `floor(alpha N)`, tolerant of products that land just below an integer.
pub fn expected_size(n_units: usize, alpha: f64) -> f64 {
    (alpha * n_units as f64 + 1e-9).floor()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n_units: usize,
    pub alpha: f64,
}

impl Cell {
    pub fn replicate_seed(&self, master_seed: u64, replicate: usize) -> u64 {
        derive_seed(master_seed, &[self.n_units as u64, self.alpha.to_bits(), replicate as u64])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaOutcome {
    pub gamma: f64,
    pub q_hat: f64,
    pub width: f64,
    pub covered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindOutcome {
    pub kind: EstimatorKind,
    /// Sup-norm distance `||G_N||` over the population jumps.
    pub sup_stat: Option<f64>,
    pub jitter: Option<f64>,
    pub skipped: Option<String>,
    pub gammas: Vec<GammaOutcome>,
}

impl KindOutcome {
    fn skipped(kind: EstimatorKind, sup_stat: Option<f64>, reason: String) -> Self {
        Self { kind, sup_stat, jitter: None, skipped: Some(reason), gammas: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub n_units: usize,
    pub alpha: f64,
    pub replicate: usize,
    pub realized_size: usize,
    pub n_hat: f64,
    pub cap_constant: f64,
    pub outcomes: Vec<KindOutcome>,
}

/// Population and design of one replicate, before the sample is drawn.
pub fn replicate_design(config: &ExperimentConfig, cell: Cell, replicate: usize) -> Result<(Population, DesignProbs)> {
    let seed = cell.replicate_seed(config.master_seed, replicate);
    let pop = generate_population(&config.pop_model, cell.n_units, seed)?;
    let probs = inclusion_probs(pop.x(), expected_size(cell.n_units, cell.alpha))?;
    Ok((pop, probs))
}

/// `||G'_N||` or `||G''_N||` over the population jumps.
pub fn sup_statistic(
    kind: EstimatorKind,
    pop: &Population,
    draw: &SampleDraw,
    probs: &DesignProbs,
    grid: &IndicatorGrid,
) -> Result<f64> {
    let values = match kind {
        EstimatorKind::Ht => ht_process(pop, draw, probs, grid)?,
        EstimatorKind::Hajek => hajek_process(pop, draw, probs, grid)?,
    };
    Ok(sup_norm_stat(&values))
}

pub fn run_replicate(config: &ExperimentConfig, cell: Cell, replicate: usize) -> Result<ReplicateRecord> {
    let seed = cell.replicate_seed(config.master_seed, replicate);
    let (pop, probs) = replicate_design(config, cell, replicate)?;
    let draw = draw_sample(&probs, seed);
    let nh = n_hat(&draw, &probs);
    let mut record = ReplicateRecord {
        n_units: cell.n_units,
        alpha: cell.alpha,
        replicate,
        realized_size: draw.realized_size(),
        n_hat: nh,
        cap_constant: probs.cap_constant().unwrap_or(f64::NAN),
        outcomes: Vec::with_capacity(config.processes.len()),
    };

    let pop_grid = IndicatorGrid::population_jumps(&pop);
    let sample_grid = match IndicatorGrid::sampled_jumps(&pop, &draw) {
        Ok(g) => Some(g),
        Err(Error::EmptySample) => None,
        Err(e) => return Err(e),
    };

    // Factor every requested covariance first so all kinds share the normals.
    let mut pending: Vec<(EstimatorKind, f64, CholFactor)> = Vec::new();
    for &kind in &config.processes {
        let Some(grid) = sample_grid.as_ref() else {
            let stat = match kind {
                EstimatorKind::Ht => Some(sup_statistic(kind, &pop, &draw, &probs, &pop_grid)?),
                EstimatorKind::Hajek => None,
            };
            record.outcomes.push(KindOutcome::skipped(kind, stat, "empty sample".into()));
            continue;
        };
        let stat = sup_statistic(kind, &pop, &draw, &probs, &pop_grid)?;
        let cov = match kind {
            EstimatorKind::Ht => sigma_prime_hat(&pop, &draw, &probs, grid)?,
            EstimatorKind::Hajek => sigma_double_prime_hat(&pop, &draw, &probs, grid)?,
        };
        match cholesky_psd(&cov, config.jitter_policy()) {
            Ok(f) => pending.push((kind, stat, f)),
            Err(e) => record.outcomes.push(KindOutcome::skipped(kind, Some(stat), e.to_string())),
        }
    }

    if !pending.is_empty() {
        let factors: Vec<&CholFactor> = pending.iter().map(|(_, _, f)| f).collect();
        let sims = simulate_sup_norms_shared(&factors, config.inner_draws, seed)?;
        for ((kind, stat, factor), sim) in pending.iter().zip(&sims) {
            let center = estimate_cdf_on_grid(*kind, &pop, &draw, &probs, &pop_grid)?;
            let mut gammas = Vec::with_capacity(config.gammas.len());
            for &gamma in &config.gammas {
                let q_hat = quantile(sim, gamma)?;
                let band = build_band(&pop_grid, center.clone(), q_hat, cell.n_units, gamma, *kind)?;
                gammas.push(GammaOutcome { gamma, q_hat, width: band.width(), covered: covers(&band, &pop) });
            }
            record.outcomes.push(KindOutcome {
                kind: *kind,
                sup_stat: Some(*stat),
                jitter: Some(factor.jitter_applied),
                skipped: None,
                gammas,
            });
        }
    }
    record.outcomes.sort_by_key(|o| o.kind);
    Ok(record)
}

/// How replicates are scheduled. Results are identical for every choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Serial,
    /// Rayon; `None` uses the global pool.
    #[cfg(feature = "parallel")]
    Parallel { threads: Option<usize> },
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        return Execution::Parallel { threads: None };
        #[cfg(not(feature = "parallel"))]
        return Execution::Serial;
    }
}

/// Coverage and band-width summary for one `(N, alpha, gamma, kind)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n_units: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub kind: EstimatorKind,
    pub replicates: usize,
    pub skipped: usize,
    pub coverage: f64,
    pub mean_width: f64,
    pub max_width: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub cells: Vec<CellSummary>,
}

impl ExperimentReport {
    pub fn find(&self, n_units: usize, alpha: f64, gamma: f64, kind: EstimatorKind) -> Option<&CellSummary> {
        self.cells.iter().find(|c| {
            c.n_units == n_units && (c.alpha - alpha).abs() < 1e-12 && (c.gamma - gamma).abs() < 1e-12 && c.kind == kind
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub records: Vec<ReplicateRecord>,
}

fn run_cell(config: &ExperimentConfig, cell: Cell, exec: Execution) -> Result<Vec<ReplicateRecord>> {
    match exec {
        Execution::Serial => (0..config.replicates).map(|r| run_replicate(config, cell, r)).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel { .. } => {
            (0..config.replicates).into_par_iter().map(|r| run_replicate(config, cell, r)).collect()
        }
    }
}

/// Summarizes the records of one cell.
pub fn aggregate(config: &ExperimentConfig, cell: Cell, records: &[ReplicateRecord]) -> Vec<CellSummary> {
    let mut out = Vec::new();
    let mut kinds = config.processes.clone();
    kinds.sort();
    kinds.dedup();
    for kind in kinds {
        for (gi, &gamma) in config.gammas.iter().enumerate() {
            let (mut covered, mut valid, mut sum, mut max) = (0usize, 0usize, 0.0, 0.0_f64);
            for rec in records {
                let Some(o) = rec.outcomes.iter().find(|o| o.kind == kind) else { continue };
                let Some(g) = o.gammas.get(gi) else { continue };
                valid += 1;
                covered += g.covered as usize;
                sum += g.width;
                max = max.max(g.width);
            }
            let (coverage, mean_width, max_width) = if valid > 0 {
                (covered as f64 / valid as f64, sum / valid as f64, max)
            } else {
                (f64::NAN, f64::NAN, f64::NAN)
            };
            out.push(CellSummary {
                n_units: cell.n_units,
                alpha: cell.alpha,
                gamma,
                kind,
                replicates: records.len(),
                skipped: records.len() - valid,
                coverage,
                mean_width,
                max_width,
            });
        }
    }
    out
}

pub fn run_experiment_with(config: &ExperimentConfig, exec: Execution) -> Result<ExperimentRun> {
    config.validate()?;
    let body = || -> Result<ExperimentRun> {
        let mut report = ExperimentReport::default();
        let mut all = Vec::with_capacity(config.replicates * config.cells().len());
        for cell in config.cells() {
            let records = run_cell(config, cell, exec)?;
            report.cells.extend(aggregate(config, cell, &records));
            all.extend(records);
        }
        Ok(ExperimentRun { report, records: all })
    };
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel { threads: Some(k) } => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(body),
        _ => body(),
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    run_experiment_with(config, Execution::default())
}
