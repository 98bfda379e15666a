//! Finite populations: synthetic generation under the lognormal linear model,
//! CSV ingestion, and the population distribution function.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{purpose, Stream};

/// Paired study values `y` and positive size values `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    y: Vec<f64>,
    x: Vec<f64>,
    order: Vec<usize>,
    sorted_y: Vec<f64>,
}

impl Population {
    pub fn new(y: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        if y.len() != x.len() {
            return Err(Error::Shape(format!(
                "y has {} values but x has {}",
                y.len(),
                x.len()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("y[{i}] is not finite")));
        }
        if let Some(i) = x.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Parameter(format!(
                "x[{i}] = {} is not strictly positive and finite",
                x[i]
            )));
        }
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
        let sorted_y = order.iter().map(|&i| y[i]).collect();
        Ok(Self { y, x, order, sorted_y })
    }

    pub fn n_units(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Unit indices sorted by ascending `y` (ties by index).
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Study values in ascending order.
    pub fn sorted_y(&self) -> &[f64] {
        &self.sorted_y
    }

    /// Distinct study values in ascending order: the jump points of the CDF.
    pub fn jump_points(&self) -> Vec<f64> {
        let mut out = self.sorted_y.clone();
        out.dedup();
        out
    }

    /// Number of units with `y <= t`.
    pub fn count_at_most(&self, t: f64) -> usize {
        self.sorted_y.partition_point(|&v| v <= t)
    }

    /// `F(t) = #{i : y_i <= t} / N`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.count_at_most(t) as f64 / self.n_units() as f64
    }
}

/// Free-function form of [`Population::cdf`].
pub fn population_cdf(pop: &Population, t: f64) -> f64 {
    pop.cdf(t)
}

/// Superpopulation model `Y = X + U` with `ln X ~ N(log_mean, log_sd^2)` and
/// `U | X ~ N(0, X^(2 p))`, `p = noise_scale_power`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopModel {
    pub log_mean: f64,
    pub log_sd: f64,
    pub noise_scale_power: f64,
}

impl Default for PopModel {
    fn default() -> Self {
        Self { log_mean: 0.0, log_sd: 1.0, noise_scale_power: 1.0 }
    }
}

impl PopModel {
    pub fn validate(&self) -> Result<()> {
        if !self.log_mean.is_finite() {
            return Err(Error::Parameter("log_mean must be finite".into()));
        }
        if !(self.log_sd.is_finite() && self.log_sd >= 0.0) {
            return Err(Error::Parameter("log_sd must be finite and nonnegative".into()));
        }
        if !self.noise_scale_power.is_finite() {
            return Err(Error::Parameter("noise_scale_power must be finite".into()));
        }
        Ok(())
    }

    /// Draws one `(y, x)` pair from the stream: two uniforms, size first.
    #[inline]
    pub fn draw_unit(&self, stream: &mut Stream) -> (f64, f64) {
        let x = (self.log_mean + self.log_sd * stream.std_normal()).exp();
        let noise = x.powf(self.noise_scale_power) * stream.std_normal();
        (x + noise, x)
    }
}

/// Generates `n_units` i.i.d. units from `model`. The output is a pure
/// function of `(model, n_units, seed)`.
pub fn generate_population(model: &PopModel, n_units: usize, seed: u64) -> Result<Population> {
    model.validate()?;
    if n_units == 0 {
        return Err(Error::Parameter("n_units must be at least 1".into()));
    }
    let mut stream = Stream::keyed(seed, &[purpose::POPULATION]);
    let (y, x) = (0..n_units).map(|_| model.draw_unit(&mut stream)).unzip();
    Population::new(y, x)
}

/// Empirical CDF of a large superpopulation draw, used as a stand-in for the
/// unknown law of `Y` when evaluating the classical empirical process.
pub fn monte_carlo_reference_cdf(model: &PopModel, draws: usize, seed: u64) -> Result<Population> {
    generate_population(model, draws, seed)
}

/// Reads a two-column `y,x` CSV. With `has_header` the first record is skipped.
pub fn load_population(path: impl AsRef<Path>, has_header: bool) -> Result<Population> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_population(file, has_header).map_err(|e| match e {
        Error::Row { row, msg, .. } => Error::Row { path: path.to_path_buf(), row, msg },
        other => other,
    })
}

/// Reader form of [`load_population`]. Row numbers in errors are 1-based data
/// rows (the header, if any, is not counted).
pub fn read_population<R: Read>(reader: R, has_header: bool) -> Result<Population> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let bad = |msg: String| Error::Row { path: Default::default(), row, msg };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 2 {
            return Err(bad(format!("expected 2 columns, found {}", rec.len())));
        }
        let yi: f64 = rec[0].parse().map_err(|_| bad(format!("cannot parse y `{}`", &rec[0])))?;
        let xi: f64 = rec[1].parse().map_err(|_| bad(format!("cannot parse x `{}`", &rec[1])))?;
        if !yi.is_finite() {
            return Err(bad(format!("y = {yi} is not finite")));
        }
        if !(xi.is_finite() && xi > 0.0) {
            return Err(bad(format!("x = {xi} must be strictly positive")));
        }
        y.push(yi);
        x.push(xi);
    }
    Population::new(y, x)
}

/// Writes `y,x` with a header row.
pub fn write_population<W: Write>(pop: &Population, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["y", "x"])?;
    for (y, x) in pop.y().iter().zip(pop.x()) {
        w.write_record([y.to_string(), x.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
