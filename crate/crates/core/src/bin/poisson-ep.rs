use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use poisson_ep::bands::build_band;
use poisson_ep::covariance::{lindeberg_stat, sigma_double_prime_hat, sigma_prime_hat};
use poisson_ep::design::{draw_sample, inclusion_probs, DesignProbs, SampleDraw};
use poisson_ep::empirical::{estimate_cdf_on_grid, EstimatorKind, GridSource, IndicatorGrid};
use poisson_ep::gausslim::{cholesky_psd, quantile, simulate_sup_norms, JitterPolicy};
use poisson_ep::harness::{expected_size, run_experiment_with, Execution, ExperimentConfig};
use poisson_ep::popgen::{generate_population, load_population, write_population, PopModel, Population};
use poisson_ep::report::{render_plot_data, render_report, ReportFormat};
use poisson_ep::Error;

#[derive(Parser)]
#[command(name = "poisson-ep", version, about = "Uniform CDF bands under Poisson PPS sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population (y = x + u, lognormal x).
    GenPop {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        log_mean: f64,
        #[arg(long, default_value_t = 1.0)]
        log_sd: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_power: f64,
    },
    /// Draw a Poisson PPS sample with expected size floor(alpha N).
    Draw {
        #[arg(long)]
        pop: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Population CSV has no header row.
        #[arg(long)]
        no_header: bool,
    },
    /// Estimate the population CDF at every population jump.
    Estimate {
        #[arg(long)]
        pop: PathBuf,
        #[arg(long)]
        sample: PathBuf,
        #[arg(long, default_value = "hajek")]
        kind: EstimatorKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_header: bool,
    },
    /// Build a uniform confidence band from one sample.
    Bands {
        #[arg(long)]
        pop: PathBuf,
        #[arg(long)]
        sample: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        gamma: f64,
        #[arg(long, default_value = "hajek")]
        kind: EstimatorKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Clamp printed bounds to [0, 1].
        #[arg(long)]
        clip: bool,
        #[arg(long)]
        no_header: bool,
    },
    /// Print the Lindeberg statistic and the range of inclusion probabilities.
    Diagnose {
        #[arg(long)]
        pop: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        lindeberg_eps: f64,
        /// Number of population quantiles used as indicator thresholds.
        #[arg(long, default_value_t = 9)]
        grid_points: usize,
        #[arg(long)]
        no_header: bool,
    },
    /// Run the replicated coverage study.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jsonl: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        emit_plot_data: Option<PathBuf>,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_pop(path: &Path, no_header: bool) -> Result<Population, Error> {
    load_population(path, !no_header)
}

/// Reads a sample file written by `draw` (columns index, y, x, pi, s).
fn load_sample(path: &Path, pop: &Population) -> Result<(DesignProbs, SampleDraw), Error> {
    let mut rdr = csv::Reader::from_path(path)?;
    let n = pop.n_units();
    let mut pi = vec![f64::NAN; n];
    let mut s = vec![false; n];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |msg: &str| Error::Row { path: path.to_path_buf(), row: row + 1, msg: msg.into() };
        let idx: usize = rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad index"))?;
        if idx >= n {
            return Err(bad("index outside the population"));
        }
        pi[idx] = rec.get(3).and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad pi"))?;
        s[idx] = match rec.get(4) {
            Some("1") => true,
            Some("0") => false,
            _ => return Err(bad("s must be 0 or 1")),
        };
    }
    if pi.iter().any(|p| p.is_nan()) {
        return Err(Error::Shape("sample file does not cover every population unit".into()));
    }
    Ok((DesignProbs::from_probabilities(pi)?, SampleDraw::from_indicators(s)))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenPop { n, seed, out, log_mean, log_sd, noise_power } => {
            let model = PopModel { log_mean, log_sd, noise_scale_power: noise_power };
            let pop = generate_population(&model, n, seed)?;
            write_population(&pop, create(&out)?)?;
        }
        Command::Draw { pop, alpha, seed, out, no_header } => {
            let pop = load_pop(&pop, no_header)?;
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1]")));
            }
            let probs = inclusion_probs(pop.x(), expected_size(pop.n_units(), alpha))?;
            let draw = draw_sample(&probs, seed);
            let mut w = csv::Writer::from_writer(create(&out)?);
            w.write_record(["index", "y", "x", "pi", "s"])?;
            for i in 0..pop.n_units() {
                w.write_record([
                    i.to_string(),
                    pop.y()[i].to_string(),
                    pop.x()[i].to_string(),
                    probs.pi()[i].to_string(),
                    (draw.is_sampled(i) as u8).to_string(),
                ])?;
            }
            w.flush()?;
            eprintln!("sampled {} of {} units", draw.realized_size(), pop.n_units());
        }
        Command::Estimate { pop, sample, kind, out, no_header } => {
            let pop = load_pop(&pop, no_header)?;
            let (probs, draw) = load_sample(&sample, &pop)?;
            let grid = IndicatorGrid::population_jumps(&pop);
            let est = estimate_cdf_on_grid(kind, &pop, &draw, &probs, &grid)?;
            let mut w = csv::Writer::from_writer(create(&out)?);
            w.write_record(["t", "estimate"])?;
            for (t, e) in grid.thresholds().iter().zip(&est) {
                w.write_record([t.to_string(), e.to_string()])?;
            }
            w.flush()?;
        }
        Command::Bands { pop, sample, gamma, kind, out, draws, seed, clip, no_header } => {
            let pop = load_pop(&pop, no_header)?;
            let (probs, draw) = load_sample(&sample, &pop)?;
            let sgrid = IndicatorGrid::sampled_jumps(&pop, &draw)?;
            let cov = match kind {
                EstimatorKind::Ht => sigma_prime_hat(&pop, &draw, &probs, &sgrid)?,
                EstimatorKind::Hajek => sigma_double_prime_hat(&pop, &draw, &probs, &sgrid)?,
            };
            let factor = cholesky_psd(&cov, JitterPolicy::default())?;
            let q_hat = quantile(&simulate_sup_norms(&factor, draws, seed)?, gamma)?;
            let grid = IndicatorGrid::population_jumps(&pop);
            let est = estimate_cdf_on_grid(kind, &pop, &draw, &probs, &grid)?;
            let band = build_band(&grid, est, q_hat, pop.n_units(), gamma, kind)?;
            let mut w = csv::Writer::from_writer(create(&out)?);
            w.write_record(["t", "lower", "center", "upper"])?;
            for r in band.rows(clip) {
                w.write_record([r.t.to_string(), r.lower.to_string(), r.center.to_string(), r.upper.to_string()])?;
            }
            w.flush()?;
            eprintln!("q_hat = {q_hat:.6}, width = {:.6}", band.width());
        }
        Command::Diagnose { pop, alpha, lindeberg_eps, grid_points, no_header } => {
            let pop = load_pop(&pop, no_header)?;
            let probs = inclusion_probs(pop.x(), expected_size(pop.n_units(), alpha))?;
            let sorted = pop.sorted_y();
            let k = grid_points.max(1);
            let mut t: Vec<f64> = (1..=k)
                .map(|j| sorted[((j * sorted.len()) / (k + 1)).min(sorted.len() - 1)])
                .collect();
            t.dedup();
            let grid = IndicatorGrid::new(t, GridSource::Custom)?;
            let stat = lindeberg_stat(&pop, &probs, &grid, lindeberg_eps)?;
            println!("units           {}", pop.n_units());
            println!("expected size   {}", probs.target_expected_size());
            println!("cap constant    {}", probs.cap_constant().unwrap_or(f64::NAN));
            println!("min pi          {:e}", probs.min_pi());
            println!("max pi          {}", probs.max_pi());
            println!("lindeberg({lindeberg_eps}) {stat}");
        }
        Command::Experiment { config, out, jsonl, threads, emit_plot_data } => {
            let cfg = ExperimentConfig::load(&config)?;
            #[cfg(feature = "parallel")]
            let exec = match threads {
                Some(1) => Execution::Serial,
                t => Execution::Parallel { threads: t },
            };
            #[cfg(not(feature = "parallel"))]
            let exec = {
                let _ = threads;
                Execution::Serial
            };
            let run = run_experiment_with(&cfg, exec)?;
            let table = render_report(&run.report, &run.records, ReportFormat::TextTable)?;
            std::io::stdout().write_all(&table)?;
            if let Some(p) = out {
                create(&p)?.write_all(&render_report(&run.report, &run.records, ReportFormat::Csv)?)?;
            }
            if let Some(p) = jsonl {
                create(&p)?.write_all(&render_report(&run.report, &run.records, ReportFormat::Jsonl)?)?;
            }
            if let Some(p) = emit_plot_data {
                create(&p)?.write_all(&render_plot_data(&run.report)?)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
