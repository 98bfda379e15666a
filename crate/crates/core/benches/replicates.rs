use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use poisson_ep::covariance::sigma_prime_hat;
use poisson_ep::design::{draw_sample, inclusion_probs};
use poisson_ep::empirical::IndicatorGrid;
use poisson_ep::gausslim::{cholesky_psd, simulate_sup_norms, JitterPolicy};
use poisson_ep::harness::{run_experiment_with, Execution, ExperimentConfig};
use poisson_ep::popgen::{generate_population, PopModel};

fn config(n: usize) -> ExperimentConfig {
    ExperimentConfig {
        population_sizes: vec![n],
        sampling_fractions: vec![0.05],
        gammas: vec![0.90, 0.95, 0.99],
        replicates: 16,
        inner_draws: 1000,
        master_seed: 1,
        pop_model: PopModel::default(),
        processes: poisson_ep::empirical::EstimatorKind::ALL.to_vec(),
        jitter_eps_rel: 1e-10,
    }
}

fn bench_experiment(c: &mut Criterion) {
    let mut group = c.benchmark_group("experiment");
    group.sample_size(10);
    for n in [1000, 2000] {
        let cfg = config(n);
        group.bench_with_input(BenchmarkId::new("serial", n), &cfg, |b, cfg| {
            b.iter(|| run_experiment_with(cfg, Execution::Serial).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &cfg, |b, cfg| {
            b.iter(|| run_experiment_with(cfg, Execution::Parallel { threads: None }).unwrap())
        });
    }
    group.finish();
}

fn bench_gaussian(c: &mut Criterion) {
    let pop = generate_population(&PopModel::default(), 4000, 3).unwrap();
    let probs = inclusion_probs(pop.x(), 400.0).unwrap();
    let draw = draw_sample(&probs, 3);
    let grid = IndicatorGrid::sampled_jumps(&pop, &draw).unwrap();
    let cov = sigma_prime_hat(&pop, &draw, &probs, &grid).unwrap();
    let mut group = c.benchmark_group("gaussian_limit");
    group.sample_size(10);
    group.bench_function("cholesky_r400", |b| b.iter(|| cholesky_psd(&cov, JitterPolicy::default()).unwrap()));
    let factor = cholesky_psd(&cov, JitterPolicy::default()).unwrap();
    group.bench_function("sup_norms_r400_b1000", |b| b.iter(|| simulate_sup_norms(&factor, 1000, 7).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_experiment, bench_gaussian);
criterion_main!(benches);
