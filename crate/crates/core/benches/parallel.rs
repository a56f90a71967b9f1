use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mmlab::bandit::BanditAlgorithm;
use mmlab::envs::monte_carlo_utility;
use mmlab::runner::run_in_memory;
use mmlab::verify::check_kl_bounds;
use mmlab::{BidAskPair, Environment, EnvironmentSpec, ExecMode, LearnerSpec, RunConfig};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn seed_sweep(c: &mut Criterion) {
    let config = RunConfig {
        environment: EnvironmentSpec::HardInstance { big_k: None, k: 1 },
        learner: LearnerSpec::M3 { arms: None },
        horizons: vec![4096],
        seeds: (0..8).collect(),
        output_dir: PathBuf::new(),
        bandit: BanditAlgorithm::Exp3,
        schedule: Default::default(),
        master_seed: 1,
        trajectory_points: 16,
    };
    let mut g = c.benchmark_group("seed_sweep_T4096x8");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_in_memory(black_box(&config), mode).unwrap())
        });
    }
    g.finish();
}

fn kl_audit(c: &mut Criterion) {
    let mut g = c.benchmark_group("kl_audit_K16");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| check_kl_bounds(black_box(16), 1000, 0, mode).unwrap())
        });
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let env = Environment::resolve(&EnvironmentSpec::HardInstance { big_k: None, k: 1 }, 1 << 12).unwrap();
    let pair = BidAskPair::new(0.2, 0.9).unwrap();
    let mut g = c.benchmark_group("monte_carlo_1e5");
    g.sample_size(20);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| monte_carlo_utility(&env, black_box(&pair), 100_000, 7, mode))
        });
    }
    g.finish();
}

criterion_group!(benches, seed_sweep, kl_audit, monte_carlo);
criterion_main!(benches);
