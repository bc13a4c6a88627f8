use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion as Bench};

use regime_hmm::data_io::{generate_synthetic, RegimeSpec};
use regime_hmm::features::{FeatureConfig, FeatureMatrix};
use regime_hmm::hmm::forward_backward;
use regime_hmm::model_selection::{select_states, Criterion};
use regime_hmm::training::{fit, PriorConfig, TrainConfig};
use regime_hmm::{Execution, ObservationMatrix};

fn planted_features(n: usize) -> ObservationMatrix {
    let (series, _) = generate_synthetic(&RegimeSpec::preset("planted", n, 7).unwrap()).unwrap();
    let features = FeatureMatrix::build(&series.returns, FeatureConfig::new(30).unwrap(), 0..n).unwrap();
    features.training_observations(0..n).unwrap()
}

fn config(execution: Execution) -> TrainConfig {
    TrainConfig {
        max_iterations: 50,
        num_restarts: 8,
        seed: 1,
        execution,
        ..TrainConfig::default()
    }
}

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn restarts(c: &mut Bench) {
    let obs = planted_features(2_000);
    let prior = PriorConfig::default();
    let mut group = c.benchmark_group("fit_restarts");
    group.sample_size(10);
    for (name, execution) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| fit(black_box(&obs), 3, &prior, &config(execution)).unwrap())
        });
    }
    group.finish();
}

fn state_sweep(c: &mut Bench) {
    let obs = planted_features(2_000);
    let prior = PriorConfig::default();
    let mut group = c.benchmark_group("select_states");
    group.sample_size(10);
    for (name, execution) in MODES {
        let cfg = TrainConfig {
            num_restarts: 2,
            ..config(execution)
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| select_states(black_box(&obs), &[1, 2, 3, 4, 5], Criterion::Bic, &prior, &cfg).unwrap())
        });
    }
    group.finish();
}

fn posteriors(c: &mut Bench) {
    let mut group = c.benchmark_group("forward_backward");
    for n in [1_000usize, 10_000] {
        let obs = planted_features(n);
        let model = fit(&obs, 3, &PriorConfig::default(), &config(Execution::Sequential)).unwrap().model;
        group.bench_with_input(BenchmarkId::from_parameter(n), &obs, |b, obs| {
            b.iter(|| forward_backward(&model, black_box(obs)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, restarts, state_sweep, posteriors);
criterion_main!(benches);
