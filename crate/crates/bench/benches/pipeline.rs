use criterion::{criterion_group, criterion_main, Criterion};

use drpolicy_bench::random_instance;
use drpolicy_core::{
    fit_honest_forest, learn_policy, simulate_iv, ForestParams, NuisanceLearnerSpec,
    PipelineConfig, ScoreFamily, TauSpec,
};

fn bench_forest_fit(c: &mut Criterion) {
    let (x, y) = random_instance(2000, 10, 3);
    let params = ForestParams { num_trees: 50, ..ForestParams::default() };
    c.bench_function("honest_forest_fit_n2000_t50", |b| {
        b.iter(|| fit_honest_forest(&x, &y, None, &params, 7).unwrap().num_trees())
    });
}

fn bench_learn_pipeline(c: &mut Criterion) {
    let (data, _) = simulate_iv(1000, &TauSpec::Product, 5).unwrap();
    let cfg = PipelineConfig {
        family: ScoreFamily::Iv,
        learner: NuisanceLearnerSpec::HonestForest(ForestParams {
            num_trees: 50,
            ..ForestParams::default()
        }),
        depth: 2,
        k: 5,
        delta_min: 1e-3,
        ..PipelineConfig::default()
    };
    let mut group = c.benchmark_group("learn_pipeline_iv_n1000");
    group.sample_size(10);
    group.bench_function("forest_depth2", |b| {
        b.iter(|| learn_policy(&data, &cfg, 11).unwrap().objective)
    });
    group.finish();
}

criterion_group!(benches, bench_forest_fit, bench_learn_pipeline);
criterion_main!(benches);
