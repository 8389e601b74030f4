//! TMLE and a small scenario matrix, on the full rayon pool and on a single
//! thread. Without the `parallel` feature only the sequential rows run.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use lmtp::estimators::{estimate, EstimatorConfig, EstimatorKind};
use lmtp::learners::{LearnerSpec, StackSpec};
use lmtp::policy::Policy;
use lmtp::simulation::{oracle_exact, presets, run_scenario_matrix, sample_dgp, Scenario};

fn config() -> EstimatorConfig {
    EstimatorConfig::new(
        StackSpec::new(vec![LearnerSpec::glm(true), LearnerSpec::glm(true).saturated()]),
        StackSpec::single(LearnerSpec::glm(true)),
    )
}

fn on_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            b = b.num_threads(t);
        }
        b.build().unwrap().install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

fn bench(c: &mut Criterion) {
    let spec = presets::two_period();
    let policy = Policy::static_value(1.0);
    let data = sample_dgp(&spec, 5_000, 1).unwrap();
    let truth = oracle_exact(&spec, &policy).unwrap();
    let cfg = config();
    let modes: &[(&str, Option<usize>)] = if cfg!(feature = "parallel") {
        &[("rayon", None), ("sequential", Some(1))]
    } else {
        &[("sequential", Some(1))]
    };

    let mut g = c.benchmark_group("tmle-two-period-n5000");
    g.sample_size(10);
    for &(name, threads) in modes {
        g.bench_function(name, |b| {
            b.iter_batched(
                || (),
                |_| on_pool(threads, || estimate(EstimatorKind::Tmle, &data, &policy, &cfg).unwrap()),
                BatchSize::PerIteration,
            )
        });
    }
    g.finish();

    let mut g = c.benchmark_group("scenario-matrix-20x1000");
    g.sample_size(10);
    let scenarios = [Scenario::correct("all-correct")];
    for &(name, threads) in modes {
        g.bench_function(name, |b| {
            b.iter(|| {
                on_pool(threads, || {
                    run_scenario_matrix(&spec, &policy, &scenarios, 1_000, 20, &[EstimatorKind::Sdr], &cfg, truth, 3).unwrap()
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
