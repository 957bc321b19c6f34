//! Sequential against parallel execution for the hot kernels and for a
//! small Monte Carlo experiment. On a single core the two should be close;
//! the parallel path only pays off with more threads.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fcp_core::experiment::{preset, run_experiment};
use fcp_core::synth::{generate, SynthSpec};
use fcp_core::tensor::{mode_gram, mttkrp_with};
use fcp_core::{DenseTensor, Exec};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const EXECS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn data() -> (DenseTensor, Vec<DMatrix<f64>>) {
    let t = generate(&SynthSpec::new(vec![20; 4], 10, vec![0.5; 4], 10.0, 1)).unwrap().noisy;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let factors = (0..4)
        .map(|_| DMatrix::from_fn(20, 10, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    (t, factors)
}

fn kernels(c: &mut Criterion) {
    let (t, factors) = data();
    let rule = "1,(2,3),4".parse().unwrap();

    let mut g = c.benchmark_group("mttkrp");
    for (name, exec) in EXECS {
        for n in [0, 2] {
            g.bench_with_input(BenchmarkId::new(name, n + 1), &n, |b, &n| {
                b.iter(|| mttkrp_with(&t, &factors, n, exec).unwrap())
            });
        }
    }
    g.finish();

    let mut g = c.benchmark_group("unfold");
    for (name, exec) in EXECS {
        g.bench_function(name, |b| b.iter(|| t.unfold_with(&rule, exec).unwrap()));
    }
    g.finish();

    let mut g = c.benchmark_group("mode_gram");
    for (name, exec) in EXECS {
        g.bench_function(name, |b| b.iter(|| mode_gram(&t, 1, exec)));
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut exp = preset("smoke").unwrap();
    exp.reps = 4;
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    for (name, exec) in EXECS {
        g.bench_function(name, |b| b.iter(|| run_experiment(&exp, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, kernels, monte_carlo);
criterion_main!(benches);
