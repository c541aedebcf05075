use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rnnattack::attack::{run_attack, AttackConfig, AttackMethod, FixedPointMethod, OptimalConfig};
use rnnattack::eval::evaluate;
use rnnattack::par::Execution;
use rnnattack::sweep::{sweep_experiment, SweepConfig};
use rnnattack::task::{gen_frequency_dataset, FrequencyTaskConfig};
use rnnattack::{CellKind, CellParams, HeadParams, Lifting, Matrix, Model, Vector};

fn model() -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cell = CellParams::random(CellKind::Gru, 2, 1, 1.0, &mut rng);
    let head = HeadParams::new(Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]), Vector::zeros(2)).unwrap();
    Model::new(cell, head, Lifting { delta: 0.1, substeps: 1 }).unwrap()
}

fn execution(c: &mut Criterion) {
    let model = model();
    let data = gen_frequency_dataset(&FrequencyTaskConfig::default(), 64).unwrap();
    let mut g = c.benchmark_group("execution");
    g.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let name = format!("{exec:?}").to_lowercase();
        g.bench_with_input(BenchmarkId::new("evaluate", &name), &exec, |b, &exec| {
            b.iter(|| evaluate(&model, &data, exec).unwrap())
        });
        let cfg = SweepConfig {
            method: AttackMethod::Grad,
            gains: vec![0.0, 0.05, 0.1, 0.2, 0.3],
            attack: AttackConfig::default(),
            optimal: OptimalConfig::default(),
            class_filter: None,
            exec,
        };
        g.bench_with_input(BenchmarkId::new("grad_sweep", &name), &cfg, |b, cfg| {
            b.iter(|| sweep_experiment(&model, &data, cfg).unwrap())
        });
    }
    g.finish();
}

fn methods(c: &mut Criterion) {
    let model = model();
    let data = gen_frequency_dataset(&FrequencyTaskConfig::default(), 2).unwrap();
    let signal = &data.examples[0].signal;
    let h0 = model.initial_state();
    let cfg = AttackConfig {
        alpha: 2.0,
        eps_max: Some(0.25),
        fp_method: FixedPointMethod::Newton,
        fp_max_iters: 400,
        source_class: Some(0),
        substeps: Some(100),
        ..AttackConfig::default()
    };
    let opt = OptimalConfig { restarts: 1, iters: 50, ..OptimalConfig::default() };
    let mut g = c.benchmark_group("attack");
    g.sample_size(10);
    for method in [AttackMethod::Grad, AttackMethod::Dynamic, AttackMethod::Fixed, AttackMethod::Optimal] {
        // the shooting method runs on the model's own lifting
        let cfg = if method == AttackMethod::Optimal { AttackConfig { substeps: None, ..cfg.clone() } } else { cfg.clone() };
        g.bench_function(method.name(), |b| b.iter(|| run_attack(method, &model, signal, &h0, &cfg, &opt).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, execution, methods);
criterion_main!(benches);
