mod common;

use nalgebra::dmatrix;

use common::*;
use rnnattack::eval::evaluate;
use rnnattack::par::Execution;
use rnnattack::task::{gen_frequency_dataset, Dataset, Example, ExampleSpec, FrequencyTaskConfig};
use rnnattack::train::{example_loss_grad, init_model, train, Grads, TrainConfig, TrainMode};
use rnnattack::{weights, CellKind, CellParams, HeadParams, Lifting, Model, SampledSignal, Vector};

fn small_data(seed: u64, count: usize) -> Dataset {
    gen_frequency_dataset(&FrequencyTaskConfig { seed, length: 40, ..FrequencyTaskConfig::default() }, count).unwrap()
}

fn gd_step(model: &mut Model, g: &Grads, lr: f64) {
    for (p, d) in model.cell.values_mut().zip(g.cell.values()) {
        *p -= lr * d;
    }
    model.head.weight -= &g.head.weight * lr;
    model.head.bias -= &g.head.bias * lr;
}

#[test]
fn single_example_loss_decreases_monotonically() {
    let data = small_data(3, 2);
    for mode in [TrainMode::Lifted, TrainMode::Discrete] {
        let cfg = TrainConfig { mode, ..TrainConfig::default() };
        let mut model = init_model(&cfg, 1).unwrap();
        let ex = &data.examples[1];
        let mut losses = Vec::new();
        for _ in 0..50 {
            let mut g = Grads::zeros_like(&model);
            losses.push(example_loss_grad(&model, &ex.signal, ex.spec.label, mode, &mut g));
            gd_step(&mut model, &g, 0.1);
        }
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{mode:?}: {losses:?}");
        assert!(losses[49] < 0.5 * losses[0], "{mode:?}: {} -> {}", losses[0], losses[49]);
    }
}

#[test]
fn random_models_sit_at_chance() {
    let data = gen_frequency_dataset(&FrequencyTaskConfig { seed: 9, ..FrequencyTaskConfig::default() }, 1000).unwrap();
    for seed in 0..5 {
        let mut r = rng(100 + seed);
        let model = random_model(&mut r, CellKind::Gru, 2, 1, 2, 0.1);
        let rep = evaluate(&model, &data, Execution::Parallel).unwrap();
        assert!((rep.accuracy - 0.5).abs() <= 0.1, "seed {seed}: {}", rep.accuracy);
        assert_eq!(rep.confusion.iter().flatten().sum::<usize>(), 1000);
    }
}

#[test]
fn separating_toy_is_perfect() {
    let cell = CellParams::vanilla(dmatrix![0.0], dmatrix![5.0], Vector::zeros(1)).unwrap();
    let head = HeadParams::new(dmatrix![-1.0; 1.0], Vector::zeros(2)).unwrap();
    let model = Model::new(cell, head, Lifting { delta: 1.0, substeps: 1 }).unwrap();
    let examples = (0..20)
        .map(|i| {
            let label = i % 2;
            let level = if label == 1 { 0.1 + i as f64 * 0.05 } else { -0.1 - i as f64 * 0.05 };
            Example {
                spec: ExampleSpec { label, period: 1.0, phase: 0.0 },
                signal: SampledSignal::scalar(0.1, &[level; 10]).unwrap(),
            }
        })
        .collect();
    let data = Dataset { config: FrequencyTaskConfig::default(), examples };
    let rep = evaluate(&model, &data, Execution::Sequential).unwrap();
    assert_eq!(rep.accuracy, 1.0);
    assert_eq!(rep.confusion, vec![vec![10, 0], vec![0, 10]]);
}

#[test]
fn training_is_reproducible() {
    let data = small_data(4, 64);
    let cfg = TrainConfig { epochs: 3, restarts: 2, restart_epochs: 1, batch_size: 16, seed: 11, ..TrainConfig::default() };
    let a = train(&cfg, &data).unwrap();
    let b = train(&cfg, &data).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.loss_curve, b.loss_curve);
    assert_eq!(a.loss_curve.len(), 3);
    let c = train(&TrainConfig { seed: 12, ..cfg }, &data).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn evaluation_is_self_consistent() {
    let data = small_data(5, 200);
    let cfg = TrainConfig { epochs: 4, restarts: 1, ..TrainConfig::default() };
    let out = train(&cfg, &data).unwrap();
    let seq = evaluate(&out.model, &data, Execution::Sequential).unwrap();
    let par = evaluate(&out.model, &data, Execution::Parallel).unwrap();
    assert_eq!(seq, par);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.json");
    weights::save(&out.model, &path).unwrap();
    let reloaded = weights::load(&path).unwrap();
    assert_eq!(reloaded, out.model);
    assert_eq!(evaluate(&reloaded, &data, Execution::Parallel).unwrap(), seq);
}
