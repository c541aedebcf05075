mod common;

use nalgebra::{dmatrix, dvector};

use common::*;
use rnnattack::attack::{
    dynamic_fixed_point_attack, fixed_point_attack, fixed_point_solve, gradient_sign_attack, optimal_attack,
    shooting_objective, AttackConfig, OptimalConfig, OptimalInit,
};
use rnnattack::bounds::gronwall_envelope;
use rnnattack::dynamics::{input_matrix, integrate};
use rnnattack::{CellKind, CellParams, ContinuousField, Disturbance, HeadParams, Lifting, Model, SampledSignal, Vector};

fn zero_head_model(seed: u64) -> Model {
    let mut r = rng(seed);
    let cell = CellParams::random(CellKind::Gru, 2, 1, 1.0, &mut r);
    Model::new(cell, HeadParams::zeros(2, 2), Lifting { delta: 0.5, substeps: 1 }).unwrap()
}

#[test]
fn flat_readout_gives_no_gradient_sign_perturbation() {
    let model = zero_head_model(1);
    let signal = random_signal(&mut rng(2), 30, 1, 0.1);
    let r = gradient_sign_attack(&model, &signal, &model.initial_state(), &AttackConfig::default()).unwrap();
    assert!(r.perturbation.values().iter().all(|v| *v == 0.0));
    assert_eq!(r.nominal_trajectory.states, r.perturbed_trajectory.states);
    assert!(!r.success);
}

#[test]
fn fixed_point_attack_without_kick_stays_zero() {
    let mut r = rng(3);
    let model = random_model(&mut r, CellKind::Vanilla, 3, 2, 2, 0.5);
    let signal = random_signal(&mut r, 25, 2, 0.1);
    let cfg = AttackConfig { kick: Some(0.0), ..AttackConfig::default() };
    let res = fixed_point_attack(&model, &signal, &model.initial_state(), &cfg).unwrap();
    assert!(res.perturbation.values().iter().all(|v| *v == 0.0));
    assert_eq!(res.nominal_trajectory.states, res.perturbed_trajectory.states);
}

#[test]
fn dynamic_attack_at_rest_stays_at_rest() {
    let mut r = rng(4);
    let model = random_model(&mut r, CellKind::Gru, 2, 1, 2, 0.5);
    let signal = random_signal(&mut r, 25, 1, 0.1);
    let cfg = AttackConfig { kick: Some(0.0), ..AttackConfig::default() };
    let res = dynamic_fixed_point_attack(&model, &signal, &model.initial_state(), &cfg, Some(&Vector::zeros(1))).unwrap();
    assert!(res.perturbation.values().iter().all(|v| *v == 0.0));
    let fine = res.fine.expect("dynamic attack records its fast trace");
    assert!(fine.delta.iter().all(|d| d.iter().all(|v| *v == 0.0)));
}

#[test]
fn fixed_point_iteration_converges_geometrically() {
    let mut r = rng(5);
    let cell = CellParams::random(CellKind::Vanilla, 3, 2, 1.0, &mut r);
    let field = ContinuousField::new(&cell, 1.0);
    let h2 = uniform_vec(&mut r, 3, 0.5);
    let x = uniform_vec(&mut r, 2, 0.5);
    let e = uniform_vec(&mut r, 3, 1.0);
    let fp = fixed_point_solve(|d| input_matrix(&field, &h2, &x, d, 8), &e, 2, 0.01, 1e-14, 100, 1.0).unwrap();
    let ratios: Vec<f64> = fp.steps.windows(2).map(|w| w[1] / w[0]).filter(|q| q.is_finite()).collect();
    assert!(ratios.len() >= 2, "{:?}", fp.steps);
    assert!(ratios.iter().all(|q| *q < 1.0), "{ratios:?}");
    // roughly constant until rounding takes over
    let tail = &ratios[1..ratios.len().min(3)];
    assert!(tail.iter().all(|q| (q / ratios[0]).ln().abs() < 1.0), "{ratios:?}");
}

#[test]
fn optimal_attack_without_incentive_keeps_only_the_penalty() {
    let model = zero_head_model(6);
    let signal = random_signal(&mut rng(7), 10, 1, 0.1);
    let h0 = model.initial_state();
    // plain momentum: the normalised step has a fixed length and cannot settle
    let opt = OptimalConfig {
        init: OptimalInit::Noise,
        normalize: false,
        learning_rate: 10.0,
        iters: 300,
        restarts: 1,
        ..OptimalConfig::default()
    };
    let res = optimal_attack(&model, &signal, &h0, &AttackConfig::default(), &opt).unwrap();
    let (best, initial) = (res.meta.objective_best.unwrap(), res.meta.objective_initial.unwrap());
    assert!(best < initial);
    // uniform probabilities: −V is the constant ȳ − ½
    let penalty = opt.r * res.perturbation.values().norm_squared() * signal.dt();
    assert!((best - (0.4 + penalty)).abs() < 1e-12, "{best} vs {penalty}");
    assert!(res.perturbation.values().amax() < 1e-6, "{}", res.perturbation.values().amax());

    let readout = rnnattack::Readout { class: 1, threshold: 0.9, mode: Default::default(), ascend: true };
    let zero = rnnattack::Matrix::zeros(10, 1);
    let (v, g) = shooting_objective(&model, &signal, &h0, &readout, &zero, opt.r, opt.eps_max, 1).unwrap();
    assert!((v + 0.5 - 0.9).abs() < 1e-15);
    assert!(g.iter().all(|x| *x == 0.0));
}

#[test]
fn gronwall_envelope_vanishes_without_disturbance() {
    let mut r = rng(8);
    let model = random_model(&mut r, CellKind::Gru, 2, 1, 2, 0.5);
    let signal = random_signal(&mut r, 20, 1, 0.1);
    let grid = model.grid_for(&signal);
    let traj = integrate(&model.field(), &model.initial_state(), &signal, Disturbance::None, &grid).unwrap();
    let env = gronwall_envelope(
        &model.field(),
        &Vector::from_element(2, 1.0),
        &traj,
        &traj,
        &signal,
        &SampledSignal::zeros(0.1, 20, 1),
        0.0,
        8,
    )
    .unwrap();
    assert!(env.bound.iter().all(|b| *b == 0.0));
    assert!(env.observed.iter().all(|b| *b == 0.0));
    assert!(env.contains_observed(0.0));
}

#[test]
fn toy_certificate_example() {
    let rep = rnnattack::bounds::vanilla_certificate(
        &dmatrix![4.0],
        &dmatrix![0.0],
        &dvector![0.0],
        &[(0.0, 0.0)],
        &[(-0.1, 0.1)],
    )
    .unwrap();
    let expected = 4.0 - 0.4f64.cosh().powi(2);
    assert!(rep.holds);
    assert!((rep.min_margin - expected).abs() < 1e-12);
    assert!((rep.min_margin - 2.83).abs() < 5e-3);
}
