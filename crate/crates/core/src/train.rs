//! Backpropagation through time with Adam.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::cell::{CellKind, CellParams};
use crate::dynamics::{rk4_pullback, rk4_step};
use crate::error::{Error, Result};
use crate::head::{softmax, HeadParams};
use crate::linalg::Vector;
use crate::model::{Lifting, Model};
use crate::signal::SampledSignal;
use crate::task::Dataset;

/// Which recurrence the gradient flows through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// RK4 steps of the lifted field, exactly the map attacks integrate.
    #[default]
    Lifted,
    /// The plain cell recurrence `h ← cell(h, x)`.
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub kind: CellKind,
    pub hidden: usize,
    pub classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Per-epoch multiplicative decay of the learning rate.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Initial weights are uniform on `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Global gradient-norm clip.
    pub grad_clip: Option<f64>,
    /// Number of seeded candidates tried before committing to one.
    pub restarts: usize,
    pub restart_epochs: usize,
    pub lifting: Lifting,
    pub mode: TrainMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: CellKind::Gru,
            hidden: 2,
            classes: 2,
            epochs: 60,
            batch_size: 32,
            learning_rate: 0.05,
            lr_decay: 0.96,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            init_scale: 0.5,
            grad_clip: Some(5.0),
            restarts: 4,
            restart_epochs: 8,
            lifting: Lifting {
                delta: 0.1,
                substeps: 1,
            },
            mode: TrainMode::Lifted,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
}

pub fn init_model(cfg: &TrainConfig, inputs: usize) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cell = CellParams::random(cfg.kind, cfg.hidden, inputs, cfg.init_scale, &mut rng);
    let dist = Uniform::new_inclusive(-cfg.init_scale, cfg.init_scale).map_err(|e| Error::Config(e.to_string()))?;
    let mut head = HeadParams::zeros(cfg.classes, cfg.hidden);
    head.weight.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
    Model::new(cell, head, cfg.lifting)
}

/// Gradient buffers shaped like a model.
#[derive(Debug, Clone)]
pub struct Grads {
    pub cell: CellParams,
    pub head: HeadParams,
}

impl Grads {
    pub fn zeros_like(model: &Model) -> Self {
        Grads {
            cell: model.cell.zeros_like(),
            head: HeadParams::zeros(model.classes(), model.cell.hidden_dim()),
        }
    }

    fn flat(&self) -> Vec<f64> {
        flat(&self.cell, &self.head)
    }
}

fn flat(cell: &CellParams, head: &HeadParams) -> Vec<f64> {
    cell.values()
        .chain(head.weight.iter())
        .chain(head.bias.iter())
        .copied()
        .collect()
}

fn for_each_param(model: &mut Model, mut f: impl FnMut(usize, &mut f64)) {
    let Model { cell, head, .. } = model;
    cell.values_mut()
        .chain(head.weight.iter_mut())
        .chain(head.bias.iter_mut())
        .enumerate()
        .for_each(|(i, v)| f(i, v));
}

/// Cross-entropy of the final-step prediction; accumulates its gradient.
pub fn example_loss_grad(model: &Model, signal: &SampledSignal, label: usize, mode: TrainMode, grads: &mut Grads) -> f64 {
    let field = model.field();
    let sub = model.lifting.substeps;
    let tau = signal.dt() / sub as f64;
    let steps_per = if mode == TrainMode::Lifted { sub } else { 1 };
    let mut states = Vec::with_capacity(signal.len() * steps_per + 1);
    let mut h = model.initial_state();
    states.push(h.clone());
    let inputs: Vec<Vector> = (0..signal.len()).map(|k| signal.sample(k)).collect();
    for x in &inputs {
        for _ in 0..steps_per {
            h = match mode {
                TrainMode::Lifted => rk4_step(&field, &h, x, tau),
                TrainMode::Discrete => model.cell.step_unchecked(&h, x),
            };
            states.push(h.clone());
        }
    }
    let hid = model.cell.readout(&h);
    let mut z = model.head.bias.clone();
    z.gemv(1.0, &model.head.weight, &hid, 1.0);
    let p = softmax(&z);
    let loss = -p[label].max(1e-300).ln();
    let mut dz = p;
    dz[label] -= 1.0;
    grads.head.weight.ger(1.0, &dz, &hid, 1.0);
    grads.head.bias += &dz;
    let mut hbar = model.lift_state_grad(model.head.weight.tr_mul(&dz));
    for (k, x) in inputs.iter().enumerate().rev() {
        for s in (0..steps_per).rev() {
            let h = &states[k * steps_per + s];
            hbar = match mode {
                TrainMode::Lifted => rk4_pullback(&field, h, x, tau, &hbar, Some(&mut grads.cell)).0,
                TrainMode::Discrete => model.cell.pullback_unchecked(h, x, &hbar, Some(&mut grads.cell)).state,
            };
        }
    }
    loss
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    data: &'a Dataset,
    model: Model,
    rng: ChaCha8Rng,
    m1: Vec<f64>,
    m2: Vec<f64>,
    t: i32,
    epoch: usize,
    order: Vec<usize>,
    loss_curve: Vec<f64>,
}

impl<'a> Trainer<'a> {
    fn new(cfg: &'a TrainConfig, data: &'a Dataset, seed: u64) -> Result<Self> {
        let inputs = data.examples[0].signal.channels();
        let model = init_model(&TrainConfig { seed, ..cfg.clone() }, inputs)?;
        let n_params = flat(&model.cell, &model.head).len();
        Ok(Trainer {
            cfg,
            data,
            model,
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(1)),
            m1: vec![0.0; n_params],
            m2: vec![0.0; n_params],
            t: 0,
            epoch: 0,
            order: (0..data.len()).collect(),
            loss_curve: Vec::new(),
        })
    }

    fn run(&mut self, epochs: usize) -> Result<()> {
        let cfg = self.cfg;
        for _ in 0..epochs {
            self.order.shuffle(&mut self.rng);
            let lr = cfg.learning_rate * cfg.lr_decay.powi(self.epoch as i32);
            let mut epoch_loss = 0.0;
            for batch in self.order.chunks(cfg.batch_size) {
                let mut grads = Grads::zeros_like(&self.model);
                for &i in batch {
                    let ex = &self.data.examples[i];
                    epoch_loss += example_loss_grad(&self.model, &ex.signal, ex.spec.label, cfg.mode, &mut grads);
                }
                if !epoch_loss.is_finite() {
                    return Err(Error::TrainingDiverged { epoch: self.epoch });
                }
                let mut g = grads.flat();
                let scale = 1.0 / batch.len() as f64;
                g.iter_mut().for_each(|v| *v *= scale);
                if let Some(c) = cfg.grad_clip {
                    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > c {
                        g.iter_mut().for_each(|v| *v *= c / norm);
                    }
                }
                self.t += 1;
                let bc1 = 1.0 - cfg.beta1.powi(self.t);
                let bc2 = 1.0 - cfg.beta2.powi(self.t);
                let (m1, m2) = (&mut self.m1, &mut self.m2);
                for_each_param(&mut self.model, |i, p| {
                    m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g[i];
                    m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                    *p -= lr * (m1[i] / bc1) / ((m2[i] / bc2).sqrt() + cfg.adam_eps);
                });
            }
            self.loss_curve.push(epoch_loss / self.data.len() as f64);
            self.epoch += 1;
        }
        Ok(())
    }
}

/// Mini-batch Adam on the final-step cross-entropy. With `restarts > 1`,
/// candidates seeded `seed, seed + 1, ...` are each trained for
/// `restart_epochs` and the one with the lowest last-epoch loss continues
/// for the remaining epochs. Single-threaded and deterministic given the seed.
pub fn train(cfg: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) || !(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0) {
        return Err(Error::Config("batch size and learning rate must be positive, lr decay in (0, 1]".into()));
    }
    let warm = cfg.restart_epochs.min(cfg.epochs);
    let mut best: Option<Trainer<'_>> = None;
    for i in 0..cfg.restarts.max(1) as u64 {
        let mut tr = Trainer::new(cfg, data, cfg.seed.wrapping_add(i))?;
        if cfg.restarts > 1 {
            tr.run(warm)?;
        }
        let better = match (&best, tr.loss_curve.last()) {
            (None, _) => true,
            (Some(b), Some(l)) => b.loss_curve.last().is_some_and(|bl| l < bl),
            _ => false,
        };
        if better {
            best = Some(tr);
        }
    }
    let mut tr = best.expect("at least one candidate");
    tr.run(cfg.epochs - tr.epoch)?;
    Ok(TrainOutcome {
        model: tr.model,
        loss_curve: tr.loss_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{gen_frequency_dataset, FrequencyTaskConfig};

    #[test]
    fn zero_epochs_is_initialization() {
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let data = gen_frequency_dataset(&FrequencyTaskConfig::default(), 4).unwrap();
        let out = train(&cfg, &data).unwrap();
        assert_eq!(out.model, init_model(&cfg, 1).unwrap());
        assert!(out.loss_curve.is_empty());
    }
}
