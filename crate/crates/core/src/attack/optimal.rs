use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attack::{check_inputs, gradient_sign_attack, resolve_goal, AttackConfig, AttackMethod, AttackResult, PairRecorder};
use crate::dynamics::{rk4_pullback, rk4_step};
use crate::error::{check_dim, Error, Result};
use crate::head::Readout;
use crate::linalg::{argmax, Matrix, Vector};
use crate::model::Model;
use crate::signal::SampledSignal;

/// Starting point of the shooting iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OptimalInit {
    /// Seeded Gaussian raw samples of standard deviation `init_scale`.
    Noise,
    /// The gradient-sign sequence at gain `ε_max`, mapped to raw samples at
    /// `warm_fraction` of the bound, plus the seeded noise.
    #[default]
    GradientSign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimalConfig {
    /// Weight of the quadratic effort penalty (scalar times identity).
    pub r: f64,
    pub eps_max: f64,
    pub iters: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Divide each gradient by its ∞-norm before the momentum update, so the
    /// step size does not depend on how saturated the softmax is.
    pub normalize: bool,
    /// Standard deviation of the seeded initial raw perturbation.
    pub init_scale: f64,
    pub init: OptimalInit,
    /// Independent starts with seeds `seed, seed + 1, ...`; the best iterate
    /// over all of them is returned.
    pub restarts: usize,
    /// Fraction of `ε_max` the warm start begins at, in `(0, 1)`.
    pub warm_fraction: f64,
    pub seed: u64,
}

impl Default for OptimalConfig {
    fn default() -> Self {
        OptimalConfig {
            r: 1.0,
            eps_max: 0.15,
            iters: 200,
            learning_rate: 0.5,
            momentum: 0.9,
            normalize: true,
            init_scale: 1.0,
            init: OptimalInit::GradientSign,
            restarts: 4,
            warm_fraction: 0.9,
            seed: 0,
        }
    }
}

/// Shooting objective `−V(h_T) + R Σ_k ‖ε tanh(δ_k)‖² dt` and its gradient
/// with respect to the raw samples `δ` (`T x m`), by a discrete adjoint sweep
/// through the RK4 steps.
#[allow(clippy::too_many_arguments)]
pub fn shooting_objective(
    model: &Model,
    signal: &SampledSignal,
    h0: &Vector,
    readout: &Readout,
    raw: &Matrix,
    r: f64,
    eps_max: f64,
    substeps: usize,
) -> Result<(f64, Matrix)> {
    check_dim("raw perturbation rows", signal.len(), raw.nrows())?;
    check_dim("raw perturbation columns", signal.channels(), raw.ncols())?;
    let field = model.field();
    let dt = signal.dt();
    let tau = dt / substeps as f64;
    let t = signal.len();
    let th = raw.map(f64::tanh);

    let inputs: Vec<Vector> = (0..t)
        .map(|k| signal.sample(k) + th.row(k).transpose() * eps_max)
        .collect();
    let mut states = Vec::with_capacity(t * substeps + 1);
    let mut h = h0.clone();
    states.push(h.clone());
    for (k, u) in inputs.iter().enumerate() {
        for s in 0..substeps {
            h = rk4_step(&field, &h, u, tau);
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    time: k as f64 * dt + (s + 1) as f64 * tau,
                });
            }
            states.push(h.clone());
        }
    }
    let (o, g) = readout.objective(&model.head, &model.cell.readout(&h))?;
    let penalty = r * eps_max * eps_max * th.norm_squared() * dt;
    let value = -o + penalty;

    let mut grad = Matrix::zeros(t, signal.channels());
    let mut hbar = -model.lift_state_grad(g);
    for k in (0..t).rev() {
        let u = &inputs[k];
        let mut ubar = Vector::zeros(u.len());
        for s in (0..substeps).rev() {
            let (hb, ub) = rk4_pullback(&field, &states[k * substeps + s], u, tau, &hbar, None);
            hbar = hb;
            ubar += ub;
        }
        for c in 0..signal.channels() {
            let sech2 = 1.0 - th[(k, c)] * th[(k, c)];
            grad[(k, c)] = eps_max * sech2 * (ubar[c] + 2.0 * r * eps_max * th[(k, c)] * dt);
        }
    }
    Ok((value, grad))
}

/// Direct single shooting over the raw samples with the applied perturbation
/// `ε_max tanh(δ)`, minimised by gradient descent with momentum from seeded
/// starts, optionally warm-started from the gradient-sign sequence.
/// Returns the best iterate.
pub fn optimal_attack(
    model: &Model,
    signal: &SampledSignal,
    h0: &Vector,
    cfg: &AttackConfig,
    opt: &OptimalConfig,
) -> Result<AttackResult> {
    let start = Instant::now();
    check_inputs(model, signal, h0, cfg)?;
    if !(opt.eps_max > 0.0) || !(opt.r >= 0.0) || !(opt.learning_rate > 0.0) || !(0.0..1.0).contains(&opt.momentum) {
        return Err(Error::Config("optimal attack needs eps_max > 0, R >= 0, a positive step and momentum in [0, 1)".into()));
    }
    if !(opt.warm_fraction > 0.0 && opt.warm_fraction < 1.0) {
        return Err(Error::Config("warm fraction must lie in (0, 1)".into()));
    }
    let goal = resolve_goal(model, signal, h0, cfg)?;
    let sub = cfg.substeps.unwrap_or(model.lifting.substeps);
    let (t, m) = (signal.len(), signal.channels());
    let warm = match opt.init {
        OptimalInit::Noise => None,
        OptimalInit::GradientSign => {
            let g = gradient_sign_attack(
                model,
                signal,
                h0,
                &AttackConfig {
                    alpha: opt.eps_max,
                    eps_max: None,
                    ..cfg.clone()
                },
            )?;
            let w = opt.warm_fraction.atanh() / opt.eps_max;
            Some(Matrix::from_fn(t, m, |k, c| w * g.perturbation.sample(k)[c]))
        }
    };
    let mut best: Option<(f64, Matrix)> = None;
    let mut initial = None;
    for restart in 0..opt.restarts.max(1) as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(opt.seed.wrapping_add(restart));
        let mut raw = Matrix::from_fn(t, m, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * opt.init_scale
        });
        if let Some(w) = &warm {
            raw += w;
        }
        let mut velocity = Matrix::zeros(t, m);
        for _ in 0..=opt.iters {
            let (value, grad) = shooting_objective(model, signal, h0, &goal.readout, &raw, opt.r, opt.eps_max, sub)?;
            initial.get_or_insert(value);
            if best.as_ref().is_none_or(|(b, _)| value < *b) {
                best = Some((value, raw.clone()));
            }
            let scale = if opt.normalize {
                let n = grad.amax();
                if n > 0.0 { opt.learning_rate / n } else { 0.0 }
            } else {
                opt.learning_rate
            };
            velocity = velocity * opt.momentum - grad * scale;
            raw += &velocity;
        }
    }
    let (best_value, best_raw) = best.expect("at least one evaluation");

    let field = model.field();
    let tau = signal.dt() / sub as f64;
    let pert = SampledSignal::new(signal.dt(), best_raw.map(|v| opt.eps_max * v.tanh()))?;
    let mut rec = PairRecorder::new(h0, sub, t);
    let (mut h1, mut h2) = (h0.clone(), h0.clone());
    for k in 0..t {
        let x = signal.sample(k);
        let xd = &x + pert.sample(k);
        for s in 0..sub {
            h1 = rk4_step(&field, &h1, &x, tau);
            h2 = rk4_step(&field, &h2, &xd, tau);
            rec.push(k as f64 * signal.dt() + (s + 1) as f64 * tau, &h1, &h2)?;
        }
    }
    let (nominal, perturbed) = rec.finish();
    let nominal_class = argmax(&model.probs(nominal.last()));
    let mut r = AttackResult::finish(
        AttackMethod::Optimal,
        cfg.clone(),
        pert,
        nominal,
        perturbed,
        |h| model.probs(h),
        goal.target,
        nominal_class,
    );
    let initial = initial.expect("evaluated");
    r.meta.objective_initial = Some(initial);
    r.meta.objective_best = Some(best_value);
    r.meta.improved = Some(best_value < initial);
    r.meta.integration_substeps = sub;
    r.wall_time = start.elapsed().as_secs_f64();
    Ok(r)
}
