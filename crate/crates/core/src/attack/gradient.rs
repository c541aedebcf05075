use std::time::Instant;

use crate::attack::{check_inputs, gradient_sign_direction, resolve_goal, AttackConfig, AttackMethod, AttackResult, PairRecorder};
use crate::dynamics::rk4_step;
use crate::error::Result;
use crate::linalg::{argmax, Vector};
use crate::model::Model;
use crate::signal::SampledSignal;

/// Gradient-sign feedback `d(k) = α sign(∂f/∂x(h2, x)ᵀ ∇V(h2))`, refreshed
/// once per sample from the current perturbed state.
pub fn gradient_sign_attack(model: &Model, signal: &SampledSignal, h0: &Vector, cfg: &AttackConfig) -> Result<AttackResult> {
    let start = Instant::now();
    check_inputs(model, signal, h0, cfg)?;
    let goal = resolve_goal(model, signal, h0, cfg)?;
    let field = model.field();
    let sub = cfg.substeps.unwrap_or(model.lifting.substeps);
    let tau = signal.dt() / sub as f64;

    let mut rec = PairRecorder::new(h0, sub, signal.len());
    let mut pert = SampledSignal::zeros(signal.dt(), signal.len(), signal.channels());
    let (mut h1, mut h2) = (h0.clone(), h0.clone());
    for k in 0..signal.len() {
        let x = signal.sample(k);
        let mut d = gradient_sign_direction(model, &field, &goal, &h2, &x)? * cfg.alpha;
        super::cap(&mut d, cfg.eps_max);
        pert.set_sample(k, &d);
        let xd = &x + &d;
        for s in 0..sub {
            h1 = rk4_step(&field, &h1, &x, tau);
            h2 = rk4_step(&field, &h2, &xd, tau);
            rec.push(k as f64 * signal.dt() + (s + 1) as f64 * tau, &h1, &h2)?;
        }
    }
    let (nominal, perturbed) = rec.finish();
    let nominal_class = argmax(&model.probs(nominal.last()));
    let mut r = AttackResult::finish(
        AttackMethod::Grad,
        cfg.clone(),
        pert,
        nominal,
        perturbed,
        |h| model.probs(h),
        goal.target,
        nominal_class,
    );
    r.meta.jacobian_evals = signal.len();
    r.meta.integration_substeps = sub;
    r.wall_time = start.elapsed().as_secs_f64();
    Ok(r)
}
