use std::time::Instant;

use crate::attack::{
    cap, check_inputs, gradient_sign_direction, resolve_goal, AttackConfig, AttackMethod, AttackResult, FineTrace,
    PairRecorder,
};
use crate::dynamics::{input_matrix, rk4_step};
use crate::error::{check_dim, Result};
use crate::linalg::{argmax, Vector};
use crate::model::Model;
use crate::signal::SampledSignal;

/// Substeps per sample so that the fast step is at most `ε / per_eps`.
pub fn fast_substeps(dt: f64, eps: f64, per_eps: f64, floor: usize) -> usize {
    floor.max((per_eps * dt / eps - 1e-9).ceil() as usize).max(1)
}

/// Co-integrate `ε δ̇ = α B(t, e, δ)ᵀ e − δ` with the nominal and perturbed
/// states. Each fast substep evaluates `B` once at its start, advances `δ`
/// by the exact relaxation toward the frozen target, and advances both
/// states by one RK4 step with the disturbance held.
pub fn dynamic_fixed_point_attack(
    model: &Model,
    signal: &SampledSignal,
    h0: &Vector,
    cfg: &AttackConfig,
    delta_init: Option<&Vector>,
) -> Result<AttackResult> {
    let start = Instant::now();
    check_inputs(model, signal, h0, cfg)?;
    let goal = resolve_goal(model, signal, h0, cfg)?;
    let field = model.field();
    let m = signal.channels();
    let mut delta = match delta_init {
        Some(d) => {
            check_dim("initial disturbance", m, d.len())?;
            d.clone()
        }
        None => Vector::zeros(m),
    };
    let sub = fast_substeps(signal.dt(), cfg.eps_fast, cfg.fast_steps_per_eps, cfg.substeps.unwrap_or(model.lifting.substeps));
    let tau = signal.dt() / sub as f64;
    let decay = (-tau / cfg.eps_fast).exp();
    let kick = cfg.kick_magnitude();

    let mut rec = PairRecorder::new(h0, sub, signal.len());
    let mut pert = SampledSignal::zeros(signal.dt(), signal.len(), m);
    let steps = signal.len() * sub;
    let mut fine = FineTrace {
        times: Vec::with_capacity(steps + 1),
        delta: Vec::with_capacity(steps + 1),
        error: Vec::with_capacity(steps + 1),
        sample: Vec::with_capacity(steps + 1),
    };
    fine.times.push(0.0);
    fine.delta.push(delta.clone());
    fine.error.push(Vector::zeros(h0.len()));
    fine.sample.push(0);
    let (mut h1, mut h2) = (h0.clone(), h0.clone());
    let mut jac = 0;
    for k in 0..signal.len() {
        let x = signal.sample(k);
        let kick_d = if k == 0 && kick > 0.0 {
            jac += 1;
            gradient_sign_direction(model, &field, &goal, &h2, &x)? * kick
        } else {
            Vector::zeros(m)
        };
        for s in 0..sub {
            let e = &h2 - &h1;
            let mut d = &kick_d + &delta;
            cap(&mut d, cfg.eps_max);
            if s == 0 {
                pert.set_sample(k, &d);
            }
            let b = input_matrix(&field, &h2, &x, &delta, cfg.nodes);
            let target = b.tr_mul(&e) * cfg.alpha;
            delta = &delta * decay + target * (1.0 - decay);
            let xd = &x + &d;
            h1 = rk4_step(&field, &h1, &x, tau);
            h2 = rk4_step(&field, &h2, &xd, tau);
            let t = k as f64 * signal.dt() + (s + 1) as f64 * tau;
            rec.push(t, &h1, &h2)?;
            fine.times.push(t);
            fine.error.push(&h2 - &h1);
            fine.delta.push(delta.clone());
            fine.sample.push(((s + 1) / sub + k).min(signal.len() - 1));
        }
    }
    let (nominal, perturbed) = rec.finish();
    let nominal_class = argmax(&model.probs(nominal.last()));
    let mut r = AttackResult::finish(
        AttackMethod::Dynamic,
        cfg.clone(),
        pert,
        nominal,
        perturbed,
        |h| model.probs(h),
        goal.target,
        nominal_class,
    );
    r.meta.kick = kick;
    r.meta.b_evals = steps;
    r.meta.jacobian_evals = jac + steps * cfg.nodes;
    r.meta.integration_substeps = sub;
    r.fine = Some(fine);
    r.wall_time = start.elapsed().as_secs_f64();
    Ok(r)
}
