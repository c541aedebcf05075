use std::time::Instant;

use crate::attack::{
    cap, FixedPointMethod, check_inputs, gradient_sign_direction, resolve_goal, AttackConfig, AttackMethod, AttackResult, EnergyTrace,
    PairRecorder,
};
use crate::dynamics::{input_matrix, rk4_step, ContinuousField, Trajectory};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{argmax, vec_norm_inf, Matrix, Vector};
use crate::model::Model;
use crate::signal::SampledSignal;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub delta: Vector,
    /// `B(δ̄)`, the last matrix the iteration evaluated.
    pub b: Matrix,
    /// Number of map evaluations.
    pub iterations: usize,
    /// `‖δ_{n+1} − δ_n‖∞` for every evaluation.
    pub steps: Vec<f64>,
}

/// Iterate `δ ← δ + θ (α B(δ)ᵀ e − δ)` from zero until the residual
/// `‖α B(δ)ᵀ e − δ‖∞` drops below `tol`, and return that `δ`. `θ = 1` is the
/// plain iteration `δ ← α B(δ)ᵀ e`; smaller `θ` damps oscillation.
pub fn fixed_point_solve<F>(
    mut b_map: F,
    e: &Vector,
    inputs: usize,
    alpha: f64,
    tol: f64,
    max_iters: usize,
    relax: f64,
) -> Result<FixedPoint>
where
    F: FnMut(&Vector) -> Matrix,
{
    if !(relax > 0.0 && relax <= 1.0) {
        return Err(Error::Config(format!("relaxation must lie in (0, 1], got {relax}")));
    }
    let mut delta = Vector::zeros(inputs);
    let mut steps = Vec::new();
    for it in 1..=max_iters {
        let b = b_map(&delta);
        check_dim("B columns", inputs, b.ncols())?;
        let next = b.tr_mul(e) * alpha;
        let step = vec_norm_inf(&(&next - &delta));
        steps.push(step);
        if !step.is_finite() {
            break;
        }
        if step < tol {
            return Ok(FixedPoint {
                delta,
                b,
                iterations: it,
                steps,
            });
        }
        if relax == 1.0 {
            delta = next;
        } else {
            delta += (next - &delta) * relax;
        }
    }
    Err(Error::Contraction {
        iterations: steps.len(),
        last_step: steps.last().copied().unwrap_or(f64::NAN),
        sample: None,
    })
}

/// Pseudo-transient continuation on `δ̇ = r(δ)`, `r(δ) = α B(δ)ᵀ e − δ`, from
/// `start`: linearly implicit Euler steps `(I/τ − ∂r/∂δ) s = r` with a
/// forward-difference Jacobian and `τ` grown as the residual falls, so the
/// iteration turns into Newton's method near a root. It settles on the stable
/// root the relaxation flows to, which the plain substitution cannot reach
/// where the map is steep. Stops under the same residual test as
/// [`fixed_point_solve`]; `iterations` counts map evaluations, including the
/// difference quotients.
pub fn fixed_point_newton<F>(mut b_map: F, e: &Vector, start: &Vector, alpha: f64, tol: f64, max_evals: usize) -> Result<FixedPoint>
where
    F: FnMut(&Vector) -> Matrix,
{
    let m = start.len();
    let mut evals = 0;
    let mut eval = |d: &Vector, evals: &mut usize| -> Result<(Matrix, Vector)> {
        *evals += 1;
        let b = b_map(d);
        check_dim("B columns", m, b.ncols())?;
        let g = b.tr_mul(e) * alpha;
        Ok((b, g))
    };
    let mut delta = start.clone();
    let (mut b, mut g) = eval(&delta, &mut evals)?;
    let mut r = &g - &delta;
    let mut steps = Vec::new();
    let mut tau = 1.0;
    loop {
        let rn = vec_norm_inf(&r);
        steps.push(rn);
        if rn < tol {
            return Ok(FixedPoint {
                delta,
                b,
                iterations: evals,
                steps,
            });
        }
        if !rn.is_finite() || evals + m + 1 > max_evals {
            break;
        }
        let mut jac = Matrix::zeros(m, m);
        for j in 0..m {
            let h = 1e-7 * (1.0 + delta[j].abs());
            let mut dj = delta.clone();
            dj[j] += h;
            let (_, gj) = eval(&dj, &mut evals)?;
            jac.set_column(j, &((gj - &g) / h));
        }
        // A step against the flow means `τ` is too long for the local
        // linearisation; shorten it until the step follows `r`.
        let step = loop {
            let lhs = Matrix::identity(m, m) * (1.0 / tau + 1.0) - &jac;
            match lhs.lu().solve(&r) {
                Some(s) if s.dot(&r) > 0.0 => break Some(s),
                _ if tau > 1e-6 => tau *= 0.25,
                _ => break None,
            }
        };
        let Some(step) = step else { break };
        let cand = &delta + step;
        let (bc, gc) = eval(&cand, &mut evals)?;
        let rc = &gc - &cand;
        let rcn = vec_norm_inf(&rc);
        if !rcn.is_finite() {
            break;
        }
        if rcn < rn {
            tau = (tau * (rn / rcn).max(2.0)).min(1e12);
        }
        (delta, b, g, r) = (cand, bc, gc, rc);
    }
    Err(Error::Contraction {
        iterations: evals,
        last_step: steps.last().copied().unwrap_or(f64::NAN),
        sample: None,
    })
}

/// Solve at one point with the configured method. Newton starts from `warm`
/// when given; the substitution iteration always starts from zero.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_at(
    field: &ContinuousField<'_>,
    h2: &Vector,
    x: &Vector,
    e: &Vector,
    cfg: &AttackConfig,
    alpha: f64,
    tol: f64,
    warm: Option<&Vector>,
) -> Result<FixedPoint> {
    let b_map = |d: &Vector| input_matrix(field, h2, x, d, cfg.nodes);
    match cfg.fp_method {
        FixedPointMethod::Picard => fixed_point_solve(b_map, e, x.len(), alpha, tol, cfg.fp_max_iters, cfg.fp_relax),
        FixedPointMethod::Newton => {
            let zero = Vector::zeros(x.len());
            fixed_point_newton(b_map, e, warm.unwrap_or(&zero), alpha, tol, cfg.fp_max_iters)
        }
    }
}

/// Apply the fixed point `δ̄ = α B(t, e, δ̄)ᵀ e` with `e = h2 − h1`, solved
/// afresh on every integration step. The first sample additionally carries a
/// gradient-sign step of magnitude `cfg.kick_magnitude()`.
pub fn fixed_point_attack(model: &Model, signal: &SampledSignal, h0: &Vector, cfg: &AttackConfig) -> Result<AttackResult> {
    let start = Instant::now();
    check_inputs(model, signal, h0, cfg)?;
    let goal = resolve_goal(model, signal, h0, cfg)?;
    let field = model.field();
    let sub = cfg.substeps.unwrap_or(model.lifting.substeps);
    let tau = signal.dt() / sub as f64;
    let kick = cfg.kick_magnitude();

    let mut rec = PairRecorder::new(h0, sub, signal.len());
    let mut pert = SampledSignal::zeros(signal.dt(), signal.len(), signal.channels());
    let mut energy = EnergyTrace::default();
    let (mut h1, mut h2) = (h0.clone(), h0.clone());
    let (mut b_evals, mut it_max, mut it_total, mut jac) = (0, 0, 0, 0);
    let mut warm: Option<Vector> = None;
    for k in 0..signal.len() {
        let x = signal.sample(k);
        let kick_d = if k == 0 && kick > 0.0 {
            jac += 1;
            gradient_sign_direction(model, &field, &goal, &h2, &x)? * kick
        } else {
            Vector::zeros(x.len())
        };
        for s in 0..sub {
            let e = &h2 - &h1;
            let fp = solve_at(&field, &h2, &x, &e, cfg, cfg.alpha, cfg.fp_tol, warm.as_ref()).map_err(|err| err.at_sample(k))?;
            warm = Some(fp.delta.clone());
            b_evals += fp.iterations;
            it_total += fp.iterations;
            it_max = it_max.max(fp.iterations);
            let mut d = &kick_d + &fp.delta;
            cap(&mut d, cfg.eps_max);
            let xd = &x + &d;
            if s == 0 {
                pert.set_sample(k, &d);
                let total = 2.0 * e.dot(&(field.eval_unchecked(&h2, &xd) - field.eval_unchecked(&h1, &x)));
                let input = 2.0 * e.dot(&(&fp.b * &fp.delta));
                energy.total.push(total);
                energy.input.push(input);
                energy.state.push(total - input);
            }
            h1 = rk4_step(&field, &h1, &x, tau);
            h2 = rk4_step(&field, &h2, &xd, tau);
            rec.push(k as f64 * signal.dt() + (s + 1) as f64 * tau, &h1, &h2)?;
        }
    }
    let (nominal, perturbed) = rec.finish();
    let nominal_class = argmax(&model.probs(nominal.last()));
    let mut r = AttackResult::finish(
        AttackMethod::Fixed,
        cfg.clone(),
        pert,
        nominal,
        perturbed,
        |h| model.probs(h),
        goal.target,
        nominal_class,
    );
    r.meta.kick = kick;
    r.meta.jacobian_evals = jac + b_evals * cfg.nodes;
    r.meta.b_evals = b_evals;
    r.meta.fp_iterations_max = it_max;
    r.meta.fp_iterations_total = it_total;
    r.meta.integration_substeps = sub;
    r.energy = Some(energy);
    r.wall_time = start.elapsed().as_secs_f64();
    Ok(r)
}

/// Closed loop `ė = B(t, e, δ̄) δ̄` with the state term removed, `δ̄` re-solved
/// at every RK4 stage and `h2 = h1 + e`, `h1` held at its grid value over a
/// step. Returns `‖e‖²` on the grid of `nominal`.
pub fn pure_b_closed_loop(
    field: &ContinuousField<'_>,
    nominal: &Trajectory,
    signal: &SampledSignal,
    e0: &Vector,
    cfg: &AttackConfig,
) -> Result<Vec<f64>> {
    check_dim("error state", field.state_dim(), e0.len())?;
    let sub = nominal.substeps_per_sample;
    let mut e = e0.clone();
    let mut out = Vec::with_capacity(nominal.states.len());
    out.push(e.norm_squared());
    for i in 0..nominal.states.len() - 1 {
        let k = (i / sub).min(signal.len() - 1);
        let tau = nominal.times[i + 1] - nominal.times[i];
        let h1 = &nominal.states[i];
        let x = signal.sample(k);
        let rate = |e: &Vector| -> Result<Vector> {
            let h2 = h1 + e;
            let fp = solve_at(field, &h2, &x, e, cfg, cfg.alpha, cfg.fp_tol, None).map_err(|err| err.at_sample(k))?;
            Ok(&fp.b * &fp.delta)
        };
        let k1 = rate(&e)?;
        let k2 = rate(&(&e + &k1 * (0.5 * tau)))?;
        let k3 = rate(&(&e + &k2 * (0.5 * tau)))?;
        let k4 = rate(&(&e + &k3 * tau))?;
        e += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (tau / 6.0);
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { time: nominal.times[i + 1] });
        }
        out.push(e.norm_squared());
    }
    Ok(out)
}
