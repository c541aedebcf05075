//! Perturbation constructions acting on the lifted model.

mod config;
mod dynamic;
mod fixed;
mod gradient;
mod optimal;
mod probe;
mod projection;
mod result;

pub use config::{AttackConfig, FixedPointMethod};
pub use dynamic::{dynamic_fixed_point_attack, fast_substeps};
pub use fixed::{fixed_point_attack, fixed_point_newton, fixed_point_solve, pure_b_closed_loop, FixedPoint};
pub use gradient::gradient_sign_attack;
pub use optimal::{optimal_attack, shooting_objective, OptimalConfig, OptimalInit};
pub use probe::{
    alignment_diagnostic, alignment_monotone, fit_decay_rate, theorem2_probe, AlignmentEntry, ProbeReport, ProbeRun,
};
pub use projection::project_to_candidates;
pub use result::{AttackMeta, AttackMethod, AttackResult, AttackSummary, EnergyTrace, FineTrace};

use crate::dynamics::{integrate, ContinuousField, Disturbance, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::head::Readout;
use crate::linalg::{argmax, sign, Vector};
use crate::model::Model;
use crate::signal::SampledSignal;

/// Readout the attack steers plus the target class of a targeted attack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Goal {
    pub readout: Readout,
    pub target: Option<usize>,
}

/// Resolve which class to push toward or away from.
///
/// Targeted: ascend the target. Untargeted with two classes: ascend the
/// other class. Untargeted with more classes: descend the source class.
/// The source defaults to the nominal prediction at the final sample.
pub fn resolve_goal(model: &Model, signal: &SampledSignal, h0: &Vector, cfg: &AttackConfig) -> Result<Goal> {
    let l = model.classes();
    let check = |c: usize, what: &str| {
        if c < l {
            Ok(c)
        } else {
            Err(Error::Config(format!("{what} class {c} out of range for {l} classes")))
        }
    };
    let readout = |class, ascend| Readout {
        class,
        threshold: cfg.threshold,
        mode: cfg.mode,
        ascend,
    };
    if let Some(t) = cfg.target_class {
        let t = check(t, "target")?;
        return Ok(Goal {
            readout: readout(t, true),
            target: Some(t),
        });
    }
    let source = match cfg.source_class {
        Some(s) => check(s, "source")?,
        None => nominal_class(model, signal, h0, cfg.substeps)?,
    };
    let r = if l == 2 {
        readout(1 - source, true)
    } else {
        readout(source, false)
    };
    Ok(Goal {
        readout: r,
        target: None,
    })
}

/// Final-sample prediction of the unperturbed lifted model.
pub fn nominal_class(model: &Model, signal: &SampledSignal, h0: &Vector, substeps: Option<usize>) -> Result<usize> {
    let grid = TimeGrid::covering(signal, substeps.unwrap_or(model.lifting.substeps));
    let traj = integrate(&model.field(), h0, signal, Disturbance::None, &grid)?;
    Ok(argmax(&model.probs(traj.last())))
}

/// `sign(∂f/∂x(h2, x)ᵀ ∇_h V(h2))` for the goal's readout.
pub(crate) fn gradient_sign_direction(
    model: &Model,
    field: &ContinuousField<'_>,
    goal: &Goal,
    h2: &Vector,
    x: &Vector,
) -> Result<Vector> {
    let (_, g) = goal.readout.objective(&model.head, &model.cell.readout(h2))?;
    let g = model.lift_state_grad(g);
    let jx = field.input_jacobian_unchecked(h2, x);
    Ok(sign(&jx.tr_mul(&g)))
}

pub(crate) fn cap(v: &mut Vector, eps_max: Option<f64>) {
    if let Some(c) = eps_max {
        v.apply(|x| *x = x.clamp(-c, c));
    }
}

/// Nominal and perturbed states recorded on a shared grid.
pub(crate) struct PairRecorder {
    times: Vec<f64>,
    h1: Vec<Vector>,
    h2: Vec<Vector>,
    substeps: usize,
}

impl PairRecorder {
    pub(crate) fn new(h0: &Vector, substeps: usize, samples: usize) -> Self {
        let cap = samples * substeps + 1;
        let mut r = PairRecorder {
            times: Vec::with_capacity(cap),
            h1: Vec::with_capacity(cap),
            h2: Vec::with_capacity(cap),
            substeps,
        };
        r.times.push(0.0);
        r.h1.push(h0.clone());
        r.h2.push(h0.clone());
        r
    }

    pub(crate) fn push(&mut self, t: f64, h1: &Vector, h2: &Vector) -> Result<()> {
        if h1.iter().chain(h2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Diverged { time: t });
        }
        self.times.push(t);
        self.h1.push(h1.clone());
        self.h2.push(h2.clone());
        Ok(())
    }

    pub(crate) fn finish(self) -> (Trajectory, Trajectory) {
        (
            Trajectory {
                times: self.times.clone(),
                states: self.h1,
                substeps_per_sample: self.substeps,
            },
            Trajectory {
                times: self.times,
                states: self.h2,
                substeps_per_sample: self.substeps,
            },
        )
    }
}

pub(crate) fn check_inputs(model: &Model, signal: &SampledSignal, h0: &Vector, cfg: &AttackConfig) -> Result<()> {
    cfg.validate()?;
    crate::error::check_dim("initial state", model.state_dim(), h0.len())?;
    crate::error::check_dim("signal channels", model.input_dim(), signal.channels())
}

/// Dispatch on the method. The optimal attack uses `opt` for its solver
/// settings and `cfg` for its goal.
pub fn run_attack(
    method: AttackMethod,
    model: &Model,
    signal: &SampledSignal,
    h0: &Vector,
    cfg: &AttackConfig,
    opt: &OptimalConfig,
) -> Result<AttackResult> {
    match method {
        AttackMethod::Grad => gradient_sign_attack(model, signal, h0, cfg),
        AttackMethod::Fixed => fixed_point_attack(model, signal, h0, cfg),
        AttackMethod::Dynamic => dynamic_fixed_point_attack(model, signal, h0, cfg, None),
        AttackMethod::Optimal => optimal_attack(model, signal, h0, cfg, opt),
    }
}
