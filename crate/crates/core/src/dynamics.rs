//! Continuous-time lifting `ḣ = (cell(h, x) − h) / Δ`, fixed-step RK4
//! integration under zero-order-hold inputs, and the error-system matrices.

use crate::cell::{CellParams, Jacobians};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{midpoint_nodes, Matrix, Vector};
use crate::signal::SampledSignal;

#[derive(Debug, Clone, Copy)]
pub struct ContinuousField<'a> {
    cell: &'a CellParams,
    delta: f64,
}

impl<'a> ContinuousField<'a> {
    pub fn new(cell: &'a CellParams, delta: f64) -> Self {
        assert!(delta > 0.0, "lifting timescale must be positive");
        ContinuousField { cell, delta }
    }

    pub fn cell(&self) -> &'a CellParams {
        self.cell
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn state_dim(&self) -> usize {
        self.cell.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.cell.input_dim()
    }

    pub fn eval(&self, h: &Vector, x: &Vector) -> Result<Vector> {
        let next = self.cell.step(h, x)?;
        Ok((next - h) / self.delta)
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, h: &Vector, x: &Vector) -> Vector {
        let mut d = self.cell.step_unchecked(h, x);
        d -= h;
        d /= self.delta;
        d
    }

    /// `(∂f/∂h, ∂f/∂x)` of the lifted field.
    pub fn jacobians(&self, h: &Vector, x: &Vector) -> Result<Jacobians> {
        let j = self.cell.jacobians(h, x)?;
        Ok(self.lift(j))
    }

    pub(crate) fn jacobians_unchecked(&self, h: &Vector, x: &Vector) -> Jacobians {
        self.lift(self.cell.jacobians_unchecked(h, x))
    }

    pub(crate) fn input_jacobian_unchecked(&self, h: &Vector, x: &Vector) -> Matrix {
        self.cell.input_jacobian_unchecked(h, x) / self.delta
    }

    fn lift(&self, mut j: Jacobians) -> Jacobians {
        for i in 0..j.state.nrows() {
            j.state[(i, i)] -= 1.0;
        }
        j.state /= self.delta;
        j.input /= self.delta;
        j
    }

    /// Pull a cotangent back through `f` (state and input parts).
    pub(crate) fn pullback_unchecked(
        &self,
        h: &Vector,
        x: &Vector,
        v: &Vector,
        grads: Option<&mut CellParams>,
    ) -> (Vector, Vector) {
        let scaled = v / self.delta;
        let pb = self.cell.pullback_unchecked(h, x, &scaled, grads);
        (pb.state - scaled, pb.input)
    }
}

/// Integration window on the signal's sample grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub substeps_per_sample: usize,
}

impl TimeGrid {
    pub fn covering(signal: &SampledSignal, substeps_per_sample: usize) -> Self {
        TimeGrid {
            t0: 0.0,
            t1: signal.duration(),
            substeps_per_sample: substeps_per_sample.max(1),
        }
    }

    /// Step size for a signal with sample interval `dt`.
    pub fn step(&self, dt: f64) -> f64 {
        dt / self.substeps_per_sample as f64
    }

    /// Sample index range `[k0, k1)` covered by the window.
    pub fn sample_range(&self, signal: &SampledSignal) -> Result<(usize, usize)> {
        if !(self.t1 > self.t0) || self.substeps_per_sample == 0 {
            return Err(Error::Config(format!("invalid time grid {self:?}")));
        }
        let dt = signal.dt();
        let k0 = (self.t0 / dt).round();
        let k1 = (self.t1 / dt).round();
        let aligned = |t: f64, k: f64| (t - k * dt).abs() <= 1e-9 * dt.max(t.abs());
        if k0 < 0.0 || !aligned(self.t0, k0) || !aligned(self.t1, k1) {
            return Err(Error::Config("time grid must start and end on sample instants".into()));
        }
        if k1 as usize > signal.len() {
            return Err(Error::Config(format!(
                "signal covers {} samples, window needs {}",
                signal.len(),
                k1
            )));
        }
        Ok((k0 as usize, k1 as usize))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub substeps_per_sample: usize,
}

impl Trajectory {
    pub fn last(&self) -> &Vector {
        self.states.last().expect("trajectory is never empty")
    }

    /// State at the start of sample `k` relative to the window start.
    pub fn at_sample(&self, k: usize) -> &Vector {
        &self.states[k * self.substeps_per_sample]
    }

    pub fn samples(&self) -> usize {
        (self.states.len() - 1) / self.substeps_per_sample
    }

    /// `(steps + 1) x state_dim`.
    pub fn to_matrix(&self) -> Matrix {
        let n = self.states[0].len();
        Matrix::from_fn(self.states.len(), n, |i, j| self.states[i][j])
    }
}

pub enum Disturbance<'a> {
    None,
    /// Aligned to the signal grid and held over each sample.
    Sampled(&'a SampledSignal),
    /// Evaluated once per sample at its start: `(k, t, h) -> d(k)`.
    Feedback(&'a mut dyn FnMut(usize, f64, &Vector) -> Vector),
}

/// One classical RK4 step with the input held constant.
pub fn rk4_step(field: &ContinuousField<'_>, h: &Vector, u: &Vector, tau: f64) -> Vector {
    let k1 = field.eval_unchecked(h, u);
    let k2 = field.eval_unchecked(&(h + &k1 * (0.5 * tau)), u);
    let k3 = field.eval_unchecked(&(h + &k2 * (0.5 * tau)), u);
    let k4 = field.eval_unchecked(&(h + &k3 * tau), u);
    let mut out = h.clone();
    out.axpy(tau / 6.0, &k1, 1.0);
    out.axpy(tau / 3.0, &k2, 1.0);
    out.axpy(tau / 3.0, &k3, 1.0);
    out.axpy(tau / 6.0, &k4, 1.0);
    out
}

/// Fixed-step RK4 solution of `ḣ = f(h, x(t) + d(t))` on `grid`.
pub fn integrate(
    field: &ContinuousField<'_>,
    h0: &Vector,
    signal: &SampledSignal,
    mut disturbance: Disturbance<'_>,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    check_dim("initial state", field.state_dim(), h0.len())?;
    check_dim("signal channels", field.input_dim(), signal.channels())?;
    if let Disturbance::Sampled(d) = &disturbance {
        check_dim("disturbance length", signal.len(), d.len())?;
        check_dim("disturbance channels", signal.channels(), d.channels())?;
    }
    let (k0, k1) = grid.sample_range(signal)?;
    let sub = grid.substeps_per_sample;
    let tau = grid.step(signal.dt());

    let mut times = Vec::with_capacity((k1 - k0) * sub + 1);
    let mut states = Vec::with_capacity((k1 - k0) * sub + 1);
    times.push(grid.t0);
    states.push(h0.clone());
    let mut h = h0.clone();
    for k in k0..k1 {
        let t_k = k as f64 * signal.dt();
        let mut u = signal.sample(k);
        match &mut disturbance {
            Disturbance::None => {}
            Disturbance::Sampled(d) => u += d.sample(k),
            Disturbance::Feedback(f) => u += f(k, t_k, &h),
        }
        for s in 0..sub {
            h = rk4_step(field, &h, &u, tau);
            let t = t_k + (s + 1) as f64 * tau;
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { time: t });
            }
            times.push(t);
            states.push(h.clone());
        }
    }
    Ok(Trajectory {
        times,
        states,
        substeps_per_sample: sub,
    })
}

/// Cotangents of one RK4 step with respect to its start state and held input.
/// Parameter cotangents are accumulated into `grads` when given.
pub(crate) fn rk4_pullback(
    field: &ContinuousField<'_>,
    h: &Vector,
    u: &Vector,
    tau: f64,
    out_bar: &Vector,
    mut grads: Option<&mut CellParams>,
) -> (Vector, Vector) {
    let k1 = field.eval_unchecked(h, u);
    let s2 = h + &k1 * (0.5 * tau);
    let k2 = field.eval_unchecked(&s2, u);
    let s3 = h + &k2 * (0.5 * tau);
    let k3 = field.eval_unchecked(&s3, u);
    let s4 = h + &k3 * tau;

    let mut hbar = out_bar.clone();
    let k4bar = out_bar * (tau / 6.0);
    let mut k3bar = out_bar * (tau / 3.0);
    let mut k2bar = out_bar * (tau / 3.0);
    let mut k1bar = out_bar * (tau / 6.0);

    let (sb, mut ubar) = field.pullback_unchecked(&s4, u, &k4bar, grads.as_deref_mut());
    hbar += &sb;
    k3bar += &sb * tau;
    let (sb, ub) = field.pullback_unchecked(&s3, u, &k3bar, grads.as_deref_mut());
    ubar += ub;
    hbar += &sb;
    k2bar += &sb * (0.5 * tau);
    let (sb, ub) = field.pullback_unchecked(&s2, u, &k2bar, grads.as_deref_mut());
    ubar += ub;
    hbar += &sb;
    k1bar += &sb * (0.5 * tau);
    let (sb, ub) = field.pullback_unchecked(h, u, &k1bar, grads);
    ubar += ub;
    hbar += &sb;
    (hbar, ubar)
}

/// `A` and `B` of the error system `ė = A e + B δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMatrices {
    pub a: Matrix,
    pub b: Matrix,
    pub nodes: usize,
}

/// Midpoint-rule λ-averages of the lifted Jacobians:
/// `A = ∫ ∂f/∂h(h1 + λe, x) dλ`, `B = ∫ ∂f/∂x(h1 + e, x + λδ) dλ`.
pub fn error_matrices(
    field: &ContinuousField<'_>,
    h1: &Vector,
    e: &Vector,
    x: &Vector,
    delta: &Vector,
    nodes: usize,
) -> Result<ErrorMatrices> {
    check_dim("nominal state", field.state_dim(), h1.len())?;
    check_dim("error state", field.state_dim(), e.len())?;
    check_dim("input", field.input_dim(), x.len())?;
    check_dim("input perturbation", field.input_dim(), delta.len())?;
    if nodes == 0 {
        return Err(Error::Config("quadrature needs at least one node".into()));
    }
    let a = state_matrix(field, h1, e, x, nodes);
    let h2 = h1 + e;
    let b = input_matrix(field, &h2, x, delta, nodes);
    Ok(ErrorMatrices { a, b, nodes })
}

pub fn state_matrix(
    field: &ContinuousField<'_>,
    h1: &Vector,
    e: &Vector,
    x: &Vector,
    nodes: usize,
) -> Matrix {
    let n = field.state_dim();
    let mut a = Matrix::zeros(n, n);
    for lam in midpoint_nodes(nodes) {
        a += field.jacobians_unchecked(&(h1 + e * lam), x).state;
    }
    a / nodes as f64
}

/// `B(t, e, δ)` evaluated at the perturbed state `h2 = h1 + e`.
pub fn input_matrix(
    field: &ContinuousField<'_>,
    h2: &Vector,
    x: &Vector,
    delta: &Vector,
    nodes: usize,
) -> Matrix {
    field.cell.input_jacobian_mean(h2, x, delta, nodes) / field.delta
}
