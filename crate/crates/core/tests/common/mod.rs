#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rnnattack::attack::{alignment_diagnostic, alignment_monotone, pure_b_closed_loop, shooting_objective, AttackConfig};
use rnnattack::bounds::vanilla_certificate;
use rnnattack::dynamics::{error_matrices, integrate, state_matrix};
use rnnattack::measure::{coppel_envelopes, matrix_measure_inf, matrix_measure_limit};
use rnnattack::{
    CellKind, CellParams, ContinuousField, Disturbance, HeadParams, Lifting, Matrix, Model, SampledSignal, TimeGrid,
    Vector,
};

pub const KINDS: [CellKind; 3] = [CellKind::Vanilla, CellKind::Gru, CellKind::Lstm];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize, r: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-r..=r))
}

pub fn uniform_mat(rng: &mut impl Rng, n: usize, m: usize, r: f64) -> Matrix {
    Matrix::from_fn(n, m, |_, _| rng.random_range(-r..=r))
}

/// Uniform draw from the closed Euclidean unit ball.
pub fn ball_vec(rng: &mut impl Rng, n: usize) -> Vector {
    loop {
        let v = uniform_vec(rng, n, 1.0);
        if v.norm() <= 1.0 {
            return v;
        }
    }
}

pub fn random_model(rng: &mut impl Rng, kind: CellKind, hidden: usize, input: usize, classes: usize, delta: f64) -> Model {
    let cell = CellParams::random(kind, hidden, input, 1.0, rng);
    let head = HeadParams::new(uniform_mat(rng, classes, hidden, 1.0), uniform_vec(rng, classes, 0.5)).unwrap();
    Model::new(cell, head, Lifting { delta, substeps: 1 }).unwrap()
}

pub fn random_signal(rng: &mut impl Rng, len: usize, channels: usize, dt: f64) -> SampledSignal {
    SampledSignal::new(dt, uniform_mat(rng, len, channels, 1.0)).unwrap()
}

/// Largest `|analytic − fd| / max(1, |fd|)` over every Jacobian entry of
/// `cases` random cells of `kind`, central differences with step `1e-5`.
pub fn jacobian_fd_error(kind: CellKind, cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let step = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (n, m) = (r.random_range(1..=4), r.random_range(1..=3));
        let cell = CellParams::random(kind, n, m, 1.0, &mut r);
        let s = cell.state_dim();
        let h = uniform_vec(&mut r, s, 1.0);
        let x = uniform_vec(&mut r, m, 1.0);
        let j = cell.jacobians(&h, &x).unwrap();
        let mut check = |analytic: &Matrix, col: usize, plus: Vector, minus: Vector| {
            let fd = (plus - minus) / (2.0 * step);
            for i in 0..s {
                let err = (analytic[(i, col)] - fd[i]).abs() / fd[i].abs().max(1.0);
                worst = worst.max(err);
            }
        };
        for c in 0..s {
            let mut hp = h.clone();
            let mut hm = h.clone();
            hp[c] += step;
            hm[c] -= step;
            check(&j.state, c, cell.step(&hp, &x).unwrap(), cell.step(&hm, &x).unwrap());
        }
        for c in 0..m {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += step;
            xm[c] -= step;
            check(&j.input, c, cell.step(&h, &xp).unwrap(), cell.step(&h, &xm).unwrap());
        }
    }
    worst
}

/// `|h(1) − e^{−1}|` for RK4 on `ḣ = −h`, `h(0) = 1` with `steps` steps.
pub fn rk4_error(steps: usize) -> f64 {
    // Zero-weight vanilla cell with Δ = 1 is exactly ḣ = −h.
    let cell = CellParams::zeros(CellKind::Vanilla, 1, 1);
    let field = ContinuousField::new(&cell, 1.0);
    let signal = SampledSignal::scalar(1.0, &[0.0]).unwrap();
    let grid = TimeGrid::covering(&signal, steps);
    let traj = integrate(&field, &Vector::from_element(1, 1.0), &signal, Disturbance::None, &grid).unwrap();
    (traj.last()[0] - (-1.0f64).exp()).abs()
}

/// Measured order from the errors at steps `0.1` and `0.05`.
pub fn rk4_order() -> f64 {
    (rk4_error(10) / rk4_error(20)).log2()
}

/// Largest `‖A e + B δ − (f(h1 + e, x + δ) − f(h1, x))‖∞` over random
/// vanilla and GRU instances with `‖e‖₂, ‖δ‖₂ ≤ 1` and weights uniform on
/// `[−scale, scale]`.
pub fn quadrature_error(cases: usize, nodes: usize, scale: f64, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for i in 0..cases {
        let kind = if i % 2 == 0 { CellKind::Vanilla } else { CellKind::Gru };
        let (n, m) = (r.random_range(1..=3), r.random_range(1..=2));
        let cell = CellParams::random(kind, n, m, scale, &mut r);
        let field = ContinuousField::new(&cell, 1.0);
        let h1 = uniform_vec(&mut r, n, 1.0);
        let e = ball_vec(&mut r, n);
        let x = uniform_vec(&mut r, m, 1.0);
        let d = ball_vec(&mut r, m);
        let em = error_matrices(&field, &h1, &e, &x, &d, nodes).unwrap();
        let lhs = &em.a * &e + &em.b * &d;
        let rhs = field.eval(&(&h1 + &e), &(&x + &d)).unwrap() - field.eval(&h1, &x).unwrap();
        worst = worst.max((lhs - rhs).amax());
    }
    worst
}

/// Largest gap between the closed-form measure and the difference quotient
/// at `θ = 1e-8` over random square matrices.
/// Weight scale of the quadrature-identity instances. The midpoint error is
/// `|g''| / 24N²` with `g''` growing like `|U e|³`, so unit-scale cells sit
/// near `1e-5` at 64 nodes.
pub const QUADRATURE_SCALE: f64 = 0.25;

/// `error(N) / error(2N)` at unit weight scale; four for a second-order rule.
pub fn quadrature_order_ratio(nodes: usize, seed: u64) -> f64 {
    quadrature_error(100, nodes, 1.0, seed) / quadrature_error(100, 2 * nodes, 1.0, seed)
}

pub fn measure_limit_error(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    (0..cases)
        .map(|_| {
            let n = r.random_range(1..=5);
            let m = uniform_mat(&mut r, n, n, 2.0);
            (matrix_measure_inf(&m) - matrix_measure_limit(&m, 1e-8)).abs()
        })
        .fold(0.0, f64::max)
}

/// Worst excess of `‖h(t)‖∞` over the Coppel upper envelope, or of the lower
/// envelope over `‖h(t)‖∞`, relative to the envelope, on random LTI systems.
pub fn coppel_excess(systems: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..systems {
        let n = r.random_range(1..=4);
        let a = uniform_mat(&mut r, n, n, 1.5);
        let h0 = uniform_vec(&mut r, n, 1.0);
        let (dt, steps, sub) = (0.02, 150, 20);
        let env = coppel_envelopes(&vec![a.clone(); steps + 1], dt, h0.amax()).unwrap();
        let mut h = h0.clone();
        let tau = dt / sub as f64;
        for i in 0..=steps {
            if i > 0 {
                for _ in 0..sub {
                    let k1 = &a * &h;
                    let k2 = &a * (&h + &k1 * (0.5 * tau));
                    let k3 = &a * (&h + &k2 * (0.5 * tau));
                    let k4 = &a * (&h + &k3 * tau);
                    h += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (tau / 6.0);
                }
            }
            let norm = h.amax();
            worst = worst.max((norm - env.upper[i]) / env.upper[i].max(1e-300));
            worst = worst.max((env.lower[i] - norm) / env.lower[i].max(1e-300));
        }
    }
    worst
}

pub const ALIGN_ALPHAS: [f64; 4] = [0.1, 0.01, 0.001, 0.0001];

#[derive(Debug, Default)]
pub struct AlignmentStats {
    pub instances: usize,
    /// Instances with a contraction failure at some gain.
    pub excluded: usize,
    /// Instances without failures whose cosines decrease or end below 0.999.
    pub violations: usize,
    pub min_final_cosine: f64,
}

/// Fixed-point alignment with the input gradient on random vanilla and GRU instances.
pub fn alignment_stats(instances: usize, seed: u64) -> AlignmentStats {
    let mut r = rng(seed);
    let cfg = AttackConfig::default();
    let mut s = AlignmentStats {
        instances,
        min_final_cosine: f64::INFINITY,
        ..Default::default()
    };
    for i in 0..instances {
        let kind = if i % 2 == 0 { CellKind::Vanilla } else { CellKind::Gru };
        let (n, m) = (r.random_range(1..=4), r.random_range(2..=3));
        let cell = CellParams::random(kind, n, m, 1.0, &mut r);
        let field = ContinuousField::new(&cell, 1.0);
        let h2 = uniform_vec(&mut r, n, 1.0);
        let x = uniform_vec(&mut r, m, 1.0);
        let e = uniform_vec(&mut r, n, 1.0);
        let entries = alignment_diagnostic(&field, &h2, &x, &e, &ALIGN_ALPHAS, &cfg).unwrap();
        if entries.iter().any(|e| e.cosine.is_none()) {
            s.excluded += 1;
            continue;
        }
        let c: Vec<f64> = entries.iter().filter_map(|e| e.cosine).collect();
        let last = *c.last().unwrap();
        s.min_final_cosine = s.min_final_cosine.min(last);
        if !alignment_monotone(&entries, 1e-15) || last < 0.999 {
            s.violations += 1;
        }
    }
    s
}

/// Number of grid points where `‖e‖²` decreases by more than `1e-10` along the
/// pure-B closed loop, over random vanilla and GRU instances.
pub fn pure_b_decreases(instances: usize, seed: u64) -> (usize, usize) {
    let mut r = rng(seed);
    let cfg = AttackConfig {
        alpha: 0.05,
        ..Default::default()
    };
    let (mut bad, mut points) = (0, 0);
    for i in 0..instances {
        let kind = if i % 2 == 0 { CellKind::Vanilla } else { CellKind::Gru };
        let (n, m) = (r.random_range(1..=3), r.random_range(1..=2));
        let model = random_model(&mut r, kind, n, m, 2, 1.0);
        let signal = random_signal(&mut r, 20, m, 0.1);
        let field = model.field();
        let grid = TimeGrid::covering(&signal, 2);
        let nominal = integrate(&field, &model.initial_state(), &signal, Disturbance::None, &grid).unwrap();
        let e0 = uniform_vec(&mut r, n, 0.1);
        let energy = pure_b_closed_loop(&field, &nominal, &signal, &e0, &cfg).unwrap();
        points += energy.len();
        bad += energy.windows(2).filter(|w| w[1] < w[0] - 1e-10).count();
    }
    (bad, points)
}

#[derive(Debug, Default)]
pub struct CertificateStats {
    pub instances: usize,
    pub certified: usize,
    pub draws: usize,
    /// Draws with `μ∞(−A) ≥ 0` on a certified instance.
    pub violations: usize,
}

/// Monte-Carlo soundness of the vanilla certificate: on every certified random
/// instance, `draws` pairs `(h1, h2)` and inputs from the boxes must give
/// `μ∞(−A) < 0`.
pub fn certificate_soundness(instances: usize, draws: usize, seed: u64) -> CertificateStats {
    let mut r = rng(seed);
    let mut s = CertificateStats {
        instances,
        ..Default::default()
    };
    for _ in 0..instances {
        let (n, m) = (r.random_range(1..=3), r.random_range(1..=2));
        let mut u = uniform_mat(&mut r, n, n, 0.5);
        for i in 0..n {
            u[(i, i)] = r.random_range(0.5..6.0);
        }
        let w = uniform_mat(&mut r, n, m, 0.5);
        let b = uniform_vec(&mut r, n, 0.3);
        let h_box: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let c = r.random_range(-0.3..0.3);
                let half = r.random_range(0.01..0.3);
                (c - half, c + half)
            })
            .collect();
        let x_box: Vec<(f64, f64)> = (0..m).map(|_| (-0.2, 0.2)).collect();
        let rep = vanilla_certificate(&u, &w, &b, &x_box, &h_box).unwrap();
        if !rep.holds {
            continue;
        }
        s.certified += 1;
        let cell = CellParams::vanilla(u.clone(), w.clone(), b.clone()).unwrap();
        let field = ContinuousField::new(&cell, 1.0);
        let draw = |r: &mut ChaCha8Rng, bx: &[(f64, f64)]| Vector::from_iterator(bx.len(), bx.iter().map(|(lo, hi)| r.random_range(*lo..=*hi)));
        for _ in 0..draws {
            let h1 = draw(&mut r, &h_box);
            let h2 = draw(&mut r, &h_box);
            let x = draw(&mut r, &x_box);
            let a = state_matrix(&field, &h1, &(&h2 - &h1), &x, 8);
            s.draws += 1;
            if matrix_measure_inf(&-a) >= 0.0 {
                s.violations += 1;
            }
        }
    }
    s
}

/// `max |adjoint − fd| / max |fd|` for the shooting objective on a random
/// short instance, central differences with step `1e-6`.
pub fn adjoint_error(samples: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let model = random_model(&mut r, CellKind::Gru, 2, 1, 2, 0.5);
    let signal = random_signal(&mut r, samples, 1, 0.1);
    let h0 = model.initial_state();
    let readout = rnnattack::Readout {
        class: 0,
        threshold: 0.9,
        mode: rnnattack::LyapunovMode::Affine,
        ascend: true,
    };
    let raw = uniform_mat(&mut r, samples, 1, 1.0);
    let (_, grad) = shooting_objective(&model, &signal, &h0, &readout, &raw, 1.0, 0.15, 2).unwrap();
    let step = 1e-6;
    let mut fd = DMatrix::zeros(samples, 1);
    for k in 0..samples {
        let mut p = raw.clone();
        let mut q = raw.clone();
        p[(k, 0)] += step;
        q[(k, 0)] -= step;
        let fp = shooting_objective(&model, &signal, &h0, &readout, &p, 1.0, 0.15, 2).unwrap().0;
        let fq = shooting_objective(&model, &signal, &h0, &readout, &q, 1.0, 0.15, 2).unwrap().0;
        fd[(k, 0)] = (fp - fq) / (2.0 * step);
    }
    (grad - &fd).amax() / fd.amax().max(1e-300)
}
