//! Trajectory-separation envelopes and the vanilla-cell divergence certificate.

use serde::Serialize;

use crate::dynamics::{ContinuousField, Trajectory};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{midpoint_nodes, norm_inf, vec_norm_inf, Matrix, Vector};
use crate::measure::Envelopes;
use crate::report::CsvTable;
use crate::signal::SampledSignal;

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallEnvelope {
    pub times: Vec<f64>,
    /// Solution of `E' = βE + cγ`, `E(0) = 0`, with coefficients frozen per step.
    pub bound: Vec<f64>,
    /// `c Γ(t) exp(∫β)` with `Γ = ∫γ`; looser than `bound`.
    pub coarse: Vec<f64>,
    /// `‖h2 − h1‖∞` on the grid.
    pub observed: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub scale: f64,
}

impl GronwallEnvelope {
    pub fn contains_observed(&self, slack: f64) -> bool {
        self.observed.iter().zip(&self.bound).all(|(o, b)| *o <= b + slack)
    }

    pub fn to_table(&self) -> CsvTable {
        let mut t = CsvTable::new(["t", "observed", "bound", "coarse", "beta", "gamma"]);
        for i in 0..self.times.len() {
            t.push([
                self.times[i],
                self.observed[i],
                self.bound[i],
                self.coarse[i],
                self.beta[i],
                self.gamma[i],
            ]);
        }
        t
    }
}

impl Envelopes {
    pub fn to_table(&self, observed: Option<&[f64]>) -> CsvTable {
        let mut header = vec!["t", "lower", "upper"];
        if observed.is_some() {
            header.push("observed");
        }
        let mut t = CsvTable::new(header);
        for i in 0..self.times.len() {
            let mut row = vec![self.times[i], self.lower[i], self.upper[i]];
            if let Some(o) = observed {
                row.push(o[i]);
            }
            t.push(row);
        }
        t
    }
}

/// Upper envelope on `‖h2(t) − h1(t)‖∞` when `h2` is driven by a disturbance
/// with per-sample ∞-norm at most `alpha`.
///
/// `β` is the largest `‖∂f/∂h(h1 + λe, x)‖∞` over the quadrature nodes and
/// `γ = α max_λ ‖∂f/∂x(h2, x + λd)‖∞`; both are frozen at the larger of their
/// two endpoint values on each integration step. The input-side term is
/// scaled by `‖a‖∞ / min|a_i|`.
#[allow(clippy::too_many_arguments)]
pub fn gronwall_envelope(
    field: &ContinuousField<'_>,
    a: &Vector,
    nominal: &Trajectory,
    perturbed: &Trajectory,
    signal: &SampledSignal,
    disturbance: &SampledSignal,
    alpha: f64,
    nodes: usize,
) -> Result<GronwallEnvelope> {
    check_dim("weight vector", field.state_dim(), a.len())?;
    let amin = a.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if amin == 0.0 {
        return Err(Error::Config("weight vector has a zero entry".into()));
    }
    if nominal.times.len() != perturbed.times.len()
        || nominal.substeps_per_sample != perturbed.substeps_per_sample
    {
        return Err(Error::Config("trajectories must share one grid".into()));
    }
    check_dim("disturbance length", signal.len(), disturbance.len())?;
    if !(alpha >= 0.0) || nodes == 0 {
        return Err(Error::Config("need alpha >= 0 and at least one node".into()));
    }
    if let Some(k) = (0..disturbance.len()).find(|&k| disturbance.sample_norm_inf(k) > alpha * (1.0 + 1e-12)) {
        return Err(Error::Config(format!("disturbance exceeds alpha at sample {k}")));
    }
    let scale = vec_norm_inf(a) / amin;
    let sub = nominal.substeps_per_sample;
    let steps = nominal.times.len() - 1;
    let t0 = nominal.times[0];
    let k0 = (t0 / signal.dt()).round() as usize;

    let coeffs = |i: usize, k: usize| -> (f64, f64) {
        let h1 = &nominal.states[i];
        let h2 = &perturbed.states[i];
        let e = h2 - h1;
        let x = signal.sample(k);
        let d = disturbance.sample(k);
        let mut beta = 0.0f64;
        let mut gain = 0.0f64;
        for lam in midpoint_nodes(nodes) {
            beta = beta.max(norm_inf(&field.jacobians_unchecked(&(h1 + &e * lam), &x).state));
            gain = gain.max(norm_inf(&field.input_jacobian_unchecked(h2, &(&x + &d * lam))));
        }
        (beta, alpha * gain)
    };

    let mut env = GronwallEnvelope {
        times: nominal.times.clone(),
        bound: vec![0.0],
        coarse: vec![0.0],
        observed: nominal
            .states
            .iter()
            .zip(&perturbed.states)
            .map(|(a, b)| vec_norm_inf(&(b - a)))
            .collect(),
        beta: Vec::with_capacity(steps + 1),
        gamma: Vec::with_capacity(steps + 1),
        scale,
    };
    let (mut e, mut int_beta, mut int_gamma) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..steps {
        let k = (k0 + i / sub).min(signal.len() - 1);
        let tau = nominal.times[i + 1] - nominal.times[i];
        let (b0, g0) = coeffs(i, k);
        let (b1, g1) = coeffs(i + 1, k);
        env.beta.push(b0);
        env.gamma.push(g0);
        let (b, g) = (b0.max(b1), scale * g0.max(g1));
        let growth = (b * tau).exp();
        let forced = if b * tau > 1e-12 { g * (b * tau).exp_m1() / b } else { g * tau };
        e = e * growth + forced;
        int_beta += b * tau;
        int_gamma += g * tau;
        env.bound.push(e);
        env.coarse.push(int_gamma * int_beta.exp());
        if i + 1 == steps {
            env.beta.push(b1);
            env.gamma.push(g1);
        }
    }
    if steps == 0 {
        let (b, g) = coeffs(0, k0.min(signal.len() - 1));
        env.beta.push(b);
        env.gamma.push(g);
    }
    Ok(env)
}

/// Closed interval `[lo, hi]`.
pub type Interval = (f64, f64);

fn dot_interval(row: impl Iterator<Item = f64>, boxes: &[Interval]) -> Interval {
    row.zip(boxes).fold((0.0, 0.0), |(lo, hi), (w, &(a, b))| {
        let (p, q) = (w * a, w * b);
        (lo + p.min(q), hi + p.max(q))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowCertificate {
    pub row: usize,
    pub diagonal: f64,
    pub off_diagonal_sum: f64,
    pub z_lo: f64,
    pub z_hi: f64,
    pub cosh2_max: f64,
    pub margin: f64,
    pub holds: bool,
    /// `2 Σ_{j≠i}|U_ij| + max(W_i x + b_i) + 0.8` against `2 U_ii`.
    pub shortcut_lhs: f64,
    pub shortcut_rhs: f64,
    pub shortcut_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub rows: Vec<RowCertificate>,
    pub holds: bool,
    pub min_margin: f64,
}

impl CertificateReport {
    pub fn to_table(&self) -> CsvTable {
        let mut t = CsvTable::new([
            "row",
            "diagonal",
            "off_diagonal_sum",
            "z_lo",
            "z_hi",
            "cosh2_max",
            "margin",
            "holds",
            "shortcut_lhs",
            "shortcut_rhs",
            "shortcut_holds",
        ]);
        for r in &self.rows {
            t.push([
                r.row as f64,
                r.diagonal,
                r.off_diagonal_sum,
                r.z_lo,
                r.z_hi,
                r.cosh2_max,
                r.margin,
                f64::from(u8::from(r.holds)),
                r.shortcut_lhs,
                r.shortcut_rhs,
                f64::from(u8::from(r.shortcut_holds)),
            ]);
        }
        t
    }
}

/// Row-wise sufficient condition for `μ∞(−A) < 0` of the lifted vanilla cell
/// `tanh(U h + W x + b)` over the boxes `h ∈ h_box`, `x ∈ x_box`.
pub fn vanilla_certificate(
    u: &Matrix,
    w: &Matrix,
    b: &Vector,
    x_box: &[Interval],
    h_box: &[Interval],
) -> Result<CertificateReport> {
    let n = u.nrows();
    if !u.is_square() {
        return Err(Error::Config("U must be square".into()));
    }
    check_dim("W rows", n, w.nrows())?;
    check_dim("b length", n, b.len())?;
    check_dim("h box", n, h_box.len())?;
    check_dim("x box", w.ncols(), x_box.len())?;
    for &(lo, hi) in h_box.iter().chain(x_box) {
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Config(format!("invalid interval [{lo}, {hi}]")));
        }
    }
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let (uh_lo, uh_hi) = dot_interval(u.row(i).iter().copied(), h_box);
        let (wx_lo, wx_hi) = dot_interval(w.row(i).iter().copied(), x_box);
        let (z_lo, z_hi) = (uh_lo + wx_lo + b[i], uh_hi + wx_hi + b[i]);
        let zmax = z_lo.abs().max(z_hi.abs());
        let cosh2_max = zmax.cosh().powi(2);
        let diagonal = u[(i, i)];
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| u[(i, j)].abs()).sum();
        let margin = diagonal - off - cosh2_max;
        let shortcut_lhs = 2.0 * off + wx_hi + b[i] + 0.8;
        let shortcut_rhs = 2.0 * diagonal;
        rows.push(RowCertificate {
            row: i,
            diagonal,
            off_diagonal_sum: off,
            z_lo,
            z_hi,
            cosh2_max,
            margin,
            holds: margin > 0.0,
            shortcut_lhs,
            shortcut_rhs,
            shortcut_holds: shortcut_lhs < shortcut_rhs,
        });
    }
    let holds = rows.iter().all(|r| r.holds);
    let min_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(CertificateReport { rows, holds, min_margin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn toy_certificate() {
        let r = vanilla_certificate(&dmatrix![4.0], &dmatrix![0.0], &dvector![0.0], &[(0.0, 0.0)], &[(-0.1, 0.1)]).unwrap();
        assert!(r.holds);
        let c = 0.4f64.cosh().powi(2);
        assert!((r.rows[0].cosh2_max - c).abs() < 1e-15);
        assert!((r.min_margin - (4.0 - c)).abs() < 1e-15);
        assert!((r.min_margin - 2.831).abs() < 1e-3);
    }

    #[test]
    fn unit_diagonal_never_certifies() {
        for hb in [(-0.0, 0.0), (-1.0, 1.0), (0.3, 0.5)] {
            let r = vanilla_certificate(&dmatrix![1.0], &dmatrix![0.0], &dvector![0.0], &[(0.0, 0.0)], &[hb]).unwrap();
            assert!(!r.holds);
        }
    }

    #[test]
    fn interval_dot() {
        let (lo, hi) = dot_interval([2.0, -1.0].into_iter(), &[(-1.0, 0.5), (0.0, 3.0)]);
        assert_eq!((lo, hi), (-5.0, 1.0));
    }
}
