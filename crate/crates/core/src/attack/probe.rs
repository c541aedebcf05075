use serde::Serialize;

use crate::attack::fixed::solve_at;
use crate::attack::{dynamic_fixed_point_attack, AttackConfig, AttackResult};
use crate::dynamics::ContinuousField;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{cosine, vec_norm_inf, Vector};
use crate::model::Model;
use crate::report::CsvTable;
use crate::signal::SampledSignal;

/// Start of the window over which the tail plateau is averaged.
pub const PLATEAU_START: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct ProbeRun {
    pub eps: f64,
    pub init_index: usize,
    pub delta_init_norm: f64,
    pub times: Vec<f64>,
    /// `‖δ(t, ε) − h(t, e)‖∞` on the fast grid.
    pub y_norm: Vec<f64>,
    /// Time average of `‖y‖` over `t ≥ PLATEAU_START`.
    pub plateau: f64,
    /// Fitted exponential rate of `‖y‖` over `[0, 2ε]`; absent when `y(0) = 0`.
    pub decay_rate: Option<f64>,
    pub success: bool,
    pub confidence: f64,
    pub delta: Vec<Vector>,
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub eps: Vec<f64>,
    pub runs: Vec<ProbeRun>,
    /// Plateau per ε, taken from the first initial condition.
    pub plateaus: Vec<f64>,
    /// `plateau(ε_i) / plateau(ε_{i+1})`.
    pub plateau_ratios: Vec<f64>,
    /// Per ε, from the first initial condition with `y(0) ≠ 0`.
    pub decay_rates: Vec<Option<f64>>,
    pub plateau_monotone: bool,
    pub rates_monotone: bool,
    /// `rate · ε` within a factor of two of its value at the first ε.
    pub rate_band_ok: bool,
}

impl ProbeReport {
    pub fn holds(&self) -> bool {
        self.plateau_monotone && self.rates_monotone && self.rate_band_ok
    }

    pub fn summary_table(&self) -> CsvTable {
        let mut t = CsvTable::new(["eps", "plateau", "ratio_to_next", "decay_rate", "rate_times_eps"]);
        for (i, eps) in self.eps.iter().enumerate() {
            let rate = self.decay_rates[i].unwrap_or(f64::NAN);
            t.push([
                *eps,
                self.plateaus[i],
                self.plateau_ratios.get(i).copied().unwrap_or(f64::NAN),
                rate,
                rate * eps,
            ]);
        }
        t
    }

    /// Long format: `eps, init, t, y_norm`.
    pub fn curves_table(&self) -> CsvTable {
        let mut t = CsvTable::new(["eps", "init", "t", "y_norm"]);
        for r in &self.runs {
            for (time, y) in r.times.iter().zip(&r.y_norm) {
                t.push([r.eps, r.init_index as f64, *time, *y]);
            }
        }
        t
    }
}

/// Least-squares rate `r` of `v ≈ c e^{−r t}` over points with `t ≤ t_max`.
pub fn fit_decay_rate(times: &[f64], values: &[f64], t_max: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t <= t_max + 1e-12 && **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Trapezoid time average of `v` over `t ≥ from`.
pub(crate) fn tail_average(times: &[f64], v: &[f64], from: f64) -> f64 {
    let (mut area, mut span) = (0.0, 0.0);
    for i in 1..times.len() {
        if times[i - 1] >= from - 1e-12 {
            let w = times[i] - times[i - 1];
            area += 0.5 * w * (v[i - 1] + v[i]);
            span += w;
        }
    }
    if span > 0.0 {
        area / span
    } else {
        v.last().copied().unwrap_or(0.0)
    }
}

/// Distance from the fast disturbance to the fixed-point manifold along a
/// dynamic attack.
pub(crate) fn manifold_gap(model: &Model, signal: &SampledSignal, run: &AttackResult, cfg: &AttackConfig) -> Result<Vec<f64>> {
    let fine = run
        .fine
        .as_ref()
        .ok_or_else(|| Error::Config("run has no fast-grid trace".into()))?;
    let field = model.field();
    let mut out = Vec::with_capacity(fine.times.len());
    for i in 0..fine.times.len() {
        let e = &fine.error[i];
        let h2 = &run.nominal_trajectory.states[i] + e;
        let x = signal.sample(fine.sample[i]);
        // Continuation starts from the fast state itself so the gap is measured
        // to the branch the fast flow is attracted to.
        let fp = solve_at(&field, &h2, &x, e, cfg, cfg.alpha, cfg.fp_tol, Some(&fine.delta[i]))
            .map_err(|err| err.at_sample(fine.sample[i]))?;
        out.push(vec_norm_inf(&(&fine.delta[i] - &fp.delta)));
    }
    Ok(out)
}

pub(crate) fn probe_run(
    model: &Model,
    signal: &SampledSignal,
    h0: &Vector,
    cfg: &AttackConfig,
    eps: f64,
    init_index: usize,
    delta_init: &Vector,
) -> Result<ProbeRun> {
    let cfg = AttackConfig {
        eps_fast: eps,
        ..cfg.clone()
    };
    let run = dynamic_fixed_point_attack(model, signal, h0, &cfg, Some(delta_init))?;
    let y_norm = manifold_gap(model, signal, &run, &cfg)?;
    let fine = run.fine.as_ref().expect("dynamic attack records its trace");
    let plateau = tail_average(&fine.times, &y_norm, PLATEAU_START);
    let decay_rate = if y_norm[0] > 0.0 {
        fit_decay_rate(&fine.times, &y_norm, 2.0 * eps)
    } else {
        None
    };
    Ok(ProbeRun {
        eps,
        init_index,
        delta_init_norm: vec_norm_inf(delta_init),
        times: fine.times.clone(),
        y_norm,
        plateau,
        decay_rate,
        success: run.success,
        confidence: run.perturbed_confidence(),
        delta: fine.delta.clone(),
    })
}

/// Run the dynamic attack for every `(ε, δ_init)` pair and summarise how the
/// gap to the fixed-point manifold scales with `ε`.
pub fn theorem2_probe(
    model: &Model,
    signal: &SampledSignal,
    h0: &Vector,
    cfg: &AttackConfig,
    eps_list: &[f64],
    delta_inits: &[Vector],
) -> Result<ProbeReport> {
    if eps_list.is_empty() || delta_inits.is_empty() {
        return Err(Error::Config("probe needs at least one eps and one initial disturbance".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("eps list must be strictly decreasing".into()));
    }
    let mut runs = Vec::new();
    for &eps in eps_list {
        for (j, d) in delta_inits.iter().enumerate() {
            runs.push(probe_run(model, signal, h0, cfg, eps, j, d)?);
        }
    }
    let per = delta_inits.len();
    let plateaus: Vec<f64> = (0..eps_list.len()).map(|i| runs[i * per].plateau).collect();
    let plateau_ratios: Vec<f64> = plateaus.windows(2).map(|w| w[0] / w[1]).collect();
    let decay_rates: Vec<Option<f64>> = (0..eps_list.len())
        .map(|i| runs[i * per..(i + 1) * per].iter().find_map(|r| r.decay_rate))
        .collect();
    let plateau_monotone = plateaus.windows(2).all(|w| w[1] < w[0]);
    let rates_monotone = decay_rates.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b > a));
    let rate_band_ok = match decay_rates[0] {
        Some(r0) => decay_rates.iter().zip(eps_list).all(|(r, eps)| {
            r.is_some_and(|r| {
                let q = (r * eps) / (r0 * eps_list[0]);
                (0.5..=2.0).contains(&q)
            })
        }),
        None => false,
    };
    Ok(ProbeReport {
        eps: eps_list.to_vec(),
        runs,
        plateaus,
        plateau_ratios,
        decay_rates,
        plateau_monotone,
        rates_monotone,
        rate_band_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentEntry {
    pub alpha: f64,
    pub cosine: Option<f64>,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

/// Cosine between the fixed point `δ̄(α)` and `∂f/∂x(h2, x)ᵀ e` for each gain.
/// Contraction failures are recorded per entry.
pub fn alignment_diagnostic(
    field: &ContinuousField<'_>,
    h2: &Vector,
    x: &Vector,
    e: &Vector,
    alphas: &[f64],
    cfg: &AttackConfig,
) -> Result<Vec<AlignmentEntry>> {
    check_dim("perturbed state", field.state_dim(), h2.len())?;
    check_dim("error state", field.state_dim(), e.len())?;
    check_dim("input", field.input_dim(), x.len())?;
    if e.iter().all(|v| *v == 0.0) {
        return Err(Error::Config("alignment needs a nonzero error state".into()));
    }
    let g = field.input_jacobian_unchecked(h2, x).tr_mul(e);
    Ok(alphas
        .iter()
        .map(|&alpha| match solve_at(field, h2, x, e, cfg, alpha, cfg.fp_tol, None) {
            Ok(fp) => AlignmentEntry {
                alpha,
                cosine: Some(cosine(&fp.delta, &g)),
                iterations: Some(fp.iterations),
                error: None,
            },
            Err(err) => AlignmentEntry {
                alpha,
                cosine: None,
                iterations: None,
                error: Some(err.to_string()),
            },
        })
        .collect())
}

/// True when the cosines that were computed never decrease along the list.
pub fn alignment_monotone(entries: &[AlignmentEntry], slack: f64) -> bool {
    let c: Vec<f64> = entries.iter().filter_map(|e| e.cosine).collect();
    c.windows(2).all(|w| w[1] >= w[0] - slack)
}
