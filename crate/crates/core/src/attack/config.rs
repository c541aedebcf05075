use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::LyapunovMode;

/// How the fixed point `δ̄ = α B(δ̄)ᵀ e` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixedPointMethod {
    /// Successive substitution from zero, optionally relaxed.
    #[default]
    Picard,
    /// Newton on the residual, warm-started from the previous solution along
    /// a trajectory.
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// Disturbance gain.
    pub alpha: f64,
    /// Confidence threshold `ȳ` of the readout.
    pub threshold: f64,
    pub mode: LyapunovMode,
    pub fp_tol: f64,
    pub fp_max_iters: usize,
    pub fp_method: FixedPointMethod,
    /// Relaxation `θ ∈ (0, 1]` of the fixed-point iteration; 1 is the plain map.
    pub fp_relax: f64,
    /// Timescale of the fast disturbance dynamics.
    pub eps_fast: f64,
    /// Fast substeps per `eps_fast` of time; at least 10.
    pub fast_steps_per_eps: f64,
    /// Quadrature nodes for `B`.
    pub nodes: usize,
    /// Optional per-sample ∞-norm cap on the applied perturbation.
    pub eps_max: Option<f64>,
    /// Targeted attack toward this class.
    pub target_class: Option<usize>,
    /// Class to move away from in an untargeted attack. Resolved from the
    /// nominal run when unset.
    pub source_class: Option<usize>,
    /// Magnitude of the gradient-sign step applied during the first sample by
    /// the fixed-point family. Defaults to `alpha`; zero disables it.
    pub kick: Option<f64>,
    /// Integration substeps per sample. Defaults to the model's lifting.
    pub substeps: Option<usize>,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            alpha: 0.15,
            threshold: 0.9,
            mode: LyapunovMode::Affine,
            fp_tol: 1e-8,
            fp_max_iters: 100,
            fp_method: FixedPointMethod::Picard,
            fp_relax: 1.0,
            eps_fast: 0.01,
            fast_steps_per_eps: 10.0,
            nodes: 8,
            eps_max: None,
            target_class: None,
            source_class: None,
            kick: None,
            substeps: None,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative and finite");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if !(self.fp_tol > 0.0) || self.fp_max_iters == 0 {
            return bad("fixed-point tolerance and iteration cap must be positive");
        }
        if !(self.fp_relax > 0.0 && self.fp_relax <= 1.0) {
            return bad("fp_relax must lie in (0, 1]");
        }
        if !(self.eps_fast > 0.0 && self.eps_fast.is_finite()) {
            return bad("eps_fast must be positive");
        }
        if !(self.fast_steps_per_eps >= 10.0 && self.fast_steps_per_eps.is_finite()) {
            return bad("fast_steps_per_eps must be at least 10");
        }
        if self.nodes == 0 {
            return bad("quadrature needs at least one node");
        }
        if matches!(self.eps_max, Some(e) if !(e > 0.0)) {
            return bad("eps_max must be positive");
        }
        if matches!(self.kick, Some(k) if !(k >= 0.0)) {
            return bad("kick must be non-negative");
        }
        if self.substeps == Some(0) {
            return bad("substeps must be positive");
        }
        Ok(())
    }

    pub fn kick_magnitude(&self) -> f64 {
        self.kick.unwrap_or(self.alpha)
    }
}
