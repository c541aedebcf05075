use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attack::AttackConfig;
use crate::dynamics::Trajectory;
use crate::error::Error;
use crate::linalg::{argmax, Vector};
use crate::report::CsvTable;
use crate::signal::SampledSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Grad,
    Fixed,
    Dynamic,
    Optimal,
}

impl AttackMethod {
    pub const ALL: [AttackMethod; 4] = [
        AttackMethod::Grad,
        AttackMethod::Fixed,
        AttackMethod::Dynamic,
        AttackMethod::Optimal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackMethod::Grad => "grad",
            AttackMethod::Fixed => "fixed",
            AttackMethod::Dynamic => "dynamic",
            AttackMethod::Optimal => "optimal",
        }
    }
}

impl fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        AttackMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attack method `{s}` (grad | fixed | dynamic | optimal)")))
    }
}

/// Bookkeeping that does not change the perturbation itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AttackMeta {
    /// Magnitude of the first-sample gradient-sign step, zero when none was applied.
    pub kick: f64,
    pub jacobian_evals: usize,
    pub b_evals: usize,
    pub fp_iterations_max: usize,
    pub fp_iterations_total: usize,
    pub integration_substeps: usize,
    /// Optimal attack only: objective at the initial and best iterate.
    pub objective_initial: Option<f64>,
    pub objective_best: Option<f64>,
    pub improved: Option<bool>,
}

/// Per-sample decomposition of `d/dt ‖e‖²` along a fixed-point attack:
/// `total = 2 eᵀ(f(h2, x + d) − f(h1, x))`, `input = 2 eᵀ B δ̄`, `state = total − input`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyTrace {
    pub total: Vec<f64>,
    pub input: Vec<f64>,
    pub state: Vec<f64>,
}

/// Disturbance and error on the integration grid of the dynamic attack.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FineTrace {
    pub times: Vec<f64>,
    pub delta: Vec<Vector>,
    pub error: Vec<Vector>,
    pub sample: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct AttackResult {
    pub method: AttackMethod,
    pub config: AttackConfig,
    /// Applied perturbation, one row per sample (value held at the sample start).
    pub perturbation: SampledSignal,
    pub nominal_trajectory: Trajectory,
    pub perturbed_trajectory: Trajectory,
    /// Class probabilities at every sample instant `0..=T`.
    pub nominal_probs: Vec<Vector>,
    pub perturbed_probs: Vec<Vector>,
    pub nominal_class: usize,
    pub perturbed_class: usize,
    pub target_class: Option<usize>,
    pub success: bool,
    pub sample_norms_inf: Vec<f64>,
    pub norm_l2: f64,
    pub wall_time: f64,
    pub meta: AttackMeta,
    pub energy: Option<EnergyTrace>,
    pub fine: Option<FineTrace>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackSummary {
    pub method: AttackMethod,
    pub config: AttackConfig,
    pub success: bool,
    pub nominal_class: usize,
    pub perturbed_class: usize,
    pub target_class: Option<usize>,
    pub nominal_final_probs: Vec<f64>,
    pub perturbed_final_probs: Vec<f64>,
    pub max_norm_inf: f64,
    pub mean_norm_inf: f64,
    pub norm_l2: f64,
    pub wall_time: f64,
    pub meta: AttackMeta,
}

impl AttackResult {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn finish(
        method: AttackMethod,
        config: AttackConfig,
        perturbation: SampledSignal,
        nominal_trajectory: Trajectory,
        perturbed_trajectory: Trajectory,
        probs: impl Fn(&Vector) -> Vector,
        target_class: Option<usize>,
        nominal_class: usize,
    ) -> AttackResult {
        let samples = perturbation.len();
        let nominal_probs: Vec<Vector> = (0..=samples).map(|k| probs(nominal_trajectory.at_sample(k))).collect();
        let perturbed_probs: Vec<Vector> = (0..=samples).map(|k| probs(perturbed_trajectory.at_sample(k))).collect();
        let perturbed_class = argmax(perturbed_probs.last().expect("nonempty"));
        let success = match target_class {
            Some(t) => perturbed_class == t,
            None => perturbed_class != nominal_class,
        };
        let sample_norms_inf = (0..samples).map(|k| perturbation.sample_norm_inf(k)).collect();
        let norm_l2 = perturbation.norm_l2();
        AttackResult {
            method,
            config,
            perturbation,
            nominal_trajectory,
            perturbed_trajectory,
            nominal_probs,
            perturbed_probs,
            nominal_class,
            perturbed_class,
            target_class,
            success,
            sample_norms_inf,
            norm_l2,
            wall_time: 0.0,
            meta: AttackMeta::default(),
            energy: None,
            fine: None,
        }
    }

    /// Final-step probability of the class the attack ended in.
    pub fn perturbed_confidence(&self) -> f64 {
        self.perturbed_probs.last().expect("nonempty")[self.perturbed_class]
    }

    pub fn max_norm_inf(&self) -> f64 {
        self.sample_norms_inf.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_norm_inf(&self) -> f64 {
        self.sample_norms_inf.iter().sum::<f64>() / self.sample_norms_inf.len().max(1) as f64
    }

    pub fn summary(&self) -> AttackSummary {
        AttackSummary {
            method: self.method,
            config: self.config.clone(),
            success: self.success,
            nominal_class: self.nominal_class,
            perturbed_class: self.perturbed_class,
            target_class: self.target_class,
            nominal_final_probs: self.nominal_probs.last().expect("nonempty").iter().copied().collect(),
            perturbed_final_probs: self.perturbed_probs.last().expect("nonempty").iter().copied().collect(),
            max_norm_inf: self.max_norm_inf(),
            mean_norm_inf: self.mean_norm_inf(),
            norm_l2: self.norm_l2,
            wall_time: self.wall_time,
            meta: self.meta.clone(),
        }
    }

    /// `t, d0.., norm_inf`.
    pub fn perturbation_table(&self) -> CsvTable {
        let m = self.perturbation.channels();
        let mut header = vec!["t".to_string()];
        header.extend((0..m).map(|c| format!("d{c}")));
        header.push("norm_inf".into());
        let mut t = CsvTable::new(header);
        for k in 0..self.perturbation.len() {
            let mut row = vec![k as f64 * self.perturbation.dt()];
            row.extend(self.perturbation.sample(k).iter());
            row.push(self.sample_norms_inf[k]);
            t.push(row);
        }
        t
    }

    /// `t, nominal_p0.., perturbed_p0..` at every sample instant.
    pub fn probs_table(&self) -> CsvTable {
        let l = self.nominal_probs[0].len();
        let mut header = vec!["t".to_string()];
        header.extend((0..l).map(|c| format!("nominal_p{c}")));
        header.extend((0..l).map(|c| format!("perturbed_p{c}")));
        let mut t = CsvTable::new(header);
        for k in 0..self.nominal_probs.len() {
            let mut row = vec![k as f64 * self.perturbation.dt()];
            row.extend(self.nominal_probs[k].iter());
            row.extend(self.perturbed_probs[k].iter());
            t.push(row);
        }
        t
    }

    /// `t, h1_0.., h2_0..` on the integration grid.
    pub fn trajectory_table(&self) -> CsvTable {
        let n = self.nominal_trajectory.states[0].len();
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|c| format!("h1_{c}")));
        header.extend((0..n).map(|c| format!("h2_{c}")));
        let mut t = CsvTable::new(header);
        for (i, time) in self.nominal_trajectory.times.iter().enumerate() {
            let mut row = vec![*time];
            row.extend(self.nominal_trajectory.states[i].iter());
            row.extend(self.perturbed_trajectory.states[i].iter());
            t.push(row);
        }
        t
    }

    pub fn energy_table(&self) -> Option<CsvTable> {
        let e = self.energy.as_ref()?;
        let mut t = CsvTable::new(["t", "total", "input", "state"]);
        for k in 0..e.total.len() {
            t.push([k as f64 * self.perturbation.dt(), e.total[k], e.input[k], e.state[k]]);
        }
        Some(t)
    }

    pub fn fine_table(&self) -> Option<CsvTable> {
        let f = self.fine.as_ref()?;
        let m = f.delta.first()?.len();
        let n = f.error.first()?.len();
        let mut header = vec!["t".to_string()];
        header.extend((0..m).map(|c| format!("delta{c}")));
        header.extend((0..n).map(|c| format!("e{c}")));
        let mut t = CsvTable::new(header);
        for i in 0..f.times.len() {
            let mut row = vec![f.times[i]];
            row.extend(f.delta[i].iter());
            row.extend(f.error[i].iter());
            t.push(row);
        }
        Some(t)
    }
}
