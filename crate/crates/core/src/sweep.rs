//! Attack-strength sweeps over a gain grid.

use serde::Serialize;

use crate::attack::{run_attack, AttackConfig, AttackMethod, OptimalConfig};
use crate::error::{Error, Result};
use crate::linalg::argmax;
use crate::model::Model;
use crate::par::{self, Execution};
use crate::report::CsvTable;
use crate::task::Dataset;

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub method: AttackMethod,
    /// Values of `alpha` (or `ε_max` for the optimal attack).
    pub gains: Vec<f64>,
    pub attack: AttackConfig,
    pub optimal: OptimalConfig,
    /// Only attack nominals of this true class.
    pub class_filter: Option<usize>,
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub gain: f64,
    pub attacked: usize,
    pub successes: usize,
    /// Runs that returned an error; counted as failures.
    pub errors: usize,
    pub success_rate: f64,
    /// Fraction of the attacked set still classified correctly.
    pub accuracy: f64,
    /// Means over successful runs; zero when there are none.
    pub mean_norm_inf: f64,
    pub mean_norm_l2: f64,
    pub mean_wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub method: AttackMethod,
    /// Dataset indices of the attacked nominals.
    pub attacked: Vec<usize>,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    /// One row per gain. Wall time is left out so reruns are byte-identical.
    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(["gain", "attacked", "successes", "errors", "success_rate", "accuracy", "mean_norm_inf", "mean_norm_l2"]);
        for p in &self.points {
            t.push([
                p.gain,
                p.attacked as f64,
                p.successes as f64,
                p.errors as f64,
                p.success_rate,
                p.accuracy,
                p.mean_norm_inf,
                p.mean_norm_l2,
            ]);
        }
        t
    }

    /// Number of grid points where the success rate drops.
    pub fn monotonicity_violations(&self) -> usize {
        self.points.windows(2).filter(|w| w[1].success_rate < w[0].success_rate).count()
    }
}

/// Indices of examples the model classifies correctly, optionally of one class.
pub fn correctly_classified(model: &Model, data: &Dataset, class: Option<usize>, exec: Execution) -> Result<Vec<usize>> {
    let preds = par::map(exec, &data.examples, |ex| model.classify(&ex.signal).map(|p| argmax(&p)));
    let mut out = Vec::new();
    for (i, (ex, p)) in data.examples.iter().zip(preds).enumerate() {
        if p? == ex.spec.label && class.is_none_or(|c| c == ex.spec.label) {
            out.push(i);
        }
    }
    Ok(out)
}

fn with_gain(cfg: &SweepConfig, gain: f64) -> (AttackConfig, OptimalConfig) {
    let mut a = cfg.attack.clone();
    let mut o = cfg.optimal.clone();
    if cfg.method == AttackMethod::Optimal {
        o.eps_max = gain;
    } else {
        a.alpha = gain;
    }
    (a, o)
}

struct Outcome {
    success: bool,
    norm_inf: f64,
    norm_l2: f64,
    wall: f64,
}

fn aggregate(gain: f64, outcomes: Vec<Result<Outcome>>) -> SweepPoint {
    let attacked = outcomes.len();
    let mut p = SweepPoint {
        gain,
        attacked,
        successes: 0,
        errors: 0,
        success_rate: 0.0,
        accuracy: 1.0,
        mean_norm_inf: 0.0,
        mean_norm_l2: 0.0,
        mean_wall_time: 0.0,
    };
    let mut timed = 0;
    for o in outcomes {
        match o {
            Ok(o) => {
                p.mean_wall_time += o.wall;
                timed += 1;
                if o.success {
                    p.successes += 1;
                    p.mean_norm_inf += o.norm_inf;
                    p.mean_norm_l2 += o.norm_l2;
                }
            }
            Err(_) => p.errors += 1,
        }
    }
    if p.successes > 0 {
        p.mean_norm_inf /= p.successes as f64;
        p.mean_norm_l2 /= p.successes as f64;
    }
    if timed > 0 {
        p.mean_wall_time /= timed as f64;
    }
    if attacked > 0 {
        p.success_rate = p.successes as f64 / attacked as f64;
        p.accuracy = 1.0 - p.success_rate;
    }
    p
}

/// Untargeted attacks on every correctly classified nominal at each gain.
/// Gain zero applies no perturbation, so nothing flips there.
pub fn sweep_experiment(model: &Model, data: &Dataset, cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.gains.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
        return Err(Error::Config("sweep gains must be finite and non-negative".into()));
    }
    let attacked = correctly_classified(model, data, cfg.class_filter, cfg.exec)?;
    let h0 = model.initial_state();
    let mut points = Vec::with_capacity(cfg.gains.len());
    for &gain in &cfg.gains {
        let (a, o) = with_gain(cfg, gain);
        let outcomes = par::map(cfg.exec, &attacked, |&i| {
            if gain == 0.0 {
                return Ok(Outcome {
                    success: false,
                    norm_inf: 0.0,
                    norm_l2: 0.0,
                    wall: 0.0,
                });
            }
            let r = run_attack(cfg.method, model, &data.examples[i].signal, &h0, &a, &o)?;
            Ok(Outcome {
                success: r.success,
                norm_inf: r.max_norm_inf(),
                norm_l2: r.norm_l2,
                wall: r.wall_time,
            })
        });
        points.push(aggregate(gain, outcomes));
    }
    Ok(SweepReport {
        method: cfg.method,
        attacked,
        points,
    })
}

/// Targeted success rates at one gain: `rates[source][target]` over the
/// correctly classified nominals of class `source`. The diagonal is zero.
pub fn targeted_matrix(model: &Model, data: &Dataset, cfg: &SweepConfig, gain: f64) -> Result<Vec<Vec<f64>>> {
    let l = model.classes();
    let h0 = model.initial_state();
    let (a, o) = with_gain(cfg, gain);
    let mut rates = vec![vec![0.0; l]; l];
    for (source, row) in rates.iter_mut().enumerate() {
        let idx = correctly_classified(model, data, Some(source), cfg.exec)?;
        if idx.is_empty() {
            continue;
        }
        for (target, rate) in row.iter_mut().enumerate() {
            if target == source || gain == 0.0 {
                continue;
            }
            let cfg_t = AttackConfig {
                target_class: Some(target),
                ..a.clone()
            };
            let hits = par::map(cfg.exec, &idx, |&i| {
                run_attack(cfg.method, model, &data.examples[i].signal, &h0, &cfg_t, &o).is_ok_and(|r| r.success)
            });
            *rate = hits.iter().filter(|h| **h).count() as f64 / idx.len() as f64;
        }
    }
    Ok(rates)
}
