//! Frequency-discrimination toy task: is the sine's period in `(5, 6)`?

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SampledSignal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrequencyTaskConfig {
    /// Periods labelled class 0.
    pub class0: (f64, f64),
    /// Lower class-1 band `(class1_min_period, class0.0)` and upper band
    /// `(class0.1, class1_max_period)`.
    pub class1_min_period: f64,
    pub class1_max_period: f64,
    pub length: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for FrequencyTaskConfig {
    fn default() -> Self {
        FrequencyTaskConfig {
            class0: (5.0, 6.0),
            class1_min_period: 0.5,
            class1_max_period: 100.0,
            length: 100,
            dt: 0.1,
            seed: 0,
        }
    }
}

impl FrequencyTaskConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.class0;
        if !(0.0 < self.class1_min_period && self.class1_min_period < a && a < b && b < self.class1_max_period) {
            return Err(Error::Config(format!("period bands out of order in {self:?}")));
        }
        if self.length == 0 || !(self.dt > 0.0) {
            return Err(Error::Config("length and dt must be positive".into()));
        }
        Ok(())
    }

    /// Label of a period, `None` on a band edge or outside every band.
    pub fn label_for_period(&self, period: f64) -> Option<usize> {
        let (a, b) = self.class0;
        if period > a && period < b {
            Some(0)
        } else if (period > 0.0 && period < a) || (period > b && period < self.class1_max_period) {
            Some(1)
        } else {
            None
        }
    }

    /// Samples `sin(2π(k dt + φ)/T)`, `k = 0..length`.
    pub fn signal(&self, period: f64, phase: f64) -> SampledSignal {
        let v: Vec<f64> = (0..self.length)
            .map(|k| (2.0 * PI * (k as f64 * self.dt + phase) / period).sin())
            .collect();
        SampledSignal::scalar(self.dt, &v).expect("finite samples")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleSpec {
    pub label: usize,
    pub period: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub spec: ExampleSpec,
    pub signal: SampledSignal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: FrequencyTaskConfig,
    pub examples: Vec<Example>,
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// `count` labelled sines with alternating labels `0, 1, 0, ...`. Class-0
/// periods are uniform on the class-0 band; class-1 periods are log-uniform
/// on one of the two class-1 bands, picked with probability proportional to
/// the band's log-length. The phase is uniform on `[0, T)`.
pub fn gen_frequency_dataset(cfg: &FrequencyTaskConfig, count: usize) -> Result<Dataset> {
    cfg.validate()?;
    if !count.is_multiple_of(2) {
        return Err(Error::Config(format!("dataset size must be even for balanced classes, got {count}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (a, b) = cfg.class0;
    let w_low = (a / cfg.class1_min_period).ln();
    let w_high = (cfg.class1_max_period / b).ln();
    let mut examples = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % 2;
        let period = loop {
            let p = if label == 0 {
                rng.random_range(a..b)
            } else if rng.random::<f64>() * (w_low + w_high) < w_low {
                log_uniform(&mut rng, cfg.class1_min_period, a)
            } else {
                log_uniform(&mut rng, b, cfg.class1_max_period)
            };
            if cfg.label_for_period(p) == Some(label) {
                break p;
            }
        };
        let phase = rng.random_range(0.0..period);
        examples.push(Example {
            spec: ExampleSpec { label, period, phase },
            signal: cfg.signal(period, phase),
        });
    }
    Ok(Dataset {
        config: cfg.clone(),
        examples,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    format: String,
    version: u32,
    config: FrequencyTaskConfig,
    examples: Vec<ExampleSpec>,
}

pub const DATASET_FORMAT: &str = "rnnattack-dataset";

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.spec.label).collect()
    }

    /// Only `(label, period, phase)` is stored; signals are rebuilt on load.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = DatasetFile {
            format: DATASET_FORMAT.into(),
            version: 1,
            config: self.config.clone(),
            examples: self.examples.iter().map(|e| e.spec).collect(),
        };
        let text = serde_json::to_string_pretty(&file).expect("dataset serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: DatasetFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        if file.format != DATASET_FORMAT || file.version != 1 {
            return Err(Error::Schema(format!("not a version-1 `{DATASET_FORMAT}` file")));
        }
        file.config.validate()?;
        let examples = file
            .examples
            .into_iter()
            .map(|spec| Example {
                signal: file.config.signal(spec.period, spec.phase),
                spec,
            })
            .collect();
        Ok(Dataset {
            config: file.config,
            examples,
        })
    }
}
