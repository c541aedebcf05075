//! Uniformly sampled multichannel signals with zero-order-hold semantics.

use std::path::Path;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::report::{fmt_sig9, CsvTable};

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    dt: f64,
    /// `T x m`, one row per sample.
    values: Matrix,
}

impl SampledSignal {
    pub fn new(dt: f64, values: Matrix) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("sample interval must be positive, got {dt}")));
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Config("signal must have at least one sample and channel".into()));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                name: "signal".into(),
                index,
            });
        }
        Ok(SampledSignal { dt, values })
    }

    /// Single-channel signal from a slice of samples.
    pub fn scalar(dt: f64, samples: &[f64]) -> Result<Self> {
        SampledSignal::new(dt, Matrix::from_column_slice(samples.len(), 1, samples))
    }

    pub fn zeros(dt: f64, len: usize, channels: usize) -> Self {
        SampledSignal {
            dt,
            values: Matrix::zeros(len, channels),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.len() as f64
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn sample(&self, k: usize) -> Vector {
        self.values.row(k).transpose()
    }

    pub fn set_sample(&mut self, k: usize, v: &Vector) {
        self.values.row_mut(k).copy_from(&v.transpose());
    }

    /// Sample index held at continuous time `t`: `floor(t / dt)` clamped to
    /// the valid range.
    pub fn index_at(&self, t: f64) -> usize {
        let k = (t / self.dt).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.len() - 1)
        }
    }

    pub fn at(&self, t: f64) -> Vector {
        self.sample(self.index_at(t))
    }

    pub fn add(&self, other: &SampledSignal) -> Result<SampledSignal> {
        check_dim("signal length", self.len(), other.len())?;
        check_dim("signal channels", self.channels(), other.channels())?;
        SampledSignal::new(self.dt, &self.values + &other.values)
    }

    /// Repeat every sample `factor` times on a grid `factor` times finer.
    pub fn refine(&self, factor: usize) -> SampledSignal {
        let factor = factor.max(1);
        let mut values = Matrix::zeros(self.len() * factor, self.channels());
        for k in 0..self.len() {
            for s in 0..factor {
                values.row_mut(k * factor + s).copy_from(&self.values.row(k));
            }
        }
        SampledSignal {
            dt: self.dt / factor as f64,
            values,
        }
    }

    /// First `len` samples.
    pub fn truncate(&self, len: usize) -> SampledSignal {
        let len = len.clamp(1, self.len());
        SampledSignal {
            dt: self.dt,
            values: self.values.rows(0, len).into_owned(),
        }
    }

    /// Largest absolute entry of sample `k`.
    pub fn sample_norm_inf(&self, k: usize) -> f64 {
        self.values.row(k).iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn norm_l2(&self) -> f64 {
        self.values.norm()
    }

    pub fn to_table(&self, prefix: &str) -> CsvTable {
        let mut header = vec!["t".to_string()];
        header.extend((0..self.channels()).map(|c| format!("{prefix}{c}")));
        let mut table = CsvTable::new(header);
        for k in 0..self.len() {
            let mut row = vec![fmt_sig9(k as f64 * self.dt)];
            row.extend(self.values.row(k).iter().map(|v| fmt_sig9(*v)));
            table.push_raw(row);
        }
        table
    }

    /// Read a signal CSV: header row, first column `t`, one column per channel.
    pub fn read_csv(path: &Path) -> Result<SampledSignal> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, 1, e))?;
        let header = reader.headers().map_err(|e| csv_error(path, 1, e))?.clone();
        if header.get(0).map(str::trim) != Some("t") || header.len() < 2 {
            return Err(Error::Csv {
                path: path.into(),
                line: 1,
                message: "expected header `t,<channel>...`".into(),
            });
        }
        let channels = header.len() - 1;
        let mut times = Vec::new();
        let mut data = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| csv_error(path, line, e))?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::Csv {
                    path: path.into(),
                    line,
                    message: format!("`{s}`: {e}"),
                })
            };
            times.push(parse(&rec[0])?);
            for c in 1..=channels {
                data.push(parse(&rec[c])?);
            }
        }
        if times.len() < 2 {
            return Err(Error::Csv {
                path: path.into(),
                line: 2,
                message: "need at least two samples to infer the sample interval".into(),
            });
        }
        let dt = times[1] - times[0];
        for (k, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.abs().max(1.0) {
                return Err(Error::Csv {
                    path: path.into(),
                    line: k + 3,
                    message: "time column is not uniformly spaced".into(),
                });
            }
        }
        SampledSignal::new(dt, Matrix::from_row_slice(times.len(), channels, &data))
    }
}

fn csv_error(path: &Path, line: usize, e: csv::Error) -> Error {
    Error::Csv {
        path: path.into(),
        line,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_order_hold_clamps() {
        let s = SampledSignal::scalar(0.1, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.at(0.0)[0], 1.0);
        assert_eq!(s.at(0.15)[0], 2.0);
        assert_eq!(s.at(-1.0)[0], 1.0);
        assert_eq!(s.at(7.0)[0], 3.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SampledSignal::scalar(0.0, &[1.0]).is_err());
        assert!(SampledSignal::scalar(0.1, &[f64::NAN]).is_err());
    }

    #[test]
    fn refine_repeats_samples() {
        let s = SampledSignal::scalar(0.1, &[1.0, 2.0]).unwrap().refine(3);
        assert_eq!(s.len(), 6);
        assert!((s.dt() - 0.1 / 3.0).abs() < 1e-15);
        assert_eq!(s.values().column(0).as_slice(), &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.csv");
        let s = SampledSignal::scalar(0.1, &[0.5, -0.25, 0.125, 1.0]).unwrap();
        s.to_table("x").write(&path).unwrap();
        let back = SampledSignal::read_csv(&path).unwrap();
        assert_eq!(back.len(), 4);
        assert!((back.dt() - 0.1).abs() < 1e-12);
        assert_eq!(back.values(), s.values());
    }
}
