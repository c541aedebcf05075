use serde::Serialize;

use crate::error::Result;
use crate::linalg::argmax;
use crate::model::Model;
use crate::par::{self, Execution};
use crate::task::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<usize>,
}

impl EvalReport {
    pub fn correct(&self) -> usize {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }
}

/// Final-step argmax of the lifted model against the labels.
pub fn evaluate(model: &Model, data: &Dataset, exec: Execution) -> Result<EvalReport> {
    let preds: Vec<Result<usize>> = par::map(exec, &data.examples, |ex| {
        model.classify(&ex.signal).map(|p| argmax(&p))
    });
    let predictions = preds.into_iter().collect::<Result<Vec<_>>>()?;
    let l = model.classes();
    let mut confusion = vec![vec![0; l]; l];
    for (ex, p) in data.examples.iter().zip(&predictions) {
        confusion[ex.spec.label.min(l - 1)][*p] += 1;
    }
    let correct: usize = (0..l).map(|i| confusion[i][i]).sum();
    Ok(EvalReport {
        accuracy: correct as f64 / data.len().max(1) as f64,
        confusion,
        predictions,
    })
}
