use serde::{Deserialize, Serialize};

use crate::cell::CellParams;
use crate::dynamics::{ContinuousField, TimeGrid};
use crate::error::{check_dim, Error, Result};
use crate::head::HeadParams;
use crate::linalg::Vector;
use crate::signal::SampledSignal;

/// Timescale of the continuous lifting and how many RK4 steps cover one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lifting {
    pub delta: f64,
    pub substeps: usize,
}

impl Default for Lifting {
    fn default() -> Self {
        Lifting {
            delta: 1.0,
            substeps: 1,
        }
    }
}

/// A recurrent cell, its softmax head, and the lifting used to run it in
/// continuous time.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cell: CellParams,
    pub head: HeadParams,
    pub lifting: Lifting,
}

impl Model {
    pub fn new(cell: CellParams, head: HeadParams, lifting: Lifting) -> Result<Self> {
        check_dim("head input", cell.hidden_dim(), head.hidden_dim())?;
        if !(lifting.delta > 0.0 && lifting.delta.is_finite()) || lifting.substeps == 0 {
            return Err(Error::Config(format!("invalid lifting {lifting:?}")));
        }
        Ok(Model { cell, head, lifting })
    }

    pub fn field(&self) -> ContinuousField<'_> {
        ContinuousField::new(&self.cell, self.lifting.delta)
    }

    pub fn state_dim(&self) -> usize {
        self.cell.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.cell.input_dim()
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    pub fn initial_state(&self) -> Vector {
        Vector::zeros(self.state_dim())
    }

    /// Class probabilities read from a full state vector.
    pub fn probs(&self, state: &Vector) -> Vector {
        self.head
            .probs(&self.cell.readout(state))
            .expect("head matches cell")
    }

    /// Gradient of the readout objective with respect to the full state.
    pub fn lift_state_grad(&self, hidden_grad: Vector) -> Vector {
        let mut g = Vector::zeros(self.state_dim());
        g.rows_mut(0, hidden_grad.len()).copy_from(&hidden_grad);
        g
    }

    pub fn grid_for(&self, signal: &SampledSignal) -> TimeGrid {
        TimeGrid::covering(signal, self.lifting.substeps)
    }

    /// Final-step class probabilities of the lifted model on `signal`.
    pub fn classify(&self, signal: &SampledSignal) -> Result<Vector> {
        let traj = crate::dynamics::integrate(
            &self.field(),
            &self.initial_state(),
            signal,
            crate::dynamics::Disturbance::None,
            &self.grid_for(signal),
        )?;
        Ok(self.probs(traj.last()))
    }
}
