//! Recurrent classifiers as continuous-time control systems: cell and head
//! evaluation with analytic Jacobians, the lifted ODE and its error system,
//! matrix-measure certificates and separation bounds, and several
//! feedback-style adversarial perturbation constructions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod bounds;
pub mod cell;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod head;
pub mod linalg;
pub mod measure;
pub mod model;
pub mod par;
pub mod report;
pub mod signal;
pub mod sweep;
pub mod task;
pub mod train;
pub mod weights;

pub use cell::{CellKind, CellParams};
pub use dynamics::{ContinuousField, Disturbance, TimeGrid, Trajectory};
pub use error::{Error, Result};
pub use head::{HeadParams, LyapunovMode, Readout};
pub use linalg::{Matrix, Vector};
pub use model::{Lifting, Model};
pub use signal::SampledSignal;
