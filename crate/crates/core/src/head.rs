//! Softmax classifier head and the Lyapunov-like confidence readout.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `l x n`
    pub weight: Matrix,
    pub bias: Vector,
}

impl HeadParams {
    pub fn new(weight: Matrix, bias: Vector) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::Shape {
                name: "head_b".into(),
                rows: weight.nrows(),
                cols: 1,
                found_rows: bias.len(),
                found_cols: 1,
            });
        }
        if weight.nrows() < 2 {
            return Err(Error::Config("a classifier head needs at least two classes".into()));
        }
        for (name, data) in [("head_W", weight.as_slice()), ("head_b", bias.as_slice())] {
            if let Some(index) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    name: name.into(),
                    index,
                });
            }
        }
        Ok(HeadParams { weight, bias })
    }

    pub fn zeros(classes: usize, hidden: usize) -> Self {
        HeadParams {
            weight: Matrix::zeros(classes, hidden),
            bias: Vector::zeros(classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.weight.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn logits(&self, h: &Vector) -> Result<Vector> {
        check_dim("head input", self.hidden_dim(), h.len())?;
        let mut z = self.bias.clone();
        z.gemv(1.0, &self.weight, h, 1.0);
        Ok(z)
    }

    /// `softmax(W h + b)`.
    pub fn probs(&self, h: &Vector) -> Result<Vector> {
        Ok(softmax(&self.logits(h)?))
    }

    /// Gradient of class probability `class` with respect to `h`.
    pub fn prob_grad(&self, h: &Vector, class: usize) -> Result<(f64, Vector)> {
        let p = self.probs(h)?;
        let pc = p[class];
        // ∂p_c/∂z_j = p_c (δ_cj − p_j)
        let dz = Vector::from_fn(p.len(), |j, _| pc * (f64::from(j == class) - p[j]));
        Ok((pc, self.weight.tr_mul(&dz)))
    }
}

pub fn softmax(z: &Vector) -> Vector {
    let max = z.max();
    let e = z.map(|v| (v - max).exp());
    let s = e.sum();
    e / s
}

/// `V(h) = max(0, y_target(h) − ȳ)²` and its gradient. The gradient is exactly
/// zero whenever `y_target ≤ ȳ`.
pub fn lyapunov_value_grad(
    head: &HeadParams,
    h: &Vector,
    target_class: usize,
    threshold: f64,
) -> Result<(f64, Vector)> {
    if target_class >= head.classes() {
        return Err(Error::Config(format!(
            "target class {target_class} out of range for {} classes",
            head.classes()
        )));
    }
    let (p, dp) = head.prob_grad(h, target_class)?;
    let gap = p - threshold;
    if gap <= 0.0 {
        Ok((0.0, Vector::zeros(h.len())))
    } else {
        Ok((gap * gap, dp * (2.0 * gap)))
    }
}

/// How the attack readout uses `V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LyapunovMode {
    /// The clipped square `max(0, y − ȳ)²`; no gradient below the threshold.
    Clipped,
    /// The affine surrogate `y − ȳ`. Same gradient direction as the clipped
    /// form on its active branch, but defined everywhere.
    #[default]
    Affine,
}

/// Readout steered by the attacks: `V` on class `class`, ascended when
/// `ascend` is true and descended otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub class: usize,
    pub threshold: f64,
    pub mode: LyapunovMode,
    pub ascend: bool,
}

impl Readout {
    /// Value and gradient of the signed objective (larger is better for the attacker).
    pub fn objective(&self, head: &HeadParams, h: &Vector) -> Result<(f64, Vector)> {
        let (v, g) = match self.mode {
            LyapunovMode::Clipped => lyapunov_value_grad(head, h, self.class, self.threshold)?,
            LyapunovMode::Affine => {
                let (p, g) = head.prob_grad(h, self.class)?;
                (p - self.threshold, g)
            }
        };
        Ok(if self.ascend { (v, g) } else { (-v, -g) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn zero_head_is_uniform() {
        let head = HeadParams::zeros(2, 3);
        let p = head.probs(&dvector![0.2, -1.0, 4.0]).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn known_logits() {
        let head = HeadParams::new(Matrix::zeros(2, 1), dvector![3f64.ln(), 0.0]).unwrap();
        let p = head.probs(&dvector![0.0]).unwrap();
        assert_relative_eq!(p[0], 0.75, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn bias_shift_is_invisible() {
        let w = dmatrix![0.3, -1.2; 2.0, 0.5];
        let h = dvector![0.7, -0.1];
        let a = HeadParams::new(w.clone(), dvector![0.1, -0.4]).unwrap();
        let b = HeadParams::new(w, dvector![5.1, 4.6]).unwrap();
        assert_relative_eq!(a.probs(&h).unwrap(), b.probs(&h).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_branches() {
        // y_target = 0.5
        let head = HeadParams::zeros(2, 2);
        let (v, g) = lyapunov_value_grad(&head, &dvector![0.3, 0.3], 0, 0.9).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, Vector::zeros(2));

        // y_target = 1 (to double precision)
        let head = HeadParams::new(Matrix::zeros(2, 1), dvector![50.0, -50.0]).unwrap();
        let (v, _) = lyapunov_value_grad(&head, &dvector![0.0], 0, 0.9).unwrap();
        assert_relative_eq!(v, 0.01, epsilon = 1e-12);

        assert!(lyapunov_value_grad(&head, &dvector![0.0], 2, 0.9).is_err());
    }

    #[test]
    fn affine_readout_flips_sign_when_descending() {
        let head = HeadParams::new(dmatrix![1.0; -1.0], dvector![0.0, 0.0]).unwrap();
        let up = Readout {
            class: 1,
            threshold: 0.9,
            mode: LyapunovMode::Affine,
            ascend: true,
        };
        let down = Readout { ascend: false, ..up };
        let (a, ga) = up.objective(&head, &dvector![0.2]).unwrap();
        let (b, gb) = down.objective(&head, &dvector![0.2]).unwrap();
        assert_eq!(a, -b);
        assert_eq!(ga, -gb);
    }
}
