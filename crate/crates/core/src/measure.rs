//! Matrix measures under the ∞-induced norm and Coppel envelopes.

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, Matrix};

/// `μ∞(M) = max_i (M_ii + Σ_{j≠i} |M_ij|)`.
pub fn matrix_measure_inf(m: &Matrix) -> f64 {
    assert!(m.is_square(), "matrix measure needs a square matrix");
    (0..m.nrows())
        .map(|i| {
            let off: f64 = (0..m.ncols()).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            m[(i, i)] + off
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// One-sided difference quotient `(‖I + θM‖∞ − 1) / θ`.
pub fn matrix_measure_limit(m: &Matrix, theta: f64) -> f64 {
    let n = m.nrows();
    let shifted = Matrix::identity(n, n) + m * theta;
    (norm_inf(&shifted) - 1.0) / theta
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelopes {
    pub times: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Two-sided bounds on `‖h(t)‖∞` for `ḣ = A(t) h` from samples of `A` on a
/// uniform grid of spacing `dt`, exponents integrated by the trapezoid rule.
pub fn coppel_envelopes(a_samples: &[Matrix], dt: f64, h0_norm: f64) -> Result<Envelopes> {
    if a_samples.is_empty() {
        return Err(Error::Config("need at least one matrix sample".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("sample spacing must be positive, got {dt}")));
    }
    let up: Vec<f64> = a_samples.iter().map(matrix_measure_inf).collect();
    let lo: Vec<f64> = a_samples.iter().map(|a| -matrix_measure_inf(&-a)).collect();
    let mut env = Envelopes {
        times: Vec::with_capacity(a_samples.len()),
        lower: Vec::with_capacity(a_samples.len()),
        upper: Vec::with_capacity(a_samples.len()),
    };
    let (mut il, mut iu) = (0.0, 0.0);
    for i in 0..a_samples.len() {
        if i > 0 {
            il += 0.5 * dt * (lo[i - 1] + lo[i]);
            iu += 0.5 * dt * (up[i - 1] + up[i]);
        }
        env.times.push(i as f64 * dt);
        env.lower.push(h0_norm * il.exp());
        env.upper.push(h0_norm * iu.exp());
    }
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn closed_form_examples() {
        assert_eq!(matrix_measure_inf(&Matrix::identity(3, 3)), 1.0);
        assert_eq!(matrix_measure_inf(&-Matrix::identity(3, 3)), -1.0);
        assert_eq!(matrix_measure_inf(&dmatrix![-2.0, 1.0; 0.0, -3.0]), -1.0);
    }

    #[test]
    fn limit_agrees() {
        let m = dmatrix![-2.0, 1.0; 0.5, -3.0];
        assert!((matrix_measure_limit(&m, 1e-8) - matrix_measure_inf(&m)).abs() < 1e-6);
    }

    #[test]
    fn constant_scalar_envelopes() {
        let a = vec![dmatrix![-1.0]; 11];
        let env = coppel_envelopes(&a, 0.1, 1.0).unwrap();
        for (t, (l, u)) in env.times.iter().zip(env.lower.iter().zip(&env.upper)) {
            assert!((l - (-t).exp()).abs() < 1e-12);
            assert!((u - (-t).exp()).abs() < 1e-12);
        }
        let zero = coppel_envelopes(&vec![Matrix::zeros(2, 2); 5], 0.1, 2.5).unwrap();
        assert!(zero.lower.iter().chain(&zero.upper).all(|v| *v == 2.5));
    }

    #[test]
    fn time_varying_scalar() {
        let n = 100;
        let dt = 1.0 / (n - 1) as f64;
        let a: Vec<Matrix> = (0..n).map(|i| dmatrix![-(i as f64 * dt)]).collect();
        let env = coppel_envelopes(&a, dt, 1.0).unwrap();
        for (t, u) in env.times.iter().zip(&env.upper) {
            assert!((u - (-t * t / 2.0).exp()).abs() < 1e-4);
        }
    }
}
