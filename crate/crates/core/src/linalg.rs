//! Small dense helpers shared by the cell, dynamics and attack code.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `diag(d) * m` without forming the diagonal matrix.
pub fn scale_rows(d: &Vector, m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= d[i];
    }
    out
}

/// Induced infinity norm: largest absolute row sum.
pub fn norm_inf(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_norm_inf(v: &Vector) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn vec_norm_1(v: &Vector) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Componentwise sign with `sign(0) = 0`.
pub fn sign(v: &Vector) -> Vector {
    v.map(|x| {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    })
}

pub fn all_finite<'a>(values: impl IntoIterator<Item = &'a f64>) -> Option<usize> {
    values.into_iter().position(|v| !v.is_finite())
}

pub fn argmax(v: &Vector) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

pub fn cosine(a: &Vector, b: &Vector) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(b) / (na * nb)
}

/// Composite midpoint nodes on `[0, 1]`.
pub fn midpoint_nodes(n: usize) -> impl Iterator<Item = f64> {
    let w = 1.0 / n as f64;
    (0..n).map(move |j| (j as f64 + 0.5) * w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn sign_of_zero_is_zero() {
        let s = sign(&Vector::from_vec(vec![-2.0, 0.0, 3.0, -0.0]));
        assert_eq!(s.as_slice(), &[-1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn inf_norm_is_row_sum() {
        let m = dmatrix![1.0, -2.0; 0.5, 0.25];
        assert_eq!(norm_inf(&m), 3.0);
    }

    #[test]
    fn sigmoid_is_stable_for_large_arguments() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((sigmoid(800.0) - 1.0).abs() < 1e-15);
    }
}
