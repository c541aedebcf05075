use crate::linalg::Vector;

/// Nearest candidate `v` to `x` among those with `(v − x)ᵀ(x̃ − x) ≥ 0`;
/// `x` itself when no candidate qualifies.
pub fn project_to_candidates(x: &Vector, x_tilde: &Vector, candidates: &[Vector]) -> Vector {
    let dir = x_tilde - x;
    candidates
        .iter()
        .filter(|v| (*v - x).dot(&dir) >= 0.0)
        .map(|v| ((v - x).norm_squared(), v))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, v)| v.clone())
        .unwrap_or_else(|| x.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn picks_aligned_nearest() {
        let c = [dvector![1.0, 0.0], dvector![-1.0, 0.0], dvector![0.0, 2.0]];
        let x = dvector![0.0, 0.0];
        assert_eq!(project_to_candidates(&x, &dvector![1.0, 0.0], &c), dvector![1.0, 0.0]);
        // degenerate direction: every candidate is aligned
        let c2 = [dvector![3.0, 0.0], dvector![0.0, -0.5]];
        assert_eq!(project_to_candidates(&x, &x, &c2), dvector![0.0, -0.5]);
        // strictly anti-aligned set
        let c3 = [dvector![-1.0, 0.0], dvector![-2.0, 1.0]];
        assert_eq!(project_to_candidates(&x, &dvector![1.0, 0.0], &c3), x);
    }
}
