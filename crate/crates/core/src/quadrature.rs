//! Gauss–Legendre nodes and weights on [−1, 1], used by the quadrature
//! oracles that cross-check the analytic kernel normalization.

use crate::float::Real;

/// Nodes and weights of the n-point Gauss–Legendre rule, by Newton iteration
/// on the Legendre polynomial. Exact for polynomials of degree ≤ 2n−1.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 2);
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = T::of(n as f64);
    for i in 0..n.div_ceil(2) {
        // Chebyshev-based initial guess.
        let mut x = T::of((std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos());
        let mut dp = T::zero();
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P'_n(x).
            let mut p0 = T::one();
            let mut p1 = x;
            for k in 1..n {
                let kf = T::of(k as f64);
                let p2 = ((T::of(2.0) * kf + T::one()) * x * p1 - kf * p0) / (kf + T::one());
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - T::one());
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() <= T::epsilon() * T::of(4.0) {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = T::of(2.0) / ((T::one() - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre::<f64>(8);
        // ∫_{-1}^{1} x^k dx = 2/(k+1) for even k, 0 for odd
        for k in 0..=15usize {
            let got: f64 = x.iter().zip(w.iter()).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
            let want = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            assert!((got - want).abs() < 1e-13, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn weights_sum_to_two() {
        for n in [2usize, 5, 24, 51] {
            let (_, w) = gauss_legendre::<f64>(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-12);
        }
    }
}
