//! Small dense optimizers: BFGS with analytic gradients for the Cholesky
//! least-squares fit, Levenberg–Marquardt for the beam-waist Gaussian fit.

use crate::float::Real;

#[derive(Debug, Clone)]
pub struct BfgsResult<T> {
    pub x: Vec<T>,
    pub cost: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `f` (returning cost, filling the gradient) from `x0`.
///
/// Dense inverse-Hessian BFGS with Armijo backtracking; the curvature update
/// is skipped whenever sᵀy is too small to keep H positive definite.
pub fn bfgs<T: Real>(
    x0: &[T],
    grad_tol: T,
    max_iter: usize,
    mut f: impl FnMut(&[T], &mut [T]) -> T,
) -> BfgsResult<T> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![T::zero(); n];
    let mut cost = f(&x, &mut g);

    // H ≈ inverse Hessian
    let mut h = vec![T::zero(); n * n];
    for i in 0..n {
        h[i * n + i] = T::one();
    }

    let mut g_new = vec![T::zero(); n];
    let mut iterations = 0;
    for _ in 0..max_iter {
        let gnorm = norm(&g);
        if gnorm <= grad_tol {
            return BfgsResult { x, cost, grad_norm: gnorm, iterations, converged: true };
        }
        iterations += 1;

        // p = −H g
        let mut p = vec![T::zero(); n];
        for i in 0..n {
            let mut acc = T::zero();
            for j in 0..n {
                acc += h[i * n + j] * g[j];
            }
            p[i] = -acc;
        }
        let mut slope = dot(&p, &g);
        if slope >= T::zero() {
            // H lost definiteness; fall back to steepest descent.
            for i in 0..n {
                p[i] = -g[i];
            }
            slope = -dot(&g, &g);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = if i == j { T::one() } else { T::zero() };
                }
            }
        }

        // Armijo backtracking from unit step.
        let c1 = T::of(1e-4);
        let mut step = T::one();
        let mut x_new = vec![T::zero(); n];
        let mut cost_new;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * p[i];
            }
            cost_new = f(&x_new, &mut g_new);
            if cost_new <= cost + c1 * step * slope && cost_new.is_finite() {
                // BFGS update with s = x_new − x, y = g_new − g.
                let mut s = vec![T::zero(); n];
                let mut y = vec![T::zero(); n];
                for i in 0..n {
                    s[i] = x_new[i] - x[i];
                    y[i] = g_new[i] - g[i];
                }
                let sy = dot(&s, &y);
                if sy > T::of(1e-12) * norm(&s) * norm(&y) {
                    bfgs_update(&mut h, &s, &y, sy, n);
                }
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                cost = cost_new;
                accepted = true;
                break;
            }
            step *= T::of(0.5);
        }
        if !accepted {
            // Line search exhausted; gradient is as converged as it will get.
            break;
        }
    }
    let grad_norm = norm(&g);
    BfgsResult { x, cost, grad_norm, iterations, converged: grad_norm <= grad_tol }
}

/// H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ with ρ = 1/(sᵀy).
fn bfgs_update<T: Real>(h: &mut [T], s: &[T], y: &[T], sy: T, n: usize) {
    let rho = T::one() / sy;
    // hy = H y
    let mut hy = vec![T::zero(); n];
    for i in 0..n {
        let mut acc = T::zero();
        for j in 0..n {
            acc += h[i * n + j] * y[j];
        }
        hy[i] = acc;
    }
    let yhy = dot(y, &hy);
    let coef = (T::one() + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            let v = h[i * n + j] + coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
            h[i * n + j] = v;
        }
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b.iter()).map(|(x, y)| *x * *y).sum()
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub struct LmResult<T> {
    pub params: Vec<T>,
    pub rss: T,
    /// Standard errors of the parameters from (JᵀJ)⁻¹ · RSS/(n−p).
    pub stderr: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

/// Levenberg–Marquardt for small dense least squares.
///
/// `model(params, residuals, jacobian)` fills `residuals` (length n) with
/// model(x_i) − data_i and `jacobian` (n×p row-major) with ∂residual_i/∂θ_j.
pub fn levenberg_marquardt<T: Real>(
    p0: &[T],
    n_data: usize,
    max_iter: usize,
    mut model: impl FnMut(&[T], &mut [T], &mut [T]),
) -> LmResult<T> {
    let p = p0.len();
    let mut params = p0.to_vec();
    let mut r = vec![T::zero(); n_data];
    let mut jac = vec![T::zero(); n_data * p];
    model(&params, &mut r, &mut jac);
    let mut rss = dot(&r, &r);

    let mut lambda = T::of(1e-3);
    let mut iterations = 0;
    let mut converged = false;
    let mut r_try = vec![T::zero(); n_data];
    let mut jac_try = vec![T::zero(); n_data * p];
    while iterations < max_iter {
        iterations += 1;
        // Normal equations: (JᵀJ + λ diag(JᵀJ)) δ = −Jᵀ r
        let mut jtj = vec![T::zero(); p * p];
        let mut jtr = vec![T::zero(); p];
        for i in 0..n_data {
            for a in 0..p {
                let ja = jac[i * p + a];
                jtr[a] += ja * r[i];
                for b in a..p {
                    jtj[a * p + b] += ja * jac[i * p + b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                jtj[a * p + b] = jtj[b * p + a];
            }
        }
        let mut lhs = jtj.clone();
        for a in 0..p {
            lhs[a * p + a] += lambda * jtj[a * p + a].max(T::of(1e-12));
        }
        let rhs: Vec<T> = jtr.iter().map(|v| -*v).collect();
        let delta = match solve(&lhs, &rhs, p) {
            Some(d) => d,
            None => break,
        };

        let params_try: Vec<T> =
            params.iter().zip(delta.iter()).map(|(a, d)| *a + *d).collect();
        model(&params_try, &mut r_try, &mut jac_try);
        let rss_try = dot(&r_try, &r_try);
        if rss_try.is_finite() && rss_try < rss {
            let improvement = (rss - rss_try) / rss.max(T::of(1e-300));
            params = params_try;
            std::mem::swap(&mut r, &mut r_try);
            std::mem::swap(&mut jac, &mut jac_try);
            rss = rss_try;
            lambda = (lambda * T::of(0.3)).max(T::of(1e-12));
            if improvement < T::of(1e-12) {
                converged = true;
                break;
            }
        } else {
            lambda *= T::of(8.0);
            if lambda > T::of(1e12) {
                break;
            }
        }
    }

    // Covariance from the final Jacobian.
    let mut jtj = vec![T::zero(); p * p];
    for i in 0..n_data {
        for a in 0..p {
            for b in 0..p {
                jtj[a * p + b] += jac[i * p + a] * jac[i * p + b];
            }
        }
    }
    let dof = T::of((n_data.saturating_sub(p)).max(1) as f64);
    let s2 = rss / dof;
    let stderr = invert(&jtj, p)
        .map(|inv| (0..p).map(|a| (inv[a * p + a].max(T::zero()) * s2).sqrt()).collect())
        .unwrap_or_else(|| vec![T::nan(); p]);

    LmResult { params, rss, stderr, iterations, converged }
}

/// Gaussian elimination with partial pivoting.
fn solve<T: Real>(a: &[T], b: &[T], n: usize) -> Option<Vec<T>> {
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for row in (col + 1)..n {
            if m[row * n + col].abs() > m[piv * n + col].abs() {
                piv = row;
            }
        }
        if m[piv * n + col].abs() < T::of(1e-300) {
            return None;
        }
        if piv != col {
            for j in 0..n {
                m.swap(col * n + j, piv * n + j);
            }
            rhs.swap(col, piv);
        }
        let diag = m[col * n + col];
        for row in (col + 1)..n {
            let factor = m[row * n + col] / diag;
            if factor == T::zero() {
                continue;
            }
            for j in col..n {
                let v = m[col * n + j];
                m[row * n + j] -= factor * v;
            }
            let v = rhs[col];
            rhs[row] -= factor * v;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for j in (row + 1)..n {
            acc -= m[row * n + j] * x[j];
        }
        x[row] = acc / m[row * n + row];
    }
    Some(x)
}

fn invert<T: Real>(a: &[T], n: usize) -> Option<Vec<T>> {
    let mut out = vec![T::zero(); n * n];
    for col in 0..n {
        let mut e = vec![T::zero(); n];
        e[col] = T::one();
        let x = solve(a, &e, n)?;
        for row in 0..n {
            out[row * n + col] = x[row];
        }
    }
    Some(out)
}
