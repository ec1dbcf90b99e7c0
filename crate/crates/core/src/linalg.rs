//! Dense complex linear algebra for the small (d ≤ 16 or so) matrices this
//! crate works with. Matrices are row-major `&[Complex<T>]` slices of length
//! `d*d`; nothing here is tuned for large dimensions.

use num_complex::Complex;

use crate::float::Real;

/// C = A · B for d×d matrices.
pub fn matmul<T: Real>(a: &[Complex<T>], b: &[Complex<T>], d: usize) -> Vec<Complex<T>> {
    let mut out = vec![Complex::new(T::zero(), T::zero()); d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            if aik.norm_sqr() == T::zero() {
                continue;
            }
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

/// Conjugate transpose.
pub fn adjoint<T: Real>(a: &[Complex<T>], d: usize) -> Vec<Complex<T>> {
    let mut out = vec![Complex::new(T::zero(), T::zero()); d * d];
    for i in 0..d {
        for j in 0..d {
            out[j * d + i] = a[i * d + j].conj();
        }
    }
    out
}

/// (A + A†)/2.
pub fn hermitize<T: Real>(a: &[Complex<T>], d: usize) -> Vec<Complex<T>> {
    let half = T::of(0.5);
    let mut out = vec![Complex::new(T::zero(), T::zero()); d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = (a[i * d + j] + a[j * d + i].conj()) * half;
        }
    }
    out
}

pub fn trace<T: Real>(a: &[Complex<T>], d: usize) -> Complex<T> {
    let mut t = Complex::new(T::zero(), T::zero());
    for i in 0..d {
        t += a[i * d + i];
    }
    t
}

/// Squared Frobenius distance Σ|a_ij − b_ij|².
pub fn frobenius_dist2<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (*x - *y).norm_sqr())
        .sum()
}

/// max_ij |a_ij − a†_ij|, the Hermiticity defect.
pub fn hermiticity_defect<T: Real>(a: &[Complex<T>], d: usize) -> T {
    let mut worst = T::zero();
    for i in 0..d {
        for j in 0..d {
            let dev = (a[i * d + j] - a[j * d + i].conj()).norm();
            if dev > worst {
                worst = dev;
            }
        }
    }
    worst
}

/// Eigendecomposition of a Hermitian matrix by the cyclic Jacobi method.
///
/// Returns eigenvalues in ascending order and the unitary `V` (row-major,
/// eigenvectors in columns) with `A = V diag(λ) V†`. Input is implicitly
/// symmetrized; only the Hermitian part is seen.
pub fn hermitian_eigen<T: Real>(a: &[Complex<T>], d: usize) -> (Vec<T>, Vec<Complex<T>>) {
    assert_eq!(a.len(), d * d);
    let mut m = hermitize(a, d);
    let mut v = vec![Complex::new(T::zero(), T::zero()); d * d];
    for i in 0..d {
        v[i * d + i] = Complex::new(T::one(), T::zero());
    }
    if d == 1 {
        return (vec![m[0].re], v);
    }

    let scale: T = m.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt().max(T::one());
    let tol = T::epsilon() * scale * T::of(1e-2);
    let max_sweeps = 60;

    for _sweep in 0..max_sweeps {
        let mut off = T::zero();
        for i in 0..d {
            for j in (i + 1)..d {
                off += m[i * d + j].norm();
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let b = m[p * d + q];
                let babs = b.norm();
                if babs <= tol * T::of(1e-3) {
                    continue;
                }
                // Phase that makes the pivot real, then a real Jacobi rotation.
                let phase = b / Complex::new(babs, T::zero());
                let app = m[p * d + p].re;
                let aqq = m[q * d + q].re;
                let zeta = (aqq - app) / (T::of(2.0) * babs);
                let t = if zeta >= T::zero() {
                    T::one() / (zeta + (T::one() + zeta * zeta).sqrt())
                } else {
                    -T::one() / (-zeta + (T::one() + zeta * zeta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;

                // U = [[c·v, s·v], [−s, c]] with v = phase, applied as A ← U†AU.
                let upp = phase * c;
                let upq = phase * s;
                let uqp = Complex::new(-s, T::zero());
                let uqq = Complex::new(c, T::zero());

                // Column update A ← A·U.
                for i in 0..d {
                    let aip = m[i * d + p];
                    let aiq = m[i * d + q];
                    m[i * d + p] = aip * upp + aiq * uqp;
                    m[i * d + q] = aip * upq + aiq * uqq;
                }
                // Row update A ← U†·A.
                for j in 0..d {
                    let apj = m[p * d + j];
                    let aqj = m[q * d + j];
                    m[p * d + j] = upp.conj() * apj + uqp.conj() * aqj;
                    m[q * d + j] = upq.conj() * apj + uqq.conj() * aqj;
                }
                // Keep the matrix numerically Hermitian.
                m[p * d + q] = m[q * d + p].conj();
                let mpp = m[p * d + p];
                let mqq = m[q * d + q];
                m[p * d + p] = Complex::new(mpp.re, T::zero());
                m[q * d + q] = Complex::new(mqq.re, T::zero());

                // Accumulate V ← V·U.
                for i in 0..d {
                    let vip = v[i * d + p];
                    let viq = v[i * d + q];
                    v[i * d + p] = vip * upp + viq * uqp;
                    v[i * d + q] = vip * upq + viq * uqq;
                }
            }
        }
    }

    let mut eig: Vec<(T, usize)> = (0..d).map(|i| (m[i * d + i].re, i)).collect();
    eig.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let values: Vec<T> = eig.iter().map(|e| e.0).collect();
    let mut vectors = vec![Complex::new(T::zero(), T::zero()); d * d];
    for (new_col, &(_, old_col)) in eig.iter().enumerate() {
        for i in 0..d {
            vectors[i * d + new_col] = v[i * d + old_col];
        }
    }
    (values, vectors)
}

/// V diag(f(λ)) V† for a Hermitian matrix.
pub fn hermitian_map<T: Real>(
    a: &[Complex<T>],
    d: usize,
    f: impl Fn(T) -> T,
) -> Vec<Complex<T>> {
    let (vals, vecs) = hermitian_eigen(a, d);
    let mut out = vec![Complex::new(T::zero(), T::zero()); d * d];
    for k in 0..d {
        let fk = f(vals[k]);
        if fk == T::zero() {
            continue;
        }
        for i in 0..d {
            let vik = vecs[i * d + k];
            for j in 0..d {
                out[i * d + j] += vik * vecs[j * d + k].conj() * fk;
            }
        }
    }
    out
}

/// Principal square root of a PSD Hermitian matrix (negative dust clipped).
pub fn sqrt_psd<T: Real>(a: &[Complex<T>], d: usize) -> Vec<Complex<T>> {
    hermitian_map(a, d, |l| if l > T::zero() { l.sqrt() } else { T::zero() })
}

/// Lower-triangular `T` with `T†T = A` for PSD Hermitian `A`.
///
/// Built by Cholesky-factorizing the index-reversed matrix; pivots that are
/// numerically zero (rank deficiency) zero out their column.
pub fn lower_tt_factor<T: Real>(a: &[Complex<T>], d: usize) -> Vec<Complex<T>> {
    let zero = Complex::new(T::zero(), T::zero());
    // rho' = J A J, indices reversed.
    let mut rp = vec![zero; d * d];
    for i in 0..d {
        for j in 0..d {
            rp[i * d + j] = a[(d - 1 - i) * d + (d - 1 - j)];
        }
    }
    // PSD-tolerant lower Cholesky of rho'.
    let scale: T = (0..d).map(|i| rp[i * d + i].re.abs()).sum::<T>().max(T::one());
    let tol = scale * T::epsilon() * T::of(16.0);
    let mut l = vec![zero; d * d];
    for j in 0..d {
        let mut s = rp[j * d + j].re;
        for k in 0..j {
            s -= l[j * d + k].norm_sqr();
        }
        if s <= tol {
            // column stays zero
            continue;
        }
        let piv = s.sqrt();
        l[j * d + j] = Complex::new(piv, T::zero());
        for i in (j + 1)..d {
            let mut acc = rp[i * d + j];
            for k in 0..j {
                acc -= l[i * d + k] * l[j * d + k].conj();
            }
            l[i * d + j] = acc / piv;
        }
    }
    // U = J L J is upper triangular with U U† = A; return T = U†.
    let mut t = vec![zero; d * d];
    for i in 0..d {
        for j in 0..d {
            // U[i,j] = L[d-1-i, d-1-j]; T = U† ⇒ T[i,j] = conj(U[j,i])
            t[i * d + j] = l[(d - 1 - j) * d + (d - 1 - i)].conj();
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    type C = Complex<f64>;

    fn c(re: f64, im: f64) -> C {
        Complex::new(re, im)
    }

    #[test]
    fn eigen_diagonal_matrix() {
        let d = 3;
        let mut a = vec![c(0.0, 0.0); 9];
        a[0] = c(2.0, 0.0);
        a[4] = c(-1.0, 0.0);
        a[8] = c(0.5, 0.0);
        let (vals, _) = hermitian_eigen(&a, d);
        assert!((vals[0] + 1.0).abs() < 1e-12);
        assert!((vals[1] - 0.5).abs() < 1e-12);
        assert!((vals[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_known_2x2() {
        // [[1, i],[-i, 1]] has eigenvalues 0 and 2.
        let a = vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)];
        let (vals, vecs) = hermitian_eigen(&a, 2);
        assert!((vals[0] - 0.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
        // reconstruct
        let mut rec = vec![c(0.0, 0.0); 4];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    rec[i * 2 + j] += vecs[i * 2 + k] * vecs[j * 2 + k].conj() * vals[k];
                }
            }
        }
        assert!(frobenius_dist2(&rec, &a) < 1e-24);
    }

    #[test]
    fn eigen_reconstructs_random_hermitian() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(7);
        let d = 13;
        for _ in 0..5 {
            let mut a = vec![c(0.0, 0.0); d * d];
            for i in 0..d {
                for j in 0..d {
                    a[i * d + j] = c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                }
            }
            let h = hermitize(&a, d);
            let (vals, vecs) = hermitian_eigen(&h, d);
            // V unitary
            let vh = adjoint(&vecs, d);
            let prod = matmul(&vh, &vecs, d);
            for i in 0..d {
                for j in 0..d {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((prod[i * d + j].re - expect).abs() < 1e-10);
                    assert!(prod[i * d + j].im.abs() < 1e-10);
                }
            }
            // A = V Λ V†
            let mut rec = vec![c(0.0, 0.0); d * d];
            for k in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        rec[i * d + j] += vecs[i * d + k] * vecs[j * d + k].conj() * vals[k];
                    }
                }
            }
            assert!(frobenius_dist2(&rec, &h).sqrt() < 1e-9);
        }
    }

    #[test]
    fn tt_factor_roundtrip() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(11);
        let d = 6;
        // PSD matrix of rank 3: G G† with G 6x3
        let mut g = vec![c(0.0, 0.0); d * 3];
        for v in g.iter_mut() {
            *v = c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
        let mut a = vec![c(0.0, 0.0); d * d];
        for i in 0..d {
            for j in 0..d {
                let mut s = c(0.0, 0.0);
                for k in 0..3 {
                    s += g[i * 3 + k] * g[j * 3 + k].conj();
                }
                a[i * d + j] = s;
            }
        }
        let t = lower_tt_factor(&a, d);
        // lower triangular?
        for i in 0..d {
            for j in (i + 1)..d {
                assert_eq!(t[i * d + j], c(0.0, 0.0));
            }
        }
        let th = adjoint(&t, d);
        let rec = matmul(&th, &t, d);
        assert!(frobenius_dist2(&rec, &a).sqrt() < 1e-10);
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let a = vec![c(2.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(3.0, 0.0)];
        let s = sqrt_psd(&a, 2);
        let s2 = matmul(&s, &s, 2);
        assert!(frobenius_dist2(&s2, &a).sqrt() < 1e-12);
    }
}
