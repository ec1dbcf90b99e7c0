//! Inverse pipeline: centered 2D DFT of an intensity image, kernel-projected
//! raw density matrix, physicalization by Cholesky-parametrized least
//! squares, Uhlmann fidelity, and beam-waist calibration.

use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Real;
use crate::imaging::IntensityImage;
use crate::linalg;
use crate::modes::{BeamGeometry, KernelTable, ModeIndex};
use crate::optim;
use crate::states::{DensityMatrix, Physicality};

/// Complex samples on the centered frequency grid of their geometry.
#[derive(Debug, Clone)]
pub struct FourierImage<T> {
    pub geometry: BeamGeometry<T>,
    pub values: Vec<Complex<T>>,
}

/// Centered 2D DFT with the cycles/length convention: values approximate the
/// continuous transform ∬ I(x,y) e^{−i2π(f_x x + f_y y)} dx dy, zero frequency
/// at the grid center index N/2 − 1.
pub fn dft2<T: Real>(image: &IntensityImage<T>) -> FourierImage<T> {
    let g = image.geometry;
    let n = g.n_pixels();
    let mut buf: Vec<Complex<T>> =
        image.pixels.iter().map(|p| Complex::new(*p, T::zero())).collect();

    let mut planner = FftPlanner::<T>::new();
    let fft = planner.plan_fft_forward(n);
    // rows
    for row in buf.chunks_exact_mut(n) {
        fft.process(row);
    }
    // columns via transpose, row FFT, transpose back
    let mut tr = transpose(&buf, n);
    for row in tr.chunks_exact_mut(n) {
        fft.process(row);
    }
    let spectrum = transpose(&tr, n);

    // Recentering: index i carries s = i − (N/2 − 1); sampling offsets
    // x_m = (m − (N−1)/2)Δx contribute the phase e^{+i2πs(N−1)/(2N)} per axis.
    let center = n / 2 - 1;
    let half_shift = T::of((n - 1) as f64) / T::of(2.0 * n as f64);
    let phases: Vec<Complex<T>> = (0..n)
        .map(|i| {
            let s = i as i64 - center as i64;
            Complex::from_polar(T::one(), T::of(2.0) * T::PI() * T::of(s as f64) * half_shift)
        })
        .collect();
    let cell = g.pitch() * g.pitch();

    let mut values = vec![Complex::new(T::zero(), T::zero()); n * n];
    for row in 0..n {
        let sy = row as i64 - center as i64;
        let ky = sy.rem_euclid(n as i64) as usize;
        for col in 0..n {
            let sx = col as i64 - center as i64;
            let kx = sx.rem_euclid(n as i64) as usize;
            values[row * n + col] = spectrum[ky * n + kx] * phases[row] * phases[col] * cell;
        }
    }
    FourierImage { geometry: g, values }
}

fn transpose<T: Real>(m: &[Complex<T>], n: usize) -> Vec<Complex<T>> {
    let mut out = vec![Complex::new(T::zero(), T::zero()); n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = m[i * n + j];
        }
    }
    out
}

/// Diagnostics of a raw extraction.
#[derive(Debug, Clone, Copy)]
pub struct ExtractionStats<T> {
    /// Trace of the kernel moments before normalization (absorbs the scale A).
    pub trace_pre_normalization: T,
}

/// Project the Fourier data onto the kernel basis:
/// ρ_{l1,l2} = C_{l1,l2} Σ_{f_r ≤ r_cut} Ĩ(f)·conj(P_{l1,l2}(f))·e^{π²f_r²σ²/2}·Δf²,
/// then divide by the trace. The output is raw: Hermiticity and positivity
/// are only restored by [`physicalize`].
pub fn extract_density<T: Real>(
    fimage: &FourierImage<T>,
    table: &KernelTable<T>,
    d: usize,
) -> Result<(DensityMatrix<T>, ExtractionStats<T>)> {
    if !fimage.geometry.grid_compatible(table.geometry()) {
        return Err(Error::GeometryMismatch(
            "Fourier image and kernel table use different grids".into(),
        ));
    }
    if d == 0 || d > table.n_modes() {
        return Err(Error::DimensionMismatch(format!(
            "extraction dim {d} outside 1..={}",
            table.n_modes()
        )));
    }

    // Weighted data samples shared by every pair.
    let weighted: Vec<Complex<T>> = table
        .mask()
        .iter()
        .zip(table.mask_weights().iter())
        .map(|(&idx, &w)| fimage.values[idx] * w)
        .collect();
    let df = fimage.geometry.fourier_pitch();
    let cell = df * df;

    let mut moments = vec![Complex::new(T::zero(), T::zero()); d * d];
    for l1 in 0..d {
        for l2 in 0..d {
            let grid = table.grid(ModeIndex(l1 as u32), ModeIndex(l2 as u32));
            let mut acc = Complex::new(T::zero(), T::zero());
            for (&idx, wv) in table.mask().iter().zip(weighted.iter()) {
                acc += *wv * grid[idx].conj();
            }
            moments[l1 * d + l2] =
                acc * Complex::new(table.constant(ModeIndex(l1 as u32), ModeIndex(l2 as u32)) * cell, T::zero());
        }
    }

    let trace = linalg::trace(&moments, d).re;
    let scale: T = (0..d).map(|i| moments[i * d + i].norm()).sum();
    if scale <= T::zero() || trace.abs() <= T::of(1e-12) * scale {
        return Err(Error::ZeroTrace);
    }
    for v in moments.iter_mut() {
        *v /= trace;
    }
    let raw = DensityMatrix::from_entries(d, moments, Physicality::Raw)?;
    Ok((raw, ExtractionStats { trace_pre_normalization: trace }))
}

/// Real parametrization t of a lower-triangular T with ρ(t) = T†T/tr(T†T):
/// diagonal entries first, then per row (top to bottom) the off-diagonal
/// (re, im) pairs filled right to left.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyParams<T> {
    pub dim: usize,
    pub t: Vec<T>,
}

impl<T: Real> CholeskyParams<T> {
    pub fn new(dim: usize, t: Vec<T>) -> Result<Self> {
        if t.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector has {} entries, need dim² = {}",
                t.len(),
                dim * dim
            )));
        }
        Ok(Self { dim, t })
    }

    /// Layout: index of the (re, im) slot pair of lower entry (i, j), i > j.
    fn offdiag_slot(dim: usize, i: usize, j: usize) -> usize {
        // rows 1..i contribute 2·row params after the dim diagonal slots;
        // within row i, columns run i−1, i−2, …, 0.
        let before_row: usize = i * (i - 1); // Σ_{r<i} 2r
        dim + before_row + 2 * (i - 1 - j)
    }

    pub fn from_lower(m: &[Complex<T>], dim: usize) -> Self {
        let mut t = vec![T::zero(); dim * dim];
        for i in 0..dim {
            t[i] = m[i * dim + i].re;
        }
        for i in 1..dim {
            for j in 0..i {
                let slot = Self::offdiag_slot(dim, i, j);
                t[slot] = m[i * dim + j].re;
                t[slot + 1] = m[i * dim + j].im;
            }
        }
        Self { dim, t }
    }

    pub fn to_lower(&self) -> Vec<Complex<T>> {
        let d = self.dim;
        let mut m = vec![Complex::new(T::zero(), T::zero()); d * d];
        for i in 0..d {
            m[i * d + i] = Complex::new(self.t[i], T::zero());
        }
        for i in 1..d {
            for j in 0..i {
                let slot = Self::offdiag_slot(d, i, j);
                m[i * d + j] = Complex::new(self.t[slot], self.t[slot + 1]);
            }
        }
        m
    }

    /// ρ(t) = T†T / tr(T†T); Hermitian, PSD, trace 1 for any nonzero t.
    pub fn density(&self) -> Result<DensityMatrix<T>> {
        let d = self.dim;
        let lower = self.to_lower();
        let g = linalg::matmul(&linalg::adjoint(&lower, d), &lower, d);
        let tau = linalg::trace(&g, d).re;
        if tau <= T::zero() {
            return Err(Error::AllZeroCoefficients);
        }
        let entries = g.into_iter().map(|v| v / tau).collect();
        DensityMatrix::from_entries(d, entries, Physicality::Physical)
    }
}

/// Result metadata of a physicalization run.
#[derive(Debug, Clone, Copy)]
pub struct PhysicalizeInfo<T> {
    /// Achieved least-squares cost S = Σ|ρ(t*) − ρ_raw|².
    pub s_final: T,
    pub grad_norm: T,
    pub iterations: usize,
    /// Smallest eigenvalue of the hermitized raw input.
    pub min_eigenvalue_raw: T,
}

/// Least-squares cost and analytic gradient of S(t) = ‖ρ(t) − target‖²_F.
fn cholesky_cost_grad<T: Real>(
    t: &[T],
    grad: &mut [T],
    target: &[Complex<T>],
    d: usize,
) -> T {
    let params = CholeskyParams { dim: d, t: t.to_vec() };
    let lower = params.to_lower();
    let g = linalg::matmul(&linalg::adjoint(&lower, d), &lower, d);
    let tau = linalg::trace(&g, d).re;
    if tau <= T::of(1e-300) {
        for v in grad.iter_mut() {
            *v = T::zero();
        }
        return T::of(1e300);
    }
    let inv_tau = T::one() / tau;
    let rho: Vec<Complex<T>> = g.iter().map(|v| *v * inv_tau).collect();
    let mut err = vec![Complex::new(T::zero(), T::zero()); d * d];
    let mut cost = T::zero();
    for i in 0..d * d {
        err[i] = rho[i] - target[i];
        cost += err[i].norm_sqr();
    }
    // s0 = tr(E·ρ), real for Hermitian E and ρ
    let mut s0 = T::zero();
    for i in 0..d {
        for j in 0..d {
            s0 += (err[i * d + j] * rho[j * d + i]).re;
        }
    }
    // W = E − s0·I; gradient = (4/τ)·(T·W) mapped onto the layout
    let mut w = err;
    for i in 0..d {
        w[i * d + i] -= Complex::new(s0, T::zero());
    }
    let m = linalg::matmul(&lower, &w, d);
    let four_tau = T::of(4.0) * inv_tau;
    for i in 0..d {
        grad[i] = four_tau * m[i * d + i].re;
    }
    for i in 1..d {
        for j in 0..i {
            let slot = CholeskyParams::<T>::offdiag_slot(d, i, j);
            grad[slot] = four_tau * m[i * d + j].re;
            grad[slot + 1] = four_tau * m[i * d + j].im;
        }
    }
    cost
}

/// Eigenvalue-clipping start point: hermitize, clip negatives, renormalize.
fn clipped_start<T: Real>(herm: &[Complex<T>], d: usize) -> Vec<Complex<T>> {
    let (vals, vecs) = linalg::hermitian_eigen(herm, d);
    let clipped: Vec<T> = vals.iter().map(|&v| v.max(T::zero())).collect();
    let total: T = clipped.iter().copied().sum();
    let mut rho = vec![Complex::new(T::zero(), T::zero()); d * d];
    if total <= T::zero() {
        // all mass clipped away; start from the maximally mixed state
        for i in 0..d {
            rho[i * d + i] = Complex::new(T::one() / T::of(d as f64), T::zero());
        }
        return rho;
    }
    for k in 0..d {
        let lk = clipped[k] / total;
        if lk == T::zero() {
            continue;
        }
        for i in 0..d {
            for j in 0..d {
                rho[i * d + j] += vecs[i * d + k] * vecs[j * d + k].conj() * lk;
            }
        }
    }
    rho
}

/// Find the physical density matrix minimizing S = Σ|ρ − ρ_raw|² under the
/// Cholesky parametrization. The raw input is hermitized first; quasi-Newton
/// descent runs from two starts (the clipped-eigenvalue factor and a scaled
/// identity) and keeps the lower cost.
pub fn physicalize<T: Real>(raw: &DensityMatrix<T>) -> Result<(DensityMatrix<T>, PhysicalizeInfo<T>)> {
    let d = raw.dim();
    if raw.entries().iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonPhysical("raw matrix has non-finite entries".into()));
    }
    let herm = linalg::hermitize(raw.entries(), d);
    let min_eigenvalue_raw = linalg::hermitian_eigen(&herm, d).0[0];

    let start_a = {
        let rho0 = clipped_start(&herm, d);
        let lower = linalg::lower_tt_factor(&rho0, d);
        CholeskyParams::from_lower(&lower, d).t
    };
    let start_b = {
        let scale = T::one() / T::of(d as f64).sqrt();
        let mut lower = vec![Complex::new(T::zero(), T::zero()); d * d];
        for i in 0..d {
            lower[i * d + i] = Complex::new(scale, T::zero());
        }
        CholeskyParams::from_lower(&lower, d).t
    };

    let grad_tol = T::of(1e-9);
    let max_iter = 5000;
    let mut best: Option<optim::BfgsResult<T>> = None;
    for start in [start_a, start_b] {
        let run = optim::bfgs(&start, grad_tol, max_iter, |t, grad| {
            cholesky_cost_grad(t, grad, &herm, d)
        });
        best = match best {
            Some(prev) if prev.cost <= run.cost => Some(prev),
            _ => Some(run),
        };
    }
    let best = best.expect("two starts ran");

    let params = CholeskyParams::new(d, best.x)?;
    let rho = params.density()?;
    let info = PhysicalizeInfo {
        s_final: best.cost,
        grad_norm: best.grad_norm,
        iterations: best.iterations,
        min_eigenvalue_raw,
    };
    Ok((rho, info))
}

/// Uhlmann fidelity F = (tr √(√ρ_t ρ_e √ρ_t))², clipped into [0, 1].
pub fn fidelity<T: Real>(rho_t: &DensityMatrix<T>, rho_e: &DensityMatrix<T>) -> Result<T> {
    if rho_t.dim() != rho_e.dim() {
        return Err(Error::DimensionMismatch(format!(
            "fidelity between dim {} and dim {}",
            rho_t.dim(),
            rho_e.dim()
        )));
    }
    for (name, rho) in [("first", rho_t), ("second", rho_e)] {
        if rho.physicality() != Physicality::Physical || !rho.is_physical() {
            return Err(Error::NonPhysical(format!("{name} fidelity argument is not physical")));
        }
    }
    let d = rho_t.dim();
    // Rank-deficient inputs put rounding dust near zero in both spectra;
    // √dust would bias the trace sum, so eigenvalues below a relative
    // threshold are treated as exact zeros.
    let thresholded_sqrt = |m: &[Complex<T>]| {
        let (vals, _) = linalg::hermitian_eigen(m, d);
        let lmax = vals[d - 1].max(T::zero());
        let cut = lmax * T::of(1e-12);
        linalg::hermitian_map(m, d, |l| if l > cut { l.sqrt() } else { T::zero() })
    };
    let s = thresholded_sqrt(rho_t.entries());
    let inner = linalg::matmul(&linalg::matmul(&s, rho_e.entries(), d), &s, d);
    let (vals, _) = linalg::hermitian_eigen(&inner, d);
    let lmax = vals[d - 1].max(T::zero());
    let cut = lmax * T::of(1e-12);
    let root_sum: T = vals.iter().map(|&v| if v > cut { v.sqrt() } else { T::zero() }).sum();
    let f = root_sum * root_sum;
    Ok(f.min(T::one()).max(T::zero()))
}

/// Result of the 2D Gaussian beam-waist fit.
#[derive(Debug, Clone, Copy)]
pub struct WaistFit<T> {
    pub sigma: T,
    pub sigma_stderr: T,
    pub center: (T, T),
    pub amplitude: T,
    pub offset: T,
    pub rss: T,
    pub r_squared: T,
    pub iterations: usize,
}

/// Least-squares fit of A·e^{−2((x−x₀)²+(y−y₀)²)/σ²} + b to the image.
/// Rejects fits that diverge or explain less than 90% of the pixel variance
/// (the profile is then not a fundamental Gaussian spot).
pub fn fit_waist<T: Real>(image: &IntensityImage<T>) -> Result<WaistFit<T>> {
    let g = &image.geometry;
    let n = g.n_pixels();
    let pixels = &image.pixels;

    // moment-based initial guess
    let min = pixels.iter().copied().fold(T::infinity(), T::min);
    let max = pixels.iter().copied().fold(T::zero(), T::max);
    if max <= min {
        return Err(Error::FitDiverged("image is flat".into()));
    }
    let mut mass = T::zero();
    let mut mx = T::zero();
    let mut my = T::zero();
    for row in 0..n {
        let y = g.coord(row);
        for col in 0..n {
            let x = g.coord(col);
            let w = pixels[row * n + col] - min;
            mass += w;
            mx += w * x;
            my += w * y;
        }
    }
    let x0 = mx / mass;
    let y0 = my / mass;
    let mut mr2 = T::zero();
    for row in 0..n {
        let y = g.coord(row);
        for col in 0..n {
            let x = g.coord(col);
            let w = pixels[row * n + col] - min;
            mr2 += w * ((x - x0) * (x - x0) + (y - y0) * (y - y0));
        }
    }
    // ⟨r²⟩ = σ²/2 for the Gaussian profile
    let sigma0 = (T::of(2.0) * mr2 / mass).sqrt();

    let p0 = [max - min, x0, y0, sigma0, min];
    let res = optim::levenberg_marquardt(&p0, n * n, 200, |p, r, jac| {
        let (a, x0, y0, sigma, b) = (p[0], p[1], p[2], p[3], p[4]);
        let s2 = sigma * sigma;
        for row in 0..n {
            let y = g.coord(row);
            for col in 0..n {
                let x = g.coord(col);
                let i = row * n + col;
                let dx = x - x0;
                let dy = y - y0;
                let q = dx * dx + dy * dy;
                let e = (-T::of(2.0) * q / s2).exp();
                r[i] = a * e + b - pixels[i];
                jac[i * 5] = e;
                jac[i * 5 + 1] = a * e * T::of(4.0) * dx / s2;
                jac[i * 5 + 2] = a * e * T::of(4.0) * dy / s2;
                jac[i * 5 + 3] = a * e * T::of(4.0) * q / (s2 * sigma);
                jac[i * 5 + 4] = T::one();
            }
        }
    });

    let mean: T = pixels.iter().copied().sum::<T>() / T::of((n * n) as f64);
    let tss: T = pixels.iter().map(|p| (*p - mean) * (*p - mean)).sum();
    let r_squared = if tss > T::zero() { T::one() - res.rss / tss } else { T::zero() };

    if !res.params.iter().all(|p| p.is_finite()) {
        return Err(Error::FitDiverged("non-finite fit parameters".into()));
    }
    if r_squared < T::of(0.9) {
        return Err(Error::FitDiverged(format!(
            "Gaussian model explains only {:.1}% of the variance",
            (r_squared * T::of(100.0)).to_f64_lossy()
        )));
    }

    Ok(WaistFit {
        sigma: res.params[3].abs(),
        sigma_stderr: res.stderr[3],
        center: (res.params[1], res.params[2]),
        amplitude: res.params[0],
        offset: res.params[4],
        rss: res.rss,
        r_squared,
        iterations: res.iterations,
    })
}

/// Per-reconstruction report written next to the matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity_vs_target: Option<f64>,
    pub trace_pre_normalization: f64,
    pub min_eigenvalue_raw: f64,
    pub s_final: f64,
    pub r_cut_used: f64,
}

/// Density-matrix JSON file: {"dim": d, "entries": [[[re, im], …], …]}.
pub fn write_matrix_json<T: Real>(rho: &DensityMatrix<T>, path: &Path) -> Result<()> {
    let d = rho.dim();
    let rows: Vec<Vec<[f64; 2]>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let v = rho.entry(i, j);
                    [v.re.to_f64_lossy(), v.im.to_f64_lossy()]
                })
                .collect()
        })
        .collect();
    let doc = serde_json::json!({ "dim": d, "entries": rows });
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

pub fn read_matrix_json<T: Real>(path: &Path, physicality: Physicality) -> Result<DensityMatrix<T>> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Doc {
        dim: usize,
        entries: Vec<Vec<[f64; 2]>>,
    }
    let doc: Doc = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if doc.entries.len() != doc.dim || doc.entries.iter().any(|r| r.len() != doc.dim) {
        return Err(Error::Format("matrix entries do not match dim".into()));
    }
    let entries: Vec<Complex<T>> = doc
        .entries
        .iter()
        .flat_map(|row| row.iter().map(|p| Complex::new(T::of(p[0]), T::of(p[1]))))
        .collect();
    DensityMatrix::from_entries(doc.dim, entries, physicality)
}

/// CSV alternative: one matrix row per line with interleaved re/im columns.
pub fn write_matrix_csv<T: Real>(rho: &DensityMatrix<T>, path: &Path) -> Result<()> {
    let d = rho.dim();
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for i in 0..d {
        let cells: Vec<String> = (0..d)
            .flat_map(|j| {
                let v = rho.entry(i, j);
                [format!("{}", v.re.to_f64_lossy()), format!("{}", v.im.to_f64_lossy())]
            })
            .collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<T: Real>(path: &Path, physicality: Physicality) -> Result<DensityMatrix<T>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<Complex<T>>> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|_| Error::Format("bad CSV number".into())))
            .collect::<Result<_>>()?;
        if !cells.len().is_multiple_of(2) {
            return Err(Error::Format("CSV row must hold re/im pairs".into()));
        }
        rows.push(cells.chunks_exact(2).map(|p| Complex::new(T::of(p[0]), T::of(p[1]))).collect());
    }
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Format("CSV matrix must be square".into()));
    }
    DensityMatrix::from_entries(d, rows.into_iter().flatten().collect(), physicality)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::intensity_image;
    use crate::states::{eigenstate, psi_g, rho_m1, DensityMatrix};

    fn geometry() -> BeamGeometry<f64> {
        BeamGeometry::standard().unwrap()
    }

    #[test]
    fn dft2_of_constant_image() {
        let g = BeamGeometry::with_window(0.114f64, 64, 10.0).unwrap();
        let n = g.n_pixels();
        let img = IntensityImage::new(g, vec![1.0; n * n]).unwrap();
        let f = dft2(&img);
        let z = g.zero_freq_index();
        let dc = f.values[z * n + z];
        let want = (n * n) as f64 * g.pitch() * g.pitch();
        assert!((dc.re - want).abs() < 1e-9 * want);
        assert!(dc.im.abs() < 1e-9 * want);
        for (i, v) in f.values.iter().enumerate() {
            if i != z * n + z {
                assert!(v.norm() < 1e-9 * want, "index {i} should be zero, got {v}");
            }
        }
    }

    #[test]
    fn dft2_of_vacuum_matches_kernel_p00() {
        // Image of |0⟩⟨0| transforms to A·e^{−π²σ²f_r²/2}.
        let g = geometry();
        let rho = DensityMatrix::from_pure(&eigenstate(ModeIndex(0), 13).unwrap());
        let img = intensity_image(&rho, &g).unwrap();
        let f = dft2(&img);
        let n = g.n_pixels();
        let z = g.zero_freq_index();
        let dc = f.values[z * n + z].re;
        assert!(dc > 0.0);
        for (row, col) in [(z, z + 10), (z + 7, z), (z - 20, z + 4), (z + 13, z - 13)] {
            let fx = g.freq(col);
            let fy = g.freq(row);
            let fr2 = fx * fx + fy * fy;
            let want = dc * (-std::f64::consts::PI.powi(2) * 0.114 * 0.114 * fr2 / 2.0).exp();
            let got = f.values[row * n + col];
            assert!(
                (got.re - want).abs() <= 1e-6 * dc,
                "({row},{col}): {} vs {want}",
                got.re
            );
            assert!(got.im.abs() <= 1e-9 * dc);
        }
    }

    #[test]
    fn dft2_conjugate_symmetry() {
        let g = geometry();
        let rho = DensityMatrix::from_pure(&psi_g(13).unwrap());
        let img = intensity_image(&rho, &g).unwrap();
        let f = dft2(&img);
        let n = g.n_pixels();
        let c = g.zero_freq_index() as i64;
        let scale = f.values[(c as usize) * n + c as usize].norm();
        for (row, col) in [(10usize, 200usize), (100, 30), (127, 127), (60, 140)] {
            let s_row = row as i64 - c;
            let s_col = col as i64 - c;
            let m_row = (c - s_row) as usize;
            let m_col = (c - s_col) as usize;
            let a = f.values[row * n + col];
            let b = f.values[m_row * n + m_col];
            assert!((a - b.conj()).norm() <= 1e-9 * scale);
        }
    }

    fn roundtrip_raw(rho: &DensityMatrix<f64>, table: &KernelTable<f64>) -> DensityMatrix<f64> {
        let img = intensity_image(rho, table.geometry()).unwrap();
        let f = dft2(&img);
        extract_density(&f, table, rho.dim()).unwrap().0
    }

    #[test]
    fn extract_eigenstate_and_mixture_and_coherence() {
        let g = geometry();
        let table = KernelTable::build(g, 12).unwrap();

        // |7⟩⟨7|
        let rho7 = DensityMatrix::from_pure(&eigenstate(ModeIndex(7), 13).unwrap());
        let raw = roundtrip_raw(&rho7, &table);
        assert!(raw.entry(7, 7).re >= 0.99);
        for i in 0..13 {
            for j in 0..13 {
                if (i, j) != (7, 7) {
                    assert!(raw.entry(i, j).norm() <= 0.01, "({i},{j}) = {}", raw.entry(i, j));
                }
            }
        }

        // ρ_m1
        let raw = roundtrip_raw(&rho_m1(13).unwrap(), &table);
        assert!((raw.entry(0, 0).re - 0.5).abs() <= 0.01);
        assert!((raw.entry(12, 12).re - 0.5).abs() <= 0.01);
        assert!(raw.entry(0, 12).norm() <= 0.01);

        // ψ_G coherence: ρ_{0,12} = i/2
        let raw = roundtrip_raw(&DensityMatrix::from_pure(&psi_g(13).unwrap()), &table);
        let c = raw.entry(0, 12);
        assert!((c.norm() - 0.5).abs() <= 0.01, "|ρ01,12| = {}", c.norm());
        assert!(
            (c.arg() - std::f64::consts::FRAC_PI_2).abs() <= 0.05,
            "phase {} rad",
            c.arg()
        );
    }

    #[test]
    fn extract_raw_hermiticity_on_noiseless_data() {
        let g = geometry();
        let table = KernelTable::build(g, 12).unwrap();
        let rho = crate::states::random_density(13, 4, 99).unwrap();
        let raw = roundtrip_raw(&rho, &table);
        let mut defect2 = 0.0f64;
        for i in 0..13 {
            for j in 0..13 {
                defect2 += (raw.entry(i, j) - raw.entry(j, i).conj()).norm_sqr();
            }
        }
        assert!(defect2.sqrt() <= 1e-3, "hermiticity defect {}", defect2.sqrt());
    }

    #[test]
    fn extract_black_image_is_zero_trace() {
        let g = geometry();
        let table = KernelTable::build(g, 4).unwrap();
        let n = g.n_pixels();
        let img = IntensityImage::new(g, vec![0.0f64; n * n]).unwrap();
        let f = dft2(&img);
        match extract_density(&f, &table, 5) {
            Err(Error::ZeroTrace) => {}
            other => panic!("expected ZeroTrace, got {other:?}"),
        }
    }

    #[test]
    fn extract_geometry_mismatch() {
        let g = geometry();
        let table = KernelTable::build(g, 4).unwrap();
        let g2 = BeamGeometry::with_window(0.114f64, 128, 10.0).unwrap();
        let n = g2.n_pixels();
        let img = IntensityImage::new(g2, vec![1.0f64; n * n]).unwrap();
        let f = dft2(&img);
        match extract_density(&f, &table, 5) {
            Err(Error::GeometryMismatch(_)) => {}
            other => panic!("expected GeometryMismatch, got {other:?}"),
        }
    }

    #[test]
    fn cholesky_layout_roundtrip() {
        // 2×2 layout per the parametrization: T = [[t1, 0], [t3 + i t4, t2]]
        let t = CholeskyParams::new(2, vec![0.5f64, 0.25, 0.3, -0.7]).unwrap();
        let m = t.to_lower();
        assert_eq!(m[0], Complex::new(0.5, 0.0));
        assert_eq!(m[1], Complex::new(0.0, 0.0));
        assert_eq!(m[2], Complex::new(0.3, -0.7));
        assert_eq!(m[3], Complex::new(0.25, 0.0));
        let back = CholeskyParams::from_lower(&m, 2);
        assert_eq!(back.t, t.t);

        // larger sizes roundtrip too
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(3);
        for d in [3usize, 5, 13] {
            let t: Vec<f64> = (0..d * d).map(|_| rng.random::<f64>() - 0.5).collect();
            let params = CholeskyParams::new(d, t.clone()).unwrap();
            let lower = params.to_lower();
            // upper part must stay zero
            for i in 0..d {
                for j in (i + 1)..d {
                    assert_eq!(lower[i * d + j], Complex::new(0.0, 0.0));
                }
            }
            assert_eq!(CholeskyParams::from_lower(&lower, d).t, t);
            let rho = params.density().unwrap();
            assert!(rho.is_physical());
        }
    }

    #[test]
    fn cholesky_gradient_matches_finite_differences() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(17);
        let d = 4usize;
        let target = crate::states::random_density::<f64>(d, 2, 5).unwrap();
        let herm = linalg::hermitize(target.entries(), d);
        let t0: Vec<f64> = (0..d * d).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut grad = vec![0.0; d * d];
        let cost0 = cholesky_cost_grad(&t0, &mut grad, &herm, d);
        let eps = 1e-6;
        for k in 0..d * d {
            let mut tp = t0.clone();
            tp[k] += eps;
            let mut dummy = vec![0.0; d * d];
            let cp = cholesky_cost_grad(&tp, &mut dummy, &herm, d);
            let mut tm = t0.clone();
            tm[k] -= eps;
            let cm = cholesky_cost_grad(&tm, &mut dummy, &herm, d);
            let fd = (cp - cm) / (2.0 * eps);
            assert!(
                (grad[k] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                "param {k}: analytic {} vs fd {fd} (cost {cost0})",
                grad[k]
            );
        }
    }

    /// clip-oracle in test form: hermitize, eigendecompose, clip, renormalize.
    fn clip_oracle(raw: &DensityMatrix<f64>) -> DensityMatrix<f64> {
        let d = raw.dim();
        let herm = linalg::hermitize(raw.entries(), d);
        let (vals, vecs) = linalg::hermitian_eigen(&herm, d);
        let clipped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        let mut rho = vec![Complex::new(0.0, 0.0); d * d];
        for k in 0..d {
            let lk = clipped[k] / total;
            for i in 0..d {
                for j in 0..d {
                    rho[i * d + j] += vecs[i * d + k] * vecs[j * d + k].conj() * lk;
                }
            }
        }
        DensityMatrix::from_entries(d, rho, Physicality::Physical).unwrap()
    }

    fn s_cost(rho: &DensityMatrix<f64>, raw_herm: &[Complex<f64>]) -> f64 {
        linalg::frobenius_dist2(rho.entries(), raw_herm)
    }

    #[test]
    fn physicalize_fixed_point_on_physical_input() {
        let rho = crate::states::random_density::<f64>(13, 3, 21).unwrap();
        let (out, info) = physicalize(&rho).unwrap();
        let dist = linalg::frobenius_dist2(out.entries(), rho.entries()).sqrt();
        assert!(dist <= 1e-6, "distance {dist}");
        assert!(info.s_final <= 1e-10);
        assert!(out.is_physical());
    }

    #[test]
    fn physicalize_clipped_spectrum_example() {
        // Hermitian input with eigenvalues {0.6, 0.5, −0.1}.
        let d = 3;
        let mut entries = vec![Complex::new(0.0, 0.0); 9];
        entries[0] = Complex::new(0.6, 0.0);
        entries[4] = Complex::new(0.5, 0.0);
        entries[8] = Complex::new(-0.1, 0.0);
        // rotate into a non-trivial basis to exercise the full path
        let rot = crate::states::random_density::<f64>(d, d, 7).unwrap();
        let (_, vecs) = linalg::hermitian_eigen(rot.entries(), d);
        let m = linalg::matmul(
            &linalg::matmul(&vecs, &entries, d),
            &linalg::adjoint(&vecs, d),
            d,
        );
        let raw = DensityMatrix::from_entries(d, m, Physicality::Raw).unwrap();
        let herm = linalg::hermitize(raw.entries(), d);

        let (out, info) = physicalize(&raw).unwrap();
        assert!(out.is_physical());
        assert!((out.trace().re - 1.0).abs() <= 1e-10);
        assert!(out.min_eigenvalue() >= -1e-9);

        // at least as good as the clip oracle, and matching the analytic
        // simplex projection of the spectrum: {0.55, 0.45, 0}
        let oracle = clip_oracle(&raw);
        assert!(info.s_final <= s_cost(&oracle, &herm) + 1e-6);
        let mut vals = out.eigenvalues();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((vals[0] - 0.55).abs() <= 1e-5, "{vals:?}");
        assert!((vals[1] - 0.45).abs() <= 1e-5);
        assert!(vals[2].abs() <= 1e-5);
    }

    #[test]
    fn physicalize_scaled_mixture() {
        // 0.9·ρ_m1: the constrained least-squares optimum is the simplex
        // projection of the spectrum, which spreads (1−0.9)/d over all
        // eigenvalues; it beats the plain rescale-to-ρ_m1 answer.
        let rho = rho_m1::<f64>(13).unwrap();
        let scaled: Vec<Complex<f64>> = rho.entries().iter().map(|v| v * 0.9).collect();
        let raw = DensityMatrix::from_entries(13, scaled, Physicality::Raw).unwrap();
        let herm = linalg::hermitize(raw.entries(), 13);
        let (out, info) = physicalize(&raw).unwrap();
        assert!(out.is_physical());

        let delta = 0.1 / 13.0;
        let mut projected = vec![Complex::new(0.0, 0.0); 13 * 13];
        for i in 0..13 {
            let base = if i == 0 || i == 12 { 0.45 } else { 0.0 };
            projected[i * 13 + i] = Complex::new(base + delta, 0.0);
        }
        let dist = linalg::frobenius_dist2(out.entries(), &projected).sqrt();
        assert!(dist <= 1e-6, "distance to simplex projection {dist}");

        // strictly better than rescaling, within tolerance of the oracle bound
        let oracle = clip_oracle(&raw); // = ρ_m1 exactly
        assert!(info.s_final <= s_cost(&oracle, &herm) + 1e-6);
        assert!(info.s_final < s_cost(&oracle, &herm));
    }

    #[test]
    fn fidelity_contracts() {
        let rho = crate::states::random_density::<f64>(13, 5, 33).unwrap();
        assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() <= 1e-10);

        let a = DensityMatrix::from_pure(&eigenstate::<f64>(ModeIndex(0), 13).unwrap());
        let b = DensityMatrix::from_pure(&eigenstate::<f64>(ModeIndex(1), 13).unwrap());
        assert!(fidelity(&a, &b).unwrap() <= 1e-12);

        // F(|0⟩⟨0|, I/2) in d = 2; oracle: F = ⟨ψ|ρ_e|ψ⟩ for pure ρ_t
        let pure = DensityMatrix::from_pure(&eigenstate::<f64>(ModeIndex(0), 2).unwrap());
        let mixed = DensityMatrix::from_entries(
            2,
            vec![
                Complex::new(0.5, 0.0),
                Complex::new(0.0, 0.0),
                Complex::new(0.0, 0.0),
                Complex::new(0.5, 0.0),
            ],
            Physicality::Physical,
        )
        .unwrap();
        let got = fidelity(&pure, &mixed).unwrap();
        let oracle = mixed.entry(0, 0).re; // ⟨0|ρ|0⟩
        assert!((got - oracle).abs() <= 1e-12);
        assert!((got - 0.5).abs() <= 1e-12);

        // symmetry
        for seed in 0..10u64 {
            let x = crate::states::random_density::<f64>(13, 4, seed).unwrap();
            let y = crate::states::random_density::<f64>(13, 9, seed + 100).unwrap();
            let f1 = fidelity(&x, &y).unwrap();
            let f2 = fidelity(&y, &x).unwrap();
            assert!((f1 - f2).abs() <= 1e-10);
        }

        // errors
        let small = crate::states::random_density::<f64>(5, 2, 1).unwrap();
        assert!(fidelity(&rho, &small).is_err());
        let raw = DensityMatrix::from_entries(
            2,
            vec![
                Complex::new(2.0, 0.0),
                Complex::new(0.0, 0.0),
                Complex::new(0.0, 0.0),
                Complex::new(-1.0, 0.0),
            ],
            Physicality::Raw,
        )
        .unwrap();
        assert!(fidelity(&raw, &mixed).is_err());
    }

    #[test]
    fn fit_waist_recovers_sigma_noiseless() {
        let g = geometry();
        let rho = DensityMatrix::from_pure(&eigenstate::<f64>(ModeIndex(0), 13).unwrap());
        let img = intensity_image(&rho, &g).unwrap();
        let fit = fit_waist(&img).unwrap();
        assert!((fit.sigma - 0.114).abs() <= 1e-4, "sigma {}", fit.sigma);
        assert!(fit.center.0.abs() <= 1e-6 && fit.center.1.abs() <= 1e-6);
        assert!(fit.r_squared > 0.999999);
    }

    #[test]
    fn fit_waist_rejects_ring_profile() {
        let g = geometry();
        let rho = DensityMatrix::from_pure(&eigenstate::<f64>(ModeIndex(7), 13).unwrap());
        let img = intensity_image(&rho, &g).unwrap();
        match fit_waist(&img) {
            Err(Error::FitDiverged(_)) => {}
            other => panic!("expected FitDiverged, got {other:?}"),
        }
    }

    #[test]
    fn matrix_file_roundtrips() {
        let dir = std::env::temp_dir().join("ahst_recon_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let rho = crate::states::random_density::<f64>(13, 6, 77).unwrap();

        let jpath = dir.join("rho.json");
        write_matrix_json(&rho, &jpath).unwrap();
        let back = read_matrix_json::<f64>(&jpath, Physicality::Physical).unwrap();
        assert!(linalg::frobenius_dist2(rho.entries(), back.entries()).sqrt() <= 1e-15);

        let cpath = dir.join("rho.csv");
        write_matrix_csv(&rho, &cpath).unwrap();
        let back = read_matrix_csv::<f64>(&cpath, Physicality::Physical).unwrap();
        assert!(linalg::frobenius_dist2(rho.entries(), back.entries()).sqrt() <= 1e-15);

        // malformed: non-square
        std::fs::write(&cpath, "1,0,0,0\n0,0\n").unwrap();
        assert!(read_matrix_csv::<f64>(&cpath, Physicality::Raw).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
