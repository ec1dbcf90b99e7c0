//! Fock-basis Wigner function of a density matrix on a phase-space grid,
//! with CSV and PPM exports. The OAM index l maps one-to-one onto the Fock
//! index n.

use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Real;
use crate::specfun::{laguerre, log_factorial};
use crate::states::{DensityMatrix, Physicality};

/// Real Wigner samples W(p, q) on a square grid. `values[row·n + col]`
/// holds W(p = axis(row), q = axis(col)).
#[derive(Debug, Clone)]
pub struct WignerGrid<T> {
    pub extent: T,
    pub n_points: usize,
    pub values: Vec<T>,
}

impl<T: Real> WignerGrid<T> {
    pub fn axis(&self, i: usize) -> T {
        -self.extent + T::of(i as f64) * self.step()
    }

    pub fn step(&self) -> T {
        T::of(2.0) * self.extent / T::of((self.n_points - 1) as f64)
    }

    /// Trapezoid quadrature of the grid over dp dq.
    pub fn integral(&self) -> T {
        let n = self.n_points;
        let mut acc = T::zero();
        for row in 0..n {
            let wr = if row == 0 || row == n - 1 { T::of(0.5) } else { T::one() };
            for col in 0..n {
                let wc = if col == 0 || col == n - 1 { T::of(0.5) } else { T::one() };
                acc += wr * wc * self.values[row * n + col];
            }
        }
        acc * self.step() * self.step()
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Bilinear sample at (p, q); clamps to the grid edge.
    pub fn sample(&self, p: T, q: T) -> T {
        let n = self.n_points;
        let fi = ((p + self.extent) / self.step())
            .max(T::zero())
            .min(T::of((n - 1) as f64));
        let fj = ((q + self.extent) / self.step())
            .max(T::zero())
            .min(T::of((n - 1) as f64));
        let i0 = fi.floor().to_f64_lossy() as usize;
        let j0 = fj.floor().to_f64_lossy() as usize;
        let i1 = (i0 + 1).min(n - 1);
        let j1 = (j0 + 1).min(n - 1);
        let ti = fi - T::of(i0 as f64);
        let tj = fj - T::of(j0 as f64);
        let v00 = self.values[i0 * n + j0];
        let v01 = self.values[i0 * n + j1];
        let v10 = self.values[i1 * n + j0];
        let v11 = self.values[i1 * n + j1];
        (v00 * (T::one() - tj) + v01 * tj) * (T::one() - ti)
            + (v10 * (T::one() - tj) + v11 * tj) * ti
    }
}

/// Default grid: 201×201 points over ±6 quadrature units.
pub const DEFAULT_EXTENT: f64 = 6.0;
pub const DEFAULT_POINTS: usize = 201;

/// Single Fock-basis Wigner term (ħ = 1, before overall normalization):
/// (−1)^{min}·√(n1!n2!)/max!·e^{−r²}·(√2r)^{|Δn|}·L_min^{|Δn|}(2r²)·e^{i(n1−n2)φ}
fn wigner_term<T: Real>(n1: u32, n2: u32, r: T, phi: T) -> Complex<T> {
    let nu = n1.abs_diff(n2);
    let small = n1.min(n2);
    let big = n1.max(n2);
    let log_pref =
        T::of(0.5) * (log_factorial::<T>(n1) + log_factorial::<T>(n2)) - log_factorial::<T>(big);
    let sign = if small.is_multiple_of(2) { T::one() } else { -T::one() };
    let x = T::of(2.0) * r * r;
    let radial = sign
        * log_pref.exp()
        * (-r * r).exp()
        * (T::of(2.0).sqrt() * r).powi(nu as i32)
        * laguerre(small, nu, x);
    let delta = n1 as i64 - n2 as i64;
    Complex::from_polar(radial, T::of(delta as f64) * phi)
}

/// Evaluate the Wigner function of a physical density matrix on the grid,
/// normalized so the trapezoid integral over the grid is 1.
pub fn wigner<T: Real>(rho: &DensityMatrix<T>, extent: T, n_points: usize) -> Result<WignerGrid<T>> {
    if rho.physicality() != Physicality::Physical || !rho.is_physical() {
        return Err(Error::NonPhysical("Wigner input must be a physical density matrix".into()));
    }
    if n_points < 2 || !(extent.is_finite() && extent > T::zero()) {
        return Err(Error::InvalidParameter("Wigner grid needs n ≥ 2 points and extent > 0".into()));
    }
    let d = rho.dim();
    let mut grid = WignerGrid { extent, n_points, values: vec![T::zero(); n_points * n_points] };
    let step = grid.step();

    let residues: Vec<T> = grid
        .values
        .par_chunks_mut(n_points)
        .enumerate()
        .map(|(row, out_row)| {
            let p = -extent + T::of(row as f64) * step;
            let mut worst_residue = T::zero();
            for (col, out) in out_row.iter_mut().enumerate() {
                let q = -extent + T::of(col as f64) * step;
                let r = (p * p + q * q).sqrt();
                let phi = p.atan2(q);
                let mut acc = Complex::new(T::zero(), T::zero());
                for n1 in 0..d {
                    for n2 in 0..d {
                        let rho_el = rho.entry(n1, n2);
                        if rho_el.norm_sqr() == T::zero() {
                            continue;
                        }
                        acc += rho_el * wigner_term(n1 as u32, n2 as u32, r, phi);
                    }
                }
                worst_residue = worst_residue.max(acc.im.abs());
                *out = acc.re;
            }
            worst_residue
        })
        .collect();

    let residue = residues.into_iter().fold(T::zero(), T::max);
    if residue > T::of(1e-10) {
        return Err(Error::NonPhysical(format!(
            "Wigner imaginary residue {residue} exceeds 1e-10"
        )));
    }

    let q = grid.integral();
    if !(q.is_finite() && q.abs() > T::zero()) {
        return Err(Error::InvalidParameter("Wigner grid integral vanished".into()));
    }
    let inv = T::one() / q;
    for v in grid.values.iter_mut() {
        *v *= inv;
    }
    Ok(grid)
}

/// Elementwise factor relating the intensity-transform expansion term (with
/// R = πσf_r/2) to the Wigner expansion term, after dividing the transform
/// term by e^{−R²} and identifying r' = R, φ' = φ_f.
///
/// The radial profiles then coincide exactly, so the factor is the constant
/// (−i)^{|Δn|} / (−1)^{min(n1,n2)} — the transform expansion is genuinely
/// complex while the Wigner sum of the same matrix is real.
pub fn transform_vs_wigner_factor<T: Real>(n1: u32, n2: u32) -> Complex<T> {
    let nu = n1.abs_diff(n2);
    let minus_i_nu: Complex<T> = match nu % 4 {
        0 => Complex::new(T::one(), T::zero()),
        1 => Complex::new(T::zero(), -T::one()),
        2 => Complex::new(-T::one(), T::zero()),
        _ => Complex::new(T::zero(), T::one()),
    };
    let sign = if n1.min(n2).is_multiple_of(2) { T::one() } else { -T::one() };
    minus_i_nu * sign
}

/// Sidecar for the PPM rendering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WignerMeta {
    pub w_min: f64,
    pub w_max: f64,
    pub extent: f64,
    pub n_points: u32,
}

/// CSV export: one `q,p,w` triple per line, row-major.
pub fn write_wigner_csv<T: Real>(grid: &WignerGrid<T>, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let n = grid.n_points;
    for row in 0..n {
        for col in 0..n {
            writeln!(
                w,
                "{},{},{}",
                grid.axis(col).to_f64_lossy(),
                grid.axis(row).to_f64_lossy(),
                grid.values[row * n + col].to_f64_lossy()
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// 8-bit binary PPM (P6) with a symmetric blue-white-red diverging map and a
/// JSON sidecar carrying the value range.
pub fn write_wigner_ppm<T: Real>(grid: &WignerGrid<T>, path: &Path) -> Result<()> {
    let n = grid.n_points;
    let w_min = grid.min().to_f64_lossy();
    let w_max = grid.max().to_f64_lossy();
    let scale = w_max.abs().max(w_min.abs()).max(1e-300);
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    write!(out, "P6\n{n} {n}\n255\n")?;
    for row in 0..n {
        for col in 0..n {
            let t = (grid.values[row * n + col].to_f64_lossy() / scale).clamp(-1.0, 1.0);
            let r = (255.0 * (1.0 + t).min(1.0)).round() as u8;
            let g = (255.0 * (1.0 - t.abs())).round() as u8;
            let b = (255.0 * (1.0 - t).min(1.0)).round() as u8;
            out.write_all(&[r, g, b])?;
        }
    }
    out.flush()?;
    let meta = WignerMeta { w_min, w_max, extent: grid.extent.to_f64_lossy(), n_points: n as u32 };
    std::fs::write(path.with_extension("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}
