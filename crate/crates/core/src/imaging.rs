//! Forward model: waist-plane intensity images of OAM states, a detector
//! noise model, and bit-exact image file I/O (16-bit PGM + JSON sidecar).

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Real;
use crate::modes::{lg_amplitude, BeamGeometry, ModeIndex};
use crate::states::DensityMatrix;

/// N×N nonnegative intensity samples with their grid geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage<T> {
    pub geometry: BeamGeometry<T>,
    pub pixels: Vec<T>,
    pub total_counts: T,
}

impl<T: Real> IntensityImage<T> {
    pub fn new(geometry: BeamGeometry<T>, pixels: Vec<T>) -> Result<Self> {
        let n = geometry.n_pixels();
        if pixels.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "pixel array has {} entries for a {n}x{n} grid",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite() || *p < T::zero()) {
            return Err(Error::InvalidParameter(
                "image pixels must be finite and nonnegative".into(),
            ));
        }
        let total_counts = pixels.iter().copied().sum();
        Ok(Self { geometry, pixels, total_counts })
    }

    /// Quarter-turn rotations; exact on the half-pixel-offset grid.
    pub fn rotated_ccw(&self) -> Self {
        let n = self.geometry.n_pixels();
        let mut pixels = vec![T::zero(); n * n];
        for row in 0..n {
            for col in 0..n {
                pixels[row * n + col] = self.pixels[(n - 1 - col) * n + row];
            }
        }
        Self { geometry: self.geometry, pixels, total_counts: self.total_counts }
    }

    pub fn rotated_cw(&self) -> Self {
        let n = self.geometry.n_pixels();
        let mut pixels = vec![T::zero(); n * n];
        for row in 0..n {
            for col in 0..n {
                pixels[row * n + col] = self.pixels[col * n + (n - 1 - row)];
            }
        }
        Self { geometry: self.geometry, pixels, total_counts: self.total_counts }
    }
}

/// Supported mode-space size of a grid: the window must capture the outermost
/// ring with margin, u_W = 2(W/σ)² ≥ d + 8√(d+4).
fn supported_dim<T: Real>(geometry: &BeamGeometry<T>) -> usize {
    let half = T::of(geometry.n_pixels() as f64 / 2.0) * geometry.pitch();
    let u = T::of(2.0) * (half / geometry.sigma()).powi(2);
    let mut d = 1usize;
    while T::of((d + 1) as f64) + T::of(8.0) * T::of((d + 5) as f64).sqrt() <= u {
        d += 1;
    }
    d
}

/// Born-rule intensity image: pixel (m, n) carries
/// A · Σ_{l1,l2} Ψ_{l1}Ψ*_{l2} ρ_{l1,l2} at the pixel center, with A fixed so
/// the brightest pixel of a reference |0⟩ image is 1.
pub fn intensity_image<T: Real>(
    rho: &DensityMatrix<T>,
    geometry: &BeamGeometry<T>,
) -> Result<IntensityImage<T>> {
    let d = rho.dim();
    if supported_dim(geometry) < d {
        return Err(Error::DimensionMismatch(format!(
            "dimension {d} exceeds window support {} of this geometry",
            supported_dim(geometry)
        )));
    }
    let n = geometry.n_pixels();
    let sigma = geometry.sigma();
    let scale = geometry.intensity_scale();
    let entries = rho.entries();

    let mut pixels = vec![T::zero(); n * n];
    pixels
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(row, out_row)| {
            let y = geometry.coord(row);
            let mut amps = vec![Complex::new(T::zero(), T::zero()); d];
            for (col, out) in out_row.iter_mut().enumerate() {
                let x = geometry.coord(col);
                let r = (x * x + y * y).sqrt();
                let phi = y.atan2(x);
                // iterate Ψ_l from Ψ_0 to avoid per-mode factorials
                let base = lg_amplitude(ModeIndex(0), r, phi, sigma);
                let step = Complex::from_polar(
                    T::of(2.0).sqrt() * r / sigma,
                    -phi,
                );
                let mut amp = base;
                for (l, slot) in amps.iter_mut().enumerate() {
                    if l > 0 {
                        amp = amp * step / Complex::new(T::of(l as f64).sqrt(), T::zero());
                    }
                    *slot = amp;
                }
                // Σ Ψ_{l1} ρ_{l1,l2} Ψ*_{l2}
                let mut acc = T::zero();
                for l1 in 0..d {
                    for l2 in 0..d {
                        acc += (amps[l1] * entries[l1 * d + l2] * amps[l2].conj()).re;
                    }
                }
                let value = acc * scale;
                debug_assert!(value > T::of(-1e-6), "intensity {value} below dust window");
                *out = value.max(T::zero());
            }
        });

    IntensityImage::new(*geometry, pixels)
}

/// Fraction of a unit-trace state's energy captured by the grid window.
pub fn window_capture_fraction<T: Real>(image: &IntensityImage<T>) -> T {
    let g = &image.geometry;
    image.total_counts * g.pitch() * g.pitch() / g.intensity_scale()
}

/// Detector model: photon budget (None = noiseless), mean dark counts per
/// pixel, quantizer depth (0 = none), and the fractional waist miscalibration
/// applied at reconstruction time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel<T> {
    pub photon_budget: Option<T>,
    pub dark_level: T,
    pub bit_depth: u8,
    pub waist_error: T,
}

impl<T: Real> Default for NoiseModel<T> {
    fn default() -> Self {
        Self { photon_budget: None, dark_level: T::zero(), bit_depth: 0, waist_error: T::zero() }
    }
}

impl<T: Real> NoiseModel<T> {
    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.photon_budget {
            if !(b.is_finite() && b > T::zero()) {
                return Err(Error::InvalidParameter(format!(
                    "photon budget must be positive, got {b}"
                )));
            }
        }
        if self.dark_level < T::zero() || !self.dark_level.is_finite() {
            return Err(Error::InvalidParameter("dark level must be >= 0".into()));
        }
        if self.bit_depth > 16 {
            return Err(Error::InvalidParameter("bit depth must be <= 16".into()));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.photon_budget.is_none() && self.bit_depth == 0
    }
}

/// Apply the noise model: scale to the photon budget, replace pixels by
/// Poisson counts (signal + dark), then quantize. Deterministic per seed.
/// With an infinite budget the Poisson stage is skipped entirely (dark counts
/// model the detector and only exist at a finite budget).
pub fn apply_noise<T: Real>(
    image: &IntensityImage<T>,
    model: &NoiseModel<T>,
    seed: u64,
) -> Result<IntensityImage<T>> {
    model.validate()?;
    let mut pixels = image.pixels.clone();

    if let Some(budget) = model.photon_budget {
        let mut rng = crate::rng::rng_from_seed(seed);
        let scale = if image.total_counts > T::zero() {
            (budget / image.total_counts).to_f64_lossy()
        } else {
            0.0
        };
        let dark = model.dark_level.to_f64_lossy();
        for p in pixels.iter_mut() {
            let lambda = p.to_f64_lossy() * scale + dark;
            let counts = if lambda > 0.0 {
                let dist = Poisson::new(lambda).map_err(|e| {
                    Error::InvalidParameter(format!("Poisson mean {lambda}: {e}"))
                })?;
                dist.sample(&mut rng)
            } else {
                0.0
            };
            *p = T::of(counts);
        }
    }

    if model.bit_depth > 0 {
        let levels = T::of(((1u32 << model.bit_depth) - 1) as f64);
        let max = pixels.iter().copied().fold(T::zero(), T::max);
        if max > T::zero() {
            for p in pixels.iter_mut() {
                *p = (*p / max * levels).round();
            }
        }
    }

    IntensityImage::new(image.geometry, pixels)
}

/// Sidecar metadata stored next to every image file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ImageMeta {
    pub sigma_mm: f64,
    pub pitch_mm: f64,
    pub n_pixels: u32,
    pub total_counts: f64,
    pub gouy_rotate_90: bool,
}

fn sidecar_path(image_path: &Path) -> PathBuf {
    image_path.with_extension("meta.json")
}

/// Write a 16-bit big-endian binary PGM (maxval 65535) plus its sidecar.
/// Pixels are scaled so the image maximum maps to 65535; absolute scale is
/// recovered on read from `total_counts`.
pub fn write_image<T: Real>(
    image: &IntensityImage<T>,
    path: &Path,
    gouy_rotate_90: bool,
) -> Result<()> {
    let n = image.geometry.n_pixels();
    let max = image.pixels.iter().copied().fold(T::zero(), T::max);
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{n} {n}\n65535\n")?;
    for p in &image.pixels {
        let q = if max > T::zero() {
            (*p / max * T::of(65535.0)).round().to_f64_lossy() as u16
        } else {
            0
        };
        w.write_all(&q.to_be_bytes())?;
    }
    w.flush()?;

    let meta = ImageMeta {
        sigma_mm: image.geometry.sigma().to_f64_lossy(),
        pitch_mm: image.geometry.pitch().to_f64_lossy(),
        n_pixels: n as u32,
        total_counts: image.total_counts.to_f64_lossy(),
        gouy_rotate_90,
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Read an image written by [`write_image`]. Fails on truncated or malformed
/// files rather than returning a partial image.
pub fn read_image<T: Real>(path: &Path) -> Result<(IntensityImage<T>, ImageMeta)> {
    let bytes = std::fs::read(path)?;
    let meta: ImageMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;

    let mut cursor = 0usize;
    let mut next_token = |bytes: &[u8]| -> Result<String> {
        // skip whitespace and # comments
        loop {
            while cursor < bytes.len() && bytes[cursor].is_ascii_whitespace() {
                cursor += 1;
            }
            if cursor < bytes.len() && bytes[cursor] == b'#' {
                while cursor < bytes.len() && bytes[cursor] != b'\n' {
                    cursor += 1;
                }
            } else {
                break;
            }
        }
        let start = cursor;
        while cursor < bytes.len() && !bytes[cursor].is_ascii_whitespace() {
            cursor += 1;
        }
        if start == cursor {
            return Err(Error::Format("PGM header truncated".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..cursor]).into_owned())
    };

    if next_token(&bytes)? != "P5" {
        return Err(Error::Format("not a binary PGM (P5) file".into()));
    }
    let width: usize =
        next_token(&bytes)?.parse().map_err(|_| Error::Format("bad PGM width".into()))?;
    let height: usize =
        next_token(&bytes)?.parse().map_err(|_| Error::Format("bad PGM height".into()))?;
    let maxval: u32 =
        next_token(&bytes)?.parse().map_err(|_| Error::Format("bad PGM maxval".into()))?;
    if maxval != 65535 {
        return Err(Error::Format(format!("expected maxval 65535, got {maxval}")));
    }
    if width != height {
        return Err(Error::Format(format!("expected a square image, got {width}x{height}")));
    }
    if width != meta.n_pixels as usize {
        return Err(Error::DimensionMismatch(format!(
            "PGM is {width}px but sidecar says {}px",
            meta.n_pixels
        )));
    }
    // exactly one whitespace byte separates header and payload
    cursor += 1;
    let expected = width * height * 2;
    if bytes.len() < cursor || bytes.len() - cursor != expected {
        return Err(Error::Format(format!(
            "PGM payload is {} bytes, expected {expected}",
            bytes.len().saturating_sub(cursor)
        )));
    }

    let mut raw = Vec::with_capacity(width * height);
    let mut sum_raw = 0u64;
    for chunk in bytes[cursor..].chunks_exact(2) {
        let v = u16::from_be_bytes([chunk[0], chunk[1]]);
        sum_raw += v as u64;
        raw.push(v);
    }
    // restore absolute scale from total_counts
    let scale = if sum_raw > 0 { T::of(meta.total_counts / sum_raw as f64) } else { T::zero() };
    let pixels: Vec<T> = raw.into_iter().map(|v| T::of(v as f64) * scale).collect();

    let geometry = BeamGeometry::new(T::of(meta.sigma_mm), width, T::of(meta.pitch_mm))?;
    Ok((IntensityImage::new(geometry, pixels)?, meta))
}

/// Row-major CSV export, one image row per line.
pub fn write_image_csv<T: Real>(image: &IntensityImage<T>, path: &Path) -> Result<()> {
    let n = image.geometry.n_pixels();
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for row in 0..n {
        let line: Vec<String> =
            (0..n).map(|col| format!("{}", image.pixels[row * n + col].to_f64_lossy())).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}
