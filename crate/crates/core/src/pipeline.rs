//! End-to-end composition of the forward model and the inverse pipeline:
//! simulate → (noise) → DFT → kernel projection → physicalize → score.
//! Shared by the CLI and the acceptance suite.

use rayon::prelude::*;

use crate::error::Result;
use crate::float::Real;
use crate::imaging::{apply_noise, intensity_image, IntensityImage, NoiseModel};
use crate::modes::{BeamGeometry, KernelTable, ModeIndex};
use crate::recon::{dft2, extract_density, fidelity, physicalize, ReconstructionReport};
use crate::rng::split_seed;
use crate::states::{
    even_cat, eigenstate, psi_g, rho_m1, rho_m2, squeezed_vacuum, DensityMatrix,
};

/// Raw and physical matrices plus the per-run report.
#[derive(Debug, Clone)]
pub struct ReconstructionOutcome<T> {
    pub raw: DensityMatrix<T>,
    pub physical: DensityMatrix<T>,
    pub report: ReconstructionReport,
}

/// Run the inverse pipeline on an intensity image.
///
/// `subtract_dark` removes a known mean background before the transform;
/// `target` adds a fidelity score to the report.
pub fn reconstruct_image<T: Real>(
    image: &IntensityImage<T>,
    table: &KernelTable<T>,
    d: usize,
    subtract_dark: Option<T>,
    target: Option<&DensityMatrix<T>>,
) -> Result<ReconstructionOutcome<T>> {
    let cleaned;
    let image = match subtract_dark {
        Some(dark) if dark > T::zero() => {
            let pixels = image.pixels.iter().map(|p| (*p - dark).max(T::zero())).collect();
            cleaned = IntensityImage::new(image.geometry, pixels)?;
            &cleaned
        }
        _ => image,
    };
    let fourier = dft2(image);
    let (raw, stats) = extract_density(&fourier, table, d)?;
    let (physical, info) = physicalize(&raw)?;
    let fidelity_vs_target = match target {
        Some(t) => Some(fidelity(t, &physical)?.to_f64_lossy()),
        None => None,
    };
    let report = ReconstructionReport {
        fidelity_vs_target,
        trace_pre_normalization: stats.trace_pre_normalization.to_f64_lossy(),
        min_eigenvalue_raw: info.min_eigenvalue_raw.to_f64_lossy(),
        s_final: info.s_final.to_f64_lossy(),
        r_cut_used: table.r_cut().to_f64_lossy(),
    };
    Ok(ReconstructionOutcome { raw, physical, report })
}

/// The 18 benchmark states: eigenstates |0⟩..|12⟩, the three superpositions
/// ψ_G, ψ_c (α = 2), ψ_s (γ = 1.5), and the mixtures ρ_m1, ρ_m2.
pub fn benchmark_states<T: Real>(d: usize) -> Result<Vec<(String, DensityMatrix<T>)>> {
    let mut out = Vec::with_capacity(18);
    for l in 0..13u32 {
        out.push((format!("|{l}>"), DensityMatrix::from_pure(&eigenstate(ModeIndex(l), d)?)));
    }
    out.push(("psi_G".into(), DensityMatrix::from_pure(&psi_g(d)?)));
    out.push(("psi_c".into(), DensityMatrix::from_pure(&even_cat(T::of(2.0), d)?)));
    out.push(("psi_s".into(), DensityMatrix::from_pure(&squeezed_vacuum(T::of(1.5), d)?)));
    out.push(("rho_m1".into(), rho_m1(d)?));
    out.push(("rho_m2".into(), rho_m2(d)?));
    Ok(out)
}

/// One row of the benchmark summary.
#[derive(Debug, Clone)]
pub struct Table1Row {
    pub label: String,
    pub mean_fidelity: f64,
    pub std_fidelity: f64,
    pub fidelities: Vec<f64>,
}

/// Run every benchmark state through simulate → noise → reconstruct with
/// `repetitions` seeds each and summarize mean ± standard deviation
/// fidelities. Seeds fan out from `master_seed` by state and repetition, so
/// the result is independent of scheduling.
pub fn table1<T: Real>(
    geometry: &BeamGeometry<T>,
    table: &KernelTable<T>,
    d: usize,
    noise: &NoiseModel<T>,
    master_seed: u64,
    repetitions: usize,
) -> Result<Vec<Table1Row>> {
    let states = benchmark_states::<T>(d)?;
    let jobs: Vec<(usize, usize)> = (0..states.len())
        .flat_map(|s| (0..repetitions).map(move |r| (s, r)))
        .collect();

    let fidelities: Vec<(usize, f64)> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let (_, rho) = &states[s];
            let seed = split_seed(master_seed, (s * repetitions + r) as u64);
            let f = run_single(rho, geometry, table, d, noise, seed).unwrap_or(0.0);
            (s, f)
        })
        .collect();

    let mut rows = Vec::with_capacity(states.len());
    for (s, (label, _)) in states.iter().enumerate() {
        let fs: Vec<f64> =
            fidelities.iter().filter(|(i, _)| *i == s).map(|(_, f)| *f).collect();
        let mean = fs.iter().sum::<f64>() / fs.len() as f64;
        let var = if fs.len() > 1 {
            fs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (fs.len() - 1) as f64
        } else {
            0.0
        };
        rows.push(Table1Row {
            label: label.clone(),
            mean_fidelity: mean,
            std_fidelity: var.sqrt(),
            fidelities: fs,
        });
    }
    Ok(rows)
}

fn run_single<T: Real>(
    rho: &DensityMatrix<T>,
    geometry: &BeamGeometry<T>,
    table: &KernelTable<T>,
    d: usize,
    noise: &NoiseModel<T>,
    seed: u64,
) -> Result<f64> {
    let image = intensity_image(rho, geometry)?;
    let image = if noise.is_identity() { image } else { apply_noise(&image, noise, seed)? };
    let outcome = reconstruct_image(&image, table, d, None, Some(rho))?;
    Ok(outcome.report.fidelity_vs_target.unwrap_or(0.0))
}

/// Noiseless round trip of one state; returns the fidelity.
pub fn round_trip_fidelity<T: Real>(
    rho: &DensityMatrix<T>,
    geometry: &BeamGeometry<T>,
    table: &KernelTable<T>,
) -> Result<T> {
    let image = intensity_image(rho, geometry)?;
    let outcome = reconstruct_image(&image, table, rho.dim(), None, None)?;
    fidelity(rho, &outcome.physical)
}
