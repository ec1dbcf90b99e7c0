//! `ahst` — simulate and reconstruct OAM-state tomography from intensity
//! images, plus Wigner exports and kernel diagnostics.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use ahst_core::error::{Error, Result};
use ahst_core::imaging::{
    apply_noise, intensity_image, read_image, window_capture_fraction, write_image,
};
use ahst_core::modes::{BeamGeometry, KernelTable};
use ahst_core::pipeline::{reconstruct_image, table1};
use ahst_core::recon::{fit_waist, read_matrix_csv, read_matrix_json, write_matrix_json};
use ahst_core::states::Physicality;
use ahst_core::wigner::{wigner, write_wigner_csv, write_wigner_ppm, DEFAULT_EXTENT, DEFAULT_POINTS};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "ahst", version, about = "OAM-state tomography from intensity images")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, overriding the configured one
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, overriding the configured one
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the intensity image of the configured state
    Simulate,
    /// Reconstruct a density matrix from an image file
    Reconstruct { image: PathBuf },
    /// Run the 18-state benchmark and emit mean ± std fidelities
    Table1,
    /// Evaluate the Wigner function of a stored density matrix
    Wigner { matrix: PathBuf },
    /// Check the discrete kernel orthogonality relation pair by pair
    Orthocheck,
    /// Fit the beam waist of a fundamental-Gaussian image
    Calibrate { image: PathBuf },
}

fn main() {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("AHST_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.out_dir = out;
    }
    std::fs::create_dir_all(&config.out_dir)?;
    match cli.command {
        Command::Simulate => cmd_simulate(&config),
        Command::Reconstruct { image } => cmd_reconstruct(&config, &image),
        Command::Table1 => cmd_table1(&config),
        Command::Wigner { matrix } => cmd_wigner(&config, &matrix),
        Command::Orthocheck => cmd_orthocheck(&config),
        Command::Calibrate { image } => cmd_calibrate(&config, &image),
    }
}

fn build_table(config: &RunConfig, sigma: f64, n_pixels: usize, pitch: f64) -> Result<KernelTable<f64>> {
    let geometry = BeamGeometry::new(sigma, n_pixels, pitch)?;
    match config.r_cut {
        Some(r_cut) => KernelTable::build_with_cutoff(geometry, config.l_max, r_cut),
        None => KernelTable::build(geometry, config.l_max),
    }
}

fn cmd_simulate(config: &RunConfig) -> Result<()> {
    let spec = config
        .state_spec()?
        .ok_or_else(|| Error::InvalidParameter("simulate needs a state spec".into()))?;
    let rho = spec.build::<f64>()?;
    let geometry = config.geometry()?;
    let clean = intensity_image(&rho, &geometry)?;
    let capture = window_capture_fraction(&clean);

    // Far-field convention: store the quarter-turned image; reconstruction
    // undoes it.
    let oriented = if config.gouy_rotate_90 { clean.rotated_cw() } else { clean };
    let noisy = apply_noise(&oriented, &config.noise.model(), config.seed)?;

    let path = config.out_dir.join("image.pgm");
    write_image(&noisy, &path, config.gouy_rotate_90)?;
    println!("wrote {}", path.display());
    println!("total counts: {}", noisy.total_counts);
    println!("window capture fraction: {capture:.6}");
    Ok(())
}

fn cmd_reconstruct(config: &RunConfig, image_path: &Path) -> Result<()> {
    let (image, meta) = read_image::<f64>(image_path)?;
    let config_geometry = config.geometry()?;
    if !config_geometry.grid_compatible(&image.geometry) {
        return Err(Error::GeometryMismatch(format!(
            "config grid {}px/{:.6}mm vs image {}px/{:.6}mm",
            config_geometry.n_pixels(),
            config_geometry.pitch(),
            image.geometry.n_pixels(),
            image.geometry.pitch()
        )));
    }
    let sigma_recon = meta.sigma_mm * (1.0 + config.noise.waist_error);
    let table = build_table(config, sigma_recon, image.geometry.n_pixels(), meta.pitch_mm)?;

    let image = if meta.gouy_rotate_90 { image.rotated_ccw() } else { image };
    let subtract = config.subtract_dark.then_some(config.noise.dark_level);
    let target = config.state_spec()?.map(|s| s.build::<f64>()).transpose()?;
    let outcome = reconstruct_image(&image, &table, config.dim(), subtract, target.as_ref())?;

    let raw_path = config.out_dir.join("raw.json");
    let phys_path = config.out_dir.join("physical.json");
    let report_path = config.out_dir.join("report.json");
    write_matrix_json(&outcome.raw, &raw_path)?;
    write_matrix_json(&outcome.physical, &phys_path)?;
    std::fs::write(&report_path, serde_json::to_string_pretty(&outcome.report)?)?;
    println!("wrote {}", raw_path.display());
    println!("wrote {}", phys_path.display());
    println!("wrote {}", report_path.display());
    if let Some(f) = outcome.report.fidelity_vs_target {
        println!("fidelity vs target: {f:.6}");
    }
    println!("trace before normalization: {:.6e}", outcome.report.trace_pre_normalization);
    println!("least-squares cost: {:.3e}", outcome.report.s_final);
    Ok(())
}

fn cmd_table1(config: &RunConfig) -> Result<()> {
    if config.dim() < 13 {
        return Err(Error::InvalidParameter(format!(
            "the 18-state benchmark spans modes up to |12>, needs dim >= 13 (got {})",
            config.dim()
        )));
    }
    let geometry = config.geometry()?;
    let table = build_table(config, config.sigma_mm, config.n_pixels, geometry.pitch())?;
    let rows = table1(
        &geometry,
        &table,
        config.dim(),
        &config.noise.model(),
        config.seed,
        config.repetitions,
    )?;

    let path = config.out_dir.join("table1.csv");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(file, "category,state,fidelity_mean,fidelity_std")?;
    for row in &rows {
        let category = match row.label.as_str() {
            l if l.starts_with('|') => "eigenstate",
            "psi_G" | "psi_c" | "psi_s" => "superposition",
            _ => "mixed",
        };
        writeln!(
            file,
            "{category},{},{},{}",
            row.label, row.mean_fidelity, row.std_fidelity
        )?;
        println!(
            "{:12} {:7}  {:.4} ± {:.4}",
            category, row.label, row.mean_fidelity, row.std_fidelity
        );
    }
    file.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_wigner(config: &RunConfig, matrix_path: &Path) -> Result<()> {
    let rho = match matrix_path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_matrix_csv::<f64>(matrix_path, Physicality::Physical)?,
        _ => read_matrix_json::<f64>(matrix_path, Physicality::Physical)?,
    };
    let grid = wigner(&rho, DEFAULT_EXTENT, DEFAULT_POINTS)?;
    let csv = config.out_dir.join("wigner.csv");
    let ppm = config.out_dir.join("wigner.ppm");
    write_wigner_csv(&grid, &csv)?;
    write_wigner_ppm(&grid, &ppm)?;
    println!("wrote {}", csv.display());
    println!("wrote {}", ppm.display());
    println!("W range: [{:.6}, {:.6}], grid integral {:.6}", grid.min(), grid.max(), grid.integral());
    Ok(())
}

fn cmd_orthocheck(config: &RunConfig) -> Result<()> {
    let geometry = config.geometry()?;
    let table = build_table(config, config.sigma_mm, config.n_pixels, geometry.pitch())?;
    let (max_dev, rows) = table.orthogonality_scan();
    let path = config.out_dir.join("orthocheck.csv");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(file, "l1,l2,max_abs_deviation")?;
    for (l1, l2, dev) in &rows {
        writeln!(file, "{l1},{l2},{dev}")?;
    }
    file.flush()?;
    println!("wrote {}", path.display());
    println!(
        "max |deviation from orthonormality| over {} pair pairs: {max_dev:.3e}",
        rows.len() * rows.len()
    );
    Ok(())
}

fn cmd_calibrate(config: &RunConfig, image_path: &Path) -> Result<()> {
    let (image, _) = read_image::<f64>(image_path)?;
    let fit = fit_waist(&image)?;
    let path = config.out_dir.join("calibrate.json");
    let doc = serde_json::json!({
        "sigma_mm": fit.sigma,
        "sigma_stderr_mm": fit.sigma_stderr,
        "center_x_mm": fit.center.0,
        "center_y_mm": fit.center.1,
        "r_squared": fit.r_squared,
    });
    std::fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
    println!("wrote {}", path.display());
    println!("sigma: {:.6} ± {:.6} mm (R² = {:.6})", fit.sigma, fit.sigma_stderr, fit.r_squared);
    Ok(())
}
