//! Packet-content denoising of a synthetic image, sweeping K.
//!
//! ```text
//! cargo run --example denoise_synthetic
//! ```
//! The clean, noisy and best denoised images are written as PGM files to
//! the system temp directory.

use wpc::denoise::{add_gaussian_noise, denoise_image, piecewise_smooth_image, psnr, DenoiseConfig};
use wpc::pgm::{read_pgm_file, write_pgm_file};

fn main() -> wpc::Result<()> {
    let clean = piecewise_smooth_image(64, 64);
    let noisy = add_gaussian_noise(&clean, 0.1, 2024)?;
    println!("noisy PSNR {:.2} dB", psnr(&clean, &noisy)?.db);

    let mut best = None;
    for k in [1, 2, 4, 8, 16] {
        let cfg = DenoiseConfig {
            top_k: k,
            stride: Some(4),
            ..DenoiseConfig::default()
        };
        let (out, report) = denoise_image(&noisy, &cfg)?;
        let report = report.with_reference(&clean, &noisy, &out)?;
        let db = report.psnr_denoised.expect("reference supplied");
        println!(
            "K = {k:>2}: PSNR {db:.2} dB, retained energy {:.4}, chosen {:?}",
            report.retained_energy_fraction, report.chosen
        );
        if best.as_ref().is_none_or(|(_, b, _)| db > *b) {
            best = Some((k, db, out));
        }
    }
    let (k, db, out) = best.expect("at least one K");
    println!("best K = {k} at {db:.2} dB");

    let dir = std::env::temp_dir();
    write_pgm_file(&clean, dir.join("wpc_clean.pgm"))?;
    write_pgm_file(&noisy, dir.join("wpc_noisy.pgm"))?;
    write_pgm_file(&out, dir.join("wpc_denoised.pgm"))?;
    let back = read_pgm_file(dir.join("wpc_denoised.pgm"))?;
    println!("wrote {}x{} images to {}", back.width(), back.height(), dir.display());
    Ok(())
}
