//! Estimates detector jitter from the arrival phase of signal detections and
//! predicts visibility against μ from it.
//!
//!     cargo run --release --example jitter_visibility [fwhm_ps]

use timebin::experiments::{estimate_jitter, jitter_visibility_curve};
use timebin::model::{visibility_multiphoton, JitterSpec};
use timebin::sim::{simulate_chain, ChainConfig, SimRun};

fn main() -> timebin::Result<()> {
    let fwhm_ps: f64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(80.0);
    let mut chain = ChainConfig::default().with_mu(0.01);
    chain.signal.detector.jitter = JitterSpec::from_fwhm(fwhm_ps * 1e-12);
    let out = simulate_chain(&chain, &SimRun::new(2, 20_000_000))?;
    let fit = estimate_jitter(&out.signal, 4)?;
    println!(
        "injected FWHM {fwhm_ps} ps, fitted {:.2} ± {:.2} ps",
        fit.fwhm_ps.value, fit.fwhm_ps.sigma
    );
    let mus = [0.001, 0.005, 0.01, 0.02, 0.05, 0.094, 0.17];
    let curve = jitter_visibility_curve(
        &JitterSpec::from_fwhm(fit.fwhm_ps.value * 1e-12),
        200e-12,
        &mus,
        0.95,
    )?;
    println!("P_in = {:.5}", curve[0].p_in);
    for p in curve {
        println!(
            "mu {:>6.3}: V {:.4} (no jitter {:.4})",
            p.mu,
            p.visibility,
            0.95 * visibility_multiphoton(p.mu)
        );
    }
    Ok(())
}
