//! Two-photon fringe through the full default chain, scanned over the idler
//! interferometer temperature.
//!
//!     cargo run --release --example fringe_scan [mu]

use timebin::experiments::{fit_visibility, run_temperature_scan, FringeScan};
use timebin::io::RunConfig;

fn main() -> timebin::Result<()> {
    let mu: f64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(0.001);
    let cfg = RunConfig::default();
    let chain = cfg.chain()?.with_mu(mu);
    let e = &cfg.experiment;
    let scan = FringeScan::uniform(e.fringe_points, 100_000, cfg.run.seed);
    let curve = run_temperature_scan(
        &chain,
        &scan,
        &cfg.temperatures(),
        e.temperature_ref_c,
        e.celsius_per_pi,
    )?;
    for p in &curve.points {
        let bar = "#".repeat((60.0 * p.rate.value / curve.peak_rate()) as usize);
        println!("{:6.2} °C {:>10.0} cps {bar}", p.x, p.rate.value);
    }
    let fit = fit_visibility(&curve)?;
    println!(
        "mu = {mu}: V = {:.4} ± {:.4}, phase {:.3} rad, chi2/dof {:.2}",
        fit.visibility.value, fit.visibility.sigma, fit.phase.value, fit.chi2_per_dof
    );
    Ok(())
}
