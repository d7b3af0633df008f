//! Coincidence probability per pulse against μ for detectors that stay dead
//! for a whole number of slots after each count.
//!
//!     cargo run --release --example saturation_curve

use timebin::experiments::run_saturation_sweep;

fn main() -> timebin::Result<()> {
    let mus = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1];
    let pts = run_saturation_sweep(&mus, &[0, 5, 10], 10_000_000, 1)?;
    println!(
        "{:>3} {:>7} {:>11} {:>11} {:>11}",
        "D", "mu", "simulated", "mu(1-muD)", "p/(1+pD)"
    );
    for p in pts {
        println!(
            "{:>3} {:>7.3} {:>11.6} {:>11.6} {:>11.6}",
            p.dead_slots, p.mu, p.measured.value, p.analytic, p.slotted
        );
    }
    Ok(())
}
