//! CAR of an ideal chain against the dark-free limit `1/μ + 1`.
//!
//!     cargo run --release --example car_sweep

use timebin::coincidence::CoincidenceOptions;
use timebin::experiments::run_car_sweep;
use timebin::sim::ChainConfig;

fn main() -> timebin::Result<()> {
    let runs = [
        (0.001, 300_000_000),
        (0.003, 100_000_000),
        (0.01, 30_000_000),
        (0.03, 10_000_000),
        (0.1, 10_000_000),
    ];
    let curve = run_car_sweep(
        &ChainConfig::ideal(0.01),
        &runs,
        7,
        CoincidenceOptions::default(),
    )?;
    println!("{:>7} {:>10} {:>9} {:>9}", "mu", "CAR", "sigma", "1/mu+1");
    for p in &curve.points {
        let c = p.car.expect("accidentals");
        println!(
            "{:>7.3} {:>10.2} {:>9.2} {:>9.1}",
            p.mu, c.value, c.sigma, p.model
        );
    }
    Ok(())
}
