//! Throughput of single- and 16-pixel detectors against input rate.
//!
//!     cargo run --release --example detector_deadtime

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use timebin::coincidence::Channel;
use timebin::model::{counted_rate, DeadTimeSpec};
use timebin::sim::{detect, DetectorParams};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dead = DeadTimeSpec::non_paralyzable(50e-9);
    println!(
        "{:>10} {:>12} {:>12} {:>12}",
        "input Mcps", "1 px Mcps", "model", "16 px Mcps"
    );
    for rate in [1e6, 5e6, 1e7, 2e7, 47e6, 1e8] {
        let gap = 1e12 / rate;
        let mut t = 0.0;
        let input: Vec<f64> = (0..500_000)
            .map(|_| {
                t += -gap * (1.0 - rng.random::<f64>()).ln();
                t
            })
            .collect();
        let span = t * 1e-12;
        let run = |pixels: u32, rng: &mut ChaCha8Rng| {
            let det = DetectorParams {
                pixel_count: pixels,
                pixel_dead_time: dead,
                ..DetectorParams::ideal()
            };
            detect(&input, &det, Channel::Signal, rng).events.len() as f64 / span / 1e6
        };
        let one = run(1, &mut rng);
        let many = run(16, &mut rng);
        println!(
            "{:>10.1} {:>12.2} {:>12.2} {:>12.2}",
            rate / 1e6,
            one,
            counted_rate(rate, &dead) / 1e6,
            many
        );
    }
}
