//! Coincidence-engine throughput on two independent 47 Mcps streams.
//!
//!     cargo run --release --example coincidence_throughput [events]

use std::time::Instant;

use timebin::cli::synthetic_streams;
use timebin::coincidence::{count_coincidences, cross_correlation_histogram, CoincidenceOptions};

fn main() -> timebin::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(10_000_000);
    let (s, i) = synthetic_streams(n, 1)?;
    let start = Instant::now();
    let r = count_coincidences(&s, &i, CoincidenceOptions::default())?;
    let secs = start.elapsed().as_secs_f64();
    println!(
        "{} timestamps in {secs:.3} s: {:.3e} /s; cc {:.0} kcps (independent streams, r1·r2·T ≈ 442 kcps)",
        s.len() + i.len(),
        (s.len() + i.len()) as f64 / secs,
        r.cc_rate / 1e3
    );
    let start = Instant::now();
    let h = cross_correlation_histogram(&s, &i, 4, 1000)?;
    println!(
        "delay histogram: {} entries in range, {:.3} s",
        h.in_range(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
