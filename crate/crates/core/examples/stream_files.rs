//! Writes both detector streams of a run to timestamp files and streams one
//! back in constant memory.
//!
//!     cargo run --release --example stream_files [dir]

use std::path::PathBuf;

use timebin::io::{open_stream, write_stream};
use timebin::sim::{simulate_chain, ChainConfig, SimRun};

fn main() -> timebin::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out".into()));
    std::fs::create_dir_all(&dir)?;
    let run = SimRun::new(9, 50_000_000);
    let out = simulate_chain(&ChainConfig::default().with_mu(0.01), &run)?;
    for (name, s) in [("signal.pts", &out.signal), ("idler.pts", &out.idler)] {
        write_stream(&dir.join(name), s, run.seed)?;
        println!("{name}: {} events, {:.2} Mcps", s.len(), s.rate_cps() / 1e6);
    }
    let reader = open_stream(&dir.join("signal.pts"))?;
    let h = *reader.header();
    let mut gaps = [0u64; 4];
    let mut last = None;
    for t in reader {
        let t = t?;
        if let Some(l) = last {
            let g: u64 = t - l;
            gaps[match g {
                0..=1_999 => 0,
                2_000..=9_999 => 1,
                10_000..=99_999 => 2,
                _ => 3,
            }] += 1;
        }
        last = Some(t);
    }
    println!(
        "header: channel {} period {} ps seed {} count {}",
        h.channel, h.slot_period_ps, h.seed, h.count
    );
    println!(
        "gaps <2 ns {} | 2-10 ns {} | 10-100 ns {} | >100 ns {}",
        gaps[0], gaps[1], gaps[2], gaps[3]
    );
    Ok(())
}
