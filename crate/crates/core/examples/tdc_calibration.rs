//! Code-density calibration of a delay line with sawtooth non-linearity.
//!
//!     cargo run --release --example tdc_calibration [arrivals]

use timebin::sim::{run_code_density, TdcChannelParams};

fn main() -> timebin::Result<()> {
    let n: u64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(20_000_000);
    let tdc = TdcChannelParams::default().with_sawtooth_dnl(0.2, 16);
    let cal = run_code_density(&tdc, n, 1e6, 3)?;
    println!(
        "{n} arrivals over {} taps (LSB {:.4} ps)",
        tdc.tap_count,
        tdc.lsb_ps()
    );
    for k in (0..32).step_by(2) {
        println!(
            "tap {k:>3}: injected {:7.4} ps, estimated {:7.4} ps",
            cal.true_widths_s[k] * 1e12,
            cal.estimated_widths_s[k] * 1e12
        );
    }
    println!("worst relative error {:.4}", cal.max_relative_error);
    Ok(())
}
