//! CHSH parameter from 16 phase settings, five repeats each.
//!
//!     cargo run --release --example chsh_test [mu]

use timebin::experiments::{run_chsh, ChshPlan, ChshSettings};
use timebin::model::ideal_chsh_s;
use timebin::sim::ChainConfig;

fn main() -> timebin::Result<()> {
    let mu: f64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(0.001);
    let chain = ChainConfig::default().with_mu(mu);
    let plan = ChshPlan {
        quota: 100_000,
        ..ChshPlan::default()
    };
    let res = run_chsh(&chain, &ChshSettings::default(), &plan)?;
    for (k, e) in res.correlations.iter().enumerate() {
        println!("E{} = {:+.4} ± {:.4}", k + 1, e.value, e.sigma);
    }
    println!(
        "S = {:.4} ± {:.4} (repeat spread {:.4}), {:.1} sigma above 2; model {:.4}",
        res.s.s,
        res.s.sigma,
        res.sigma_repeat.unwrap_or(f64::NAN),
        res.significance,
        ideal_chsh_s(0.95 / (1.0 + 2.0 * mu))
    );
    Ok(())
}
