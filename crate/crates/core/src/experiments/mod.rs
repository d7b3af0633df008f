//! Experiment runners built on the simulator and the coincidence engine.

pub mod chsh;
pub mod fit;
pub mod fringe;
pub mod sweeps;

pub use chsh::{run_chsh, ChshPlan, ChshResult, ChshSettings};
pub use fit::{fit_gaussian_fwhm, fit_visibility, peak_dip_visibility, FringeFit, GaussianFit};
pub use fringe::{run_fringe_scan, run_temperature_scan, FringeCurve, FringePoint, FringeScan};
pub use sweeps::{
    estimate_jitter, jitter_visibility_curve, run_car_sweep, run_saturation_sweep,
    run_visibility_vs_mu, saturation_chain, JitterCurvePoint, SaturationPoint, VisibilityPoint,
};

use crate::error::{Error, Result};
use crate::sim::{simulate_chain, ChainConfig, ChainOutput, SimRun};

/// Default per-point quota of signal detections.
pub const DEFAULT_QUOTA: u64 = 262_000;

/// Seed of sub-run `index` of an experiment seeded with `base`.
pub fn point_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Expected signal detections per slot, including a rough per-pixel
/// dead-time correction.
pub fn expected_signal_per_slot(cfg: &ChainConfig) -> f64 {
    let arm = &cfg.signal;
    let det = &arm.detector;
    let p = cfg.source.mu_c * arm.optics().survival() * det.efficiency + arm.channel.dark_prob;
    let per_pixel = p * cfg.source.clock_hz / det.pixel_count as f64;
    p / (1.0 + per_pixel * det.pixel_dead_time.dead_time_s)
}

/// Simulates until the signal channel holds `quota` detections and cuts both
/// streams at the end of the slot holding the quota-th one.
///
/// Runs with the same seed share their prefix, so the result does not depend
/// on the initial slot estimate.
pub fn simulate_until_quota(
    cfg: &ChainConfig,
    seed: u64,
    quota: u64,
    slot_budget: u64,
) -> Result<ChainOutput> {
    if quota == 0 {
        return Err(Error::out_of_range("quota", 0.0, "quota > 0"));
    }
    let period = (1e12 / cfg.source.clock_hz).round() as u64;
    let per_slot = expected_signal_per_slot(cfg);
    let mut n = if per_slot > 0.0 {
        (quota as f64 / per_slot * 1.03).ceil() as u64 + 1000
    } else {
        slot_budget
    };
    loop {
        n = n.min(slot_budget);
        let run = SimRun {
            seed,
            n_slots: n,
            slot_period_ps: period,
        };
        let mut out = simulate_chain(cfg, &run)?;
        let have = out.signal.len() as u64;
        if have >= quota {
            let t = out.signal.times()[(quota - 1) as usize];
            let cut = (t - out.signal.clock().t0_ps) / period;
            out.signal.truncate_to_slot(cut);
            out.idler.truncate_to_slot(cut);
            return Ok(out);
        }
        if n >= slot_budget {
            return Err(Error::NonConvergence {
                quota,
                budget: slot_budget,
            });
        }
        n = if have == 0 {
            n.saturating_mul(4)
        } else {
            ((n as f64) * quota as f64 / have as f64 * 1.05).ceil() as u64 + 1000
        };
    }
}
