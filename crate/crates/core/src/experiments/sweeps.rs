//! Saturation, CAR, visibility-versus-μ and jitter sweeps.

use rayon::prelude::*;
use serde::Serialize;

use super::fit::{fit_gaussian_fwhm, fit_visibility, FringeFit, GaussianFit};
use super::fringe::{run_fringe_scan, FringeScan};
use super::point_seed;
use crate::coincidence::{
    count_coincidences, phase_histogram, CarCurve, CarPoint, CoincidenceOptions, TimestampStream,
};
use crate::error::{Error, Result};
use crate::model::{
    deadtime_limited_coincidence, expected_visibility, slot_capture_probability,
    visibility_multiphoton, DeadTimeSpec, JitterSpec, Measured, MziParams,
};
use crate::sim::{pair_visibility, simulate_chain, ChainConfig, DetectorParams, SimRun};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaturationPoint {
    pub mu: f64,
    pub dead_slots: u32,
    pub n_slots: u64,
    /// Coincidences per pulse with binomial uncertainty.
    pub measured: Measured,
    /// `μ(1 - μD)`.
    pub analytic: f64,
    /// Renewal result for a slotted non-paralyzable counter,
    /// `p/(1 + pD)` with `p = 1 - e^-μ` (`μ` itself for `D = 0`).
    pub slotted: f64,
}

/// Lossless chain with single-pixel detectors that stay dead for `dead_slots`
/// whole slots after each count.
pub fn saturation_chain(mu: f64, dead_slots: u32) -> ChainConfig {
    let mut cfg = ChainConfig::ideal(mu);
    let period_s = 1.0 / cfg.source.clock_hz;
    // Photons arrive at slot centres, so half a slot of margin blocks exactly
    // `dead_slots` following slots.
    let dead_s = if dead_slots == 0 {
        0.0
    } else {
        (dead_slots as f64 + 0.5) * period_s
    };
    for arm in [&mut cfg.signal, &mut cfg.idler] {
        arm.detector = DetectorParams {
            pixel_dead_time: DeadTimeSpec::non_paralyzable(dead_s),
            ..DetectorParams::ideal()
        };
    }
    cfg
}

pub fn run_saturation_sweep(
    mus: &[f64],
    dead_slots: &[u32],
    n_slots: u64,
    seed: u64,
) -> Result<Vec<SaturationPoint>> {
    let grid: Vec<(f64, u32)> = dead_slots
        .iter()
        .flat_map(|&d| mus.iter().map(move |&m| (m, d)))
        .collect();
    grid.par_iter()
        .enumerate()
        .map(|(k, &(mu, d))| {
            let analytic = deadtime_limited_coincidence(mu, d as f64)?;
            let run = SimRun::new(point_seed(seed, k as u64), n_slots);
            let out = simulate_chain(&saturation_chain(mu, d), &run)?;
            let r = count_coincidences(&out.signal, &out.idler, CoincidenceOptions::default())?;
            let m = r.cc_count as f64 / n_slots as f64;
            let p = -(-mu).exp_m1();
            Ok(SaturationPoint {
                mu,
                dead_slots: d,
                n_slots,
                measured: Measured::new(m, (m * (1.0 - m).max(0.0) / n_slots as f64).sqrt()),
                analytic,
                slotted: if d == 0 { mu } else { p / (1.0 + p * d as f64) },
            })
        })
        .collect()
}

/// Simulates each `(μ, n_slots)` run and measures its CAR.
pub fn run_car_sweep(
    chain: &ChainConfig,
    runs: &[(f64, u64)],
    seed: u64,
    opts: CoincidenceOptions,
) -> Result<CarCurve> {
    let points = runs
        .par_iter()
        .enumerate()
        .map(|(k, &(mu, n_slots))| {
            let out = simulate_chain(
                &chain.clone().with_mu(mu),
                &SimRun::new(point_seed(seed, k as u64), n_slots),
            )?;
            let result = count_coincidences(&out.signal, &out.idler, opts)?;
            Ok(CarPoint {
                mu,
                car: result.car,
                model: 1.0 / mu + 1.0,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CarCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VisibilityPoint {
    pub mu: f64,
    pub jitter_fwhm_s: f64,
    pub fit: FringeFit,
    pub peak_cc_rate: f64,
    pub p_in: f64,
    /// Multi-pair limit with slot capture, times the interferometer factor.
    pub model_b1: f64,
    /// Multi-pair limit alone, times the interferometer factor.
    pub model_b2: f64,
}

fn interferometer_factor(chain: &ChainConfig) -> f64 {
    let d = MziParams::default();
    pair_visibility(
        chain.signal.mzi.as_ref().unwrap_or(&d),
        chain.idler.mzi.as_ref().unwrap_or(&d),
    )
}

/// Full fringe scan and fit at each μ. `jitters` holds one spec per point, or
/// a single spec used for every point.
pub fn run_visibility_vs_mu(
    chain: &ChainConfig,
    mus: &[f64],
    jitters: &[JitterSpec],
    scan: &FringeScan,
) -> Result<Vec<VisibilityPoint>> {
    if jitters.len() != 1 && jitters.len() != mus.len() {
        return Err(Error::Config(format!(
            "{} jitter values for {} μ points",
            jitters.len(),
            mus.len()
        )));
    }
    let factor = interferometer_factor(chain);
    let slot_s = 1.0 / chain.source.clock_hz;
    mus.iter()
        .enumerate()
        .map(|(k, &mu)| {
            let jitter = jitters[if jitters.len() == 1 { 0 } else { k }];
            let mut cfg = chain.clone().with_mu(mu);
            cfg.signal.detector.jitter = jitter;
            cfg.idler.detector.jitter = jitter;
            let point_scan = FringeScan {
                seed: point_seed(scan.seed, k as u64),
                ..scan.clone()
            };
            let curve = run_fringe_scan(&cfg, &point_scan)?;
            let fit = fit_visibility(&curve)?;
            let p_in = slot_capture_probability(&jitter, slot_s)?.p_in;
            Ok(VisibilityPoint {
                mu,
                jitter_fwhm_s: jitter.fwhm_s,
                fit,
                peak_cc_rate: curve.peak_rate(),
                p_in,
                model_b1: expected_visibility(mu, p_in, factor),
                model_b2: factor * visibility_multiphoton(mu),
            })
        })
        .collect()
}

/// Gaussian fit to the within-slot arrival phase of a singles stream.
pub fn estimate_jitter(stream: &TimestampStream, bin_width_ps: u64) -> Result<GaussianFit> {
    let h = phase_histogram(stream, bin_width_ps)?;
    fit_gaussian_fwhm(&h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JitterCurvePoint {
    pub mu: f64,
    pub p_in: f64,
    pub visibility: f64,
}

/// Predicted visibility against μ for a jitter FWHM, via slot capture.
pub fn jitter_visibility_curve(
    jitter: &JitterSpec,
    slot_period_s: f64,
    mus: &[f64],
    interferometer_factor: f64,
) -> Result<Vec<JitterCurvePoint>> {
    let p_in = slot_capture_probability(jitter, slot_period_s)?.p_in;
    Ok(mus
        .iter()
        .map(|&mu| JitterCurvePoint {
            mu,
            p_in,
            visibility: expected_visibility(mu, p_in, interferometer_factor),
        })
        .collect())
}
