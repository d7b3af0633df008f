//! Two-photon interference fringe scans.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use super::{point_seed, simulate_until_quota};
use crate::coincidence::{count_coincidences, CoincidenceOptions};
use crate::error::{Error, Result};
use crate::model::{phase_from_temperature, Measured, MziParams};
use crate::sim::ChainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FringePoint {
    /// Scan coordinate: idler phase (rad) or idler temperature (°C).
    pub x: f64,
    pub theta_i: f64,
    pub cc_count: u64,
    pub acc_count: u64,
    pub signal_count: u64,
    pub duration_s: f64,
    /// Coincidence rate with Poisson uncertainty.
    pub rate: Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FringeCurve {
    pub theta_s: f64,
    pub quota: u64,
    pub points: Vec<FringePoint>,
}

impl FringeCurve {
    pub fn peak_rate(&self) -> f64 {
        self.points.iter().map(|p| p.rate.value).fold(0.0, f64::max)
    }
}

/// Parameters of a scan over idler phases at fixed signal phase.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeScan {
    pub theta_s: f64,
    pub theta_i: Vec<f64>,
    pub quota: u64,
    pub slot_budget: u64,
    pub seed: u64,
    pub coincidence: CoincidenceOptions,
}

impl FringeScan {
    /// `n` evenly spaced idler phases over one period.
    pub fn uniform(n: usize, quota: u64, seed: u64) -> Self {
        Self {
            theta_s: 0.0,
            theta_i: (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect(),
            quota,
            slot_budget: 1 << 40,
            seed,
            coincidence: CoincidenceOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.theta_i.len();
        if n < 8 {
            return Err(Error::Config(format!(
                "fringe scan needs at least 8 points, got {n}"
            )));
        }
        let min = self.theta_i.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self
            .theta_i
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        // Evenly spaced samples of one period span (n-1)/n of it.
        let coverage = (max - min) * n as f64 / (n - 1) as f64;
        if coverage < 2.0 * PI * (1.0 - 1e-9) {
            return Err(Error::Config(format!(
                "fringe scan covers {coverage:.3} rad, less than one period"
            )));
        }
        if (n as f64) < 8.0 * coverage / (2.0 * PI) - 1e-9 {
            return Err(Error::Config(
                "fringe scan has fewer than 8 points per period".into(),
            ));
        }
        if self.quota == 0 {
            return Err(Error::out_of_range("quota", 0.0, "quota > 0"));
        }
        Ok(())
    }
}

/// Sets the interferometer phases of both arms, adding interferometers with
/// default parameters where the chain has none.
pub fn with_phases(chain: &ChainConfig, theta_s: f64, theta_i: f64) -> ChainConfig {
    let mut cfg = chain.clone();
    cfg.signal
        .mzi
        .get_or_insert_with(MziParams::default)
        .phase_rad = theta_s;
    cfg.idler
        .mzi
        .get_or_insert_with(MziParams::default)
        .phase_rad = theta_i;
    cfg
}

fn measure_point(
    chain: &ChainConfig,
    scan: &FringeScan,
    index: usize,
    x: f64,
) -> Result<FringePoint> {
    let theta_i = scan.theta_i[index];
    let cfg = with_phases(chain, scan.theta_s, theta_i);
    let out = simulate_until_quota(
        &cfg,
        point_seed(scan.seed, index as u64),
        scan.quota,
        scan.slot_budget,
    )?;
    let r = count_coincidences(&out.signal, &out.idler, scan.coincidence)?;
    Ok(FringePoint {
        x,
        theta_i,
        cc_count: r.cc_count,
        acc_count: r.acc_count,
        signal_count: r.signal_count,
        duration_s: r.duration_s,
        rate: Measured::new(r.cc_rate, (r.cc_count as f64).sqrt() / r.duration_s),
    })
}

fn scan_with_axis(chain: &ChainConfig, scan: &FringeScan, xs: &[f64]) -> Result<FringeCurve> {
    scan.validate()?;
    let points = (0..scan.theta_i.len())
        .into_par_iter()
        .map(|k| measure_point(chain, scan, k, xs[k]))
        .collect::<Result<Vec<_>>>()?;
    Ok(FringeCurve {
        theta_s: scan.theta_s,
        quota: scan.quota,
        points,
    })
}

/// Measures the coincidence rate at each idler phase. Every point runs until
/// the signal channel has `scan.quota` detections.
pub fn run_fringe_scan(chain: &ChainConfig, scan: &FringeScan) -> Result<FringeCurve> {
    scan_with_axis(chain, scan, &scan.theta_i)
}

/// Same as [`run_fringe_scan`] with the idler phase set through its
/// temperature. The curve records temperatures as its `x` coordinate.
pub fn run_temperature_scan(
    chain: &ChainConfig,
    scan: &FringeScan,
    temperatures: &[f64],
    t_ref_celsius: f64,
    celsius_per_pi: f64,
) -> Result<FringeCurve> {
    let scan = FringeScan {
        theta_i: temperatures
            .iter()
            .map(|&t| phase_from_temperature(t, t_ref_celsius, celsius_per_pi))
            .collect(),
        ..scan.clone()
    };
    scan_with_axis(chain, &scan, temperatures)
}
