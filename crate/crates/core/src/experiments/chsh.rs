//! CHSH test from 16 phase settings.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rayon::prelude::*;
use serde::Serialize;

use super::fringe::with_phases;
use super::{point_seed, simulate_until_quota, DEFAULT_QUOTA};
use crate::coincidence::{count_coincidences, CoincidenceOptions};
use crate::error::{Error, Result};
use crate::model::{chsh_s, correlation_from_rates, ChshValue, Measured};
use crate::sim::ChainConfig;

/// Analyser settings `ds = θs0`, `ds' = θs0 + π/2`, `di = θi0 + π/4`,
/// `di' = θi0 - π/4`.
///
/// The idler interferometer is driven at the mirror image `2·θi0 - d` of each
/// idler setting `d`, so that the correlation depends on `ds - di` and the
/// quoted settings reach `S = 2·sqrt(2)·V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChshSettings {
    pub theta_s0: f64,
    pub theta_i0: f64,
}

impl Default for ChshSettings {
    fn default() -> Self {
        Self {
            theta_s0: 0.0,
            theta_i0: 0.0,
        }
    }
}

impl ChshSettings {
    pub fn ds(&self) -> [f64; 2] {
        [self.theta_s0, self.theta_s0 + FRAC_PI_2]
    }

    pub fn di(&self) -> [f64; 2] {
        [self.theta_i0 + FRAC_PI_4, self.theta_i0 - FRAC_PI_4]
    }

    /// `(ds, di)` of the four correlations, in the order summed as
    /// `E1 + E2 + E3 - E4`.
    pub fn correlation_settings(&self) -> [(f64, f64); 4] {
        let [s, sp] = self.ds();
        let [i, ip] = self.di();
        [(s, i), (s, ip), (sp, i), (sp, ip)]
    }

    pub fn idler_drive(&self, d_i: f64) -> f64 {
        2.0 * self.theta_i0 - d_i
    }

    /// Interferometer phases of the 16 measurements: for each correlation,
    /// `(a, b), (a, b+π), (a+π, b), (a+π, b+π)`.
    pub fn phase_table(&self) -> [[(f64, f64); 4]; 4] {
        self.correlation_settings().map(|(a, b)| {
            [(a, b), (a, b + PI), (a + PI, b), (a + PI, b + PI)]
                .map(|(s, i)| (s, self.idler_drive(i)))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshPlan {
    pub quota: u64,
    pub repeats: usize,
    pub slot_budget: u64,
    pub seed: u64,
    pub coincidence: CoincidenceOptions,
}

impl Default for ChshPlan {
    fn default() -> Self {
        Self {
            quota: DEFAULT_QUOTA,
            repeats: 5,
            slot_budget: 1 << 40,
            seed: 1,
            coincidence: CoincidenceOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChshRate {
    pub correlation: usize,
    pub term: usize,
    pub theta_s: f64,
    pub theta_i: f64,
    pub cc_count: u64,
    pub duration_s: f64,
    pub rate: Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChshResult {
    pub settings: ChshSettings,
    /// Rates pooled over all repeats.
    pub rates: Vec<ChshRate>,
    pub correlations: [Measured; 4],
    /// S with the propagated Poisson uncertainty.
    pub s: ChshValue,
    pub repeat_s: Vec<f64>,
    /// Standard error of the mean of the per-repeat S values.
    pub sigma_repeat: Option<f64>,
    /// `(|S| - 2) / σ_S` with the propagated σ.
    pub significance: f64,
    pub mean_cc_rate: f64,
}

fn s_from_counts(counts: &[[(u64, f64); 4]; 4]) -> Result<(ChshValue, [Measured; 4])> {
    let mut e = [Measured::new(0.0, 0.0); 4];
    for (j, terms) in counts.iter().enumerate() {
        let rates = terms.map(|(n, t)| Measured::new(n as f64 / t, (n as f64).sqrt() / t));
        e[j] = correlation_from_rates(rates)?;
    }
    Ok((chsh_s(e), e))
}

pub fn run_chsh(
    chain: &ChainConfig,
    settings: &ChshSettings,
    plan: &ChshPlan,
) -> Result<ChshResult> {
    if plan.repeats == 0 {
        return Err(Error::out_of_range("repeats", 0.0, "repeats >= 1"));
    }
    let table = settings.phase_table();
    let jobs: Vec<(usize, usize, usize)> = (0..plan.repeats)
        .flat_map(|r| (0..4).flat_map(move |j| (0..4).map(move |k| (r, j, k))))
        .collect();
    let measured = jobs
        .par_iter()
        .map(|&(r, j, k)| {
            let (ts, ti) = table[j][k];
            let cfg = with_phases(chain, ts, ti);
            let index = (r * 16 + j * 4 + k) as u64;
            let out = simulate_until_quota(
                &cfg,
                point_seed(plan.seed, index),
                plan.quota,
                plan.slot_budget,
            )?;
            let res = count_coincidences(&out.signal, &out.idler, plan.coincidence)?;
            Ok((res.cc_count, res.duration_s))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_repeat = vec![[[(0u64, 0.0f64); 4]; 4]; plan.repeats];
    let mut pooled = [[(0u64, 0.0f64); 4]; 4];
    for (&(r, j, k), &(n, t)) in jobs.iter().zip(&measured) {
        per_repeat[r][j][k] = (n, t);
        pooled[j][k].0 += n;
        pooled[j][k].1 += t;
    }
    let (s, correlations) = s_from_counts(&pooled)?;
    let repeat_s = per_repeat
        .iter()
        .map(|c| s_from_counts(c).map(|(v, _)| v.s))
        .collect::<Result<Vec<_>>>()?;
    let sigma_repeat = (repeat_s.len() >= 2).then(|| {
        let n = repeat_s.len() as f64;
        let mean = repeat_s.iter().sum::<f64>() / n;
        let var = repeat_s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    });

    let mut rates = Vec::with_capacity(16);
    let (mut n_all, mut t_all) = (0u64, 0.0);
    for j in 0..4 {
        for k in 0..4 {
            let (n, t) = pooled[j][k];
            n_all += n;
            t_all += t;
            rates.push(ChshRate {
                correlation: j,
                term: k,
                theta_s: table[j][k].0,
                theta_i: table[j][k].1,
                cc_count: n,
                duration_s: t,
                rate: Measured::new(n as f64 / t, (n as f64).sqrt() / t),
            });
        }
    }
    Ok(ChshResult {
        settings: *settings,
        rates,
        correlations,
        significance: (s.s.abs() - 2.0) / s.sigma,
        s,
        repeat_s,
        sigma_repeat,
        mean_cc_rate: n_all as f64 / t_all,
    })
}
