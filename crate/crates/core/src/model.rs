//! Closed-form rate, visibility and Bell-test models.
//!
//! Everything here is a pure function of value types. The Monte-Carlo chain in
//! [`crate::sim`] is checked against these predictions, and the experiment
//! runners use them for planning and for the reference curves they report.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// `2·sqrt(2·ln 2)`, the FWHM of a unit-sigma Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Pump and pair-generation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    /// Mean number of correlated pairs per pump pulse.
    pub mu_c: f64,
    /// Pump repetition rate in Hz.
    pub clock_hz: f64,
    /// Number of mutually coherent pump pulses.
    pub coherence_pulses: u64,
}

impl SourceParams {
    pub fn new(mu_c: f64, clock_hz: f64) -> Self {
        Self {
            mu_c,
            clock_hz,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_c >= 0.0 && self.mu_c.is_finite()) {
            return Err(Error::out_of_range("mu_c", self.mu_c, "mu_c >= 0"));
        }
        if !(self.clock_hz > 0.0 && self.clock_hz.is_finite()) {
            return Err(Error::out_of_range(
                "clock_hz",
                self.clock_hz,
                "clock_hz > 0",
            ));
        }
        if self.coherence_pulses < 2 {
            return Err(Error::out_of_range(
                "coherence_pulses",
                self.coherence_pulses as f64,
                "coherence_pulses >= 2",
            ));
        }
        Ok(())
    }
}

impl Default for SourceParams {
    fn default() -> Self {
        Self {
            mu_c: 0.001,
            clock_hz: 5e9,
            // 10 us laser coherence time over 200 ps pulse spacing.
            coherence_pulses: 50_000,
        }
    }
}

/// Linear transmittance and dark-count probability of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub transmittance: f64,
    /// Dark-count probability per pump pulse.
    pub dark_prob: f64,
}

impl ChannelParams {
    pub fn new(transmittance: f64, dark_prob: f64) -> Self {
        Self {
            transmittance,
            dark_prob,
        }
    }

    pub fn lossless() -> Self {
        Self::new(1.0, 0.0)
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.transmittance) {
            return Err(Error::out_of_range(
                format!("{prefix}transmittance"),
                self.transmittance,
                "0 <= transmittance <= 1",
            ));
        }
        if !(self.dark_prob >= 0.0 && self.dark_prob < 1.0) {
            return Err(Error::out_of_range(
                format!("{prefix}dark_prob"),
                self.dark_prob,
                "0 <= dark_prob < 1",
            ));
        }
        Ok(())
    }
}

impl Default for ChannelParams {
    /// -3.5 dB, no dark counts.
    fn default() -> Self {
        Self::new(db_to_linear(-3.5), 0.0)
    }
}

/// One unbalanced (one-slot delay) interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MziParams {
    pub phase_rad: f64,
    /// Intrinsic fringe contrast of the interferometer pair.
    pub interference_visibility: f64,
    /// Probability that a photon leaves through the monitored output port.
    pub insertion_transmittance: f64,
}

impl MziParams {
    pub fn with_phase(phase_rad: f64) -> Self {
        Self {
            phase_rad,
            ..Self::default()
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !self.phase_rad.is_finite() {
            return Err(Error::out_of_range(
                format!("{prefix}phase_rad"),
                self.phase_rad,
                "finite",
            ));
        }
        for (name, v) in [
            ("interference_visibility", self.interference_visibility),
            ("insertion_transmittance", self.insertion_transmittance),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::out_of_range(
                    format!("{prefix}{name}"),
                    v,
                    "0 <= x <= 1",
                ));
            }
        }
        Ok(())
    }
}

impl Default for MziParams {
    fn default() -> Self {
        Self {
            phase_rad: 0.0,
            interference_visibility: 0.95,
            insertion_transmittance: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeadTimeMode {
    /// Every arrival, counted or not, restarts the dead interval.
    Paralyzable,
    /// Only counted events start a dead interval.
    NonParalyzable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadTimeSpec {
    pub dead_time_s: f64,
    pub mode: DeadTimeMode,
}

impl DeadTimeSpec {
    pub fn new(dead_time_s: f64, mode: DeadTimeMode) -> Self {
        Self { dead_time_s, mode }
    }

    pub fn paralyzable(dead_time_s: f64) -> Self {
        Self::new(dead_time_s, DeadTimeMode::Paralyzable)
    }

    pub fn non_paralyzable(dead_time_s: f64) -> Self {
        Self::new(dead_time_s, DeadTimeMode::NonParalyzable)
    }

    pub fn none() -> Self {
        Self::paralyzable(0.0)
    }

    pub fn dead_time_ps(&self) -> f64 {
        self.dead_time_s * 1e12
    }

    /// Dead time in units of the pulse interval.
    pub fn in_pulses(&self, clock_hz: f64) -> f64 {
        self.dead_time_s * clock_hz
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.dead_time_s >= 0.0 && self.dead_time_s.is_finite()) {
            return Err(Error::out_of_range(
                field,
                self.dead_time_s,
                "dead time >= 0",
            ));
        }
        Ok(())
    }
}

/// Gaussian timing jitter described by its FWHM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterSpec {
    pub fwhm_s: f64,
}

impl JitterSpec {
    pub fn from_fwhm(fwhm_s: f64) -> Self {
        Self { fwhm_s }
    }

    pub fn from_sigma(sigma_s: f64) -> Self {
        Self {
            fwhm_s: sigma_s * FWHM_PER_SIGMA,
        }
    }

    pub fn sigma_s(&self) -> f64 {
        self.fwhm_s / FWHM_PER_SIGMA
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.fwhm_s >= 0.0 && self.fwhm_s.is_finite()) {
            return Err(Error::out_of_range(field, self.fwhm_s, "fwhm >= 0"));
        }
        Ok(())
    }
}

/// Per-pulse singles, coincidence and accidental probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePrediction {
    pub singles_s: f64,
    pub singles_i: f64,
    pub coincidence: f64,
    pub accidental: f64,
    /// `None` when the accidental probability is zero.
    pub car: Option<f64>,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Detection probability per pulse, `mu·alpha + d`.
pub fn singles_prob(src: &SourceParams, ch: &ChannelParams) -> f64 {
    src.mu_c * ch.transmittance + ch.dark_prob
}

/// Returns `(R_cc, R_acc)` per pulse.
pub fn coincidence_and_accidental(
    src: &SourceParams,
    ch_s: &ChannelParams,
    ch_i: &ChannelParams,
) -> (f64, f64) {
    let acc = singles_prob(src, ch_s) * singles_prob(src, ch_i);
    let cc = src.mu_c * ch_s.transmittance * ch_i.transmittance + acc;
    (cc, acc)
}

pub fn car(src: &SourceParams, ch_s: &ChannelParams, ch_i: &ChannelParams) -> Result<f64> {
    let acc = singles_prob(src, ch_s) * singles_prob(src, ch_i);
    if acc <= 0.0 {
        return Err(Error::DivisionByZero("accidental probability is zero"));
    }
    Ok(src.mu_c * ch_s.transmittance * ch_i.transmittance / acc + 1.0)
}

pub fn rate_prediction(
    src: &SourceParams,
    ch_s: &ChannelParams,
    ch_i: &ChannelParams,
) -> RatePrediction {
    let (coincidence, accidental) = coincidence_and_accidental(src, ch_s, ch_i);
    RatePrediction {
        singles_s: singles_prob(src, ch_s),
        singles_i: singles_prob(src, ch_i),
        coincidence,
        accidental,
        car: (accidental > 0.0).then(|| coincidence / accidental),
    }
}

/// Counted singles rate (cps) behind a dead-time-limited counter.
///
/// The paralyzable branch is `f·mu·alpha·exp(-f·mu·alpha·t_d)`; the
/// non-paralyzable branch is `x / (1 + x·t_d)`.
pub fn observed_singles_rate(src: &SourceParams, ch: &ChannelParams, dt: &DeadTimeSpec) -> f64 {
    let true_rate = src.clock_hz * src.mu_c * ch.transmittance;
    counted_rate(true_rate, dt)
}

pub fn counted_rate(true_rate: f64, dt: &DeadTimeSpec) -> f64 {
    let x = true_rate * dt.dead_time_s;
    match dt.mode {
        DeadTimeMode::Paralyzable => true_rate * (-x).exp(),
        DeadTimeMode::NonParalyzable => true_rate / (1.0 + x),
    }
}

/// Inverts [`counted_rate`], choosing the low-rate branch (`x·t_d < 1`) for
/// the paralyzable form.
pub fn true_rate_from_counted(counted: f64, dt: &DeadTimeSpec) -> Result<f64> {
    if !(counted >= 0.0 && counted.is_finite()) {
        return Err(Error::Domain(format!(
            "counted rate {counted} must be >= 0"
        )));
    }
    let td = dt.dead_time_s;
    if td == 0.0 || counted == 0.0 {
        return Ok(counted);
    }
    match dt.mode {
        DeadTimeMode::NonParalyzable => {
            let denom = 1.0 - counted * td;
            if denom <= 0.0 {
                return Err(Error::Domain(format!(
                    "counted rate {counted:.4e} cps exceeds the non-paralyzable limit 1/t_d"
                )));
            }
            Ok(counted / denom)
        }
        DeadTimeMode::Paralyzable => {
            let peak = 1.0 / td;
            let max_counted = peak * (-1.0f64).exp();
            if counted > max_counted {
                return Err(Error::Domain(format!(
                    "counted rate {counted:.4e} cps exceeds the paralyzable maximum {max_counted:.4e} cps"
                )));
            }
            // g(x) = x exp(-x td) is increasing on [0, 1/td].
            let (mut lo, mut hi) = (counted, peak);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid * (-mid * td).exp() < counted {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            Ok(0.5 * (lo + hi))
        }
    }
}

/// Estimates `mu_c` from a counted singles rate by inverting the dead-time model.
pub fn estimate_mu_from_singles(
    counted_cps: f64,
    clock_hz: f64,
    transmittance: f64,
    dt: &DeadTimeSpec,
) -> Result<f64> {
    if clock_hz * transmittance <= 0.0 {
        return Err(Error::DivisionByZero("clock_hz * transmittance is zero"));
    }
    Ok(true_rate_from_counted(counted_cps, dt)? / (clock_hz * transmittance))
}

/// Coincidence probability per pulse with dead time spanning `dead_pulses`
/// pulse intervals, `mu(1 - mu·D)`.
pub fn deadtime_limited_coincidence(mu: f64, dead_pulses: f64) -> Result<f64> {
    if mu < 0.0 || dead_pulses < 0.0 {
        return Err(Error::Domain(format!(
            "mu = {mu} and D = {dead_pulses} must be non-negative"
        )));
    }
    if mu * dead_pulses > 1.0 {
        return Err(Error::Domain(format!(
            "mu·D = {} exceeds 1",
            mu * dead_pulses
        )));
    }
    Ok(mu * (1.0 - mu * dead_pulses))
}

/// Relative coincidence rate `(1 + V cos(theta_s + theta_i)) / 2`.
pub fn fringe_coincidence(theta_s: f64, theta_i: f64, visibility: f64) -> f64 {
    0.5 * (1.0 + visibility * (theta_s + theta_i).cos())
}

/// Visibility limited by multi-pair emission alone, `1 / (1 + 2 mu)`.
pub fn visibility_multiphoton(mu: f64) -> f64 {
    1.0 / (1.0 + 2.0 * mu)
}

/// Visibility limited by multi-pair emission and slot leakage,
/// `P_in² / (P_in² + 2 mu)`.
pub fn visibility_with_jitter(mu: f64, p_in: f64) -> f64 {
    let p2 = p_in * p_in;
    p2 / (p2 + 2.0 * mu)
}

/// Multi-pair-limited visibility scaled by a fixed interferometer contrast.
pub fn expected_visibility(mu: f64, p_in: f64, interferometer_factor: f64) -> f64 {
    interferometer_factor * visibility_with_jitter(mu, p_in)
}

/// Root of `factor / (1 + 2 mu) = 1/sqrt(2)`: the largest `mu` at which an
/// ideal-jitter chain still admits a CHSH violation.
pub fn bell_threshold_mu(interferometer_factor: f64) -> f64 {
    (interferometer_factor * SQRT_2 - 1.0) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotCapture {
    pub p_in: f64,
    pub p_out: f64,
}

/// Probability that a detection centred in a slot of width `slot_period_s`
/// stays inside it under Gaussian jitter. All leakage is booked to the
/// adjacent slots.
pub fn slot_capture_probability(jitter: &JitterSpec, slot_period_s: f64) -> Result<SlotCapture> {
    if !(slot_period_s > 0.0) {
        return Err(Error::out_of_range("slot_period_s", slot_period_s, "> 0"));
    }
    let sigma = jitter.sigma_s();
    let p_in = if sigma == 0.0 {
        1.0
    } else {
        erf(slot_period_s / (2.0 * SQRT_2 * sigma))
    };
    Ok(SlotCapture {
        p_in,
        p_out: 1.0 - p_in,
    })
}

/// A value with a one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    /// `|value - target| <= k·sigma`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.sigma
    }
}

/// CHSH correlation from the four coincidence counts
/// `N(θs,θi), N(θs,θi+π), N(θs+π,θi), N(θs+π,θi+π)`, with first-order
/// Poisson uncertainty.
pub fn chsh_correlation(counts: [u64; 4]) -> Result<Measured> {
    let rates = counts.map(|n| Measured::new(n as f64, (n as f64).sqrt()));
    correlation_from_rates(rates)
}

/// Same as [`chsh_correlation`] for rates with independent uncertainties.
pub fn correlation_from_rates(rates: [Measured; 4]) -> Result<Measured> {
    let [r1, r2, r3, r4] = rates.map(|m| m.value);
    let total = r1 + r2 + r3 + r4;
    if total <= 0.0 {
        return Err(Error::EmptyData(
            "CHSH correlation needs a positive total count",
        ));
    }
    let a = r1 - r2 - r3 + r4;
    let d_plus = (total - a) / (total * total);
    let d_minus = -(total + a) / (total * total);
    let grads = [d_plus, d_minus, d_minus, d_plus];
    let var: f64 = grads
        .iter()
        .zip(rates.iter())
        .map(|(g, m)| g * g * m.sigma * m.sigma)
        .sum();
    Ok(Measured::new(a / total, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChshValue {
    pub s: f64,
    pub sigma: f64,
    pub violation: bool,
}

/// `S = E(ds,di) + E(ds,di') + E(ds',di) - E(ds',di')`.
pub fn chsh_s(e: [Measured; 4]) -> ChshValue {
    let s = e[0].value + e[1].value + e[2].value - e[3].value;
    let sigma = e.iter().map(|m| m.sigma * m.sigma).sum::<f64>().sqrt();
    ChshValue {
        s,
        sigma,
        violation: s.abs() > 2.0,
    }
}

/// Ideal fringe-model S for a given visibility: `2·sqrt(2)·V`.
pub fn ideal_chsh_s(visibility: f64) -> f64 {
    2.0 * SQRT_2 * visibility
}

/// Visibility below which no CHSH violation is possible.
pub const BELL_VISIBILITY_THRESHOLD: f64 = FRAC_1_SQRT_2;

/// Linear temperature to interferometer phase map.
pub fn phase_from_temperature(t_celsius: f64, t_ref_celsius: f64, celsius_per_pi: f64) -> f64 {
    PI * (t_celsius - t_ref_celsius) / celsius_per_pi
}

pub fn temperature_from_phase(phase_rad: f64, t_ref_celsius: f64, celsius_per_pi: f64) -> f64 {
    t_ref_celsius + phase_rad * celsius_per_pi / PI
}
