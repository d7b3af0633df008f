//! Tapped-delay-line TDC: coarse counter plus a fine tap code, with dead time
//! and a rate guard.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DeadTimeSpec;

use super::detector::{DeadTimer, DetectionEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdcChannelParams {
    pub tap_count: usize,
    pub coarse_clock_hz: f64,
    /// Physical bin width of each tap. Must sum to one coarse period.
    pub tap_widths_s: Vec<f64>,
    pub dead_time: DeadTimeSpec,
    pub max_rate_cps: f64,
}

impl Default for TdcChannelParams {
    fn default() -> Self {
        Self::uniform(512, 500e6)
    }
}

impl TdcChannelParams {
    pub fn uniform(tap_count: usize, coarse_clock_hz: f64) -> Self {
        let w = 1.0 / coarse_clock_hz / tap_count as f64;
        Self {
            tap_count,
            coarse_clock_hz,
            tap_widths_s: vec![w; tap_count],
            dead_time: DeadTimeSpec::paralyzable(2e-9),
            max_rate_cps: 500e6,
        }
    }

    /// Replaces the widths with a sawtooth of relative amplitude `amplitude`
    /// repeating every `period_taps` taps, renormalised to one coarse period.
    pub fn with_sawtooth_dnl(mut self, amplitude: f64, period_taps: usize) -> Self {
        self.tap_widths_s =
            sawtooth_widths(self.tap_count, self.coarse_clock_hz, amplitude, period_taps);
        self
    }

    pub fn coarse_period_ps(&self) -> f64 {
        1e12 / self.coarse_clock_hz
    }

    pub fn lsb_ps(&self) -> f64 {
        self.coarse_period_ps() / self.tap_count as f64
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.tap_count == 0 {
            return Err(Error::out_of_range(
                format!("{prefix}tap_count"),
                0.0,
                "tap_count >= 1",
            ));
        }
        if !(self.coarse_clock_hz > 0.0 && self.coarse_clock_hz.is_finite()) {
            return Err(Error::out_of_range(
                format!("{prefix}coarse_clock_hz"),
                self.coarse_clock_hz,
                "coarse_clock_hz > 0",
            ));
        }
        if self.tap_widths_s.len() != self.tap_count {
            return Err(Error::Config(format!(
                "{prefix}tap_widths_s has {} entries, expected tap_count = {}",
                self.tap_widths_s.len(),
                self.tap_count
            )));
        }
        if let Some(&w) = self.tap_widths_s.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::out_of_range(
                format!("{prefix}tap_widths_s"),
                w,
                "tap widths > 0",
            ));
        }
        let sum: f64 = self.tap_widths_s.iter().sum();
        let period = 1.0 / self.coarse_clock_hz;
        if ((sum - period) / period).abs() > 1e-12 {
            return Err(Error::out_of_range(
                format!("{prefix}tap_widths_s"),
                sum,
                "tap widths sum to one coarse period",
            ));
        }
        self.dead_time.validate(&format!("{prefix}dead_time_s"))?;
        if !(self.max_rate_cps > 0.0) {
            return Err(Error::out_of_range(
                format!("{prefix}max_rate_cps"),
                self.max_rate_cps,
                "max_rate_cps > 0",
            ));
        }
        Ok(())
    }
}

pub fn sawtooth_widths(
    tap_count: usize,
    coarse_clock_hz: f64,
    amplitude: f64,
    period_taps: usize,
) -> Vec<f64> {
    let p = period_taps.max(2);
    let raw: Vec<f64> = (0..tap_count)
        .map(|k| 1.0 + amplitude * (2.0 * (k % p) as f64 / (p - 1) as f64 - 1.0))
        .collect();
    let sum: f64 = raw.iter().sum();
    let period = 1.0 / coarse_clock_hz;
    raw.iter().map(|r| r / sum * period).collect()
}

/// Cumulative tap edges within one coarse period, in ps.
#[derive(Debug, Clone, PartialEq)]
struct TapLine {
    edges_ps: Vec<f64>,
}

impl TapLine {
    fn new(widths_s: &[f64], period_ps: f64) -> Self {
        let mut edges_ps = Vec::with_capacity(widths_s.len() + 1);
        let mut acc = 0.0;
        edges_ps.push(0.0);
        for w in widths_s {
            acc += w * 1e12;
            edges_ps.push(acc);
        }
        // Pin the last edge to the period so rounding never leaves a gap.
        *edges_ps.last_mut().unwrap() = period_ps;
        Self { edges_ps }
    }

    fn taps(&self) -> usize {
        self.edges_ps.len() - 1
    }

    fn locate(&self, phase_ps: f64) -> usize {
        let k = self.edges_ps.partition_point(|&e| e <= phase_ps);
        k.clamp(1, self.taps()) - 1
    }

    fn center(&self, tap: usize) -> f64 {
        0.5 * (self.edges_ps[tap] + self.edges_ps[tap + 1])
    }
}

/// A configured TDC. The physical tap widths decide which code an arrival
/// gets; the reporting table decides the time assigned to each code.
#[derive(Debug, Clone, PartialEq)]
pub struct Tdc {
    params: TdcChannelParams,
    period_ps: f64,
    physical: TapLine,
    reporting: TapLine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdcOutput {
    pub times_ps: Vec<u64>,
    pub dropped: u64,
    /// Set when the sustained input rate exceeds the rate guard.
    pub saturation: Option<SaturationWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaturationWarning {
    pub rate_cps: f64,
    pub max_cps: f64,
}

impl From<SaturationWarning> for Error {
    fn from(w: SaturationWarning) -> Self {
        Error::Saturation {
            rate_cps: w.rate_cps,
            max_cps: w.max_cps,
        }
    }
}

impl std::fmt::Display for SaturationWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", Error::from(*self))
    }
}

impl Tdc {
    pub fn new(params: TdcChannelParams) -> Result<Self> {
        params.validate("")?;
        let period_ps = params.coarse_period_ps();
        let physical = TapLine::new(&params.tap_widths_s, period_ps);
        let reporting = physical.clone();
        Ok(Self {
            params,
            period_ps,
            physical,
            reporting,
        })
    }

    /// Uses `widths_s` (e.g. a nominal uniform table or a calibration result)
    /// to convert codes to times.
    pub fn with_reporting_widths(mut self, widths_s: &[f64]) -> Result<Self> {
        let probe = TdcChannelParams {
            tap_widths_s: widths_s.to_vec(),
            ..self.params.clone()
        };
        probe.validate("reporting.")?;
        self.reporting = TapLine::new(widths_s, self.period_ps);
        Ok(self)
    }

    pub fn params(&self) -> &TdcChannelParams {
        &self.params
    }

    /// Coarse period index and tap code of an arrival.
    pub fn code(&self, t_ps: f64) -> (u64, usize) {
        let coarse = (t_ps / self.period_ps).floor();
        let phase = t_ps - coarse * self.period_ps;
        (coarse as u64, self.physical.locate(phase))
    }

    pub fn reported_time_ps(&self, coarse: u64, tap: usize) -> f64 {
        coarse as f64 * self.period_ps + self.reporting.center(tap)
    }

    /// Quantises time-ordered events, then applies the TDC dead time to the
    /// reported times and converts to integer picoseconds.
    pub fn digitize(&self, events: &[DetectionEvent], duration_ps: f64) -> Result<TdcOutput> {
        let mut timer = DeadTimer::new(&self.params.dead_time);
        let mut times_ps = Vec::with_capacity(events.len());
        let mut dropped = 0u64;
        for ev in events {
            let (coarse, tap) = self.code(ev.time_ps);
            let t = self.reported_time_ps(coarse, tap);
            if !timer.arrive(t) {
                dropped += 1;
                continue;
            }
            times_ps.push(to_u64_ps(t)?);
        }
        let rate_cps = if duration_ps > 0.0 {
            events.len() as f64 / (duration_ps * 1e-12)
        } else {
            0.0
        };
        let saturation = (rate_cps > self.params.max_rate_cps).then_some(SaturationWarning {
            rate_cps,
            max_cps: self.params.max_rate_cps,
        });
        Ok(TdcOutput {
            times_ps,
            dropped,
            saturation,
        })
    }
}

pub fn tdc_digitize(
    events: &[DetectionEvent],
    tdc: &TdcChannelParams,
    duration_ps: f64,
) -> Result<TdcOutput> {
    Tdc::new(tdc.clone())?.digitize(events, duration_ps)
}

pub(crate) fn to_u64_ps(t: f64) -> Result<u64> {
    let r = t.round();
    if !(0.0..18_446_744_073_709_551_615.0).contains(&r) {
        return Err(Error::TimestampOverflow(t));
    }
    Ok(r as u64)
}

/// Per-tap widths (s) estimated from the occupancy of uniformly distributed
/// arrivals, `codes[k]` being the number of hits on tap `k`.
pub fn code_density(codes: &[u64], coarse_clock_hz: f64) -> Result<Vec<f64>> {
    let total: u64 = codes.iter().sum();
    if total == 0 {
        return Err(Error::EmptyData("code-density histogram"));
    }
    let period = 1.0 / coarse_clock_hz;
    Ok(codes
        .iter()
        .map(|&c| c as f64 / total as f64 * period)
        .collect())
}

/// Result of a code-density calibration run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodeDensityCalibration {
    pub arrivals: u64,
    pub counts: Vec<u64>,
    pub estimated_widths_s: Vec<f64>,
    pub true_widths_s: Vec<f64>,
    pub max_relative_error: f64,
}

/// Recovers the tap code of a timestamp reported with the nominal uniform
/// table.
pub fn nominal_code(t_ps: u64, tdc: &TdcChannelParams) -> usize {
    let period = tdc.coarse_period_ps();
    let phase = (t_ps as f64).rem_euclid(period);
    ((phase / tdc.lsb_ps()) as usize).min(tdc.tap_count - 1)
}

/// Feeds `n` Poisson arrivals at `rate_cps` through a TDC with the given
/// physical widths reporting nominal centres, then estimates every tap width
/// from the output code occupancy.
pub fn run_code_density(
    params: &TdcChannelParams,
    n: u64,
    rate_cps: f64,
    seed: u64,
) -> Result<CodeDensityCalibration> {
    use rand::{Rng, SeedableRng};
    let nominal = TdcChannelParams::uniform(params.tap_count, params.coarse_clock_hz).tap_widths_s;
    let tdc = Tdc::new(params.clone())?.with_reporting_widths(&nominal)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mean_gap = 1e12 / rate_cps;
    let mut counts = vec![0u64; params.tap_count];
    let mut timer = DeadTimer::new(&params.dead_time);
    let mut t = 0.0;
    for _ in 0..n {
        t += -mean_gap * (1.0 - rng.random::<f64>()).ln();
        let (coarse, tap) = tdc.code(t);
        let reported = tdc.reported_time_ps(coarse, tap);
        if timer.arrive(reported) {
            counts[nominal_code(to_u64_ps(reported)?, params)] += 1;
        }
    }
    let estimated_widths_s = code_density(&counts, params.coarse_clock_hz)?;
    let max_relative_error = estimated_widths_s
        .iter()
        .zip(&params.tap_widths_s)
        .map(|(e, w)| ((e - w) / w).abs())
        .fold(0.0, f64::max);
    Ok(CodeDensityCalibration {
        arrivals: n,
        counts,
        estimated_widths_s,
        true_widths_s: params.tap_widths_s.clone(),
        max_relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coincidence::Channel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ev(t: f64) -> DetectionEvent {
        DetectionEvent {
            channel: Channel::Signal,
            pixel: 0,
            time_ps: t,
            merged: false,
        }
    }

    #[test]
    fn default_lsb() {
        let p = TdcChannelParams::default();
        assert!((p.lsb_ps() - 3.90625).abs() < 1e-12);
        p.validate("").unwrap();
    }

    #[test]
    fn rejects_inconsistent_widths() {
        let mut p = TdcChannelParams::uniform(4, 500e6);
        p.tap_widths_s[0] *= 1.1;
        assert!(p.validate("").is_err());
        p.tap_widths_s = vec![0.0, 1e-9, 0.5e-9, 0.5e-9];
        assert!(p.validate("").is_err());
    }

    #[test]
    fn uniform_quantisation_rms() {
        let p = TdcChannelParams {
            dead_time: DeadTimeSpec::none(),
            ..TdcChannelParams::default()
        };
        let tdc = Tdc::new(p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let t = rng.random_range(0.0..1e9);
            let (c, k) = tdc.code(t);
            let r = tdc.reported_time_ps(c, k);
            sum2 += (r - t).powi(2);
        }
        let rms = (sum2 / n as f64).sqrt();
        let oracle = 3.90625 / 12f64.sqrt();
        assert!((oracle - 1.128).abs() < 1e-3);
        assert!((rms - oracle).abs() < 0.05 * oracle, "{rms}");
    }

    #[test]
    fn dead_time_drops_close_events() {
        let out = tdc_digitize(
            &[ev(0.0), ev(1000.0), ev(10_000.0)],
            &TdcChannelParams::default(),
            1e6,
        )
        .unwrap();
        assert_eq!(out.times_ps.len(), 2);
        assert_eq!(out.dropped, 1);
        assert!(out.saturation.is_none());
    }

    #[test]
    fn saturation_warning() {
        let events: Vec<_> = (0..1000).map(|k| ev(k as f64 * 1000.0)).collect();
        let out = tdc_digitize(&events, &TdcChannelParams::default(), 1e6).unwrap();
        assert!(matches!(out.saturation, Some(SaturationWarning { .. })));
    }

    #[test]
    fn code_density_recovers_sawtooth() {
        let p = TdcChannelParams::default().with_sawtooth_dnl(0.2, 16);
        let tdc = Tdc::new(p.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut hist = vec![0u64; 512];
        for _ in 0..20_000_000 {
            let (_, k) = tdc.code(rng.random_range(0.0..2000.0));
            hist[k] += 1;
        }
        let est = code_density(&hist, p.coarse_clock_hz).unwrap();
        for (e, w) in est.iter().zip(&p.tap_widths_s) {
            assert!((e - w).abs() < 0.05 * w, "{e} vs {w}");
        }
    }

    #[test]
    fn calibration_through_reported_times() {
        let p = TdcChannelParams::default().with_sawtooth_dnl(0.2, 16);
        let cal = run_code_density(&p, 4_000_000, 1e6, 3).unwrap();
        // About 7800 hits per tap: 1.1% Poisson scatter per width.
        assert!(cal.counts.iter().sum::<u64>() as f64 > 0.99 * 4e6);
        assert!(cal.max_relative_error < 0.06, "{}", cal.max_relative_error);
        for k in 0..512 {
            let c = (k as f64 + 0.5) * p.lsb_ps();
            assert_eq!(nominal_code(c.round() as u64 + 2000 * 7, &p), k);
        }
    }

    #[test]
    fn overflow_is_an_error() {
        assert!(to_u64_ps(2e19).is_err());
        assert!(to_u64_ps(-1.0).is_err());
        assert_eq!(to_u64_ps(2.5).unwrap(), 3);
    }
}
