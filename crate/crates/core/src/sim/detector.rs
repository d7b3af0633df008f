//! Multi-pixel detector with per-pixel dead time, Gaussian jitter and a
//! single merged readout line.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::coincidence::Channel;
use crate::error::{Error, Result};
use crate::model::{DeadTimeMode, DeadTimeSpec, JitterSpec};

/// How the merged readout treats an event arriving within the merge window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SfqMode {
    /// Discard events closer than the window to the last emitted pulse.
    Drop,
    /// Absorb such events into the current pulse; each absorbed arrival
    /// extends the window.
    Coalesce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub pixel_count: u32,
    pub efficiency: f64,
    pub pixel_dead_time: DeadTimeSpec,
    pub jitter: JitterSpec,
    pub sfq_merge_window_s: f64,
    pub sfq_mode: SfqMode,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            pixel_count: 16,
            efficiency: 0.67,
            pixel_dead_time: DeadTimeSpec::non_paralyzable(50e-9),
            jitter: JitterSpec::from_fwhm(30e-12),
            sfq_merge_window_s: 400e-12,
            sfq_mode: SfqMode::Drop,
        }
    }
}

impl DetectorParams {
    /// Unit efficiency, no dead time, no jitter, no merging.
    pub fn ideal() -> Self {
        Self {
            pixel_count: 1,
            efficiency: 1.0,
            pixel_dead_time: DeadTimeSpec::non_paralyzable(0.0),
            jitter: JitterSpec::from_fwhm(0.0),
            sfq_merge_window_s: 0.0,
            sfq_mode: SfqMode::Drop,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.pixel_count < 1 || self.pixel_count > u16::MAX as u32 {
            return Err(Error::out_of_range(
                format!("{prefix}pixel_count"),
                self.pixel_count as f64,
                "1 <= pixel_count <= 65535",
            ));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::out_of_range(
                format!("{prefix}efficiency"),
                self.efficiency,
                "0 <= efficiency <= 1",
            ));
        }
        self.pixel_dead_time
            .validate(&format!("{prefix}pixel_dead_time_s"))?;
        self.jitter.validate(&format!("{prefix}jitter_fwhm_s"))?;
        if !(self.sfq_merge_window_s >= 0.0 && self.sfq_merge_window_s.is_finite()) {
            return Err(Error::out_of_range(
                format!("{prefix}sfq_merge_window_s"),
                self.sfq_merge_window_s,
                ">= 0",
            ));
        }
        Ok(())
    }
}

/// A detection on the merged readout line, in analog time ahead of the TDC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionEvent {
    pub channel: Channel,
    pub pixel: u16,
    pub time_ps: f64,
    /// Set when this record absorbed later arrivals (coalescing readout).
    pub merged: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DetectorStats {
    pub input: u64,
    pub absorbed: u64,
    pub pixel_blocked: u64,
    pub sfq_dropped: u64,
    pub output: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOutput {
    pub events: Vec<DetectionEvent>,
    pub stats: DetectorStats,
}

/// Per-element dead-time bookkeeping shared by the pixels and the TDC.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DeadTimer {
    dead_ps: f64,
    mode: DeadTimeMode,
    last_ps: f64,
}

impl DeadTimer {
    pub(crate) fn new(spec: &DeadTimeSpec) -> Self {
        Self {
            dead_ps: spec.dead_time_ps(),
            mode: spec.mode,
            last_ps: f64::NEG_INFINITY,
        }
    }

    /// Registers an arrival at `t_ps`; returns whether it is counted.
    ///
    /// An arrival exactly `dead_ps` after the reference time is still blocked.
    #[inline]
    pub(crate) fn arrive(&mut self, t_ps: f64) -> bool {
        if self.dead_ps <= 0.0 {
            return true;
        }
        let blocked = t_ps - self.last_ps <= self.dead_ps;
        match self.mode {
            DeadTimeMode::Paralyzable => self.last_ps = t_ps,
            DeadTimeMode::NonParalyzable => {
                if !blocked {
                    self.last_ps = t_ps;
                }
            }
        }
        !blocked
    }
}

/// Runs time-ordered photon arrivals (ps) through the detector.
///
/// Each arrival hits a uniformly chosen pixel, is absorbed with probability
/// `efficiency`, and is counted unless that pixel is dead. Counted events get
/// Gaussian jitter, are re-sorted, and are merged onto one readout line.
pub fn detect<R: Rng + ?Sized>(
    candidates: &[f64],
    det: &DetectorParams,
    channel: Channel,
    rng: &mut R,
) -> DetectorOutput {
    let mut stats = DetectorStats {
        input: candidates.len() as u64,
        ..Default::default()
    };
    let mut pixels = vec![DeadTimer::new(&det.pixel_dead_time); det.pixel_count as usize];
    let sigma_ps = det.jitter.sigma_s() * 1e12;
    let normal = (sigma_ps > 0.0).then(|| Normal::new(0.0, sigma_ps).expect("finite sigma"));

    let mut hits: Vec<DetectionEvent> = Vec::with_capacity(candidates.len());
    for &t in candidates {
        if det.efficiency < 1.0 && rng.random::<f64>() >= det.efficiency {
            continue;
        }
        stats.absorbed += 1;
        let pixel = if det.pixel_count > 1 {
            rng.random_range(0..det.pixel_count)
        } else {
            0
        };
        if !pixels[pixel as usize].arrive(t) {
            stats.pixel_blocked += 1;
            continue;
        }
        let jittered = match &normal {
            Some(n) => (t + n.sample(rng)).max(0.0),
            None => t,
        };
        hits.push(DetectionEvent {
            channel,
            pixel: pixel as u16,
            time_ps: jittered,
            merged: false,
        });
    }
    if normal.is_some() {
        hits.sort_unstable_by(|a, b| a.time_ps.total_cmp(&b.time_ps));
    }

    let window = det.sfq_merge_window_s * 1e12;
    let events = if window > 0.0 {
        merge_readout(hits, window, det.sfq_mode)
    } else {
        hits
    };
    stats.output = events.len() as u64;
    stats.sfq_dropped = stats.absorbed - stats.pixel_blocked - stats.output;
    DetectorOutput { events, stats }
}

fn merge_readout(hits: Vec<DetectionEvent>, window_ps: f64, mode: SfqMode) -> Vec<DetectionEvent> {
    let mut out: Vec<DetectionEvent> = Vec::with_capacity(hits.len());
    let mut last_ref = f64::NEG_INFINITY;
    for hit in hits {
        let close = hit.time_ps - last_ref < window_ps;
        match mode {
            SfqMode::Drop => {
                if !close {
                    last_ref = hit.time_ps;
                    out.push(hit);
                }
            }
            SfqMode::Coalesce => {
                last_ref = hit.time_ps;
                if close {
                    if let Some(prev) = out.last_mut() {
                        prev.merged = true;
                    }
                } else {
                    out.push(hit);
                }
            }
        }
    }
    out
}
