use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logical detector channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Signal,
    Idler,
}

impl Channel {
    pub fn id(self) -> u8 {
        match self {
            Channel::Signal => 0,
            Channel::Idler => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Channel::Signal),
            1 => Some(Channel::Idler),
            _ => None,
        }
    }
}

/// Slot grid shared by the streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockInfo {
    pub slot_period_ps: u64,
    pub t0_ps: u64,
}

impl ClockInfo {
    pub fn new(slot_period_ps: u64) -> Self {
        Self {
            slot_period_ps,
            t0_ps: 0,
        }
    }
}

/// Time-ordered detection timestamps of one channel, in integer picoseconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampStream {
    channel: u8,
    clock: ClockInfo,
    times: Vec<u64>,
    /// Observation span from `t0`, when known. Rates use it in preference to
    /// the last timestamp.
    span_ps: Option<u64>,
}

impl TimestampStream {
    pub fn new(channel: u8, clock: ClockInfo, times: Vec<u64>) -> Result<Self> {
        if clock.slot_period_ps == 0 {
            return Err(Error::out_of_range(
                "slot_period_ps",
                0.0,
                "slot_period_ps > 0",
            ));
        }
        if let Some(index) = times.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::NonMonotone {
                index: index as u64 + 1,
            });
        }
        Ok(Self {
            channel,
            clock,
            times,
            span_ps: None,
        })
    }

    pub fn with_span(mut self, span_ps: u64) -> Self {
        self.span_ps = Some(span_ps);
        self
    }

    pub fn channel(&self) -> u8 {
        self.channel
    }

    pub fn clock(&self) -> ClockInfo {
        self.clock
    }

    pub fn times(&self) -> &[u64] {
        &self.times
    }

    pub fn into_times(self) -> Vec<u64> {
        self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span_ps(&self) -> Option<u64> {
        self.span_ps
    }

    /// Span used for rate computation: the recorded span if any, otherwise the
    /// end of the slot holding the last event.
    pub fn effective_span_ps(&self) -> u64 {
        self.span_ps.unwrap_or_else(|| match self.times.last() {
            Some(&t) => {
                let p = self.clock.slot_period_ps;
                (t.saturating_sub(self.clock.t0_ps) / p + 1) * p
            }
            None => 0,
        })
    }

    /// Adds a constant to every timestamp and to the clock origin.
    pub fn shifted(&self, delta_ps: u64) -> Self {
        Self {
            channel: self.channel,
            clock: ClockInfo {
                slot_period_ps: self.clock.slot_period_ps,
                t0_ps: self.clock.t0_ps + delta_ps,
            },
            times: self.times.iter().map(|t| t + delta_ps).collect(),
            span_ps: self.span_ps,
        }
    }

    /// Keeps events in slots `<= last_slot` and sets the span accordingly.
    pub fn truncate_to_slot(&mut self, last_slot: u64) {
        let p = self.clock.slot_period_ps;
        let end = self.clock.t0_ps + (last_slot + 1) * p;
        let keep = self.times.partition_point(|&t| t < end);
        self.times.truncate(keep);
        self.span_ps = Some((last_slot + 1) * p);
    }

    /// Mean event rate in counts per second.
    pub fn rate_cps(&self) -> f64 {
        let span = self.effective_span_ps();
        if span == 0 {
            0.0
        } else {
            self.times.len() as f64 / (span as f64 * 1e-12)
        }
    }
}
