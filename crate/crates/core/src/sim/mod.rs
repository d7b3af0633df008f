//! Monte-Carlo generation of digitised timestamp streams.

pub mod chain;
pub mod detector;
pub mod source;
pub mod tdc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use chain::{
    simulate_chain, uniform_arrivals, ArmConfig, ArmStats, ChainConfig, ChainOutput, RunReport,
};
pub use detector::{
    detect, DetectionEvent, DetectorOutput, DetectorParams, DetectorStats, SfqMode,
};
pub use source::{
    add_dark_counts, generate_pairs, pair_visibility, sample_joint_delays, sample_mzi_outcome,
    ArmOptics, MziOutcome, PairEvent, PairGenerator,
};
pub use tdc::{
    code_density, nominal_code, run_code_density, sawtooth_widths, tdc_digitize,
    CodeDensityCalibration, SaturationWarning, Tdc, TdcChannelParams, TdcOutput,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimRun {
    pub seed: u64,
    pub n_slots: u64,
    pub slot_period_ps: u64,
}

impl Default for SimRun {
    fn default() -> Self {
        Self {
            seed: 1,
            n_slots: 10_000_000,
            slot_period_ps: 200,
        }
    }
}

impl SimRun {
    pub fn new(seed: u64, n_slots: u64) -> Self {
        Self {
            seed,
            n_slots,
            ..Self::default()
        }
    }

    pub fn span_ps(&self) -> u64 {
        self.n_slots * self.slot_period_ps
    }

    pub fn duration_s(&self) -> f64 {
        self.span_ps() as f64 * 1e-12
    }

    /// Checks the slot period against the pump clock and the 64-bit range.
    pub fn validate(&self, clock_hz: f64) -> Result<()> {
        if self.slot_period_ps == 0 {
            return Err(Error::out_of_range(
                "run.slot_period_ps",
                0.0,
                "slot_period_ps > 0",
            ));
        }
        let product = self.slot_period_ps as f64 * clock_hz;
        if ((product - 1e12) / 1e12).abs() > 1e-9 {
            return Err(Error::ClockMismatch(format!(
                "slot period {} ps does not match a {clock_hz} Hz pump clock",
                self.slot_period_ps
            )));
        }
        // Leave room for one slot of interferometer delay past the end.
        if self
            .n_slots
            .checked_add(2)
            .and_then(|n| n.checked_mul(self.slot_period_ps))
            .is_none()
        {
            return Err(Error::TimestampOverflow(
                self.n_slots as f64 * self.slot_period_ps as f64,
            ));
        }
        Ok(())
    }
}
