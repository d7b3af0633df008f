//! Single-pass analysis of two timestamp streams: slot assignment,
//! coincidence and accidental counting, delay histograms and CAR curves.

mod counting;
mod histogram;
mod stream;

pub use counting::{
    count_coincidences, count_coincidences_segmented, count_matches, count_window_coincidences,
    joint_duration_s, slot_assign, CoincidenceOptions, CoincidenceResult, SlotPosition,
    DEFAULT_ACCIDENTAL_OFFSET,
};
pub use histogram::{cross_correlation_histogram, phase_histogram, DelayHistogram};
pub use stream::{Channel, ClockInfo, TimestampStream};

use serde::Serialize;

use crate::error::Result;
use crate::model::Measured;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CarPoint {
    pub mu: f64,
    pub car: Option<Measured>,
    /// Dark-count-free reference `1/mu + 1`.
    pub model: f64,
    pub result: CoincidenceResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarCurve {
    pub points: Vec<CarPoint>,
}

/// One analysed run of a CAR sweep.
pub struct CarRun<'a> {
    pub mu: f64,
    pub signal: &'a TimestampStream,
    pub idler: &'a TimestampStream,
}

pub fn car_sweep(runs: &[CarRun<'_>], opts: CoincidenceOptions) -> Result<CarCurve> {
    let points = runs
        .iter()
        .map(|run| {
            let result = count_coincidences(run.signal, run.idler, opts)?;
            Ok(CarPoint {
                mu: run.mu,
                car: result.car,
                model: 1.0 / run.mu + 1.0,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CarCurve { points })
}
