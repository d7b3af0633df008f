use serde::Serialize;

use super::stream::TimestampStream;
use crate::error::{Error, Result};

/// Fixed-width histogram with an overflow counter.
///
/// Bin `k` is centred at `first_center_ps + k·bin_width_ps`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayHistogram {
    pub bin_width_ps: u64,
    pub first_center_ps: f64,
    pub counts: Vec<u64>,
    pub out_of_range: u64,
}

impl DelayHistogram {
    pub fn centers_ps(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.counts.len()).map(|k| self.first_center_ps + k as f64 * self.bin_width_ps as f64)
    }

    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.in_range() + self.out_of_range
    }

    pub fn edges_ps(&self, k: usize) -> (f64, f64) {
        let c = self.first_center_ps + k as f64 * self.bin_width_ps as f64;
        let h = self.bin_width_ps as f64 / 2.0;
        (c - h, c + h)
    }
}

fn check_binning(bin_width_ps: u64, range_ps: u64) -> Result<()> {
    if bin_width_ps == 0 || range_ps == 0 || !range_ps.is_multiple_of(bin_width_ps) {
        return Err(Error::InvalidBinning(format!(
            "bin width {bin_width_ps} ps must divide range {range_ps} ps"
        )));
    }
    Ok(())
}

/// Histogram of `t_signal - t_idler` to the nearest idler event, over
/// `[-range_ps, +range_ps]` with bins centred on multiples of the bin width.
///
/// Every signal event contributes once when the idler stream is non-empty.
pub fn cross_correlation_histogram(
    s: &TimestampStream,
    i: &TimestampStream,
    bin_width_ps: u64,
    range_ps: u64,
) -> Result<DelayHistogram> {
    check_binning(bin_width_ps, range_ps)?;
    let half_bins = (range_ps / bin_width_ps) as i64;
    let n_bins = (2 * half_bins + 1) as usize;
    let mut counts = vec![0u64; n_bins];
    let mut out_of_range = 0u64;
    let it = i.times();
    if !it.is_empty() {
        let w = bin_width_ps as i64;
        let mut j = 0usize;
        for &ts in s.times() {
            while j + 1 < it.len() && it[j + 1] <= ts {
                j += 1;
            }
            // it[j] is the last idler <= ts (or the first idler overall).
            let mut best = ts as i64 - it[j] as i64;
            if j + 1 < it.len() {
                let d = ts as i64 - it[j + 1] as i64;
                if d.abs() < best.abs() {
                    best = d;
                }
            }
            // Round half away from zero onto the bin grid.
            let k = if best >= 0 {
                (best + w / 2) / w
            } else {
                -((-best + w / 2) / w)
            };
            if k.abs() <= half_bins {
                counts[(k + half_bins) as usize] += 1;
            } else {
                out_of_range += 1;
            }
        }
    }
    Ok(DelayHistogram {
        bin_width_ps,
        first_center_ps: -(range_ps as f64),
        counts,
        out_of_range,
    })
}

/// Histogram of within-slot arrival phase over `[0, slot_period)`.
pub fn phase_histogram(s: &TimestampStream, bin_width_ps: u64) -> Result<DelayHistogram> {
    let clock = s.clock();
    check_binning(bin_width_ps, clock.slot_period_ps)?;
    let n_bins = (clock.slot_period_ps / bin_width_ps) as usize;
    let mut counts = vec![0u64; n_bins];
    for &t in s.times() {
        let rel = t.checked_sub(clock.t0_ps).ok_or(Error::NegativeTime {
            time_ps: t,
            t0_ps: clock.t0_ps,
        })?;
        counts[((rel % clock.slot_period_ps) / bin_width_ps) as usize] += 1;
    }
    Ok(DelayHistogram {
        bin_width_ps,
        first_center_ps: bin_width_ps as f64 / 2.0,
        counts,
        out_of_range: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coincidence::ClockInfo;
    use proptest::prelude::*;

    fn stream(times: Vec<u64>) -> TimestampStream {
        TimestampStream::new(0, ClockInfo::new(200), times).unwrap()
    }

    #[test]
    fn identical_times_land_in_central_bin() {
        let t: Vec<u64> = (0..1000).map(|k| k * 1000 + 100).collect();
        let h = cross_correlation_histogram(&stream(t.clone()), &stream(t), 4, 200).unwrap();
        let mid = h.counts.len() / 2;
        assert_eq!(h.counts[mid], 1000);
        assert_eq!(h.in_range(), 1000);
        assert_eq!(h.centers_ps().nth(mid).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_binning() {
        let s = stream(vec![1]);
        assert!(cross_correlation_histogram(&s, &s, 3, 200).is_err());
        assert!(phase_histogram(&s, 0).is_err());
        let s = TimestampStream::new(0, ClockInfo::new(210), vec![1]).unwrap();
        assert!(phase_histogram(&s, 4).is_err());
    }

    #[test]
    fn uniform_phases_are_flat() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut t: Vec<u64> = (0..200_000)
            .map(|_| rng.random_range(0..2_000_000_000u64))
            .collect();
        t.sort_unstable();
        let h = phase_histogram(&stream(t), 10).unwrap();
        let n = h.in_range() as f64;
        let e = n / h.counts.len() as f64;
        let chi2: f64 = h.counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 19 dof, 1% upper critical value 36.19
        assert!(chi2 < 36.19, "chi2 = {chi2}");
    }

    proptest! {
        #[test]
        fn mass_conservation(mut a in prop::collection::vec(0u64..100_000, 0..300),
                             mut b in prop::collection::vec(0u64..100_000, 1..300),
                             w in 1u64..20, half in 1u64..20) {
            a.sort_unstable();
            b.sort_unstable();
            let h = cross_correlation_histogram(&stream(a.clone()), &stream(b), w, w * half).unwrap();
            prop_assert_eq!(h.total(), a.len() as u64);
        }
    }
}
