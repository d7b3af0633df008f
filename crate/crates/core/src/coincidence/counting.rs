//! Slot-equality coincidence counting.
//!
//! A coincidence is a signal event and an idler event that fall in the same
//! slot once the idler slot index has been shifted by the requested offset.
//! Several events sharing a slot pair up as `min(n_s, n_i)`. Both the true and
//! the accidental estimate are single forward two-finger merges over the slot
//! runs of the two streams.

use rayon::prelude::*;
use serde::Serialize;

use super::stream::{ClockInfo, TimestampStream};
use crate::error::{Error, Result};
use crate::model::Measured;

pub const DEFAULT_ACCIDENTAL_OFFSET: i64 = 2;

/// Slot index and within-slot phase of a timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotPosition {
    pub slot: u64,
    pub phase_ps: u64,
}

pub fn slot_assign(time_ps: u64, slot_period_ps: u64, t0_ps: u64) -> Result<SlotPosition> {
    if slot_period_ps == 0 {
        return Err(Error::out_of_range(
            "slot_period_ps",
            0.0,
            "slot_period_ps > 0",
        ));
    }
    let rel = time_ps
        .checked_sub(t0_ps)
        .ok_or(Error::NegativeTime { time_ps, t0_ps })?;
    Ok(SlotPosition {
        slot: rel / slot_period_ps,
        phase_ps: rel % slot_period_ps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoincidenceOptions {
    /// Added to every idler slot index before matching.
    pub offset_slots: i64,
    /// Extra idler shift, on top of `offset_slots`, for the accidental estimate.
    pub accidental_offset_slots: i64,
}

impl Default for CoincidenceOptions {
    fn default() -> Self {
        Self {
            offset_slots: 0,
            accidental_offset_slots: DEFAULT_ACCIDENTAL_OFFSET,
        }
    }
}

impl CoincidenceOptions {
    pub fn with_offset(offset_slots: i64) -> Self {
        Self {
            offset_slots,
            ..Self::default()
        }
    }

    /// Options that give identical counts when the two streams are swapped.
    pub fn mirrored(&self) -> Self {
        Self {
            offset_slots: -self.offset_slots,
            accidental_offset_slots: -self.accidental_offset_slots,
        }
    }

    fn accidental_total(&self) -> i64 {
        self.offset_slots + self.accidental_offset_slots
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoincidenceResult {
    pub cc_count: u64,
    pub acc_count: u64,
    pub signal_count: u64,
    pub idler_count: u64,
    pub duration_s: f64,
    pub cc_rate: f64,
    pub acc_rate: f64,
    /// `cc / acc` with Poisson uncertainty; `None` when no accidentals were seen.
    pub car: Option<Measured>,
}

impl CoincidenceResult {
    fn from_counts(cc: u64, acc: u64, signal: u64, idler: u64, duration_s: f64) -> Self {
        let rate = |n: u64| {
            if duration_s > 0.0 {
                n as f64 / duration_s
            } else {
                0.0
            }
        };
        let car = (acc > 0).then(|| {
            let value = cc as f64 / acc as f64;
            let rel = if cc > 0 {
                (1.0 / cc as f64 + 1.0 / acc as f64).sqrt()
            } else {
                (1.0 / acc as f64).sqrt()
            };
            Measured::new(value, value * rel)
        });
        Self {
            cc_count: cc,
            acc_count: acc,
            signal_count: signal,
            idler_count: idler,
            duration_s,
            cc_rate: rate(cc),
            acc_rate: rate(acc),
            car,
        }
    }
}

/// Groups a time-ordered timestamp iterator into `(slot, count)` runs.
struct SlotRuns<I> {
    inner: I,
    clock: ClockInfo,
    shift: i64,
    pending: Option<u64>,
}

impl<I> SlotRuns<I>
where
    I: Iterator<Item = Result<u64>>,
{
    fn new(inner: I, clock: ClockInfo, shift: i64) -> Self {
        Self {
            inner,
            clock,
            shift,
            pending: None,
        }
    }

    #[inline]
    fn slot_of(&self, t: u64) -> Result<i64> {
        let rel = t.checked_sub(self.clock.t0_ps).ok_or(Error::NegativeTime {
            time_ps: t,
            t0_ps: self.clock.t0_ps,
        })?;
        Ok((rel / self.clock.slot_period_ps) as i64)
    }
}

impl<I> Iterator for SlotRuns<I>
where
    I: Iterator<Item = Result<u64>>,
{
    type Item = Result<(i64, u64)>;

    #[inline]
    fn next(&mut self) -> Option<Self::Item> {
        let first = match self.pending.take() {
            Some(t) => t,
            None => match self.inner.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e)),
            },
        };
        let slot = match self.slot_of(first) {
            Ok(s) => s,
            Err(e) => return Some(Err(e)),
        };
        let end = self.clock.t0_ps + (slot as u64 + 1) * self.clock.slot_period_ps;
        let mut count = 1u64;
        loop {
            match self.inner.next() {
                Some(Ok(t)) if t < end => count += 1,
                Some(Ok(t)) => {
                    self.pending = Some(t);
                    break;
                }
                Some(Err(e)) => return Some(Err(e)),
                None => break,
            }
        }
        Some(Ok((slot + self.shift, count)))
    }
}

/// `sum over slots of min(n_a, n_b)` for two slot-run iterators.
fn merge_min<A, B>(mut a: A, mut b: B) -> Result<u64>
where
    A: Iterator<Item = Result<(i64, u64)>>,
    B: Iterator<Item = Result<(i64, u64)>>,
{
    let mut total = 0u64;
    let mut x = a.next().transpose()?;
    let mut y = b.next().transpose()?;
    while let (Some((sa, na)), Some((sb, nb))) = (x, y) {
        if sa < sb {
            x = a.next().transpose()?;
        } else if sb < sa {
            y = b.next().transpose()?;
        } else {
            total += na.min(nb);
            x = a.next().transpose()?;
            y = b.next().transpose()?;
        }
    }
    Ok(total)
}

/// Counts slot coincidences between two fallible timestamp iterators sharing
/// `clock`. Constant memory.
pub fn count_matches<A, B>(signal: A, idler: B, clock: ClockInfo, offset_slots: i64) -> Result<u64>
where
    A: Iterator<Item = Result<u64>>,
    B: Iterator<Item = Result<u64>>,
{
    if clock.slot_period_ps == 0 {
        return Err(Error::out_of_range(
            "slot_period_ps",
            0.0,
            "slot_period_ps > 0",
        ));
    }
    merge_min(
        SlotRuns::new(signal, clock, 0),
        SlotRuns::new(idler, clock, offset_slots),
    )
}

fn check_clocks(s: &TimestampStream, i: &TimestampStream) -> Result<ClockInfo> {
    if s.clock() != i.clock() {
        return Err(Error::ClockMismatch(format!(
            "signal {:?} vs idler {:?}",
            s.clock(),
            i.clock()
        )));
    }
    let clock = s.clock();
    for stream in [s, i] {
        if let Some(&t) = stream.times().first() {
            if t < clock.t0_ps {
                return Err(Error::NegativeTime {
                    time_ps: t,
                    t0_ps: clock.t0_ps,
                });
            }
        }
    }
    Ok(clock)
}

fn ok_iter(times: &[u64]) -> impl Iterator<Item = Result<u64>> + '_ {
    times.iter().map(|&t| Ok(t))
}

/// Duration shared by a pair of streams, in seconds.
pub fn joint_duration_s(s: &TimestampStream, i: &TimestampStream) -> f64 {
    s.effective_span_ps().max(i.effective_span_ps()) as f64 * 1e-12
}

pub fn count_coincidences(
    s: &TimestampStream,
    i: &TimestampStream,
    opts: CoincidenceOptions,
) -> Result<CoincidenceResult> {
    let clock = check_clocks(s, i)?;
    let cc = count_matches(
        ok_iter(s.times()),
        ok_iter(i.times()),
        clock,
        opts.offset_slots,
    )?;
    let acc = count_matches(
        ok_iter(s.times()),
        ok_iter(i.times()),
        clock,
        opts.accidental_total(),
    )?;
    Ok(CoincidenceResult::from_counts(
        cc,
        acc,
        s.len() as u64,
        i.len() as u64,
        joint_duration_s(s, i),
    ))
}

/// Parallel variant of [`count_coincidences`] over `segments` disjoint slot
/// ranges. Segment edges fall on slot boundaries so every slot is owned by
/// exactly one segment; the result is identical to the sequential pass.
pub fn count_coincidences_segmented(
    s: &TimestampStream,
    i: &TimestampStream,
    opts: CoincidenceOptions,
    segments: usize,
) -> Result<CoincidenceResult> {
    let clock = check_clocks(s, i)?;
    let segments = segments.max(1);
    let (Some(&first), Some(&last)) = (s.times().first(), s.times().last()) else {
        return count_coincidences(s, i, opts);
    };
    let p = clock.slot_period_ps as i128;
    let t0 = clock.t0_ps as i128;
    let first_slot = (first as i128 - t0) / p;
    let last_slot = (last as i128 - t0) / p;
    let width = ((last_slot - first_slot + 1) + segments as i128 - 1) / segments as i128;
    let edges: Vec<i128> = (0..=segments as i128)
        .map(|k| (first_slot + k * width).min(last_slot + 1))
        .collect();

    let slot_start_time =
        |slot: i128| -> u64 { (t0 + slot.max(0) * p).min(u64::MAX as i128) as u64 };
    let range = |times: &[u64], lo: i128, hi: i128| -> std::ops::Range<usize> {
        let a = times.partition_point(|&t| t < slot_start_time(lo));
        let b = times.partition_point(|&t| t < slot_start_time(hi));
        a..b.max(a)
    };

    let count_offset = |offset: i64| -> Result<u64> {
        let parts: Result<Vec<u64>> = edges
            .par_windows(2)
            .map(|w| {
                let (lo, hi) = (w[0], w[1]);
                let sr = range(s.times(), lo, hi);
                let off = offset as i128;
                let ir = if hi - off <= 0 {
                    0..0
                } else {
                    range(i.times(), lo - off, hi - off)
                };
                count_matches(
                    ok_iter(&s.times()[sr]),
                    ok_iter(&i.times()[ir]),
                    clock,
                    offset,
                )
            })
            .collect();
        Ok(parts?.into_iter().sum())
    };

    let cc = count_offset(opts.offset_slots)?;
    let acc = count_offset(opts.accidental_total())?;
    Ok(CoincidenceResult::from_counts(
        cc,
        acc,
        s.len() as u64,
        i.len() as u64,
        joint_duration_s(s, i),
    ))
}

/// Number of (signal, idler) event pairs with `|t_s - t_i| <= window_ps`.
/// Free-running window, for diagnostics only.
pub fn count_window_coincidences(s: &TimestampStream, i: &TimestampStream, window_ps: u64) -> u64 {
    let it = i.times();
    let mut lo = 0usize;
    let mut total = 0u64;
    for &ts in s.times() {
        let min = ts.saturating_sub(window_ps);
        while lo < it.len() && it[lo] < min {
            lo += 1;
        }
        let max = ts.saturating_add(window_ps);
        total += it[lo..].iter().take_while(|&&t| t <= max).count() as u64;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stream(times: Vec<u64>) -> TimestampStream {
        TimestampStream::new(0, ClockInfo::new(200), times).unwrap()
    }

    fn poisson_stream(rate_cps: f64, span_ps: u64, seed: u64) -> TimestampStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mean_gap = 1e12 / rate_cps;
        let mut t = 0.0f64;
        let mut v = Vec::new();
        loop {
            let u: f64 = rng.random();
            t += -mean_gap * (1.0 - u).ln();
            if t >= span_ps as f64 {
                break;
            }
            v.push(t as u64);
        }
        stream(v).with_span(span_ps)
    }

    // Brute force: per-slot counts in a map, then sum of minima.
    fn brute_force(s: &[u64], i: &[u64], period: u64, offset: i64) -> u64 {
        use std::collections::BTreeMap;
        let mut a = BTreeMap::new();
        let mut b = BTreeMap::new();
        for &t in s {
            *a.entry((t / period) as i64).or_insert(0u64) += 1;
        }
        for &t in i {
            *b.entry((t / period) as i64 + offset).or_insert(0u64) += 1;
        }
        a.iter().map(|(k, &n)| n.min(*b.get(k).unwrap_or(&0))).sum()
    }

    #[test]
    fn slot_assign_examples() {
        assert_eq!(
            slot_assign(0, 200, 0).unwrap(),
            SlotPosition {
                slot: 0,
                phase_ps: 0
            }
        );
        assert_eq!(
            slot_assign(399, 200, 0).unwrap(),
            SlotPosition {
                slot: 1,
                phase_ps: 199
            }
        );
        assert_eq!(slot_assign(1_000_000, 200, 0).unwrap().slot, 5000);
        assert!(matches!(
            slot_assign(5, 200, 10),
            Err(Error::NegativeTime { .. })
        ));
    }

    #[test]
    fn self_coincidence() {
        let s = poisson_stream(50e6, 2_000_000_000, 3);
        let r = count_coincidences(&s, &s, CoincidenceOptions::default()).unwrap();
        assert_eq!(r.cc_count, s.len() as u64);
    }

    #[test]
    fn multiple_events_pair_as_min() {
        let s = stream(vec![10, 20, 30, 410]);
        let i = stream(vec![50, 60, 420, 430]);
        let r = count_coincidences(&s, &i, CoincidenceOptions::default()).unwrap();
        assert_eq!(r.cc_count, 2 + 1);
    }

    #[test]
    fn offset_applies_to_idler() {
        let s = stream(vec![450]);
        let i = stream(vec![50]);
        assert_eq!(
            count_coincidences(&s, &i, CoincidenceOptions::with_offset(2))
                .unwrap()
                .cc_count,
            1
        );
        assert_eq!(
            count_coincidences(&s, &i, CoincidenceOptions::default())
                .unwrap()
                .cc_count,
            0
        );
    }

    #[test]
    fn clock_mismatch() {
        let s = stream(vec![1]);
        let i = TimestampStream::new(1, ClockInfo::new(100), vec![1]).unwrap();
        assert!(matches!(
            count_coincidences(&s, &i, CoincidenceOptions::default()),
            Err(Error::ClockMismatch(_))
        ));
    }

    #[test]
    fn independent_poisson_accidentals() {
        // r1·r2·T for 47 Mcps each in 200 ps slots is ~442 kcps.
        let span = 20_000_000_000; // 20 ms
        let s = poisson_stream(47e6, span, 1);
        let i = poisson_stream(47e6, span, 2);
        let r = count_coincidences(&s, &i, CoincidenceOptions::default()).unwrap();
        let r1 = s.rate_cps();
        let r2 = i.rate_cps();
        // Exact per-slot expectation for independent Poisson counts sum_m P(X>=m)P(Y>=m)
        // is dominated by the m = 1 term (1 - e^{-r T})².
        let p1 = 1.0 - (-r1 * 200e-12).exp();
        let p2 = 1.0 - (-r2 * 200e-12).exp();
        let expect = p1 * p2 * 5e9 * r.duration_s;
        let sd = expect.sqrt();
        assert!(((r.cc_count as f64) - expect).abs() < 4.0 * sd + 0.02 * expect);
        assert!((r.cc_rate - 442e3).abs() < 0.03 * 442e3, "{}", r.cc_rate);
    }

    #[test]
    fn window_mode() {
        let s = stream(vec![100, 1000]);
        let i = stream(vec![90, 105, 130, 2000]);
        assert_eq!(count_window_coincidences(&s, &i, 10), 2);
        assert_eq!(count_window_coincidences(&s, &i, 1000), 7);
    }

    proptest! {
        #[test]
        fn matches_brute_force(mut a in prop::collection::vec(0u64..20_000, 0..300),
                               mut b in prop::collection::vec(0u64..20_000, 0..300),
                               off in -5i64..5) {
            a.sort_unstable();
            b.sort_unstable();
            let s = stream(a.clone());
            let i = stream(b.clone());
            let r = count_coincidences(&s, &i, CoincidenceOptions { offset_slots: off, accidental_offset_slots: 2 }).unwrap();
            prop_assert_eq!(r.cc_count, brute_force(&a, &b, 200, off));
            prop_assert_eq!(r.acc_count, brute_force(&a, &b, 200, off + 2));
        }

        #[test]
        fn exchange_symmetry(mut a in prop::collection::vec(0u64..50_000, 0..400),
                             mut b in prop::collection::vec(0u64..50_000, 0..400),
                             off in -4i64..4) {
            a.sort_unstable();
            b.sort_unstable();
            let s = stream(a);
            let i = stream(b);
            let opts = CoincidenceOptions { offset_slots: off, accidental_offset_slots: 2 };
            let fwd = count_coincidences(&s, &i, opts).unwrap();
            let rev = count_coincidences(&i, &s, opts.mirrored()).unwrap();
            prop_assert_eq!(fwd.cc_count, rev.cc_count);
            prop_assert_eq!(fwd.acc_count, rev.acc_count);
        }

        #[test]
        fn shift_invariance(mut a in prop::collection::vec(0u64..50_000, 0..400),
                            mut b in prop::collection::vec(0u64..50_000, 0..400),
                            shift in 0u64..1_000_000) {
            a.sort_unstable();
            b.sort_unstable();
            let s = stream(a).with_span(60_000);
            let i = stream(b).with_span(60_000);
            let base = count_coincidences(&s, &i, CoincidenceOptions::default()).unwrap();
            let moved = count_coincidences(&s.shifted(shift), &i.shifted(shift), CoincidenceOptions::default()).unwrap();
            prop_assert_eq!(base, moved);
        }

        #[test]
        fn segmented_equals_sequential(mut a in prop::collection::vec(0u64..100_000, 0..500),
                                       mut b in prop::collection::vec(0u64..100_000, 0..500),
                                       off in -6i64..6, segs in 1usize..9) {
            a.sort_unstable();
            b.sort_unstable();
            let s = stream(a);
            let i = stream(b);
            let opts = CoincidenceOptions { offset_slots: off, accidental_offset_slots: 2 };
            let seq = count_coincidences(&s, &i, opts).unwrap();
            let par = count_coincidences_segmented(&s, &i, opts, segs).unwrap();
            prop_assert_eq!(seq, par);
        }
    }
}
