//! Pair generation, interferometer outcomes and dark counts.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::model::{ChannelParams, MziParams, SourceParams};

use super::SimRun;

/// One photon pair created in pump slot `slot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairEvent {
    pub slot: u64,
}

/// Number of events in each occupied slot of a Poisson process with mean `mu`
/// per slot, visited in slot order.
///
/// Empty slots are skipped geometrically so the cost scales with the number of
/// pairs rather than the number of slots.
pub struct PairGenerator<'r, R: ?Sized> {
    rng: &'r mut R,
    mu: f64,
    n_slots: u64,
    gap: Option<Geometric>,
    cursor: u64,
    remaining_in_slot: u32,
    current_slot: u64,
}

impl<'r, R: Rng + ?Sized> PairGenerator<'r, R> {
    pub fn new(mu: f64, n_slots: u64, rng: &'r mut R) -> Self {
        let p_occupied = -(-mu).exp_m1();
        let gap =
            (p_occupied > 0.0).then(|| Geometric::new(p_occupied.min(1.0)).expect("p in (0, 1]"));
        Self {
            rng,
            mu,
            n_slots,
            gap,
            cursor: 0,
            remaining_in_slot: 0,
            current_slot: 0,
        }
    }
}

impl<R: Rng + ?Sized> Iterator for PairGenerator<'_, R> {
    type Item = PairEvent;

    fn next(&mut self) -> Option<PairEvent> {
        if self.remaining_in_slot > 0 {
            self.remaining_in_slot -= 1;
            return Some(PairEvent {
                slot: self.current_slot,
            });
        }
        let gap = self.gap.as_ref()?;
        let skip = gap.sample(self.rng);
        let slot = self.cursor.checked_add(skip)?;
        if slot >= self.n_slots {
            self.cursor = self.n_slots;
            return None;
        }
        self.cursor = slot + 1;
        self.current_slot = slot;
        self.remaining_in_slot = sample_truncated_poisson(self.mu, self.rng) - 1;
        Some(PairEvent { slot })
    }
}

/// Poisson(mu) conditioned on at least one event, by CDF inversion.
fn sample_truncated_poisson<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u32 {
    let norm = -(-mu).exp_m1();
    let u = rng.random::<f64>() * norm;
    let mut k = 1u32;
    let mut p = mu * (-mu).exp();
    let mut cdf = p;
    while u > cdf && k < 10_000 {
        k += 1;
        p *= mu / k as f64;
        cdf += p;
    }
    k
}

/// Collects all pairs of a run. Large runs should iterate [`PairGenerator`]
/// directly instead.
pub fn generate_pairs<R: Rng + ?Sized>(
    src: &SourceParams,
    run: &SimRun,
    rng: &mut R,
) -> Vec<PairEvent> {
    PairGenerator::new(src.mu_c, run.n_slots, rng).collect()
}

/// Optical path of one arm ahead of its detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmOptics {
    pub channel: ChannelParams,
    /// `None` when the arm has no interferometer.
    pub mzi: Option<MziParams>,
}

impl ArmOptics {
    pub fn survival(&self) -> f64 {
        self.channel.transmittance * self.mzi.map_or(1.0, |m| m.insertion_transmittance)
    }
}

/// Combined contrast of a pair of interferometers: the geometric mean of
/// their individual contrasts.
pub fn pair_visibility(mzi_s: &MziParams, mzi_i: &MziParams) -> f64 {
    (mzi_s.interference_visibility * mzi_i.interference_visibility).sqrt()
}

/// Samples the joint delay `(ds, di)` of a pair through two unbalanced
/// interferometers: equal delays with probability `(1 + u) / 2`, where
/// `u = V·cos(θs + θi)`. Each marginal is uniform on `{0, 1}`.
pub fn sample_joint_delays<R: Rng + ?Sized>(
    mzi_s: &MziParams,
    mzi_i: &MziParams,
    rng: &mut R,
) -> (u8, u8) {
    let u = pair_visibility(mzi_s, mzi_i) * (mzi_s.phase_rad + mzi_i.phase_rad).cos();
    let ds = rng.random_bool(0.5) as u8;
    let same = rng.random::<f64>() < 0.5 * (1.0 + u);
    (ds, if same { ds } else { 1 - ds })
}

/// Slot delay of each photon that reaches its detector, `None` when lost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MziOutcome {
    pub signal: Option<u8>,
    pub idler: Option<u8>,
}

pub fn sample_mzi_outcome<R: Rng + ?Sized>(
    optics_s: &ArmOptics,
    optics_i: &ArmOptics,
    rng: &mut R,
) -> MziOutcome {
    let keep_s = rng.random::<f64>() < optics_s.survival();
    let keep_i = rng.random::<f64>() < optics_i.survival();
    if !keep_s && !keep_i {
        return MziOutcome {
            signal: None,
            idler: None,
        };
    }
    let (ds, di) = match (&optics_s.mzi, &optics_i.mzi) {
        (Some(ms), Some(mi)) => sample_joint_delays(ms, mi, rng),
        (Some(_), None) => (rng.random_bool(0.5) as u8, 0),
        (None, Some(_)) => (0, rng.random_bool(0.5) as u8),
        (None, None) => (0, 0),
    };
    MziOutcome {
        signal: keep_s.then_some(ds),
        idler: keep_i.then_some(di),
    }
}

/// Dark-count candidate times (ps): one per slot with probability
/// `dark_prob`, uniform within the slot.
pub fn add_dark_counts<R: Rng + ?Sized>(ch: &ChannelParams, run: &SimRun, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::new();
    if ch.dark_prob <= 0.0 {
        return out;
    }
    let gap = Geometric::new(ch.dark_prob).expect("dark_prob in (0, 1)");
    let period = run.slot_period_ps as f64;
    let mut cursor = 0u64;
    while let Some(slot) = cursor.checked_add(gap.sample(rng)) {
        if slot >= run.n_slots {
            break;
        }
        out.push(slot as f64 * period + rng.random::<f64>() * period);
        cursor = slot + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn run(n_slots: u64) -> SimRun {
        SimRun {
            seed: 0,
            n_slots,
            slot_period_ps: 200,
        }
    }

    #[test]
    fn no_pairs_without_pump() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(generate_pairs(&SourceParams::new(0.0, 5e9), &run(1_000_000), &mut rng).is_empty());
    }

    #[test]
    fn pair_count_is_poisson() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs = generate_pairs(&SourceParams::new(0.1, 5e9), &run(1_000_000), &mut rng);
        let n = pairs.len() as f64;
        assert!((n - 1e5).abs() < 3.0 * 1e5f64.sqrt(), "{n}");
        assert!(pairs.windows(2).all(|w| w[0].slot <= w[1].slot));
        assert!(pairs.iter().all(|p| p.slot < 1_000_000));
    }

    #[test]
    fn per_slot_multiplicity_is_poisson() {
        // Frequencies of k pairs per slot against e^-mu mu^k / k!.
        let mu = 0.5;
        let n_slots = 400_000u64;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut hist = [0u64; 4];
        let mut counts = std::collections::HashMap::new();
        for p in PairGenerator::new(mu, n_slots, &mut rng) {
            *counts.entry(p.slot).or_insert(0usize) += 1;
        }
        hist[0] = n_slots - counts.len() as u64;
        for &c in counts.values() {
            if c < 4 {
                hist[c] += 1;
            }
        }
        let mut pk = (-mu).exp();
        for (k, &h) in hist.iter().enumerate() {
            if k > 0 {
                pk *= mu / k as f64;
            }
            let e = pk * n_slots as f64;
            assert!((h as f64 - e).abs() < 4.0 * e.sqrt(), "k={k}: {h} vs {e}");
        }
    }

    #[test]
    fn joint_delay_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ideal = |phase| MziParams {
            phase_rad: phase,
            interference_visibility: 1.0,
            insertion_transmittance: 1.0,
        };
        for _ in 0..10_000 {
            let (a, b) = sample_joint_delays(&ideal(0.0), &ideal(0.0), &mut rng);
            assert_eq!(a, b);
            let (a, b) = sample_joint_delays(&ideal(PI / 2.0), &ideal(PI / 2.0), &mut rng);
            assert_ne!(a, b);
        }
    }

    #[test]
    fn joint_delay_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ms = MziParams::with_phase(PI / 3.0);
        let mi = MziParams::with_phase(0.0);
        let n = 1_000_000;
        let mut table = [[0u64; 2]; 2];
        for _ in 0..n {
            let (a, b) = sample_joint_delays(&ms, &mi, &mut rng);
            table[a as usize][b as usize] += 1;
        }
        // u = 0.95·cos(π/3) = 0.475
        let p00: f64 = (1.0 + 0.475) / 4.0;
        assert!((p00 - 0.36875).abs() < 1e-12);
        for (cell, p) in [
            (table[0][0], p00),
            (table[1][1], p00),
            (table[0][1], (1.0 - 0.475) / 4.0),
            (table[1][0], (1.0 - 0.475) / 4.0),
        ] {
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (cell as f64 - n as f64 * p).abs() < 3.0 * sd,
                "{cell} vs {}",
                n as f64 * p
            );
        }
    }

    #[test]
    fn marginals_are_phase_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 1_000_000u64;
        let sd = (n as f64 * 0.25).sqrt();
        for phase in [0.0, 0.7, PI / 2.0, 2.0, PI] {
            let ms = MziParams::with_phase(phase);
            let mi = MziParams::with_phase(0.3);
            let (mut s1, mut i1) = (0u64, 0u64);
            for _ in 0..n {
                let (a, b) = sample_joint_delays(&ms, &mi, &mut rng);
                s1 += a as u64;
                i1 += b as u64;
            }
            assert!((s1 as f64 - n as f64 / 2.0).abs() < 3.0 * sd);
            assert!((i1 as f64 - n as f64 / 2.0).abs() < 3.0 * sd);
        }
    }

    #[test]
    fn dark_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(add_dark_counts(&ChannelParams::new(1.0, 0.0), &run(1000), &mut rng).is_empty());
        let darks = add_dark_counts(
            &ChannelParams::new(1.0, 1e-6),
            &run(1_000_000_000),
            &mut rng,
        );
        let n = darks.len() as f64;
        assert!((n - 1000.0).abs() < 3.0 * 1000f64.sqrt(), "{n}");
        assert!(darks.windows(2).all(|w| w[0] <= w[1]));
        // 1e-7 per pulse at 5 GHz
        assert!((1e-7 * 5e9 - 500.0f64).abs() < 1e-9);
    }
}
