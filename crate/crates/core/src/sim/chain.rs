//! End-to-end composition: source, optics, detectors and TDCs for both arms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::coincidence::{Channel, ClockInfo, TimestampStream};
use crate::error::{Error, Result};
use crate::model::{ChannelParams, DeadTimeSpec, MziParams, SourceParams};

use super::detector::{detect, DetectorParams, DetectorStats};
use super::source::{add_dark_counts, sample_mzi_outcome, ArmOptics, PairGenerator};
use super::tdc::{SaturationWarning, Tdc, TdcChannelParams};
use super::SimRun;

const STREAM_PAIRS: u64 = 0;
const STREAM_DARK: [u64; 2] = [1, 2];
const STREAM_DETECT: [u64; 2] = [3, 4];
const STREAM_EMISSION: u64 = 5;

/// One arm of the chain. Its TDC assigns codes by the physical tap widths
/// and reports the centres of the nominal uniform taps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub channel: ChannelParams,
    pub mzi: Option<MziParams>,
    pub detector: DetectorParams,
    pub tdc: TdcChannelParams,
}

impl Default for ArmConfig {
    fn default() -> Self {
        Self {
            channel: ChannelParams::default(),
            mzi: Some(MziParams::default()),
            detector: DetectorParams::default(),
            tdc: TdcChannelParams::default(),
        }
    }
}

impl ArmConfig {
    /// Lossless arm without interferometer, ideal detector and a TDC with no
    /// dead time.
    pub fn ideal() -> Self {
        Self {
            channel: ChannelParams::lossless(),
            mzi: None,
            detector: DetectorParams::ideal(),
            tdc: TdcChannelParams {
                dead_time: DeadTimeSpec::none(),
                max_rate_cps: f64::INFINITY,
                ..TdcChannelParams::default()
            },
        }
    }

    pub fn optics(&self) -> ArmOptics {
        ArmOptics {
            channel: self.channel,
            mzi: self.mzi,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        self.channel.validate(prefix)?;
        if let Some(m) = &self.mzi {
            m.validate(prefix)?;
        }
        self.detector.validate(prefix)?;
        self.tdc.validate(prefix)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub source: SourceParams,
    /// Gaussian spread of the emission time about the slot centre.
    pub source_width_fwhm_s: f64,
    pub signal: ArmConfig,
    pub idler: ArmConfig,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            source: SourceParams::default(),
            source_width_fwhm_s: 0.0,
            signal: ArmConfig::default(),
            idler: ArmConfig::default(),
        }
    }
}

impl ChainConfig {
    pub fn ideal(mu: f64) -> Self {
        Self {
            source: SourceParams::new(mu, 5e9),
            source_width_fwhm_s: 0.0,
            signal: ArmConfig::ideal(),
            idler: ArmConfig::ideal(),
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.source.mu_c = mu;
        self
    }

    pub fn arm(&self, ch: Channel) -> &ArmConfig {
        match ch {
            Channel::Signal => &self.signal,
            Channel::Idler => &self.idler,
        }
    }

    pub fn arm_mut(&mut self, ch: Channel) -> &mut ArmConfig {
        match ch {
            Channel::Signal => &mut self.signal,
            Channel::Idler => &mut self.idler,
        }
    }

    pub fn validate(&self, run: &SimRun) -> Result<()> {
        self.source.validate()?;
        if !(self.source_width_fwhm_s >= 0.0 && self.source_width_fwhm_s.is_finite()) {
            return Err(Error::out_of_range(
                "source.width_fwhm_s",
                self.source_width_fwhm_s,
                ">= 0",
            ));
        }
        self.signal.validate("signal.")?;
        self.idler.validate("idler.")?;
        run.validate(self.source.clock_hz)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ArmStats {
    pub photons: u64,
    pub darks: u64,
    pub detector: DetectorStats,
    pub tdc_dropped: u64,
    pub output: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub n_slots: u64,
    pub slot_period_ps: u64,
    pub pairs: u64,
    pub signal: ArmStats,
    pub idler: ArmStats,
    pub warnings: Vec<String>,
    /// Sustained-rate guard violations, kept typed for callers that treat
    /// them as fatal.
    pub saturation: Vec<SaturationWarning>,
}

#[derive(Debug)]
pub struct ChainOutput {
    pub signal: TimestampStream,
    pub idler: TimestampStream,
    pub report: RunReport,
}

fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates both channels of one run. Identical config and run produce
/// bit-identical streams.
pub fn simulate_chain(cfg: &ChainConfig, run: &SimRun) -> Result<ChainOutput> {
    cfg.validate(run)?;
    let period = run.slot_period_ps as f64;
    let optics = [cfg.signal.optics(), cfg.idler.optics()];

    let mut candidates: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let expected = (cfg.source.mu_c * run.n_slots as f64) as usize;
    for (arm, c) in candidates.iter_mut().enumerate() {
        c.reserve((expected as f64 * optics[arm].survival() * 1.05) as usize + 16);
    }

    let mut pair_rng = stage_rng(run.seed, STREAM_PAIRS);
    let mut optics_rng = pair_rng.clone();
    optics_rng.set_stream(STREAM_PAIRS + 100);
    let sigma_src = cfg.source_width_fwhm_s / crate::model::FWHM_PER_SIGMA * 1e12;
    let src_width = (sigma_src > 0.0).then(|| Normal::new(0.0, sigma_src).expect("finite sigma"));
    let mut emission_rng = stage_rng(run.seed, STREAM_EMISSION);

    let mut pairs = 0u64;
    for pair in PairGenerator::new(cfg.source.mu_c, run.n_slots, &mut pair_rng) {
        pairs += 1;
        let outcome = sample_mzi_outcome(&optics[0], &optics[1], &mut optics_rng);
        let base = pair.slot as f64 * period + 0.5 * period;
        let offset = match &src_width {
            Some(n) if outcome.signal.is_some() || outcome.idler.is_some() => {
                n.sample(&mut emission_rng)
            }
            _ => 0.0,
        };
        for (arm, delay) in [outcome.signal, outcome.idler].into_iter().enumerate() {
            if let Some(d) = delay {
                candidates[arm].push((base + d as f64 * period + offset).max(0.0));
            }
        }
    }

    let mut report = RunReport {
        seed: run.seed,
        n_slots: run.n_slots,
        slot_period_ps: run.slot_period_ps,
        pairs,
        signal: ArmStats::default(),
        idler: ArmStats::default(),
        warnings: Vec::new(),
        saturation: Vec::new(),
    };
    let duration_ps = run.span_ps() as f64;
    let mut streams = Vec::with_capacity(2);
    for (arm, ch) in [Channel::Signal, Channel::Idler].into_iter().enumerate() {
        let conf = cfg.arm(ch);
        let mut cands = std::mem::take(&mut candidates[arm]);
        let photons = cands.len() as u64;
        let darks = add_dark_counts(
            &conf.channel,
            run,
            &mut stage_rng(run.seed, STREAM_DARK[arm]),
        );
        let n_darks = darks.len() as u64;
        cands.extend(darks);
        if n_darks > 0 || src_width.is_some() || conf.mzi.is_some() {
            cands.sort_unstable_by(f64::total_cmp);
        }
        let det = detect(
            &cands,
            &conf.detector,
            ch,
            &mut stage_rng(run.seed, STREAM_DETECT[arm]),
        );
        drop(cands);
        let nominal =
            TdcChannelParams::uniform(conf.tdc.tap_count, conf.tdc.coarse_clock_hz).tap_widths_s;
        let tdc = Tdc::new(conf.tdc.clone())?
            .with_reporting_widths(&nominal)?
            .digitize(&det.events, duration_ps)?;
        if let Some(sat) = tdc.saturation {
            report.warnings.push(format!("{ch:?}: {sat}"));
            report.saturation.push(sat);
        }
        let stats = ArmStats {
            photons,
            darks: n_darks,
            detector: det.stats,
            tdc_dropped: tdc.dropped,
            output: tdc.times_ps.len() as u64,
        };
        match ch {
            Channel::Signal => report.signal = stats,
            Channel::Idler => report.idler = stats,
        }
        let stream =
            TimestampStream::new(ch.id(), ClockInfo::new(run.slot_period_ps), tdc.times_ps)?
                .with_span(run.span_ps());
        streams.push(stream);
    }
    let idler = streams.pop().expect("two arms");
    let signal = streams.pop().expect("two arms");
    Ok(ChainOutput {
        signal,
        idler,
        report,
    })
}

/// Draws `n` uniform arrivals over `[0, span_ps)`, sorted.
pub fn uniform_arrivals<R: Rng + ?Sized>(n: usize, span_ps: f64, rng: &mut R) -> Vec<f64> {
    let mut t: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * span_ps).collect();
    t.sort_unstable_by(f64::total_cmp);
    t
}
