//! TOML run configuration with flat per-stage sections.

use serde::{Deserialize, Serialize};

use crate::coincidence::CoincidenceOptions;
use crate::error::{Error, Result};
use crate::experiments::{ChshSettings, DEFAULT_QUOTA};
use crate::model::{
    db_to_linear, ChannelParams, DeadTimeMode, DeadTimeSpec, JitterSpec, MziParams, SourceParams,
};
use crate::sim::{
    sawtooth_widths, ArmConfig, ChainConfig, DetectorParams, SfqMode, SimRun, TdcChannelParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub mu_c: f64,
    pub clock_hz: f64,
    pub coherence_pulses: u64,
    pub width_fwhm_s: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        let s = SourceParams::default();
        Self {
            mu_c: s.mu_c,
            clock_hz: s.clock_hz,
            coherence_pulses: s.coherence_pulses,
            width_fwhm_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub transmittance: f64,
    pub dark_prob: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            transmittance: db_to_linear(-3.5),
            dark_prob: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MziSection {
    pub enabled: bool,
    pub phase_rad: f64,
    pub interference_visibility: f64,
    pub insertion_transmittance: f64,
}

impl Default for MziSection {
    fn default() -> Self {
        let m = MziParams::default();
        Self {
            enabled: true,
            phase_rad: m.phase_rad,
            interference_visibility: m.interference_visibility,
            insertion_transmittance: m.insertion_transmittance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub pixel_count: u32,
    pub efficiency: f64,
    pub pixel_dead_time_s: f64,
    pub pixel_dead_time_mode: DeadTimeMode,
    pub jitter_fwhm_s: f64,
    pub sfq_merge_window_s: f64,
    pub sfq_mode: SfqMode,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let d = DetectorParams::default();
        Self {
            pixel_count: d.pixel_count,
            efficiency: d.efficiency,
            pixel_dead_time_s: d.pixel_dead_time.dead_time_s,
            pixel_dead_time_mode: d.pixel_dead_time.mode,
            jitter_fwhm_s: d.jitter.fwhm_s,
            sfq_merge_window_s: d.sfq_merge_window_s,
            sfq_mode: d.sfq_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdcSection {
    pub tap_count: usize,
    pub coarse_clock_hz: f64,
    pub dead_time_s: f64,
    pub dead_time_mode: DeadTimeMode,
    pub max_rate_cps: f64,
    /// Relative amplitude of an injected sawtooth non-linearity.
    pub dnl_sawtooth: f64,
    pub dnl_period_taps: usize,
    /// Explicit per-tap widths; overrides the sawtooth when non-empty.
    pub tap_widths_s: Vec<f64>,
}

impl Default for TdcSection {
    fn default() -> Self {
        let t = TdcChannelParams::default();
        Self {
            tap_count: t.tap_count,
            coarse_clock_hz: t.coarse_clock_hz,
            dead_time_s: t.dead_time.dead_time_s,
            dead_time_mode: t.dead_time.mode,
            max_rate_cps: t.max_rate_cps,
            dnl_sawtooth: 0.0,
            dnl_period_taps: 16,
            tap_widths_s: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub n_slots: u64,
    pub slot_period_ps: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        let r = SimRun::default();
        Self {
            seed: r.seed,
            n_slots: r.n_slots,
            slot_period_ps: r.slot_period_ps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub quota: u64,
    pub repeats: usize,
    pub slot_budget: u64,
    pub coincidence_offset_slots: i64,
    pub accidental_offset_slots: i64,
    pub signal_temperature_c: f64,
    pub temperature_start_c: f64,
    pub temperature_stop_c: f64,
    pub temperature_step_c: f64,
    pub temperature_ref_c: f64,
    pub celsius_per_pi: f64,
    pub chsh_theta_s0: f64,
    pub chsh_theta_i0: f64,
    pub mu_grid: Vec<f64>,
    pub jitter_fwhm_grid_s: Vec<f64>,
    pub fringe_points: usize,
    pub car_mu_grid: Vec<f64>,
    pub saturation_mu_grid: Vec<f64>,
    pub saturation_dead_slots: Vec<u32>,
    pub saturation_n_slots: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            quota: DEFAULT_QUOTA,
            repeats: 5,
            slot_budget: 1 << 40,
            coincidence_offset_slots: 0,
            accidental_offset_slots: crate::coincidence::DEFAULT_ACCIDENTAL_OFFSET,
            signal_temperature_c: 40.0,
            temperature_start_c: 43.0,
            temperature_stop_c: 46.0,
            temperature_step_c: 0.1,
            temperature_ref_c: 43.40,
            celsius_per_pi: 1.40,
            chsh_theta_s0: 0.0,
            chsh_theta_i0: 0.0,
            mu_grid: vec![0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.094],
            jitter_fwhm_grid_s: Vec::new(),
            fringe_points: 16,
            car_mu_grid: vec![0.001, 0.01, 0.1],
            saturation_mu_grid: vec![0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1],
            saturation_dead_slots: vec![0, 5, 10],
            saturation_n_slots: 10_000_000,
        }
    }
}

/// Every tunable parameter of a run, with defaults for omitted keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub source: SourceSection,
    pub signal_channel: ChannelSection,
    pub idler_channel: ChannelSection,
    pub signal_mzi: MziSection,
    pub idler_mzi: MziSection,
    pub signal_detector: DetectorSection,
    pub idler_detector: DetectorSection,
    pub signal_tdc: TdcSection,
    pub idler_tdc: TdcSection,
    pub run: RunSection,
    pub experiment: ExperimentSection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

impl RunConfig {
    /// Effective configuration as TOML; parsing it yields an identical value.
    pub fn echo(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.chain()?.validate(&self.sim_run())?;
        if self.run.seed > i64::MAX as u64 {
            return Err(Error::out_of_range(
                "run.seed",
                self.run.seed as f64,
                "seed < 2^63",
            ));
        }
        let e = &self.experiment;
        if e.quota == 0 {
            return Err(Error::out_of_range("experiment.quota", 0.0, "quota > 0"));
        }
        if e.repeats == 0 {
            return Err(Error::out_of_range(
                "experiment.repeats",
                0.0,
                "repeats >= 1",
            ));
        }
        if !(e.temperature_step_c > 0.0) {
            return Err(Error::out_of_range(
                "experiment.temperature_step_c",
                e.temperature_step_c,
                "step > 0",
            ));
        }
        if !(e.celsius_per_pi > 0.0) {
            return Err(Error::out_of_range(
                "experiment.celsius_per_pi",
                e.celsius_per_pi,
                "> 0",
            ));
        }
        if e.accidental_offset_slots == 0 {
            return Err(Error::out_of_range(
                "experiment.accidental_offset_slots",
                0.0,
                "accidental offset != 0",
            ));
        }
        for (name, grid) in [
            ("experiment.mu_grid", &e.mu_grid),
            ("experiment.car_mu_grid", &e.car_mu_grid),
            ("experiment.saturation_mu_grid", &e.saturation_mu_grid),
        ] {
            if let Some(&m) = grid.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
                return Err(Error::out_of_range(name, m, "mu >= 0"));
            }
        }
        Ok(())
    }

    pub fn source(&self) -> SourceParams {
        SourceParams {
            mu_c: self.source.mu_c,
            clock_hz: self.source.clock_hz,
            coherence_pulses: self.source.coherence_pulses,
        }
    }

    fn arm(
        ch: &ChannelSection,
        mzi: &MziSection,
        det: &DetectorSection,
        tdc: &TdcSection,
    ) -> ArmConfig {
        let widths = if !tdc.tap_widths_s.is_empty() {
            tdc.tap_widths_s.clone()
        } else if tdc.dnl_sawtooth != 0.0 {
            sawtooth_widths(
                tdc.tap_count,
                tdc.coarse_clock_hz,
                tdc.dnl_sawtooth,
                tdc.dnl_period_taps,
            )
        } else {
            TdcChannelParams::uniform(tdc.tap_count.max(1), tdc.coarse_clock_hz).tap_widths_s
        };
        ArmConfig {
            channel: ChannelParams::new(ch.transmittance, ch.dark_prob),
            mzi: mzi.enabled.then_some(MziParams {
                phase_rad: mzi.phase_rad,
                interference_visibility: mzi.interference_visibility,
                insertion_transmittance: mzi.insertion_transmittance,
            }),
            detector: DetectorParams {
                pixel_count: det.pixel_count,
                efficiency: det.efficiency,
                pixel_dead_time: DeadTimeSpec::new(det.pixel_dead_time_s, det.pixel_dead_time_mode),
                jitter: JitterSpec::from_fwhm(det.jitter_fwhm_s),
                sfq_merge_window_s: det.sfq_merge_window_s,
                sfq_mode: det.sfq_mode,
            },
            tdc: TdcChannelParams {
                tap_count: tdc.tap_count,
                coarse_clock_hz: tdc.coarse_clock_hz,
                tap_widths_s: widths,
                dead_time: DeadTimeSpec::new(tdc.dead_time_s, tdc.dead_time_mode),
                max_rate_cps: tdc.max_rate_cps,
            },
        }
    }

    /// Physical chain described by this configuration. Field names in
    /// validation errors carry the section name.
    pub fn chain(&self) -> Result<ChainConfig> {
        let cfg = ChainConfig {
            source: self.source(),
            source_width_fwhm_s: self.source.width_fwhm_s,
            signal: Self::arm(
                &self.signal_channel,
                &self.signal_mzi,
                &self.signal_detector,
                &self.signal_tdc,
            ),
            idler: Self::arm(
                &self.idler_channel,
                &self.idler_mzi,
                &self.idler_detector,
                &self.idler_tdc,
            ),
        };
        self.source().validate()?;
        let sections = [
            (
                &cfg.signal,
                "signal_channel.",
                "signal_mzi.",
                "signal_detector.",
                "signal_tdc.",
            ),
            (
                &cfg.idler,
                "idler_channel.",
                "idler_mzi.",
                "idler_detector.",
                "idler_tdc.",
            ),
        ];
        for (arm, ch, mzi, det, tdc) in sections {
            arm.channel.validate(ch)?;
            if let Some(m) = &arm.mzi {
                m.validate(mzi)?;
            }
            arm.detector.validate(det)?;
            arm.tdc.validate(tdc)?;
        }
        Ok(cfg)
    }

    pub fn sim_run(&self) -> SimRun {
        SimRun {
            seed: self.run.seed,
            n_slots: self.run.n_slots,
            slot_period_ps: self.run.slot_period_ps,
        }
    }

    pub fn coincidence(&self) -> CoincidenceOptions {
        CoincidenceOptions {
            offset_slots: self.experiment.coincidence_offset_slots,
            accidental_offset_slots: self.experiment.accidental_offset_slots,
        }
    }

    pub fn chsh_settings(&self) -> ChshSettings {
        ChshSettings {
            theta_s0: self.experiment.chsh_theta_s0,
            theta_i0: self.experiment.chsh_theta_i0,
        }
    }

    /// Idler temperature grid from start to stop inclusive.
    pub fn temperatures(&self) -> Vec<f64> {
        let e = &self.experiment;
        let n = ((e.temperature_stop_c - e.temperature_start_c) / e.temperature_step_c + 1e-9)
            .floor() as usize;
        (0..=n)
            .map(|k| e.temperature_start_c + k as f64 * e.temperature_step_c)
            .collect()
    }
}
