//! Command-line front end. Every subcommand writes CSV tables and a JSON
//! summary into the output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::coincidence::{
    count_coincidences, cross_correlation_histogram, ClockInfo, CoincidenceOptions, TimestampStream,
};
use crate::error::{Error, Result};
use crate::experiments::{
    fit_visibility, run_car_sweep, run_chsh, run_fringe_scan, run_saturation_sweep,
    run_temperature_scan, run_visibility_vs_mu, ChshPlan, FringeScan,
};
use crate::io::{
    load_config, read_json, read_stream, write_csv, write_json, write_stream, RunConfig,
    RunMetadata,
};
use crate::model::{
    coincidence_and_accidental, expected_visibility, slot_capture_probability,
    visibility_multiphoton, ChannelParams, JitterSpec,
};
use crate::sim::{
    nominal_code, pair_visibility, run_code_density, simulate_chain, ChainConfig, TdcChannelParams,
};

#[derive(Debug, Parser)]
#[command(
    name = "timebin",
    version,
    about = "Time-bin entangled photon pair simulator and analyser"
)]
pub struct Cli {
    /// TOML configuration file; omitted keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides `experiment.quota` (signal detections per point).
    #[arg(long, global = true)]
    pub quota: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one run and write both timestamp streams.
    Simulate {
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        n_slots: Option<u64>,
        /// Exit 0 even if a TDC rate guard was exceeded.
        #[arg(long)]
        allow_saturation: bool,
    },
    /// Count coincidences between two stream files.
    Analyze {
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        idler: PathBuf,
        /// `run.json` written by `simulate`.
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        bin_width_ps: u64,
        #[arg(long, default_value_t = 1000)]
        range_ps: u64,
    },
    /// Fringe scan over the configured idler temperature grid.
    Fringe {
        #[arg(long)]
        mu: Option<f64>,
        /// Scan `experiment.fringe_points` phases over one period instead.
        #[arg(long)]
        phase_grid: bool,
    },
    /// CHSH test from 16 settings.
    Chsh {
        #[arg(long)]
        mu: Option<f64>,
    },
    /// CAR at each μ of `experiment.car_mu_grid`.
    CarSweep,
    /// Coincidence probability per pulse against dead time.
    Saturation {
        #[arg(long)]
        n_slots: Option<u64>,
    },
    /// Fitted visibility at each μ of `experiment.mu_grid`.
    VisibilitySweep,
    /// Code-density calibration of the signal TDC.
    TdcCalibrate {
        /// Histogram this stream instead of simulated uniform arrivals.
        #[arg(long)]
        stream: Option<PathBuf>,
        #[arg(long, default_value_t = 20_000_000)]
        arrivals: u64,
        /// Sawtooth amplitude injected when the configuration has none.
        #[arg(long)]
        dnl: Option<f64>,
    },
    /// Coincidence-engine throughput on synthetic streams.
    Bench {
        #[arg(long, default_value_t = 10_000_000)]
        events: usize,
    },
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn chain(&self) -> Result<ChainConfig> {
        self.cfg.chain()
    }

    fn write_echo(&self) -> Result<()> {
        std::fs::write(self.path("config.toml"), self.cfg.echo()?)?;
        Ok(())
    }
}

fn setup(cli: &Cli) -> Result<Context> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(q) = cli.quota {
        cfg.experiment.quota = q;
    }
    match &cli.command {
        Command::Simulate { mu, n_slots, .. } => {
            if let Some(m) = mu {
                cfg.source.mu_c = *m;
            }
            if let Some(n) = n_slots {
                cfg.run.n_slots = *n;
            }
        }
        Command::Fringe { mu: Some(m), .. } | Command::Chsh { mu: Some(m) } => cfg.source.mu_c = *m,
        Command::Saturation { n_slots: Some(n) } => cfg.experiment.saturation_n_slots = *n,
        _ => {}
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cli.out)?;
    Ok(Context {
        cfg,
        out: cli.out.clone(),
    })
}

/// Parses nothing; runs an already parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    let ctx = setup(&cli)?;
    match cli.command {
        Command::Simulate {
            allow_saturation, ..
        } => simulate(&ctx, allow_saturation),
        Command::Analyze {
            signal,
            idler,
            meta,
            bin_width_ps,
            range_ps,
        } => analyze(
            &ctx,
            &signal,
            &idler,
            meta.as_deref(),
            bin_width_ps,
            range_ps,
        ),
        Command::Fringe { phase_grid, .. } => fringe(&ctx, phase_grid),
        Command::Chsh { .. } => chsh(&ctx),
        Command::CarSweep => car_sweep(&ctx),
        Command::Saturation { .. } => saturation(&ctx),
        Command::VisibilitySweep => visibility_sweep(&ctx),
        Command::TdcCalibrate {
            stream,
            arrivals,
            dnl,
        } => tdc_calibrate(&ctx, stream.as_deref(), arrivals, dnl),
        Command::Bench { events } => bench(&ctx, events),
    }
}

/// Entry point for the binary: returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.class().exit_code()
        }
    }
}

fn simulate(ctx: &Context, allow_saturation: bool) -> Result<()> {
    let chain = ctx.chain()?;
    let run = ctx.cfg.sim_run();
    let out = simulate_chain(&chain, &run)?;
    write_stream(&ctx.path("signal.pts"), &out.signal, run.seed)?;
    write_stream(&ctx.path("idler.pts"), &out.idler, run.seed)?;
    let meta = RunMetadata {
        seed: run.seed,
        n_slots: run.n_slots,
        slot_period_ps: run.slot_period_ps,
        span_ps: run.span_ps(),
        config: ctx.cfg.echo()?,
        report: serde_json::to_value(&out.report)?,
    };
    write_json(&ctx.path("run.json"), &meta)?;
    ctx.write_echo()?;
    println!(
        "simulated {} slots: {} signal, {} idler events",
        run.n_slots,
        out.signal.len(),
        out.idler.len()
    );
    for w in &out.report.warnings {
        eprintln!("warning: {w}");
    }
    match out.report.saturation.first() {
        Some(&sat) if !allow_saturation => Err(sat.into()),
        _ => Ok(()),
    }
}

/// Effective per-pulse detection probability of an arm for the rate model.
fn effective_channel(arm: &crate::sim::ArmConfig) -> ChannelParams {
    let eta = arm.detector.efficiency;
    ChannelParams::new(arm.optics().survival() * eta, arm.channel.dark_prob * eta)
}

#[derive(Serialize)]
struct HistogramRow {
    delay_ps: f64,
    counts: u64,
}

fn analyze(
    ctx: &Context,
    signal: &Path,
    idler: &Path,
    meta: Option<&Path>,
    bin_width_ps: u64,
    range_ps: u64,
) -> Result<()> {
    let (_, mut s) = read_stream(signal)?;
    let (_, mut i) = read_stream(idler)?;
    let mut model = serde_json::Value::Null;
    if let Some(m) = meta {
        let meta: RunMetadata = read_json(m)?;
        if meta.slot_period_ps != s.clock().slot_period_ps {
            return Err(Error::ClockMismatch(format!(
                "metadata slot period {} ps, stream {} ps",
                meta.slot_period_ps,
                s.clock().slot_period_ps
            )));
        }
        s = s.with_span(meta.span_ps);
        i = i.with_span(meta.span_ps);
        let cfg = crate::io::parse_config(&meta.config)?;
        let chain = cfg.chain()?;
        if chain.signal.mzi.is_none() && chain.idler.mzi.is_none() {
            let (cc, acc) = coincidence_and_accidental(
                &chain.source,
                &effective_channel(&chain.signal),
                &effective_channel(&chain.idler),
            );
            model = json!({
                "cc_per_pulse": cc,
                "acc_per_pulse": acc,
                "car": cc / acc,
            });
        }
    }
    let opts = ctx.cfg.coincidence();
    let r = count_coincidences(&s, &i, opts)?;
    let pull = match (&r.car, model.get("car").and_then(|v| v.as_f64())) {
        (Some(c), Some(m)) if c.sigma > 0.0 => Some((c.value - m) / c.sigma),
        _ => None,
    };
    let h = cross_correlation_histogram(&s, &i, bin_width_ps, range_ps)?;
    let rows: Vec<HistogramRow> = h
        .centers_ps()
        .zip(&h.counts)
        .map(|(delay_ps, &counts)| HistogramRow { delay_ps, counts })
        .collect();
    write_csv(&ctx.path("delay_histogram.csv"), &rows)?;
    let summary = json!({
        "coincidences": r,
        "model": model,
        "car_pull_sigma": pull,
        "histogram_out_of_range": h.out_of_range,
    });
    write_json(&ctx.path("analysis.json"), &summary)?;
    match r.car {
        Some(c) => println!(
            "cc {} acc {} CAR {:.4} ± {:.4}",
            r.cc_count, r.acc_count, c.value, c.sigma
        ),
        None => println!("cc {} acc {} CAR undefined", r.cc_count, r.acc_count),
    }
    Ok(())
}

#[derive(Serialize)]
struct FringeRow {
    x: f64,
    theta_i_rad: f64,
    cc_count: u64,
    acc_count: u64,
    signal_count: u64,
    duration_s: f64,
    cc_rate_cps: f64,
    cc_rate_sigma_cps: f64,
}

fn fringe(ctx: &Context, phase_grid: bool) -> Result<()> {
    let chain = ctx.chain()?;
    let e = &ctx.cfg.experiment;
    let base = FringeScan {
        theta_s: chain.signal.mzi.map_or(0.0, |m| m.phase_rad),
        quota: e.quota,
        slot_budget: e.slot_budget,
        seed: ctx.cfg.run.seed,
        coincidence: ctx.cfg.coincidence(),
        ..FringeScan::uniform(e.fringe_points, e.quota, ctx.cfg.run.seed)
    };
    let curve = if phase_grid {
        run_fringe_scan(&chain, &base)?
    } else {
        run_temperature_scan(
            &chain,
            &base,
            &ctx.cfg.temperatures(),
            e.temperature_ref_c,
            e.celsius_per_pi,
        )?
    };
    let rows: Vec<FringeRow> = curve
        .points
        .iter()
        .map(|p| FringeRow {
            x: p.x,
            theta_i_rad: p.theta_i,
            cc_count: p.cc_count,
            acc_count: p.acc_count,
            signal_count: p.signal_count,
            duration_s: p.duration_s,
            cc_rate_cps: p.rate.value,
            cc_rate_sigma_cps: p.rate.sigma,
        })
        .collect();
    write_csv(&ctx.path("fringe.csv"), &rows)?;
    let fit = fit_visibility(&curve)?;
    let factor = interferometer_factor(&chain);
    let mu = chain.source.mu_c;
    let p_in =
        slot_capture_probability(&chain.signal.detector.jitter, 1.0 / chain.source.clock_hz)?.p_in;
    write_json(
        &ctx.path("fringe_summary.json"),
        &json!({
            "mu": mu,
            "fit": fit,
            "peak_cc_rate_cps": curve.peak_rate(),
            "model_visibility_b1": expected_visibility(mu, p_in, factor),
            "model_visibility_b2": factor * visibility_multiphoton(mu),
        }),
    )?;
    ctx.write_echo()?;
    println!(
        "V = {:.4} ± {:.4} (peak/dip {:.4}), peak {:.3e} cps",
        fit.visibility.value,
        fit.visibility.sigma,
        fit.peak_dip_visibility,
        curve.peak_rate()
    );
    Ok(())
}

fn interferometer_factor(chain: &ChainConfig) -> f64 {
    match (&chain.signal.mzi, &chain.idler.mzi) {
        (Some(a), Some(b)) => pair_visibility(a, b),
        _ => 0.0,
    }
}

fn chsh(ctx: &Context) -> Result<()> {
    let chain = ctx.chain()?;
    let e = &ctx.cfg.experiment;
    let plan = ChshPlan {
        quota: e.quota,
        repeats: e.repeats,
        slot_budget: e.slot_budget,
        seed: ctx.cfg.run.seed,
        coincidence: ctx.cfg.coincidence(),
    };
    let res = run_chsh(&chain, &ctx.cfg.chsh_settings(), &plan)?;
    write_csv(&ctx.path("chsh_rates.csv"), &chsh_rows(&res))?;
    write_json(&ctx.path("chsh_summary.json"), &res)?;
    ctx.write_echo()?;
    println!(
        "S = {:.4} ± {:.2e} (repeat spread {}), violation: {}",
        res.s.s,
        res.s.sigma,
        res.sigma_repeat
            .map_or("n/a".to_string(), |s| format!("{s:.2e}")),
        res.s.violation
    );
    Ok(())
}

#[derive(Serialize)]
struct ChshRow {
    correlation: usize,
    term: usize,
    theta_s_rad: f64,
    theta_i_rad: f64,
    cc_count: u64,
    duration_s: f64,
    cc_rate_cps: f64,
    cc_rate_sigma_cps: f64,
}

fn chsh_rows(res: &crate::experiments::ChshResult) -> Vec<ChshRow> {
    res.rates
        .iter()
        .map(|r| ChshRow {
            correlation: r.correlation,
            term: r.term,
            theta_s_rad: r.theta_s,
            theta_i_rad: r.theta_i,
            cc_count: r.cc_count,
            duration_s: r.duration_s,
            cc_rate_cps: r.rate.value,
            cc_rate_sigma_cps: r.rate.sigma,
        })
        .collect()
}

#[derive(Serialize)]
struct CarRow {
    mu: f64,
    car: Option<f64>,
    car_sigma: Option<f64>,
    model_car: f64,
    cc_count: u64,
    acc_count: u64,
    cc_rate_cps: f64,
    acc_rate_cps: f64,
}

fn car_sweep(ctx: &Context) -> Result<()> {
    let chain = ctx.chain()?;
    let n = ctx.cfg.run.n_slots;
    let runs: Vec<(f64, u64)> = ctx
        .cfg
        .experiment
        .car_mu_grid
        .iter()
        .map(|&m| (m, n))
        .collect();
    let curve = run_car_sweep(&chain, &runs, ctx.cfg.run.seed, ctx.cfg.coincidence())?;
    let rows: Vec<CarRow> = curve
        .points
        .iter()
        .map(|p| CarRow {
            mu: p.mu,
            car: p.car.map(|c| c.value),
            car_sigma: p.car.map(|c| c.sigma),
            model_car: p.model,
            cc_count: p.result.cc_count,
            acc_count: p.result.acc_count,
            cc_rate_cps: p.result.cc_rate,
            acc_rate_cps: p.result.acc_rate,
        })
        .collect();
    write_csv(&ctx.path("car.csv"), &rows)?;
    write_json(&ctx.path("car_summary.json"), &curve)?;
    ctx.write_echo()?;
    Ok(())
}

#[derive(Serialize)]
struct SaturationRow {
    mu: f64,
    dead_slots: u32,
    n_slots: u64,
    cc_per_pulse: f64,
    cc_per_pulse_sigma: f64,
    analytic_per_pulse: f64,
    slotted_per_pulse: f64,
}

fn saturation(ctx: &Context) -> Result<()> {
    let e = &ctx.cfg.experiment;
    let pts = run_saturation_sweep(
        &e.saturation_mu_grid,
        &e.saturation_dead_slots,
        e.saturation_n_slots,
        ctx.cfg.run.seed,
    )?;
    let rows: Vec<SaturationRow> = pts
        .iter()
        .map(|p| SaturationRow {
            mu: p.mu,
            dead_slots: p.dead_slots,
            n_slots: p.n_slots,
            cc_per_pulse: p.measured.value,
            cc_per_pulse_sigma: p.measured.sigma,
            analytic_per_pulse: p.analytic,
            slotted_per_pulse: p.slotted,
        })
        .collect();
    write_csv(&ctx.path("saturation.csv"), &rows)?;
    ctx.write_echo()?;
    Ok(())
}

#[derive(Serialize)]
struct VisibilityRow {
    mu: f64,
    jitter_fwhm_s: f64,
    visibility: f64,
    visibility_sigma: f64,
    peak_dip_visibility: f64,
    peak_cc_rate_cps: f64,
    p_in: f64,
    model_b1: f64,
    model_b2: f64,
}

fn visibility_sweep(ctx: &Context) -> Result<()> {
    let chain = ctx.chain()?;
    let e = &ctx.cfg.experiment;
    let jitters: Vec<JitterSpec> = if e.jitter_fwhm_grid_s.is_empty() {
        vec![chain.signal.detector.jitter]
    } else {
        e.jitter_fwhm_grid_s
            .iter()
            .map(|&f| JitterSpec::from_fwhm(f))
            .collect()
    };
    let scan = FringeScan {
        slot_budget: e.slot_budget,
        coincidence: ctx.cfg.coincidence(),
        ..FringeScan::uniform(e.fringe_points, e.quota, ctx.cfg.run.seed)
    };
    let pts = run_visibility_vs_mu(&chain, &e.mu_grid, &jitters, &scan)?;
    let rows: Vec<VisibilityRow> = pts
        .iter()
        .map(|p| VisibilityRow {
            mu: p.mu,
            jitter_fwhm_s: p.jitter_fwhm_s,
            visibility: p.fit.visibility.value,
            visibility_sigma: p.fit.visibility.sigma,
            peak_dip_visibility: p.fit.peak_dip_visibility,
            peak_cc_rate_cps: p.peak_cc_rate,
            p_in: p.p_in,
            model_b1: p.model_b1,
            model_b2: p.model_b2,
        })
        .collect();
    write_csv(&ctx.path("visibility.csv"), &rows)?;
    ctx.write_echo()?;
    Ok(())
}

#[derive(Serialize)]
struct TapRow {
    tap: usize,
    counts: u64,
    estimated_width_ps: f64,
    injected_width_ps: Option<f64>,
}

fn tdc_calibrate(
    ctx: &Context,
    stream: Option<&Path>,
    arrivals: u64,
    dnl: Option<f64>,
) -> Result<()> {
    let mut tdc = ctx.chain()?.signal.tdc;
    let (counts, injected, estimated) = match stream {
        Some(p) => {
            let (_, s) = read_stream(p)?;
            let mut counts = vec![0u64; tdc.tap_count];
            for &t in s.times() {
                counts[nominal_code(t, &tdc)] += 1;
            }
            let est = crate::sim::code_density(&counts, tdc.coarse_clock_hz)?;
            (counts, None, est)
        }
        None => {
            let uniform =
                TdcChannelParams::uniform(tdc.tap_count, tdc.coarse_clock_hz).tap_widths_s;
            if let Some(a) = dnl.filter(|_| tdc.tap_widths_s == uniform) {
                tdc = tdc.with_sawtooth_dnl(a, ctx.cfg.signal_tdc.dnl_period_taps);
            }
            let cal = run_code_density(&tdc, arrivals, 1e6, ctx.cfg.run.seed)?;
            (cal.counts, Some(cal.true_widths_s), cal.estimated_widths_s)
        }
    };
    let rows: Vec<TapRow> = (0..tdc.tap_count)
        .map(|k| TapRow {
            tap: k,
            counts: counts[k],
            estimated_width_ps: estimated[k] * 1e12,
            injected_width_ps: injected.as_ref().map(|w| w[k] * 1e12),
        })
        .collect();
    write_csv(&ctx.path("tdc_widths.csv"), &rows)?;
    let max_rel = injected.as_ref().map(|w| {
        estimated
            .iter()
            .zip(w)
            .map(|(e, w)| ((e - w) / w).abs())
            .fold(0.0, f64::max)
    });
    write_json(
        &ctx.path("tdc_summary.json"),
        &json!({
            "hits": counts.iter().sum::<u64>(),
            "lsb_ps": tdc.lsb_ps(),
            "max_relative_error": max_rel,
        }),
    )?;
    match max_rel {
        Some(m) => println!(
            "calibrated {} taps, max relative width error {:.4}",
            tdc.tap_count, m
        ),
        None => println!(
            "histogrammed {} hits over {} taps",
            counts.iter().sum::<u64>(),
            tdc.tap_count
        ),
    }
    Ok(())
}

/// Two independent Poisson streams of `n` events at 47 Mcps on a 200-ps
/// slot grid.
pub fn synthetic_streams(n: usize, seed: u64) -> Result<(TimestampStream, TimestampStream)> {
    use rand::{Rng, SeedableRng};
    let make = |stream: u64| -> Result<TimestampStream> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let gap = 1e12 / 47e6;
        let mut t = 0.0f64;
        let times: Vec<u64> = (0..n)
            .map(|_| {
                t += -gap * (1.0 - rng.random::<f64>()).ln();
                t as u64
            })
            .collect();
        TimestampStream::new(stream as u8, ClockInfo::new(200), times)
    };
    Ok((make(0)?, make(1)?))
}

fn bench(ctx: &Context, events: usize) -> Result<()> {
    let (s, i) = synthetic_streams(events, ctx.cfg.run.seed)?;
    let start = Instant::now();
    let r = count_coincidences(&s, &i, CoincidenceOptions::default())?;
    let secs = start.elapsed().as_secs_f64();
    let throughput = (s.len() + i.len()) as f64 / secs;
    write_json(
        &ctx.path("bench.json"),
        &json!({
            "events_per_channel": events,
            "seconds": secs,
            "timestamps_per_second": throughput,
            "cc_count": r.cc_count,
            "cc_rate_cps": r.cc_rate,
        }),
    )?;
    println!(
        "{:.3e} timestamps/s ({} coincidences)",
        throughput, r.cc_count
    );
    Ok(())
}
