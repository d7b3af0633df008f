use timebin::coincidence::{count_coincidences, CoincidenceOptions};
use timebin::experiments::{
    fit_visibility, run_temperature_scan, simulate_until_quota, FringeScan,
};
use timebin::io::{read_stream, write_stream, RunConfig};
use timebin::model::{car, ChannelParams};
use timebin::sim::{simulate_chain, ChainConfig, SimRun};

#[test]
fn lossy_chain_car_through_files() {
    let mut cfg = ChainConfig::default().with_mu(0.02);
    cfg.signal.mzi = None;
    cfg.idler.mzi = None;
    let run = SimRun::new(17, 40_000_000);
    let out = simulate_chain(&cfg, &run).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let (ps, pi) = (dir.path().join("s.pts"), dir.path().join("i.pts"));
    write_stream(&ps, &out.signal, run.seed).unwrap();
    write_stream(&pi, &out.idler, run.seed).unwrap();
    let (hs, s) = read_stream(&ps).unwrap();
    let (_, i) = read_stream(&pi).unwrap();
    assert_eq!(hs.count as usize, out.signal.len());
    let (s, i) = (s.with_span(run.span_ps()), i.with_span(run.span_ps()));

    // Accidental window placed beyond the 2 ns TDC dead time.
    let opts = CoincidenceOptions {
        accidental_offset_slots: 20,
        ..CoincidenceOptions::default()
    };
    let r = count_coincidences(&s, &i, opts).unwrap();
    let direct = count_coincidences(&out.signal, &out.idler, opts).unwrap();
    assert_eq!(r.cc_count, direct.cc_count);

    let eff = |a: &timebin::sim::ArmConfig| {
        let eta = a.detector.efficiency;
        ChannelParams::new(a.optics().survival() * eta, a.channel.dark_prob * eta)
    };
    let model = car(&cfg.source, &eff(&cfg.signal), &eff(&cfg.idler)).unwrap();
    let c = r.car.unwrap();
    assert!(c.within(model, 3.0), "{c:?} vs {model}");
}

#[test]
fn quota_runs_stop_at_the_quota() {
    let cfg = ChainConfig::default().with_mu(0.01);
    let out = simulate_until_quota(&cfg, 5, 50_000, 1 << 40).unwrap();
    assert_eq!(out.signal.len(), 50_000);
    let again = simulate_until_quota(&cfg, 5, 50_000, 1 << 40).unwrap();
    assert_eq!(out.signal.times(), again.signal.times());
    assert_eq!(out.idler.times(), again.idler.times());
    assert!(simulate_until_quota(&cfg, 5, 50_000, 1_000_000).is_err());
}

#[test]
fn configured_temperature_scan_fits() {
    let rc = RunConfig::default();
    let mut chain = rc.chain().unwrap().with_mu(0.005);
    chain.source_width_fwhm_s = 20e-12;
    let e = &rc.experiment;
    let scan = FringeScan::uniform(e.fringe_points, 20_000, 9);
    let curve = run_temperature_scan(
        &chain,
        &scan,
        &rc.temperatures(),
        e.temperature_ref_c,
        e.celsius_per_pi,
    )
    .unwrap();
    assert_eq!(curve.points.len(), 31);
    assert!((curve.points[0].x - 43.0).abs() < 1e-9);
    let fit = fit_visibility(&curve).unwrap();
    let model = 0.95 / (1.0 + 2.0 * 0.005);
    assert!(
        fit.visibility.within(model, 4.0),
        "{:?} vs {model}",
        fit.visibility
    );
}
