use std::fs::File;

use twinbeam::fit::{
    add_lorentzian_peak, fit_intensity_spectrum, load_trace, predict_phase_spectrum,
    report_squeezing, stepped_grid, synth_trace, write_trace, FitConfig,
};
use twinbeam::spectra::{OpoParams, SpectrumKind};

fn reference_params() -> OpoParams {
    OpoParams::new(-79.0, 0.72, 2.98e6).unwrap()
}

#[test]
fn excluded_spur_does_not_move_the_fit() {
    let grid = stepped_grid(0.5e6, 10e6, 30e3);
    let clean = synth_trace(&reference_params(), SpectrumKind::Intensity, &grid, 0.2, 17).unwrap();
    let spurred = add_lorentzian_peak(&clean, 3.9e6, 10e3, 12.0);
    let cfg = FitConfig::default();
    let a = fit_intensity_spectrum(&clean, &cfg).unwrap();
    let b = fit_intensity_spectrum(&spurred, &cfg).unwrap();
    assert!((a.xi / b.xi - 1.0).abs() < 0.005, "{a:?} {b:?}");
    assert!((a.delta_hz / b.delta_hz - 1.0).abs() < 0.005, "{a:?} {b:?}");

    // without the exclusion the spur biases the fit
    let open = FitConfig {
        exclusions_hz: vec![(0.0, 2e6)],
        ..FitConfig::default()
    };
    let c = fit_intensity_spectrum(&spurred, &open).unwrap();
    assert!(c.rms_residual_db > a.rms_residual_db);
}

#[test]
fn trace_file_roundtrip_then_fit() {
    let grid = stepped_grid(0.5e6, 10e6, 30e3);
    let t = synth_trace(&reference_params(), SpectrumKind::Intensity, &grid, 0.0, 0)
        .unwrap()
        .with_rbw(30e3);
    let path = std::env::temp_dir().join(format!("twinbeam-trace-{}.csv", std::process::id()));
    write_trace(&t, File::create(&path).unwrap()).unwrap();
    let back = load_trace(File::open(&path).unwrap()).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert_eq!(back, t);
    assert_eq!(back.len(), 317);

    let fit = fit_intensity_spectrum(&back, &FitConfig::default()).unwrap();
    assert!((fit.xi / 0.72 - 1.0).abs() < 1e-6);
    let json = serde_json::to_value(&fit).unwrap();
    for key in ["s0_dbm", "xi", "delta_hz", "rms_residual_db", "points_used"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    let report = report_squeezing(&back, &fit, None).unwrap();
    assert!((report.dc_raw.db().unwrap() + 5.53).abs() < 0.01);
    let phase = predict_phase_spectrum(&fit, &[2.98e6]).unwrap();
    assert!((phase.values()[0] - (-79.0 + 10.0 * 1.72f64.log10())).abs() < 1e-5);
}
