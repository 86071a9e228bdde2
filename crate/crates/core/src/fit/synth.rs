use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::trace::SpectrumTrace;
use crate::spectra::{model_curve_dbm, OpoParams, SpectrumError, SpectrumKind};

/// Model trace in dBm with optional Gaussian noise (standard deviation
/// `noise_db`, in dB). Deterministic for a given seed; `noise_db = 0`
/// returns the exact model samples.
pub fn synth_trace(
    params: &OpoParams,
    kind: SpectrumKind,
    grid_hz: &[f64],
    noise_db: f64,
    seed: u64,
) -> Result<SpectrumTrace, SpectrumError> {
    assert!(noise_db >= 0.0 && noise_db.is_finite(), "noise must be a finite non-negative dB level");
    let curve = model_curve_dbm(params, grid_hz, kind)?;
    let mut values = curve.values().to_vec();
    if noise_db > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_db).expect("valid standard deviation");
        for v in &mut values {
            *v += normal.sample(&mut rng);
        }
    }
    let label = match kind {
        SpectrumKind::Intensity => "synthetic intensity difference",
        SpectrumKind::Phase => "synthetic phase difference",
        SpectrumKind::Flat => "synthetic shot noise",
    };
    Ok(SpectrumTrace::from_columns(grid_hz, &values)
        .expect("grid must be strictly increasing")
        .with_label(label))
}

/// Adds a Lorentzian peak of `height_db` at `center_hz` with full width
/// `width_hz`, in dB.
pub fn add_lorentzian_peak(trace: &SpectrumTrace, center_hz: f64, width_hz: f64, height_db: f64) -> SpectrumTrace {
    let hw = width_hz / 2.0;
    let points = trace
        .points()
        .iter()
        .map(|&(f, p)| (f, p + height_db / (1.0 + ((f - center_hz) / hw).powi(2))))
        .collect();
    let mut out = SpectrumTrace::new(points).expect("frequencies unchanged");
    out.rbw_hz = trace.rbw_hz;
    out.label = trace.label.clone();
    out
}
