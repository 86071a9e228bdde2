//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::{FRAC_PI_8, SQRT_2};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twinbeam::fit::{
    fit_intensity_spectrum, predict_phase_spectrum, report_squeezing, stepped_grid, synth_trace,
    FitConfig, FitResult, SpectrumTrace,
};
use twinbeam::fock::{
    apply_beam_splitter, coincidence_probability, make_fock, number_difference_stats,
    BeamSplitter, ModeLabel, MultimodeState, Polarization, Port,
};
use twinbeam::quadrature::{
    cross_check_against_fock, quadrature_difference_stds, random, FluctuationModel,
};
use twinbeam::spectra::{uncertainty_excess, uncertainty_product, OpoParams, SpectrumKind};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fit_truth() -> [OpoParams; 2] {
    [
        OpoParams::new(-79.0, 0.72, 2.98e6).unwrap(),
        OpoParams::new(-79.5, 0.5, 4.3e6).unwrap(),
    ]
}

/// 1 kHz steps over 0.5–20 MHz. The 30 kHz, 0.5–10 MHz grid of a single
/// analyzer sweep leaves about 260 usable points, too few for 2 % on ξ and δ
/// at 0.2 dB noise.
fn fit_grid() -> Vec<f64> {
    stepped_grid(0.5e6, 20e6, 1e3)
}

const NOISE_DB: f64 = 0.2;
const SEED: u64 = 1;

fn noisy_intensity(truth: &OpoParams) -> SpectrumTrace {
    synth_trace(truth, SpectrumKind::Intensity, &fit_grid(), NOISE_DB, SEED).unwrap()
}

fn hom_dichotomy() -> Outcome {
    let start = Instant::now();
    let bs = BeamSplitter::balanced();
    let same = apply_beam_splitter(&make_fock(1, 1, 2).unwrap(), &bs).unwrap();
    let tagged = MultimodeState::fock(
        vec![
            ModeLabel::new(Port::A, Polarization::H, 0),
            ModeLabel::new(Port::B, Polarization::H, 1),
        ],
        &[1, 1],
        2,
    )
    .unwrap();
    let diff = apply_beam_splitter(&tagged, &bs).unwrap();
    let c_same = coincidence_probability(&same, Port::C, Port::D).unwrap();
    let c_diff = coincidence_probability(&diff, Port::C, Port::D).unwrap();
    let d_same = number_difference_stats(&same, Port::C, Port::D).unwrap().std_dev();
    let d_diff = number_difference_stats(&diff, Port::C, Port::D).unwrap().std_dev();
    let elapsed = start.elapsed();
    let tol = 1e-12;
    let pass = c_same.abs() < tol
        && (d_same - 2.0).abs() < tol
        && (c_diff - 0.5).abs() < tol
        && (d_diff - SQRT_2).abs() < tol
        && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!("indistinguishable P_c={c_same:.1e} dN={d_same:.15}; distinguishable P_c={c_diff:.15} dN={d_diff:.15}; {elapsed:?}"),
    )
}

fn slope(ns: &[f64], ys: &[f64]) -> f64 {
    let x: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / k, y.iter().sum::<f64>() / k);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn scaling() -> Outcome {
    let start = Instant::now();
    let bs = BeamSplitter::balanced();
    let mut ok = true;
    let (mut classical, mut twin, mut ns) = (vec![], vec![], vec![]);
    for n in 1..=8usize {
        let single = number_difference_stats(&apply_beam_splitter(&make_fock(n, 0, n).unwrap(), &bs).unwrap(), Port::C, Port::D).unwrap();
        let pair = number_difference_stats(&apply_beam_splitter(&make_fock(n, n, 2 * n).unwrap(), &bs).unwrap(), Port::C, Port::D).unwrap();
        let want = 2.0 * (n * (n + 1)) as f64;
        ok &= (single.variance - n as f64).abs() < 1e-9 && (pair.variance - want).abs() < 1e-9;
        ns.push(n as f64);
        classical.push(single.std_dev());
        twin.push(pair.std_dev());
    }
    let (s_c, s_t) = (slope(&ns, &classical), slope(&ns, &twin));
    let end_slope = slope(&ns[6..], &twin[6..]);
    let elapsed = start.elapsed();
    let pass = ok && (s_c - 0.5).abs() <= 0.1 && (s_t - 1.0).abs() <= 0.1 && elapsed < Duration::from_secs(10);
    outcome(
        pass,
        format!("variances exact: {ok}; slope |N,0> {s_c:.4} (want 0.5±0.1), |N,N> {s_t:.4} (want 1±0.1, local slope at N=7..8 is {end_slope:.4}); {elapsed:?}"),
    )
}

fn squeezing_numbers() -> Outcome {
    let trace = SpectrumTrace::from_columns(&[1e6, 2e6], &[-84.0, -82.0]).unwrap();
    let mut parts = vec![];
    let mut pass = true;
    for (p, expected_db) in fit_truth().iter().zip([-5.5, -3.0]) {
        let fit = FitResult {
            s0_dbm: p.s0_dbm,
            xi: p.xi,
            delta_hz: p.delta_hz,
            rms_residual_db: 0.0,
            points_used: 0,
            covariance: None,
            iterations: 0,
            weighting: Default::default(),
            floor_dropped: 0,
            warnings: vec![],
        };
        let db = report_squeezing(&trace, &fit, None).unwrap().dc_raw.db().unwrap();
        pass &= (db - expected_db).abs() <= 0.1;
        parts.push(format!("xi={} -> {db:.3} dB (expected {expected_db})", p.xi));
    }
    outcome(pass, parts.join("; "))
}

fn uncertainty_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_abs, mut worst_rel) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let u = 10f64.powf(rng.random_range(-2.0..2.0));
        let xi = rng.random_range(0.0..=1.0);
        let lhs = uncertainty_product(u, xi).unwrap();
        let gap = (lhs - 1.0 - uncertainty_excess(u, xi).unwrap()).abs();
        worst_abs = worst_abs.max(gap);
        // the product reaches ~2500 at u = 0.01, where one ulp is 4.5e-13
        worst_rel = worst_rel.max(gap / lhs.max(1.0));
    }
    let mut worst_one = 0.0f64;
    for k in 1..=1000 {
        let u = k as f64 * 0.01;
        worst_one = worst_one.max((uncertainty_product(u, 1.0).unwrap() - 1.0).abs());
    }
    outcome(
        worst_rel <= 1e-12 && worst_one <= 1e-12,
        format!(
            "max gap to identity {worst_rel:.2e} relative ({worst_abs:.2e} absolute) over 1e4 samples, u in [0.01, 100]; max |product - 1| at xi=1 = {worst_one:.2e}"
        ),
    )
}

fn fit_roundtrip(fits: &mut Vec<FitResult>) -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = vec![];
    for truth in fit_truth() {
        let trace = noisy_intensity(&truth);
        let cfg = FitConfig::default();
        let a = fit_intensity_spectrum(&trace, &cfg).unwrap();
        let b = fit_intensity_spectrum(&noisy_intensity(&truth), &cfg).unwrap();
        let e_xi = a.xi / truth.xi - 1.0;
        let e_d = a.delta_hz / truth.delta_hz - 1.0;
        let e_s = a.s0_dbm - truth.s0_dbm;
        pass &= e_xi.abs() <= 0.02 && e_d.abs() <= 0.02 && e_s.abs() <= 0.1 && a == b;
        parts.push(format!(
            "xi {:+.2}% delta {:+.2}% S0 {:+.3} dB ({} pts, repeat identical: {})",
            100.0 * e_xi,
            100.0 * e_d,
            e_s,
            a.points_used,
            a == b
        ));
        fits.push(a);
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(5);
    outcome(pass, format!("{}; {elapsed:?}", parts.join("; ")))
}

fn phase_prediction(fits: &[FitResult]) -> Outcome {
    let cfg = FitConfig::default();
    let grid: Vec<f64> = fit_grid()
        .into_iter()
        .filter(|&f| !cfg.exclusions_hz.iter().any(|&(lo, hi)| f >= lo && f < hi))
        .collect();
    let mut pass = true;
    let mut parts = vec![];
    for (truth, fit) in fit_truth().iter().zip(fits) {
        let predicted = predict_phase_spectrum(fit, &grid).unwrap();
        let rms = |trace: &SpectrumTrace| {
            let s: f64 = trace.powers_dbm().iter().zip(predicted.values()).map(|(a, b)| (a - b).powi(2)).sum();
            (s / grid.len() as f64).sqrt()
        };
        let clean = rms(&synth_trace(truth, SpectrumKind::Phase, &grid, 0.0, 0).unwrap());
        let noisy = rms(&synth_trace(truth, SpectrumKind::Phase, &grid, NOISE_DB, SEED + 1).unwrap());
        pass &= clean <= NOISE_DB;
        parts.push(format!("xi={}: rms {clean:.4} dB vs truth model, {noisy:.4} dB vs noisy trace", truth.xi));
    }
    outcome(pass, parts.join("; "))
}

fn cross_engine() -> Outcome {
    let alphas = [1.0, 2.0, 3.0];
    let mut coherent_worst = 0.0f64;
    for &a in &alphas {
        for theta in [0.0, FRAC_PI_8] {
            let c = cross_check_against_fock(Complex64::new(a, 0.0), FluctuationModel::Vacuum, theta, 40).unwrap();
            coherent_worst = coherent_worst.max(c.relative_error);
        }
    }
    let squeezed: Vec<f64> = alphas
        .iter()
        .map(|&a| {
            cross_check_against_fock(Complex64::new(a, 0.0), FluctuationModel::TwinSqueezed { r: 0.5 }, FRAC_PI_8, 70)
                .unwrap()
                .relative_error
        })
        .collect();
    let monotone = squeezed.windows(2).all(|w| w[1] < w[0]);
    outcome(
        coherent_worst < 1e-9 && monotone && squeezed[2] < 0.05,
        format!(
            "coherent max rel. error {coherent_worst:.1e}; twin-squeezed r=0.5: {:.2}%, {:.2}%, {:.2}% at |alpha| = 1, 2, 3",
            100.0 * squeezed[0],
            100.0 * squeezed[1],
            100.0 * squeezed[2]
        ),
    )
}

fn heisenberg_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut min = f64::INFINITY;
    for _ in 0..1000 {
        let st = random::state(&mut rng, 1.5, 10.0);
        min = min.min(quadrature_difference_stds(&st).heisenberg_product());
    }
    outcome(min >= 1.0 - 1e-9, format!("min dX-·dP- = {min:.6} over 1000 states"))
}

fn main() {
    let mut fits = Vec::new();
    let results = [
        ("1 HOM dichotomy", hom_dichotomy()),
        ("2 classical vs Heisenberg scaling", scaling()),
        ("3 squeezing numbers", squeezing_numbers()),
        ("4 uncertainty-product identity", uncertainty_identity()),
        ("5 fit roundtrip", fit_roundtrip(&mut fits)),
        ("6 zero-parameter phase prediction", phase_prediction(&fits)),
        ("7 cross-engine oracle", cross_engine()),
        ("8 Heisenberg inequality suite", heisenberg_suite()),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        println!("{} criterion {name}: {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
