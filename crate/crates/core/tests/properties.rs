use std::f64::consts::{FRAC_PI_8, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use twinbeam::fit::{
    add_noise_floor, fit_intensity_spectrum, stepped_grid, subtract_noise_floor, synth_trace,
    FitConfig, SpectrumTrace,
};
use twinbeam::fock::{
    apply_beam_splitter, make_fock, make_twin_mode_mixture, number_difference_stats,
    BeamSplitter, Convention, ModeLabel, MultimodeState, Polarization, Port,
};
use twinbeam::quadrature::{
    number_difference_std, quadrature_difference_stds, random, MeanBalance, QuadratureState,
};
use twinbeam::spectra::{
    intensity_diff_spectrum, phase_diff_spectrum, uncertainty_excess, uncertainty_product,
    OpoParams, SpectrumKind,
};

fn ndiff(state: &MultimodeState, bs: &BeamSplitter) -> twinbeam::fock::ScatterOutcome {
    let out = apply_beam_splitter(state, bs).unwrap();
    number_difference_stats(&out, Port::C, Port::D).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_port_number_states_give_classical_variance(n in 0usize..=8) {
        let s = ndiff(&make_fock(n, 0, n.max(1)).unwrap(), &BeamSplitter::balanced());
        prop_assert!((s.variance - n as f64).abs() < 1e-10);
    }

    #[test]
    fn twin_number_states_give_heisenberg_variance(n in 0usize..=6) {
        let s = ndiff(&make_fock(n, n, (2 * n).max(1)).unwrap(), &BeamSplitter::balanced());
        let want = 2.0 * (n * (n + 1)) as f64;
        prop_assert!((s.variance - want).abs() < 1e-9 * want.max(1.0));
    }

    #[test]
    fn splitter_preserves_norm(na in 0usize..4, nb in 0usize..4, angle in 0.0..PI) {
        let bs = BeamSplitter::balanced().with_angle(angle);
        let out = apply_beam_splitter(&make_fock(na, nb, (na + nb).max(1)).unwrap(), &bs).unwrap();
        prop_assert!((out.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conventions_agree_on_number_states(na in 0usize..5, nb in 0usize..5, angle in 0.0..PI) {
        let s = make_fock(na, nb, (na + nb).max(1)).unwrap();
        let bs = BeamSplitter::balanced().with_angle(angle);
        let a = ndiff(&s, &bs);
        let b = ndiff(&s, &bs.with_convention(Convention::Rotation));
        prop_assert_eq!(a.distribution.len(), b.distribution.len());
        for (k, p) in &a.distribution {
            prop_assert!((p - b.distribution[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_statistics_ignore_coherences(
        re in prop::collection::vec(-1.0f64..1.0, 4),
        im in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        // rank-one weights with every coherence populated
        let v: Vec<Complex64> = re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)).collect();
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        prop_assume!(norm > 1e-3);
        let w = DMatrix::from_fn(4, 4, |i, j| v[i] * v[j].conj() / norm);
        let diag = DMatrix::from_fn(4, 4, |i, j| if i == j { w[(i, i)] } else { Complex64::new(0.0, 0.0) });
        let bs = BeamSplitter::balanced();
        let full = ndiff(&make_twin_mode_mixture(&w, 6).unwrap(), &bs);
        let stripped = ndiff(&make_twin_mode_mixture(&diag, 6).unwrap(), &bs);
        let weighted: f64 = (0..4).map(|n| w[(n, n)].re * 2.0 * (n * (n + 1)) as f64).sum();
        prop_assert!((full.variance - stripped.variance).abs() < 1e-10);
        prop_assert!((full.variance - weighted).abs() < 1e-10);
    }

    #[test]
    fn different_tags_scatter_uniformly(tag in 1u8..8) {
        let s = MultimodeState::fock(
            vec![ModeLabel::new(Port::A, Polarization::H, 0), ModeLabel::new(Port::B, Polarization::H, tag)],
            &[1, 1],
            1,
        ).unwrap();
        let d = ndiff(&s, &BeamSplitter::balanced()).distribution;
        prop_assert!((d[&-2] - 0.25).abs() < 1e-14);
        prop_assert!((d[&0] - 0.5).abs() < 1e-14);
        prop_assert!((d[&2] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn heisenberg_product_holds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = random::state(&mut rng, 1.5, 5.0);
        prop_assert!(quadrature_difference_stds(&st).heisenberg_product() >= 1.0 - 1e-9);
    }

    #[test]
    fn eighth_wave_exchanges_quadrature_roles(seed in any::<u64>(), x in 0.1f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cov = *random::state(&mut rng, 1.0, 0.0).cov();
        let mean = Complex64::new(x, 0.0);
        let st = QuadratureState::new(mean, mean, cov).unwrap();
        let at_eighth = number_difference_std(&st, FRAC_PI_8, MeanBalance::Balanced).unwrap();
        let swapped = number_difference_std(&st.with_quadratures_exchanged(), 0.0, MeanBalance::Balanced).unwrap();
        prop_assert!((at_eighth - swapped).abs() < 1e-9 * at_eighth.max(1.0));
    }

    #[test]
    fn intensity_spectrum_is_bounded_and_increasing(u in 0.0f64..50.0, du in 1e-3f64..5.0, xi in 1e-3f64..=1.0) {
        let s = intensity_diff_spectrum(u, xi);
        prop_assert!(s >= 1.0 - xi - 1e-15 && s <= 1.0);
        prop_assert!(intensity_diff_spectrum(u + du, xi) > s);
    }

    #[test]
    fn phase_spectrum_is_above_shot_noise_and_decreasing(u in 1e-3f64..50.0, du in 1e-3f64..5.0, xi in 1e-3f64..=1.0) {
        let s = phase_diff_spectrum(u, xi).unwrap();
        prop_assert!(s >= 1.0);
        prop_assert!(phase_diff_spectrum(u + du, xi).unwrap() < s);
    }

    #[test]
    fn product_identity(u in 1e-2f64..100.0, xi in 0.0f64..=1.0) {
        let p = uncertainty_product(u, xi).unwrap();
        prop_assert!((p - 1.0 - uncertainty_excess(u, xi).unwrap()).abs() < 1e-12);
        prop_assert!(p >= 1.0 - 1e-15);
    }

    #[test]
    fn empty_exclusion_band_changes_nothing(seed in any::<u64>(), k in 0usize..300) {
        let grid = stepped_grid(0.5e6, 10e6, 30e3);
        let p = OpoParams::new(-79.0, 0.72, 2.98e6).unwrap();
        let t = synth_trace(&p, SpectrumKind::Intensity, &grid, 0.2, seed).unwrap();
        let base = FitConfig::default();
        let mut cfg = base.clone();
        // a band strictly between two grid points
        cfg.exclusions_hz.push((grid[k] + 1.0, grid[k] + 2.0));
        prop_assert_eq!(fit_intensity_spectrum(&t, &base).unwrap(), fit_intensity_spectrum(&t, &cfg).unwrap());
    }

    #[test]
    fn floor_subtract_then_add_is_identity(
        powers in prop::collection::vec(-90.0f64..-70.0, 2..40),
        floor_dbm in -120.0f64..-95.0,
    ) {
        let grid: Vec<f64> = (0..powers.len()).map(|i| 1e6 + i as f64 * 1e4).collect();
        let t = SpectrumTrace::from_columns(&grid, &powers).unwrap();
        let floor = SpectrumTrace::from_columns(&[0.0, 2e6], &[floor_dbm, floor_dbm - 1.0]).unwrap();
        let sub = subtract_noise_floor(&t, &floor).unwrap();
        let back = add_noise_floor(&sub.trace, &floor).unwrap();
        for (a, b) in back.points().iter().zip(t.points()) {
            prop_assert!((a.1 - b.1).abs() < 1e-10);
        }
    }
}

/// Estimator consistency: the error shrinks with the noise level.
#[test]
fn fit_error_shrinks_with_noise() {
    let p = OpoParams::new(-79.0, 0.72, 2.98e6).unwrap();
    let grid = stepped_grid(0.5e6, 10e6, 30e3);
    let mut last = f64::INFINITY;
    for noise in [0.5, 0.1, 0.02] {
        let mut worst = 0.0f64;
        for seed in 0..20 {
            let t = synth_trace(&p, SpectrumKind::Intensity, &grid, noise, seed).unwrap();
            let r = fit_intensity_spectrum(&t, &FitConfig::default()).unwrap();
            worst = worst.max((r.xi / 0.72 - 1.0).abs()).max((r.delta_hz / 2.98e6 - 1.0).abs());
        }
        assert!(worst < last, "noise {noise}: worst error {worst} not below {last}");
        last = worst;
    }
    assert!(last < 0.01, "{last}");
}
