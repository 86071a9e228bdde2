//! Linearized quadrature fluctuations of two bright beams.
//!
//! Quadratures are `X = (k + k†)/√2`, `P = i(k† − k)/√2`, so the vacuum has
//! variance 1/2 per quadrature and `ΔX₋ ΔP₋ ≥ 1` for the differences
//! `X₋ = X_a − X_b`, `P₋ = P_a − P_b`.
//!
//! Behind a waveplate-polarizer at angle θ the number difference is
//! `cos 4θ · N₋ + sin 4θ · I` with `I = i(a†b − ab†)`. Linearizing around the
//! mean fields `(x_k, p_k) = √2 (Re α_k, Im α_k)` gives its standard deviation
//! as a quadratic form in the covariance. For equal real means `x` this is
//! `|x| ΔX₋` at θ = 0 and `|x| ΔP₋` at θ = π/8, with unit prefactor: the
//! exact engine in [`crate::fock`] agrees with it to rounding for coherent
//! inputs (see [`cross_check_against_fock`]).

use std::f64::consts::SQRT_2;

use nalgebra::{Matrix4, SMatrix};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::fock::{
    apply_waveplate_polarizer, make_displaced_twin_beam, number_difference_stats, FockError,
    ModeLabel, Polarization, Port, WaveplatePolarizer, TRUNCATION_WARNING_LEVEL,
};

const VALIDITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("covariance is not symmetric (deviation {0:e})")]
    NotSymmetric(f64),
    #[error("covariance is not positive semidefinite (eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("covariance violates the uncertainty principle (eigenvalue {0:e})")]
    NotPhysical(f64),
    #[error("non-finite entry in state")]
    NonFinite,
    #[error("mean amplitudes differ ({a} vs {b}); use MeanBalance::Generalized")]
    UnbalancedMeans { a: f64, b: f64 },
    #[error("difference spectra must be positive (got {s_x}, {s_p})")]
    BadSpectra { s_x: f64, s_p: f64 },
    #[error("truncation leakage {0:e} too large for a valid comparison; raise the cutoff")]
    Truncation(f64),
    #[error(transparent)]
    Fock(#[from] FockError),
}

/// Mean fields plus covariance over `(δX_a, δP_a, δX_b, δP_b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureState {
    mean_a: Complex64,
    mean_b: Complex64,
    cov: Matrix4<f64>,
}

/// Symplectic form over `(X_a, P_a, X_b, P_b)`.
pub fn symplectic_form() -> Matrix4<f64> {
    let mut omega = Matrix4::zeros();
    omega[(0, 1)] = 1.0;
    omega[(1, 0)] = -1.0;
    omega[(2, 3)] = 1.0;
    omega[(3, 2)] = -1.0;
    omega
}

/// Check `cov` is symmetric, PSD and satisfies `cov + (i/2)Ω ⪰ 0`.
pub fn validate_covariance(cov: &Matrix4<f64>) -> Result<(), QuadratureError> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(QuadratureError::NonFinite);
    }
    let scale = cov.amax().max(1.0);
    let asym = (cov - cov.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(QuadratureError::NotSymmetric(asym));
    }
    let min_eig = cov.symmetric_eigenvalues().min();
    if min_eig < -VALIDITY_TOL * scale {
        return Err(QuadratureError::NotPositive(min_eig));
    }
    // Hermitian cov + (i/2)Ω embedded as the real matrix [[A, -B], [B, A]].
    let b = symplectic_form() * 0.5;
    let mut embed = SMatrix::<f64, 8, 8>::zeros();
    embed.fixed_view_mut::<4, 4>(0, 0).copy_from(cov);
    embed.fixed_view_mut::<4, 4>(4, 4).copy_from(cov);
    embed.fixed_view_mut::<4, 4>(0, 4).copy_from(&(-b));
    embed.fixed_view_mut::<4, 4>(4, 0).copy_from(&b);
    let min_phys = embed.symmetric_eigenvalues().min();
    if min_phys < -VALIDITY_TOL * scale {
        return Err(QuadratureError::NotPhysical(min_phys));
    }
    Ok(())
}

impl QuadratureState {
    pub fn new(
        mean_a: Complex64,
        mean_b: Complex64,
        cov: Matrix4<f64>,
    ) -> Result<Self, QuadratureError> {
        if !(mean_a.re.is_finite()
            && mean_a.im.is_finite()
            && mean_b.re.is_finite()
            && mean_b.im.is_finite())
        {
            return Err(QuadratureError::NonFinite);
        }
        validate_covariance(&cov)?;
        Ok(QuadratureState {
            mean_a,
            mean_b,
            cov,
        })
    }

    /// Coherent states: vacuum-level fluctuations around the given means.
    pub fn vacuum(mean_a: Complex64, mean_b: Complex64) -> Self {
        QuadratureState {
            mean_a,
            mean_b,
            cov: Matrix4::identity() * 0.5,
        }
    }

    /// Two-mode squeezing `r` with equal means: `Var X₋ = e^{−2r}`,
    /// `Var P₋ = e^{2r}`.
    pub fn twin_squeezed(mean: Complex64, r: f64) -> Self {
        let (ch, sh) = ((2.0 * r).cosh() / 2.0, (2.0 * r).sinh() / 2.0);
        #[rustfmt::skip]
        let cov = Matrix4::new(
            ch, 0.0, sh, 0.0,
            0.0, ch, 0.0, -sh,
            sh, 0.0, ch, 0.0,
            0.0, -sh, 0.0, ch,
        );
        QuadratureState {
            mean_a: mean,
            mean_b: mean,
            cov,
        }
    }

    /// Equal-mean state whose difference variances are `s_x` and `s_p`
    /// (in units where coherent light gives 1), with vacuum-level sum
    /// quadratures. This is the bridge from the normalized OPO spectra.
    pub fn from_difference_spectra(
        mean: Complex64,
        s_x: f64,
        s_p: f64,
    ) -> Result<Self, QuadratureError> {
        if !(s_x > 0.0 && s_p > 0.0) {
            return Err(QuadratureError::BadSpectra { s_x, s_p });
        }
        // X_a = (X₊ + X₋)/2, X_b = (X₊ − X₋)/2 with Var X₊ = 1.
        let (vx, cx) = ((1.0 + s_x) / 4.0, (1.0 - s_x) / 4.0);
        let (vp, cp) = ((1.0 + s_p) / 4.0, (1.0 - s_p) / 4.0);
        #[rustfmt::skip]
        let cov = Matrix4::new(
            vx, 0.0, cx, 0.0,
            0.0, vp, 0.0, cp,
            cx, 0.0, vx, 0.0,
            0.0, cp, 0.0, vp,
        );
        QuadratureState::new(mean, mean, cov)
    }

    pub fn mean_a(&self) -> Complex64 {
        self.mean_a
    }

    pub fn mean_b(&self) -> Complex64 {
        self.mean_b
    }

    pub fn cov(&self) -> &Matrix4<f64> {
        &self.cov
    }

    /// `(x_a, p_a, x_b, p_b)`.
    pub fn mean_quadratures(&self) -> [f64; 4] {
        [
            SQRT_2 * self.mean_a.re,
            SQRT_2 * self.mean_a.im,
            SQRT_2 * self.mean_b.re,
            SQRT_2 * self.mean_b.im,
        ]
    }

    /// Same means, covariance with the `X` and `P` roles exchanged on both
    /// modes.
    pub fn with_quadratures_exchanged(&self) -> Self {
        let perm = [1, 0, 3, 2];
        let cov = Matrix4::from_fn(|i, j| self.cov[(perm[i], perm[j])]);
        QuadratureState { cov, ..self.clone() }
    }

    fn quadratic_form(&self, g: &[f64; 4]) -> f64 {
        let v = nalgebra::Vector4::from_column_slice(g);
        (v.transpose() * self.cov * v)[(0, 0)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DifferenceStats {
    pub dx_minus: f64,
    pub dp_minus: f64,
}

impl DifferenceStats {
    pub fn heisenberg_product(&self) -> f64 {
        self.dx_minus * self.dp_minus
    }
}

/// `ΔX₋` and `ΔP₋` read from the covariance.
pub fn quadrature_difference_stds(state: &QuadratureState) -> DifferenceStats {
    let var_x = state.quadratic_form(&[1.0, 0.0, -1.0, 0.0]);
    let var_p = state.quadratic_form(&[0.0, 1.0, 0.0, -1.0]);
    DifferenceStats {
        dx_minus: var_x.max(0.0).sqrt(),
        dp_minus: var_p.max(0.0).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanBalance {
    /// Require `|α_a| = |α_b|`.
    #[default]
    Balanced,
    /// Accept any means.
    Generalized,
}

/// Gradient of `cos 4θ · N₋ + sin 4θ · I` with respect to
/// `(δX_a, δP_a, δX_b, δP_b)` at the mean fields.
fn number_difference_gradient(means: [f64; 4], theta: f64) -> [f64; 4] {
    let [xa, pa, xb, pb] = means;
    let (s, c) = (4.0 * theta).sin_cos();
    [
        c * xa - s * pb,
        c * pa + s * xb,
        -c * xb + s * pa,
        -c * pb - s * xa,
    ]
}

/// Linearized standard deviation of `n_c − n_d` behind a waveplate-polarizer
/// at angle `theta`.
pub fn number_difference_std(
    state: &QuadratureState,
    theta: f64,
    balance: MeanBalance,
) -> Result<f64, QuadratureError> {
    let (a, b) = (state.mean_a.norm(), state.mean_b.norm());
    if balance == MeanBalance::Balanced && (a - b).abs() > 1e-9 * a.max(b).max(1.0) {
        return Err(QuadratureError::UnbalancedMeans { a, b });
    }
    let g = number_difference_gradient(state.mean_quadratures(), theta);
    Ok(state.quadratic_form(&g).max(0.0).sqrt())
}

/// Fluctuations riding on the coherent amplitude in [`cross_check_against_fock`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluctuationModel {
    /// Coherent states on both beams.
    Vacuum,
    /// Displaced two-mode squeezed vacuum with squeezing parameter `r`.
    TwinSqueezed { r: f64 },
}

impl FluctuationModel {
    fn squeeze(&self) -> f64 {
        match *self {
            FluctuationModel::Vacuum => 0.0,
            FluctuationModel::TwinSqueezed { r } => r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossCheck {
    pub linearized: f64,
    pub exact: f64,
    pub relative_error: f64,
    pub leakage: f64,
}

/// Compare the linearized `ΔN₋(θ)` with the exact Fock-space value for two
/// cross-polarized beams of equal amplitude `alpha`.
///
/// For coherent inputs the two agree up to truncation and rounding, since
/// every second-order term of a passive number difference vanishes on the
/// vacuum. Squeezed fluctuations leave a second-order residue that falls off
/// as `1/|α|²` relative to the linear term.
pub fn cross_check_against_fock(
    alpha: Complex64,
    model: FluctuationModel,
    theta: f64,
    cutoff: usize,
) -> Result<CrossCheck, QuadratureError> {
    let r = model.squeeze();
    let labels = [
        ModeLabel::new(Port::A, Polarization::H, 0),
        ModeLabel::new(Port::A, Polarization::V, 0),
    ];
    let input = make_displaced_twin_beam(alpha, r, labels, cutoff)?;
    if input.leakage > TRUNCATION_WARNING_LEVEL {
        return Err(QuadratureError::Truncation(input.leakage));
    }
    let out = apply_waveplate_polarizer(&input.state, &WaveplatePolarizer::new(theta))?;
    let exact = number_difference_stats(&out, Port::C, Port::D)?.std_dev();

    let linear_state = QuadratureState::twin_squeezed(alpha, r);
    let linearized = number_difference_std(&linear_state, theta, MeanBalance::Balanced)?;

    let scale = exact.abs().max(linearized.abs());
    let relative_error = if scale < 1e-12 {
        0.0
    } else {
        (linearized - exact).abs() / exact.abs().max(1e-300)
    };
    Ok(CrossCheck {
        linearized,
        exact,
        relative_error,
        leakage: input.leakage,
    })
}

/// Random symplectic matrices and physical covariances, for sweeps and
/// property tests. Validity holds by construction.
pub mod random {
    use super::*;

    fn local_rotation(phi_a: f64, phi_b: f64) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        for (k, phi) in [(0, phi_a), (2, phi_b)] {
            let (s, c) = phi.sin_cos();
            m[(k, k)] = c;
            m[(k, k + 1)] = s;
            m[(k + 1, k)] = -s;
            m[(k + 1, k + 1)] = c;
        }
        m
    }

    fn mixer(tau: f64) -> Matrix4<f64> {
        let (s, c) = tau.sin_cos();
        let mut m = Matrix4::zeros();
        for k in 0..2 {
            m[(k, k)] = c;
            m[(k, k + 2)] = s;
            m[(k + 2, k)] = -s;
            m[(k + 2, k + 2)] = c;
        }
        m
    }

    fn squeezer(s_a: f64, s_b: f64) -> Matrix4<f64> {
        Matrix4::from_diagonal(&nalgebra::Vector4::new(
            (-s_a).exp(),
            s_a.exp(),
            (-s_b).exp(),
            s_b.exp(),
        ))
    }

    /// Product of random rotations, mixers and squeezers (|s| ≤ `max_squeeze`).
    pub fn symplectic<R: Rng + ?Sized>(rng: &mut R, max_squeeze: f64) -> Matrix4<f64> {
        let angle = |rng: &mut R| rng.random_range(0.0..std::f64::consts::TAU);
        let mut s = Matrix4::identity();
        for _ in 0..3 {
            let sq = squeezer(
                rng.random_range(-max_squeeze..=max_squeeze),
                rng.random_range(-max_squeeze..=max_squeeze),
            );
            let rot = local_rotation(angle(rng), angle(rng));
            let mix = mixer(angle(rng));
            s = rot * mix * sq * s;
        }
        s
    }

    /// `S diag(ν_a, ν_a, ν_b, ν_b) Sᵀ` with thermal factors `ν ≥ 1/2` and
    /// random means of magnitude up to `max_mean`.
    pub fn state<R: Rng + ?Sized>(
        rng: &mut R,
        max_squeeze: f64,
        max_mean: f64,
    ) -> QuadratureState {
        let s = symplectic(rng, max_squeeze);
        let nu_a = 0.5 + rng.random_range(0.0..1.0f64).powi(2);
        let nu_b = 0.5 + rng.random_range(0.0..1.0f64).powi(2);
        let d = Matrix4::from_diagonal(&nalgebra::Vector4::new(nu_a, nu_a, nu_b, nu_b));
        let mut cov = s * d * s.transpose();
        cov = (cov + cov.transpose()) * 0.5;
        let mean = |rng: &mut R| {
            Complex64::from_polar(
                rng.random_range(0.0..=max_mean),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        };
        QuadratureState {
            mean_a: mean(rng),
            mean_b: mean(rng),
            cov,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};

    fn real(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn vacuum_differences_are_unity() {
        let s = quadrature_difference_stds(&QuadratureState::vacuum(real(0.0), real(0.0)));
        assert_abs_diff_eq!(s.dx_minus, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.dp_minus, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn strong_twin_correlation_kills_x_difference() {
        let s = quadrature_difference_stds(&QuadratureState::twin_squeezed(real(0.0), 4.0));
        assert!(s.dx_minus < 2e-2);
        assert_abs_diff_eq!(s.heisenberg_product(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn opo_bridge_reproduces_difference_spectra() {
        let (xi, u) = (0.72, 0.8);
        let s_x = 1.0 - xi / (1.0 + u * u);
        let s_p = 1.0 + xi / (u * u);
        let st = QuadratureState::from_difference_spectra(real(10.0), s_x, s_p).unwrap();
        let d = quadrature_difference_stds(&st);
        assert_abs_diff_eq!(d.dx_minus.powi(2), s_x, epsilon = 1e-14);
        assert_abs_diff_eq!(d.dp_minus.powi(2), s_p, epsilon = 1e-14);
        // below the uncertainty bound is rejected
        assert!(matches!(
            QuadratureState::from_difference_spectra(real(1.0), 0.5, 1.5),
            Err(QuadratureError::NotPhysical(_))
        ));
    }

    #[test]
    fn validation_errors() {
        let mut cov = Matrix4::identity() * 0.5;
        cov[(0, 1)] = 0.1;
        assert!(matches!(
            QuadratureState::new(real(0.0), real(0.0), cov),
            Err(QuadratureError::NotSymmetric(_))
        ));
        let neg = Matrix4::identity() * -0.1;
        assert!(matches!(
            QuadratureState::new(real(0.0), real(0.0), neg),
            Err(QuadratureError::NotPositive(_))
        ));
        // classical but sub-vacuum: PSD, not physical
        let sub = Matrix4::identity() * 0.3;
        assert!(matches!(
            QuadratureState::new(real(0.0), real(0.0), sub),
            Err(QuadratureError::NotPhysical(_))
        ));
    }

    #[test]
    fn special_angles_match_closed_forms() {
        let x = 7.0;
        let st = QuadratureState::twin_squeezed(real(x / SQRT_2), 0.4);
        let d = quadrature_difference_stds(&st);
        let at = |theta| number_difference_std(&st, theta, MeanBalance::Balanced).unwrap();
        assert_abs_diff_eq!(at(0.0), x * d.dx_minus, epsilon = 1e-12);
        assert_abs_diff_eq!(at(FRAC_PI_8), x * d.dp_minus, epsilon = 1e-12);
        assert_abs_diff_eq!(at(FRAC_PI_4), at(0.0), epsilon = 1e-12);
        assert!(at(0.0) < x && at(FRAC_PI_8) > x);
    }

    #[test]
    fn unbalanced_means_need_flag() {
        let st = QuadratureState::vacuum(real(2.0), real(1.0));
        assert!(matches!(
            number_difference_std(&st, 0.0, MeanBalance::Balanced),
            Err(QuadratureError::UnbalancedMeans { .. })
        ));
        // coherent: Var(N_a − N_b) = |α_a|² + |α_b|²
        let v = number_difference_std(&st, 0.0, MeanBalance::Generalized).unwrap();
        assert_abs_diff_eq!(v, 5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn random_symplectic_preserves_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let omega = symplectic_form();
        for _ in 0..50 {
            let s = random::symplectic(&mut rng, 1.5);
            assert!((s * omega * s.transpose() - omega).amax() < 1e-10);
            let st = random::state(&mut rng, 1.5, 3.0);
            validate_covariance(st.cov()).unwrap();
        }
    }

    #[test]
    fn coherent_linearization_is_exact() {
        for theta in [0.0, 0.1, FRAC_PI_8] {
            let cc = cross_check_against_fock(real(2.0), FluctuationModel::Vacuum, theta, 32).unwrap();
            assert_abs_diff_eq!(cc.exact, 2.0 * SQRT_2, epsilon = 1e-9);
            assert!(cc.relative_error < 1e-9, "{cc:?}");
        }
        let zero = cross_check_against_fock(real(0.0), FluctuationModel::Vacuum, FRAC_PI_8, 4).unwrap();
        assert_eq!(zero.exact, 0.0);
        assert_eq!(zero.linearized, 0.0);
        assert_eq!(zero.relative_error, 0.0);
    }

    #[test]
    fn squeezed_residual_matches_second_order_term() {
        // Exact Var at π/8 = 2α²e^{2r} + sinh²(2r); linear drops the last term.
        let (alpha, r) = (2.0, 0.5);
        let cc = cross_check_against_fock(real(alpha), FluctuationModel::TwinSqueezed { r }, FRAC_PI_8, 60)
            .unwrap();
        let lin = (2.0 * alpha * alpha * (2.0 * r).exp()).sqrt();
        let exact = (lin * lin + (2.0 * r).sinh().powi(2)).sqrt();
        assert_abs_diff_eq!(cc.linearized, lin, epsilon = 1e-12);
        assert_abs_diff_eq!(cc.exact, exact, epsilon = 1e-8);
    }

    #[test]
    fn cross_check_refuses_lossy_truncation() {
        assert!(matches!(
            cross_check_against_fock(real(3.0), FluctuationModel::Vacuum, 0.0, 20),
            Err(QuadratureError::Fock(FockError::TruncationUnsafe { .. }))
        ));
    }
}
