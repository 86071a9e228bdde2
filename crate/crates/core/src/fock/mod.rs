//! Exact photon-number-basis simulation of beam-splitter scattering.
//!
//! A [`MultimodeState`] lives on a truncated product space: every mode holds
//! at most `cutoff` photons, so the basis has `(cutoff + 1)^modes` elements.
//! Modes carry a [`ModeLabel`]; only modes with equal polarization and
//! frequency tag interfere at an optic, everything else is scattered against
//! an inserted vacuum partner.

mod optics;
mod stats;

pub use optics::{
    apply_beam_splitter, apply_waveplate_polarizer, BeamSplitter, Convention, WaveplatePolarizer,
};
pub use stats::{coincidence_probability, number_difference_stats, ScatterOutcome};

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probability lost to truncation above which a coherent-state build is
/// flagged to the caller.
pub const TRUNCATION_WARNING_LEVEL: f64 = 1e-8;

/// Norm drift tolerated after construction or after a unitary.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Probability that may be pushed above the cutoff by an optic before the
/// application is refused.
pub const OVERFLOW_TOLERANCE: f64 = 1e-10;

/// Safety factor between mean photon number and cutoff for truncated
/// Gaussian-type inputs.
pub const TRUNCATION_SAFETY_FACTOR: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("occupation {occupation} of mode {mode} exceeds cutoff {cutoff}")]
    CapacityExceeded {
        mode: ModeLabel,
        occupation: usize,
        cutoff: usize,
    },
    #[error("cutoff must be at least 1")]
    ZeroCutoff,
    #[error("expected {expected} occupations, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("mode {0} appears more than once")]
    DuplicateMode(ModeLabel),
    #[error("state space of {modes} modes at cutoff {cutoff} is too large to allocate")]
    StateTooLarge { modes: usize, cutoff: usize },
    #[error("density weights are not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("density weights have trace {0}, expected 1")]
    TraceNotOne(f64),
    #[error("density weights are not positive semidefinite (eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("density weights have dimension {dim}, cutoff allows at most {max}")]
    WeightsTooLarge { dim: usize, max: usize },
    #[error("mean photon number {mean_photons} is unsafe for cutoff {cutoff} (need cutoff >= {factor} x mean)")]
    TruncationUnsafe {
        mean_photons: f64,
        cutoff: usize,
        factor: f64,
    },
    #[error("optic pushes probability {0:e} above the cutoff; raise the cutoff")]
    Overflow(f64),
    #[error("no mode on port {0}")]
    MissingPort(Port),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

/// Spatial port. `A`/`B` are beam-splitter inputs, `C`/`D` outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Port {
    A,
    B,
    C,
    D,
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Port::A => "a",
            Port::B => "b",
            Port::C => "c",
            Port::D => "d",
        };
        f.write_str(s)
    }
}

/// Identity of a field mode.
///
/// `frequency_tag` 0 is the degenerate reference frequency; any two distinct
/// tags are treated as fully distinguishable frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeLabel {
    pub port: Port,
    pub polarization: Polarization,
    pub frequency_tag: u8,
}

impl ModeLabel {
    pub const fn new(port: Port, polarization: Polarization, frequency_tag: u8) -> Self {
        ModeLabel {
            port,
            polarization,
            frequency_tag,
        }
    }

    /// Port `port`, horizontal polarization, reference frequency.
    pub const fn degenerate(port: Port) -> Self {
        ModeLabel::new(port, Polarization::H, 0)
    }

    /// Whether two modes carry the same field apart from their spatial port.
    pub fn same_field(&self, other: &ModeLabel) -> bool {
        self.polarization == other.polarization && self.frequency_tag == other.frequency_tag
    }

    pub(crate) fn with_port(self, port: Port) -> Self {
        ModeLabel { port, ..self }
    }

    pub(crate) fn with_polarization(self, polarization: Polarization) -> Self {
        ModeLabel {
            polarization,
            ..self
        }
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{:?}:w{}",
            self.port, self.polarization, self.frequency_tag
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    PureVector,
    DensityMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Amplitudes {
    Pure(Vec<Complex64>),
    /// Row-major `dim x dim`.
    Density(Vec<Complex64>),
}

/// A state of several bosonic modes on a truncated occupation basis.
///
/// Basis index is mixed-radix in `cutoff + 1` with the first mode most
/// significant. Values are immutable; optics return new states.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodeState {
    modes: Vec<ModeLabel>,
    cutoff: usize,
    amplitudes: Amplitudes,
}

/// A state built from a truncated infinite expansion, plus the probability
/// that fell above the cutoff before renormalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncated {
    pub state: MultimodeState,
    pub leakage: f64,
}

impl Truncated {
    /// `Some(leakage)` when the truncation loss is large enough that the
    /// caller should not trust fine-grained statistics.
    pub fn warning(&self) -> Option<f64> {
        (self.leakage > TRUNCATION_WARNING_LEVEL).then_some(self.leakage)
    }
}

const MAX_BASIS: usize = 1 << 24;

fn basis_size(modes: usize, cutoff: usize) -> Result<usize, FockError> {
    let radix = cutoff + 1;
    let mut dim: usize = 1;
    for _ in 0..modes {
        dim = dim
            .checked_mul(radix)
            .filter(|d| *d <= MAX_BASIS)
            .ok_or(FockError::StateTooLarge { modes, cutoff })?;
    }
    Ok(dim)
}

fn check_unique(modes: &[ModeLabel]) -> Result<(), FockError> {
    for (i, m) in modes.iter().enumerate() {
        if modes[..i].contains(m) {
            return Err(FockError::DuplicateMode(*m));
        }
    }
    Ok(())
}

impl MultimodeState {
    pub(crate) fn from_parts(
        modes: Vec<ModeLabel>,
        cutoff: usize,
        amplitudes: Amplitudes,
    ) -> Self {
        MultimodeState {
            modes,
            cutoff,
            amplitudes,
        }
    }

    /// Number state with the given occupation on each labelled mode.
    pub fn fock(
        modes: Vec<ModeLabel>,
        occupations: &[usize],
        cutoff: usize,
    ) -> Result<Self, FockError> {
        if cutoff == 0 {
            return Err(FockError::ZeroCutoff);
        }
        if modes.len() != occupations.len() {
            return Err(FockError::LengthMismatch {
                expected: modes.len(),
                got: occupations.len(),
            });
        }
        check_unique(&modes)?;
        for (mode, &n) in modes.iter().zip(occupations) {
            if n > cutoff {
                return Err(FockError::CapacityExceeded {
                    mode: *mode,
                    occupation: n,
                    cutoff,
                });
            }
        }
        let dim = basis_size(modes.len(), cutoff)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        let idx = occupations.iter().fold(0, |acc, &n| acc * (cutoff + 1) + n);
        amps[idx] = Complex64::new(1.0, 0.0);
        Ok(MultimodeState::from_parts(modes, cutoff, Amplitudes::Pure(amps)))
    }

    pub fn vacuum(modes: Vec<ModeLabel>, cutoff: usize) -> Result<Self, FockError> {
        let zeros = vec![0; modes.len()];
        MultimodeState::fock(modes, &zeros, cutoff)
    }

    pub fn modes(&self) -> &[ModeLabel] {
        &self.modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn representation(&self) -> Representation {
        match self.amplitudes {
            Amplitudes::Pure(_) => Representation::PureVector,
            Amplitudes::Density(_) => Representation::DensityMatrix,
        }
    }

    pub(crate) fn amplitudes(&self) -> &Amplitudes {
        &self.amplitudes
    }

    /// Size of the occupation basis, `(cutoff + 1)^modes`.
    pub fn dimension(&self) -> usize {
        (self.cutoff + 1).pow(self.modes.len() as u32)
    }

    /// Occupation tuple of basis element `index`.
    pub fn occupations(&self, index: usize) -> Vec<usize> {
        let radix = self.cutoff + 1;
        let mut occ = vec![0; self.modes.len()];
        let mut rest = index;
        for slot in occ.iter_mut().rev() {
            *slot = rest % radix;
            rest /= radix;
        }
        occ
    }

    pub fn index_of(&self, occupations: &[usize]) -> Option<usize> {
        if occupations.len() != self.modes.len() || occupations.iter().any(|&n| n > self.cutoff) {
            return None;
        }
        Some(
            occupations
                .iter()
                .fold(0, |acc, &n| acc * (self.cutoff + 1) + n),
        )
    }

    /// Probability of each basis element.
    pub fn probabilities(&self) -> Vec<f64> {
        match &self.amplitudes {
            Amplitudes::Pure(v) => v.iter().map(|a| a.norm_sqr()).collect(),
            Amplitudes::Density(rho) => {
                let dim = self.dimension();
                (0..dim).map(|i| rho[i * dim + i].re).collect()
            }
        }
    }

    /// Probability of a specific occupation tuple (0 when out of range).
    pub fn probability_of(&self, occupations: &[usize]) -> f64 {
        self.index_of(occupations)
            .map(|i| self.probabilities()[i])
            .unwrap_or(0.0)
    }

    /// Squared norm for pure states, trace for density matrices.
    pub fn norm(&self) -> f64 {
        self.probabilities().iter().sum()
    }

    /// Relabel every mode. Amplitudes are untouched.
    pub fn with_labels(self, modes: Vec<ModeLabel>) -> Result<Self, FockError> {
        if modes.len() != self.modes.len() {
            return Err(FockError::LengthMismatch {
                expected: self.modes.len(),
                got: modes.len(),
            });
        }
        check_unique(&modes)?;
        Ok(MultimodeState { modes, ..self })
    }

    /// Tensor on a vacuum mode as the last (least significant) mode.
    pub(crate) fn append_vacuum(self, label: ModeLabel) -> Result<Self, FockError> {
        let mut modes = self.modes;
        if modes.contains(&label) {
            return Err(FockError::DuplicateMode(label));
        }
        modes.push(label);
        let radix = self.cutoff + 1;
        let new_dim = basis_size(modes.len(), self.cutoff)?;
        let zero = Complex64::new(0.0, 0.0);
        let amplitudes = match self.amplitudes {
            Amplitudes::Pure(v) => {
                let mut out = vec![zero; new_dim];
                for (i, a) in v.into_iter().enumerate() {
                    out[i * radix] = a;
                }
                Amplitudes::Pure(out)
            }
            Amplitudes::Density(rho) => {
                let old_dim = new_dim / radix;
                let mut out = vec![zero; new_dim * new_dim];
                for i in 0..old_dim {
                    for j in 0..old_dim {
                        out[(i * radix) * new_dim + j * radix] = rho[i * old_dim + j];
                    }
                }
                Amplitudes::Density(out)
            }
        };
        Ok(MultimodeState {
            modes,
            cutoff: self.cutoff,
            amplitudes,
        })
    }

    /// Density-matrix form of this state.
    pub fn to_density(&self) -> MultimodeState {
        match &self.amplitudes {
            Amplitudes::Density(_) => self.clone(),
            Amplitudes::Pure(v) => {
                let dim = v.len();
                let mut rho = vec![Complex64::new(0.0, 0.0); dim * dim];
                for i in 0..dim {
                    if v[i] == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for j in 0..dim {
                        rho[i * dim + j] = v[i] * v[j].conj();
                    }
                }
                MultimodeState::from_parts(self.modes.clone(), self.cutoff, Amplitudes::Density(rho))
            }
        }
    }
}

/// Two-mode number state `|n_a⟩_a |n_b⟩_b` on degenerate modes of ports
/// `a` and `b`.
pub fn make_fock(n_a: usize, n_b: usize, cutoff: usize) -> Result<MultimodeState, FockError> {
    MultimodeState::fock(
        vec![ModeLabel::degenerate(Port::A), ModeLabel::degenerate(Port::B)],
        &[n_a, n_b],
        cutoff,
    )
}

/// Mixture `Σ ρ_np |n,n⟩⟨p,p|` of twin number states on ports `a` and `b`.
pub fn make_twin_mode_mixture(
    weights: &DMatrix<Complex64>,
    cutoff: usize,
) -> Result<MultimodeState, FockError> {
    if cutoff == 0 {
        return Err(FockError::ZeroCutoff);
    }
    let k = weights.nrows();
    if weights.ncols() != k {
        return Err(FockError::LengthMismatch {
            expected: k,
            got: weights.ncols(),
        });
    }
    if k > cutoff + 1 {
        return Err(FockError::WeightsTooLarge {
            dim: k,
            max: cutoff + 1,
        });
    }
    let herm_dev = (weights - weights.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if herm_dev > 1e-12 {
        return Err(FockError::NotHermitian(herm_dev));
    }
    let trace: Complex64 = weights.diagonal().iter().sum();
    if (trace.re - 1.0).abs() > 1e-12 || trace.im.abs() > 1e-12 {
        return Err(FockError::TraceNotOne(trace.re));
    }
    let min_eig = min_hermitian_eigenvalue(weights);
    if min_eig < -1e-12 {
        return Err(FockError::NotPositive(min_eig));
    }

    let modes = vec![ModeLabel::degenerate(Port::A), ModeLabel::degenerate(Port::B)];
    let radix = cutoff + 1;
    let dim = basis_size(2, cutoff)?;
    let mut rho = vec![Complex64::new(0.0, 0.0); dim * dim];
    for n in 0..k {
        for p in 0..k {
            let row = n * radix + n;
            let col = p * radix + p;
            rho[row * dim + col] = weights[(n, p)];
        }
    }
    Ok(MultimodeState::from_parts(modes, cutoff, Amplitudes::Density(rho)))
}

/// Smallest eigenvalue of a Hermitian matrix via its real symmetric
/// embedding `[[Re, -Im], [Im, Re]]`.
pub(crate) fn min_hermitian_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    let k = m.nrows();
    let mut real = DMatrix::<f64>::zeros(2 * k, 2 * k);
    for i in 0..k {
        for j in 0..k {
            let z = m[(i, j)];
            real[(i, j)] = z.re;
            real[(i + k, j + k)] = z.re;
            real[(i, j + k)] = -z.im;
            real[(i + k, j)] = z.im;
        }
    }
    real.symmetric_eigenvalues().min()
}

/// Number-basis amplitudes of a coherent state, `0..=cutoff`, plus the
/// probability beyond the cutoff.
pub(crate) fn coherent_amplitudes(alpha: Complex64, cutoff: usize) -> (Vec<Complex64>, f64) {
    let mut amps = Vec::with_capacity(cutoff + 1);
    let mut term = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    amps.push(term);
    for n in 1..=cutoff {
        term = term * alpha / (n as f64).sqrt();
        amps.push(term);
    }
    // Tail sum, carried on until terms vanish.
    let mut tail = 0.0;
    let mut n = cutoff + 1;
    let mut prob = term.norm_sqr();
    loop {
        prob *= alpha.norm_sqr() / n as f64;
        tail += prob;
        if prob < 1e-300 || (prob < tail * 1e-17 && n as f64 > alpha.norm_sqr()) {
            break;
        }
        n += 1;
    }
    (amps, tail)
}

fn check_truncation_safety(mean_photons: f64, cutoff: usize) -> Result<(), FockError> {
    if mean_photons * TRUNCATION_SAFETY_FACTOR > cutoff as f64 {
        return Err(FockError::TruncationUnsafe {
            mean_photons,
            cutoff,
            factor: TRUNCATION_SAFETY_FACTOR,
        });
    }
    Ok(())
}

/// Product of two truncated coherent states on ports `a` and `b`,
/// renormalized after truncation.
pub fn make_coherent_pair(
    alpha_a: Complex64,
    alpha_b: Complex64,
    cutoff: usize,
) -> Result<Truncated, FockError> {
    if cutoff == 0 {
        return Err(FockError::ZeroCutoff);
    }
    check_truncation_safety(alpha_a.norm_sqr().max(alpha_b.norm_sqr()), cutoff)?;
    let (ca, tail_a) = coherent_amplitudes(alpha_a, cutoff);
    let (cb, tail_b) = coherent_amplitudes(alpha_b, cutoff);
    let kept: f64 = ca.iter().map(|z| z.norm_sqr()).sum::<f64>()
        * cb.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let scale = 1.0 / kept.sqrt();
    let mut amps = Vec::with_capacity((cutoff + 1) * (cutoff + 1));
    for a in &ca {
        for b in &cb {
            amps.push(a * b * scale);
        }
    }
    let leakage = tail_a + tail_b - tail_a * tail_b;
    Ok(Truncated {
        state: MultimodeState::from_parts(
            vec![ModeLabel::degenerate(Port::A), ModeLabel::degenerate(Port::B)],
            cutoff,
            Amplitudes::Pure(amps),
        ),
        leakage,
    })
}

/// Columns `⟨m|D(α)|n⟩` for `m, n ≤ cutoff`, built by the ladder relation
/// `D(α)|n⟩ = (a† − α*)ⁿ |α⟩ / √n!`. Entry `m` of each column only depends on
/// coherent amplitudes up to `m`, so the truncation is exact.
fn displacement_columns(alpha: Complex64, cutoff: usize, ncols: usize) -> Vec<Vec<Complex64>> {
    let (coh, _) = coherent_amplitudes(alpha, cutoff);
    let mut cols = Vec::with_capacity(ncols);
    cols.push(coh);
    for k in 1..ncols {
        let prev = &cols[k - 1];
        let norm = (k as f64).sqrt();
        let col: Vec<Complex64> = (0..=cutoff)
            .map(|m| {
                let raised = if m > 0 {
                    prev[m - 1] * (m as f64).sqrt()
                } else {
                    Complex64::new(0.0, 0.0)
                };
                (raised - alpha.conj() * prev[m]) / norm
            })
            .collect();
        cols.push(col);
    }
    cols
}

/// Equal coherent displacement `alpha` on both modes of a two-mode squeezed
/// vacuum `Σ λⁿ |n,n⟩ / cosh r`, `λ = tanh r`, on modes `labels`.
///
/// With `λ > 0` the amplitude-quadrature difference is squeezed and the
/// phase-quadrature difference antisqueezed.
pub fn make_displaced_twin_beam(
    alpha: Complex64,
    squeeze_r: f64,
    labels: [ModeLabel; 2],
    cutoff: usize,
) -> Result<Truncated, FockError> {
    if cutoff == 0 {
        return Err(FockError::ZeroCutoff);
    }
    check_unique(&labels)?;
    let thermal = squeeze_r.sinh().powi(2);
    check_truncation_safety(alpha.norm_sqr() + thermal, cutoff)?;

    let lambda = squeeze_r.tanh();
    let mut pair_weights = Vec::new();
    let mut w = 1.0 / squeeze_r.cosh();
    for _ in 0..=cutoff {
        pair_weights.push(w);
        w *= lambda;
        if w.abs() < 1e-17 {
            break;
        }
    }
    let cols = displacement_columns(alpha, cutoff, pair_weights.len());
    let radix = cutoff + 1;
    let mut amps = vec![Complex64::new(0.0, 0.0); radix * radix];
    for (n, &c) in pair_weights.iter().enumerate() {
        let col = &cols[n];
        for m1 in 0..radix {
            let left = col[m1] * c;
            for m2 in 0..radix {
                amps[m1 * radix + m2] += left * col[m2];
            }
        }
    }
    let kept: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
    let scale = 1.0 / kept.sqrt();
    for a in amps.iter_mut() {
        *a *= scale;
    }
    Ok(Truncated {
        state: MultimodeState::from_parts(labels.to_vec(), cutoff, Amplitudes::Pure(amps)),
        leakage: (1.0 - kept).max(0.0),
    })
}
