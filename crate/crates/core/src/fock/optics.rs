use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;

use super::{Amplitudes, FockError, ModeLabel, MultimodeState, Polarization, Port, OVERFLOW_TOLERANCE};

/// Phase convention of a two-port mixer.
///
/// Both conventions give the same photon-number statistics for inputs whose
/// coherences only connect equal `n_a − n_b`; they differ by port phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    /// `c = t a + r b`, `d = r a + t b` with `t = −i cos φ`, `r = sin φ`.
    /// At `φ = π/4` this is `r = i t = 2^{-1/2}`.
    #[default]
    SymmetricI,
    /// Real rotation `c = cos φ a + sin φ b`, `d = −sin φ a + cos φ b`.
    Rotation,
}

type Mat2 = [[Complex64; 2]; 2];

/// Output-from-input mode matrix: `(out1, out2) = V (in1, in2)`.
fn mode_matrix(angle: f64, convention: Convention) -> Mat2 {
    let (s, c) = angle.sin_cos();
    match convention {
        Convention::SymmetricI => {
            let t = Complex64::new(0.0, -c);
            let r = Complex64::new(s, 0.0);
            [[t, r], [r, t]]
        }
        Convention::Rotation => [
            [Complex64::new(c, 0.0), Complex64::new(s, 0.0)],
            [Complex64::new(-s, 0.0), Complex64::new(c, 0.0)],
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSplitter {
    pub inputs: (Port, Port),
    pub outputs: (Port, Port),
    /// `π/4` is balanced.
    pub mixing_angle: f64,
    pub convention: Convention,
}

impl Default for BeamSplitter {
    fn default() -> Self {
        BeamSplitter::balanced()
    }
}

impl BeamSplitter {
    /// 50/50 splitter taking ports `a`, `b` to `c`, `d`.
    pub fn balanced() -> Self {
        BeamSplitter {
            inputs: (Port::A, Port::B),
            outputs: (Port::C, Port::D),
            mixing_angle: FRAC_PI_4,
            convention: Convention::SymmetricI,
        }
    }

    pub fn with_convention(self, convention: Convention) -> Self {
        BeamSplitter { convention, ..self }
    }

    pub fn with_angle(self, mixing_angle: f64) -> Self {
        BeamSplitter {
            mixing_angle,
            ..self
        }
    }

    pub fn mode_matrix(&self) -> [[Complex64; 2]; 2] {
        mode_matrix(self.mixing_angle, self.convention)
    }
}

/// Half-wave plate at angle `theta` followed by a polarizing splitter.
///
/// The plate mixes the `H` and `V` modes of one path with mixing angle
/// `2θ`; the splitter then sends `H` to `outputs.0` and `V` to `outputs.1`.
/// `θ = 0` leaves intensities alone, `θ = π/8` is a balanced splitter and
/// `θ = π/4` swaps the polarizations.
///
/// The default [`Convention::SymmetricI`] puts the quarter-period phase on the
/// mixed term so that `N_c − N_d = cos 4θ (N_H − N_V) + sin 4θ · i(a†b − ab†)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveplatePolarizer {
    pub path: Port,
    pub outputs: (Port, Port),
    pub theta: f64,
    pub convention: Convention,
}

impl WaveplatePolarizer {
    pub fn new(theta: f64) -> Self {
        WaveplatePolarizer {
            path: Port::A,
            outputs: (Port::C, Port::D),
            theta,
            convention: Convention::SymmetricI,
        }
    }

    pub fn with_convention(self, convention: Convention) -> Self {
        WaveplatePolarizer { convention, ..self }
    }
}

/// Apply `bs` to every matched pair of modes on its input ports.
///
/// A mode with no same-field partner on the other input port is mixed with
/// an inserted vacuum mode. Input ports are relabelled to output ports.
pub fn apply_beam_splitter(
    state: &MultimodeState,
    bs: &BeamSplitter,
) -> Result<MultimodeState, FockError> {
    let (in1, in2) = bs.inputs;
    if !state.modes().iter().any(|m| m.port == in1 || m.port == in2) {
        return Err(FockError::MissingPort(in1));
    }
    let state = insert_partners(state.clone(), |m| {
        if m.port == in1 {
            Some(m.with_port(in2))
        } else if m.port == in2 {
            Some(m.with_port(in1))
        } else {
            None
        }
    })?;

    let pairs: Vec<(usize, usize)> = state
        .modes()
        .iter()
        .enumerate()
        .filter(|(_, m)| m.port == in1)
        .map(|(i, m)| {
            let j = position(state.modes(), &m.with_port(in2));
            (i, j)
        })
        .collect();

    let images = SubspaceImages::new(creation_map(bs.mode_matrix()), 2 * state.cutoff());
    let mut out = state;
    for (i, j) in pairs {
        out = apply_pair(&out, i, j, &images)?;
    }
    let labels = out
        .modes()
        .iter()
        .map(|m| {
            if m.port == in1 {
                m.with_port(bs.outputs.0)
            } else if m.port == in2 {
                m.with_port(bs.outputs.1)
            } else {
                *m
            }
        })
        .collect();
    out.with_labels(labels)
}

/// Apply a waveplate-polarizer assembly to the modes on `wp.path`.
pub fn apply_waveplate_polarizer(
    state: &MultimodeState,
    wp: &WaveplatePolarizer,
) -> Result<MultimodeState, FockError> {
    let path = wp.path;
    if !state.modes().iter().any(|m| m.port == path) {
        return Err(FockError::MissingPort(path));
    }
    let flip = |p: Polarization| match p {
        Polarization::H => Polarization::V,
        Polarization::V => Polarization::H,
    };
    let state = insert_partners(state.clone(), |m| {
        (m.port == path).then(|| m.with_polarization(flip(m.polarization)))
    })?;

    let pairs: Vec<(usize, usize)> = state
        .modes()
        .iter()
        .enumerate()
        .filter(|(_, m)| m.port == path && m.polarization == Polarization::H)
        .map(|(i, m)| (i, position(state.modes(), &m.with_polarization(Polarization::V))))
        .collect();

    let matrix = mode_matrix(2.0 * wp.theta, wp.convention);
    let images = SubspaceImages::new(creation_map(matrix), 2 * state.cutoff());
    let mut out = state;
    for (i, j) in pairs {
        out = apply_pair(&out, i, j, &images)?;
    }
    let labels = out
        .modes()
        .iter()
        .map(|m| match (m.port == path, m.polarization) {
            (true, Polarization::H) => m.with_port(wp.outputs.0),
            (true, Polarization::V) => m.with_port(wp.outputs.1),
            _ => *m,
        })
        .collect();
    out.with_labels(labels)
}

fn position(modes: &[ModeLabel], label: &ModeLabel) -> usize {
    modes
        .iter()
        .position(|m| m == label)
        .expect("partner inserted before pairing")
}

fn insert_partners(
    mut state: MultimodeState,
    partner_of: impl Fn(&ModeLabel) -> Option<ModeLabel>,
) -> Result<MultimodeState, FockError> {
    let wanted: Vec<ModeLabel> = state.modes().iter().filter_map(&partner_of).collect();
    for label in wanted {
        if !state.modes().contains(&label) {
            state = state.append_vacuum(label)?;
        }
    }
    Ok(state)
}

/// Creation-operator map: `in_k† ↦ Σ_j W[k][j] out_j†` with `W = Vᵀ`.
fn creation_map(v: Mat2) -> Mat2 {
    [[v[0][0], v[1][0]], [v[0][1], v[1][1]]]
}

/// Images of two-mode number states under a passive two-mode unitary.
///
/// `image(n, m)[p]` is the amplitude of `|p, n+m−p⟩` in `U|n, m⟩`. Columns
/// are built one creation operator at a time, so every intermediate vector
/// is itself a normalized image and no large cancelling sums appear.
struct SubspaceImages {
    // by_total[N][n] = image(n, N − n)
    by_total: Vec<Vec<Vec<Complex64>>>,
}

impl SubspaceImages {
    fn new(w: Mat2, max_total: usize) -> Self {
        let raise = |v: &[Complex64], row: [Complex64; 2], steps: usize| -> Vec<Complex64> {
            let k = v.len() - 1;
            let norm = (steps as f64).sqrt();
            let mut out = vec![Complex64::new(0.0, 0.0); k + 2];
            for (p, &a) in v.iter().enumerate() {
                out[p + 1] += row[0] * ((p + 1) as f64).sqrt() * a;
                out[p] += row[1] * ((k - p + 1) as f64).sqrt() * a;
            }
            for z in out.iter_mut() {
                *z /= norm;
            }
            out
        };
        let mut by_total = vec![vec![vec![Complex64::new(1.0, 0.0)]]];
        for total in 1..=max_total {
            let prev = &by_total[total - 1];
            let mut level = Vec::with_capacity(total + 1);
            level.push(raise(&prev[0], w[1], total));
            for n in 1..=total {
                level.push(raise(&prev[n - 1], w[0], n));
            }
            by_total.push(level);
        }
        SubspaceImages { by_total }
    }

    fn image(&self, n: usize, m: usize) -> &[Complex64] {
        &self.by_total[n + m][n]
    }
}

struct PairLayout {
    radix: usize,
    cutoff: usize,
    stride_i: usize,
    stride_j: usize,
    bases: Vec<usize>,
}

impl PairLayout {
    fn new(state: &MultimodeState, i: usize, j: usize) -> Self {
        let radix = state.cutoff() + 1;
        let m = state.modes().len();
        let stride = |k: usize| radix.pow((m - 1 - k) as u32);
        let (stride_i, stride_j) = (stride(i), stride(j));
        let bases = (0..state.dimension())
            .filter(|&idx| (idx / stride_i) % radix == 0 && (idx / stride_j) % radix == 0)
            .collect();
        PairLayout {
            radix,
            cutoff: state.cutoff(),
            stride_i,
            stride_j,
            bases,
        }
    }

    /// Transform one vector; returns the probability pushed above the cutoff.
    fn transform(&self, v: &[Complex64], images: &SubspaceImages, out: &mut [Complex64]) -> f64 {
        let zero = Complex64::new(0.0, 0.0);
        out.iter_mut().for_each(|z| *z = zero);
        let c = self.cutoff;
        let mut overflow = 0.0;
        let mut acc = vec![zero; 2 * c + 1];
        for &base in &self.bases {
            for total in 0..=2 * c {
                let lo = total.saturating_sub(c);
                let hi = total.min(c);
                let acc = &mut acc[..=total];
                acc.iter_mut().for_each(|z| *z = zero);
                let mut any = false;
                for n in lo..=hi {
                    let a = v[base + n * self.stride_i + (total - n) * self.stride_j];
                    if a == zero {
                        continue;
                    }
                    any = true;
                    for (slot, img) in acc.iter_mut().zip(images.image(n, total - n)) {
                        *slot += img * a;
                    }
                }
                if !any {
                    continue;
                }
                for (p, &z) in acc.iter().enumerate() {
                    let q = total - p;
                    if p <= c && q <= c {
                        out[base + p * self.stride_i + q * self.stride_j] = z;
                    } else {
                        overflow += z.norm_sqr();
                    }
                }
            }
        }
        debug_assert!(self.radix == c + 1);
        overflow
    }
}

fn apply_pair(
    state: &MultimodeState,
    i: usize,
    j: usize,
    images: &SubspaceImages,
) -> Result<MultimodeState, FockError> {
    let layout = PairLayout::new(state, i, j);
    let dim = state.dimension();
    let zero = Complex64::new(0.0, 0.0);
    let amplitudes = match state.amplitudes() {
        Amplitudes::Pure(v) => {
            let mut out = vec![zero; dim];
            let overflow = layout.transform(v, images, &mut out);
            if overflow > OVERFLOW_TOLERANCE {
                return Err(FockError::Overflow(overflow));
            }
            Amplitudes::Pure(out)
        }
        Amplitudes::Density(rho) => {
            // rho' = U (U rho)†, one column at a time.
            let mut col = vec![zero; dim];
            let mut image = vec![zero; dim];
            let mut half = vec![zero; dim * dim];
            for k in 0..dim {
                for r in 0..dim {
                    col[r] = rho[r * dim + k];
                }
                layout.transform(&col, images, &mut image);
                for r in 0..dim {
                    // store (U rho)† directly
                    half[k * dim + r] = image[r].conj();
                }
            }
            let mut out = vec![zero; dim * dim];
            for k in 0..dim {
                for r in 0..dim {
                    col[r] = half[r * dim + k];
                }
                layout.transform(&col, images, &mut image);
                for r in 0..dim {
                    out[r * dim + k] = image[r];
                }
            }
            let before: f64 = (0..dim).map(|k| rho[k * dim + k].re).sum();
            let after: f64 = (0..dim).map(|k| out[k * dim + k].re).sum();
            if before - after > OVERFLOW_TOLERANCE {
                return Err(FockError::Overflow(before - after));
            }
            Amplitudes::Density(out)
        }
    };
    Ok(MultimodeState::from_parts(
        state.modes().to_vec(),
        state.cutoff(),
        amplitudes,
    ))
}
