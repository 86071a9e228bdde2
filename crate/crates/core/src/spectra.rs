//! Twin-beam noise spectra of an above-threshold OPO.
//!
//! With normalized analysis frequency `u = ν/δ`, the intensity-difference
//! spectrum before the splitter is `1 − ξ/(1+u²)` and after a balanced
//! splitter (indistinguishable beams) `1 + ξ/u²`, both relative to the total
//! shot noise `S₀`. Distinguishable beams each interfere with vacuum and give
//! shot noise at every frequency.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("phase-difference spectrum has a pole at zero frequency")]
    Pole,
    #[error("correlation coefficient {0} outside [0, 1]")]
    InvalidXi(f64),
    #[error("cavity linewidth must be positive and finite, got {0}")]
    InvalidLinewidth(f64),
    #[error("invalid cavity: transmission {transmission}, loss {loss}, free spectral range {fsr_hz}")]
    InvalidCavity {
        transmission: f64,
        loss: f64,
        fsr_hz: f64,
    },
    #[error("curve is in {got} units, expected {expected}")]
    UnitMismatch { expected: CurveUnit, got: CurveUnit },
    #[error("value {value} at index {index} cannot be expressed in dB")]
    Domain { index: usize, value: f64 },
    #[error("curves have different frequency grids")]
    GridMismatch,
    #[error("frequencies and values differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// `ξ = T/(T+A)`.
pub fn correlation_coefficient(transmission: f64, loss: f64) -> f64 {
    transmission / (transmission + loss)
}

/// Cold-cavity FWHM `δ = (T+A)·D/2π` in Hz.
pub fn cold_cavity_linewidth(transmission: f64, loss: f64, fsr_hz: f64) -> f64 {
    (transmission + loss) * fsr_hz / std::f64::consts::TAU
}

/// Output-coupler transmission, single-pass loss and free spectral range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cavity {
    pub transmission: f64,
    pub loss: f64,
    pub fsr_hz: f64,
}

impl Cavity {
    pub fn new(transmission: f64, loss: f64, fsr_hz: f64) -> Result<Self, SpectrumError> {
        let ok = transmission > 0.0
            && transmission < 1.0
            && (0.0..1.0).contains(&loss)
            && fsr_hz > 0.0
            && fsr_hz.is_finite();
        if !ok {
            return Err(SpectrumError::InvalidCavity {
                transmission,
                loss,
                fsr_hz,
            });
        }
        Ok(Cavity {
            transmission,
            loss,
            fsr_hz,
        })
    }

    pub fn xi(&self) -> f64 {
        correlation_coefficient(self.transmission, self.loss)
    }

    pub fn linewidth_hz(&self) -> f64 {
        cold_cavity_linewidth(self.transmission, self.loss, self.fsr_hz)
    }
}

/// Model parameters: shot-noise level `S₀` (dBm), correlation coefficient
/// `ξ` and cold-cavity FWHM `δ` (Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpoParams {
    pub s0_dbm: f64,
    pub xi: f64,
    pub delta_hz: f64,
    pub cavity: Option<Cavity>,
}

impl OpoParams {
    pub fn new(s0_dbm: f64, xi: f64, delta_hz: f64) -> Result<Self, SpectrumError> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(SpectrumError::InvalidXi(xi));
        }
        if !(delta_hz > 0.0 && delta_hz.is_finite()) {
            return Err(SpectrumError::InvalidLinewidth(delta_hz));
        }
        if !s0_dbm.is_finite() {
            return Err(SpectrumError::Domain {
                index: 0,
                value: s0_dbm,
            });
        }
        Ok(OpoParams {
            s0_dbm,
            xi,
            delta_hz,
            cavity: None,
        })
    }

    pub fn from_cavity(cavity: Cavity, s0_dbm: f64) -> Result<Self, SpectrumError> {
        let mut p = OpoParams::new(s0_dbm, cavity.xi(), cavity.linewidth_hz())?;
        p.cavity = Some(cavity);
        Ok(p)
    }

    pub fn normalized_frequency(&self, nu_hz: f64) -> f64 {
        nu_hz / self.delta_hz
    }
}

/// `1 − ξ/(1+u²)`.
pub fn intensity_diff_spectrum(u: f64, xi: f64) -> f64 {
    1.0 - xi / (1.0 + u * u)
}

/// `1 + ξ/u²`; the pole at `u = 0` is an error, not an infinity.
pub fn phase_diff_spectrum(u: f64, xi: f64) -> Result<f64, SpectrumError> {
    if u == 0.0 {
        return Err(SpectrumError::Pole);
    }
    Ok(1.0 + xi / (u * u))
}

/// Phase-difference spectrum of distinguishable beams: shot noise.
pub fn distinguishable_phase_spectrum(_u: f64) -> f64 {
    1.0
}

/// Product of the intensity- and phase-difference spectra.
pub fn uncertainty_product(u: f64, xi: f64) -> Result<f64, SpectrumError> {
    Ok(intensity_diff_spectrum(u, xi) * phase_diff_spectrum(u, xi)?)
}

/// Closed form of `uncertainty_product − 1`: `ξ(1−ξ) / (u²(1+u²))`.
pub fn uncertainty_excess(u: f64, xi: f64) -> Result<f64, SpectrumError> {
    if u == 0.0 {
        return Err(SpectrumError::Pole);
    }
    let u2 = u * u;
    Ok(xi * (1.0 - xi) / (u2 * (1.0 + u2)))
}

/// Which spectrum to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumKind {
    /// Intensity difference before the splitter.
    Intensity,
    /// Intensity difference after a balanced splitter, indistinguishable beams.
    Phase,
    /// After the splitter with distinguishable beams.
    Flat,
}

impl SpectrumKind {
    pub fn relative(self, u: f64, xi: f64) -> Result<f64, SpectrumError> {
        match self {
            SpectrumKind::Intensity => Ok(intensity_diff_spectrum(u, xi)),
            SpectrumKind::Phase => phase_diff_spectrum(u, xi),
            SpectrumKind::Flat => Ok(distinguishable_phase_spectrum(u)),
        }
    }
}

impl FromStr for SpectrumKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "intensity" => Ok(SpectrumKind::Intensity),
            "phase" => Ok(SpectrumKind::Phase),
            "flat" | "distinguishable" => Ok(SpectrumKind::Flat),
            other => Err(format!("unknown spectrum kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveUnit {
    /// Linear power relative to `S₀`.
    Relative,
    Dbm,
}

impl fmt::Display for CurveUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveUnit::Relative => "relative",
            CurveUnit::Dbm => "dbm",
        })
    }
}

/// Sampled spectrum with a mandatory unit tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCurve {
    frequencies_hz: Vec<f64>,
    values: Vec<f64>,
    unit: CurveUnit,
}

impl SpectrumCurve {
    pub fn new(
        frequencies_hz: Vec<f64>,
        values: Vec<f64>,
        unit: CurveUnit,
    ) -> Result<Self, SpectrumError> {
        if frequencies_hz.len() != values.len() {
            return Err(SpectrumError::LengthMismatch(
                frequencies_hz.len(),
                values.len(),
            ));
        }
        Ok(SpectrumCurve {
            frequencies_hz,
            values,
            unit,
        })
    }

    pub fn frequencies_hz(&self) -> &[f64] {
        &self.frequencies_hz
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn unit(&self) -> CurveUnit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn require(&self, unit: CurveUnit) -> Result<(), SpectrumError> {
        if self.unit != unit {
            return Err(SpectrumError::UnitMismatch {
                expected: unit,
                got: self.unit,
            });
        }
        Ok(())
    }

    /// Pointwise `self − other`; both curves must share unit and grid.
    pub fn difference(&self, other: &SpectrumCurve) -> Result<Vec<f64>, SpectrumError> {
        other.require(self.unit)?;
        if self.frequencies_hz != other.frequencies_hz {
            return Err(SpectrumError::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect())
    }

    /// CSV with header `frequency_hz,value,unit`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "frequency_hz,value,unit")?;
        for (f, v) in self.frequencies_hz.iter().zip(&self.values) {
            writeln!(w, "{f},{v},{}", self.unit)?;
        }
        Ok(())
    }
}

/// `S₀ + 10 log10(relative)`.
pub fn to_dbm(curve: &SpectrumCurve, s0_dbm: f64) -> Result<SpectrumCurve, SpectrumError> {
    curve.require(CurveUnit::Relative)?;
    let values = curve
        .values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value > 0.0 && value.is_finite() {
                Ok(s0_dbm + 10.0 * value.log10())
            } else {
                Err(SpectrumError::Domain { index, value })
            }
        })
        .collect::<Result<_, _>>()?;
    SpectrumCurve::new(curve.frequencies_hz.clone(), values, CurveUnit::Dbm)
}

/// Inverse of [`to_dbm`].
pub fn from_dbm(curve: &SpectrumCurve, s0_dbm: f64) -> Result<SpectrumCurve, SpectrumError> {
    curve.require(CurveUnit::Dbm)?;
    let values = curve
        .values
        .iter()
        .map(|v| 10f64.powf((v - s0_dbm) / 10.0))
        .collect();
    SpectrumCurve::new(curve.frequencies_hz.clone(), values, CurveUnit::Relative)
}

/// Relative spectrum of `kind` at physical frequencies `nu_hz` (`u = ν/δ`).
pub fn physical_frequency_curve(
    params: &OpoParams,
    nu_hz: &[f64],
    kind: SpectrumKind,
) -> Result<SpectrumCurve, SpectrumError> {
    let values = nu_hz
        .iter()
        .map(|&nu| kind.relative(params.normalized_frequency(nu), params.xi))
        .collect::<Result<_, _>>()?;
    SpectrumCurve::new(nu_hz.to_vec(), values, CurveUnit::Relative)
}

/// Same as [`physical_frequency_curve`], in dBm.
pub fn model_curve_dbm(
    params: &OpoParams,
    nu_hz: &[f64],
    kind: SpectrumKind,
) -> Result<SpectrumCurve, SpectrumError> {
    to_dbm(&physical_frequency_curve(params, nu_hz, kind)?, params.s0_dbm)
}
