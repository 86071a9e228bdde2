//! Trace ingestion, detection-floor correction and fitting of the
//! intensity-difference model `S₀ + 10 log10(1 − ξ/(1+(ν/δ)²))`.

mod lm;
mod synth;
mod trace;

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::spectra::{model_curve_dbm, OpoParams, SpectrumCurve, SpectrumError, SpectrumKind};

pub use lm::INITIAL_DAMPING;
pub use synth::{add_lorentzian_peak, synth_trace};
pub use trace::{
    add_noise_floor, dbm_to_mw, floor_margin_for_correction, load_trace, mw_to_dbm, parse_trace,
    stepped_grid, subtract_noise_floor, write_trace, FloorCorrected, SpectrumTrace, TraceError,
    TRACE_HEADER,
};

/// Traces shorter than this are not fitted.
pub const MIN_TRACE_POINTS: usize = 8;
/// Usable points required per free parameter.
pub const POINTS_PER_PARAMETER: usize = 3;
/// Smallest `ξ` the optimizer may reach; `ξ = 0` makes `δ` unidentifiable.
pub const XI_FLOOR: f64 = 1e-9;
/// Distance from a bound of `ξ` at which a fit counts as pinned.
pub const BOUNDARY_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("invalid fit configuration: {0}")]
    Config(String),
    #[error("trace has {0} points; at least {MIN_TRACE_POINTS} are needed")]
    TraceTooShort(usize),
    #[error("{used} usable points after windowing and exclusions; at least {required} are needed")]
    InsufficientPoints { used: usize, required: usize },
    #[error("no convergence after {iterations} iterations; last iterate S0 = {:.4} dBm, xi = {:.6}, delta = {:.1} Hz", last.s0_dbm, last.xi, last.delta_hz)]
    NotConverged { iterations: usize, last: Box<FitResult> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Uniform weights on dB residuals.
    #[default]
    Db,
    /// Uniform weights on linear-power residuals relative to the initial `S₀`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialGuess {
    pub s0_dbm: f64,
    pub xi: f64,
    pub delta_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Inclusive window; `None` uses the whole trace.
    pub fit_window_hz: Option<(f64, f64)>,
    /// Half-open bands `[lo, hi)` removed before fitting.
    pub exclusions_hz: Vec<(f64, f64)>,
    pub noise_floor: Option<SpectrumTrace>,
    /// `None` derives a guess from the trace.
    pub initial_guess: Option<InitialGuess>,
    pub max_iterations: usize,
    /// Relative parameter step below which the fit has converged.
    pub convergence_tol: f64,
    pub weighting: Weighting,
}

/// Technical noise below 2 MHz and the electro-optic spur near 3.9 MHz.
pub const DEFAULT_EXCLUSIONS_HZ: [(f64, f64); 2] = [(0.0, 2.0e6), (3.8e6, 4.0e6)];

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            fit_window_hz: None,
            exclusions_hz: DEFAULT_EXCLUSIONS_HZ.to_vec(),
            noise_floor: None,
            initial_guess: None,
            max_iterations: 200,
            convergence_tol: 1e-10,
            weighting: Weighting::Db,
        }
    }
}

/// Keys accepted under `trace_fit.`.
pub const CONFIG_KEYS: &[&str] = &[
    "fit_window_hz",
    "exclusions_hz",
    "noise_floor",
    "initial_guess",
    "max_iterations",
    "convergence_tol",
    "weighting",
];

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |m: String| Err(FitError::Config(m));
        if let Some((lo, hi)) = self.fit_window_hz {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("fit window {lo}..{hi} is empty"));
            }
        }
        for &(lo, hi) in &self.exclusions_hz {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("exclusion band {lo}..{hi} is empty"));
            }
        }
        if let Some(g) = self.initial_guess {
            if !(g.xi > 0.0 && g.xi <= 1.0) {
                return bad(format!("initial xi {} outside (0, 1]", g.xi));
            }
            if !(g.delta_hz > 0.0 && g.delta_hz.is_finite()) || !g.s0_dbm.is_finite() {
                return bad("initial guess must be finite with delta > 0".into());
            }
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if !(self.convergence_tol > 0.0) {
            return bad("convergence_tol must be positive".into());
        }
        Ok(())
    }

    /// Reads `trace_fit.*` over the defaults. `noise_floor` is a path and is
    /// left for the caller to load.
    pub fn from_config(cfg: &Config) -> Result<Self, ConfigError> {
        cfg.reject_unknown("trace_fit", CONFIG_KEYS)?;
        let mut out = FitConfig::default();
        if let Some(w) = cfg.get_f64_list("trace_fit.fit_window_hz")? {
            out.fit_window_hz = match w[..] {
                [] => None,
                [lo, hi] if lo < hi => Some((lo, hi)),
                _ => return Err(cfg.value_error("trace_fit.fit_window_hz", "expected `lo, hi` with lo < hi")),
            };
        }
        if let Some(b) = cfg.get_bands("trace_fit.exclusions_hz")? {
            out.exclusions_hz = b;
        }
        if let Some(v) = cfg.get("trace_fit.initial_guess") {
            out.initial_guess = if v.eq_ignore_ascii_case("auto") {
                None
            } else {
                match cfg.get_f64_list("trace_fit.initial_guess")?.unwrap_or_default()[..] {
                    [s0_dbm, xi, delta_hz] if xi > 0.0 && xi <= 1.0 && delta_hz > 0.0 => Some(InitialGuess { s0_dbm, xi, delta_hz }),
                    _ => {
                        return Err(cfg.value_error(
                            "trace_fit.initial_guess",
                            "expected `auto` or `s0_dbm, xi, delta_hz` with 0 < xi <= 1 and delta_hz > 0",
                        ))
                    }
                }
            };
        }
        if let Some(n) = cfg.get_parsed::<usize>("trace_fit.max_iterations")? {
            if n == 0 {
                return Err(cfg.value_error("trace_fit.max_iterations", "must be positive"));
            }
            out.max_iterations = n;
        }
        if let Some(t) = cfg.get_f64("trace_fit.convergence_tol")? {
            if t <= 0.0 {
                return Err(cfg.value_error("trace_fit.convergence_tol", "must be positive"));
            }
            out.convergence_tol = t;
        }
        if let Some(w) = cfg.get("trace_fit.weighting") {
            out.weighting = match w.to_ascii_lowercase().as_str() {
                "db" => Weighting::Db,
                "linear" => Weighting::Linear,
                _ => return Err(cfg.value_error("trace_fit.weighting", "expected `db` or `linear`")),
            };
        }
        Ok(out)
    }

    fn keeps(&self, f: f64) -> bool {
        if let Some((lo, hi)) = self.fit_window_hz {
            if f < lo || f > hi {
                return false;
            }
        }
        !self.exclusions_hz.iter().any(|&(lo, hi)| f >= lo && f < hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub s0_dbm: f64,
    pub xi: f64,
    pub delta_hz: f64,
    pub rms_residual_db: f64,
    pub points_used: usize,
    /// Parameter covariance in the order (S₀, ξ, δ), in the units of the
    /// weighted residuals. `None` when the normal matrix is singular.
    pub covariance: Option<[[f64; 3]; 3]>,
    pub iterations: usize,
    pub weighting: Weighting,
    /// Points removed by floor subtraction.
    pub floor_dropped: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn params(&self) -> OpoParams {
        OpoParams::new(self.s0_dbm, self.xi, self.delta_hz).expect("fit keeps parameters feasible")
    }

    /// One-sigma uncertainties from the covariance diagonal.
    pub fn std_errors(&self) -> Option<[f64; 3]> {
        self.covariance.map(|c| [c[0][0].sqrt(), c[1][1].sqrt(), c[2][2].sqrt()])
    }

    /// `key = value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "s0_dbm = {}", self.s0_dbm);
        let _ = writeln!(s, "xi = {}", self.xi);
        let _ = writeln!(s, "delta_hz = {}", self.delta_hz);
        let _ = writeln!(s, "rms_residual_db = {}", self.rms_residual_db);
        let _ = writeln!(s, "points_used = {}", self.points_used);
        if let Some([a, b, c]) = self.std_errors() {
            let _ = writeln!(s, "s0_dbm_stderr = {a}");
            let _ = writeln!(s, "xi_stderr = {b}");
            let _ = writeln!(s, "delta_hz_stderr = {c}");
        }
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "floor_dropped = {}", self.floor_dropped);
        for w in &self.warnings {
            let _ = writeln!(s, "warning = {w}");
        }
        s
    }
}

const DB_PER_NEPER: f64 = 10.0 / std::f64::consts::LN_10;

/// Model value (dB) and its gradient with respect to (S₀, ξ, δ).
fn model(nu: f64, p: &Vector3<f64>) -> (f64, [f64; 3]) {
    let (s0, xi, delta) = (p[0], p[1], p[2]);
    let u2 = (nu / delta).powi(2);
    let denom = 1.0 + u2;
    let l = 1.0 - xi / denom;
    let dxi = -1.0 / denom / l;
    let ddelta = -2.0 * xi * u2 / (delta * denom * denom) / l;
    (s0 + DB_PER_NEPER * l.ln(), [1.0, DB_PER_NEPER * dxi, DB_PER_NEPER * ddelta])
}

struct IntensityProblem<'a> {
    nu: &'a [f64],
    y: &'a [f64],
    weighting: Weighting,
    reference_dbm: f64,
}

impl lm::Problem for IntensityProblem<'_> {
    fn evaluate(&self, p: &Vector3<f64>, r: &mut Vec<f64>, j: &mut Vec<[f64; 3]>) {
        r.clear();
        j.clear();
        for (&nu, &y) in self.nu.iter().zip(self.y) {
            let (m, g) = model(nu, p);
            match self.weighting {
                Weighting::Db => {
                    r.push(y - m);
                    j.push(g);
                }
                Weighting::Linear => {
                    let lin = dbm_to_mw(m - self.reference_dbm);
                    let k = lin / DB_PER_NEPER;
                    r.push(dbm_to_mw(y - self.reference_dbm) - lin);
                    j.push([k * g[0], k * g[1], k * g[2]]);
                }
            }
        }
    }

    fn project(&self, p: Vector3<f64>) -> Vector3<f64> {
        Vector3::new(p[0], p[1].clamp(XI_FLOOR, 1.0), p[2].max(1e-9 * self.nu.last().copied().unwrap_or(1.0)))
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Heuristic start: `S₀` from the median of the top quarter in frequency,
/// `ξ` from the lowest points extrapolated to dc, `δ` from where the dip
/// depth falls to half of `ξ`.
pub fn initial_guess(nu: &[f64], y: &[f64]) -> InitialGuess {
    let n = nu.len();
    let s0_dbm = median(y[n - (n / 4).max(1)..].to_vec());
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(n);
            let depth = y[lo..hi].iter().map(|&v| 1.0 - dbm_to_mw(v - s0_dbm)).sum::<f64>();
            depth / (hi - lo) as f64
        })
        .collect();
    let half_point = |target: f64| {
        smooth
            .iter()
            .position(|&d| d <= target)
            .map(|k| {
                if k == 0 {
                    nu[0]
                } else {
                    let (d0, d1) = (smooth[k - 1], smooth[k]);
                    let w = if d0 > d1 { (d0 - target) / (d0 - d1) } else { 0.5 };
                    nu[k - 1] + w * (nu[k] - nu[k - 1])
                }
            })
            .unwrap_or(nu[n - 1])
    };
    let d_low = smooth[0].clamp(0.05, 0.95);
    let mut delta_hz = half_point(d_low / 2.0).max(nu[0]);
    let xi = (d_low * (1.0 + (nu[0] / delta_hz).powi(2))).clamp(0.05, 0.99);
    delta_hz = half_point(xi / 2.0).max(nu[0]).max(f64::MIN_POSITIVE);
    InitialGuess {
        s0_dbm,
        xi,
        delta_hz,
    }
}

/// Selected points after floor correction, window and exclusions.
fn usable_points(trace: &SpectrumTrace, config: &FitConfig) -> Result<(Vec<f64>, Vec<f64>, usize), FitError> {
    let (trace, dropped) = match &config.noise_floor {
        Some(floor) => {
            let c = subtract_noise_floor(trace, floor)?;
            (c.trace, c.dropped_hz.len())
        }
        None => (trace.clone(), 0),
    };
    let (nu, y): (Vec<f64>, Vec<f64>) = trace
        .points()
        .iter()
        .filter(|&&(f, p)| config.keeps(f) && p.is_finite())
        .copied()
        .unzip();
    Ok((nu, y, dropped))
}

/// Least-squares fit of the intensity-difference model.
pub fn fit_intensity_spectrum(trace: &SpectrumTrace, config: &FitConfig) -> Result<FitResult, FitError> {
    config.validate()?;
    if trace.len() < MIN_TRACE_POINTS {
        return Err(FitError::TraceTooShort(trace.len()));
    }
    let (nu, y, floor_dropped) = usable_points(trace, config)?;
    let required = POINTS_PER_PARAMETER * 3;
    if nu.len() < required {
        return Err(FitError::InsufficientPoints {
            used: nu.len(),
            required,
        });
    }
    let guess = config.initial_guess.unwrap_or_else(|| initial_guess(&nu, &y));
    let problem = IntensityProblem {
        nu: &nu,
        y: &y,
        weighting: config.weighting,
        reference_dbm: guess.s0_dbm,
    };
    let p0 = Vector3::new(guess.s0_dbm, guess.xi, guess.delta_hz);
    let out = lm::minimize(&problem, p0, config.max_iterations, config.convergence_tol);

    let p = out.params;
    let rms_residual_db = (nu
        .iter()
        .zip(&y)
        .map(|(&f, &v)| (v - model(f, &p).0).powi(2))
        .sum::<f64>()
        / nu.len() as f64)
        .sqrt();
    let dof = (nu.len() - 3) as f64;
    let covariance = inverse_normal(&out.normal).map(|inv| {
        let s2 = 2.0 * out.cost / dof;
        let mut c = [[0.0; 3]; 3];
        for (i, row) in c.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = s2 * inv[(i, j)];
            }
        }
        c
    });
    let mut warnings = Vec::new();
    if p[1] >= 1.0 - BOUNDARY_MARGIN {
        warnings.push("xi pinned at the upper bound 1".to_string());
    } else if p[1] <= XI_FLOOR + BOUNDARY_MARGIN {
        warnings.push("xi pinned at the lower bound".to_string());
    }
    let result = FitResult {
        s0_dbm: p[0],
        xi: p[1],
        delta_hz: p[2],
        rms_residual_db,
        points_used: nu.len(),
        covariance,
        iterations: out.iterations,
        weighting: config.weighting,
        floor_dropped,
        warnings,
    };
    if !out.converged {
        return Err(FitError::NotConverged {
            iterations: out.iterations,
            last: Box::new(result),
        });
    }
    Ok(result)
}

fn inverse_normal(a: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let d = a.diagonal().map(|x| if x > 0.0 { x.sqrt() } else { 1.0 });
    let scaled = Matrix3::from_fn(|i, j| a[(i, j)] / (d[i] * d[j]));
    let inv = scaled.try_inverse()?;
    Some(Matrix3::from_fn(|i, j| inv[(i, j)] / (d[i] * d[j])))
}

/// Phase-difference spectrum in dBm from the fitted parameters alone.
pub fn predict_phase_spectrum(fit: &FitResult, nu_hz: &[f64]) -> Result<SpectrumCurve, SpectrumError> {
    model_curve_dbm(&fit.params(), nu_hz, SpectrumKind::Phase)
}

/// Dc-extrapolated squeezing `10 log10(1 − ξ)` relative to shot noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DcSqueezing {
    Finite(f64),
    /// `ξ = 1` or a floor reaching the dc level: complete correlation at dc.
    Complete,
}

impl DcSqueezing {
    pub fn db(self) -> Option<f64> {
        match self {
            DcSqueezing::Finite(v) => Some(v),
            DcSqueezing::Complete => None,
        }
    }

    pub fn from_relative(rel: f64) -> Self {
        if rel > 0.0 {
            DcSqueezing::Finite(10.0 * rel.log10())
        } else {
            DcSqueezing::Complete
        }
    }
}

impl std::fmt::Display for DcSqueezing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DcSqueezing::Finite(v) => write!(f, "{v:.2} dB"),
            DcSqueezing::Complete => f.write_str("complete correlation at dc"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SqueezingReport {
    pub xi: f64,
    pub bandwidth_hz: f64,
    pub dc_raw: DcSqueezing,
    /// Dc level with the detection floor (taken at the lowest trace
    /// frequency) removed from the signal.
    pub dc_corrected: Option<DcSqueezing>,
    /// How far the floor sits below the dc level, in dB.
    pub floor_margin_db: Option<f64>,
    /// Deepest trace point relative to the fitted `S₀`.
    pub observed_min_db: f64,
    pub observed_min_hz: f64,
}

pub fn report_squeezing(
    trace: &SpectrumTrace,
    fit: &FitResult,
    floor: Option<&SpectrumTrace>,
) -> Result<SqueezingReport, FitError> {
    let dc_rel = 1.0 - fit.xi;
    let (observed_min_hz, min_dbm) = trace
        .points()
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("trace is never empty");
    let (dc_corrected, floor_margin_db) = match floor {
        None => (None, None),
        Some(floor) => {
            let nu0 = trace.span_hz().0;
            let n = floor.linear_power_at(nu0).ok_or(TraceError::FloorCoverage {
                floor_lo: floor.span_hz().0,
                floor_hi: floor.span_hz().1,
                lo: nu0,
                hi: trace.span_hz().1,
            })?;
            let n_rel = n / dbm_to_mw(fit.s0_dbm);
            let margin = if dc_rel > 0.0 && n_rel > 0.0 {
                Some(10.0 * (dc_rel / n_rel).log10())
            } else {
                None
            };
            (Some(DcSqueezing::from_relative(dc_rel - n_rel)), margin)
        }
    };
    Ok(SqueezingReport {
        xi: fit.xi,
        bandwidth_hz: fit.delta_hz,
        dc_raw: DcSqueezing::from_relative(dc_rel),
        dc_corrected,
        floor_margin_db,
        observed_min_db: min_dbm - fit.s0_dbm,
        observed_min_hz,
    })
}
