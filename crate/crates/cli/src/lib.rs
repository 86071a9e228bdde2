//! Command-line front end. Every subcommand builds its full output in memory
//! and only then writes it, so a failing run leaves no partial files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use twinbeam::config::{Config, ConfigError};
use twinbeam::fit::{
    fit_intensity_spectrum, parse_trace, predict_phase_spectrum, report_squeezing, stepped_grid,
    synth_trace, write_trace, FitConfig, FitError, SpectrumTrace, TraceError,
};
use twinbeam::fock::{
    apply_beam_splitter, coincidence_probability, make_fock, number_difference_stats,
    BeamSplitter, FockError, ModeLabel, MultimodeState, Polarization, Port,
};
use twinbeam::spectra::{
    intensity_diff_spectrum, model_curve_dbm, phase_diff_spectrum, uncertainty_product, Cavity,
    OpoParams, SpectrumError, SpectrumKind,
};

/// Built-in defaults, also printed by the `defaults` subcommand.
pub const DEFAULTS: &str = include_str!("../defaults.conf");

pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const PARSE: i32 = 3;
    pub const VALIDATION: i32 = 4;
    pub const CONVERGENCE: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Convergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => exit::IO,
            CliError::Parse(_) => exit::PARSE,
            CliError::Validation(_) => exit::VALIDATION,
            CliError::Convergence(_) => exit::CONVERGENCE,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<SpectrumError> for CliError {
    fn from(e: SpectrumError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<FockError> for CliError {
    fn from(e: FockError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn trace_error(path: &Path, e: TraceError) -> CliError {
    match e {
        TraceError::Parse { line, message } => CliError::Parse(format!("{}:{line}: {message}", path.display())),
        TraceError::Io(message) => CliError::Io {
            path: path.display().to_string(),
            message,
        },
        TraceError::Empty => CliError::Parse(format!("{}: {e}", path.display())),
        other => CliError::Validation(format!("{}: {other}", path.display())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Intensity,
    Phase,
    Flat,
}

impl From<Kind> for SpectrumKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Intensity => SpectrumKind::Intensity,
            Kind::Phase => SpectrumKind::Phase,
            Kind::Flat => SpectrumKind::Flat,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "twinbeam", version, about = "Twin-beam interference simulation and spectrum fitting")]
pub struct Cli {
    /// Configuration file layered over the built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Write the main output here instead of stdout.
    #[arg(long, short, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Two-port number-state scattering: outcome distribution, ΔN₋ and coincidences.
    Hom(HomArgs),
    /// ΔN₋ against N for |N,0⟩ and |N,N⟩ inputs.
    Limits(LimitsArgs),
    /// Model noise spectra in dBm with the shot-noise reference.
    Spectra(SpectraArgs),
    /// Fit an intensity-difference trace and predict the phase-difference spectrum.
    Fit(FitArgs),
    /// Spectra product and its excess over the minimum-uncertainty value.
    Uncertainty(UncertaintyArgs),
    /// Synthesize a spectrum-analyzer trace from the model.
    Synth(SynthArgs),
    /// Print the built-in configuration.
    Defaults,
}

#[derive(Debug, Args)]
pub struct HomArgs {
    #[arg(long, default_value_t = 1)]
    pub na: usize,
    #[arg(long, default_value_t = 1)]
    pub nb: usize,
    /// Put the two inputs at different frequencies.
    #[arg(long)]
    pub distinguishable: bool,
    /// Waveplate angle in radians; the ports mix at twice this angle.
    #[arg(long)]
    pub theta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LimitsArgs {
    #[arg(long)]
    pub n_max: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub s0_dbm: Option<f64>,
    #[arg(long, conflicts_with_all = ["transmission", "loss", "fsr_hz"])]
    pub xi: Option<f64>,
    #[arg(long, conflicts_with_all = ["transmission", "loss", "fsr_hz"])]
    pub delta_hz: Option<f64>,
    /// Output-coupler transmission; derives ξ and δ with --loss and --fsr-hz.
    #[arg(long, requires_all = ["loss", "fsr_hz"])]
    pub transmission: Option<f64>,
    #[arg(long, requires = "transmission")]
    pub loss: Option<f64>,
    #[arg(long, requires = "transmission")]
    pub fsr_hz: Option<f64>,
    /// Frequency grid as `start,stop,step` in Hz.
    #[arg(long, value_name = "START,STOP,STEP")]
    pub grid_hz: Option<String>,
}

#[derive(Debug, Args)]
pub struct SpectraArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value = "intensity")]
    pub kind: Kind,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Trace CSV (`frequency_hz,power_dbm`).
    pub trace: PathBuf,
    /// Detection-floor trace subtracted in linear power before fitting.
    #[arg(long, value_name = "PATH")]
    pub floor: Option<PathBuf>,
    /// Write the predicted phase-difference curve here as CSV.
    #[arg(long, value_name = "PATH")]
    pub phase_curve: Option<PathBuf>,
    /// Fit window as `lo,hi` in Hz.
    #[arg(long, value_name = "LO,HI")]
    pub window_hz: Option<String>,
    /// Exclusion bands as `lo:hi,lo:hi` in Hz, or `none`.
    #[arg(long, value_name = "BANDS")]
    pub exclusions_hz: Option<String>,
    #[arg(long, value_parser = ["db", "linear"])]
    pub weighting: Option<String>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct UncertaintyArgs {
    #[arg(long)]
    pub xi: Option<f64>,
    /// Normalized frequencies, comma separated.
    #[arg(long, value_name = "U,U,...")]
    pub u: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value = "intensity")]
    pub kind: Kind,
    #[arg(long)]
    pub noise_db: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rbw_hz: Option<f64>,
    #[arg(long)]
    pub label: Option<String>,
}

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("fock_engine", &["max_cutoff"]),
    ("opo_spectra", &["s0_dbm", "xi", "delta_hz", "transmission", "loss", "fsr_hz", "grid_hz"]),
    ("trace_fit", twinbeam::fit::CONFIG_KEYS),
    ("cli", &["hom_theta", "limits_n_max", "uncertainty_u", "synth_noise_db", "synth_seed"]),
];

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn load_trace_file(path: &Path) -> Result<SpectrumTrace, CliError> {
    let text = read_file(path)?;
    parse_trace(&text).map_err(|e| trace_error(path, e))
}

/// Defaults, then the `--config` file, then flags.
fn settings(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = Config::parse_named(DEFAULTS, Some("defaults"))?;
    if let Some(path) = &cli.config {
        let text = read_file(path)?;
        cfg.overlay(Config::parse_named(&text, Some(&path.display().to_string()))?);
    }
    for key in cfg.keys().map(str::to_string).collect::<Vec<_>>() {
        let ns = key.split('.').next().unwrap_or_default();
        match KNOWN_KEYS.iter().find(|(n, _)| *n == ns) {
            Some((n, names)) => cfg.reject_unknown(n, names)?,
            None => {
                return Err(ConfigError::UnknownKey {
                    origin: cfg.origin(&key),
                    key,
                }
                .into())
            }
        }
    }
    let mut set = |key: &str, v: Option<String>| {
        if let Some(v) = v {
            cfg.set(key, v);
        }
    };
    match &cli.command {
        Command::Hom(a) => set("cli.hom_theta", a.theta.map(|t| t.to_string())),
        Command::Limits(a) => set("cli.limits_n_max", a.n_max.map(|n| n.to_string())),
        Command::Spectra(SpectraArgs { model, .. }) | Command::Synth(SynthArgs { model, .. }) => {
            set("opo_spectra.s0_dbm", model.s0_dbm.map(|v| v.to_string()));
            set("opo_spectra.xi", model.xi.map(|v| v.to_string()));
            set("opo_spectra.delta_hz", model.delta_hz.map(|v| v.to_string()));
            set("opo_spectra.transmission", model.transmission.map(|v| v.to_string()));
            set("opo_spectra.loss", model.loss.map(|v| v.to_string()));
            set("opo_spectra.fsr_hz", model.fsr_hz.map(|v| v.to_string()));
            set("opo_spectra.grid_hz", model.grid_hz.clone());
            if let Command::Synth(s) = &cli.command {
                set("cli.synth_noise_db", s.noise_db.map(|v| v.to_string()));
                set("cli.synth_seed", s.seed.map(|v| v.to_string()));
            }
        }
        Command::Fit(a) => {
            set("trace_fit.fit_window_hz", a.window_hz.clone());
            set("trace_fit.exclusions_hz", a.exclusions_hz.clone());
            set("trace_fit.weighting", a.weighting.clone());
            set("trace_fit.max_iterations", a.max_iterations.map(|v| v.to_string()));
            set("trace_fit.noise_floor", a.floor.as_ref().map(|p| p.display().to_string()));
        }
        Command::Uncertainty(a) => {
            set("opo_spectra.xi", a.xi.map(|v| v.to_string()));
            set("cli.uncertainty_u", a.u.clone());
        }
        Command::Defaults => {}
    }
    Ok(cfg)
}

fn required<T>(key: &str, v: Option<T>) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Validation(format!("missing setting `{key}`")))
}

fn f64_setting(cfg: &Config, key: &str) -> Result<f64, CliError> {
    let v = cfg.get_f64(key)?;
    required(key, v)
}

/// Cavity parameters win over `ξ` and `δ` when a transmission is set.
fn model_params(cfg: &Config) -> Result<OpoParams, CliError> {
    let s0 = f64_setting(cfg, "opo_spectra.s0_dbm")?;
    if cfg.get("opo_spectra.transmission").is_some() {
        let cavity = Cavity::new(
            f64_setting(cfg, "opo_spectra.transmission")?,
            f64_setting(cfg, "opo_spectra.loss")?,
            f64_setting(cfg, "opo_spectra.fsr_hz")?,
        )?;
        return Ok(OpoParams::from_cavity(cavity, s0)?);
    }
    Ok(OpoParams::new(
        s0,
        f64_setting(cfg, "opo_spectra.xi")?,
        f64_setting(cfg, "opo_spectra.delta_hz")?,
    )?)
}

fn grid(cfg: &Config) -> Result<Vec<f64>, CliError> {
    let key = "opo_spectra.grid_hz";
    match cfg.get_f64_list(key)?.as_deref() {
        Some(&[start, stop, step]) if step > 0.0 && stop >= start && start >= 0.0 => {
            if (stop - start) / step > 1e7 {
                return Err(CliError::Validation(format!("`{key}` has more than 10^7 points")));
            }
            Ok(stepped_grid(start, stop, step))
        }
        _ => Err(CliError::Validation(format!(
            "`{key}` must be `start, stop, step` with 0 <= start <= stop and step > 0"
        ))),
    }
}

fn json_string(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// A finished output: `None` goes to stdout.
pub struct Artifact {
    pub path: Option<PathBuf>,
    pub content: String,
}

/// Runs the command and returns its outputs without writing anything.
pub fn execute(cli: &Cli) -> Result<Vec<Artifact>, CliError> {
    let cfg = settings(cli)?;
    let main = match &cli.command {
        Command::Hom(a) => hom(&cfg, a, cli.format)?,
        Command::Limits(_) => limits(&cfg, cli.format)?,
        Command::Spectra(a) => spectra(&cfg, a.kind.into(), cli.format)?,
        Command::Uncertainty(_) => uncertainty(&cfg, cli.format)?,
        Command::Synth(a) => synth(&cfg, a, cli.format)?,
        Command::Fit(a) => return fit(&cfg, a, cli),
        Command::Defaults => DEFAULTS.to_string(),
    };
    Ok(vec![Artifact {
        path: cli.output.clone(),
        content: main,
    }])
}

/// Writes every artifact; files go through a temporary sibling and a rename.
pub fn write_artifacts(artifacts: &[Artifact]) -> Result<(), CliError> {
    let io = |p: &Path, e: std::io::Error| CliError::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    let mut staged = Vec::new();
    for a in artifacts {
        if let Some(path) = &a.path {
            let mut tmp = path.clone().into_os_string();
            tmp.push(".partial");
            let tmp = PathBuf::from(tmp);
            if let Err(e) = fs::write(&tmp, &a.content) {
                for (t, _) in &staged {
                    let _ = fs::remove_file(t);
                }
                return Err(io(path, e));
            }
            staged.push((tmp, path.clone()));
        }
    }
    for (tmp, path) in &staged {
        fs::rename(tmp, path).map_err(|e| io(path, e))?;
    }
    for a in artifacts.iter().filter(|a| a.path.is_none()) {
        print!("{}", a.content);
    }
    Ok(())
}

fn hom(cfg: &Config, a: &HomArgs, format: Format) -> Result<String, CliError> {
    let theta = f64_setting(cfg, "cli.hom_theta")?;
    let max_cutoff = required("fock_engine.max_cutoff", cfg.get_parsed::<usize>("fock_engine.max_cutoff")?)?;
    let cutoff = (a.na + a.nb).max(1);
    if cutoff > max_cutoff {
        return Err(CliError::Validation(format!(
            "n_a + n_b = {cutoff} exceeds fock_engine.max_cutoff = {max_cutoff}"
        )));
    }
    let tag_b = u8::from(a.distinguishable);
    let input = MultimodeState::fock(
        vec![
            ModeLabel::new(Port::A, Polarization::H, 0),
            ModeLabel::new(Port::B, Polarization::H, tag_b),
        ],
        &[a.na, a.nb],
        cutoff,
    )?;
    let out = apply_beam_splitter(&input, &BeamSplitter::balanced().with_angle(2.0 * theta))?;
    let stats = number_difference_stats(&out, Port::C, Port::D)?;
    let coincidence = coincidence_probability(&out, Port::C, Port::D)?;
    // drop exact and rounding zeros from the listing
    let dist: Vec<(i64, f64)> = stats.distribution.iter().map(|(&k, &p)| (k, p)).filter(|&(_, p)| p > 1e-15).collect();
    Ok(match format {
        Format::Json => json_string(&json!({
            "n_a": a.na,
            "n_b": a.nb,
            "distinguishable": a.distinguishable,
            "theta": theta,
            "delta_n_minus": stats.std_dev(),
            "mean": stats.mean,
            "coincidence_probability": coincidence,
            "distribution": dist.iter().map(|(k, p)| json!({"difference": k, "probability": p})).collect::<Vec<_>>(),
        })),
        Format::Csv => {
            let mut s = String::from("difference,probability\n");
            for (k, p) in &dist {
                let _ = writeln!(s, "{k},{p}");
            }
            s
        }
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "n_a = {}\nn_b = {}\ndistinguishable = {}\ntheta = {theta}", a.na, a.nb, a.distinguishable);
            let _ = writeln!(s, "delta_n_minus = {:.12}", stats.std_dev());
            let _ = writeln!(s, "mean = {:.12}", stats.mean);
            let _ = writeln!(s, "coincidence_probability = {:.12}", coincidence.max(0.0));
            for (k, p) in &dist {
                let _ = writeln!(s, "p({k}) = {p:.12}");
            }
            s
        }
    })
}

fn limits(cfg: &Config, format: Format) -> Result<String, CliError> {
    let n_max = required("cli.limits_n_max", cfg.get_parsed::<usize>("cli.limits_n_max")?)?;
    let max_cutoff = required("fock_engine.max_cutoff", cfg.get_parsed::<usize>("fock_engine.max_cutoff")?)?;
    if 2 * n_max > max_cutoff {
        return Err(CliError::Validation(format!(
            "n_max = {n_max} needs cutoff {} above fock_engine.max_cutoff = {max_cutoff}",
            2 * n_max
        )));
    }
    let bs = BeamSplitter::balanced();
    let mut rows = Vec::new();
    for n in 0..=n_max {
        let cutoff = (2 * n).max(1);
        let single = number_difference_stats(&apply_beam_splitter(&make_fock(n, 0, cutoff)?, &bs)?, Port::C, Port::D)?;
        let twin = number_difference_stats(&apply_beam_splitter(&make_fock(n, n, cutoff)?, &bs)?, Port::C, Port::D)?;
        rows.push((n, single.std_dev(), twin.std_dev(), (n as f64).sqrt()));
    }
    Ok(match format {
        Format::Json => json_string(&json!(rows
            .iter()
            .map(|&(n, c, t, r)| json!({"n": n, "dn_single_port": c, "dn_twin": t, "sqrt_n": r, "n_scaling": n}))
            .collect::<Vec<_>>())),
        Format::Csv => {
            let mut s = String::from("n,dn_single_port,dn_twin,sqrt_n,n_scaling\n");
            for (n, c, t, r) in rows {
                let _ = writeln!(s, "{n},{c},{t},{r},{n}");
            }
            s
        }
        Format::Text => {
            let mut s = format!("{:>4} {:>16} {:>10} {:>10} {:>10}\n", "N", "dN(|N,0>)", "dN(|N,N>)", "sqrt(N)", "N");
            for (n, c, t, r) in rows {
                let _ = writeln!(s, "{n:>4} {c:>16.6} {t:>10.6} {r:>10.6} {n:>10}");
            }
            s
        }
    })
}

fn spectra(cfg: &Config, kind: SpectrumKind, format: Format) -> Result<String, CliError> {
    let params = model_params(cfg)?;
    let nu = grid(cfg)?;
    let model = model_curve_dbm(&params, &nu, kind)?;
    let flat = model_curve_dbm(&params, &nu, SpectrumKind::Flat)?;
    Ok(match format {
        Format::Json => json_string(&json!({
            "s0_dbm": params.s0_dbm,
            "xi": params.xi,
            "delta_hz": params.delta_hz,
            "kind": kind,
            "frequency_hz": nu,
            "model_dbm": model.values(),
            "shot_noise_dbm": flat.values(),
        })),
        Format::Csv | Format::Text => {
            let mut s = String::from("frequency_hz,model_dbm,shot_noise_dbm\n");
            for ((f, m), r) in nu.iter().zip(model.values()).zip(flat.values()) {
                let _ = writeln!(s, "{f},{m},{r}");
            }
            s
        }
    })
}

fn uncertainty(cfg: &Config, format: Format) -> Result<String, CliError> {
    let xi = f64_setting(cfg, "opo_spectra.xi")?;
    if !(0.0..=1.0).contains(&xi) {
        return Err(SpectrumError::InvalidXi(xi).into());
    }
    let us = required("cli.uncertainty_u", cfg.get_f64_list("cli.uncertainty_u")?)?;
    if let Some(bad) = us.iter().find(|&&u| u <= 0.0) {
        return Err(CliError::Validation(format!("normalized frequency {bad} must be positive")));
    }
    let mut rows = Vec::new();
    for &u in &us {
        let product = uncertainty_product(u, xi)?;
        rows.push((u, intensity_diff_spectrum(u, xi), phase_diff_spectrum(u, xi)?, product, product - 1.0));
    }
    Ok(match format {
        Format::Json => json_string(&json!({
            "xi": xi,
            "rows": rows.iter().map(|&(u, x, p, prod, ex)| json!({"u": u, "s_x": x, "s_p": p, "product": prod, "excess": ex})).collect::<Vec<_>>(),
        })),
        Format::Csv => {
            let mut s = String::from("u,s_x,s_p,product,excess\n");
            for (u, x, p, prod, ex) in rows {
                let _ = writeln!(s, "{u},{x},{p},{prod},{ex}");
            }
            s
        }
        Format::Text => {
            let mut s = format!("xi = {xi}\n{:>8} {:>10} {:>12} {:>10} {:>10}\n", "u", "S_X", "S_P", "product", "excess");
            for (u, x, p, prod, ex) in rows {
                let _ = writeln!(s, "{u:>8} {x:>10.4} {p:>12.4} {prod:>10.4} {ex:>10.4}");
            }
            s
        }
    })
}

fn synth(cfg: &Config, a: &SynthArgs, format: Format) -> Result<String, CliError> {
    let params = model_params(cfg)?;
    let nu = grid(cfg)?;
    let noise = f64_setting(cfg, "cli.synth_noise_db")?;
    if noise < 0.0 {
        return Err(CliError::Validation("cli.synth_noise_db must be non-negative".into()));
    }
    let seed = required("cli.synth_seed", cfg.get_parsed::<u64>("cli.synth_seed")?)?;
    let mut trace = synth_trace(&params, a.kind.into(), &nu, noise, seed)?;
    if let Some(rbw) = a.rbw_hz {
        if !(rbw > 0.0 && rbw.is_finite()) {
            return Err(CliError::Validation("--rbw-hz must be positive".into()));
        }
        trace.rbw_hz = Some(rbw);
    }
    if let Some(label) = &a.label {
        trace.label = Some(label.clone());
    }
    Ok(match format {
        Format::Json => json_string(&serde_json::to_value(&trace).expect("trace serializes")),
        Format::Csv | Format::Text => {
            let mut buf = Vec::new();
            write_trace(&trace, &mut buf).expect("writing to memory");
            String::from_utf8(buf).expect("trace CSV is UTF-8")
        }
    })
}

fn fit(cfg: &Config, a: &FitArgs, cli: &Cli) -> Result<Vec<Artifact>, CliError> {
    let mut fit_cfg = FitConfig::from_config(cfg)?;
    let floor = match cfg.get("trace_fit.noise_floor") {
        Some(p) if !p.is_empty() && !p.eq_ignore_ascii_case("none") => Some(load_trace_file(Path::new(p))?),
        _ => None,
    };
    fit_cfg.noise_floor = floor.clone();
    let trace = load_trace_file(&a.trace)?;
    let result = fit_intensity_spectrum(&trace, &fit_cfg).map_err(|e| match e {
        FitError::NotConverged { .. } => CliError::Convergence(format!("{}: {e}", a.trace.display())),
        FitError::Trace(t) => trace_error(&a.trace, t),
        other => CliError::Validation(format!("{}: {other}", a.trace.display())),
    })?;
    let report = report_squeezing(&trace, &result, floor.as_ref()).map_err(|e| CliError::Validation(e.to_string()))?;
    let nu: Vec<f64> = trace.frequencies_hz().into_iter().filter(|&f| f > 0.0).collect();
    let phase = predict_phase_spectrum(&result, &nu)?;

    let main = match cli.format {
        Format::Json => json_string(&json!({
            "fit": result,
            "squeezing": report,
            "phase_prediction": {"frequency_hz": phase.frequencies_hz(), "power_dbm": phase.values()},
        })),
        Format::Text | Format::Csv => {
            let mut s = result.to_key_value();
            let _ = writeln!(s, "dc_squeezing_raw = {}", report.dc_raw);
            if let Some(c) = report.dc_corrected {
                let _ = writeln!(s, "dc_squeezing_corrected = {c}");
            }
            if let Some(m) = report.floor_margin_db {
                let _ = writeln!(s, "floor_margin_db = {m:.3}");
            }
            let _ = writeln!(s, "squeezing_bandwidth_hz = {}", report.bandwidth_hz);
            let _ = writeln!(s, "observed_min_db = {:.3} at {} Hz", report.observed_min_db, report.observed_min_hz);
            if let Some(p) = &a.phase_curve {
                let _ = writeln!(s, "phase_curve = {}", p.display());
            }
            s
        }
    };
    let mut out = vec![Artifact {
        path: cli.output.clone(),
        content: main,
    }];
    if let Some(p) = &a.phase_curve {
        let mut buf = Vec::new();
        phase.write_csv(&mut buf).expect("writing to memory");
        out.push(Artifact {
            path: Some(p.clone()),
            content: String::from_utf8(buf).expect("CSV is UTF-8"),
        });
    }
    Ok(out)
}

/// Parses `args`, runs, writes, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match execute(&cli).and_then(|a| write_artifacts(&a)) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
