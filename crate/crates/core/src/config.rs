//! JSON run configuration: schema, presets and validation.
//!
//! Every physical quantity carries its unit in the key name. Validation
//! applies defaults, checks physics constraints and reports every problem it
//! finds as a [`ConfigIssue`] with a JSON-pointer path.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cavity::{RB87_CLOCK_SPLITTING_HZ, RB87_D2_LINEWIDTH_HZ, RB87_D2_WAVELENGTH};
use crate::coupling::DEFAULT_DRIFT_VELOCITY;
use crate::error::{ConfigIssue, Error, Result};
use crate::experiment::Experiment;
use crate::montecarlo::PriorKind;
use crate::sequence::SegmentSpec;

pub const DEFAULT_ETA_IN: f64 = 0.35;
pub const DEFAULT_DEAD_TIME_US: f64 = 20.0;

const PRESETS: &[(&str, &str)] = &[
    ("fig2d", include_str!("../presets/fig2d.json")),
    ("fig3_low", include_str!("../presets/fig3_low.json")),
    ("fig3_high", include_str!("../presets/fig3_high.json")),
    ("contrast73", include_str!("../presets/contrast73.json")),
];

const REQUIRED_KEYS: &[&str] = &["cavity", "probe", "ensemble", "sequence"];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// Raw JSON text of a shipped preset.
pub fn preset_json(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub cavity: CavityConfig,
    pub probe: ProbeConfig,
    #[serde(default)]
    pub lock: LockConfig,
    pub ensemble: EnsembleConfig,
    pub sequence: SequenceConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub contrast: ContrastConfig,
    #[serde(default)]
    pub curve: CurveConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    pub length_cm: f64,
    pub finesse: f64,
    /// 1/e² intensity radius of the mode at the atoms.
    pub mode_waist_um: f64,
    /// Peak single-atom coupling g/2π.
    pub g_max_khz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Δ₂/2π, detuning from the upper clock state's transition.
    pub detuning_upper_ghz: f64,
    /// Δ₁/2π; defaults to Δ₂/2π minus the clock splitting.
    #[serde(default)]
    pub detuning_lower_ghz: Option<f64>,
    pub power_nw: f64,
    #[serde(default = "default_wavelength_nm")]
    pub wavelength_nm: f64,
    #[serde(default = "default_eta_in")]
    pub eta_in: f64,
    /// Natural linewidth Γ/2π.
    #[serde(default = "default_linewidth_mhz")]
    pub linewidth_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LockConfig {
    /// Recorded for completeness; the lock light does not enter the model.
    #[serde(default)]
    pub power_nw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_atoms: f64,
    pub radius_um: f64,
    #[serde(default)]
    pub temperature_uk: f64,
    #[serde(default = "default_drift")]
    pub drift_velocity_cm_s: f64,
    /// Seed for the sampled cloud used in dephasing calculations.
    #[serde(default = "default_sample_seed")]
    pub sample_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceConfig {
    Echo(EchoConfig),
    NoEcho(NoEchoConfig),
    Segments(Vec<SegmentSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EchoConfig {
    pub tau_sq_us: f64,
    pub tau_off_us: f64,
    pub tau_pi_us: f64,
    #[serde(default = "default_tau_meas_us")]
    pub tau_meas_us: f64,
    #[serde(default)]
    pub theta_rad: f64,
    #[serde(default)]
    pub axis_phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoEchoConfig {
    pub tau_pulse_us: f64,
    pub tau_off_us: f64,
    #[serde(default = "default_tau_meas_us")]
    pub tau_meas_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// Prior variance N/4.
    Uniform,
    /// Prior variance from the mean squared coupling, in Ω̄J_z units.
    Inhomogeneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Histogram bins; `null` picks a Freedman–Diaconis width.
    #[serde(default = "default_bins")]
    pub bins: Option<usize>,
    #[serde(default = "default_prior")]
    pub prior: PriorKind,
    #[serde(default = "default_projection")]
    pub projection: ProjectionMode,
    #[serde(default = "default_true")]
    pub scattering: bool,
    #[serde(default = "default_dead_time_us")]
    pub buildup_dead_time_us: f64,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_bins() -> Option<usize> {
    Some(20)
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            shots: default_shots(),
            master_seed: 0,
            bins: default_bins(),
            prior: default_prior(),
            projection: default_projection(),
            scattering: true,
            buildup_dead_time_us: DEFAULT_DEAD_TIME_US,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastConfig {
    /// Single-pulse control without echo.
    #[serde(default = "default_no_echo_pulse_us")]
    pub no_echo_pulse_us: f64,
    #[serde(default = "default_no_echo_off_us")]
    pub no_echo_off_us: f64,
    #[serde(default = "default_dephasing_step_us")]
    pub dephasing_step_us: f64,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        Self {
            no_echo_pulse_us: default_no_echo_pulse_us(),
            no_echo_off_us: default_no_echo_off_us(),
            dephasing_step_us: default_dephasing_step_us(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    #[serde(default = "default_theta_points")]
    pub theta_points: usize,
    /// Powers for the antisqueezing curve; the probe power when absent.
    #[serde(default)]
    pub powers_nw: Option<Vec<f64>>,
    #[serde(default = "default_curve_atoms")]
    pub n_atoms: Vec<f64>,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            theta_points: default_theta_points(),
            powers_nw: None,
            n_atoms: default_curve_atoms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub parameters: Vec<SweepParameter>,
    /// Also run a Monte Carlo ensemble at every point.
    #[serde(default)]
    pub monte_carlo: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParameter {
    /// Dotted path into the config, e.g. `probe.power_nw`.
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub path: Option<String>,
}

fn default_wavelength_nm() -> f64 {
    RB87_D2_WAVELENGTH * 1e9
}
fn default_eta_in() -> f64 {
    DEFAULT_ETA_IN
}
fn default_linewidth_mhz() -> f64 {
    RB87_D2_LINEWIDTH_HZ * 1e-6
}
fn default_drift() -> f64 {
    DEFAULT_DRIFT_VELOCITY * 100.0
}
fn default_sample_seed() -> u64 {
    1
}
fn default_tau_meas_us() -> f64 {
    300.0
}
fn default_shots() -> usize {
    1000
}
fn default_prior() -> PriorKind {
    PriorKind::Gaussian
}
fn default_projection() -> ProjectionMode {
    ProjectionMode::Inhomogeneous
}
fn default_true() -> bool {
    true
}
fn default_dead_time_us() -> f64 {
    DEFAULT_DEAD_TIME_US
}
fn default_no_echo_pulse_us() -> f64 {
    20.0
}
fn default_no_echo_off_us() -> f64 {
    60.0
}
fn default_dephasing_step_us() -> f64 {
    1.0
}
fn default_theta_points() -> usize {
    91
}
fn default_curve_atoms() -> Vec<f64> {
    (1..=6).map(|k| k as f64 * 1e4).collect()
}

fn issue(path: impl Into<String>, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue {
        path: path.into(),
        message: message.into(),
    }
}

/// Reads and validates a config file. A name of a shipped preset is accepted
/// in place of a path when no such file exists.
pub fn validate_config(file: &Path) -> Result<RunConfig> {
    if !file.exists() {
        if let Some(text) = file.to_str().and_then(preset_json) {
            return validate_str(text);
        }
    }
    let text = std::fs::read_to_string(file)
        .map_err(|e| Error::Config(vec![issue("", format!("cannot read {}: {e}", file.display()))]))?;
    validate_str(&text)
}

/// Validates config text. Empty or whitespace-only text counts as `{}`.
pub fn validate_str(text: &str) -> Result<RunConfig> {
    let value: Value = if text.trim().is_empty() {
        Value::Object(Map::new())
    } else {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![issue("", format!("malformed JSON: {e}"))]))?
    };
    validate_value(value)
}

/// Validates a parsed config. A top-level `"preset": NAME` key starts from
/// that preset and overlays the remaining keys on it.
pub fn validate_value(value: Value) -> Result<RunConfig> {
    let Value::Object(mut obj) = value else {
        return Err(Error::Config(vec![issue("", "config must be a JSON object")]));
    };
    if let Some(preset) = obj.remove("preset") {
        let name = preset.as_str().unwrap_or_default().to_owned();
        let Some(text) = preset_json(&name) else {
            return Err(Error::Config(vec![issue(
                "/preset",
                format!("unknown preset `{name}` (available: {})", preset_names().join(", ")),
            )]));
        };
        let mut base: Value = serde_json::from_str(text).expect("shipped presets are valid JSON");
        merge(&mut base, Value::Object(obj));
        let Value::Object(merged) = base else { unreachable!() };
        obj = merged;
    }

    let missing: Vec<ConfigIssue> = REQUIRED_KEYS
        .iter()
        .filter(|k| !obj.contains_key(**k))
        .map(|k| issue(format!("/{k}"), "required key missing"))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(missing));
    }

    let mut config: RunConfig = serde_path_to_error::deserialize(Value::Object(obj)).map_err(|e| {
        let path = pointer(&e.path().to_string());
        Error::Config(vec![issue(path, e.into_inner().to_string())])
    })?;
    config.resolve_defaults();
    let issues = config.physics_issues();
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    Experiment::from_config(&config).map_err(|e| match e {
        Error::Sequence { index, reason } => {
            Error::Config(vec![issue("/sequence", format!("segment {index}: {reason}"))])
        }
        Error::InvalidParameter { name, reason } => Error::Config(vec![issue(format!("/{name}"), reason)]),
        other => other,
    })?;
    Ok(config)
}

/// `ensemble.n_atoms` or `sequence.segments[2].kind` to a JSON pointer.
fn pointer(dotted: &str) -> String {
    if dotted == "." || dotted.is_empty() {
        return String::new();
    }
    let mut out = String::new();
    for part in dotted.split('.') {
        let mut rest = part;
        while let Some(open) = rest.find('[') {
            if open > 0 {
                out.push('/');
                out.push_str(&rest[..open]);
            }
            let close = rest[open..].find(']').map_or(rest.len(), |c| open + c);
            out.push('/');
            out.push_str(&rest[open + 1..close]);
            rest = rest.get(close + 1..).unwrap_or("");
        }
        if !rest.is_empty() {
            out.push('/');
            out.push_str(rest);
        }
    }
    out
}

/// Recursive object merge; non-object values in `overlay` replace `base`.
pub fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets `value` at a dotted path such as `probe.power_nw`. The path must
/// already exist in `root`.
pub fn set_path(root: &mut Value, dotted: &str, value: Value) -> std::result::Result<(), String> {
    let mut cur = root;
    let parts: Vec<&str> = dotted.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let next = match cur {
            Value::Object(map) => map.get_mut(*part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|k| items.get_mut(k)),
            _ => None,
        };
        match next {
            Some(slot) if i + 1 == parts.len() => {
                *slot = value;
                return Ok(());
            }
            Some(slot) => cur = slot,
            None => return Err(format!("path `{dotted}` does not exist in the config")),
        }
    }
    Err(format!("path `{dotted}` is empty"))
}

impl RunConfig {
    fn resolve_defaults(&mut self) {
        if self.probe.detuning_lower_ghz.is_none() {
            self.probe.detuning_lower_ghz = Some(self.probe.detuning_upper_ghz - RB87_CLOCK_SPLITTING_HZ * 1e-9);
        }
        if self.curve.powers_nw.is_none() {
            self.curve.powers_nw = Some(vec![self.probe.power_nw]);
        }
    }

    /// Every physics violation, each at its JSON-pointer path.
    pub fn physics_issues(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut positive = |path: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                out.push(issue(path, format!("must be finite and > 0, got {v}")));
            }
        };
        positive("/cavity/length_cm", self.cavity.length_cm);
        positive("/cavity/mode_waist_um", self.cavity.mode_waist_um);
        positive("/probe/wavelength_nm", self.probe.wavelength_nm);
        positive("/probe/linewidth_mhz", self.probe.linewidth_mhz);
        positive("/ensemble/radius_um", self.ensemble.radius_um);
        positive("/contrast/no_echo_pulse_us", self.contrast.no_echo_pulse_us);
        positive("/contrast/dephasing_step_us", self.contrast.dephasing_step_us);

        let mut non_negative = |path: &str, v: f64| {
            if !(v.is_finite() && v >= 0.0) {
                out.push(issue(path, format!("must be finite and >= 0, got {v}")));
            }
        };
        non_negative("/cavity/g_max_khz", self.cavity.g_max_khz);
        non_negative("/probe/power_nw", self.probe.power_nw);
        non_negative("/lock/power_nw", self.lock.power_nw);
        non_negative("/ensemble/temperature_uk", self.ensemble.temperature_uk);
        non_negative("/mc/buildup_dead_time_us", self.mc.buildup_dead_time_us);
        non_negative("/contrast/no_echo_off_us", self.contrast.no_echo_off_us);

        if !(self.cavity.finesse.is_finite() && self.cavity.finesse > 1.0) {
            out.push(issue(
                "/cavity/finesse",
                format!("must exceed 1, got {}", self.cavity.finesse),
            ));
        }
        if !(0.0..=1.0).contains(&self.probe.eta_in) {
            out.push(issue(
                "/probe/eta_in",
                format!("must lie in [0, 1], got {}", self.probe.eta_in),
            ));
        }
        let upper = self.probe.detuning_upper_ghz;
        let lower = self.probe.detuning_lower_ghz.unwrap_or(f64::NAN);
        if !(upper.is_finite() && upper != 0.0) {
            out.push(issue("/probe/detuning_upper_ghz", "must be finite and non-zero"));
        } else if !(lower.is_finite() && lower != 0.0) {
            out.push(issue("/probe/detuning_lower_ghz", "must be finite and non-zero"));
        } else {
            let split_hz = (upper - lower).abs() * 1e9;
            if (split_hz - RB87_CLOCK_SPLITTING_HZ).abs() > crate::cavity::CLOCK_SPLITTING_TOLERANCE_HZ {
                out.push(issue(
                    "/probe/detuning_lower_ghz",
                    format!("detunings differ by {split_hz:.6e} Hz, not the clock splitting"),
                ));
            }
            let gamma_ghz = self.probe.linewidth_mhz * 1e-3;
            if upper.abs() < crate::backaction::FAR_DETUNED_RATIO * gamma_ghz {
                out.push(issue(
                    "/probe/detuning_upper_ghz",
                    "probe is not far detuned from the transition",
                ));
            }
        }

        let n = self.ensemble.n_atoms;
        if !(n.is_finite() && n >= 1.0 && n.fract() == 0.0 && n <= u32::MAX as f64) {
            out.push(issue(
                "/ensemble/n_atoms",
                format!("must be a positive integer, got {n}"),
            ));
        }
        if !self.ensemble.drift_velocity_cm_s.is_finite() {
            out.push(issue("/ensemble/drift_velocity_cm_s", "must be finite"));
        }

        if self.mc.shots < 2 {
            out.push(issue(
                "/mc/shots",
                format!("need at least 2 shots, got {}", self.mc.shots),
            ));
        }
        if self.mc.bins == Some(0) {
            out.push(issue("/mc/bins", "must be at least 1"));
        }
        if self.mc.threads == Some(0) {
            out.push(issue("/mc/threads", "must be at least 1"));
        }
        if self.mc.prior == PriorKind::Binomial && self.mc.projection == ProjectionMode::Inhomogeneous {
            out.push(issue("/mc/prior", "the binomial prior needs projection = uniform"));
        }

        if self.curve.theta_points < 2 {
            out.push(issue("/curve/theta_points", "need at least 2 points"));
        }
        for (i, p) in self.curve.powers_nw.iter().flatten().enumerate() {
            if !(p.is_finite() && *p > 0.0) {
                out.push(issue(format!("/curve/powers_nw/{i}"), format!("must be > 0, got {p}")));
            }
        }
        if self.curve.n_atoms.len() < 2 {
            out.push(issue("/curve/n_atoms", "need at least 2 atom numbers for a slope"));
        }
        for (i, v) in self.curve.n_atoms.iter().enumerate() {
            if !(v.is_finite() && *v >= 1.0 && v.fract() == 0.0) {
                out.push(issue(
                    format!("/curve/n_atoms/{i}"),
                    format!("must be a positive integer, got {v}"),
                ));
            }
        }
        for (i, p) in self.sweep.parameters.iter().enumerate() {
            if p.values.is_empty() {
                out.push(issue(format!("/sweep/parameters/{i}/values"), "must not be empty"));
            }
        }
        out
    }

    /// Resolved config with `value` written at the dotted `path`, revalidated.
    pub fn with_override(&self, path: &str, value: Value) -> Result<RunConfig> {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if path == "probe.detuning_upper_ghz" {
            // the lower detuning was derived from the old upper one
            v["probe"]["detuning_lower_ghz"] = Value::Null;
        }
        set_path(&mut v, path, value).map_err(|m| Error::Config(vec![issue(format!("/sweep/{path}"), m)]))?;
        validate_value(v)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::SegmentKind;
    use approx::assert_relative_eq;

    fn issues(r: Result<RunConfig>) -> Vec<ConfigIssue> {
        match r {
            Err(Error::Config(v)) => v,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for name in preset_names() {
            let c = validate_str(preset_json(name).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
            let again = validate_str(&c.to_json_pretty()).unwrap();
            assert_eq!(again, c, "{name}");
        }
    }

    #[test]
    fn fig2d_has_caption_parameters() {
        let c = validate_config(Path::new("fig2d")).unwrap();
        let SequenceConfig::Echo(e) = &c.sequence else {
            panic!("fig2d is an echo sequence")
        };
        assert_eq!((e.tau_sq_us, e.tau_off_us, e.tau_pi_us), (60.0, 60.0, 50.0));
        assert_eq!(c.ensemble.n_atoms, 57000.0);
        assert_eq!(c.probe.power_nw, 2.5);
        assert_eq!(c.lock.power_nw, 2.5);
        let x = Experiment::from_config(&c).unwrap();
        assert!(matches!(x.sequence.segments[2].kind, SegmentKind::Microwave { .. }));
        assert_relative_eq!(x.sequence.segments[0].duration, 60e-6);
    }

    #[test]
    fn empty_file_lists_required_keys() {
        let v = issues(validate_str(""));
        let paths: Vec<&str> = v.iter().map(|i| i.path.as_str()).collect();
        assert_eq!(paths, ["/cavity", "/probe", "/ensemble", "/sequence"]);
    }

    #[test]
    fn negative_atom_number_is_one_error() {
        let v = issues(validate_str(r#"{"preset": "fig2d", "ensemble": {"n_atoms": -5}}"#));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "/ensemble/n_atoms");
    }

    #[test]
    fn unknown_and_mistyped_keys_carry_paths() {
        let v = issues(validate_str(r#"{"preset": "fig2d", "probe": {"power_mw": 1.0}}"#));
        assert_eq!(v[0].path, "/probe/power_mw");
        assert!(v[0].message.contains("unknown field"));
        let v = issues(validate_str(r#"{"preset": "fig2d", "cavity": {"finesse": "high"}}"#));
        assert_eq!(v[0].path, "/cavity/finesse");
        let v = issues(validate_str(r#"{"preset": "nope"}"#));
        assert_eq!(v[0].path, "/preset");
    }

    #[test]
    fn several_physics_errors_are_collected() {
        let v = issues(validate_str(
            r#"{"preset": "fig2d", "cavity": {"finesse": 0.5}, "probe": {"eta_in": 2}, "mc": {"shots": 1}}"#,
        ));
        let paths: Vec<&str> = v.iter().map(|i| i.path.as_str()).collect();
        assert!(paths.contains(&"/cavity/finesse"));
        assert!(paths.contains(&"/probe/eta_in"));
        assert!(paths.contains(&"/mc/shots"));
    }

    #[test]
    fn malformed_sequence_is_rejected() {
        let text = r#"{"preset": "fig2d", "sequence": {"segments": [
            {"kind": "probe_on", "duration_us": 60},
            {"kind": "probe_on", "duration_us": 60}
        ]}}"#;
        assert!(matches!(validate_str(text), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_and_pointers() {
        let c = validate_config(Path::new("fig3_high")).unwrap();
        let low = c.with_override("probe.power_nw", Value::from(1.2)).unwrap();
        assert_eq!(low.probe.power_nw, 1.2);
        assert!(c.with_override("probe.nonexistent", Value::from(1)).is_err());
        assert_eq!(pointer("ensemble.n_atoms"), "/ensemble/n_atoms");
        assert_eq!(pointer("sequence.segments[2].kind"), "/sequence/segments/2/kind");
    }
}
