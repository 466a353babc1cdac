//! `qndsim` command line: derive, curve, mc run and sweep.
//!
//! Exit codes: 0 on success, 2 when the config or flags are invalid, 3 when
//! a run fails after validation.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{self, OutputFormat, RunConfig, SequenceConfig};
use crate::error::{ConfigIssue, Error, Result};
use crate::experiment::Experiment;
use crate::montecarlo::{run_ensemble, write_shots_csv, EnsembleOptions, SCHEMA_VERSION};
use crate::stats::linear_fit;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "qndsim", version, about = "Cavity QND spin-squeezing simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cavity, coupling, squeezing and contrast figures for a config.
    Derive(CommonArgs),
    /// Analytic curves.
    Curve {
        #[command(subcommand)]
        kind: CurveKind,
    },
    /// Monte Carlo ensembles.
    Mc {
        #[command(subcommand)]
        action: McAction,
    },
    /// Cartesian parameter sweep, one row per point.
    Sweep(CommonArgs),
    /// Validate a config and print it with all defaults filled in.
    Config(CommonArgs),
}

#[derive(Debug, Subcommand)]
pub enum CurveKind {
    /// Outcome variance against final rotation angle.
    RotationNoise(CommonArgs),
    /// Normalized J_y variance against atom number for each configured power.
    Antisqueezing(CommonArgs),
}

#[derive(Debug, Subcommand)]
pub enum McAction {
    /// Run one ensemble.
    Run(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Config file, or the name of a shipped preset.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub shots: Option<usize>,
    /// Final rotation angle, rad (echo sequences only).
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

/// Parses `args` (including the program name), runs and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            match &e {
                Error::Config(issues) => {
                    eprintln!("invalid config:");
                    for i in issues {
                        eprintln!("  {i}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config(vec![ConfigIssue {
        path: path.into(),
        message: message.into(),
    }])
}

/// Loads the config and applies command-line overrides.
pub fn load(args: &CommonArgs) -> Result<RunConfig> {
    let base = config::validate_config(&args.config)?;
    let mut v = serde_json::to_value(&base).expect("config serializes");
    if let Some(seed) = args.seed {
        v["mc"]["master_seed"] = json!(seed);
    }
    if let Some(shots) = args.shots {
        v["mc"]["shots"] = json!(shots);
    }
    if let Some(threads) = args.threads {
        v["mc"]["threads"] = json!(threads);
    }
    if let Some(theta) = args.theta {
        if !matches!(base.sequence, SequenceConfig::Echo(_)) {
            return Err(config_error("/sequence", "--theta needs an echo sequence"));
        }
        v["sequence"]["echo"]["theta_rad"] = json!(theta);
    }
    if let Some(f) = args.format {
        v["output"]["format"] = json!(match f {
            FormatArg::Csv => "csv",
            FormatArg::Json => "json",
        });
    }
    if let Some(out) = &args.out {
        v["output"]["path"] = json!(out.to_string_lossy());
    }
    config::validate_value(v)
}

type Handler = fn(&RunConfig, &mut dyn Write) -> Result<()>;

pub fn run(cli: &Cli) -> Result<()> {
    let (args, cmd): (&CommonArgs, Handler) = match &cli.command {
        Command::Derive(a) => (a, derive_cmd),
        Command::Curve {
            kind: CurveKind::RotationNoise(a),
        } => (a, rotation_noise_cmd),
        Command::Curve {
            kind: CurveKind::Antisqueezing(a),
        } => (a, antisqueezing_cmd),
        Command::Mc {
            action: McAction::Run(a),
        } => (a, mc_run_cmd),
        Command::Sweep(a) => (a, sweep_cmd),
        Command::Config(a) => (a, config_cmd),
    };
    let config = load(args)?;
    match &config.output.path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(Path::new(p))?);
            cmd(&config, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            cmd(&config, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(w: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

fn config_cmd(c: &RunConfig, w: &mut dyn Write) -> Result<()> {
    writeln!(w, "{}", c.to_json_pretty())?;
    Ok(())
}

fn derive_cmd(c: &RunConfig, w: &mut dyn Write) -> Result<()> {
    let x = Experiment::from_config(c)?;
    let d = x.derive()?;
    let cloud = x.sample_cloud()?;
    let echo = if x.sequence.has_echo() {
        Some(x.echo_contrast(&cloud)?)
    } else {
        None
    };
    let no_echo = x.no_echo_contrast(&cloud)?;
    if c.output.format == OutputFormat::Json {
        return write_json(
            w,
            &json!({
                "schema_version": SCHEMA_VERSION,
                "derived": d,
                "echo_contrast": echo,
                "no_echo_contrast": no_echo,
            }),
        );
    }
    let mut rows: Vec<(&str, f64, &str)> = vec![
        ("fsr", d.cavity.fsr, "Hz"),
        ("hwhm", d.cavity.hwhm, "Hz"),
        ("tau_cav", d.cavity.tau_cav, "s"),
        ("kappa", d.cavity.kappa, "rad/s"),
        ("reduction_factor", d.coupling.reduction_factor, ""),
        ("omega_max", d.omega_max, "rad/s"),
        ("omega_bar", d.coupling.omega_mean, "rad/s"),
        (
            "effective_projection_variance",
            d.coupling.effective_projection_variance,
            "rad^2/s^2",
        ),
        ("n_ss", d.n_ss, "photons"),
        ("n_bar_first_pulse", d.n_bar_first_pulse, "photons"),
        ("q_preparation", d.q_preparation, ""),
        ("prior_variance", d.prior_variance, "jz^2"),
        ("var_z", d.var_z, "jz^2"),
        ("var_y", d.var_y, "jz^2"),
        ("squeezing", d.squeezing_db, "dB"),
        ("scatter_rate_per_photon", d.scatter_rate_per_photon, "1/(photon s)"),
        ("p_scatter_preparation", d.p_scatter_preparation, ""),
        ("eta_for_6pct_scattering", d.eta_for_6pct_scattering, ""),
    ];
    if let Some(e) = &echo {
        rows.push(("echo_coherence", e.coherence, ""));
        rows.push(("echo_contrast", e.contrast, ""));
    }
    rows.push(("no_echo_contrast", no_echo.contrast, ""));
    writeln!(w, "quantity,value,unit")?;
    for (name, value, unit) in rows {
        writeln!(w, "{name},{value},{unit}")?;
    }
    Ok(())
}

fn rotation_noise_cmd(c: &RunConfig, w: &mut dyn Write) -> Result<()> {
    let x = Experiment::from_config(c)?;
    let table = x.rotation_noise_table(c.curve.theta_points)?;
    let v0 = x.prior_variance()?;
    let scale = x.shot_config()?.phase_scale().powi(2);
    if c.output.format == OutputFormat::Json {
        let points: Vec<Value> = table
            .iter()
            .map(|(t, v)| json!({"theta_rad": t, "variance": v, "variance_normalized": v / v0, "variance_rad2": v * scale}))
            .collect();
        return write_json(
            w,
            &json!({
                "schema_version": SCHEMA_VERSION,
                "params": x.noise_curve_params()?,
                "prior_variance": v0,
                "points": points,
            }),
        );
    }
    writeln!(w, "theta_rad,variance,variance_normalized,variance_rad2")?;
    for (t, v) in table {
        writeln!(w, "{t},{v},{},{}", v / v0, v * scale)?;
    }
    Ok(())
}

/// One antisqueezing line: normalized V_y against N and its fitted slope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AntisqueezingCurve {
    pub power_nw: f64,
    pub n_atoms: Vec<f64>,
    pub var_y_normalized: Vec<f64>,
    /// Per atom.
    pub slope: f64,
    pub intercept: f64,
}

pub fn antisqueezing_curves(c: &RunConfig) -> Result<Vec<AntisqueezingCurve>> {
    let base = Experiment::from_config(c)?;
    let mut out = Vec::new();
    for &p in c.curve.powers_nw.as_deref().unwrap_or(&[]) {
        let mut ys = Vec::new();
        for &n in &c.curve.n_atoms {
            let mut x = base.clone();
            x.probe.input_power = p * 1e-9;
            x.n_atoms = n as usize;
            let (_, vy) = x.prepared_moments()?;
            ys.push(vy / x.prior_variance()?);
        }
        let fit = linear_fit(&c.curve.n_atoms, &ys, None);
        out.push(AntisqueezingCurve {
            power_nw: p,
            n_atoms: c.curve.n_atoms.clone(),
            var_y_normalized: ys,
            slope: fit.slope,
            intercept: fit.intercept,
        });
    }
    Ok(out)
}

fn antisqueezing_cmd(c: &RunConfig, w: &mut dyn Write) -> Result<()> {
    let curves = antisqueezing_curves(c)?;
    if c.output.format == OutputFormat::Json {
        let slope_ratio = match curves.as_slice() {
            [a, .., b] => Some(b.slope / a.slope),
            _ => None,
        };
        return write_json(
            w,
            &json!({"schema_version": SCHEMA_VERSION, "curves": curves, "slope_ratio_last_to_first": slope_ratio}),
        );
    }
    writeln!(w, "power_nw,n_atoms,var_y_normalized,slope_per_atom")?;
    for cv in &curves {
        for (n, y) in cv.n_atoms.iter().zip(&cv.var_y_normalized) {
            writeln!(w, "{},{},{},{}", cv.power_nw, n, y, cv.slope)?;
        }
    }
    Ok(())
}

fn mc_run_cmd(c: &RunConfig, w: &mut dyn Write) -> Result<()> {
    let x = Experiment::from_config(c)?;
    let shot = x.shot_config()?;
    let opts = EnsembleOptions {
        bins: c.mc.bins,
        threads: c.mc.threads,
    };
    let run = run_ensemble(&shot, c.mc.shots, c.mc.master_seed, &opts)?;
    if c.output.format == OutputFormat::Csv {
        return write_shots_csv(w, &run.shots).map_err(Error::from);
    }
    let params = x.noise_curve_params()?;
    let theta = match &c.sequence {
        SequenceConfig::Echo(e) => Some(e.theta_rad),
        _ => None,
    };
    let scale = shot.phase_scale().powi(2);
    write_json(
        w,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "description": c.description,
            "theta_rad": theta,
            "phase_per_jz_rad": shot.phase_scale(),
            "prior_variance": shot.prior_variance,
            "variance_of_outcome_jz": run.stats.variance_of_outcome / scale,
            "model": {
                "var_z": params.var_z,
                "var_y": params.var_y,
                "floor": params.floor,
                "at_theta": theta.map(|t| crate::sequence::rotation_noise_curve(&params, &[t])[0].1),
            },
            "stats": run.stats,
        }),
    )
}

fn cartesian(params: &[config::SweepParameter]) -> Vec<Vec<Value>> {
    let mut points: Vec<Vec<Value>> = vec![Vec::new()];
    for p in params {
        points = points
            .into_iter()
            .flat_map(|prefix| {
                p.values.iter().map(move |v| {
                    let mut row = prefix.clone();
                    row.push(v.clone());
                    row
                })
            })
            .collect();
    }
    points
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn sweep_cmd(c: &RunConfig, w: &mut dyn Write) -> Result<()> {
    let params = &c.sweep.parameters;
    if params.is_empty() {
        return Err(config_error("/sweep/parameters", "no sweep parameters configured"));
    }
    let mut rows = Vec::new();
    for point in cartesian(params) {
        let mut v = serde_json::to_value(c).expect("config serializes");
        for (p, value) in params.iter().zip(&point) {
            if p.path == "probe.detuning_upper_ghz" {
                v["probe"]["detuning_lower_ghz"] = Value::Null;
            }
            config::set_path(&mut v, &p.path, value.clone()).map_err(|m| config_error("/sweep/parameters", m))?;
        }
        let pc = config::validate_value(v)?;
        let x = Experiment::from_config(&pc)?;
        let d = x.derive()?;
        let mut row = json!({
            "n_ss": d.n_ss,
            "n_bar_first_pulse": d.n_bar_first_pulse,
            "q_preparation": d.q_preparation,
            "var_z_normalized": d.var_z / d.prior_variance,
            "var_y_normalized": d.var_y / d.prior_variance,
            "squeezing_db": d.squeezing_db,
            "p_scatter_preparation": d.p_scatter_preparation,
        });
        if c.sweep.monte_carlo {
            let shot = x.shot_config()?;
            let opts = EnsembleOptions {
                bins: pc.mc.bins,
                threads: pc.mc.threads,
            };
            let run = run_ensemble(&shot, pc.mc.shots, pc.mc.master_seed, &opts)?;
            row["mc_variance_of_outcome"] = json!(run.stats.variance_of_outcome);
            row["mc_mean_conditional_var"] = json!(run.stats.mean_conditional_var);
        }
        rows.push((point, row));
    }

    if c.output.format == OutputFormat::Json {
        let points: Vec<Value> = rows
            .iter()
            .map(|(point, row)| {
                let values: serde_json::Map<String, Value> = params
                    .iter()
                    .zip(point)
                    .map(|(p, v)| (p.path.clone(), v.clone()))
                    .collect();
                json!({"parameters": values, "results": row})
            })
            .collect();
        return write_json(w, &json!({"schema_version": SCHEMA_VERSION, "points": points}));
    }
    let mut columns = vec![
        "n_ss",
        "n_bar_first_pulse",
        "q_preparation",
        "var_z_normalized",
        "var_y_normalized",
        "squeezing_db",
        "p_scatter_preparation",
    ];
    if c.sweep.monte_carlo {
        columns.extend(["mc_variance_of_outcome", "mc_mean_conditional_var"]);
    }
    let header: Vec<&str> = params
        .iter()
        .map(|p| p.path.as_str())
        .chain(columns.iter().copied())
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (point, row) in rows {
        let mut cells: Vec<String> = point.iter().map(cell).collect();
        cells.extend(
            columns
                .iter()
                .map(|k| row[*k].as_f64().map_or_else(String::new, |f| f.to_string())),
        );
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}
