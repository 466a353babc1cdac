//! Per-shot stochastic engine.
//!
//! Each probe-on segment is cut into slices of one photon lifetime. A slice
//! is a noisy J_z measurement with variance (N/4)/q followed by a backaction
//! kick of variance (N/4)·q on the conjugate quadrature, which reproduces the
//! leaky-cavity closed forms exactly. The belief is a Gaussian carried by
//! [`SpinMoments`]; the simulated truth is a classical 3-vector that receives
//! the same rotations, kicks and scattering events.

use std::io::Write;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backaction::SpinMoments;
use crate::cavity::time_averaged_photons;
use crate::error::{invalid, require_non_negative, require_positive, Error, Result};
use crate::sequence::{rotation, window_mean, PulseSequence, SegmentKind, TracePoint, Window};
use crate::stats::{self, Histogram};

/// Version tag written into JSON outputs.
pub const SCHEMA_VERSION: u32 = 1;

/// Constants for one measurement slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceParams {
    pub n_atoms: f64,
    /// N·n̄·Ω̄²·τ_cav²/√2, scaled by t_s/τ_cav for a partial slice.
    pub q: f64,
    /// (N/4)/q, J_z units.
    pub meas_noise_var: f64,
    /// Ω̄·τ_cav·√meas_noise_var, rad.
    pub phase_noise_sd: f64,
    /// Phase per unit J_z, rad.
    pub phase_per_jz: f64,
    /// Atom-number phase offset, rad.
    pub phase_offset: f64,
}

impl SliceParams {
    /// Full slice of length `tau_cav` at mean photon number `n_bar`.
    pub fn new(n_atoms: f64, n_bar: f64, omega_bar: f64, tau_cav: f64, phase_offset: f64) -> Self {
        let q = n_atoms * n_bar * omega_bar * omega_bar * tau_cav * tau_cav / std::f64::consts::SQRT_2;
        let phase_per_jz = omega_bar * tau_cav;
        Self::from_q(n_atoms, q, phase_per_jz, phase_offset)
    }

    /// A slice lasting `fraction` of a photon lifetime.
    pub fn partial(&self, fraction: f64) -> Self {
        Self::from_q(self.n_atoms, self.q * fraction, self.phase_per_jz, self.phase_offset)
    }

    fn from_q(n_atoms: f64, q: f64, phase_per_jz: f64, phase_offset: f64) -> Self {
        let meas_noise_var = if q > 0.0 { n_atoms / 4.0 / q } else { f64::INFINITY };
        Self {
            n_atoms,
            q,
            meas_noise_var,
            phase_noise_sd: phase_per_jz.abs() * meas_noise_var.sqrt(),
            phase_per_jz,
            phase_offset,
        }
    }

    pub fn backaction_var(&self) -> f64 {
        self.n_atoms / 4.0 * self.q
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceResult {
    pub moments: SpinMoments,
    /// J_z-equivalent reading y = J_z + ε.
    pub reading: f64,
    /// Ω̄·τ_cav·y plus the atom-number offset, rad.
    pub phase: f64,
}

/// Unit vector ẑ × m̂ along which measurement backaction acts. Falls back to
/// ŷ when the mean spin has no equatorial component.
fn backaction_axis(mean: &Vector3<f64>) -> Vector3<f64> {
    let u = Vector3::new(-mean.y, mean.x, 0.0);
    let norm = u.norm();
    if norm > 0.0 {
        u / norm
    } else {
        Vector3::y()
    }
}

/// One slice: Gaussian conditioning on y = `true_jz` + √meas_noise_var·`noise_draw`
/// (H = ẑ), then backaction (N/4)·q added along ẑ × m̂. With q = 0 the moments
/// are unchanged and the reading is noise-free.
pub fn slice_update(m: &SpinMoments, sp: &SliceParams, true_jz: f64, noise_draw: f64) -> SliceResult {
    if sp.q <= 0.0 {
        return SliceResult {
            moments: *m,
            reading: true_jz,
            phase: sp.phase_per_jz * true_jz + sp.phase_offset,
        };
    }
    let reading = true_jz + sp.meas_noise_var.sqrt() * noise_draw;
    let mut out = *m;
    let p_z = m.cov.column(2).into_owned();
    let s = m.cov[(2, 2)] + sp.meas_noise_var;
    let gain = p_z / s;
    out.mean += gain * (reading - m.mean.z);
    out.cov -= gain * p_z.transpose();
    out.cov[(2, 2)] = 1.0 / (1.0 / m.cov[(2, 2)] + 1.0 / sp.meas_noise_var);

    let u = backaction_axis(&m.mean);
    out.cov += sp.backaction_var() * u * u.transpose();
    SliceResult {
        moments: out,
        reading,
        phase: sp.phase_per_jz * reading + sp.phase_offset,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    /// Normal(0, prior_variance) for each transverse component.
    Gaussian,
    /// (Binomial(N, ½) − N/2), rescaled to `prior_variance`.
    Binomial,
}

/// Everything a shot needs, in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotConfig {
    pub n_atoms: usize,
    pub prior: PriorKind,
    /// Transverse variance of the initial state, J_z units.
    pub prior_variance: f64,
    /// Mean per-atom shift Ω̄, rad/s.
    pub omega_bar: f64,
    pub tau_cav: f64,
    /// Steady-state intracavity photons while the probe is on.
    pub n_ss: f64,
    /// Phase rate of the atom-number shift for the whole ensemble, rad/s.
    pub phase_offset_rate: f64,
    /// Scattering probability per atom per photon·second; `None` disables scattering.
    pub scatter_rate_per_photon: Option<f64>,
    /// Start of each probe window is delayed by this much to skip the buildup.
    pub dead_time: f64,
    pub sequence: PulseSequence,
}

impl ShotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 {
            return Err(invalid("n_atoms", "must be at least 1"));
        }
        require_positive("prior_variance", self.prior_variance)?;
        require_positive("tau_cav", self.tau_cav)?;
        require_non_negative("n_ss", self.n_ss)?;
        require_non_negative("dead_time", self.dead_time)?;
        if !self.omega_bar.is_finite() || !self.phase_offset_rate.is_finite() {
            return Err(invalid("omega_bar", "must be finite"));
        }
        if let Some(r) = self.scatter_rate_per_photon {
            require_non_negative("scatter_rate_per_photon", r)?;
        }
        self.sequence.validate()?;
        let probes = self.sequence.probe_on_indices();
        if probes.is_empty() {
            return Err(Error::Sequence {
                index: 0,
                reason: "a shot needs at least one probe_on segment".into(),
            });
        }
        for i in probes {
            if self.sequence.segments[i].duration <= self.dead_time {
                return Err(Error::Sequence {
                    index: i,
                    reason: format!(
                        "probe_on segment is not longer than the {:.1} us buildup dead time",
                        self.dead_time * 1e6
                    ),
                });
            }
        }
        Ok(())
    }

    /// Radians of probe phase per unit J_z.
    pub fn phase_scale(&self) -> f64 {
        self.omega_bar * self.tau_cav
    }

    /// Mean intracavity photon number during probe-on segment `index`.
    pub fn segment_photons(&self, index: usize) -> Result<f64> {
        let seg = &self.sequence.segments[index];
        if !seg.is_probe_on() || self.n_ss == 0.0 {
            return Ok(0.0);
        }
        time_averaged_photons(self.n_ss, seg.duration, self.tau_cav)
    }

    /// Full-slice parameters for probe-on segment `index`.
    pub fn slice_params(&self, index: usize) -> Result<SliceParams> {
        let n_bar = self.segment_photons(index)?;
        Ok(SliceParams::new(
            self.n_atoms as f64,
            n_bar,
            self.omega_bar,
            self.tau_cav,
            self.phase_offset_rate * self.tau_cav,
        ))
    }

    /// Total squeezing strength of probe-on segment `index`.
    pub fn segment_q(&self, index: usize) -> Result<f64> {
        let sp = self.slice_params(index)?;
        Ok(sp.q * self.sequence.segments[index].duration / self.tau_cav)
    }

    /// Probe windows, one per probe-on segment, in sequence order.
    pub fn windows(&self) -> Vec<Window> {
        let mut t = 0.0;
        let mut out = Vec::new();
        for seg in &self.sequence.segments {
            if seg.is_probe_on() {
                out.push(Window {
                    start: t + self.dead_time,
                    end: t + seg.duration,
                });
            }
            t += seg.duration;
        }
        out
    }

    /// Variance of a window mean from detection noise alone, J_z units.
    pub fn window_floor(&self, window: usize) -> Result<f64> {
        let index = *self
            .sequence
            .probe_on_indices()
            .get(window)
            .ok_or_else(|| invalid("window", format!("no probe window {window}")))?;
        let sp = self.slice_params(index)?;
        let w = self.windows()[window];
        Ok(sp.meas_noise_var * self.tau_cav / (w.end - w.start))
    }

    /// Scattering probability per atom during a slice of `dt` in segment `index`.
    fn slice_scatter(&self, n_bar: f64, dt: f64) -> f64 {
        match self.scatter_rate_per_photon {
            Some(rate) => (rate * n_bar * dt).min(1.0),
            None => 0.0,
        }
    }
}

/// One simulated experimental run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    /// J_z drawn from the prior before any light.
    pub initial_jz: f64,
    /// Simulated J_z at the end of the last preparation pulse.
    pub true_jz: f64,
    /// Filter estimate and variance at the same moment.
    pub conditional_mean: f64,
    pub conditional_var: f64,
    pub phase_trace: Vec<TracePoint>,
    /// Duration-weighted mean phase of each probe window, rad.
    pub window_means: Vec<f64>,
    pub scattered_count: u64,
    pub contrast_multiplier: f64,
    /// Last window mean minus the one before it, rad. With a single probe
    /// window this is that window's mean.
    pub final_outcome: f64,
}

/// RNG for shot `shot_index` of an ensemble: ChaCha8 keyed by the master seed,
/// with the shot index as the stream number.
pub fn shot_rng(master_seed: u64, shot_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(shot_index);
    rng
}

/// Runs one shot. Equal seeds give identical records; `run_shot(c, s)` is
/// shot 0 of an ensemble with master seed `s`.
pub fn run_shot(config: &ShotConfig, seed: u64) -> Result<ShotRecord> {
    config.validate()?;
    simulate(config, &mut shot_rng(seed, 0))
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

fn draw_prior<R: Rng>(config: &ShotConfig, rng: &mut R) -> Result<f64> {
    let n = config.n_atoms as f64;
    Ok(match config.prior {
        PriorKind::Gaussian => config.prior_variance.sqrt() * normal(rng),
        PriorKind::Binomial => {
            let dist = Binomial::new(config.n_atoms as u64, 0.5).map_err(|e| invalid("n_atoms", e.to_string()))?;
            let k = dist.sample(rng) as f64;
            (k - n / 2.0) * (config.prior_variance / (n / 4.0)).sqrt()
        }
    })
}

fn simulate<R: Rng>(config: &ShotConfig, rng: &mut R) -> Result<ShotRecord> {
    let n = config.n_atoms as f64;
    let probes = config.sequence.probe_on_indices();
    let capture_at = if probes.len() >= 2 {
        probes[probes.len() - 2]
    } else {
        probes[0]
    };

    let initial_y = draw_prior(config, rng)?;
    let initial_jz = draw_prior(config, rng)?;
    let mut truth = Vector3::new(n / 2.0, initial_y, initial_jz);
    let mut belief = SpinMoments::coherent(n, config.prior_variance);

    let mut trace = Vec::new();
    let mut scattered: u64 = 0;
    let mut captured = None;
    let mut t = 0.0;

    for (index, seg) in config.sequence.segments.iter().enumerate() {
        match seg.kind {
            SegmentKind::ProbeOff => {}
            SegmentKind::Microwave { angle, axis_phase } => {
                let r = rotation(angle, axis_phase);
                truth = r * truth;
                let rm = r.matrix();
                belief.mean = rm * belief.mean;
                belief.cov = rm * belief.cov * rm.transpose();
            }
            SegmentKind::ProbeOn => {
                let n_bar = config.segment_photons(index)?;
                let full = config.slice_params(index)?;
                for (start, dt) in slice_grid(seg.duration, config.dead_time, config.tau_cav) {
                    let p = config.slice_scatter(n_bar, dt);
                    if p > 0.0 {
                        let remaining = config.n_atoms as u64 - scattered;
                        let k = Binomial::new(remaining, p)
                            .map_err(|e| invalid("scatter_rate_per_photon", e.to_string()))?
                            .sample(rng);
                        if k > 0 {
                            let flips = Binomial::new(k, 0.5).expect("p = 0.5").sample(rng) as f64;
                            truth.z += flips - k as f64 / 2.0;
                            truth.x *= 1.0 - k as f64 / (remaining as f64);
                        }
                        scattered += k;
                        belief.cov[(2, 2)] += n * p / 4.0;
                        belief.contrast *= 1.0 - p;
                    }

                    let sp = full.partial(dt / config.tau_cav);
                    let res = slice_update(&belief, &sp, truth.z, normal(rng));
                    belief = res.moments;
                    if sp.q > 0.0 {
                        truth += backaction_axis(&truth) * (sp.backaction_var().sqrt() * normal(rng));
                    }
                    trace.push(TracePoint {
                        time: t + start,
                        duration: dt,
                        phase: res.phase,
                    });
                }
                if index == capture_at {
                    captured = Some((truth.z, belief.mean.z, belief.var_z()));
                }
            }
        }
        t += seg.duration;
    }

    let window_means = config
        .windows()
        .iter()
        .map(|w| window_mean(&trace, w))
        .collect::<Result<Vec<_>>>()?;
    let final_outcome = match window_means.as_slice() {
        [.., a, b] => b - a,
        [only] => *only,
        [] => unreachable!("validated: at least one probe window"),
    };
    let (true_jz, conditional_mean, conditional_var) = captured.expect("capture segment is a probe_on segment");
    Ok(ShotRecord {
        initial_jz,
        true_jz,
        conditional_mean,
        conditional_var,
        phase_trace: trace,
        window_means,
        scattered_count: scattered,
        contrast_multiplier: 1.0 - scattered as f64 / n,
        final_outcome,
    })
}

/// Slice boundaries within a probe-on segment, relative to its start: the
/// dead time forms its own (possibly partial) slice so that the window
/// starts on a slice edge, then lifetimes of `tau` with a partial remainder.
fn slice_grid(duration: f64, dead_time: f64, tau: f64) -> Vec<(f64, f64)> {
    let eps = 1e-9 * tau;
    let mut out = Vec::new();
    let mut t = 0.0;
    let push_span = |from: f64, to: f64, out: &mut Vec<(f64, f64)>| {
        let mut s = from;
        while to - s > eps {
            let dt = tau.min(to - s);
            out.push((s, dt));
            s += dt;
        }
    };
    if dead_time > 0.0 {
        push_span(0.0, dead_time.min(duration), &mut out);
        t = dead_time;
    }
    push_span(t, duration, &mut out);
    out
}

/// Compact per-shot row kept for ensemble output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotSummary {
    pub shot: u64,
    pub initial_jz: f64,
    pub true_jz: f64,
    pub cond_mean: f64,
    pub cond_var: f64,
    pub outcome: f64,
    pub scattered: u64,
    pub contrast_multiplier: f64,
    pub window_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub schema_version: u32,
    pub shots: usize,
    pub seed: u64,
    /// rad
    pub mean_outcome: f64,
    /// rad²
    pub variance_of_outcome: f64,
    pub variance_stderr: f64,
    /// 95% χ² interval for the outcome variance.
    pub variance_interval: (f64, f64),
    pub histogram: Histogram,
    pub mean_conditional_var: f64,
    pub var_conditional_mean: f64,
    pub var_true_jz: f64,
    pub mean_contrast_multiplier: f64,
    pub mean_scattered: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnsembleOptions {
    /// Histogram bins; Freedman–Diaconis when `None`.
    pub bins: Option<usize>,
    /// Worker threads; the global rayon pool when `None`.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRun {
    pub stats: EnsembleStats,
    pub shots: Vec<ShotSummary>,
}

/// Runs `n_shots` independent shots. Shot i uses [`shot_rng`]`(master_seed, i)`
/// and results are gathered in index order, so the output does not depend on
/// the thread count.
pub fn run_ensemble(
    config: &ShotConfig,
    n_shots: usize,
    master_seed: u64,
    opts: &EnsembleOptions,
) -> Result<EnsembleRun> {
    if n_shots < 2 {
        return Err(invalid("shots", format!("need at least 2 shots, got {n_shots}")));
    }
    config.validate()?;
    let job = || -> Result<Vec<ShotSummary>> {
        (0..n_shots as u64)
            .into_par_iter()
            .map(|i| {
                let r = simulate(config, &mut shot_rng(master_seed, i))?;
                Ok(ShotSummary {
                    shot: i,
                    initial_jz: r.initial_jz,
                    true_jz: r.true_jz,
                    cond_mean: r.conditional_mean,
                    cond_var: r.conditional_var,
                    outcome: r.final_outcome,
                    scattered: r.scattered_count,
                    contrast_multiplier: r.contrast_multiplier,
                    window_means: r.window_means,
                })
            })
            .collect()
    };
    let shots = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| invalid("threads", e.to_string()))?
            .install(job)?,
        None => job()?,
    };
    let stats = summarize(&shots, master_seed, opts.bins);
    Ok(EnsembleRun { stats, shots })
}

pub fn summarize(shots: &[ShotSummary], seed: u64, bins: Option<usize>) -> EnsembleStats {
    let col = |f: fn(&ShotSummary) -> f64| shots.iter().map(f).collect::<Vec<f64>>();
    let outcomes = col(|s| s.outcome);
    let var = stats::variance(&outcomes);
    EnsembleStats {
        schema_version: SCHEMA_VERSION,
        shots: shots.len(),
        seed,
        mean_outcome: stats::mean(&outcomes),
        variance_of_outcome: var,
        variance_stderr: stats::variance_stderr(&outcomes),
        variance_interval: stats::variance_interval(var, shots.len(), 0.95),
        histogram: stats::histogram(&outcomes, bins),
        mean_conditional_var: stats::mean(&col(|s| s.cond_var)),
        var_conditional_mean: stats::variance(&col(|s| s.cond_mean)),
        var_true_jz: stats::variance(&col(|s| s.true_jz)),
        mean_contrast_multiplier: stats::mean(&col(|s| s.contrast_multiplier)),
        mean_scattered: stats::mean(&col(|s| s.scattered as f64)),
    }
}

pub const SHOT_CSV_HEADER: &str = "shot,true_jz,cond_mean,cond_var,outcome,scattered";

/// Per-shot CSV. Floats use the shortest round-trip representation, so the
/// bytes depend only on the values.
pub fn write_shots_csv<W: Write>(mut w: W, shots: &[ShotSummary]) -> std::io::Result<()> {
    writeln!(w, "{SHOT_CSV_HEADER}")?;
    for s in shots {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.shot, s.true_jz, s.cond_mean, s.cond_var, s.outcome, s.scattered
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backaction::leaky_moments_from_prior;
    use crate::sequence::{Protocol, PulseSegment};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn base(n: usize, sequence: PulseSequence) -> ShotConfig {
        ShotConfig {
            n_atoms: n,
            prior: PriorKind::Gaussian,
            prior_variance: n as f64 / 4.0,
            omega_bar: -1.868,
            tau_cav: 21.766e-6,
            n_ss: 1.16e5,
            phase_offset_rate: 0.0,
            scatter_rate_per_photon: None,
            dead_time: 20e-6,
            sequence,
        }
    }

    fn standard(n: usize, theta: f64) -> ShotConfig {
        base(n, Protocol::standard(theta).build().unwrap())
    }

    #[test]
    fn slice_recursion_matches_closed_form() {
        let n = 57_000.0;
        let sp = SliceParams::new(n, 3.0e4, -1.868, 21.766e-6, 0.0);
        let mut m = SpinMoments::coherent(n, n / 4.0);
        for k in 1..=200 {
            m = slice_update(&m, &sp, 0.0, 0.0).moments;
            let (vz, vy) = leaky_moments_from_prior(n / 4.0, n, k as f64 * sp.q);
            assert_relative_eq!(m.var_z(), vz, max_relative = 1e-12);
            assert_relative_eq!(m.var_y(), vy, max_relative = 1e-12);
        }
    }

    #[test]
    fn equal_precision_merge_halves_variance() {
        let sp = SliceParams::new(1000.0, 1e4, 2.0, 2e-5, 0.0);
        let m = SpinMoments::coherent(1000.0, sp.meas_noise_var);
        let r = slice_update(&m, &sp, 1.0, 0.5);
        assert_relative_eq!(r.moments.var_z(), sp.meas_noise_var / 2.0, max_relative = 1e-14);
        let expected_mean = 0.5 * r.reading;
        assert_relative_eq!(r.moments.mean_z(), expected_mean, max_relative = 1e-12);
    }

    #[test]
    fn dark_slice_changes_nothing() {
        let sp = SliceParams::new(1000.0, 0.0, 2.0, 2e-5, 0.1);
        let m = SpinMoments::coherent(1000.0, 250.0);
        let r = slice_update(&m, &sp, 3.0, 1.7);
        assert_eq!(r.moments, m);
        assert_eq!(r.reading, 3.0);
        assert_relative_eq!(r.phase, 2.0 * 2e-5 * 3.0 + 0.1);
        assert_eq!(sp.meas_noise_var, f64::INFINITY);
    }

    #[test]
    fn partial_slices_keep_linear_law() {
        let sp = SliceParams::new(1e4, 1e4, 1.5, 2e-5, 0.0);
        let half = sp.partial(0.5);
        assert_relative_eq!(half.q, sp.q / 2.0);
        assert_relative_eq!(half.meas_noise_var * half.q, 1e4 / 4.0);
        assert_relative_eq!(
            half.phase_noise_sd,
            sp.phase_noise_sd * 2f64.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn slice_grid_aligns_window() {
        let g = slice_grid(60e-6, 20e-6, 21.766e-6);
        assert_eq!(g.len(), 3);
        assert_relative_eq!(g[0].1, 20e-6);
        assert_relative_eq!(g[1].0, 20e-6);
        assert_relative_eq!(g[1].1, 21.766e-6);
        let total: f64 = g.iter().map(|s| s.1).sum();
        assert_relative_eq!(total, 60e-6, max_relative = 1e-12);
        assert_eq!(slice_grid(43.532e-6, 0.0, 21.766e-6).len(), 2);
    }

    #[test]
    fn same_seed_same_shot() {
        let c = ShotConfig {
            scatter_rate_per_photon: Some(9.2e-3),
            ..standard(57_000, 0.63)
        };
        assert_eq!(run_shot(&c, 11).unwrap(), run_shot(&c, 11).unwrap());
        assert_ne!(run_shot(&c, 11).unwrap(), run_shot(&c, 12).unwrap());
    }

    #[test]
    fn conditional_variance_is_deterministic_without_scattering() {
        let c = standard(57_000, 0.0);
        let r = run_shot(&c, 1).unwrap();
        let q = c.segment_q(0).unwrap() + c.segment_q(3).unwrap();
        let (vz, _) = leaky_moments_from_prior(c.prior_variance, 57_000.0, q);
        assert_relative_eq!(r.conditional_var, vz, max_relative = 1e-10);
        assert!(r.conditional_var < c.prior_variance);
        assert_eq!(r.scattered_count, 0);
        assert_eq!(r.window_means.len(), 3);
    }

    #[test]
    fn law_of_total_variance() {
        let c = standard(2000, 0.0);
        let run = run_ensemble(&c, 4000, 5, &EnsembleOptions::default()).unwrap();
        let s = &run.stats;
        let total = s.var_conditional_mean + s.mean_conditional_var;
        let v0 = c.prior_variance;
        assert!(
            (total - v0).abs() < 3.0 * v0 * (2.0 / 3999.0f64).sqrt(),
            "{total} vs {v0}"
        );
    }

    #[test]
    fn zero_photons_leave_bare_projection_noise() {
        let c = ShotConfig {
            n_ss: 0.0,
            ..standard(1000, 0.0)
        };
        let run = run_ensemble(&c, 4000, 3, &EnsembleOptions::default()).unwrap();
        let last: Vec<f64> = run.shots.iter().map(|s| *s.window_means.last().unwrap()).collect();
        let v = crate::stats::variance(&last);
        let expect = c.phase_scale().powi(2) * c.prior_variance;
        assert!((v / expect - 1.0).abs() < 3.0 * (2.0 / 3999.0f64).sqrt());
        assert!(run.shots.iter().all(|s| s.cond_var == c.prior_variance));
        // J_z is read noise-free in the same frame before and after: no difference.
        assert!(run.stats.variance_of_outcome < 1e-20);
    }

    #[test]
    fn binomial_prior_has_projection_variance() {
        let c = ShotConfig {
            prior: PriorKind::Binomial,
            ..standard(1000, 0.0)
        };
        let run = run_ensemble(&c, 20_000, 9, &EnsembleOptions::default()).unwrap();
        let init: Vec<f64> = run.shots.iter().map(|s| s.initial_jz).collect();
        assert!((stats::variance(&init) / 250.0 - 1.0).abs() < 0.04);
        assert!(init.iter().all(|x| (x - x.round()).abs() < 1e-9));
    }

    #[test]
    fn scattering_costs_contrast_and_adds_noise() {
        let clean = standard(20_000, 0.0);
        let lossy = ShotConfig {
            scatter_rate_per_photon: Some(9.2e-3),
            ..clean.clone()
        };
        let opts = EnsembleOptions::default();
        let a = run_ensemble(&clean, 3000, 2, &opts).unwrap().stats;
        let b = run_ensemble(&lossy, 3000, 2, &opts).unwrap().stats;
        assert_eq!(a.mean_contrast_multiplier, 1.0);

        let mut survive = 1.0;
        for i in lossy.sequence.probe_on_indices() {
            let n_bar = lossy.segment_photons(i).unwrap();
            for (_, dt) in slice_grid(lossy.sequence.segments[i].duration, lossy.dead_time, lossy.tau_cav) {
                survive *= 1.0 - lossy.slice_scatter(n_bar, dt);
            }
        }
        let p = 1.0 - survive;
        let err = (p * (1.0 - p) / (20_000.0 * 3000.0)).sqrt();
        assert!((1.0 - b.mean_contrast_multiplier - p).abs() < 4.0 * err);
        assert!(b.variance_of_outcome > a.variance_of_outcome);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let c = ShotConfig {
            scatter_rate_per_photon: Some(9.2e-3),
            ..standard(57_000, 0.63)
        };
        let one = run_ensemble(
            &c,
            64,
            77,
            &EnsembleOptions {
                bins: None,
                threads: Some(1),
            },
        )
        .unwrap();
        let four = run_ensemble(
            &c,
            64,
            77,
            &EnsembleOptions {
                bins: None,
                threads: Some(4),
            },
        )
        .unwrap();
        assert_eq!(one, four);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_shots_csv(&mut a, &one.shots).unwrap();
        write_shots_csv(&mut b, &four.shots).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().starts_with(SHOT_CSV_HEADER));
    }

    #[test]
    fn validation() {
        let short = base(
            100,
            PulseSequence::new(vec![PulseSegment::probe_on(20e-6), PulseSegment::probe_off(1e-5)]).unwrap(),
        );
        assert!(matches!(short.validate(), Err(Error::Sequence { index: 0, .. })));
        let dark = base(100, PulseSequence::new(vec![PulseSegment::probe_off(1e-5)]).unwrap());
        assert!(dark.validate().is_err());
        assert!(run_ensemble(&standard(100, 0.0), 1, 0, &EnsembleOptions::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn uncertainty_product_is_preserved(
            n in 1e2f64..1e6,
            n_bar in 1.0f64..1e6,
            omega in 0.1f64..20.0,
            m in 1usize..50,
            y in -3.0f64..3.0,
        ) {
            let sp = SliceParams::new(n, n_bar, omega, 2e-5, 0.0);
            let mut moments = SpinMoments::coherent(n, n / 4.0);
            for _ in 0..m {
                moments = slice_update(&moments, &sp, 0.0, y).moments;
                let product = moments.var_z() * moments.var_y();
                prop_assert!((product / (n * n / 16.0) - 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn posterior_never_exceeds_prior(v0 in 1.0f64..1e5, n_bar in 0.0f64..1e6, y in -5.0f64..5.0) {
            let sp = SliceParams::new(1e4, n_bar, 1.0, 2e-5, 0.0);
            let m = SpinMoments::coherent(1e4, v0);
            let r = slice_update(&m, &sp, 0.0, y);
            prop_assert!(r.moments.var_z() <= v0);
            prop_assert!(r.moments.var_y() >= v0);
        }
    }
}
