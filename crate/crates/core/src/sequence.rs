//! The three-pulse spin-echo protocol: segment timelines, microwave
//! rotations of Gaussian spin moments, the rotation-angle noise curve,
//! light-shift dephasing contrast and the window observables read off a
//! probe phase trace.

use std::f64::consts::{PI, TAU};

use nalgebra::{Complex, Rotation3, Unit, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backaction::SpinMoments;
use crate::cavity::CavityField;
use crate::coupling::AtomEnsemble;
use crate::error::{invalid, require_non_negative, require_positive, Error, Result};

type Complex64 = Complex<f64>;

/// Atoms fall out of the mode after a few ms.
pub const DEFAULT_TRANSIT_LIMIT: f64 = 3e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentKind {
    ProbeOn,
    ProbeOff,
    /// Instantaneous ideal rotation by `angle` about the equatorial axis at
    /// azimuth `axis_phase` (0 is the mean-spin x axis).
    Microwave {
        angle: f64,
        axis_phase: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSegment {
    pub kind: SegmentKind,
    /// s
    pub duration: f64,
}

impl PulseSegment {
    pub fn probe_on(duration: f64) -> Self {
        Self {
            kind: SegmentKind::ProbeOn,
            duration,
        }
    }
    pub fn probe_off(duration: f64) -> Self {
        Self {
            kind: SegmentKind::ProbeOff,
            duration,
        }
    }
    pub fn microwave(duration: f64, angle: f64, axis_phase: f64) -> Self {
        Self {
            kind: SegmentKind::Microwave { angle, axis_phase },
            duration,
        }
    }

    pub fn is_probe_on(&self) -> bool {
        matches!(self.kind, SegmentKind::ProbeOn)
    }

    /// True for rotations by an odd multiple of π.
    pub fn is_pi_pulse(&self) -> bool {
        match self.kind {
            SegmentKind::Microwave { angle, .. } => {
                let r = angle.rem_euclid(TAU);
                (r - PI).abs() < 1e-9
            }
            _ => false,
        }
    }
}

/// JSON form of a segment: `{"kind": "probe_on"|"probe_off"|"microwave",
/// "duration_us": ..., "angle_rad": ..., "axis_phase_rad": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub kind: String,
    pub duration_us: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis_phase_rad: Option<f64>,
}

impl SegmentSpec {
    pub fn to_segment(&self, index: usize) -> Result<PulseSegment> {
        let err = |reason: String| Error::Sequence { index, reason };
        if !self.duration_us.is_finite() || self.duration_us < 0.0 {
            return Err(err(format!(
                "duration_us must be finite and >= 0, got {}",
                self.duration_us
            )));
        }
        let duration = self.duration_us * 1e-6;
        match self.kind.as_str() {
            "probe_on" | "probe_off" => {
                if self.angle_rad.is_some() || self.axis_phase_rad.is_some() {
                    return Err(err(format!("{} segments take no rotation fields", self.kind)));
                }
                Ok(if self.kind == "probe_on" {
                    PulseSegment::probe_on(duration)
                } else {
                    PulseSegment::probe_off(duration)
                })
            }
            "microwave" => {
                let angle = self
                    .angle_rad
                    .ok_or_else(|| err("microwave segment needs angle_rad".into()))?;
                let axis_phase = self.axis_phase_rad.unwrap_or(0.0);
                if !angle.is_finite() || !axis_phase.is_finite() {
                    return Err(err("rotation fields must be finite".into()));
                }
                Ok(PulseSegment::microwave(duration, angle, axis_phase))
            }
            other => Err(err(format!(
                "unknown kind `{other}` (expected probe_on, probe_off or microwave)"
            ))),
        }
    }

    pub fn from_segment(seg: &PulseSegment) -> Self {
        let duration_us = seg.duration * 1e6;
        match seg.kind {
            SegmentKind::ProbeOn => Self {
                kind: "probe_on".into(),
                duration_us,
                angle_rad: None,
                axis_phase_rad: None,
            },
            SegmentKind::ProbeOff => Self {
                kind: "probe_off".into(),
                duration_us,
                angle_rad: None,
                axis_phase_rad: None,
            },
            SegmentKind::Microwave { angle, axis_phase } => Self {
                kind: "microwave".into(),
                duration_us,
                angle_rad: Some(angle),
                axis_phase_rad: Some(axis_phase),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    pub segments: Vec<PulseSegment>,
    pub transit_limit: f64,
}

impl PulseSequence {
    /// Builds and validates a sequence with the default transit limit.
    pub fn new(segments: Vec<PulseSegment>) -> Result<Self> {
        let seq = Self {
            segments,
            transit_limit: DEFAULT_TRANSIT_LIMIT,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn from_specs(specs: &[SegmentSpec]) -> Result<Self> {
        let segments = specs
            .iter()
            .enumerate()
            .map(|(i, s)| s.to_segment(i))
            .collect::<Result<Vec<_>>>()?;
        Self::new(segments)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let specs: Vec<SegmentSpec> =
            serde_json::from_str(text).map_err(|e| invalid("sequence", format!("malformed segment list: {e}")))?;
        Self::from_specs(&specs)
    }

    pub fn to_specs(&self) -> Vec<SegmentSpec> {
        self.segments.iter().map(SegmentSpec::from_segment).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Sequence {
                index: 0,
                reason: "sequence has no segments".into(),
            });
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if !seg.duration.is_finite() || seg.duration < 0.0 {
                return Err(Error::Sequence {
                    index: i,
                    reason: format!("duration must be finite and >= 0, got {}", seg.duration),
                });
            }
            if i == 0 {
                continue;
            }
            let prev = &self.segments[i - 1];
            if prev.is_probe_on() && seg.is_probe_on() {
                return Err(Error::Sequence {
                    index: i,
                    reason: "two adjacent probe_on segments; separate them with probe_off".into(),
                });
            }
            if prev.is_probe_on() && matches!(seg.kind, SegmentKind::Microwave { .. }) {
                return Err(Error::Sequence {
                    index: i,
                    reason: "microwave rotation inside a probe-on window; insert probe_off for the light to leak out"
                        .into(),
                });
            }
        }
        let total = self.total_duration();
        if total > self.transit_limit {
            return Err(Error::Sequence {
                index: self.segments.len() - 1,
                reason: format!(
                    "total duration {:.1} us exceeds the transit limit {:.1} us",
                    total * 1e6,
                    self.transit_limit * 1e6
                ),
            });
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Indices of probe-on segments, in order.
    pub fn probe_on_indices(&self) -> Vec<usize> {
        self.segments
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_probe_on())
            .map(|(i, _)| i)
            .collect()
    }

    /// Segments before the final readout: everything except a trailing
    /// probe_on segment.
    pub fn preparation(&self) -> &[PulseSegment] {
        match self.segments.last() {
            Some(last) if last.is_probe_on() && self.segments.len() > 1 => &self.segments[..self.segments.len() - 1],
            _ => &self.segments,
        }
    }

    pub fn has_echo(&self) -> bool {
        self.preparation().iter().any(PulseSegment::is_pi_pulse)
    }
}

/// Timing of the squeeze–echo–squeeze–readout protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    /// s
    pub tau_sq: f64,
    pub tau_off: f64,
    pub tau_pi: f64,
    pub tau_meas: f64,
    /// Final analysis rotation, rad.
    pub theta: f64,
    pub axis_phase: f64,
}

impl Protocol {
    /// τ_sq = τ_off = 60 μs, τ_π = 50 μs.
    pub fn standard(theta: f64) -> Self {
        Self {
            tau_sq: 60e-6,
            tau_off: 60e-6,
            tau_pi: 50e-6,
            tau_meas: 300e-6,
            theta,
            axis_phase: 0.0,
        }
    }

    /// Duration of the final rotation at the Rabi rate implied by τ_π.
    pub fn tau_r(&self) -> f64 {
        self.tau_pi * self.theta.abs() / PI
    }

    pub fn build(&self) -> Result<PulseSequence> {
        let mut segs = vec![
            PulseSegment::probe_on(self.tau_sq),
            PulseSegment::probe_off(self.tau_off),
            PulseSegment::microwave(self.tau_pi, PI, 0.0),
            PulseSegment::probe_on(self.tau_sq),
            PulseSegment::probe_off(self.tau_off),
        ];
        if self.theta != 0.0 {
            segs.push(PulseSegment::microwave(self.tau_r(), self.theta, self.axis_phase));
        }
        segs.push(PulseSegment::probe_on(self.tau_meas));
        PulseSequence::new(segs)
    }

    /// Single probe pulse without echo followed by readout.
    pub fn no_echo(tau_pulse: f64, tau_off: f64, tau_meas: f64) -> Result<PulseSequence> {
        PulseSequence::new(vec![
            PulseSegment::probe_on(tau_pulse),
            PulseSegment::probe_off(tau_off),
            PulseSegment::probe_on(tau_meas),
        ])
    }
}

pub fn rotation(theta: f64, axis_phase: f64) -> Rotation3<f64> {
    let axis = Unit::new_normalize(Vector3::new(axis_phase.cos(), axis_phase.sin(), 0.0));
    Rotation3::from_axis_angle(&axis, theta)
}

/// Rotates the mean spin and transforms the covariance as `R Σ Rᵀ`.
pub fn rotate_moments(m: &SpinMoments, theta: f64, axis_phase: f64) -> SpinMoments {
    let r = rotation(theta, axis_phase);
    let rm = r.matrix();
    SpinMoments {
        mean: rm * m.mean,
        cov: rm * m.cov * rm.transpose(),
        ..*m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCurveParams {
    pub var_z: f64,
    pub var_y: f64,
    /// Detection floor without atoms, same units as the variances.
    pub floor: f64,
}

/// V(θ) = V_z cos²θ + V_y sin²θ + V_floor.
pub fn rotation_noise_curve(params: &NoiseCurveParams, thetas: &[f64]) -> Vec<(f64, f64)> {
    thetas
        .iter()
        .map(|&t| {
            let (s, c) = t.sin_cos();
            (t, params.var_z * c * c + params.var_y * s * s + params.floor)
        })
        .collect()
}

/// Parameters for integrating the differential light shift of every atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DephasingModel {
    /// Peak differential shift per photon Ω_max, rad/s.
    pub omega_max: f64,
    /// Cavity mode radius, m.
    pub r_c: f64,
    /// Field amplitude decay rate, rad/s.
    pub kappa: f64,
    /// Ensemble-mean spontaneous emission probability per photon-second.
    pub scatter_rate_per_photon: f64,
    /// Integration step, s.
    pub max_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport {
    /// |Σ w e^{iΦ}| / Σ w from light-shift dephasing alone.
    pub coherence: f64,
    /// Photon-time integral over the preparation, photon·s.
    pub photon_dose: f64,
    pub p_scatter: f64,
    /// coherence · (1 − p_scatter)
    pub contrast: f64,
}

/// Step-wise photon dose with the echo sign of each step and its mid time.
/// A π pulse flips the sign at its midpoint.
fn dose_timeline(segments: &[PulseSegment], n_ss: f64, kappa: f64, max_step: f64) -> Vec<(f64, f64)> {
    let mut field = CavityField::new(n_ss, kappa);
    let mut sign = 1.0;
    let mut t = 0.0;
    let mut steps = Vec::new();
    let mut run = |field: &mut CavityField, t: &mut f64, sign: f64, driven: bool, duration: f64| {
        if duration <= 0.0 {
            return;
        }
        let pieces = (duration / max_step).ceil().max(1.0) as usize;
        let dt = duration / pieces as f64;
        for k in 0..pieces {
            let mid = *t + (k as f64 + 0.5) * dt;
            steps.push((mid, sign * field.advance(driven, dt)));
        }
        *t += duration;
    };
    for seg in segments {
        if seg.is_pi_pulse() {
            run(&mut field, &mut t, sign, false, seg.duration / 2.0);
            sign = -sign;
            run(&mut field, &mut t, sign, false, seg.duration / 2.0);
        } else {
            run(&mut field, &mut t, sign, seg.is_probe_on(), seg.duration);
        }
    }
    steps
}

/// Total photon-time integral ∫n dt over `segments`, including ring-down
/// into the probe-off segments that follow each pulse.
pub fn photon_dose(segments: &[PulseSegment], n_ss: f64, kappa: f64, max_step: f64) -> Result<f64> {
    require_positive("kappa", kappa)?;
    require_positive("max_step", max_step)?;
    require_non_negative("n_ss", n_ss)?;
    Ok(dose_timeline(segments, n_ss, kappa, max_step)
        .iter()
        .map(|(_, d)| d.abs())
        .sum())
}

/// Contrast after light-shift dephasing over `segments`, with spin-echo sign
/// flips at π pulses and atoms moving ballistically. Each atom picks up
/// Φ_i = Σ_steps ±n(t)·Ω_i(t)·dt; the readout weights are Ω_i at the end.
/// Rotations other than π are ignored.
pub fn dephasing_contrast(
    ensemble: &AtomEnsemble,
    n_ss: f64,
    segments: &[PulseSegment],
    model: &DephasingModel,
) -> Result<ContrastReport> {
    require_positive("kappa", model.kappa)?;
    require_positive("max_step", model.max_step)?;
    require_positive("r_c", model.r_c)?;
    let timeline = dose_timeline(segments, n_ss, model.kappa, model.max_step);
    let photon_dose: f64 = timeline.iter().map(|(_, d)| d.abs()).sum();
    let t_end: f64 = segments.iter().map(|s| s.duration).sum();
    let cutoff = 1e-12 * timeline.iter().fold(0.0f64, |m, (_, d)| m.max(d.abs()));
    let active: Vec<(f64, f64)> = timeline.into_iter().filter(|(_, d)| d.abs() > cutoff).collect();

    let bulk = ensemble.bulk_velocity();
    let inv_rc2 = 1.0 / (model.r_c * model.r_c);
    let half = 0.5 * model.omega_max;

    let partials: Vec<(Complex64, f64)> = ensemble
        .atoms
        .par_chunks(2048)
        .map(|chunk| {
            let mut sum = Complex64::new(0.0, 0.0);
            let mut wsum = 0.0;
            for atom in chunk {
                let phase: f64 = active
                    .iter()
                    .map(|&(t, d)| d * half * (-atom.radius_sq_after(bulk, t) * inv_rc2).exp())
                    .sum();
                let w = (half * (-atom.radius_sq_after(bulk, t_end) * inv_rc2).exp()).abs();
                sum += Complex64::from_polar(w, phase);
                wsum += w;
            }
            (sum, wsum)
        })
        .collect();
    let (sum, wsum) = partials
        .into_iter()
        .fold((Complex64::new(0.0, 0.0), 0.0), |(a, b), (c, d)| (a + c, b + d));

    let coherence = if wsum > 0.0 { sum.norm() / wsum } else { 1.0 };
    let p_scatter = photon_dose * model.scatter_rate_per_photon;
    if !(0.0..=1.0).contains(&p_scatter) {
        return Err(invalid(
            "n_ss",
            format!("scattering probability {p_scatter:.3} outside [0, 1]"),
        ));
    }
    Ok(ContrastReport {
        coherence,
        photon_dose,
        p_scatter,
        contrast: coherence * (1.0 - p_scatter),
    })
}

/// Contrast at the end of the preparation part of an echo sequence. Fails if
/// the sequence has no π pulse before its readout.
pub fn echo_contrast(
    ensemble: &AtomEnsemble,
    n_ss: f64,
    seq: &PulseSequence,
    model: &DephasingModel,
) -> Result<ContrastReport> {
    seq.validate()?;
    if !seq.has_echo() {
        return Err(Error::Sequence {
            index: 0,
            reason: "echo contrast needs a pi pulse before the readout".into(),
        });
    }
    dephasing_contrast(ensemble, n_ss, seq.preparation(), model)
}

/// One sample of the probe phase record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Slice start, s.
    pub time: f64,
    /// s
    pub duration: f64,
    /// rad
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    fn contains(&self, p: &TracePoint) -> bool {
        let eps = 1e-12;
        p.time >= self.start - eps && p.time + p.duration <= self.end + eps
    }
}

/// Duration-weighted mean phase of the trace points inside `window`.
pub fn window_mean(trace: &[TracePoint], window: &Window) -> Result<f64> {
    let (num, den) = trace
        .iter()
        .filter(|p| window.contains(p))
        .fold((0.0, 0.0), |(n, d), p| (n + p.phase * p.duration, d + p.duration));
    if den <= 0.0 {
        return Err(Error::EmptyWindow(format!(
            "no samples in [{:.3e}, {:.3e}] s",
            window.start, window.end
        )));
    }
    Ok(num / den)
}

/// mean(window_b) − mean(window_a).
pub fn difference_of_means(trace: &[TracePoint], window_a: &Window, window_b: &Window) -> Result<f64> {
    Ok(window_mean(trace, window_b)? - window_mean(trace, window_a)?)
}

/// Average of the window phases on either side of the echo π pulse; the J_z
/// parts cancel because the π pulse flips J_z.
pub fn echo_average(phase_first: f64, phase_second: f64) -> f64 {
    0.5 * (phase_first + phase_second)
}

/// Atom number from the echo-averaged phase, given the phase per atom of the
/// N-proportional shift.
pub fn atom_number_readout(phase_first: f64, phase_second: f64, phase_per_atom: f64) -> Result<f64> {
    if phase_per_atom == 0.0 || !phase_per_atom.is_finite() {
        return Err(invalid("phase_per_atom", "must be finite and non-zero"));
    }
    Ok(echo_average(phase_first, phase_second) / phase_per_atom)
}
