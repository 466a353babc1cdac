//! A resolved experiment in SI units and the quantities derived from it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::backaction::{leaky_moments_from_prior, metrological_squeezing_db};
use crate::cavity::{
    angular, atom_number_shift_rate, derive_cavity, dispersive_shift_rate, steady_state_photons, CavitySpec,
    DerivedCavity, ProbeSpec,
};
use crate::config::{ProjectionMode, RunConfig, SequenceConfig};
use crate::coupling::{coupling_stats, sample_ensemble, AtomEnsemble, CouplingStats};
use crate::error::{invalid, Result};
use crate::montecarlo::{PriorKind, ShotConfig};
use crate::sequence::{
    dephasing_contrast, echo_contrast, photon_dose, ContrastReport, DephasingModel, NoiseCurveParams, Protocol,
    PulseSequence,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub cavity: CavitySpec,
    pub probe: ProbeSpec,
    /// W; not used by the model.
    pub lock_power: f64,
    pub n_atoms: usize,
    /// m
    pub cloud_radius: f64,
    /// K
    pub temperature: f64,
    /// m/s
    pub drift_velocity: f64,
    pub sample_seed: u64,
    pub sequence: PulseSequence,
    pub projection: ProjectionMode,
    pub prior: PriorKind,
    pub scattering: bool,
    /// s
    pub dead_time: f64,
    pub no_echo_pulse: f64,
    pub no_echo_off: f64,
    pub dephasing_step: f64,
}

/// Closed-form summary of an experiment, as printed by `derive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub cavity: DerivedCavity,
    pub coupling: CouplingStats,
    /// rad/s
    pub omega_max: f64,
    pub n_ss: f64,
    /// Mean photon number in the first probe pulse.
    pub n_bar_first_pulse: f64,
    /// Squeezing strength summed over the preparation pulses.
    pub q_preparation: f64,
    pub prior_variance: f64,
    pub var_z: f64,
    pub var_y: f64,
    pub squeezing_db: f64,
    pub scatter_rate_per_photon: f64,
    pub p_scatter_preparation: f64,
    pub eta_for_6pct_scattering: f64,
}

impl Experiment {
    pub fn from_config(c: &RunConfig) -> Result<Self> {
        let upper = angular(c.probe.detuning_upper_ghz * 1e9);
        let lower = angular(
            c.probe
                .detuning_lower_ghz
                .ok_or_else(|| invalid("probe", "unresolved detuning"))?
                * 1e9,
        );
        let sequence = match &c.sequence {
            SequenceConfig::Echo(e) => Protocol {
                tau_sq: e.tau_sq_us * 1e-6,
                tau_off: e.tau_off_us * 1e-6,
                tau_pi: e.tau_pi_us * 1e-6,
                tau_meas: e.tau_meas_us * 1e-6,
                theta: e.theta_rad,
                axis_phase: e.axis_phase_rad,
            }
            .build()?,
            SequenceConfig::NoEcho(e) => {
                Protocol::no_echo(e.tau_pulse_us * 1e-6, e.tau_off_us * 1e-6, e.tau_meas_us * 1e-6)?
            }
            SequenceConfig::Segments(specs) => PulseSequence::from_specs(specs)?,
        };
        let x = Self {
            cavity: CavitySpec {
                length: c.cavity.length_cm * 1e-2,
                finesse: c.cavity.finesse,
                mode_waist: c.cavity.mode_waist_um * 1e-6,
                g_max: angular(c.cavity.g_max_khz * 1e3),
            },
            probe: ProbeSpec {
                delta_1: lower,
                delta_2: upper,
                input_power: c.probe.power_nw * 1e-9,
                wavelength: c.probe.wavelength_nm * 1e-9,
                eta_in: c.probe.eta_in,
                linewidth_gamma: angular(c.probe.linewidth_mhz * 1e6),
            },
            lock_power: c.lock.power_nw * 1e-9,
            n_atoms: c.ensemble.n_atoms as usize,
            cloud_radius: c.ensemble.radius_um * 1e-6,
            temperature: c.ensemble.temperature_uk * 1e-6,
            drift_velocity: c.ensemble.drift_velocity_cm_s * 1e-2,
            sample_seed: c.ensemble.sample_seed,
            sequence,
            projection: c.mc.projection,
            prior: c.mc.prior,
            scattering: c.mc.scattering,
            dead_time: c.mc.buildup_dead_time_us * 1e-6,
            no_echo_pulse: c.contrast.no_echo_pulse_us * 1e-6,
            no_echo_off: c.contrast.no_echo_off_us * 1e-6,
            dephasing_step: c.contrast.dephasing_step_us * 1e-6,
        };
        x.cavity.validate()?;
        x.probe.validate()?;
        x.shot_config()?.validate()?;
        Ok(x)
    }

    pub fn derived_cavity(&self) -> Result<DerivedCavity> {
        derive_cavity(&self.cavity)
    }

    pub fn omega_max(&self) -> Result<f64> {
        dispersive_shift_rate(self.cavity.g_max, self.probe.delta_1, self.probe.delta_2)
    }

    pub fn coupling(&self) -> Result<CouplingStats> {
        coupling_stats(
            self.n_atoms,
            self.omega_max()?,
            self.cloud_radius,
            self.cavity.mode_waist,
        )
    }

    pub fn omega_bar(&self) -> Result<f64> {
        Ok(self.coupling()?.omega_mean)
    }

    pub fn n_ss(&self) -> Result<f64> {
        steady_state_photons(&self.probe, &self.derived_cavity()?)
    }

    /// Ensemble-mean g², reduced from g_max² by the same factor as Ω̄.
    pub fn g_sq_mean(&self) -> Result<f64> {
        Ok(self.cavity.g_max.powi(2) / self.coupling()?.reduction_factor)
    }

    /// Per-atom scattering probability per photon·second, ḡ²Γ/Δ₂².
    pub fn scatter_rate_per_photon(&self) -> Result<f64> {
        Ok(self.g_sq_mean()? * self.probe.linewidth_gamma / self.probe.delta_2.powi(2))
    }

    /// Total atom-number phase rate N·ḡ²(1/Δ₂ + 1/Δ₁)/2, rad/s.
    pub fn phase_offset_rate(&self) -> Result<f64> {
        let per_atom = atom_number_shift_rate(self.g_sq_mean()?.sqrt(), self.probe.delta_1, self.probe.delta_2)?;
        Ok(self.n_atoms as f64 * per_atom)
    }

    /// Prior variance of J_z in the units the probe measures.
    pub fn prior_variance(&self) -> Result<f64> {
        let n = self.n_atoms as f64;
        Ok(match self.projection {
            ProjectionMode::Uniform => n / 4.0,
            ProjectionMode::Inhomogeneous => {
                let c = self.coupling()?;
                c.effective_projection_variance / c.omega_mean.powi(2)
            }
        })
    }

    pub fn shot_config(&self) -> Result<ShotConfig> {
        let cav = self.derived_cavity()?;
        Ok(ShotConfig {
            n_atoms: self.n_atoms,
            prior: self.prior,
            prior_variance: self.prior_variance()?,
            omega_bar: self.omega_bar()?,
            tau_cav: cav.tau_cav,
            n_ss: self.n_ss()?,
            phase_offset_rate: self.phase_offset_rate()?,
            scatter_rate_per_photon: if self.scattering {
                Some(self.scatter_rate_per_photon()?)
            } else {
                None
            },
            dead_time: self.dead_time,
            sequence: self.sequence.clone(),
        })
    }

    /// Squeezing strength accumulated over the preparation pulses.
    pub fn q_preparation(&self) -> Result<f64> {
        let shot = self.shot_config()?;
        let prep = self.sequence.preparation().len();
        let mut q = 0.0;
        for i in self.sequence.probe_on_indices().into_iter().filter(|&i| i < prep) {
            q += shot.segment_q(i)?;
        }
        Ok(q)
    }

    /// Closed-form (V_z, V_y) after preparation.
    pub fn prepared_moments(&self) -> Result<(f64, f64)> {
        Ok(leaky_moments_from_prior(
            self.prior_variance()?,
            self.n_atoms as f64,
            self.q_preparation()?,
        ))
    }

    /// Detection floor of the difference-of-means observable, J_z units:
    /// the sum of the floors of its two windows.
    pub fn outcome_floor(&self) -> Result<f64> {
        let shot = self.shot_config()?;
        let w = shot.windows().len();
        let mut floor = shot.window_floor(w - 1)?;
        if w >= 2 {
            floor += shot.window_floor(w - 2)?;
        }
        Ok(floor)
    }

    pub fn noise_curve_params(&self) -> Result<NoiseCurveParams> {
        let (var_z, var_y) = self.prepared_moments()?;
        Ok(NoiseCurveParams {
            var_z,
            var_y,
            floor: self.outcome_floor()?,
        })
    }

    pub fn dephasing_model(&self) -> Result<DephasingModel> {
        Ok(DephasingModel {
            omega_max: self.omega_max()?,
            r_c: self.cavity.mode_waist,
            kappa: self.derived_cavity()?.kappa,
            scatter_rate_per_photon: self.scatter_rate_per_photon()?,
            max_step: self.dephasing_step,
        })
    }

    /// Photon·seconds delivered during preparation, ring-down included.
    pub fn preparation_dose(&self) -> Result<f64> {
        photon_dose(
            self.sequence.preparation(),
            self.n_ss()?,
            self.derived_cavity()?.kappa,
            self.dephasing_step,
        )
    }

    pub fn preparation_scatter_probability(&self) -> Result<f64> {
        Ok(self.preparation_dose()? * self.scatter_rate_per_photon()?)
    }

    /// Input efficiency at which preparation scattering equals `target`.
    pub fn eta_for_preparation_scattering(&self, target: f64) -> Result<f64> {
        let mut unit = self.clone();
        unit.probe.eta_in = 1.0;
        let p1 = unit.preparation_scatter_probability()?;
        if p1 <= 0.0 {
            return Err(invalid("power_nw", "no light during preparation"));
        }
        Ok((target / p1).min(1.0))
    }

    /// Copy with η_in set so that preparation scattering equals `target`.
    pub fn calibrated(&self, target: f64) -> Result<Self> {
        let mut out = self.clone();
        out.probe.eta_in = self.eta_for_preparation_scattering(target)?;
        Ok(out)
    }

    pub fn sample_cloud(&self) -> Result<AtomEnsemble> {
        Ok(
            sample_ensemble(self.n_atoms, self.cloud_radius, self.temperature, self.sample_seed)?
                .with_drift(self.drift_velocity),
        )
    }

    /// Contrast at the end of the echo preparation.
    pub fn echo_contrast(&self, cloud: &AtomEnsemble) -> Result<ContrastReport> {
        echo_contrast(cloud, self.n_ss()?, &self.sequence, &self.dephasing_model()?)
    }

    /// Contrast after the single-pulse control without echo.
    pub fn no_echo_contrast(&self, cloud: &AtomEnsemble) -> Result<ContrastReport> {
        let seq = Protocol::no_echo(self.no_echo_pulse, self.no_echo_off, self.no_echo_off.max(1e-6))?;
        dephasing_contrast(cloud, self.n_ss()?, seq.preparation(), &self.dephasing_model()?)
    }

    /// 10·log₁₀(V_z/V₀) with contrast C applied as 1/C².
    pub fn squeezing_db(&self, contrast: f64) -> Result<f64> {
        let (vz, _) = self.prepared_moments()?;
        let v0 = self.prior_variance()?;
        metrological_squeezing_db(vz * (self.n_atoms as f64 / 4.0) / v0, contrast, self.n_atoms as f64)
    }

    pub fn derive(&self) -> Result<Derived> {
        let cav = self.derived_cavity()?;
        let (var_z, var_y) = self.prepared_moments()?;
        let first = self.sequence.probe_on_indices()[0];
        Ok(Derived {
            cavity: cav,
            coupling: self.coupling()?,
            omega_max: self.omega_max()?,
            n_ss: self.n_ss()?,
            n_bar_first_pulse: self.shot_config()?.segment_photons(first)?,
            q_preparation: self.q_preparation()?,
            prior_variance: self.prior_variance()?,
            var_z,
            var_y,
            squeezing_db: self.squeezing_db(1.0)?,
            scatter_rate_per_photon: self.scatter_rate_per_photon()?,
            p_scatter_preparation: self.preparation_scatter_probability()?,
            eta_for_6pct_scattering: self.eta_for_preparation_scattering(0.06)?,
        })
    }

    /// V(θ) on `points` angles spanning [0, π/2].
    pub fn rotation_noise_table(&self, points: usize) -> Result<Vec<(f64, f64)>> {
        let params = self.noise_curve_params()?;
        let thetas: Vec<f64> = (0..points).map(|k| PI / 2.0 * k as f64 / (points - 1) as f64).collect();
        Ok(crate::sequence::rotation_noise_curve(&params, &thetas))
    }
}
