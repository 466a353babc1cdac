//! Cavity and probe parameters, and the closed-form quantities derived from
//! them: free spectral range, linewidth, photon lifetime, dispersive shift
//! rate and intracavity photon numbers.
//!
//! Angular frequencies are rad/s throughout. Conversions from Hz happen at
//! the config boundary.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_non_negative, require_positive, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Mass of a ⁸⁷Rb atom, kg.
pub const RB87_MASS: f64 = 86.909_180_527 * 1.660_539_066_60e-27;
/// Ground-state hyperfine (clock) splitting of ⁸⁷Rb, Hz.
pub const RB87_CLOCK_SPLITTING_HZ: f64 = 6_834_682_610.904;
/// D2 line vacuum wavelength, m.
pub const RB87_D2_WAVELENGTH: f64 = 780.241e-9;
/// D2 natural linewidth Γ/2π, Hz.
pub const RB87_D2_LINEWIDTH_HZ: f64 = 6.0666e6;
/// Allowed mismatch between |Δ₁ − Δ₂| and the clock splitting, Hz.
pub const CLOCK_SPLITTING_TOLERANCE_HZ: f64 = 10.0e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavitySpec {
    /// m
    pub length: f64,
    pub finesse: f64,
    /// Mode radius at the atoms, m.
    pub mode_waist: f64,
    /// Peak atom-cavity coupling, rad/s.
    pub g_max: f64,
}

impl CavitySpec {
    pub fn validate(&self) -> Result<()> {
        require_positive("length", self.length)?;
        require_positive("finesse", self.finesse)?;
        if self.finesse <= 1.0 {
            return Err(invalid("finesse", format!("must exceed 1, got {}", self.finesse)));
        }
        require_positive("mode_waist", self.mode_waist)?;
        require_non_negative("g_max", self.g_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedCavity {
    /// Free spectral range, Hz.
    pub fsr: f64,
    /// Half width at half maximum, Hz.
    pub hwhm: f64,
    /// Intracavity photon (intensity) lifetime, s.
    pub tau_cav: f64,
    /// Field amplitude decay rate 2π·hwhm, rad/s.
    pub kappa: f64,
}

pub fn derive_cavity(spec: &CavitySpec) -> Result<DerivedCavity> {
    spec.validate()?;
    let fsr = SPEED_OF_LIGHT / (2.0 * spec.length);
    let hwhm = fsr / (2.0 * spec.finesse);
    let kappa = TAU * hwhm;
    Ok(DerivedCavity {
        fsr,
        hwhm,
        tau_cav: 1.0 / (2.0 * kappa),
        kappa,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    /// Detuning from the lower clock state's optical transition, rad/s.
    pub delta_1: f64,
    /// Detuning from the upper clock state's optical transition, rad/s.
    pub delta_2: f64,
    /// Cavity input power, W.
    pub input_power: f64,
    /// m
    pub wavelength: f64,
    /// Input-coupling / calibration efficiency.
    pub eta_in: f64,
    /// Atomic natural linewidth Γ, rad/s.
    pub linewidth_gamma: f64,
}

impl ProbeSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, d) in [("delta_1", self.delta_1), ("delta_2", self.delta_2)] {
            if !d.is_finite() || d == 0.0 {
                return Err(invalid(name, format!("must be finite and non-zero, got {d}")));
            }
        }
        let split_hz = (self.delta_1 - self.delta_2).abs() / TAU;
        if (split_hz - RB87_CLOCK_SPLITTING_HZ).abs() > CLOCK_SPLITTING_TOLERANCE_HZ {
            return Err(invalid(
                "delta_1",
                format!(
                    "|delta_1 - delta_2|/2pi = {split_hz:.6e} Hz does not match the clock splitting {RB87_CLOCK_SPLITTING_HZ:.6e} Hz"
                ),
            ));
        }
        require_non_negative("input_power", self.input_power)?;
        require_positive("wavelength", self.wavelength)?;
        if !(0.0..=1.0).contains(&self.eta_in) {
            return Err(invalid("eta_in", format!("must lie in [0, 1], got {}", self.eta_in)));
        }
        require_positive("linewidth_gamma", self.linewidth_gamma)
    }

    /// Laser angular frequency ω_L = 2πc/λ.
    pub fn omega_laser(&self) -> f64 {
        TAU * SPEED_OF_LIGHT / self.wavelength
    }
}

/// Intracavity photon numbers for one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonDrive {
    /// Steady-state intracavity photon number.
    pub n_ss: f64,
    /// Photon number averaged over the pulse, including buildup.
    pub n_bar: f64,
}

impl PhotonDrive {
    pub fn for_pulse(n_ss: f64, pulse_duration: f64, tau_cav: f64) -> Result<Self> {
        Ok(Self {
            n_ss,
            n_bar: time_averaged_photons(n_ss, pulse_duration, tau_cav)?,
        })
    }
}

/// Ω = g²(1/Δ₂ − 1/Δ₁): rate at which J_z imprints phase on the probe (and
/// the differential light shift per photon).
pub fn dispersive_shift_rate(g_max: f64, delta_1: f64, delta_2: f64) -> Result<f64> {
    check_detunings(delta_1, delta_2)?;
    Ok(g_max * g_max * (1.0 / delta_2 - 1.0 / delta_1))
}

/// Per-atom phase rate of the atom-number term, g²(1/Δ₂ + 1/Δ₁)/2. The
/// N-dependent probe phase is `N * rate * t`.
pub fn atom_number_shift_rate(g: f64, delta_1: f64, delta_2: f64) -> Result<f64> {
    check_detunings(delta_1, delta_2)?;
    Ok(0.5 * g * g * (1.0 / delta_2 + 1.0 / delta_1))
}

fn check_detunings(delta_1: f64, delta_2: f64) -> Result<()> {
    if delta_1 == 0.0 || !delta_1.is_finite() {
        return Err(invalid("delta_1", "detuning must be finite and non-zero"));
    }
    if delta_2 == 0.0 || !delta_2.is_finite() {
        return Err(invalid("delta_2", "detuning must be finite and non-zero"));
    }
    Ok(())
}

/// n_ss = η·P/(ħ ω_L κ).
pub fn steady_state_photons(probe: &ProbeSpec, cav: &DerivedCavity) -> Result<f64> {
    require_non_negative("input_power", probe.input_power)?;
    require_positive("wavelength", probe.wavelength)?;
    require_positive("kappa", cav.kappa)?;
    Ok(probe.eta_in * probe.input_power / (HBAR * probe.omega_laser() * cav.kappa))
}

/// Mean intracavity photon number over a pulse of length `pulse_duration`
/// switched on into an empty cavity. The field amplitude relaxes at
/// 1/(2τ_cav), so n(t) = n_ss(1 − e^{−t/2τ_cav})².
pub fn time_averaged_photons(n_ss: f64, pulse_duration: f64, tau_cav: f64) -> Result<f64> {
    require_non_negative("n_ss", n_ss)?;
    require_positive("pulse_duration", pulse_duration)?;
    require_positive("tau_cav", tau_cav)?;
    Ok(n_ss * buildup_fraction(pulse_duration / (2.0 * tau_cav)))
}

/// (1/u)∫₀ᵘ (1 − e^{−s})² ds.
fn buildup_fraction(u: f64) -> f64 {
    if u < 1e-3 {
        let u2 = u * u;
        u2 / 3.0 - u2 * u / 4.0 + 7.0 * u2 * u2 / 60.0 - u2 * u2 * u / 24.0
    } else {
        let one_minus = -(-u).exp_m1();
        let one_minus_2 = -(-2.0 * u).exp_m1();
        1.0 - 2.0 * one_minus / u + one_minus_2 / (2.0 * u)
    }
}

/// Photon-time integral ∫ n dt of a pulse of length `pulse_duration`,
/// including the ring-down after the input is switched off.
pub fn pulse_photon_dose(n_ss: f64, pulse_duration: f64, tau_cav: f64) -> Result<f64> {
    let n_bar = time_averaged_photons(n_ss, pulse_duration, tau_cav)?;
    let end = n_ss * (-(-pulse_duration / (2.0 * tau_cav)).exp_m1()).powi(2);
    Ok(n_bar * pulse_duration + end * tau_cav)
}

/// Intracavity field driven on and off, stepped exactly. Amplitude is in
/// units of √photons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityField {
    amplitude: f64,
    drive_amplitude: f64,
    kappa: f64,
}

impl CavityField {
    pub fn new(n_ss: f64, kappa: f64) -> Self {
        Self {
            amplitude: 0.0,
            drive_amplitude: n_ss.max(0.0).sqrt(),
            kappa,
        }
    }

    pub fn photons(&self) -> f64 {
        self.amplitude * self.amplitude
    }

    /// Advances by `dt` with the input on or off and returns ∫ n dt over the step.
    pub fn advance(&mut self, driven: bool, dt: f64) -> f64 {
        let target = if driven { self.drive_amplitude } else { 0.0 };
        let offset = self.amplitude - target;
        let decay = (-self.kappa * dt).exp();
        let k = self.kappa;
        let integral = target * target * dt
            + 2.0 * target * offset * (1.0 - decay) / k
            + offset * offset * (1.0 - decay * decay) / (2.0 * k);
        self.amplitude = target + offset * decay;
        integral
    }
}

/// Hz → rad/s.
pub fn angular(hz: f64) -> f64 {
    TAU * hz
}

/// rad/s → Hz.
pub fn cyclic(rad_per_s: f64) -> f64 {
    rad_per_s / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_cavity() -> CavitySpec {
        CavitySpec {
            length: 0.10,
            finesse: 205_000.0,
            mode_waist: 310e-6,
            g_max: angular(53e3),
        }
    }

    #[test]
    fn reference_cavity_values() {
        let d = derive_cavity(&reference_cavity()).unwrap();
        assert_relative_eq!(d.fsr, 1_498_962_290.0, max_relative = 1e-12);
        assert_relative_eq!(d.hwhm, 3_656.005_585_365_853_7, max_relative = 1e-12);
        assert_relative_eq!(d.tau_cav, 2.176_623_358_139_219_6e-5, max_relative = 1e-10);
        assert!((d.fsr / 1.505e9 - 1.0).abs() < 0.02);
        assert!((d.hwhm / 3.7e3 - 1.0).abs() < 0.02);
        assert!((d.tau_cav / 21.5e-6 - 1.0).abs() < 0.02);
        assert_relative_eq!(d.tau_cav, 1.0 / (2.0 * d.kappa));
    }

    #[test]
    fn finesse_and_length_scaling() {
        let base = derive_cavity(&reference_cavity()).unwrap();
        let doubled = derive_cavity(&CavitySpec {
            finesse: 410_000.0,
            ..reference_cavity()
        })
        .unwrap();
        assert_relative_eq!(doubled.hwhm, base.hwhm / 2.0, max_relative = 1e-14);
        assert_relative_eq!(doubled.tau_cav, base.tau_cav * 2.0, max_relative = 1e-14);

        let huge = derive_cavity(&CavitySpec {
            finesse: 1e12,
            ..reference_cavity()
        })
        .unwrap();
        assert_relative_eq!(huge.hwhm, 7.494_811_45e-4, max_relative = 1e-8);
        assert!(huge.tau_cav > 1e1 && huge.tau_cav < 1e3);

        let short = derive_cavity(&CavitySpec {
            length: 0.05,
            ..reference_cavity()
        })
        .unwrap();
        assert_relative_eq!(short.fsr, 2.0 * base.fsr, max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_geometry() {
        for spec in [
            CavitySpec {
                length: 0.0,
                ..reference_cavity()
            },
            CavitySpec {
                length: -1.0,
                ..reference_cavity()
            },
            CavitySpec {
                finesse: 0.5,
                ..reference_cavity()
            },
            CavitySpec {
                finesse: -3.0,
                ..reference_cavity()
            },
        ] {
            assert!(matches!(
                derive_cavity(&spec),
                Err(crate::Error::InvalidParameter { .. })
            ));
        }
    }

    #[test]
    fn dispersive_shift_at_reference_detunings() {
        let om = dispersive_shift_rate(angular(53e3), angular(-8.335e9), angular(-1.5e9)).unwrap();
        // hand arithmetic: (2π·53e3)²·(1/Δ₂ − 1/Δ₁)/2π
        assert_relative_eq!(cyclic(om), -1.535_654_069_186_163, max_relative = 1e-10);
    }

    #[test]
    fn dispersive_shift_symmetries() {
        let g = angular(53e3);
        let d = angular(-1.5e9);
        assert_eq!(dispersive_shift_rate(g, d, d).unwrap(), 0.0);
        let straddle = dispersive_shift_rate(g, -d, d).unwrap();
        assert_relative_eq!(straddle, 2.0 * g * g / d, max_relative = 1e-14);
        let a = dispersive_shift_rate(g, angular(-8.3e9), d).unwrap();
        let b = dispersive_shift_rate(g, d, angular(-8.3e9)).unwrap();
        assert_relative_eq!(a, -b, max_relative = 1e-14);
        assert!(dispersive_shift_rate(g, 0.0, d).is_err());
        assert!(dispersive_shift_rate(g, d, 0.0).is_err());
    }

    fn probe(power: f64, eta: f64) -> ProbeSpec {
        ProbeSpec {
            delta_1: angular(-1.5e9 - RB87_CLOCK_SPLITTING_HZ),
            delta_2: angular(-1.5e9),
            input_power: power,
            wavelength: 780e-9,
            eta_in: eta,
            linewidth_gamma: angular(RB87_D2_LINEWIDTH_HZ),
        }
    }

    #[test]
    fn steady_state_photon_number() {
        let cav = DerivedCavity {
            fsr: 0.0,
            hwhm: 3.66e3,
            tau_cav: 1.0 / (2.0 * angular(3.66e3)),
            kappa: angular(3.66e3),
        };
        let n = steady_state_photons(&probe(2.5e-9, 1.0), &cav).unwrap();
        assert_relative_eq!(n, 426_871.269_348_763_6, max_relative = 1e-9);
        assert_eq!(steady_state_photons(&probe(0.0, 1.0), &cav).unwrap(), 0.0);
        let half = steady_state_photons(&probe(2.5e-9, 0.5), &cav).unwrap();
        assert_relative_eq!(half, n / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn probe_validation() {
        assert!(probe(2.5e-9, 0.35).validate().is_ok());
        let mut p = probe(2.5e-9, 0.35);
        p.delta_1 = angular(-3.0e9);
        assert!(p.validate().is_err());
        let mut p = probe(2.5e-9, 0.35);
        p.eta_in = 1.5;
        assert!(p.validate().is_err());
    }

    /// Composite Simpson on n(t) = n_ss(1 − e^{−t/2τ})².
    fn simpson_average(n_ss: f64, t: f64, tau: f64) -> f64 {
        let steps = 20_000;
        let h = t / steps as f64;
        let f = |s: f64| n_ss * (1.0 - (-s / (2.0 * tau)).exp()).powi(2);
        let mut acc = f(0.0) + f(t);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        acc * h / 3.0 / t
    }

    #[test]
    fn time_average_matches_quadrature() {
        let closed = time_averaged_photons(1e5, 60e-6, 21.5e-6).unwrap();
        let quad = simpson_average(1e5, 60e-6, 21.5e-6);
        assert_relative_eq!(closed, quad, max_relative = 1e-6);
        // frozen from an adaptive quadrature run
        assert_relative_eq!(closed, 25_810.953_884_769_2, max_relative = 1e-9);

        for t in [1e-9, 1e-7, 3e-6, 5e-5, 1e-3] {
            let c = time_averaged_photons(1.0, t, 21.5e-6).unwrap();
            assert_relative_eq!(c, simpson_average(1.0, t, 21.5e-6), max_relative = 1e-6);
        }
    }

    #[test]
    fn time_average_limits() {
        let tau = 21.5e-6;
        let long = time_averaged_photons(1e5, 100.0 * tau, tau).unwrap();
        assert!(long < 1e5 && (1.0 - long / 1e5) < 0.04);
        let tiny = time_averaged_photons(1e5, 1e-12, tau).unwrap();
        assert!((0.0..1e-8).contains(&tiny));
        assert!(time_averaged_photons(1e5, 0.0, tau).is_err());
    }

    #[test]
    fn field_stepping_reproduces_closed_forms() {
        let tau = 21.5e-6;
        let kappa = 1.0 / (2.0 * tau);
        let mut field = CavityField::new(1e5, kappa);
        let mut dose = 0.0;
        for _ in 0..60 {
            dose += field.advance(true, 1e-6);
        }
        let avg = time_averaged_photons(1e5, 60e-6, tau).unwrap();
        assert_relative_eq!(dose, avg * 60e-6, max_relative = 1e-10);
        for _ in 0..2000 {
            dose += field.advance(false, 1e-6);
        }
        assert_relative_eq!(dose, pulse_photon_dose(1e5, 60e-6, tau).unwrap(), max_relative = 1e-9);
    }
}
