//! Closed-form QND measurement model: probe phase imprint, conditional
//! (squeezed) J_z variance, backaction antisqueezing of J_y, spontaneous
//! emission penalty and the contrast-penalized squeezing figure.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_non_negative, require_positive, Result};

/// Above this value of nΩ²t² the short-time formula is flagged.
pub const SHORT_TIME_LIMIT: f64 = 0.1;
/// |δ| must exceed this multiple of γ for the far-detuned scattering rate.
pub const FAR_DETUNED_RATIO: f64 = 10.0;

/// Gaussian summary of the collective pseudospin.
///
/// The covariance is carried as a full 3×3 matrix so that rotations about
/// any equatorial axis act as `R Σ Rᵀ`. For a state polarized along x the
/// transverse block holds `var_y`, `var_z` and their cross term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinMoments {
    /// J = N/2
    pub j_length: f64,
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
    pub contrast: f64,
}

impl SpinMoments {
    /// Coherent spin state along +x with transverse variances `projection_variance`
    /// (N/4 for uniform coupling).
    pub fn coherent(n_atoms: f64, projection_variance: f64) -> Self {
        let j = n_atoms / 2.0;
        Self {
            j_length: j,
            mean: Vector3::new(j, 0.0, 0.0),
            cov: Matrix3::from_diagonal(&Vector3::new(0.0, projection_variance, projection_variance)),
            contrast: 1.0,
        }
    }

    pub fn mean_x(&self) -> f64 {
        self.mean.x
    }
    pub fn mean_y(&self) -> f64 {
        self.mean.y
    }
    pub fn mean_z(&self) -> f64 {
        self.mean.z
    }
    pub fn var_y(&self) -> f64 {
        self.cov[(1, 1)]
    }
    pub fn var_z(&self) -> f64 {
        self.cov[(2, 2)]
    }
    pub fn cov_yz(&self) -> f64 {
        self.cov[(1, 2)]
    }

    pub fn is_valid(&self) -> bool {
        self.var_y() > 0.0 && self.var_z() > 0.0 && (0.0..=1.0).contains(&self.contrast)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    /// nΩ²t² ≪ 1, photons stay in the cavity for the whole interaction.
    Short,
    /// Interaction split into photon-lifetime slices.
    Leaky,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalVariance {
    pub value: f64,
    /// Set when the short-time formula is used outside nΩ²t² < 0.1.
    pub short_time_warning: bool,
}

/// Δφ = J_z Ω̄ t.
pub fn probe_phase(j_z: f64, omega_bar: f64, t: f64) -> Result<f64> {
    require_non_negative("t", t)?;
    Ok(j_z * omega_bar * t)
}

/// Dimensionless measurement strength of the leaky model, N n̄ Ω² t τ_cav/√2.
pub fn squeezing_strength(n_atoms: f64, n_bar: f64, omega: f64, t: f64, tau_cav: f64) -> f64 {
    n_atoms * n_bar * omega * omega * t * tau_cav / std::f64::consts::SQRT_2
}

/// J_z variance conditioned on the probe phase record.
///
/// short: (N/4)/(1 + N n Ω² t²/2); leaky: (N/4)/(1 + N n̄ Ω² t τ_cav/√2).
pub fn conditional_variance(
    n_atoms: f64,
    photons: f64,
    omega: f64,
    t: f64,
    tau_cav: f64,
    mode: MeasurementMode,
) -> Result<ConditionalVariance> {
    check_common(n_atoms, photons, t)?;
    let projection = n_atoms / 4.0;
    Ok(match mode {
        MeasurementMode::Short => {
            let x = photons * omega * omega * t * t;
            ConditionalVariance {
                value: projection / (1.0 + n_atoms * x / 2.0),
                short_time_warning: x > SHORT_TIME_LIMIT,
            }
        }
        MeasurementMode::Leaky => {
            require_positive("tau_cav", tau_cav)?;
            ConditionalVariance {
                value: projection / (1.0 + squeezing_strength(n_atoms, photons, omega, t, tau_cav)),
                short_time_warning: false,
            }
        }
    })
}

/// (N/4)(1 + N n̄ Ω² t τ_cav/√2).
pub fn antisqueezed_variance(n_atoms: f64, n_bar: f64, omega: f64, t: f64, tau_cav: f64) -> Result<f64> {
    check_common(n_atoms, n_bar, t)?;
    require_positive("tau_cav", tau_cav)?;
    Ok(n_atoms / 4.0 * (1.0 + squeezing_strength(n_atoms, n_bar, omega, t, tau_cav)))
}

/// Leaky-model posterior for an arbitrary prior variance. The measurement
/// noise in J_z units is (N/4)/q regardless of the prior, so
/// V_z = 1/(1/V₀ + q/(N/4)) and V_y = V₀ + (N/4)q. Reduces to the bare
/// closed forms when V₀ = N/4.
pub fn leaky_moments_from_prior(prior: f64, n_atoms: f64, q: f64) -> (f64, f64) {
    let projection = n_atoms / 4.0;
    let var_z = 1.0 / (1.0 / prior + q / projection);
    let var_y = prior + projection * q;
    (var_z, var_y)
}

fn check_common(n_atoms: f64, photons: f64, t: f64) -> Result<()> {
    require_positive("n_atoms", n_atoms)?;
    require_non_negative("photons", photons)?;
    require_non_negative("t", t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringReport {
    /// Probability that a given atom scatters a photon.
    pub p_scatter: f64,
    pub expected_scattered: f64,
    /// Unaccounted probe phase variance from the scatterer count, rad².
    pub added_phase_variance: f64,
    pub contrast_multiplier: f64,
}

impl ScatteringReport {
    /// Added variance in J_z units, N p/4.
    pub fn added_jz_variance(&self) -> f64 {
        self.expected_scattered / 4.0
    }
}

/// Far-detuned spontaneous emission: p = n̄ g² γ t/δ² per atom, with g² the
/// ensemble-averaged squared coupling and δ the dominant detuning.
pub fn scattering_probability(
    n_bar: f64,
    g_sq: f64,
    gamma: f64,
    delta: f64,
    t: f64,
    n_atoms: f64,
    omega_bar: f64,
) -> Result<ScatteringReport> {
    require_non_negative("n_bar", n_bar)?;
    require_non_negative("g_sq", g_sq)?;
    require_positive("gamma", gamma)?;
    require_non_negative("t", t)?;
    if !delta.is_finite() || delta.abs() < FAR_DETUNED_RATIO * gamma {
        return Err(invalid(
            "delta",
            format!(
                "|delta| = {:.3e} is not far detuned from gamma = {gamma:.3e}",
                delta.abs()
            ),
        ));
    }
    let p = n_bar * g_sq * gamma * t / (delta * delta);
    if p > 1.0 {
        return Err(invalid(
            "n_bar",
            format!("scattering probability {p:.3} exceeds 1; the linear rate model is invalid"),
        ));
    }
    let phase = omega_bar * t;
    Ok(ScatteringReport {
        p_scatter: p,
        expected_scattered: n_atoms * p,
        added_phase_variance: n_atoms * p * phase * phase / 4.0,
        contrast_multiplier: 1.0 - p,
    })
}

/// 10·log₁₀[(V_z/(N/4))/C²]. Negative means metrologically squeezed.
pub fn metrological_squeezing_db(var_z: f64, contrast: f64, n_atoms: f64) -> Result<f64> {
    require_positive("var_z", var_z)?;
    require_positive("n_atoms", n_atoms)?;
    if !(contrast > 0.0 && contrast <= 1.0) {
        return Err(invalid("contrast", format!("must lie in (0, 1], got {contrast}")));
    }
    Ok(10.0 * ((var_z / (n_atoms / 4.0)) / (contrast * contrast)).log10())
}
