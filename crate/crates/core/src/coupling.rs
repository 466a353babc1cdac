//! Atom cloud sampling and spatially varying atom–cavity coupling.
//!
//! Each atom's shift rate is Ω_i = Ω_max · ½ · exp(−ρ_i²/r_c²): the standing
//! wave's cos² is replaced by its average ½ (atoms cross a node in ~10 μs),
//! and the transverse Gaussian factor is frozen per pulse. With a cloud
//! density ∝ exp(−ρ²/r_a²) this reproduces both the mean-coupling reduction
//! 2((r_a/r_c)² + 1) and the mean-squared-coupling projection variance
//! (N/16)Ω_max²/(2(r_a/r_c)² + 1).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavity::{BOLTZMANN, RB87_D2_WAVELENGTH, RB87_MASS};
use crate::error::{invalid, require_non_negative, require_positive, Result};

pub const DEFAULT_DRIFT_VELOCITY: f64 = 0.029;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Transverse position (x, y), m.
    pub position: [f64; 2],
    /// Transverse velocity, m/s.
    pub velocity: [f64; 2],
    /// Position along the cavity axis within one standing-wave period, m.
    pub axial_position: f64,
    pub axial_velocity: f64,
}

impl Atom {
    pub fn radius_sq(&self) -> f64 {
        self.position[0] * self.position[0] + self.position[1] * self.position[1]
    }

    /// Squared transverse radius after ballistic flight for `dt` with an extra
    /// bulk velocity added to the atom's own.
    pub fn radius_sq_after(&self, bulk: [f64; 2], dt: f64) -> f64 {
        let x = self.position[0] + (self.velocity[0] + bulk[0]) * dt;
        let y = self.position[1] + (self.velocity[1] + bulk[1]) * dt;
        x * x + y * y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomEnsemble {
    pub n_atoms: usize,
    /// 1/e radius r_a, m.
    pub cloud_radius: f64,
    /// K
    pub temperature: f64,
    /// Downward bulk velocity, m/s. Applied along −y.
    pub drift_velocity: f64,
    /// Thermal rms velocity per axis √(k_B T/m), m/s. This is the cloud's
    /// expansion speed; it is not added on top of the sampled velocities.
    pub expansion_velocity: f64,
    pub atoms: Vec<Atom>,
}

impl AtomEnsemble {
    pub fn with_drift(mut self, drift_velocity: f64) -> Self {
        self.drift_velocity = drift_velocity;
        self
    }

    pub fn bulk_velocity(&self) -> [f64; 2] {
        [0.0, -self.drift_velocity]
    }

    /// Sample means of Ω_i and Ω_i² over the materialized atoms.
    pub fn empirical_stats(&self, omega_max: f64, r_c: f64) -> EmpiricalCoupling {
        let (s1, s2, s4) = self
            .atoms
            .par_chunks(4096)
            .map(|chunk| {
                chunk.iter().fold((0.0, 0.0, 0.0), |(a, b, c), atom| {
                    let w = coupling_weight(atom, omega_max, r_c);
                    let w2 = w * w;
                    (a + w, b + w2, c + w2 * w2)
                })
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((0.0, 0.0, 0.0), |(a, b, c), (x, y, z)| (a + x, b + y, c + z));
        let n = self.atoms.len() as f64;
        let mean = s1 / n;
        let sq_mean = s2 / n;
        EmpiricalCoupling {
            omega_mean: mean,
            omega_mean_stderr: ((sq_mean - mean * mean).max(0.0) / n).sqrt(),
            omega_sq_mean: sq_mean,
            omega_sq_mean_stderr: ((s4 / n - sq_mean * sq_mean).max(0.0) / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalCoupling {
    pub omega_mean: f64,
    pub omega_mean_stderr: f64,
    pub omega_sq_mean: f64,
    pub omega_sq_mean_stderr: f64,
}

impl EmpiricalCoupling {
    /// Var(Σ Ω_i j_i) for independent j_i = ±½, given these atoms: N·⟨Ω²⟩/4.
    pub fn projection_variance(&self, n_atoms: usize) -> (f64, f64) {
        let n = n_atoms as f64;
        (n * self.omega_sq_mean / 4.0, n * self.omega_sq_mean_stderr / 4.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingStats {
    /// Ω̄, rad/s
    pub omega_mean: f64,
    /// ⟨Ω_i²⟩, rad²/s²
    pub omega_sq_mean: f64,
    pub reduction_factor: f64,
    /// (ΔΩ̄J_z)², rad²/s²
    pub effective_projection_variance: f64,
}

/// 2((r_a/r_c)² + 1); Ω̄ = Ω_max / factor.
pub fn coupling_reduction_factor(r_a: f64, r_c: f64) -> Result<f64> {
    require_non_negative("r_a", r_a)?;
    require_positive("r_c", r_c)?;
    let x = (r_a / r_c).powi(2);
    Ok(2.0 * (x + 1.0))
}

/// (N/16)·Ω_max²·(2(r_a/r_c)² + 1)⁻¹.
pub fn effective_projection_variance(n: usize, omega_max: f64, r_a: f64, r_c: f64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n_atoms", "must be at least 1"));
    }
    require_non_negative("r_a", r_a)?;
    require_positive("r_c", r_c)?;
    let x = (r_a / r_c).powi(2);
    Ok(n as f64 / 16.0 * omega_max * omega_max / (2.0 * x + 1.0))
}

pub fn coupling_stats(n: usize, omega_max: f64, r_a: f64, r_c: f64) -> Result<CouplingStats> {
    let factor = coupling_reduction_factor(r_a, r_c)?;
    let x = (r_a / r_c).powi(2);
    Ok(CouplingStats {
        omega_mean: omega_max / factor,
        omega_sq_mean: omega_max * omega_max / 4.0 / (2.0 * x + 1.0),
        reduction_factor: factor,
        effective_projection_variance: effective_projection_variance(n, omega_max, r_a, r_c)?,
    })
}

/// Thermal rms velocity per axis for ⁸⁷Rb.
pub fn thermal_velocity(temperature: f64) -> f64 {
    (BOLTZMANN * temperature.max(0.0) / RB87_MASS).sqrt()
}

/// Draws a cloud of `n` atoms: transverse density ∝ exp(−ρ²/r_a²),
/// Maxwell–Boltzmann velocities, axial positions uniform over λ/2. The drift
/// velocity defaults to 2.9 cm/s.
pub fn sample_ensemble(n: usize, r_a: f64, temperature: f64, seed: u64) -> Result<AtomEnsemble> {
    if n == 0 {
        return Err(invalid("n_atoms", "must be at least 1"));
    }
    require_positive("cloud_radius", r_a)?;
    require_non_negative("temperature", temperature)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let position =
        Normal::new(0.0, r_a / std::f64::consts::SQRT_2).map_err(|e| invalid("cloud_radius", e.to_string()))?;
    let sigma_v = thermal_velocity(temperature);
    let velocity = Normal::new(0.0, sigma_v).map_err(|e| invalid("temperature", e.to_string()))?;
    let period = RB87_D2_WAVELENGTH / 2.0;

    let atoms = (0..n)
        .map(|_| Atom {
            position: [position.sample(&mut rng), position.sample(&mut rng)],
            velocity: [velocity.sample(&mut rng), velocity.sample(&mut rng)],
            axial_position: rng.random::<f64>() * period,
            axial_velocity: velocity.sample(&mut rng),
        })
        .collect();

    Ok(AtomEnsemble {
        n_atoms: n,
        cloud_radius: r_a,
        temperature,
        drift_velocity: DEFAULT_DRIFT_VELOCITY,
        expansion_velocity: sigma_v,
        atoms,
    })
}

/// Ω_i = Ω_max · ½ · exp(−ρ²/r_c²).
pub fn coupling_weight(atom: &Atom, omega_max: f64, r_c: f64) -> f64 {
    0.5 * omega_max * (-atom.radius_sq() / (r_c * r_c)).exp()
}

/// Fractional change Ω_i(t+dt)/Ω_i(t) − 1 after ballistic flight for `dt`
/// with the atom's own velocity plus the bulk drift.
pub fn coupling_drift(atom: &Atom, bulk: [f64; 2], dt: f64, r_c: f64) -> f64 {
    let before = atom.radius_sq();
    let after = atom.radius_sq_after(bulk, dt);
    (-(after - before) / (r_c * r_c)).exp_m1()
}
