//! Dimensionless plasma parameters and initial conditions.
//!
//! Velocities are in units of the electron thermal speed, lengths in Debye
//! lengths and times in inverse electron plasma frequencies, so electrons
//! start as unit-variance Maxwellians and ions as Maxwellians of variance
//! `gamma^2 = T_i m_e / (T_e m_i)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::field::{Discretization, Species};
use crate::state::{JextMode, Model, State};

/// Identifier of the phase generator, recorded in run manifests.
pub const PRNG_ID: &str = "chacha20/rand_chacha-0.9/seed_from_u64";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlasmaParams {
    /// `m_i / m_e`.
    pub mass_ratio: f64,
    /// `T_e / T_i`.
    pub temp_ratio: f64,
    /// Electron drift velocity.
    pub v_de: f64,
    pub jext: JextMode,
}

impl PlasmaParams {
    pub fn new(mass_ratio: f64, temp_ratio: f64, v_de: f64, jext: JextMode) -> Result<Self> {
        if !(mass_ratio >= 1.0 && mass_ratio.is_finite()) {
            return Err(Error::Config(format!("mass_ratio must be >= 1, got {mass_ratio}")));
        }
        if !(temp_ratio > 0.0 && temp_ratio.is_finite()) {
            return Err(Error::Config(format!("temp_ratio must be positive, got {temp_ratio}")));
        }
        if !v_de.is_finite() {
            return Err(Error::Config("v_de must be finite".into()));
        }
        Ok(PlasmaParams {
            mass_ratio,
            temp_ratio,
            v_de,
            jext,
        })
    }

    /// `mu_i = m_e / m_i`.
    pub fn mu_i(&self) -> f64 {
        1.0 / self.mass_ratio
    }

    /// `gamma = sqrt(T_i m_e / (T_e m_i))`, the ion-to-electron thermal speed ratio.
    pub fn gamma(&self) -> f64 {
        (1.0 / (self.temp_ratio * self.mass_ratio)).sqrt()
    }

    /// Variance of the initial ion Maxwellian.
    pub fn ion_variance(&self) -> f64 {
        1.0 / (self.temp_ratio * self.mass_ratio)
    }

    pub fn model(&self) -> Model {
        Model {
            mu_i: self.mu_i(),
            jext: self.jext,
        }
    }
}

/// Normalized Maxwellian of the given mean and variance.
pub fn maxwellian(v: f64, mean: f64, variance: f64) -> f64 {
    let d = v - mean;
    (-0.5 * d * d / variance).exp() / (2.0 * PI * variance).sqrt()
}

/// Random-phase multi-mode perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpectrum {
    pub n_max: usize,
    pub e_tf: f64,
    /// Fundamental wave number `2 pi / L`.
    pub kappa0: f64,
    pub phases: Vec<f64>,
    pub seed: u64,
}

impl NoiseSpectrum {
    /// Draws `n_max` phases uniformly from `[0, 2 pi)`.
    pub fn new(n_max: usize, e_tf: f64, length: f64, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let phases = (0..n_max).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        NoiseSpectrum {
            n_max,
            e_tf,
            kappa0: 2.0 * PI / length,
            phases,
            seed,
        }
    }

    pub fn kappa(&self, n: usize) -> f64 {
        n as f64 * self.kappa0
    }

    /// `1 + sum E_tf kappa_n cos(kappa_n x + phi_n)`.
    pub fn density_factor(&self, x: f64) -> f64 {
        1.0 + self
            .phases
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let k = self.kappa(i + 1);
                self.e_tf * k * (k * x + p).cos()
            })
            .sum::<f64>()
    }

    /// `-sum E_tf sin(kappa_n x + phi_n)`.
    pub fn field(&self, x: f64) -> f64 {
        -self
            .phases
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let k = self.kappa(i + 1);
                self.e_tf * (k * x + p).sin()
            })
            .sum::<f64>()
    }
}

/// Perturbed electrons over uniform ions, with the field from Gauss's law.
///
/// `f_e = (1 + A cos(kappa x)) M_1(v)`, `f_i = M_{gamma^2}(v)` and
/// `E = -(A / kappa) sin(kappa x)`, the zero-mean solution of
/// `dE/dx = rho_i - rho_e`.
pub fn landau_ic(params: &PlasmaParams, amplitude: f64, kappa: f64, disc: &Discretization) -> Result<State> {
    let periods = kappa * disc.x.length() / (2.0 * PI);
    if !(kappa > 0.0) || (periods - periods.round()).abs() > 1e-9 || periods.round() < 1.0 {
        return Err(Error::Config(format!(
            "kappa = {kappa} does not fit a whole number of periods into L = {}",
            disc.x.length()
        )));
    }
    let x0 = disc.x.lo();
    let var_i = params.ion_variance();
    let f_e = disc.sample(Species::Electron, |x, v| {
        (1.0 + amplitude * (kappa * (x - x0)).cos()) * maxwellian(v, params.v_de, 1.0)
    });
    let f_i = disc.sample(Species::Ion, |_, v| maxwellian(v, 0.0, var_i));
    let e = disc.sample_efield(|x| -amplitude / kappa * (kappa * (x - x0)).sin());
    State::new(disc, f_e, f_i, e)
}

/// Drifting electrons with random-phase density noise over uniform ions.
pub fn cdiaw_ic(params: &PlasmaParams, noise: &NoiseSpectrum, disc: &Discretization) -> Result<State> {
    let resolvable = disc.n_xnodes() / 2;
    if noise.n_max > resolvable {
        return Err(Error::Config(format!(
            "n_max = {} exceeds the {resolvable} modes resolvable on the x-mesh",
            noise.n_max
        )));
    }
    if ((noise.kappa0 * disc.x.length()) - 2.0 * PI).abs() > 1e-9 {
        return Err(Error::Config("noise spectrum was built for a different domain length".into()));
    }
    let x0 = disc.x.lo();
    let var_i = params.ion_variance();
    let f_e = disc.sample(Species::Electron, |x, v| {
        noise.density_factor(x - x0) * maxwellian(v, params.v_de, 1.0)
    });
    let f_i = disc.sample(Species::Ion, |_, v| maxwellian(v, 0.0, var_i));
    let e = disc.sample_efield(|x| noise.field(x - x0));
    State::new(disc, f_e, f_i, e)
}
