//! Scalar and spectral diagnostics.

use crate::error::Result;
use crate::field::{
    electric_energy, entropy, phase_integrals, spatial_average, species_moments, x_average, Discretization,
    ElectricField, Species,
};
use crate::quadmesh::build_gauss_rule;
use crate::state::{Model, State};

/// Smallest `|J_0|` for which the resistivity is defined.
pub const RESISTIVITY_J0_MIN: f64 = 1e-14;

/// Lower clamp of [`log_fourier_mode`].
pub const LOG_FLOOR: f64 = -30.0;

/// Number of log Fourier modes stored in each record.
pub const N_LOG_MODES: usize = 4;

/// One time sample of all scalar diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagRecord {
    pub t: f64,
    pub step: u64,
    /// Step size that produced this sample (0 for the initial sample).
    pub dt: f64,
    pub n_e: f64,
    pub n_i: f64,
    pub ke_e: f64,
    /// Ion kinetic energy in electron-mass units, `KE_i / mu_i`.
    pub ke_i: f64,
    pub ee: f64,
    pub te: f64,
    pub l2_e: f64,
    pub l2_i: f64,
    pub p_e: f64,
    /// Ion momentum in electron-mass units, `p_i / mu_i`.
    pub p_i: f64,
    pub j0: f64,
    pub e0: f64,
    /// Anomalous resistivity; NaN when undefined.
    pub eta: f64,
    pub log_fm: [f64; N_LOG_MODES],
    pub leak_e: f64,
    pub leak_i: f64,
    pub entropy_e: f64,
    pub entropy_i: f64,
    /// Nodes with `f <= 0`, excluded from the entropy sums.
    pub entropy_skipped: usize,
    pub newton_max: usize,
    pub gs_iters: usize,
    pub gs_last_increment: f64,
}

impl DiagRecord {
    pub const COLUMNS: [(&'static str, &'static str); 28] = [
        ("t", "1/omega_pe"),
        ("step", "1"),
        ("dt", "1/omega_pe"),
        ("N_e", "n0 L"),
        ("N_i", "n0 L"),
        ("KE_e", "n0 T_e L"),
        ("KE_i", "n0 T_e L"),
        ("EE", "n0 T_e L"),
        ("TE", "n0 T_e L"),
        ("L2_e", "1"),
        ("L2_i", "1"),
        ("p_e", "n0 m_e V_Te L"),
        ("p_i", "n0 m_e V_Te L"),
        ("J0", "n0 e V_Te"),
        ("E0", "T_e/(e lambda_De)"),
        ("eta", "m_e omega_pe/(n0 e^2)"),
        ("logFM_1", "log10"),
        ("logFM_2", "log10"),
        ("logFM_3", "log10"),
        ("logFM_4", "log10"),
        ("leak_e", "1"),
        ("leak_i", "1"),
        ("entropy_e", "1"),
        ("entropy_i", "1"),
        ("entropy_skipped", "count"),
        ("newton_max", "count"),
        ("gs_iters", "count"),
        ("gs_last_increment", "1"),
    ];

    /// Column names in CSV order.
    pub fn header() -> Vec<&'static str> {
        Self::COLUMNS.iter().map(|c| c.0).collect()
    }

    /// Values in CSV order, matching [`DiagRecord::header`].
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.t,
            self.step as f64,
            self.dt,
            self.n_e,
            self.n_i,
            self.ke_e,
            self.ke_i,
            self.ee,
            self.te,
            self.l2_e,
            self.l2_i,
            self.p_e,
            self.p_i,
            self.j0,
            self.e0,
            self.eta,
        ];
        v.extend_from_slice(&self.log_fm);
        v.extend_from_slice(&[
            self.leak_e,
            self.leak_i,
            self.entropy_e,
            self.entropy_i,
            self.entropy_skipped as f64,
            self.newton_max as f64,
            self.gs_iters as f64,
            self.gs_last_increment,
        ]);
        v
    }
}

/// Evaluates `E_h` times `sin` and `cos` of multiples of `kappa` by a
/// cellwise Gauss rule finer than the nodal one.
#[derive(Debug, Clone)]
pub struct FourierProjector {
    points: Vec<f64>,
    weights: Vec<f64>,
    /// Per-point interpolation weights from the `q` nodes of its cell.
    interp: Vec<f64>,
    q: usize,
    x0: f64,
    length: f64,
}

impl FourierProjector {
    pub fn new(disc: &Discretization) -> Result<Self> {
        let q = disc.q();
        let rule = build_gauss_rule((q + 6).max(8))?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for c in 0..disc.nx() {
            let h = disc.x.width(c);
            for (&xi, &w) in rule.nodes().iter().zip(rule.weights()) {
                points.push(disc.x.map(c, xi));
                weights.push(0.5 * h * w);
            }
        }
        let interp: Vec<f64> = rule.nodes().iter().flat_map(|&xi| disc.basis.evaluate_all(xi)).collect();
        Ok(FourierProjector {
            points,
            weights,
            interp,
            q,
            x0: disc.x.lo(),
            length: disc.x.length(),
        })
    }

    fn values(&self, e: &ElectricField) -> Vec<f64> {
        let q = self.q;
        let per_cell = self.interp.len() / q;
        self.points
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let (c, p) = (i / per_cell, i % per_cell);
                let row = &self.interp[p * q..(p + 1) * q];
                row.iter().zip(&e.values[c * q..(c + 1) * q]).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// `(1/L) sqrt((int E sin)^2 + (int E cos)^2)` for wave number `kappa`.
    pub fn amplitude(&self, e: &ElectricField, kappa: f64) -> f64 {
        self.amplitude_of(&self.values(e), kappa)
    }

    fn amplitude_of(&self, vals: &[f64], kappa: f64) -> f64 {
        let (mut s, mut c) = (0.0, 0.0);
        for ((&x, &w), &v) in self.points.iter().zip(&self.weights).zip(vals) {
            let arg = kappa * (x - self.x0);
            s += w * v * arg.sin();
            c += w * v * arg.cos();
        }
        (s * s + c * c).sqrt() / self.length
    }

    /// `log10` amplitudes of modes `n = 1..=n_max` with `kappa_n = n kappa0`.
    pub fn log_modes(&self, e: &ElectricField, kappa0: f64, n_max: usize) -> Vec<f64> {
        let vals = self.values(e);
        (1..=n_max)
            .map(|n| clamp_log(self.amplitude_of(&vals, n as f64 * kappa0)))
            .collect()
    }
}

fn clamp_log(a: f64) -> f64 {
    if a > 0.0 {
        a.log10().max(LOG_FLOOR)
    } else {
        LOG_FLOOR
    }
}

/// `log10((1/L) sqrt((int E sin(n kappa x))^2 + (int E cos(n kappa x))^2))`,
/// clamped below at [`LOG_FLOOR`].
pub fn log_fourier_mode(disc: &Discretization, e: &ElectricField, n: usize, kappa: f64) -> Result<f64> {
    let proj = FourierProjector::new(disc)?;
    Ok(clamp_log(proj.amplitude(e, n as f64 * kappa)))
}

/// Mode amplitudes `E_kappa = 10^logFM_n` for `n = 1..=n_max`, as `(kappa_n, E_kappa)`.
pub fn field_spectrum(disc: &Discretization, e: &ElectricField, n_max: usize) -> Result<Vec<(f64, f64)>> {
    let kappa0 = 2.0 * std::f64::consts::PI / disc.x.length();
    let proj = FourierProjector::new(disc)?;
    Ok(proj
        .log_modes(e, kappa0, n_max)
        .into_iter()
        .enumerate()
        .map(|(i, lf)| ((i + 1) as f64 * kappa0, 10f64.powf(lf)))
        .collect())
}

/// Backward-difference resistivity `-(J0_now - J0_prev) / (dt J0_now)`.
///
/// Returns `None` when `|J0_now|` is below [`RESISTIVITY_J0_MIN`] or `dt` is not positive.
pub fn resistivity(j0_prev: f64, j0_now: f64, dt: f64) -> Option<f64> {
    if j0_now.abs() < RESISTIVITY_J0_MIN || !(dt > 0.0) {
        return None;
    }
    Some(-(j0_now - j0_prev) / (dt * j0_now))
}

/// Resistivity at every sample after the first of a `(t, J_0)` history.
pub fn resistivity_series(history: &[(f64, f64)]) -> Vec<(f64, f64)> {
    history
        .windows(2)
        .map(|w| (w[1].0, resistivity(w[0].1, w[1].1, w[1].0 - w[0].0).unwrap_or(f64::NAN)))
        .collect()
}

/// Computes diagnostic records; holds the Fourier projector across samples.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    proj: FourierProjector,
    kappa0: f64,
    model: Model,
    prev_j0: Option<(f64, f64)>,
    entropy_stride: u64,
}

impl Diagnostics {
    pub fn new(disc: &Discretization, model: Model) -> Result<Self> {
        Ok(Diagnostics {
            proj: FourierProjector::new(disc)?,
            kappa0: 2.0 * std::f64::consts::PI / disc.x.length(),
            model,
            prev_j0: None,
            entropy_stride: 1,
        })
    }

    /// Evaluates the entropy only on steps divisible by `stride` (never if 0);
    /// other records carry NaN.
    pub fn with_entropy_stride(mut self, stride: usize) -> Self {
        self.entropy_stride = stride as u64;
        self
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    pub fn projector(&self) -> &FourierProjector {
        &self.proj
    }

    /// Samples `state`; `eta` uses the previous call's `(t, J_0)`.
    pub fn record(&mut self, disc: &Discretization, state: &State, dt: f64) -> Result<DiagRecord> {
        let (_, j_e) = species_moments(disc, &state.f_e)?;
        let (_, j_i) = species_moments(disc, &state.f_i)?;
        let j: Vec<f64> = j_i.iter().zip(&j_e).map(|(a, b)| a - b).collect();
        let j0 = x_average(disc, &j);
        let eta = match self.prev_j0 {
            Some((t_prev, j_prev)) => resistivity(j_prev, j0, state.t - t_prev).unwrap_or(f64::NAN),
            None => f64::NAN,
        };
        self.prev_j0 = Some((state.t, j0));
        let mu_i = self.model.mu_i;
        let pe = phase_integrals(disc, &state.f_e);
        let pi = phase_integrals(disc, &state.f_i);
        let ke_e = pe.kinetic;
        let ke_i = pi.kinetic / mu_i;
        let ee = electric_energy(disc, &state.e);
        let modes = self.proj.log_modes(&state.e, self.kappa0, N_LOG_MODES);
        let ((s_e, k_e), (s_i, k_i)) = if self.entropy_stride > 0 && state.step % self.entropy_stride == 0 {
            (entropy(disc, &state.f_e), entropy(disc, &state.f_i))
        } else {
            ((f64::NAN, 0), (f64::NAN, 0))
        };
        Ok(DiagRecord {
            t: state.t,
            step: state.step,
            dt,
            n_e: pe.number,
            n_i: pi.number,
            ke_e,
            ke_i,
            ee,
            te: ke_e + ke_i + ee,
            l2_e: pe.l2,
            l2_i: pi.l2,
            p_e: pe.momentum,
            p_i: pi.momentum / mu_i,
            j0,
            e0: spatial_average(disc, &state.e),
            eta,
            log_fm: [modes[0], modes[1], modes[2], modes[3]],
            leak_e: state.f_e.boundary_max(),
            leak_i: state.f_i.boundary_max(),
            entropy_e: s_e,
            entropy_i: s_i,
            entropy_skipped: k_e + k_i,
            newton_max: 0,
            gs_iters: 0,
            gs_last_increment: 0.0,
        })
    }
}

/// Spatially averaged distribution of a species on its v-node grid.
pub fn spatially_averaged_f(disc: &Discretization, state: &State, s: Species) -> Result<Vec<f64>> {
    crate::field::spatially_averaged_f(disc, state.field(s))
}
