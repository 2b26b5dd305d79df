//! The evolving solution: both distribution functions, the field and time.

use crate::error::{Error, Result};
use crate::field::{Discretization, ElectricField, NodalField, Species};

/// How the external current enters Ampère's law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JextMode {
    /// `dE/dt = -J`.
    Zero,
    /// `dE/dt = -(J - J_0)`, keeping the mean field at zero.
    J0,
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub f_e: NodalField,
    pub f_i: NodalField,
    pub e: ElectricField,
    pub t: f64,
    pub step: u64,
}

impl State {
    pub fn new(disc: &Discretization, f_e: NodalField, f_i: NodalField, e: ElectricField) -> Result<Self> {
        disc.check_field(&f_e)?;
        disc.check_field(&f_i)?;
        disc.check_efield(&e)?;
        Ok(State {
            f_e,
            f_i,
            e,
            t: 0.0,
            step: 0,
        })
    }

    pub fn field(&self, s: Species) -> &NodalField {
        match s {
            Species::Electron => &self.f_e,
            Species::Ion => &self.f_i,
        }
    }

    pub fn field_mut(&mut self, s: Species) -> &mut NodalField {
        match s {
            Species::Electron => &mut self.f_e,
            Species::Ion => &mut self.f_i,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.f_e.is_finite() && self.f_i.is_finite() && self.e.is_finite()
    }
}

/// Physical constants the steppers need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    /// Ion charge-to-mass factor `m_e / m_i`.
    pub mu_i: f64,
    pub jext: JextMode,
}

impl Model {
    /// Charge-to-mass factor: `-1` for electrons, `mu_i` for ions.
    pub fn mu(&self, s: Species) -> f64 {
        match s {
            Species::Electron => -1.0,
            Species::Ion => self.mu_i,
        }
    }
}

/// Fails with a blow-up error if the state is non-finite or runaway.
pub fn check_blowup(state: &State) -> Result<()> {
    let bad = if !state.is_finite() {
        Some("non-finite values".to_string())
    } else {
        let m = state.f_e.max_abs().max(state.f_i.max_abs());
        (m > BLOWUP_THRESHOLD).then(|| format!("max |f| = {m:e} exceeds {BLOWUP_THRESHOLD:e}"))
    };
    match bad {
        Some(detail) => Err(Error::BlowUp {
            step: state.step,
            time: state.t,
            detail,
        }),
        None => Ok(()),
    }
}

/// Largest admissible `|f|` before a run is declared unstable.
pub const BLOWUP_THRESHOLD: f64 = 1e6;
