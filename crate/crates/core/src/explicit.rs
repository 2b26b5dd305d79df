//! The explicit two-stage scheme and CFL time-step control.

use crate::error::Result;
use crate::field::{compute_moments, Discretization, ElectricField, Species};
use crate::fluxops::{accumulate_residual, AdvectionOperator1D};
use crate::state::{check_blowup, JextMode, Model, State};

/// Stable step size `min_alpha CFL / (V_c N_x / L + |mu| E_max N_v / V_c)`.
///
/// `V_c` is taken as the larger magnitude of the velocity mesh bounds.
pub fn cfl_dt(disc: &Discretization, state: &State, model: &Model, cfl: f64) -> f64 {
    let e_max = state.e.max_abs();
    Species::ALL
        .iter()
        .map(|&s| {
            let vm = disc.v_mesh(s);
            let vc = vm.lo().abs().max(vm.hi().abs());
            let rate = vc * disc.nx() as f64 / disc.x.length()
                + model.mu(s).abs() * e_max * disc.nv(s) as f64 / vc;
            cfl / rate
        })
        .fold(f64::INFINITY, f64::min)
}

/// Stateless stepper holding the precomputed flux tables.
#[derive(Debug, Clone)]
pub struct ExplicitStepper {
    ops: AdvectionOperator1D,
}

impl ExplicitStepper {
    pub fn new(disc: &Discretization) -> Self {
        ExplicitStepper {
            ops: AdvectionOperator1D::new(&disc.basis),
        }
    }

    /// One step: predictor half step, Ampère update, corrector full step.
    pub fn step(&self, disc: &Discretization, state: &State, dt: f64, model: &Model) -> Result<State> {
        let mut half = state.clone();
        for s in Species::ALL {
            accumulate_residual(
                disc,
                &self.ops,
                state.field(s),
                true,
                Some((&state.e, model.mu(s))),
                -0.5 * dt,
                half.field_mut(s),
            )?;
        }
        let mom = compute_moments(disc, &half.f_e, &half.f_i)?;
        let shift = match model.jext {
            JextMode::Zero => 0.0,
            JextMode::J0 => mom.j0,
        };
        let e_new: Vec<f64> = state
            .e
            .values
            .iter()
            .zip(&mom.j)
            .map(|(e, j)| e - dt * (j - shift))
            .collect();
        let e_bar = ElectricField::from_values(
            disc.nx(),
            disc.q(),
            state.e.values.iter().zip(&e_new).map(|(a, b)| 0.5 * (a + b)).collect(),
        )?;
        let mut next = state.clone();
        for s in Species::ALL {
            accumulate_residual(
                disc,
                &self.ops,
                half.field(s),
                true,
                Some((&e_bar, model.mu(s))),
                -dt,
                next.field_mut(s),
            )?;
        }
        next.e.values = e_new;
        next.t += dt;
        next.step += 1;
        check_blowup(&next)?;
        Ok(next)
    }
}

/// Advances `state` by one explicit step of size `dt`.
pub fn scheme1_step(disc: &Discretization, state: &State, dt: f64, model: &Model) -> Result<State> {
    ExplicitStepper::new(disc).step(disc, state, dt, model)
}
