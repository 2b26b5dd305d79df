//! The operator-split implicit scheme.
//!
//! Each step is the symmetric composition `a(dt/2) b(dt) a(dt/2)`:
//! sub-step `a` is the implicit midpoint rule for `v df/dx = 0`, solved
//! independently on every velocity-node column; sub-step `b` is the implicit
//! midpoint rule for the coupled system `df/dt + mu E df/dv = 0`,
//! `dE/dt = -J (+ J_0)`, solved node by node in x.
//!
//! All one-dimensional midpoint solves share one kernel. Per cell, the upwind
//! residual is `(2a/h)(M f + c t)` with `t` the upwind neighbour's outgoing
//! trace, so the midpoint update is
//!
//! ```text
//! g = C f - z (t(f_up) + t(g_up)),   C = A^-1 (I/dt - (a/h) M),
//! z = A^-1 (a/h) c,                  A = I/dt + (a/h) M,
//! ```
//!
//! and the outgoing traces obey a scalar recurrence along the sweep
//! direction. Periodic columns close the recurrence with one division.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{compute_moments, Discretization, ElectricField, Species};
use crate::fluxops::{AdvectionOperator1D, SweepTables};
use crate::state::{check_blowup, JextMode, Model, State};

/// Iteration controls for the nonlinear and Gauss–Seidel solves.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Gauss–Seidel stopping tolerance on the max-norm increment of `f`.
    pub gs_tol: f64,
    /// Residual tolerance of the per-node nonlinear field solve.
    pub nl_tol: f64,
    pub max_outer: usize,
    pub max_newton: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            gs_tol: 1e-11,
            nl_tol: 1e-12,
            max_outer: 100,
            max_newton: 50,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gs_tol", self.gs_tol), ("nl_tol", self.nl_tol)] {
            if !(v > 0.0 && v < 1e-3) {
                return Err(Error::Config(format!("{name} must lie in (0, 1e-3), got {v}")));
            }
        }
        if self.max_outer == 0 || self.max_newton == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Factorized midpoint update of one cell for a fixed speed, width and step.
#[derive(Debug, Clone, PartialEq)]
pub struct LineOperator {
    q: usize,
    c: Vec<f64>,
    z: Vec<f64>,
    trace: Vec<f64>,
    /// `trace^T C`.
    trace_c: Vec<f64>,
    /// `trace . z`.
    tau: f64,
    upwind_is_left: bool,
}

impl LineOperator {
    pub fn new(ops: &AdvectionOperator1D, speed: f64, width: f64, dt: f64) -> Result<Self> {
        let tab: &SweepTables = ops.for_speed(speed);
        let q = tab.q;
        let k = speed / width;
        let a = DMatrix::from_fn(q, q, |i, p| if i == p { 1.0 / dt } else { 0.0 } + k * tab.m[i * q + p]);
        let b = DMatrix::from_fn(q, q, |i, p| if i == p { 1.0 / dt } else { 0.0 } - k * tab.m[i * q + p]);
        let a_inv = a.try_inverse().ok_or_else(|| {
            Error::Numerical(format!("singular midpoint operator for speed {speed}, dt {dt}"))
        })?;
        let cm = &a_inv * b;
        let z = &a_inv * nalgebra::DVector::from_iterator(q, tab.c.iter().map(|v| k * v));
        let c: Vec<f64> = (0..q * q).map(|ip| cm[(ip / q, ip % q)]).collect();
        let z: Vec<f64> = z.iter().copied().collect();
        let trace_c = (0..q)
            .map(|p| (0..q).map(|i| tab.trace[i] * c[i * q + p]).sum())
            .collect();
        let tau = tab.trace.iter().zip(&z).map(|(a, b)| a * b).sum();
        Ok(LineOperator {
            q,
            c,
            z,
            trace: tab.trace.clone(),
            trace_c,
            tau,
            upwind_is_left: speed >= 0.0,
        })
    }

    /// Midpoint solve along a line of cells stored contiguously in `f`.
    ///
    /// With `periodic` false the inflow state is zero.
    pub fn solve(&self, f: &[f64], periodic: bool, g: &mut [f64]) -> Result<()> {
        let q = self.q;
        let n = f.len() / q;
        let order = |i: usize| if self.upwind_is_left { i } else { n - 1 - i };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let out_trace = |cell: usize| dot(&self.trace, &f[cell * q..(cell + 1) * q]);
        // Outgoing trace of g entering the first cell of the sweep.
        let (mut s_prev, mut t_prev) = if periodic {
            let last = order(n - 1);
            let mut s = 0.0;
            let mut t_up = out_trace(last);
            for i in 0..n {
                let cell = order(i);
                let beta = dot(&self.trace_c, &f[cell * q..(cell + 1) * q]) - self.tau * t_up;
                s = beta - self.tau * s;
                t_up = out_trace(cell);
            }
            let denom = 1.0 - (-self.tau).powi(n as i32);
            if denom.abs() < 1e-14 {
                return Err(Error::Numerical(format!(
                    "periodic midpoint closure is singular (tau = {})",
                    self.tau
                )));
            }
            (s / denom, out_trace(last))
        } else {
            (0.0, 0.0)
        };
        for i in 0..n {
            let cell = order(i);
            let fc = &f[cell * q..(cell + 1) * q];
            let gc = &mut g[cell * q..(cell + 1) * q];
            let w = t_prev + s_prev;
            for a in 0..q {
                gc[a] = dot(&self.c[a * q..(a + 1) * q], fc) - self.z[a] * w;
            }
            s_prev = dot(&self.trace, gc);
            t_prev = dot(&self.trace, fc);
        }
        Ok(())
    }
}

/// Factorized x-direction operators for one step size.
///
/// Entries are indexed by species and velocity node; the cache is rebuilt
/// whenever a different step size is requested.
#[derive(Debug, Clone, Default)]
pub struct LinearSolveCache {
    dt: Option<f64>,
    ops: [Vec<LineOperator>; 2],
}

impl LinearSolveCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, disc: &Discretization, adv: &AdvectionOperator1D, dt: f64) -> Result<()> {
        if self.dt == Some(dt) {
            return Ok(());
        }
        let hx = disc.x.width(0);
        for s in Species::ALL {
            self.ops[s.index()] = disc
                .v_nodes(s)
                .iter()
                .map(|&v| LineOperator::new(adv, v, hx, dt))
                .collect::<Result<_>>()?;
        }
        self.dt = Some(dt);
        Ok(())
    }

    pub fn operator(&self, s: Species, j: usize, m: usize, q: usize) -> Option<&LineOperator> {
        self.ops[s.index()].get(j * q + m)
    }

    pub fn step_size(&self) -> Option<f64> {
        self.dt
    }
}

/// Iteration counts of the last implicit step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    /// Largest Newton iteration count over all x nodes.
    pub newton_max: usize,
    pub newton_total: usize,
    /// Largest final `|Phi|` over all x nodes.
    pub newton_residual: f64,
    /// Max-norm increments of successive Gauss–Seidel sweeps.
    pub gs_increments: Vec<f64>,
}

impl SolveReport {
    pub fn gs_iterations(&self) -> usize {
        self.gs_increments.len()
    }

    fn merge(&mut self, other: SolveReport) {
        self.newton_max = self.newton_max.max(other.newton_max);
        self.newton_total += other.newton_total;
        self.newton_residual = self.newton_residual.max(other.newton_residual);
        self.gs_increments.extend(other.gs_increments);
    }
}

/// Implicit stepper with its reusable operator cache.
#[derive(Debug, Clone)]
pub struct ImplicitStepper {
    adv: AdvectionOperator1D,
    cache: LinearSolveCache,
    pub settings: SolverSettings,
    pub last_report: SolveReport,
}

impl ImplicitStepper {
    pub fn new(disc: &Discretization, settings: SolverSettings) -> Result<Self> {
        settings.validate()?;
        if !disc.x.is_uniform() || !disc.v.iter().all(|m| m.is_uniform()) {
            return Err(Error::Config("the implicit scheme requires uniform meshes".into()));
        }
        Ok(ImplicitStepper {
            adv: AdvectionOperator1D::new(&disc.basis),
            cache: LinearSolveCache::new(),
            settings,
            last_report: SolveReport::default(),
        })
    }

    pub fn cache(&self) -> &LinearSolveCache {
        &self.cache
    }

    /// Midpoint x-advection over `dt` on every velocity-node column.
    pub fn scheme_a(&mut self, disc: &Discretization, state: &State, dt: f64) -> Result<State> {
        self.cache.prepare(disc, &self.adv, dt)?;
        let q = disc.q();
        let nx = disc.nx();
        let qq = q * q;
        let mut next = state.clone();
        for s in Species::ALL {
            let f = state.field(s);
            let nv = f.nv();
            let col = nv * qq;
            let cache = &self.cache;
            let lines: Vec<Vec<f64>> = (0..nv * q)
                .into_par_iter()
                .map(|jm| {
                    let (j, m) = (jm / q, jm % q);
                    let mut buf = vec![0.0; nx * q];
                    for r in 0..nx {
                        for l in 0..q {
                            buf[r * q + l] = f.values[r * col + j * qq + l * q + m];
                        }
                    }
                    let mut out = vec![0.0; nx * q];
                    let op = &cache.ops[s.index()][jm];
                    op.solve(&buf, true, &mut out).map(|_| out)
                })
                .collect::<Result<_>>()?;
            let g = next.field_mut(s);
            for (jm, line) in lines.iter().enumerate() {
                let (j, m) = (jm / q, jm % q);
                for r in 0..nx {
                    for l in 0..q {
                        g.values[r * col + j * qq + l * q + m] = line[r * q + l];
                    }
                }
            }
        }
        Ok(next)
    }

    /// Midpoint v-advection with frozen nodal field `e_bar`, starting from `src`.
    fn v_solve(&self, disc: &Discretization, src: &State, e_bar: &[f64], dt: f64, mu: [f64; 2], dst: &mut State) -> Result<()> {
        let q = disc.q();
        let qq = q * q;
        for s in Species::ALL {
            let f = src.field(s);
            let nv = f.nv();
            let col = nv * qq;
            let hv = disc.v_mesh(s).width(0);
            let adv = &self.adv;
            let mu_s = mu[s.index()];
            dst.field_mut(s)
                .values
                .par_chunks_mut(col)
                .enumerate()
                .try_for_each(|(r, out)| -> Result<()> {
                    let mut row = vec![0.0; nv * q];
                    let mut g = vec![0.0; nv * q];
                    for l in 0..q {
                        gather_row(&f.values[r * col..(r + 1) * col], l, q, &mut row);
                        let op = LineOperator::new(adv, mu_s * e_bar[r * q + l], hv, dt)?;
                        op.solve(&row, false, &mut g)?;
                        scatter_row(&g, l, q, out);
                    }
                    Ok(())
                })?;
        }
        Ok(())
    }

    /// Coupled v-advection and Ampère update without external current,
    /// solved as one scalar root problem per x node.
    pub fn scheme_b_case1(&mut self, disc: &Discretization, state: &State, dt: f64, model: &Model) -> Result<State> {
        let q = disc.q();
        let qq = q * q;
        let nx = disc.nx();
        let mom = compute_moments(disc, &state.f_e, &state.f_i)?;
        let settings = self.settings;
        let adv = &self.adv;
        let species: Vec<(f64, f64, &[f64], &[f64])> = Species::ALL
            .iter()
            .map(|&s| (disc.v_mesh(s).width(0), model.mu(s), disc.v_nodes(s), disc.v_weights(s)))
            .collect();
        let step = state.step;
        let results: Vec<NodeSolution> = (0..nx * q)
            .into_par_iter()
            .map(|node| -> Result<NodeSolution> {
                let (r, l) = (node / q, node % q);
                let rows: Vec<Vec<f64>> = Species::ALL
                    .iter()
                    .map(|&s| {
                        let f = state.field(s);
                        let col = f.nv() * qq;
                        let mut row = vec![0.0; f.nv() * q];
                        gather_row(&f.values[r * col..(r + 1) * col], l, q, &mut row);
                        row
                    })
                    .collect();
                let e_n = state.e.values[node];
                let j_n = mom.j[node];
                let mut g: Vec<Vec<f64>> = rows.iter().map(|r| vec![0.0; r.len()]).collect();
                let mut phi = |e_star: f64| -> Result<f64> {
                    let e_bar = 0.5 * (e_n + e_star);
                    let mut current = 0.0;
                    for (si, &(h, mu, vs, vw)) in species.iter().enumerate() {
                        LineOperator::new(adv, mu * e_bar, h, dt)?.solve(&rows[si], false, &mut g[si])?;
                        let js: f64 = g[si].iter().zip(vs.iter().zip(vw)).map(|(f, (v, w))| f * v * w).sum();
                        current += if si == 0 { -js } else { js };
                    }
                    Ok(e_star - e_n + 0.5 * dt * (j_n + current))
                };
                let (root, iters, residual) =
                    scalar_root(&mut phi, e_n - dt * j_n, settings).map_err(|detail| Error::SolverFailure {
                        stage: "field solve",
                        step,
                        detail: format!("x node {node}: {detail}"),
                    })?;
                // Leave `g` holding the solution at the accepted root.
                phi(root)?;
                Ok(NodeSolution {
                    rows: g,
                    e: root,
                    iters,
                    residual,
                })
            })
            .collect::<Result<_>>()?;
        let mut next = state.clone();
        let mut report = SolveReport::default();
        for (node, sol) in results.into_iter().enumerate() {
            let (r, l) = (node / q, node % q);
            for s in Species::ALL {
                let f = next.field_mut(s);
                let col = f.nv() * qq;
                scatter_row(&sol.rows[s.index()], l, q, &mut f.values[r * col..(r + 1) * col]);
            }
            next.e.values[node] = sol.e;
            report.newton_max = report.newton_max.max(sol.iters);
            report.newton_total += sol.iters;
            report.newton_residual = report.newton_residual.max(sol.residual);
        }
        self.last_report.merge(report);
        Ok(next)
    }

    /// Coupled v-advection and Ampère update with `J_ext = J_0`, solved by
    /// Gauss–Seidel alternation between the field and the kinetic solves.
    pub fn scheme_b_case2(&mut self, disc: &Discretization, state: &State, dt: f64, model: &Model) -> Result<State> {
        let e0 = crate::field::spatial_average(disc, &state.e);
        if e0.abs() > 1e-10 {
            log::warn!("mean electric field {e0:e} is not zero at the start of a J_0-driven step");
        }
        let mom_n = compute_moments(disc, &state.f_e, &state.f_i)?;
        let mu = [model.mu(Species::Electron), model.mu(Species::Ion)];
        let mut iterate = state.clone();
        let mut next = state.clone();
        let mut report = SolveReport::default();
        for _ in 0..self.settings.max_outer {
            let mom_k = compute_moments(disc, &iterate.f_e, &iterate.f_i)?;
            let shift = 0.5 * dt * (mom_n.j0 + mom_k.j0);
            let e_new: Vec<f64> = state
                .e
                .values
                .iter()
                .zip(mom_n.j.iter().zip(&mom_k.j))
                .map(|(e, (jn, jk))| e - 0.5 * dt * (jn + jk) + shift)
                .collect();
            let e_bar: Vec<f64> = state.e.values.iter().zip(&e_new).map(|(a, b)| 0.5 * (a + b)).collect();
            self.v_solve(disc, state, &e_bar, dt, mu, &mut next)?;
            next.e = ElectricField::from_values(disc.nx(), disc.q(), e_new)?;
            let inc = max_diff(&next, &iterate);
            report.gs_increments.push(inc);
            std::mem::swap(&mut iterate, &mut next);
            if !inc.is_finite() {
                break;
            }
            if inc < self.settings.gs_tol {
                self.last_report.merge(report);
                return Ok(iterate);
            }
        }
        Err(Error::SolverFailure {
            stage: "Gauss-Seidel",
            step: state.step,
            detail: format!(
                "no convergence in {} sweeps, last increment {:e}",
                self.settings.max_outer,
                report.gs_increments.last().copied().unwrap_or(f64::NAN)
            ),
        })
    }

    /// One full step `a(dt/2) b(dt) a(dt/2)`.
    pub fn step(&mut self, disc: &Discretization, state: &State, dt: f64, model: &Model) -> Result<State> {
        if dt <= 0.0 {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        self.last_report = SolveReport::default();
        let a1 = self.scheme_a(disc, state, 0.5 * dt)?;
        let b = match model.jext {
            JextMode::Zero => self.scheme_b_case1(disc, &a1, dt, model)?,
            JextMode::J0 => self.scheme_b_case2(disc, &a1, dt, model)?,
        };
        let mut next = self.scheme_a(disc, &b, 0.5 * dt)?;
        next.t = state.t + dt;
        next.step = state.step + 1;
        check_blowup(&next)?;
        Ok(next)
    }
}

struct NodeSolution {
    rows: Vec<Vec<f64>>,
    e: f64,
    iters: usize,
    residual: f64,
}

fn gather_row(col: &[f64], l: usize, q: usize, row: &mut [f64]) {
    let qq = q * q;
    for (j, chunk) in row.chunks_mut(q).enumerate() {
        chunk.copy_from_slice(&col[j * qq + l * q..j * qq + (l + 1) * q]);
    }
}

fn scatter_row(row: &[f64], l: usize, q: usize, col: &mut [f64]) {
    let qq = q * q;
    for (j, chunk) in row.chunks(q).enumerate() {
        col[j * qq + l * q..j * qq + (l + 1) * q].copy_from_slice(chunk);
    }
}

fn max_diff(a: &State, b: &State) -> f64 {
    a.f_e
        .values
        .iter()
        .zip(&b.f_e.values)
        .chain(a.f_i.values.iter().zip(&b.f_i.values))
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Safeguarded Newton iteration for a scalar root of `phi`.
///
/// The first slope is a one-sided difference and later slopes are secants.
/// Once a sign change has been seen, steps leaving the bracket fall back
/// to bisection. Returns `(root, iterations, |phi(root)|)`.
fn scalar_root(
    phi: &mut dyn FnMut(f64) -> Result<f64>,
    guess: f64,
    settings: SolverSettings,
) -> std::result::Result<(f64, usize, f64), String> {
    let mut eval = |x: f64| phi(x).map_err(|e| e.to_string());
    let mut x = guess;
    let mut fx = eval(x)?;
    if fx.abs() < settings.nl_tol {
        return Ok((x, 0, fx.abs()));
    }
    let h = 1e-7 * x.abs().max(1e-3);
    let fh = eval(x + h)?;
    let mut slope = (fh - fx) / h;
    let ordered = |a: f64, fa: f64, b: f64, fb: f64| if a < b { (a, fa, b, fb) } else { (b, fb, a, fa) };
    let mut bracket = (fx.signum() != fh.signum()).then(|| ordered(x, fx, x + h, fh));
    for it in 1..=settings.max_newton {
        let mut cand = x - fx / slope;
        match bracket {
            Some((a, _, b, _)) if !(cand > a && cand < b) => cand = 0.5 * (a + b),
            None if !cand.is_finite() => return Err(format!("degenerate slope at E = {x:e}")),
            _ => {}
        }
        let fc = eval(cand)?;
        if fc.abs() < settings.nl_tol {
            return Ok((cand, it, fc.abs()));
        }
        bracket = match bracket {
            Some((a, fa, b, fb)) => Some(if fa.signum() == fc.signum() { (cand, fc, b, fb) } else { (a, fa, cand, fc) }),
            None => (fc.signum() != fx.signum()).then(|| ordered(x, fx, cand, fc)),
        };
        if cand != x {
            slope = (fc - fx) / (cand - x);
        }
        x = cand;
        fx = fc;
    }
    Err(format!(
        "no convergence in {} iterations, residual {:e}",
        settings.max_newton,
        fx.abs()
    ))
}

/// Advances `state` by one implicit step.
pub fn scheme2_step(
    disc: &Discretization,
    state: &State,
    dt: f64,
    model: &Model,
    settings: SolverSettings,
) -> Result<State> {
    ImplicitStepper::new(disc, settings)?.step(disc, state, dt, model)
}

/// Midpoint x-advection sub-step on its own.
pub fn scheme_a(disc: &Discretization, state: &State, dt: f64) -> Result<State> {
    ImplicitStepper::new(disc, SolverSettings::default())?.scheme_a(disc, state, dt)
}

/// Field-coupled v-advection sub-step without external current.
pub fn scheme_b_case1(disc: &Discretization, state: &State, dt: f64, model: &Model, settings: SolverSettings) -> Result<State> {
    ImplicitStepper::new(disc, settings)?.scheme_b_case1(disc, state, dt, model)
}

/// Field-coupled v-advection sub-step with `J_ext = J_0`.
pub fn scheme_b_case2(disc: &Discretization, state: &State, dt: f64, model: &Model, settings: SolverSettings) -> Result<State> {
    ImplicitStepper::new(disc, settings)?.scheme_b_case2(disc, state, dt, model)
}
