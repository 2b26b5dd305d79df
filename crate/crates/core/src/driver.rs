//! Time loop, run artifacts and self-convergence studies.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{InitialCondition, RunConfig, Scheme};
use crate::diagnostics::{field_spectrum, DiagRecord, Diagnostics};
use crate::error::{Error, Result};
use crate::explicit::{cfl_dt, ExplicitStepper};
use crate::field::{l2_norm, Discretization, ElectricField, NodalField};
use crate::implicit::ImplicitStepper;
use crate::io::{self, FileEntry};
use crate::physics::{cdiaw_ic, landau_ic, NoiseSpectrum, PlasmaParams, PRNG_ID};
use crate::state::{Model, State};

/// Relative slack used when comparing times against output targets.
const TIME_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum Stepper {
    Explicit(ExplicitStepper),
    Implicit(Box<ImplicitStepper>),
}

impl Stepper {
    pub fn new(scheme: Scheme, disc: &Discretization, config: &RunConfig) -> Result<Self> {
        Ok(match scheme {
            Scheme::Explicit => Stepper::Explicit(ExplicitStepper::new(disc)),
            Scheme::Implicit => Stepper::Implicit(Box::new(ImplicitStepper::new(disc, config.solver)?)),
        })
    }

    pub fn step(&mut self, disc: &Discretization, state: &State, dt: f64, model: &Model) -> Result<State> {
        match self {
            Stepper::Explicit(s) => s.step(disc, state, dt, model),
            Stepper::Implicit(s) => s.step(disc, state, dt, model),
        }
    }
}

/// A configured simulation and its current state.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: RunConfig,
    pub disc: Discretization,
    pub params: PlasmaParams,
    pub model: Model,
    pub state: State,
    pub noise: Option<NoiseSpectrum>,
    pub stepper: Stepper,
}

impl Simulation {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let disc = config.discretization()?;
        let params = config.plasma();
        let (state, noise) = match &config.initial_snapshot {
            Some(path) => (io::read_snapshot(path, &disc)?, None),
            None => initial_state(config, &params, &disc)?,
        };
        Ok(Simulation {
            stepper: Stepper::new(config.scheme, &disc, config)?,
            model: params.model(),
            config: config.clone(),
            disc,
            params,
            state,
            noise,
        })
    }

    /// Step size from the fixed `dt` if configured, otherwise the CFL rule.
    pub fn proposed_dt(&self) -> f64 {
        match self.config.dt {
            Some(dt) => dt,
            None => cfl_dt(&self.disc, &self.state, &self.model, self.config.cfl),
        }
    }

    pub fn advance(&mut self, dt: f64) -> Result<()> {
        self.state = self.stepper.step(&self.disc, &self.state, dt, &self.model)?;
        Ok(())
    }

    /// Fills solver counters of the last step into a record.
    pub fn annotate(&self, rec: &mut DiagRecord) {
        if let Stepper::Implicit(s) = &self.stepper {
            let r = &s.last_report;
            rec.newton_max = r.newton_max;
            rec.gs_iters = r.gs_iterations();
            rec.gs_last_increment = r.gs_increments.last().copied().unwrap_or(0.0);
        }
    }
}

/// Builds the analytic initial condition of a configuration.
pub fn initial_state(
    config: &RunConfig,
    params: &PlasmaParams,
    disc: &Discretization,
) -> Result<(State, Option<NoiseSpectrum>)> {
    match config.physics.initial {
        InitialCondition::Landau { amplitude, kappa } => Ok((landau_ic(params, amplitude, kappa, disc)?, None)),
        InitialCondition::Cdiaw { e_tf, n_max } => {
            let noise = NoiseSpectrum::new(n_max, e_tf, disc.x.length(), config.seed);
            Ok((cdiaw_ic(params, &noise, disc)?, Some(noise)))
        }
    }
}

/// Conservation ledger of a finished run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub t_final: f64,
    pub max_rel_n_e: f64,
    pub max_rel_n_i: f64,
    pub max_rel_te: f64,
    /// Largest per-step relative increase of `||f_e||` or `||f_i||`; negative if all decrease.
    pub max_l2_increase: f64,
    pub max_abs_e0: f64,
    pub wall_seconds: f64,
}

impl RunSummary {
    fn update(&mut self, first: &DiagRecord, prev: &DiagRecord, rec: &DiagRecord) {
        let rel = |a: f64, b: f64| if b != 0.0 { (a / b - 1.0).abs() } else { a.abs() };
        self.steps = rec.step;
        self.t_final = rec.t;
        self.max_rel_n_e = self.max_rel_n_e.max(rel(rec.n_e, first.n_e));
        self.max_rel_n_i = self.max_rel_n_i.max(rel(rec.n_i, first.n_i));
        self.max_rel_te = self.max_rel_te.max(rel(rec.te, first.te));
        let inc = ((rec.l2_e - prev.l2_e) / prev.l2_e).max((rec.l2_i - prev.l2_i) / prev.l2_i);
        self.max_l2_increase = self.max_l2_increase.max(inc);
        self.max_abs_e0 = self.max_abs_e0.max(rec.e0.abs());
    }
}

/// Drives a simulation to `t_end`, calling `observe` on every record.
///
/// Steps are clipped so that every time in `stops` (and `t_end`) is hit
/// exactly. `observe` also receives the state the record was taken from.
pub fn run_loop(
    sim: &mut Simulation,
    stops: &[f64],
    mut observe: impl FnMut(&Simulation, &DiagRecord) -> Result<()>,
) -> Result<RunSummary> {
    let start = Instant::now();
    let t_end = sim.config.t_end;
    let mut diag = Diagnostics::new(&sim.disc, sim.model)?.with_entropy_stride(sim.config.output.entropy_stride);
    let first = diag.record(&sim.disc, &sim.state, 0.0)?;
    observe(sim, &first)?;
    let mut summary = RunSummary {
        t_final: first.t,
        max_abs_e0: first.e0.abs(),
        max_l2_increase: f64::NEG_INFINITY,
        ..RunSummary::default()
    };
    let mut prev = first.clone();
    let mut stops: Vec<f64> = stops.iter().copied().filter(|&s| s < t_end).chain([t_end]).collect();
    stops.sort_by(f64::total_cmp);
    let mut warned = false;
    let tol = TIME_EPS * t_end.abs().max(1.0);
    while sim.state.t < t_end - tol {
        let t = sim.state.t;
        let target = stops
            .iter()
            .copied()
            .find(|&s| s > t + tol)
            .unwrap_or(t_end);
        let mut dt = sim.proposed_dt();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::BlowUp {
                step: sim.state.step,
                time: t,
                detail: format!("step size {dt} from the CFL rule"),
            });
        }
        if dt > 1.0 && !warned {
            log::warn!("time step {dt:.3} exceeds 1; the CFL rule may be too permissive here");
            warned = true;
        }
        if t + dt >= target - tol {
            dt = target - t;
        }
        sim.advance(dt)?;
        if (sim.state.t - target).abs() <= tol {
            sim.state.t = target;
        }
        let mut rec = diag.record(&sim.disc, &sim.state, dt)?;
        sim.annotate(&mut rec);
        summary.update(&first, &prev, &rec);
        if let Some(limit) = sim.config.energy_tolerance {
            let drift = (rec.te / first.te - 1.0).abs();
            if drift > limit {
                return Err(Error::Numerical(format!(
                    "total energy drifted by {drift:e} (limit {limit:e}) at step {}",
                    rec.step
                )));
            }
        }
        observe(sim, &rec)?;
        prev = rec;
        if sim.state.step % 1000 == 0 {
            log::info!("step {} t = {:.4} dt = {:.3e}", sim.state.step, sim.state.t, dt);
        }
    }
    summary.wall_seconds = start.elapsed().as_secs_f64();
    Ok(summary)
}

/// Manifest written next to the outputs of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: String,
    pub code_version: String,
    pub prng: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    pub column_units: Vec<(String, String)>,
    /// Convention for the spectrum files.
    pub spectrum_definition: String,
    pub resistivity_definition: String,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
    pub wall_seconds: f64,
    pub files: Vec<FileEntry>,
}

pub const SCALARS_FILE: &str = "scalars.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Outcome of [`execute_run`].
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub records: Vec<DiagRecord>,
    pub manifest: RunManifest,
}

fn snapshot_name(step: u64) -> PathBuf {
    PathBuf::from(format!("snapshot_{step:08}.vla1"))
}

/// Runs a configuration, writing scalars, snapshots, spectra and a manifest
/// to `dir`. Partial outputs and a failure manifest are written on error.
pub fn execute_run(config: &RunConfig, dir: &Path) -> Result<RunOutput> {
    let start = Instant::now();
    io::create_dir(dir)?;
    let mut sim = Simulation::new(config)?;
    let out = &config.output;
    let mut records: Vec<DiagRecord> = Vec::new();
    let mut files: Vec<PathBuf> = Vec::new();
    let mut spectra: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    let snap_times = out.snapshot_times.clone();
    let result = run_loop(&mut sim, &snap_times, |s, rec| {
        records.push(rec.clone());
        let step = s.state.step;
        let at_time = snap_times
            .iter()
            .any(|&t| (t - s.state.t).abs() <= TIME_EPS * t.abs().max(1.0));
        let strided = out.snapshot_stride > 0 && step % out.snapshot_stride as u64 == 0;
        if at_time || strided || step == 0 {
            let name = snapshot_name(step);
            io::write_snapshot(&dir.join(&name), &s.disc, &s.state)?;
            files.push(name);
        }
        if out.spectrum_stride > 0 && step % out.spectrum_stride as u64 == 0 {
            spectra.push((s.state.t, field_spectrum(&s.disc, &s.state.e, out.spectrum_modes)?));
        }
        Ok(())
    });
    let final_name = snapshot_name(sim.state.step);
    if result.is_ok() && !files.contains(&final_name) {
        io::write_snapshot(&dir.join(&final_name), &sim.disc, &sim.state)?;
        files.push(final_name);
    }
    let last = records.len().saturating_sub(1);
    let rows = records
        .iter()
        .enumerate()
        .filter(|(i, _)| i % out.scalar_stride == 0 || *i == last)
        .map(|(_, r)| r.values());
    io::write_csv(&dir.join(SCALARS_FILE), &DiagRecord::header(), rows)?;
    files.push(SCALARS_FILE.into());
    if !spectra.is_empty() {
        let header: Vec<String> = ["t".to_string()]
            .into_iter()
            .chain((1..=out.spectrum_modes).map(|n| format!("E_k{n}")))
            .collect();
        let rows = spectra
            .iter()
            .map(|(t, s)| std::iter::once(*t).chain(s.iter().map(|p| p.1)).collect());
        io::write_csv(&dir.join("spectrum.csv"), &header, rows)?;
        files.push("spectrum.csv".into());
    }
    let entries = files
        .iter()
        .map(|f| FileEntry::describe(dir, f))
        .collect::<Result<Vec<_>>>()?;
    let (status, summary, error) = match &result {
        Ok(s) => ("completed".to_string(), Some(s.clone()), None),
        Err(e) => ("failed".to_string(), None, Some(e.to_string())),
    };
    let manifest = RunManifest {
        status,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        prng: PRNG_ID.to_string(),
        seed: config.seed,
        config_hash: config.hash(),
        config: config.clone(),
        column_units: DiagRecord::COLUMNS
            .iter()
            .map(|(n, u)| (n.to_string(), u.to_string()))
            .collect(),
        spectrum_definition: "E_k(n) = 10^logFM_n with kappa_n = 2 pi n / L; logFM_n = log10((1/L) sqrt((int E sin)^2 + (int E cos)^2))".into(),
        resistivity_definition: "eta_n = -(J0_n - J0_{n-1}) / (dt_n J0_n); nan when |J0_n| < 1e-14 or at the first sample".into(),
        summary,
        error,
        wall_seconds: start.elapsed().as_secs_f64(),
        files: entries,
    };
    io::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    let summary = result?;
    Ok(RunOutput {
        dir: dir.to_path_buf(),
        summary,
        records,
        manifest,
    })
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub dt: f64,
    /// Norm of the difference to the next finer level; NaN on the finest.
    pub difference: f64,
    /// `log2` of successive difference ratios; NaN where undefined.
    pub order: f64,
}

/// What a convergence study integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceMode {
    /// The configured scheme on the full coupled system.
    Full,
    /// Midpoint x-advection only, with the field held at zero.
    TransportOnly,
}

fn state_difference(disc: &Discretization, a: &State, b: &State) -> Result<f64> {
    let diff = |x: &NodalField, y: &NodalField| -> Result<f64> {
        let v = x.values.iter().zip(&y.values).map(|(p, q)| p - q).collect();
        Ok(l2_norm(disc, &NodalField::from_values(x.species, x.nx(), x.nv(), x.q(), v)?))
    };
    let de = ElectricField::from_values(
        disc.nx(),
        disc.q(),
        a.e.values.iter().zip(&b.e.values).map(|(p, q)| p - q).collect(),
    )?;
    let e2 = 2.0 * crate::field::electric_energy(disc, &de);
    Ok((diff(&a.f_e, &b.f_e)?.powi(2) + diff(&a.f_i, &b.f_i)?.powi(2) + e2).sqrt())
}

/// Integrates to `t_end` with `dt0, dt0/2, ...` over `levels` levels at a
/// fixed mesh and reports successive-difference orders.
///
/// `dt0` is adjusted down so that `t_end` is a whole number of steps.
pub fn convergence_study(config: &RunConfig, dt0: f64, levels: usize, mode: ConvergenceMode) -> Result<Vec<ConvergenceRow>> {
    if levels < 3 {
        return Err(Error::Config(format!("a convergence study needs at least 3 levels, got {levels}")));
    }
    if !(dt0 > 0.0) || !(config.t_end > 0.0) {
        return Err(Error::Config("convergence study needs positive dt and t_end".into()));
    }
    let n0 = (config.t_end / dt0).ceil().max(1.0) as u64;
    let base = Simulation::new(config)?;
    let finals = (0..levels)
        .map(|lvl| {
            let n = n0 << lvl;
            let dt = config.t_end / n as f64;
            let mut sim = base.clone();
            if mode == ConvergenceMode::TransportOnly {
                sim.state.e = sim.disc.zero_efield();
            }
            let mut implicit = ImplicitStepper::new(&sim.disc, config.solver);
            for _ in 0..n {
                match mode {
                    ConvergenceMode::Full => sim.advance(dt)?,
                    ConvergenceMode::TransportOnly => {
                        let st = implicit.as_mut().map_err(|e| Error::Config(e.to_string()))?;
                        sim.state = st.scheme_a(&sim.disc, &sim.state, dt)?;
                    }
                }
            }
            Ok((dt, sim.state))
        })
        .collect::<Result<Vec<_>>>()?;
    let diffs = finals
        .windows(2)
        .map(|w| state_difference(&base.disc, &w[0].1, &w[1].1))
        .collect::<Result<Vec<_>>>()?;
    Ok(finals
        .iter()
        .enumerate()
        .map(|(lvl, (dt, _))| {
            let difference = diffs.get(lvl).copied().unwrap_or(f64::NAN);
            let order = match (diffs.get(lvl), diffs.get(lvl + 1)) {
                (Some(a), Some(b)) => (a / b).log2(),
                _ => f64::NAN,
            };
            ConvergenceRow {
                level: lvl,
                dt: *dt,
                difference,
                order,
            }
        })
        .collect())
}

pub const CONVERGENCE_HEADER: [&str; 4] = ["level", "dt", "difference", "order"];

pub fn write_convergence_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    io::write_csv(
        path,
        &CONVERGENCE_HEADER,
        rows.iter().map(|r| vec![r.level as f64, r.dt, r.difference, r.order]),
    )
}
