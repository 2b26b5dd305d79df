//! Run configuration: a versioned JSON schema with named presets.
//!
//! A configuration may name a preset; its own keys are then merged over the
//! preset's values (objects recursively, everything else replaced) before
//! the result is validated. Unknown keys are rejected at every level.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::field::Discretization;
use crate::implicit::SolverSettings;
use crate::physics::PlasmaParams;
use crate::quadmesh::build_mesh;
use crate::state::JextMode;

pub const SCHEMA_VERSION: u32 = 1;

/// Names accepted in the `preset` field.
pub const PRESETS: [&str; 3] = ["landau25", "landau1836", "s1"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Explicit,
    Implicit,
}

/// Initial condition family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialCondition {
    /// Single-mode electron density perturbation.
    Landau { amplitude: f64, kappa: f64 },
    /// Random-phase multi-mode noise of level `e_tf` on modes `1..=n_max`.
    Cdiaw { e_tf: f64, n_max: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    /// `m_i / m_e`.
    pub mass_ratio: f64,
    /// `T_e / T_i`.
    pub temp_ratio: f64,
    #[serde(default)]
    pub v_de: f64,
    pub initial: InitialCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// Domain length `L`; the x-domain is `[0, L]`.
    pub length: f64,
    pub nx: usize,
    pub v_ce: f64,
    pub v_ci: f64,
    pub nv_e: usize,
    pub nv_i: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory; relative paths are resolved against the output root.
    pub dir: Option<PathBuf>,
    /// Write every n-th scalar record (the time series always includes the last step).
    pub scalar_stride: usize,
    /// Write a snapshot every n steps; 0 disables strided snapshots.
    pub snapshot_stride: usize,
    /// Times at which snapshots are written; steps are clipped to hit them.
    pub snapshot_times: Vec<f64>,
    /// Write the field spectrum every n steps; 0 disables.
    pub spectrum_stride: usize,
    /// Number of modes in spectrum files.
    pub spectrum_modes: usize,
    /// Evaluate the entropy diagnostic every n steps; 0 disables.
    pub entropy_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            scalar_stride: 1,
            snapshot_stride: 0,
            snapshot_times: Vec::new(),
            spectrum_stride: 0,
            spectrum_modes: 64,
            entropy_stride: 10,
        }
    }
}

/// Reference values carried for documentation and plotting only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceMetadata {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub v_ph_min: f64,
    pub v_ph_max: f64,
    /// Factors converting plotted variables to the reference units.
    pub scale_factors: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub physics: PhysicsConfig,
    pub mesh: MeshConfig,
    pub degree: usize,
    pub scheme: Scheme,
    pub cfl: f64,
    /// Fixed step size; overrides the CFL rule when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_end: f64,
    pub jext_mode: JextMode,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    /// Fail the run if total energy drifts by more than this relative amount.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_tolerance: Option<f64>,
    /// Start from a snapshot instead of the analytic initial condition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_snapshot: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceMetadata>,
}

fn landau_preset(mass_ratio: f64) -> RunConfig {
    let temp_ratio = 2.0;
    let gamma = (1.0 / (temp_ratio * mass_ratio)).sqrt();
    RunConfig {
        schema_version: SCHEMA_VERSION,
        preset: None,
        physics: PhysicsConfig {
            mass_ratio,
            temp_ratio,
            v_de: 0.0,
            initial: InitialCondition::Landau {
                amplitude: 0.5,
                kappa: 0.5,
            },
        },
        mesh: MeshConfig {
            length: 4.0 * std::f64::consts::PI,
            nx: 100,
            v_ce: 8.0,
            v_ci: gamma.sqrt() * 8.0,
            nv_e: 200,
            nv_i: 200,
        },
        degree: 2,
        scheme: Scheme::Implicit,
        cfl: 5.0,
        dt: None,
        t_end: 100.0,
        jext_mode: JextMode::Zero,
        solver: SolverSettings::default(),
        seed: 0,
        output: OutputConfig::default(),
        energy_tolerance: None,
        initial_snapshot: None,
        reference: None,
    }
}

/// Reduced-mass-ratio current-driven ion-acoustic configuration.
pub fn preset_s1() -> RunConfig {
    let lambda_min = 7.98;
    let lambda_max = 426.60;
    let scale_factors = [
        ("x", 3.97),
        ("theta_e", std::f64::consts::SQRT_2),
        ("f_e", 11.81),
        ("f_i", 11.81),
        ("eta", 7.58e5),
        ("E", 0.504),
        ("kappa", 0.252),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    RunConfig {
        schema_version: SCHEMA_VERSION,
        preset: None,
        physics: PhysicsConfig {
            mass_ratio: 25.0,
            temp_ratio: 2.0,
            v_de: 1.7,
            initial: InitialCondition::Cdiaw {
                e_tf: 6.76e-5,
                n_max: (lambda_max / lambda_min) as usize,
            },
        },
        mesh: MeshConfig {
            length: lambda_max,
            nx: 500,
            v_ce: 10.30,
            v_ci: 2.87,
            nv_e: 890,
            nv_i: 890,
        },
        degree: 2,
        scheme: Scheme::Explicit,
        cfl: 0.13,
        dt: None,
        t_end: 400.0,
        jext_mode: JextMode::J0,
        solver: SolverSettings::default(),
        seed: 0,
        output: OutputConfig::default(),
        energy_tolerance: None,
        initial_snapshot: None,
        reference: Some(ReferenceMetadata {
            lambda_min,
            lambda_max,
            v_ph_min: 0.23,
            v_ph_max: 0.29,
            scale_factors,
        }),
    }
}

/// Looks up a preset by name.
pub fn preset(name: &str) -> Result<RunConfig> {
    let mut cfg = match name {
        "landau25" => landau_preset(25.0),
        "landau1836" => landau_preset(1836.0),
        "s1" => preset_s1(),
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    cfg.preset = Some(name.to_string());
    Ok(cfg)
}

/// Recursively overlays `patch` onto `base`.
pub fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

impl RunConfig {
    /// Parses a configuration document, applying its preset if named.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let merged = match value.get("preset").and_then(Value::as_str) {
            Some(name) => {
                let mut base = serde_json::to_value(preset(name)?).expect("presets serialize");
                merge_json(&mut base, value);
                base
            }
            None => value,
        };
        let cfg: RunConfig = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column())))?;
        Self::from_value(value).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Applies `key=value` overrides where `key` is a dotted path and
    /// `value` is parsed as JSON (falling back to a plain string).
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut value = serde_json::to_value(self).expect("configs serialize");
        for ov in overrides {
            let ov = ov.as_ref();
            let (key, raw) = ov
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {ov:?} is not of the form key=value")))?;
            let parsed: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut patch = parsed;
            for part in key.split('.').rev() {
                let mut obj = serde_json::Map::new();
                obj.insert(part.to_string(), patch);
                patch = Value::Object(obj);
            }
            merge_json(&mut value, patch);
        }
        // The preset has already been applied; do not re-apply it over the overrides.
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        PlasmaParams::new(
            self.physics.mass_ratio,
            self.physics.temp_ratio,
            self.physics.v_de,
            self.jext_mode,
        )?;
        let m = &self.mesh;
        for (name, v) in [("mesh.length", m.length), ("mesh.v_ce", m.v_ce), ("mesh.v_ci", m.v_ci)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, n) in [("mesh.nx", m.nx), ("mesh.nv_e", m.nv_e), ("mesh.nv_i", m.nv_i)] {
            if n == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if self.degree == 0 {
            return fail("degree must be at least 1 for exact moment quadrature".into());
        }
        if self.degree + 1 > crate::quadmesh::MAX_GAUSS_POINTS {
            return fail(format!("degree {} is too high", self.degree));
        }
        if !(self.cfl > 0.0 && self.cfl.is_finite()) {
            return fail(format!("cfl must be positive, got {}", self.cfl));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return fail(format!("dt must be positive, got {dt}"));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return fail(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if self.energy_tolerance.is_some() && self.degree < 2 {
            return fail("energy conservation checks require degree >= 2".into());
        }
        if self.output.scalar_stride == 0 {
            return fail("output.scalar_stride must be at least 1".into());
        }
        match self.physics.initial {
            InitialCondition::Landau { amplitude, kappa } => {
                if !amplitude.is_finite() || !(kappa > 0.0) {
                    return fail("landau initial condition needs finite amplitude and positive kappa".into());
                }
            }
            InitialCondition::Cdiaw { e_tf, .. } => {
                if !(e_tf >= 0.0) {
                    return fail(format!("e_tf must be non-negative, got {e_tf}"));
                }
                if self.jext_mode != JextMode::J0 {
                    return fail("the cdiaw initial condition requires jext_mode = \"j0\"".into());
                }
            }
        }
        self.solver.validate()
    }

    pub fn plasma(&self) -> PlasmaParams {
        PlasmaParams {
            mass_ratio: self.physics.mass_ratio,
            temp_ratio: self.physics.temp_ratio,
            v_de: self.physics.v_de,
            jext: self.jext_mode,
        }
    }

    pub fn discretization(&self) -> Result<Discretization> {
        let m = &self.mesh;
        Discretization::new(
            build_mesh(0.0, m.length, m.nx, true)?,
            build_mesh(-m.v_ce, m.v_ce, m.nv_e, false)?,
            build_mesh(-m.v_ci, m.v_ci, m.nv_i, false)?,
            self.degree,
        )
    }

    /// Canonical JSON text, used for hashing and manifests.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configs serialize")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
