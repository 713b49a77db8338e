//! Declarative run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{AngularRule, SpatialGrid, SymmetryKind, VelocityGrid};
use crate::hydro::{FourierMode, HydroState};
use crate::kinetic::KineticOptions;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityConfig {
    pub n_per_axis: usize,
    pub v_max: f64,
    #[serde(default)]
    pub angular_rule: AngularRule,
    #[serde(default = "default_symmetry")]
    pub symmetry: SymmetryKind,
    /// Directory for cached collision tables; unset disables caching.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn default_symmetry() -> SymmetryKind {
    SymmetryKind::Slab
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    #[serde(default = "one")]
    pub dim: usize,
    pub n_cells: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default = "unit")]
    pub rho0: f64,
    #[serde(default = "unit")]
    pub temp0: f64,
    #[serde(default)]
    pub rho_modes: Vec<FourierMode>,
    #[serde(default)]
    pub temp_modes: Vec<FourierMode>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    #[serde(default = "default_resolution")]
    pub resolution: [usize; 2],
}

fn default_resolution() -> [usize; 2] {
    [17, 17]
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            resolution: default_resolution(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KineticConfig {
    pub cfl: f64,
    pub residual_tol: f64,
    pub max_iterations: usize,
    pub rebuild_drift: f64,
}

impl Default for KineticConfig {
    fn default() -> Self {
        let o = KineticOptions::default();
        Self {
            cfl: o.cfl,
            residual_tol: o.residual_tol,
            max_iterations: o.max_iterations,
            rebuild_drift: o.rebuild_drift,
        }
    }
}

impl From<KineticConfig> for KineticOptions {
    fn from(c: KineticConfig) -> Self {
        Self {
            cfl: c.cfl,
            residual_tol: c.residual_tol,
            max_iterations: c.max_iterations,
            rebuild_drift: c.rebuild_drift,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub alpha: f64,
    pub epsilons: Vec<f64>,
    pub t_end: f64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Snapshot cadence in macroscopic time; unset keeps only the end points.
    #[serde(default)]
    pub sample_interval: Option<f64>,
    pub velocity: VelocityConfig,
    pub space: SpaceConfig,
    #[serde(default = "default_initial")]
    pub initial: InitialConfig,
    #[serde(default)]
    pub table: TableConfig,
    #[serde(default)]
    pub kinetic: KineticConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_initial() -> InitialConfig {
    InitialConfig {
        rho0: 1.0,
        temp0: 1.0,
        rho_modes: Vec::new(),
        temp_modes: Vec::new(),
    }
}

impl Config {
    /// The convergence-study defaults: 64 cells, 12³ velocities, `α = 1`,
    /// a 10% cosine density perturbation and `t_end = 0.05`.
    pub fn convergence_default() -> Self {
        Self {
            alpha: 1.0,
            epsilons: vec![0.1, 0.05, 0.025],
            t_end: 0.05,
            output_dir: default_output(),
            sample_interval: None,
            velocity: VelocityConfig {
                n_per_axis: 12,
                v_max: 6.0,
                angular_rule: AngularRule::default(),
                symmetry: SymmetryKind::Slab,
                cache_dir: None,
            },
            space: SpaceConfig { dim: 1, n_cells: 64 },
            initial: InitialConfig {
                rho0: 1.0,
                temp0: 1.0,
                rho_modes: vec![FourierMode {
                    wavenumber: [1, 0, 0],
                    amplitude: 0.1,
                    phase: 0.0,
                }],
                temp_modes: Vec::new(),
            },
            table: TableConfig::default(),
            kinetic: KineticConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks every precondition that can be checked without running anything.
    /// All failures are reported as [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.epsilons.is_empty() {
            return bad("epsilons must not be empty".into());
        }
        for (i, &e) in self.epsilons.iter().enumerate() {
            if !(e > 0.0 && e.is_finite()) {
                return bad(format!("epsilon {e} must be positive"));
            }
            if self.epsilons[..i].contains(&e) {
                return bad(format!("epsilon {e} listed twice"));
            }
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if let Some(d) = self.sample_interval {
            if !(d > 0.0) {
                return bad(format!("sample_interval must be positive, got {d}"));
            }
        }
        self.velocity_grid().map_err(|e| Error::Config(e.to_string()))?;
        let space = self.spatial_grid().map_err(|e| Error::Config(e.to_string()))?;
        if self.velocity.symmetry == SymmetryKind::Slab && space.dim() != 1 {
            return bad("the slab velocity reduction needs space.dim = 1".into());
        }
        for m in self.initial.rho_modes.iter().chain(&self.initial.temp_modes) {
            if m.wavenumber[space.dim()..].iter().any(|&k| k != 0) {
                return bad(format!(
                    "mode {:?} varies along an axis beyond dim {}",
                    m.wavenumber,
                    space.dim()
                ));
            }
            if self.velocity.symmetry == SymmetryKind::Slab && m.wavenumber[0] == 0 && m.amplitude != 0.0 {
                return bad("a constant mode should be folded into rho0/temp0".into());
            }
        }
        self.initial_state()
            .map_err(|e| Error::Config(format!("initial state: {e}")))?;
        let [a, b] = self.table.resolution;
        if a < 2 || b < 2 {
            return bad("table resolution must be at least 2 per axis".into());
        }
        let k = &self.kinetic;
        if !(k.cfl > 0.0 && k.cfl <= 1.0) {
            return bad(format!("kinetic.cfl must lie in (0, 1], got {}", k.cfl));
        }
        if !(k.residual_tol > 0.0) || k.max_iterations == 0 || !(k.rebuild_drift > 0.0) {
            return bad("kinetic tolerances must be positive".into());
        }
        Ok(())
    }

    pub fn velocity_grid(&self) -> Result<VelocityGrid<f64>> {
        VelocityGrid::new(
            self.velocity.n_per_axis,
            self.velocity.v_max,
            self.velocity.angular_rule,
        )
    }

    pub fn spatial_grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.space.dim, self.space.n_cells)
    }

    pub fn initial_state(&self) -> Result<HydroState> {
        let i = &self.initial;
        HydroState::from_modes(&self.spatial_grid()?, (i.rho0, i.temp0), &i.rho_modes, &i.temp_modes)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
