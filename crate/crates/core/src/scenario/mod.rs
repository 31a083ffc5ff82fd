//! Scene configuration: a versioned JSON document describing the body,
//! materials, colliders, muscles, loss schedule and solver settings.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contact::{BarrierParams, Collider};
use crate::elasticity::{MaterialParams, TetMesh};
use crate::error::{Error, Result};
use crate::loss::Schedule;
use crate::meshgen;
use crate::muscle::{FiberSpec, MuscleSystem};
use crate::opt::OptimizerConfig;
use crate::sim::{SimState, Simulator, StepConfig};

pub mod builtin;
pub mod commands;
pub mod io;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSource {
    /// Text mesh file, relative paths resolved against the config's folder.
    File { path: PathBuf },
    /// `cells[0]×cells[1]×cells[2]` cubes of edge `cell`, six tets each.
    Box { cells: [usize; 3], cell: [f64; 3], origin: [f64; 3] },
    /// Single right-angled tet with legs of length `edge`.
    Tet { origin: [f64; 3], edge: f64 },
}

impl MeshSource {
    pub fn build(&self, base: &Path) -> Result<TetMesh> {
        match self {
            MeshSource::File { path } => {
                let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                if !full.exists() {
                    return Err(Error::Config(format!("mesh file {} does not exist", full.display())));
                }
                TetMesh::read(&full).map_err(|e| Error::Config(format!("mesh file {}: {e}", full.display())))
            }
            MeshSource::Box { cells, cell, origin } => {
                if cells.iter().any(|&n| n == 0) || cell.iter().any(|&h| !(h > 0.0)) {
                    return Err(Error::Config("box mesh needs positive cell counts and sizes".into()));
                }
                meshgen::box_mesh(*cells, *cell, *origin)
            }
            MeshSource::Tet { origin, edge } => {
                if !(*edge > 0.0) {
                    return Err(Error::Config("tet edge must be positive".into()));
                }
                meshgen::corner_tet(*origin, *edge)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuscleParams {
    /// Gaussian width of the stress spread, in geodesic distance (m).
    #[serde(default = "d_width")]
    pub width: f64,
    /// Weights below this are dropped.
    #[serde(default = "d_truncation")]
    pub truncation: f64,
}

fn d_width() -> f64 {
    0.05
}
fn d_truncation() -> f64 {
    1e-4
}

impl Default for MuscleParams {
    fn default() -> Self {
        MuscleParams { width: d_width(), truncation: d_truncation() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    /// Uniform initial velocity.
    #[serde(default)]
    pub velocity: [f64; 3],
    /// Half-width of the seeded uniform jitter on the first activation guess.
    #[serde(default)]
    pub activation_jitter: f64,
}

fn d_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}
fn d_frames() -> usize {
    40
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub mesh: MeshSource,
    pub material: MaterialParams,
    #[serde(default)]
    pub barrier: BarrierParams,
    #[serde(default = "d_gravity")]
    pub gravity: [f64; 3],
    #[serde(default)]
    pub colliders: Vec<Collider>,
    #[serde(default)]
    pub fibers: Vec<FiberSpec>,
    #[serde(default)]
    pub muscle: MuscleParams,
    pub loss: Schedule,
    #[serde(default)]
    pub step: StepConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default = "d_frames")]
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialConditions,
}

/// Everything needed to run a scene.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub sim: Simulator,
    pub initial: SimState,
    /// Starting activations of frame 0.
    pub a0: Vec<f64>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("schema error: {e}")))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    /// Reads a config file; returns it with the folder that relative paths
    /// refer to.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validates every section and assembles the simulator.
    pub fn build(&self, base: &Path) -> Result<Scenario> {
        let mesh = self.mesh.build(base)?;
        let muscles = if self.fibers.is_empty() {
            MuscleSystem::empty(&mesh)
        } else {
            MuscleSystem::new(&mesh, &self.fibers, self.muscle.width, self.muscle.truncation)?
        };
        self.loss.validate(&mesh)?;
        self.optimizer.validate()?;
        if self.frames == 0 {
            return Err(Error::Config("frames must be positive".into()));
        }
        if !(self.initial.activation_jitter >= 0.0) {
            return Err(Error::Config("activation_jitter must be non-negative".into()));
        }
        let sim = Simulator::new(
            mesh,
            self.material,
            self.barrier,
            self.colliders.clone(),
            muscles,
            self.gravity,
            self.step,
        )?;
        let mut initial = SimState::at_rest(&sim.mesh);
        for (i, v) in initial.v.iter_mut().enumerate() {
            *v = self.initial.velocity[i % 3];
        }
        if sim.min_distance(&initial.x) <= 0.0 {
            return Err(Error::Config("the rest shape intersects a collider".into()));
        }
        let a0 = jitter(self.seed, sim.num_activations(), self.initial.activation_jitter);
        Ok(Scenario { config: self.clone(), sim, initial, a0 })
    }
}

/// Seeded uniform vector in `[−s, s]`; zeros when `s = 0`.
pub fn jitter(seed: u64, n: usize, s: f64) -> Vec<f64> {
    if s == 0.0 {
        return vec![0.0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| s * rng.random_range(-1.0..=1.0)).collect()
}

/// Exit status for an error: 2 for anything the user can fix in the input,
/// 1 for numerical failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Mesh(_) | Error::Muscle(_) | Error::Io(_) | Error::Shape(_) => 2,
        _ => 1,
    }
}
