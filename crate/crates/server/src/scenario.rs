//! Scenario files: which volume, gland, probe and needle a session uses.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use biopsym_core::anatomy::{load_obj, AxisAssignment, ZoneId};
use biopsym_core::biopsy::{NeedleSpec, Target};
use biopsym_core::exercises::AssistView;
use biopsym_core::probe::ProbeSpec;
use biopsym_core::volume::{generate_phantom, load_volume, PhantomSpec};
use biopsym_core::{Prostate, Volume};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SCENARIOS: &str = include_str!("../assets/scenarios/default.json");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario {id}: {msg}")]
    Invalid { id: String, msg: String },
    #[error("duplicate scenario id {0}")]
    Duplicate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum VolumeSource {
    /// Synthetic phantom; `spec` defaults to the built-in one.
    Phantom {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        spec: Option<Box<PhantomSpec<f64>>>,
    },
    /// A `USVOL1` file, relative to the scenario file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ProstateSource {
    /// The phantom's own ellipsoid.
    Phantom {
        #[serde(default = "default_subdivisions")]
        subdivisions: u32,
    },
    Ellipsoid {
        center: [f64; 3],
        semi_axes: [f64; 3],
        #[serde(default = "default_subdivisions")]
        subdivisions: u32,
    },
    /// A closed triangle mesh in OBJ format, relative to the scenario file.
    Mesh { path: PathBuf },
}

fn default_subdivisions() -> u32 {
    4
}

impl Default for ProstateSource {
    fn default() -> Self {
        ProstateSource::Phantom {
            subdivisions: default_subdivisions(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SliceConfig {
    pub px: usize,
    pub mm_per_px: f64,
    pub fov_deg: f64,
    pub r_min_mm: f64,
    pub r_max_mm: f64,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            px: 256,
            mm_per_px: 0.3,
            fov_deg: 140.0,
            r_min_mm: 0.0,
            r_max_mm: 76.8,
        }
    }
}

fn default_order() -> Vec<ZoneId> {
    ZoneId::default_protocol_order()
}

fn default_position() -> String {
    "left_lateral_decubitus".into()
}

fn default_insertion() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDef {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub volume: VolumeSource,
    #[serde(default)]
    pub prostate: ProstateSource,
    #[serde(default)]
    pub zone_axes: AxisAssignment,
    #[serde(default)]
    pub probe: ProbeSpec<f64>,
    #[serde(default)]
    pub needle: NeedleSpec<f64>,
    #[serde(default = "default_order")]
    pub canonical_order: Vec<ZoneId>,
    #[serde(default)]
    pub targets: Vec<Target<f64>>,
    #[serde(default)]
    pub assistance: Vec<AssistView>,
    #[serde(default = "default_position")]
    pub patient_position: String,
    #[serde(default)]
    pub slice: SliceConfig,
    /// Needle advance used when a fire command does not give one.
    #[serde(default = "default_insertion")]
    pub default_insertion_mm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub scenarios: Vec<ScenarioDef>,
}

/// A scenario with its gland built and its volume loaded on first use.
#[derive(Debug)]
pub struct Scenario {
    pub def: ScenarioDef,
    pub prostate: Prostate,
    base_dir: PathBuf,
    volume: OnceLock<Result<Arc<Volume>, String>>,
}

impl Scenario {
    pub fn build(def: ScenarioDef, base_dir: &Path) -> Result<Self, ScenarioError> {
        let bad = |msg: String| ScenarioError::Invalid {
            id: def.id.clone(),
            msg,
        };
        def.probe.validate().map_err(|e| bad(e.to_string()))?;
        def.needle.validate().map_err(|e| bad(e.to_string()))?;
        let mut seen = [false; 12];
        for z in &def.canonical_order {
            seen[z.index()] = true;
        }
        if def.canonical_order.len() != 12 || seen.iter().any(|s| !s) {
            return Err(bad("canonical order must be a permutation of the 12 zones".into()));
        }
        if let Some(t) = def.targets.iter().find(|t| !(t.radius_mm > 0.0)) {
            return Err(bad(format!("target {} needs a positive radius", t.id)));
        }
        let s = def.slice;
        if s.px == 0
            || !(s.mm_per_px > 0.0)
            || !(s.fov_deg > 0.0 && s.fov_deg <= 360.0)
            || !(s.r_min_mm >= 0.0 && s.r_min_mm < s.r_max_mm)
        {
            return Err(bad("invalid slice configuration".into()));
        }
        if !(def.default_insertion_mm >= 0.0) {
            return Err(bad("default insertion must be >= 0".into()));
        }
        let prostate = match &def.prostate {
            ProstateSource::Phantom { subdivisions } => {
                let spec = match &def.volume {
                    VolumeSource::Phantom { spec, .. } => spec.clone().unwrap_or_default(),
                    VolumeSource::File { .. } => {
                        return Err(bad("prostate shape `phantom` needs a phantom volume".into()))
                    }
                };
                Prostate::ellipsoid(
                    spec.prostate_center,
                    spec.prostate_semi_axes,
                    *subdivisions,
                    def.zone_axes,
                )
            }
            ProstateSource::Ellipsoid {
                center,
                semi_axes,
                subdivisions,
            } => Prostate::ellipsoid((*center).into(), (*semi_axes).into(), *subdivisions, def.zone_axes),
            ProstateSource::Mesh { path } => {
                let mesh = load_obj(base_dir.join(path)).map_err(|e| bad(e.to_string()))?;
                Prostate::new(mesh, def.zone_axes)
            }
        }
        .map_err(|e| bad(e.to_string()))?;
        if let VolumeSource::File { path } = &def.volume {
            if !base_dir.join(path).is_file() {
                return Err(bad(format!("volume file {} not found", path.display())));
            }
        }
        Ok(Self {
            def,
            prostate,
            base_dir: base_dir.to_path_buf(),
            volume: OnceLock::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.def.id
    }

    /// Generates or loads the volume once; later calls share it.
    pub fn volume(&self) -> Result<Arc<Volume>, String> {
        self.volume
            .get_or_init(|| {
                let v = match &self.def.volume {
                    VolumeSource::Phantom { seed, spec } => {
                        let mut spec = spec.clone().unwrap_or_default();
                        if let Some(seed) = seed {
                            spec.seed = *seed;
                        }
                        generate_phantom(&spec)
                    }
                    VolumeSource::File { path } => load_volume(self.base_dir.join(path)),
                };
                v.map(Arc::new).map_err(|e| format!("scenario {}: {e}", self.def.id))
            })
            .clone()
    }
}

/// Every scenario known to the service, by id.
#[derive(Debug, Default)]
pub struct Scenarios {
    by_id: BTreeMap<String, Arc<Scenario>>,
}

impl Scenarios {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let mut by_id = BTreeMap::new();
        for def in file.scenarios {
            let id = def.id.clone();
            let s = Scenario::build(def, base_dir)?;
            if by_id.insert(id.clone(), Arc::new(s)).is_some() {
                return Err(ScenarioError::Duplicate(id));
            }
        }
        Ok(Self { by_id })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn bundled() -> Self {
        Self::from_json(DEFAULT_SCENARIOS, Path::new(".")).expect("bundled scenarios are valid")
    }

    pub fn get(&self, id: &str) -> Option<&Arc<Scenario>> {
        self.by_id.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<Scenario>> {
        self.by_id.values()
    }
}
