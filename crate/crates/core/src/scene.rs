//! Prefabs, instancing, and scene assembly.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{Label, LabeledPointCloud, PointRecord, FIRST_PREFAB_INSTANCE};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::grass::{blades_to_cloud, Blade};
use crate::pipeline::{InstanceParams, PlacementSet};
use crate::rng::{RngStream, Seed};
use crate::terrain::{terrain_points, Heightmap};

pub const PREFAB_CSV_HEADER: &str = "x,y,z,label";
pub const DEFAULT_PREFAB_BUDGET: usize = 4096;

/// Labeled local-frame point set; +z up, ground contact at z = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Prefab {
    pub name: String,
    pub points: Vec<(Vec3, Label)>,
}

impl Prefab {
    pub fn new(name: &str, points: Vec<(Vec3, Label)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Argument(format!("prefab `{name}` has no points")));
        }
        if let Some((p, _)) = points.iter().find(|(p, _)| !p.is_finite()) {
            return Err(Error::Argument(format!(
                "prefab `{name}` has non-finite point {p:?}"
            )));
        }
        Ok(Prefab {
            name: name.to_string(),
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub type PrefabRegistry = BTreeMap<String, Prefab>;

/// Parses `x,y,z,label` rows; errors carry 1-based file line numbers.
pub fn parse_prefab(name: &str, text: &str, source: &str) -> Result<Prefab> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let err = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let header = reader.headers().map_err(|e| err(1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != PREFAB_CSV_HEADER {
        return Err(err(1, format!("expected header `{PREFAB_CSV_HEADER}`")));
    }
    let mut points = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 4 {
            return Err(err(line, format!("expected 4 fields, found {}", row.len())));
        }
        let c = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(line, format!("invalid coordinate `{}`", &row[i])))
        };
        let p = Vec3::new(c(0)?, c(1)?, c(2)?);
        let label = row[3].parse::<Label>()?;
        points.push((p, label));
    }
    Prefab::new(name, points)
}

/// Loads a prefab CSV; the file stem becomes its name.
pub fn load_prefab(path: &Path) -> Result<Prefab> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    parse_prefab(&name, &text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeShape {
    pub trunk_height: f64,
    pub trunk_radius: f64,
    /// Canopy ellipsoid semi-axes, centered on the trunk top.
    pub canopy_radii: Vec3,
}

impl Default for TreeShape {
    fn default() -> Self {
        TreeShape {
            trunk_height: 8.0,
            trunk_radius: 0.25,
            canopy_radii: Vec3::new(2.5, 2.5, 3.0),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} {v} must be > 0")))
    }
}

/// Uniform point in the unit ball by rejection.
fn unit_ball(s: &mut RngStream) -> Vec3 {
    loop {
        let p = Vec3::new(s.range(-1.0, 1.0), s.range(-1.0, 1.0), s.range(-1.0, 1.0));
        if p.length_squared() <= 1.0 {
            return p;
        }
    }
}

fn ellipsoid_points(
    n: usize,
    center: Vec3,
    radii: Vec3,
    label: Label,
    s: &mut RngStream,
) -> Vec<(Vec3, Label)> {
    (0..n)
        .map(|_| {
            let u = unit_ball(s);
            (
                center + Vec3::new(u.x * radii.x, u.y * radii.y, u.z * radii.z),
                label,
            )
        })
        .collect()
}

/// Trunk points on the cylinder surface, canopy points filling an ellipsoid
/// centered on the trunk top. One fifth of the budget (at least one point)
/// goes to the trunk.
pub fn procedural_tree(
    name: &str,
    shape: &TreeShape,
    budget: usize,
    stream: &mut RngStream,
) -> Result<Prefab> {
    positive("trunk_height", shape.trunk_height)?;
    positive("trunk_radius", shape.trunk_radius)?;
    for r in [
        shape.canopy_radii.x,
        shape.canopy_radii.y,
        shape.canopy_radii.z,
    ] {
        positive("canopy radius", r)?;
    }
    if budget < 2 {
        return Err(Error::Argument(format!(
            "tree budget {budget} must be >= 2"
        )));
    }
    let trunk = (budget / 5).max(1);
    let mut points = Vec::with_capacity(budget);
    for _ in 0..trunk {
        let a = stream.range(0.0, TAU);
        let z = stream.range(0.0, shape.trunk_height);
        points.push((
            Vec3::new(
                shape.trunk_radius * a.cos(),
                shape.trunk_radius * a.sin(),
                z,
            ),
            Label::Trunk,
        ));
    }
    points.extend(ellipsoid_points(
        budget - trunk,
        Vec3::new(0.0, 0.0, shape.trunk_height),
        shape.canopy_radii,
        Label::Canopy,
        stream,
    ));
    Prefab::new(name, points)
}

/// Bush points filling an ellipsoid resting on the ground.
pub fn procedural_shrub(
    name: &str,
    radius: f64,
    height: f64,
    budget: usize,
    stream: &mut RngStream,
) -> Result<Prefab> {
    positive("shrub radius", radius)?;
    positive("shrub height", height)?;
    if budget == 0 {
        return Err(Error::Argument("shrub budget must be >= 1".into()));
    }
    let half = height / 2.0;
    let points = ellipsoid_points(
        budget,
        Vec3::new(0.0, 0.0, half),
        Vec3::new(radius, radius, half),
        Label::Bushes,
        stream,
    );
    Prefab::new(name, points)
}

fn default_budget() -> usize {
    DEFAULT_PREFAB_BUDGET
}

/// Registry entry in a scene config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PrefabSpec {
    File {
        path: PathBuf,
    },
    Tree {
        #[serde(default)]
        shape: TreeShape,
        #[serde(default = "default_budget")]
        budget: usize,
    },
    Shrub {
        radius: f64,
        height: f64,
        #[serde(default = "default_budget")]
        budget: usize,
    },
}

/// Builds every prefab; procedural ones draw from `stream.derive(name)`.
pub fn build_registry(
    specs: &BTreeMap<String, PrefabSpec>,
    base_dir: Option<&Path>,
    stream: &RngStream,
) -> Result<PrefabRegistry> {
    specs
        .iter()
        .map(|(name, spec)| {
            let mut s = stream.derive(name);
            let prefab = match spec {
                PrefabSpec::File { path } => {
                    let full = match base_dir {
                        Some(d) if path.is_relative() => d.join(path),
                        _ => path.clone(),
                    };
                    let text = fs::read_to_string(&full).map_err(|e| Error::io(&full, e))?;
                    parse_prefab(name, &text, &full.display().to_string())?
                }
                PrefabSpec::Tree { shape, budget } => {
                    procedural_tree(name, shape, *budget, &mut s)?
                }
                PrefabSpec::Shrub {
                    radius,
                    height,
                    budget,
                } => procedural_shrub(name, *radius, *height, *budget, &mut s)?,
            };
            Ok((name.clone(), prefab))
        })
        .collect()
}

/// Local point to world: scale, tilt +z about the horizontal twist axis
/// (pivot at the ground contact), spin about +z, translate.
pub fn transform_point(p: Vec3, inst: &InstanceParams) -> Vec3 {
    let mut q = p * inst.scale;
    if inst.twist_angle != 0.0 {
        let axis = Vec3::new(inst.twist_axis.x, inst.twist_axis.y, 0.0).normalized();
        q = q.rotate_axis(axis, inst.twist_angle);
    }
    q.rotate_z(inst.spin) + inst.position
}

pub fn apply_instance(prefab: &Prefab, inst: &InstanceParams) -> Vec<(Vec3, Label)> {
    prefab
        .points
        .iter()
        .map(|&(p, l)| (transform_point(p, inst), l))
        .collect()
}

/// Terrain samples, then every placement set in the order given (instance
/// ids from 2 upward), then grass blades.
pub fn assemble_scene(
    hm: &Heightmap,
    placements: &[PlacementSet],
    blades: &[Blade],
    terrain_spacing: f64,
    seed: Seed,
    registry: &PrefabRegistry,
) -> Result<LabeledPointCloud> {
    let mut cloud = terrain_points(hm, terrain_spacing, seed)?;
    let mut jobs = Vec::new();
    let mut next_id = FIRST_PREFAB_INSTANCE;
    for set in placements {
        for inst in &set.instances {
            let prefab = registry
                .get(&inst.prefab_name)
                .ok_or_else(|| Error::MissingPrefab {
                    node: set.node_id.clone(),
                    prefab: inst.prefab_name.clone(),
                })?;
            jobs.push((prefab, inst, next_id));
            next_id = next_id
                .checked_add(1)
                .ok_or_else(|| Error::Argument("too many instances".into()))?;
        }
    }
    let instanced: Vec<Vec<PointRecord>> = jobs
        .par_iter()
        .map(|&(prefab, inst, id)| {
            prefab
                .points
                .iter()
                .map(|&(p, l)| PointRecord::new(transform_point(p, inst), l, id))
                .collect()
        })
        .collect();
    for records in instanced {
        cloud.extend(LabeledPointCloud::from_records(records));
    }
    cloud.extend(blades_to_cloud(blades));
    Ok(cloud)
}
