//! Scene configuration documents and the end-to-end scene build.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cloud::LabeledPointCloud;
use crate::dataset::DatasetConfig;
use crate::error::{Error, Result};
use crate::grass::{self, GrassParams};
use crate::pipeline::{self, PipelineGraph, PlacementSet, SourceSpec};
use crate::rng::{RngStream, Seed};
use crate::scene::{self, PrefabRegistry, PrefabSpec};
use crate::terrain::{generate_heightmap, Heightmap, TerrainParams};

fn default_spacing() -> f64 {
    1.0
}

/// A pipeline given either as a file path (relative to the config) or as an
/// inline `{"nodes": [...]}` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PipelineRef {
    Path(PathBuf),
    Inline(Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrassConfig {
    /// Density texture; mapped over the terrain extent.
    pub density: SourceSpec,
    #[serde(default)]
    pub params: GrassParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// Used when no seed is given on the command line.
    #[serde(default)]
    pub seed: Option<Seed>,
    #[serde(default)]
    pub terrain: TerrainParams,
    /// Ground sample spacing, meters.
    #[serde(default = "default_spacing")]
    pub terrain_spacing: f64,
    #[serde(default)]
    pub pipeline: Option<PipelineRef>,
    #[serde(default)]
    pub prefabs: BTreeMap<String, PrefabSpec>,
    #[serde(default)]
    pub grass: Option<GrassConfig>,
    #[serde(default)]
    pub dataset: DatasetConfig,
}

impl SceneConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| match e.classify() {
            serde_json::error::Category::Data => Error::Config(format!("{source}: {e}")),
            _ => Error::Parse {
                path: source.to_string(),
                line: e.line() as u64,
                message: e.to_string(),
            },
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Schema and range checks that need no computation.
    pub fn validate(&self) -> Result<()> {
        self.terrain.validate()?;
        if !(self.terrain_spacing.is_finite() && self.terrain_spacing > 0.0) {
            return Err(Error::Argument(format!(
                "terrain_spacing {} must be > 0",
                self.terrain_spacing
            )));
        }
        if let Some(g) = &self.grass {
            g.params.validate()?;
        }
        self.dataset.validate()
    }

    /// The pipeline document as JSON, reading it from disk when referenced
    /// by path.
    pub fn pipeline_document(
        &self,
        base_dir: Option<&Path>,
    ) -> Result<Option<(Value, Option<PathBuf>)>> {
        match &self.pipeline {
            None => Ok(None),
            Some(PipelineRef::Inline(v)) => Ok(Some((v.clone(), base_dir.map(Path::to_path_buf)))),
            Some(PipelineRef::Path(p)) => {
                let full = match base_dir {
                    Some(d) if p.is_relative() => d.join(p),
                    _ => p.clone(),
                };
                let text = fs::read_to_string(&full).map_err(|e| Error::io(&full, e))?;
                let v: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
                    path: full.display().to_string(),
                    line: e.line() as u64,
                    message: e.to_string(),
                })?;
                Ok(Some((v, full.parent().map(Path::to_path_buf))))
            }
        }
    }

    pub fn pipeline_graph(&self, base_dir: Option<&Path>) -> Result<Option<PipelineGraph>> {
        let Some((doc, dir)) = self.pipeline_document(base_dir)? else {
            return Ok(None);
        };
        let mut g = pipeline::parse_pipeline(&doc.to_string())?;
        g.base_dir = dir;
        Ok(Some(g))
    }
}

/// Everything a scene build produces.
#[derive(Debug, Clone)]
pub struct SceneBuild {
    pub heightmap: Heightmap,
    pub placements: Vec<PlacementSet>,
    pub blade_count: usize,
    pub blade_vertices: usize,
    pub cloud: LabeledPointCloud,
}

/// Stream layout under the scene seed: `prefabs`, `pipeline`,
/// `grass/density`, `grass/blades`. Terrain uses its own seed label.
pub fn build_scene(
    config: &SceneConfig,
    base_dir: Option<&Path>,
    seed: Seed,
) -> Result<SceneBuild> {
    config.validate()?;
    let root = RngStream::new(seed);
    let heightmap = generate_heightmap(&config.terrain, seed)?;
    let registry: PrefabRegistry =
        scene::build_registry(&config.prefabs, base_dir, &root.derive("prefabs"))?;
    let placements = match config.pipeline_graph(base_dir)? {
        Some(g) => pipeline::evaluate(&g, &heightmap, &root.derive("pipeline"), &registry)?,
        None => Vec::new(),
    };
    let blades = match &config.grass {
        Some(g) => {
            let s = root.derive("grass");
            let density = g
                .density
                .build(&s.derive("density"), heightmap.extent(), base_dir)?;
            let anchors =
                grass::sample_anchors(&density, g.params.tile_size, g.params.max_per_tile)?;
            grass::instantiate_grass(
                &anchors,
                &density,
                &heightmap,
                &g.params,
                &s.derive("blades"),
            )?
        }
        None => Vec::new(),
    };
    let cloud = scene::assemble_scene(
        &heightmap,
        &placements,
        &blades,
        config.terrain_spacing,
        seed,
        &registry,
    )?;
    Ok(SceneBuild {
        blade_count: blades.len(),
        blade_vertices: blades.iter().map(|b| b.vertices.len()).sum(),
        heightmap,
        placements,
        cloud,
    })
}

/// Shipped demo: a scene config and the pipeline it references.
pub mod demo {
    pub const SCENE_JSON: &str = include_str!("../assets/demo/scene.json");
    pub const PIPELINE_JSON: &str = include_str!("../assets/demo/trees.json");
    pub const PIPELINE_FILE: &str = "trees.json";
}
