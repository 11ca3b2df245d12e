//! Vegetation placement pipelines.
//!
//! A pipeline is a DAG of nodes. Sources and logic nodes produce textures,
//! sampling nodes turn a density texture into a Poisson-disk sample set, and
//! placement nodes turn a sample set (optionally thinned by a spawn-probability
//! texture) into instancing parameters for a named prefab.
//!
//! Documents are JSON:
//!
//! ```json
//! {"nodes": [
//!   {"id": "density", "kind": "source", "params": {"type": "noise"}},
//!   {"id": "points", "kind": "sampling", "params": {"mode": "bridson", "r": 4.0},
//!    "inputs": ["density"]},
//!   {"id": "trees", "kind": "placement", "params": {"prefab": "tree"},
//!    "inputs": ["points"]}
//! ]}
//! ```
//!
//! Every node draws from `derive(pipeline stream, node id)`, so adding an
//! unrelated node never perturbs the randomness of existing ones.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::TAU;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::geom::{Rect, Vec2, Vec3};
use crate::rng::RngStream;
use crate::sampling::{self, DiskParams, Radius, SampleSet, DEFAULT_ATTEMPTS};
use crate::scene::PrefabRegistry;
use crate::terrain::{FbmParams, Heightmap};
use crate::texture::{self, LogicOp, Texture, VoronoiMode};

pub const DEFAULT_MAX_TWIST: f64 = 0.15;
pub const DEFAULT_SCALE_RANGE: [f64; 2] = [0.8, 1.25];
const DEFAULT_RESOLUTION: [usize; 2] = [64, 64];

fn default_resolution() -> [usize; 2] {
    DEFAULT_RESOLUTION
}

fn default_attempts() -> usize {
    DEFAULT_ATTEMPTS
}

fn default_max_twist() -> f64 {
    DEFAULT_MAX_TWIST
}

fn default_scale_range() -> [f64; 2] {
    DEFAULT_SCALE_RANGE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Source,
    Logic,
    Sampling,
    Placement,
}

impl NodeKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "source" => Some(NodeKind::Source),
            "logic" => Some(NodeKind::Logic),
            "sampling" => Some(NodeKind::Sampling),
            "placement" => Some(NodeKind::Placement),
            _ => None,
        }
    }

    pub fn output(self) -> PayloadType {
        match self {
            NodeKind::Source | NodeKind::Logic => PayloadType::Texture,
            NodeKind::Sampling => PayloadType::Samples,
            NodeKind::Placement => PayloadType::Placements,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Source => "source",
            NodeKind::Logic => "logic",
            NodeKind::Sampling => "sampling",
            NodeKind::Placement => "placement",
        })
    }
}

/// What travels along an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadType {
    Texture,
    Samples,
    Placements,
}

impl fmt::Display for PayloadType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PayloadType::Texture => "texture",
            PayloadType::Samples => "sample set",
            PayloadType::Placements => "placement set",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Noise {
        #[serde(default = "default_resolution")]
        resolution: [usize; 2],
        #[serde(default)]
        noise: FbmParams,
    },
    Voronoi {
        #[serde(default = "default_resolution")]
        resolution: [usize; 2],
        sites: usize,
        mode: VoronoiMode,
    },
    /// PGM file, relative paths resolved against the pipeline document.
    File { path: PathBuf },
    Constant {
        value: f64,
        #[serde(default = "default_resolution")]
        resolution: [usize; 2],
    },
}

impl SourceSpec {
    fn check(&self) -> std::result::Result<(), String> {
        let res = |r: &[usize; 2]| {
            if r[0] == 0 || r[1] == 0 {
                Err(format!("resolution {r:?} must be at least 1x1"))
            } else {
                Ok(())
            }
        };
        match self {
            SourceSpec::Noise { resolution, noise } => {
                res(resolution)?;
                noise.validate().map_err(|e| e.to_string())
            }
            SourceSpec::Voronoi {
                resolution, sites, ..
            } => {
                res(resolution)?;
                if *sites == 0 {
                    return Err("voronoi needs at least one site".into());
                }
                Ok(())
            }
            SourceSpec::File { .. } => Ok(()),
            SourceSpec::Constant { value, resolution } => {
                res(resolution)?;
                if !(0.0..=1.0).contains(value) {
                    return Err(format!("constant {value} outside [0, 1]"));
                }
                Ok(())
            }
        }
    }

    /// Builds the texture mapped over `extent`.
    pub fn build(
        &self,
        stream: &RngStream,
        extent: Rect,
        base_dir: Option<&Path>,
    ) -> Result<Texture> {
        match self {
            SourceSpec::Noise { resolution, noise } => texture::texture_from_noise(
                resolution[0],
                resolution[1],
                noise,
                stream.seed(),
                extent,
            ),
            SourceSpec::Voronoi {
                resolution,
                sites,
                mode,
            } => texture::texture_from_voronoi(
                resolution[0],
                resolution[1],
                *sites,
                stream.seed(),
                *mode,
                extent,
            ),
            SourceSpec::File { path } => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                Texture::read_pgm(&full, extent)
            }
            SourceSpec::Constant { value, resolution } => Texture::new(
                resolution[0],
                resolution[1],
                vec![*value; resolution[0] * resolution[1]],
                extent,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingSpec {
    /// Fixed-radius sampling thinned by the density texture.
    Bridson {
        r: f64,
        #[serde(default = "default_attempts")]
        k: usize,
        #[serde(default)]
        max_count: Option<usize>,
        #[serde(default)]
        region: Option<[f64; 4]>,
    },
    /// Variable radius; the radius texture is the second input, or the
    /// inverted density when absent (dense areas get `r_min`).
    Modulated {
        r_min: f64,
        r_max: f64,
        #[serde(default = "default_attempts")]
        k: usize,
        #[serde(default)]
        max_count: Option<usize>,
        #[serde(default)]
        region: Option<[f64; 4]>,
    },
}

impl SamplingSpec {
    fn check(&self) -> std::result::Result<(), String> {
        let (radius_ok, k, region) = match self {
            SamplingSpec::Bridson { r, k, region, .. } => (r.is_finite() && *r > 0.0, *k, region),
            SamplingSpec::Modulated {
                r_min,
                r_max,
                k,
                region,
                ..
            } => (
                r_min.is_finite() && r_max.is_finite() && *r_min > 0.0 && r_min <= r_max,
                *k,
                region,
            ),
        };
        if !radius_ok {
            return Err("radius must be positive (and r_min <= r_max)".into());
        }
        if k == 0 {
            return Err("k must be >= 1".into());
        }
        if let Some([x0, y0, x1, y1]) = region {
            if !(x0 <= x1 && y0 <= y1) {
                return Err(format!("region [{x0}, {y0}, {x1}, {y1}] is inverted"));
            }
        }
        Ok(())
    }

    fn disk_params(&self, extent: Rect) -> DiskParams {
        let (radius, k, max_count, region) = match self {
            SamplingSpec::Bridson {
                r,
                k,
                max_count,
                region,
            } => (Radius::Fixed(*r), *k, *max_count, region),
            SamplingSpec::Modulated {
                r_min,
                r_max,
                k,
                max_count,
                region,
            } => (
                Radius::Modulated {
                    r_min: *r_min,
                    r_max: *r_max,
                },
                *k,
                *max_count,
                region,
            ),
        };
        let region = match region {
            Some([x0, y0, x1, y1]) => {
                extent.intersect(&Rect::new(Vec2::new(*x0, *y0), Vec2::new(*x1, *y1)))
            }
            None => extent,
        };
        DiskParams {
            radius,
            k,
            region,
            max_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSpec {
    pub prefab: String,
    /// Radians.
    #[serde(default = "default_max_twist")]
    pub max_twist: f64,
    #[serde(default = "default_scale_range")]
    pub scale_range: [f64; 2],
}

impl PlacementSpec {
    fn check(&self) -> std::result::Result<(), String> {
        if self.prefab.is_empty() {
            return Err("prefab name is empty".into());
        }
        if !(self.max_twist.is_finite() && self.max_twist >= 0.0) {
            return Err(format!("max_twist {} must be >= 0", self.max_twist));
        }
        let [lo, hi] = self.scale_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(format!(
                "scale_range [{lo}, {hi}] must satisfy 0 < lo <= hi"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeOp {
    Source(SourceSpec),
    Logic(LogicOp),
    Sampling(SamplingSpec),
    Placement(PlacementSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub op: NodeOp,
    pub inputs: Vec<String>,
}

impl NodeSpec {
    pub fn kind(&self) -> NodeKind {
        match self.op {
            NodeOp::Source(_) => NodeKind::Source,
            NodeOp::Logic(_) => NodeKind::Logic,
            NodeOp::Sampling(_) => NodeKind::Sampling,
            NodeOp::Placement(_) => NodeKind::Placement,
        }
    }

    /// Expected payload type of each input slot, and the allowed input count.
    fn input_contract(&self) -> (Vec<PayloadType>, usize, usize) {
        use PayloadType::*;
        match &self.op {
            NodeOp::Source(_) => (vec![], 0, 0),
            NodeOp::Logic(op) => (vec![Texture, Texture], op.arity(), op.arity()),
            NodeOp::Sampling(_) => (vec![Texture, Texture], 1, 2),
            NodeOp::Placement(_) => (vec![Samples, Texture], 1, 2),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineGraph {
    pub nodes: Vec<NodeSpec>,
    /// Directory used to resolve relative file sources.
    pub base_dir: Option<PathBuf>,
}

impl PipelineGraph {
    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.inputs.len()).sum()
    }

    /// Names of every prefab bound by a placement node.
    pub fn prefab_bindings(&self) -> BTreeSet<&str> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                NodeOp::Placement(p) => Some(p.prefab.as_str()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    nodes: Vec<RawNode>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    kind: String,
    #[serde(default)]
    params: Map<String, Value>,
    #[serde(default)]
    inputs: Vec<String>,
}

/// Parses a pipeline document. Unknown keys anywhere are rejected.
pub fn parse_pipeline(document: &str) -> Result<PipelineGraph> {
    let raw: RawDocument = serde_json::from_str(document).map_err(|e| Error::Parse {
        path: "<pipeline>".into(),
        line: e.line() as u64,
        message: format!("column {}: {e}", e.column()),
    })?;
    let mut seen = BTreeSet::new();
    let mut nodes = Vec::with_capacity(raw.nodes.len());
    for n in raw.nodes {
        if !seen.insert(n.id.clone()) {
            return Err(Error::DuplicateId(n.id));
        }
        let kind = NodeKind::parse(&n.kind).ok_or_else(|| Error::UnknownKind {
            node: n.id.clone(),
            kind: n.kind.clone(),
        })?;
        let params = Value::Object(n.params);
        let bad = |e: serde_json::Error| Error::Config(format!("node `{}`: {e}", n.id));
        let op = match kind {
            NodeKind::Source => NodeOp::Source(serde_json::from_value(params).map_err(bad)?),
            NodeKind::Logic => NodeOp::Logic(serde_json::from_value(params).map_err(bad)?),
            NodeKind::Sampling => NodeOp::Sampling(serde_json::from_value(params).map_err(bad)?),
            NodeKind::Placement => NodeOp::Placement(serde_json::from_value(params).map_err(bad)?),
        };
        nodes.push(NodeSpec {
            id: n.id,
            op,
            inputs: n.inputs,
        });
    }
    Ok(PipelineGraph {
        nodes,
        base_dir: None,
    })
}

/// Reads and parses a pipeline file; relative file sources resolve against
/// its directory.
pub fn load_pipeline(path: &Path) -> Result<PipelineGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut g = parse_pipeline(&text).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.display().to_string(),
            line,
            message,
        },
        other => other,
    })?;
    g.base_dir = path.parent().map(Path::to_path_buf);
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationError {
    Cycle(Vec<String>),
    DanglingInput {
        node: String,
        input: String,
    },
    Arity {
        node: String,
        kind: NodeKind,
        min: usize,
        max: usize,
        found: usize,
    },
    PayloadMismatch {
        node: String,
        input: String,
        expected: PayloadType,
        found: PayloadType,
    },
    InvalidParams {
        node: String,
        message: String,
    },
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationError::Cycle(ids) => write!(f, "cycle through [{}]", ids.join(" -> ")),
            ValidationError::DanglingInput { node, input } => {
                write!(f, "node `{node}` reads unknown input `{input}`")
            }
            ValidationError::Arity {
                node,
                kind,
                min,
                max,
                found,
            } => {
                if min == max {
                    write!(
                        f,
                        "{kind} node `{node}` takes {min} input(s), found {found}"
                    )
                } else {
                    write!(
                        f,
                        "{kind} node `{node}` takes {min}-{max} inputs, found {found}"
                    )
                }
            }
            ValidationError::PayloadMismatch {
                node,
                input,
                expected,
                found,
            } => write!(
                f,
                "node `{node}` expects a {expected} from `{input}`, got a {found}"
            ),
            ValidationError::InvalidParams { node, message } => {
                write!(f, "node `{node}`: {message}")
            }
        }
    }
}

/// Finds one cycle, listed in dependency order starting from the first node
/// (in declaration order) that lies on it.
fn find_cycle(g: &PipelineGraph, index: &HashMap<&str, usize>) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let mut mark = vec![Mark::White; g.nodes.len()];
    for root in 0..g.nodes.len() {
        if mark[root] != Mark::White {
            continue;
        }
        // Explicit stack of (node, next input slot).
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        mark[root] = Mark::Grey;
        while let Some(&mut (node, ref mut slot)) = stack.last_mut() {
            let inputs = &g.nodes[node].inputs;
            if *slot < inputs.len() {
                let next = index.get(inputs[*slot].as_str()).copied();
                *slot += 1;
                let Some(next) = next else { continue };
                match mark[next] {
                    Mark::White => {
                        mark[next] = Mark::Grey;
                        stack.push((next, 0));
                    }
                    Mark::Grey => {
                        let start = stack.iter().position(|&(n, _)| n == next).unwrap();
                        return Some(
                            stack[start..]
                                .iter()
                                .map(|&(n, _)| g.nodes[n].id.clone())
                                .collect(),
                        );
                    }
                    Mark::Black => {}
                }
            } else {
                mark[node] = Mark::Black;
                stack.pop();
            }
        }
    }
    None
}

/// Structural checks: cycles, dangling inputs, arity, payload types and
/// parameter ranges. All problems are returned, not just the first.
pub fn validate(g: &PipelineGraph) -> std::result::Result<(), Vec<ValidationError>> {
    let index: HashMap<&str, usize> = g
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let mut errors = Vec::new();
    if let Some(cycle) = find_cycle(g, &index) {
        errors.push(ValidationError::Cycle(cycle));
    }
    for n in &g.nodes {
        let (slots, min, max) = n.input_contract();
        if n.inputs.len() < min || n.inputs.len() > max {
            errors.push(ValidationError::Arity {
                node: n.id.clone(),
                kind: n.kind(),
                min,
                max,
                found: n.inputs.len(),
            });
        }
        for (i, input) in n.inputs.iter().enumerate() {
            match index.get(input.as_str()) {
                None => errors.push(ValidationError::DanglingInput {
                    node: n.id.clone(),
                    input: input.clone(),
                }),
                Some(&j) => {
                    let found = g.nodes[j].kind().output();
                    if let Some(&expected) = slots.get(i) {
                        if expected != found {
                            errors.push(ValidationError::PayloadMismatch {
                                node: n.id.clone(),
                                input: input.clone(),
                                expected,
                                found,
                            });
                        }
                    }
                }
            }
        }
        let checked = match &n.op {
            NodeOp::Source(s) => s.check(),
            NodeOp::Logic(LogicOp::Threshold { t }) if !t.is_finite() => {
                Err("threshold must be finite".into())
            }
            NodeOp::Logic(_) => Ok(()),
            NodeOp::Sampling(s) => s.check(),
            NodeOp::Placement(p) => p.check(),
        };
        if let Err(message) = checked {
            errors.push(ValidationError::InvalidParams {
                node: n.id.clone(),
                message,
            });
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// Evaluation levels: each node sits one level above its deepest input.
/// Within a level nodes are ordered by id, so the schedule does not depend on
/// declaration order.
pub fn topological_levels(g: &PipelineGraph) -> Vec<Vec<usize>> {
    let index: HashMap<&str, usize> = g
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let mut level: Vec<Option<usize>> = vec![None; g.nodes.len()];
    fn depth(
        i: usize,
        g: &PipelineGraph,
        index: &HashMap<&str, usize>,
        level: &mut Vec<Option<usize>>,
    ) -> usize {
        if let Some(l) = level[i] {
            return l;
        }
        let l = g.nodes[i]
            .inputs
            .iter()
            .map(|inp| depth(index[inp.as_str()], g, index, level) + 1)
            .max()
            .unwrap_or(0);
        level[i] = Some(l);
        l
    }
    for i in 0..g.nodes.len() {
        depth(i, g, &index, &mut level);
    }
    let mut by_level: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, l) in level.iter().enumerate() {
        by_level.entry(l.unwrap()).or_default().push(i);
    }
    by_level
        .into_values()
        .map(|mut v| {
            v.sort_by(|&a, &b| g.nodes[a].id.cmp(&g.nodes[b].id));
            v
        })
        .collect()
}

/// Instancing parameters of one prefab copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    pub prefab_name: String,
    /// Ground contact point; `z` is the terrain height there.
    pub position: Vec3,
    /// Rotation about +z, radians.
    pub spin: f64,
    /// Horizontal unit axis the up direction is tilted about.
    pub twist_axis: Vec2,
    /// Tilt angle, radians.
    pub twist_angle: f64,
    pub scale: f64,
}

impl InstanceParams {
    pub fn identity(prefab_name: &str) -> Self {
        InstanceParams {
            prefab_name: prefab_name.to_string(),
            position: Vec3::ZERO,
            spin: 0.0,
            twist_axis: Vec2::new(1.0, 0.0),
            twist_angle: 0.0,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementSet {
    pub node_id: String,
    pub prefab: String,
    /// Stream lineage the node drew from.
    pub lineage: Vec<String>,
    pub instances: Vec<InstanceParams>,
}

pub const PLACEMENT_CSV_HEADER: &str =
    "node,prefab,x,y,z,spin,twist_axis_x,twist_axis_y,twist_angle,scale";

/// CSV with one row per instance, in `(node id, instance index)` order.
pub fn placements_to_csv(sets: &[PlacementSet]) -> String {
    let mut s = String::from(PLACEMENT_CSV_HEADER);
    s.push('\n');
    for set in sets {
        for i in &set.instances {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                set.node_id,
                i.prefab_name,
                i.position.x,
                i.position.y,
                i.position.z,
                i.spin,
                i.twist_axis.x,
                i.twist_axis.y,
                i.twist_angle,
                i.scale
            );
        }
    }
    s
}

#[derive(Debug, Clone)]
enum Payload {
    Texture(Arc<Texture>),
    Samples(Arc<SampleSet>),
    Placements(PlacementSet),
}

impl Payload {
    fn texture(&self) -> &Texture {
        match self {
            Payload::Texture(t) => t,
            _ => unreachable!("payload types are checked by validate"),
        }
    }

    fn samples(&self) -> &SampleSet {
        match self {
            Payload::Samples(s) => s,
            _ => unreachable!("payload types are checked by validate"),
        }
    }
}

fn eval_node(
    n: &NodeSpec,
    inputs: Vec<&Payload>,
    terrain: &Heightmap,
    stream: &RngStream,
    base_dir: Option<&Path>,
) -> Result<Payload> {
    let extent = terrain.extent();
    Ok(match &n.op {
        NodeOp::Source(spec) => Payload::Texture(Arc::new(spec.build(stream, extent, base_dir)?)),
        NodeOp::Logic(op) => {
            let a = inputs[0].texture();
            let b = inputs.get(1).map(|p| p.texture());
            Payload::Texture(Arc::new(texture::texture_logic(*op, a, b)?))
        }
        NodeOp::Sampling(spec) => {
            let density = inputs[0].texture();
            let params = spec.disk_params(extent);
            let mut draw = stream.derive("disk");
            let samples = match spec {
                SamplingSpec::Bridson { .. } => {
                    let raw = sampling::bridson(&params, &mut draw)?;
                    sampling::spawn_filter(&raw, density, &mut stream.derive("density"))
                }
                SamplingSpec::Modulated { .. } => match inputs.get(1) {
                    Some(m) => sampling::modulated_bridson(&params, m.texture(), &mut draw)?,
                    None => {
                        let inverted = texture::texture_logic(LogicOp::Invert, density, None)?;
                        sampling::modulated_bridson(&params, &inverted, &mut draw)?
                    }
                },
            };
            Payload::Samples(Arc::new(samples))
        }
        NodeOp::Placement(spec) => {
            let samples = inputs[0].samples();
            let kept;
            let samples = match inputs.get(1) {
                Some(spawn) => {
                    kept = sampling::spawn_filter(
                        samples,
                        spawn.texture(),
                        &mut stream.derive("spawn"),
                    );
                    &kept
                }
                None => samples,
            };
            let mut t = stream.derive("transform");
            let [s_lo, s_hi] = spec.scale_range;
            let instances = samples
                .points
                .iter()
                .map(|p| {
                    let p = extent.clamp(*p);
                    let spin = t.range(0.0, TAU);
                    let axis_angle = t.range(0.0, TAU);
                    let twist_angle = t.range(0.0, spec.max_twist);
                    let scale = t.range(s_lo, s_hi);
                    let z = terrain.height_at(p.x, p.y)?;
                    Ok(InstanceParams {
                        prefab_name: spec.prefab.clone(),
                        position: p.extend(z),
                        spin,
                        twist_axis: Vec2::new(axis_angle.cos(), axis_angle.sin()),
                        twist_angle,
                        scale,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Payload::Placements(PlacementSet {
                node_id: n.id.clone(),
                prefab: spec.prefab.clone(),
                lineage: stream.lineage(),
                instances,
            })
        }
    })
}

/// Evaluates a validated pipeline over `terrain`. Node `id` draws from
/// `stream.derive(id)`; independent nodes of one level run in parallel.
/// Returns one placement set per placement node, ordered by node id.
pub fn evaluate(
    g: &PipelineGraph,
    terrain: &Heightmap,
    stream: &RngStream,
    registry: &PrefabRegistry,
) -> Result<Vec<PlacementSet>> {
    validate(g).map_err(Error::InvalidPipeline)?;
    for n in &g.nodes {
        if let NodeOp::Placement(p) = &n.op {
            if !registry.contains_key(&p.prefab) {
                return Err(Error::MissingPrefab {
                    node: n.id.clone(),
                    prefab: p.prefab.clone(),
                });
            }
        }
    }
    let mut results: HashMap<&str, Payload> = HashMap::new();
    for level in topological_levels(g) {
        let computed: Vec<(usize, Result<Payload>)> = level
            .par_iter()
            .map(|&i| {
                let n = &g.nodes[i];
                let inputs = n.inputs.iter().map(|id| &results[id.as_str()]).collect();
                (
                    i,
                    eval_node(
                        n,
                        inputs,
                        terrain,
                        &stream.derive(&n.id),
                        g.base_dir.as_deref(),
                    ),
                )
            })
            .collect();
        for (i, r) in computed {
            results.insert(g.nodes[i].id.as_str(), r?);
        }
    }
    let mut sets: Vec<PlacementSet> = results
        .into_values()
        .filter_map(|p| match p {
            Payload::Placements(s) => Some(s),
            _ => None,
        })
        .collect();
    sets.sort_by(|a, b| a.node_id.cmp(&b.node_id));
    Ok(sets)
}
