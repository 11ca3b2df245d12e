//! `forge` command line. Exit status: 0 success, 1 invalid input or usage,
//! 2 I/O failure. Files written by a failing command are removed.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use serde_json::Value;

use crate::cloud::{Label, LabeledPointCloud};
use crate::config::{self, build_scene, PipelineRef, SceneConfig};
use crate::dataset::{self, Category, DatasetConfig, DatasetMode};
use crate::error::{Error, Result};
use crate::geom::{Aabb, Rect};
use crate::grass::{self, GrassParams};
use crate::metrics::{self, MetricsReport};
use crate::pipeline::{self, placements_to_csv};
use crate::rng::{RngStream, Seed};
use crate::scene::{self, PrefabRegistry, TreeShape};
use crate::sensor::{self, OcclusionParams};
use crate::terrain::{generate_heightmap, terrain_points, FbmParams, Heightmap, TerrainParams};
use crate::texture::{self, LogicOp, Texture, VoronoiMode};

#[derive(Debug, Parser)]
#[command(
    name = "forge",
    version,
    about = "Procedural forest point-cloud synthesis"
)]
pub struct Cli {
    /// Scene seed; the only source of randomness.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a heightmap.
    Terrain(TerrainArgs),
    /// Create or combine textures.
    #[command(subcommand)]
    Texture(TextureCommand),
    /// Run or check a placement pipeline.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Generate grass blades over a heightmap.
    Grass(GrassArgs),
    /// Assemble scenes.
    #[command(subcommand)]
    Scene(SceneCommand),
    /// Keep only points visible from above.
    Occlude(OccludeArgs),
    /// Build training datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Build the shipped demo scene end to end.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct TerrainArgs {
    /// Terrain parameters (JSON); defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Heightmap output.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write jittered ground samples as a labeled CSV.
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub spacing: f64,
}

#[derive(Debug, Subcommand)]
pub enum TextureCommand {
    /// Fractal noise; one pixel is one unit of noise space.
    Noise {
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        /// Noise parameters (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        frequency: Option<f64>,
        #[arg(long)]
        octaves: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    Voronoi {
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 16)]
        sites: usize,
        #[arg(long, value_enum, default_value_t = VoronoiArg::Distance)]
        mode: VoronoiArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-pixel logic on one or two PGM textures.
    Apply {
        #[arg(long, value_enum)]
        op: OpArg,
        /// Cut-off for `threshold`.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VoronoiArg {
    Distance,
    Cellular,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OpArg {
    Invert,
    Multiply,
    Min,
    Max,
    Threshold,
    Add,
}

#[derive(Debug, Subcommand)]
pub enum PipelineCommand {
    /// Evaluate a pipeline and write placements as CSV.
    Run {
        #[arg(long)]
        pipeline: PathBuf,
        /// Scene config supplying terrain and prefabs.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Heightmap to place on (overrides the config terrain).
        #[arg(long)]
        terrain: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check structure and parameters without evaluating.
    Validate {
        #[arg(long)]
        pipeline: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct GrassArgs {
    #[arg(long)]
    pub terrain: PathBuf,
    /// PGM density texture, stretched over the terrain.
    #[arg(long)]
    pub density: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub tile: usize,
    #[arg(long, default_value_t = 1024)]
    pub max_per_tile: usize,
    #[arg(long, default_value_t = 4)]
    pub segments: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SceneCommand {
    Build {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write `scene.ply`.
        #[arg(long)]
        ply: bool,
    },
}

#[derive(Debug, Args)]
pub struct OccludeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = sensor::DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Meters above the cloud top, or `auto`.
    #[arg(long, default_value = "auto")]
    pub altitude: String,
    /// `single` or survey spacing `sx,sy`.
    #[arg(long, default_value = "single")]
    pub grid: String,
    /// Gaussian noise sigma applied after occlusion.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Lidar,
    Camera,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    Build {
        /// Glob of scene CSV files.
        #[arg(long)]
        scenes: String,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        target_size: Option<usize>,
        /// Dataset parameters (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV with a `category` column.
    #[arg(long)]
    pub truth: PathBuf,
    /// One category per line (name or code).
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, value_enum)]
    pub collapse: Option<CollapseArg>,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CollapseArg {
    Tree,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long)]
    pub out: PathBuf,
}

/// Paths written by the running command; deleted unless committed.
#[derive(Default)]
struct Outputs {
    created: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn file(&mut self, p: &Path) -> PathBuf {
        self.created.push(p.to_path_buf());
        p.to_path_buf()
    }

    /// Creates `p`; it is removed on failure only if it did not exist.
    fn dir(&mut self, p: &Path) -> Result<PathBuf> {
        if !p.exists() {
            self.created.push(p.to_path_buf());
        }
        fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
        Ok(p.to_path_buf())
    }

    fn write(&mut self, p: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
        let p = self.file(p);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in self.created.iter().rev() {
            let _ = if p.is_dir() {
                fs::remove_dir_all(p)
            } else {
                fs::remove_file(p)
            };
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn to_json(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.threads {
        Some(0) => Err(Error::Argument("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Argument(e.to_string()))
            .and_then(|pool| pool.install(|| execute(&cli))),
        None => execute(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let mut out = Outputs::default();
    let seed = cli.seed.map(Seed);
    match &cli.command {
        Command::Terrain(a) => terrain_cmd(a, seed.unwrap_or_default(), &mut out)?,
        Command::Texture(t) => texture_cmd(t, seed.unwrap_or_default(), &mut out)?,
        Command::Pipeline(p) => pipeline_cmd(p, seed, &mut out)?,
        Command::Grass(g) => grass_cmd(g, seed.unwrap_or_default(), &mut out)?,
        Command::Scene(SceneCommand::Build {
            config,
            out: dir,
            ply,
        }) => {
            let cfg = SceneConfig::load(config)?;
            let seed = seed.or(cfg.seed).unwrap_or_default();
            scene_build(&cfg, config.parent(), seed, dir, *ply, &mut out)?;
        }
        Command::Occlude(a) => occlude_cmd(a, seed.unwrap_or_default(), &mut out)?,
        Command::Dataset(DatasetCommand::Build {
            scenes,
            mode,
            target_size,
            config,
            out: dir,
        }) => {
            let mut cfg: DatasetConfig = match config {
                Some(p) => read_json(p)?,
                None => DatasetConfig::default(),
            };
            if let Some(m) = mode {
                cfg.mode = match m {
                    ModeArg::Lidar => DatasetMode::Lidar,
                    ModeArg::Camera => DatasetMode::Camera,
                };
            }
            if let Some(t) = target_size {
                cfg.target_size = *t;
            }
            let paths = expand_glob(scenes)?;
            out.dir(dir)?;
            let m = dataset::build_dataset(&paths, &cfg, seed.unwrap_or_default(), dir)?;
            info!("{} subclouds, {} points", m.subclouds.len(), m.total_points);
        }
        Command::Eval(a) => eval_cmd(a, &mut out)?,
        Command::Demo(a) => demo(seed.unwrap_or_default(), &a.out, &mut out)?,
    }
    out.committed = true;
    Ok(())
}

fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>> {
    let entries =
        glob::glob(pattern).map_err(|e| Error::Argument(format!("bad glob `{pattern}`: {e}")))?;
    let mut paths = Vec::new();
    for e in entries {
        paths.push(e.map_err(|e| Error::io(e.path(), std::io::Error::other(e.to_string())))?);
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Argument(format!("no scene files match `{pattern}`")));
    }
    Ok(paths)
}

fn terrain_cmd(a: &TerrainArgs, seed: Seed, out: &mut Outputs) -> Result<()> {
    let params: TerrainParams = match &a.config {
        Some(p) => read_json(p)?,
        None => TerrainParams::default(),
    };
    let hm = generate_heightmap(&params, seed)?;
    out.write(&a.out, hm.to_bytes())?;
    if let Some(p) = &a.points {
        let cloud = terrain_points(&hm, a.spacing, seed)?;
        out.write(p, cloud.to_csv_string())?;
    }
    info!(
        "heightmap {0}x{0}, max height {1:.3} m",
        hm.resolution(),
        hm.max_height()
    );
    Ok(())
}

fn texture_cmd(t: &TextureCommand, seed: Seed, out: &mut Outputs) -> Result<()> {
    let (tex, path) = match t {
        TextureCommand::Noise {
            width,
            height,
            config,
            frequency,
            octaves,
            out: path,
        } => {
            let mut p: FbmParams = match config {
                Some(c) => read_json(c)?,
                None => FbmParams {
                    amplitude: 1.0,
                    base_frequency: 0.05,
                    seed_label: "texture".into(),
                    ..FbmParams::default()
                },
            };
            if let Some(f) = frequency {
                p.base_frequency = *f;
            }
            if let Some(o) = octaves {
                p.octaves = *o;
            }
            let extent = Rect::from_size(*width as f64, *height as f64);
            (
                texture::texture_from_noise(*width, *height, &p, seed, extent)?,
                path,
            )
        }
        TextureCommand::Voronoi {
            width,
            height,
            sites,
            mode,
            out: path,
        } => {
            let mode = match mode {
                VoronoiArg::Distance => VoronoiMode::Distance,
                VoronoiArg::Cellular => VoronoiMode::Cellular,
            };
            let extent = Rect::from_size(*width as f64, *height as f64);
            (
                texture::texture_from_voronoi(*width, *height, *sites, seed, mode, extent)?,
                path,
            )
        }
        TextureCommand::Apply {
            op,
            threshold,
            a,
            b,
            out: path,
        } => {
            let unit = Rect::from_size(1.0, 1.0);
            let op = match op {
                OpArg::Invert => LogicOp::Invert,
                OpArg::Multiply => LogicOp::Multiply,
                OpArg::Min => LogicOp::Min,
                OpArg::Max => LogicOp::Max,
                OpArg::Add => LogicOp::AddClamped,
                OpArg::Threshold => LogicOp::Threshold {
                    t: threshold
                        .ok_or_else(|| Error::Argument("threshold needs --threshold".into()))?,
                },
            };
            let ta = Texture::read_pgm(a, unit)?;
            let tb = b.as_ref().map(|p| Texture::read_pgm(p, unit)).transpose()?;
            (texture::texture_logic(op, &ta, tb.as_ref())?, path)
        }
    };
    out.write(path, tex.to_pgm())
}

fn default_registry(g: &pipeline::PipelineGraph) -> Result<PrefabRegistry> {
    g.prefab_bindings()
        .into_iter()
        .map(|name| {
            let mut s = RngStream::new(Seed(0)).derive("prefabs").derive(name);
            Ok((
                name.to_string(),
                scene::procedural_tree(name, &TreeShape::default(), 64, &mut s)?,
            ))
        })
        .collect()
}

fn pipeline_cmd(p: &PipelineCommand, seed: Option<Seed>, out: &mut Outputs) -> Result<()> {
    match p {
        PipelineCommand::Validate { pipeline } => {
            let g = pipeline::load_pipeline(pipeline)?;
            pipeline::validate(&g).map_err(Error::InvalidPipeline)?;
            println!("valid: {} nodes, {} edges", g.nodes.len(), g.edge_count());
        }
        PipelineCommand::Run {
            pipeline,
            config,
            terrain,
            out: path,
        } => {
            let g = pipeline::load_pipeline(pipeline)?;
            let cfg = config.as_ref().map(|c| SceneConfig::load(c)).transpose()?;
            let seed = seed
                .or(cfg.as_ref().and_then(|c| c.seed))
                .unwrap_or_default();
            let root = RngStream::new(seed);
            let hm = match (terrain, &cfg) {
                (Some(t), _) => Heightmap::read(t)?,
                (None, Some(c)) => generate_heightmap(&c.terrain, seed)?,
                (None, None) => generate_heightmap(&TerrainParams::default(), seed)?,
            };
            let registry = match (&cfg, config) {
                (Some(c), Some(cp)) => {
                    scene::build_registry(&c.prefabs, cp.parent(), &root.derive("prefabs"))?
                }
                _ => default_registry(&g)?,
            };
            let sets = pipeline::evaluate(&g, &hm, &root.derive("pipeline"), &registry)?;
            for s in &sets {
                info!(
                    "{}: {} instances of {}",
                    s.node_id,
                    s.instances.len(),
                    s.prefab
                );
            }
            out.write(path, placements_to_csv(&sets))?;
        }
    }
    Ok(())
}

fn grass_cmd(a: &GrassArgs, seed: Seed, out: &mut Outputs) -> Result<()> {
    let hm = Heightmap::read(&a.terrain)?;
    let density = Texture::read_pgm(&a.density, hm.extent())?;
    let params = GrassParams {
        tile_size: a.tile,
        max_per_tile: a.max_per_tile,
        segments: a.segments,
        ..GrassParams::default()
    };
    params.validate()?;
    let anchors = grass::sample_anchors(&density, a.tile, a.max_per_tile)?;
    let blades = grass::instantiate_grass(
        &anchors,
        &density,
        &hm,
        &params,
        &RngStream::new(seed).derive("grass").derive("blades"),
    )?;
    info!(
        "{} blades, {} vertices each",
        blades.len(),
        params.vertices_per_blade()
    );
    out.write(&a.out, grass::blades_to_cloud(&blades).to_csv_string())
}

#[derive(Serialize)]
struct SceneManifest<'a> {
    command: &'a str,
    seed: Seed,
    config: &'a SceneConfig,
    /// Resolved pipeline document, so the manifest alone can reproduce it.
    pipeline_document: Option<Value>,
    files: Vec<&'a str>,
    terrain_resolution: usize,
    instances: BTreeMap<String, usize>,
    grass_blades: usize,
    points: usize,
    labels: BTreeMap<Label, usize>,
}

fn histogram(cloud: &LabeledPointCloud) -> BTreeMap<Label, usize> {
    let h = cloud.label_histogram();
    Label::ALL
        .iter()
        .map(|&l| (l, h[l.code() as usize]))
        .collect()
}

const SCENE_FILES: [&str; 3] = ["terrain.hm", "placements.csv", "scene.csv"];

fn scene_build(
    cfg: &SceneConfig,
    base: Option<&Path>,
    seed: Seed,
    dir: &Path,
    ply: bool,
    out: &mut Outputs,
) -> Result<LabeledPointCloud> {
    let build = build_scene(cfg, base, seed)?;
    out.dir(dir)?;
    out.write(&dir.join(SCENE_FILES[0]), build.heightmap.to_bytes())?;
    out.write(
        &dir.join(SCENE_FILES[1]),
        placements_to_csv(&build.placements),
    )?;
    out.write(&dir.join(SCENE_FILES[2]), build.cloud.to_csv_string())?;
    let mut files = SCENE_FILES.to_vec();
    if ply {
        build.cloud.export_ply(&out.file(&dir.join("scene.ply")))?;
        files.push("scene.ply");
    }
    let manifest = SceneManifest {
        command: "scene build",
        seed,
        config: cfg,
        pipeline_document: cfg.pipeline_document(base)?.map(|(v, _)| v),
        files,
        terrain_resolution: build.heightmap.resolution(),
        instances: build
            .placements
            .iter()
            .map(|s| (s.node_id.clone(), s.instances.len()))
            .collect(),
        grass_blades: build.blade_count,
        points: build.cloud.len(),
        labels: histogram(&build.cloud),
    };
    out.write(&dir.join("manifest.json"), to_json(&manifest))?;
    info!(
        "scene: {} points, {} instances, {} blades",
        build.cloud.len(),
        manifest.instances.values().sum::<usize>(),
        build.blade_count
    );
    Ok(build.cloud)
}

fn parse_altitude(s: &str) -> Result<f64> {
    if s == "auto" {
        return Ok(sensor::DEFAULT_ALTITUDE);
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Argument(format!("altitude `{s}` is not a number or `auto`")))
}

fn viewpoints(
    cloud: &LabeledPointCloud,
    altitude: f64,
    grid: &str,
) -> Result<Vec<crate::geom::Vec3>> {
    let Some(aabb) = Aabb::from_points(cloud.records().iter().map(|r| r.position)) else {
        return Ok(Vec::new());
    };
    if grid == "single" {
        return Ok(vec![
            sensor::centered_viewpoint(cloud, altitude).expect("non-empty")
        ]);
    }
    let parts: Vec<f64> = grid
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Argument(format!("grid `{grid}` is not `single` or `sx,sy`")))?;
    let [sx, sy] = parts[..] else {
        return Err(Error::Argument(format!(
            "grid `{grid}` is not `single` or `sx,sy`"
        )));
    };
    sensor::survey_viewpoints(&aabb, altitude, sx, sy)
}

fn occlude_cmd(a: &OccludeArgs, seed: Seed, out: &mut Outputs) -> Result<()> {
    let cloud = LabeledPointCloud::import_csv(&a.input)?;
    let altitude = parse_altitude(&a.altitude)?;
    let vps = viewpoints(&cloud, altitude, &a.grid)?;
    let visible = if cloud.is_empty() {
        cloud
    } else {
        sensor::occlude(
            &cloud,
            &OcclusionParams {
                gamma: a.gamma,
                viewpoints: vps,
            },
        )?
    };
    let noisy = sensor::add_noise(&visible, a.noise, &RngStream::new(seed).derive("noise"))?;
    info!(
        "{} of {} points visible",
        noisy.len(),
        LabeledPointCloud::import_csv(&a.input)?.len()
    );
    out.write(&a.out, noisy.to_csv_string())
}

fn parse_category(s: &str, classes: usize, source: &Path, line: u64) -> Result<usize> {
    let s = s.trim();
    let code = match s.parse::<usize>() {
        Ok(c) => c,
        Err(_) => s
            .parse::<Category>()
            .map_err(|_| Error::Parse {
                path: source.display().to_string(),
                line,
                message: format!("unknown category `{s}`"),
            })?
            .code(),
    };
    if code >= classes {
        return Err(Error::Parse {
            path: source.display().to_string(),
            line,
            message: format!("category {code} outside [0, {classes})"),
        });
    }
    Ok(code)
}

fn read_truth(path: &Path, classes: usize) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let col = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .position(|h| h == "category")
        .ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "no `category` column".into(),
        })?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        out.push(parse_category(
            row.get(col).unwrap_or(""),
            classes,
            path,
            line,
        )?);
    }
    Ok(out)
}

fn read_pred(path: &Path, classes: usize) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_category(l, classes, path, i as u64 + 1))
        .collect()
}

fn eval_cmd(a: &EvalArgs, out: &mut Outputs) -> Result<()> {
    let truth = read_truth(&a.truth, a.classes)?;
    let pred = read_pred(&a.pred, a.classes)?;
    let mut m = metrics::confusion(&truth, &pred, a.classes)?;
    if a.classes == 4 {
        m.classes = Category::ALL.iter().map(|c| c.name().to_string()).collect();
    }
    let mut report = MetricsReport::new(&m)?;
    if let Some(CollapseArg::Tree) = a.collapse {
        if a.classes != 4 {
            return Err(Error::Argument("--collapse tree needs --classes 4".into()));
        }
        report.collapsed = Some(Box::new(MetricsReport::new(&metrics::collapse_tree(&m)?)?));
    }
    print!("{}", report.to_text());
    if let Some(p) = &a.json {
        out.write(p, to_json(&report))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct DemoManifest {
    command: &'static str,
    seed: Seed,
    gamma: f64,
    altitude: f64,
    scene_points: usize,
    occluded_points: usize,
    datasets: BTreeMap<&'static str, usize>,
}

/// Builds the shipped demo under `dir`: config copies, scene files,
/// a top-down occluded cloud, and lidar-like and camera-like datasets.
fn demo(seed: Seed, dir: &Path, out: &mut Outputs) -> Result<()> {
    let cfg = SceneConfig::parse(config::demo::SCENE_JSON, "demo scene")?;
    out.dir(dir)?;
    let conf_dir = out.dir(&dir.join("config"))?;
    out.write(&conf_dir.join("scene.json"), config::demo::SCENE_JSON)?;
    out.write(
        &conf_dir.join(config::demo::PIPELINE_FILE),
        config::demo::PIPELINE_JSON,
    )?;
    debug_assert!(matches!(cfg.pipeline, Some(PipelineRef::Path(_))));

    let scene_dir = dir.join("scene");
    let cloud = scene_build(&cfg, Some(&conf_dir), seed, &scene_dir, false, out)?;

    let occluded = sensor::occlude(
        &cloud,
        &OcclusionParams {
            gamma: cfg.dataset.gamma,
            viewpoints: vec![
                sensor::centered_viewpoint(&cloud, cfg.dataset.altitude).expect("non-empty scene")
            ],
        },
    )?;
    out.write(&dir.join("occluded.csv"), occluded.to_csv_string())?;

    let scene_csv = scene_dir.join(SCENE_FILES[2]);
    let mut datasets = BTreeMap::new();
    for (name, mode) in [
        ("lidar", DatasetMode::Lidar),
        ("camera", DatasetMode::Camera),
    ] {
        let ds_dir = out.dir(&dir.join("dataset").join(name))?;
        let ds_cfg = DatasetConfig {
            mode,
            ..cfg.dataset.clone()
        };
        let m = dataset::build_dataset(std::slice::from_ref(&scene_csv), &ds_cfg, seed, &ds_dir)?;
        datasets.insert(name, m.subclouds.len());
    }
    let manifest = DemoManifest {
        command: "demo",
        seed,
        gamma: cfg.dataset.gamma,
        altitude: cfg.dataset.altitude,
        scene_points: cloud.len(),
        occluded_points: occluded.len(),
        datasets,
    };
    out.write(&dir.join("manifest.json"), to_json(&manifest))?;
    info!(
        "demo: {} points, {} visible from above",
        cloud.len(),
        occluded.len()
    );
    Ok(())
}
