//! Training datasets from scene clouds: four-category labels, k-means
//! partitioning in xy, fixed-size subclouds, and a manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{Label, LabeledPointCloud};
use crate::error::{Error, Result};
use crate::geom::{Vec2, Vec3};
use crate::rng::{RngStream, Seed};
use crate::sensor::{self, OcclusionParams};

pub const SUBCLOUD_CSV_HEADER: &str = "x,y,z,category";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Terrain = 0,
    Trunk = 1,
    Canopy = 2,
    Understorey = 3,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Terrain,
        Category::Trunk,
        Category::Canopy,
        Category::Understorey,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Terrain => "terrain",
            Category::Trunk => "trunk",
            Category::Canopy => "canopy",
            Category::Understorey => "understorey",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// Total map from scene labels to categories. Serialized as a
/// label-to-category object; entries left out keep their default.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryMap([Category; 9]);

impl Default for CategoryMap {
    fn default() -> Self {
        use Category::*;
        // terrain, trunk, canopy, branches, bushes, understorey, grass, cactus, deadwood
        CategoryMap([
            Terrain,
            Trunk,
            Canopy,
            Canopy,
            Understorey,
            Understorey,
            Understorey,
            Understorey,
            Understorey,
        ])
    }
}

impl CategoryMap {
    pub fn map(&self, l: Label) -> Category {
        self.0[l.code() as usize]
    }

    pub fn with(mut self, l: Label, c: Category) -> Self {
        self.0[l.code() as usize] = c;
        self
    }
}

impl Serialize for CategoryMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let m: BTreeMap<Label, Category> = Label::ALL.iter().map(|&l| (l, self.map(l))).collect();
        m.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CategoryMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = BTreeMap::<Label, Category>::deserialize(d)?;
        Ok(m.into_iter()
            .fold(CategoryMap::default(), |acc, (l, c)| acc.with(l, c)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec2>,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
}

impl KMeans {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap_or(&0.0)
    }
}

fn d2(a: Vec2, b: Vec2) -> f64 {
    let d = a - b;
    d.dot(d)
}

fn nearest(p: Vec2, centroids: &[Vec2]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &c) in centroids.iter().enumerate() {
        let d = d2(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn kmeans_pp(points: &[Vec2], k: usize, stream: &mut RngStream) -> Vec<Vec2> {
    let mut centroids = vec![points[stream.index(points.len())]];
    let mut dist: Vec<f64> = points.iter().map(|&p| d2(p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = stream.unit() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in dist.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave the target just past the last bin
            chosen.unwrap_or_else(|| dist.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            stream.index(points.len())
        };
        let c = points[pick];
        centroids.push(c);
        dist.par_iter_mut()
            .zip(points)
            .for_each(|(d, &p)| *d = d.min(d2(p, c)));
    }
    centroids
}

fn assign(points: &[Vec2], centroids: &[Vec2]) -> (Vec<usize>, Vec<f64>) {
    points.par_iter().map(|&p| nearest(p, centroids)).unzip()
}

/// Lloyd iterations from a k-means++ start. Stops once no centroid moves by
/// `tol` or more, or after `max_iter` updates. A cluster left empty is
/// re-seeded at the point farthest from its current centroid.
pub fn kmeans_xy(
    points: &[Vec2],
    k: usize,
    max_iter: usize,
    tol: f64,
    stream: &mut RngStream,
) -> Result<KMeans> {
    if k == 0 || k > points.len() {
        return Err(Error::Argument(format!(
            "k = {k} must be in [1, {}]",
            points.len()
        )));
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::Argument(format!("tolerance {tol} must be >= 0")));
    }
    let mut centroids = kmeans_pp(points, k, stream);
    let mut history = Vec::new();
    let (mut assignments, mut dists) = assign(points, &centroids);
    history.push(dists.iter().sum::<f64>());
    for _ in 0..max_iter {
        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        let mut taken = BTreeSet::new();
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..points.len())
                .filter(|i| !taken.contains(i) && counts[assignments[*i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = far {
                taken.insert(i);
                counts[assignments[i]] -= 1;
                assignments[i] = c;
                dists[i] = 0.0;
                counts[c] = 1;
            }
        }
        let mut sums = vec![Vec2::ZERO; k];
        for (p, &a) in points.iter().zip(&assignments) {
            sums[a] += *p;
        }
        let mut moved = 0.0f64;
        for c in 0..k {
            if counts[c] > 0 {
                let next = sums[c] / counts[c] as f64;
                moved = moved.max(next.distance(centroids[c]));
                centroids[c] = next;
            }
        }
        (assignments, dists) = assign(points, &centroids);
        let inertia = dists.iter().sum::<f64>();
        let prev = *history.last().unwrap();
        debug_assert!(
            inertia <= prev * (1.0 + 1e-12) + 1e-300,
            "inertia rose from {prev} to {inertia}"
        );
        history.push(inertia);
        if moved < tol {
            break;
        }
    }
    Ok(KMeans {
        assignments,
        centroids,
        inertia_history: history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subcloud {
    pub cluster: usize,
    /// Indices into the partitioned cloud, ascending.
    pub indices: Vec<usize>,
    pub points: Vec<Vec3>,
    pub categories: Vec<Category>,
    /// Subtracted before scaling; zero until normalized.
    pub centroid: Vec3,
    /// Divisor applied after centering; one until normalized.
    pub scale: f64,
}

impl Subcloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn histogram(&self) -> [usize; 4] {
        let mut h = [0; 4];
        for c in &self.categories {
            h[c.code()] += 1;
        }
        h
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::with_capacity(40 * (self.len() + 1));
        s.push_str(SUBCLOUD_CSV_HEADER);
        s.push('\n');
        for (p, c) in self.points.iter().zip(&self.categories) {
            let _ = writeln!(s, "{:.6},{:.6},{:.6},{}", p.x, p.y, p.z, c);
        }
        s
    }
}

/// Centers on the centroid and divides by the largest remaining norm.
/// Composes with any earlier normalization.
pub fn normalize_subcloud(sc: &Subcloud) -> Result<Subcloud> {
    if sc.is_empty() {
        return Err(Error::Argument("cannot normalize an empty subcloud".into()));
    }
    let n = sc.len() as f64;
    let c = sc.points.iter().fold(Vec3::ZERO, |a, &p| a + p) / n;
    let max = sc
        .points
        .iter()
        .map(|&p| (p - c).length())
        .fold(0.0, f64::max);
    let s = if max > 0.0 { max } else { 1.0 };
    Ok(Subcloud {
        points: sc.points.iter().map(|&p| (p - c) / s).collect(),
        centroid: sc.centroid + c * sc.scale,
        scale: sc.scale * s,
        ..sc.clone()
    })
}

pub fn denormalize(sc: &Subcloud) -> Subcloud {
    Subcloud {
        points: sc
            .points
            .iter()
            .map(|&p| p * sc.scale + sc.centroid)
            .collect(),
        centroid: Vec3::ZERO,
        scale: 1.0,
        ..sc.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansParams {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

/// `ceil(N / target_size)` k-means clusters in xy. Clusters above the target
/// are uniformly subsampled to it; clusters of at most `target_size / 4`
/// points are dropped.
pub fn make_subclouds(
    cloud: &LabeledPointCloud,
    target_size: usize,
    map: &CategoryMap,
    km: &KMeansParams,
    stream: &RngStream,
) -> Result<Vec<Subcloud>> {
    if target_size == 0 {
        return Err(Error::Argument("target size must be >= 1".into()));
    }
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    let xy: Vec<Vec2> = cloud.records().iter().map(|r| r.position.xy()).collect();
    let k = xy.len().div_ceil(target_size);
    let clusters = kmeans_xy(&xy, k, km.max_iter, km.tol, &mut stream.derive("kmeans"))?;
    let mut members = vec![Vec::new(); k];
    for (i, &a) in clusters.assignments.iter().enumerate() {
        members[a].push(i);
    }
    let sub = stream.derive("subsample");
    let mut out = Vec::new();
    for (cluster, mut idx) in members.into_iter().enumerate() {
        if idx.len() * 4 <= target_size {
            continue;
        }
        if idx.len() > target_size {
            let mut s = sub.derive_index(cluster as u64);
            for i in 0..target_size {
                let j = i + s.index(idx.len() - i);
                idx.swap(i, j);
            }
            idx.truncate(target_size);
            idx.sort_unstable();
        }
        let records = cloud.records();
        out.push(Subcloud {
            cluster,
            points: idx.iter().map(|&i| records[i].position).collect(),
            categories: idx.iter().map(|&i| map.map(records[i].label)).collect(),
            indices: idx,
            centroid: Vec3::ZERO,
            scale: 1.0,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetMode {
    Lidar,
    Camera,
}

impl FromStr for DatasetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lidar" => Ok(DatasetMode::Lidar),
            "camera" => Ok(DatasetMode::Camera),
            _ => Err(Error::Argument(format!(
                "mode `{s}` is not lidar or camera"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub mode: DatasetMode,
    pub target_size: usize,
    pub noise_sigma: f64,
    /// Fraction of scenes held out for validation.
    pub val_ratio: f64,
    pub gamma: f64,
    /// Camera height above the scene top.
    pub altitude: f64,
    /// Survey grid spacing `[x, y]`; absent means one centered viewpoint.
    pub survey_spacing: Option<[f64; 2]>,
    pub kmeans: KMeansParams,
    /// Write unit-sphere coordinates instead of world coordinates.
    pub normalize: bool,
    pub category_map: CategoryMap,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            mode: DatasetMode::Lidar,
            target_size: 4096,
            noise_sigma: 0.01,
            val_ratio: 0.2,
            gamma: sensor::DEFAULT_GAMMA,
            altitude: sensor::DEFAULT_ALTITUDE,
            survey_spacing: None,
            kmeans: KMeansParams::default(),
            normalize: true,
            category_map: CategoryMap::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_size == 0 {
            return Err(Error::Argument("target_size must be >= 1".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Argument(format!(
                "noise_sigma {} must be >= 0",
                self.noise_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.val_ratio) {
            return Err(Error::Argument(format!(
                "val_ratio {} outside [0, 1]",
                self.val_ratio
            )));
        }
        if !self.gamma.is_finite() || !self.altitude.is_finite() {
            return Err(Error::Argument("gamma and altitude must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn dir(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub name: String,
    /// Source file name, without directories.
    pub source: String,
    pub split: Split,
    pub points: usize,
    /// Points left after occlusion (equal to `points` in lidar mode).
    pub visible_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcloudEntry {
    /// Relative to the dataset root.
    pub file: String,
    pub scene: String,
    pub split: Split,
    pub cluster: usize,
    pub count: usize,
    pub histogram: BTreeMap<Category, usize>,
    pub centroid: Vec3,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: Seed,
    pub config: DatasetConfig,
    pub scenes: Vec<SceneEntry>,
    pub subclouds: Vec<SubcloudEntry>,
    pub total_points: usize,
}

fn scene_name(path: &Path) -> Result<String> {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Argument(format!("{} has no file name", path.display())))
}

/// Assigns `round(n * val_ratio)` scenes to validation, chosen by a shuffle
/// of the sorted names. At least one scene stays in training.
pub fn split_scenes(
    names: &[String],
    val_ratio: f64,
    stream: &RngStream,
) -> BTreeMap<String, Split> {
    let mut order: Vec<&String> = names.iter().collect();
    order.sort();
    let n = order.len();
    let n_val = ((n as f64 * val_ratio).round() as usize).min(n.saturating_sub(1));
    let mut s = stream.derive("split");
    for i in (1..n).rev() {
        let j = s.index(i + 1);
        order.swap(i, j);
    }
    order
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            (
                name.clone(),
                if i < n_val { Split::Val } else { Split::Train },
            )
        })
        .collect()
}

/// Camera-like view of a scene: union of the visible sets over the
/// configured viewpoints.
pub fn camera_view(cloud: &LabeledPointCloud, config: &DatasetConfig) -> Result<Vec<usize>> {
    let Some(aabb) = crate::geom::Aabb::from_points(cloud.records().iter().map(|r| r.position))
    else {
        return Ok(Vec::new());
    };
    let viewpoints = match config.survey_spacing {
        Some([sx, sy]) => sensor::survey_viewpoints(&aabb, config.altitude, sx, sy)?,
        None => vec![sensor::centered_viewpoint(cloud, config.altitude).expect("non-empty")],
    };
    sensor::occlude_indices(
        cloud,
        &OcclusionParams {
            gamma: config.gamma,
            viewpoints,
        },
    )
}

struct SceneOutput {
    entry: SceneEntry,
    subclouds: Vec<Subcloud>,
}

fn process_scene(
    path: &Path,
    name: &str,
    split: Split,
    config: &DatasetConfig,
    root: &RngStream,
) -> Result<SceneOutput> {
    let cloud = LabeledPointCloud::import_csv(path)?;
    let stream = root.derive(name);
    let viewed = match config.mode {
        DatasetMode::Lidar => cloud.clone(),
        DatasetMode::Camera => cloud.select(&camera_view(&cloud, config)?),
    };
    let noisy = sensor::add_noise(&viewed, config.noise_sigma, &stream.derive("noise"))?;
    let mut subclouds = make_subclouds(
        &noisy,
        config.target_size,
        &config.category_map,
        &config.kmeans,
        &stream,
    )?;
    if config.normalize {
        subclouds = subclouds
            .iter()
            .map(normalize_subcloud)
            .collect::<Result<_>>()?;
    }
    Ok(SceneOutput {
        entry: SceneEntry {
            name: name.to_string(),
            source: path
                .file_name()
                .map_or_else(String::new, |f| f.to_string_lossy().into_owned()),
            split,
            points: cloud.len(),
            visible_points: viewed.len(),
        },
        subclouds,
    })
}

/// Builds `<out>/{train,val}/<scene>_<cluster>.csv` and `<out>/manifest.json`.
/// Scenes are processed in parallel; everything written depends only on the
/// inputs, the config and `seed`.
pub fn build_dataset(
    scenes: &[PathBuf],
    config: &DatasetConfig,
    seed: Seed,
    out: &Path,
) -> Result<DatasetManifest> {
    config.validate()?;
    if scenes.is_empty() {
        return Err(Error::Argument("no scene files given".into()));
    }
    let mut named: Vec<(String, &PathBuf)> = scenes
        .iter()
        .map(|p| Ok((scene_name(p)?, p)))
        .collect::<Result<_>>()?;
    named.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = named.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateId(w[0].0.clone()));
    }
    let root = RngStream::new(seed).derive("dataset");
    let names: Vec<String> = named.iter().map(|(n, _)| n.clone()).collect();
    let splits = split_scenes(&names, config.val_ratio, &root);
    let outputs = named
        .par_iter()
        .map(|(name, path)| process_scene(path, name, splits[name], config, &root))
        .collect::<Result<Vec<_>>>()?;

    for split in [Split::Train, Split::Val] {
        let dir = out.join(split.dir());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut entries = Vec::new();
    let mut total = 0;
    for o in &outputs {
        for sc in &o.subclouds {
            let file = format!(
                "{}/{}_{}.csv",
                o.entry.split.dir(),
                o.entry.name,
                sc.cluster
            );
            let path = out.join(&file);
            fs::write(&path, sc.to_csv_string()).map_err(|e| Error::io(&path, e))?;
            let h = sc.histogram();
            total += sc.len();
            entries.push(SubcloudEntry {
                file,
                scene: o.entry.name.clone(),
                split: o.entry.split,
                cluster: sc.cluster,
                count: sc.len(),
                histogram: Category::ALL.iter().map(|&c| (c, h[c.code()])).collect(),
                centroid: sc.centroid,
                scale: sc.scale,
            });
        }
    }
    let manifest = DatasetManifest {
        seed,
        config: config.clone(),
        scenes: outputs.into_iter().map(|o| o.entry).collect(),
        subclouds: entries,
        total_points: total,
    };
    let path = out.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointRecord;

    fn blobs(n: usize, seed: u64) -> (Vec<Vec2>, Vec<usize>) {
        let mut s = RngStream::new(Seed(seed));
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (b, c) in [Vec2::ZERO, Vec2::new(100.0, 100.0)].iter().enumerate() {
            for _ in 0..n {
                let p = Vec2::new(s.normal(c.x, 1.0).unwrap(), s.normal(c.y, 1.0).unwrap());
                pts.push(p);
                truth.push(b);
            }
        }
        (pts, truth)
    }

    fn grid_cloud(n: usize) -> LabeledPointCloud {
        let side = (n as f64).sqrt().ceil() as usize;
        LabeledPointCloud::from_records(
            (0..n)
                .map(|i| {
                    let p = Vec3::new(
                        (i % side) as f64 * 0.5,
                        (i / side) as f64 * 0.5,
                        (i % 7) as f64,
                    );
                    PointRecord::new(p, Label::ALL[i % 9], 0)
                })
                .collect(),
        )
    }

    #[test]
    fn default_map_is_total() {
        let m = CategoryMap::default();
        let got: Vec<Category> = Label::ALL.iter().map(|&l| m.map(l)).collect();
        use Category::*;
        assert_eq!(
            got,
            vec![
                Terrain,
                Trunk,
                Canopy,
                Canopy,
                Understorey,
                Understorey,
                Understorey,
                Understorey,
                Understorey
            ]
        );
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<CategoryMap>(&json).unwrap(), m);
        let custom: CategoryMap = serde_json::from_str(r#"{"deadwood": "trunk"}"#).unwrap();
        assert_eq!(custom.map(Label::Deadwood), Trunk);
        assert_eq!(custom.map(Label::Grass), Understorey);
    }

    #[test]
    fn k_one_is_the_mean() {
        let (pts, _) = blobs(200, 1);
        let r = kmeans_xy(&pts, 1, 50, 1e-9, &mut RngStream::new(Seed(2))).unwrap();
        let mean = pts.iter().fold(Vec2::ZERO, |a, &p| a + p) / pts.len() as f64;
        assert!(r.centroids[0].distance(mean) <= 1e-9);
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let pts: Vec<Vec2> = (0..30)
            .map(|i| Vec2::new(i as f64, (i * i % 7) as f64))
            .collect();
        let r = kmeans_xy(&pts, 30, 10, 0.0, &mut RngStream::new(Seed(3))).unwrap();
        assert_eq!(r.inertia(), 0.0);
        let distinct: BTreeSet<usize> = r.assignments.iter().copied().collect();
        assert_eq!(distinct.len(), 30);
        assert!(kmeans_xy(&pts, 31, 10, 0.0, &mut RngStream::new(Seed(3))).is_err());
        assert!(kmeans_xy(&pts, 0, 10, 0.0, &mut RngStream::new(Seed(3))).is_err());
    }

    #[test]
    fn two_blobs_separate_and_inertia_falls() {
        let (pts, truth) = blobs(500, 4);
        for seed in 0..5 {
            let r = kmeans_xy(&pts, 2, 100, 1e-9, &mut RngStream::new(Seed(seed))).unwrap();
            let flip = r.assignments[0] != truth[0];
            for (a, t) in r.assignments.iter().zip(&truth) {
                assert_eq!(*a, if flip { 1 - t } else { *t });
            }
            for w in r.inertia_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn duplicates_reseed_without_panicking() {
        let mut pts = vec![Vec2::new(1.0, 1.0); 20];
        pts.push(Vec2::new(5.0, 5.0));
        let r = kmeans_xy(&pts, 3, 20, 0.0, &mut RngStream::new(Seed(5))).unwrap();
        assert_eq!(r.assignments.len(), 21);
        assert!(r.inertia().is_finite());
    }

    #[test]
    fn subcloud_contract() {
        let cloud = grid_cloud(5000);
        let target = 700;
        let subs = make_subclouds(
            &cloud,
            target,
            &CategoryMap::default(),
            &KMeansParams::default(),
            &RngStream::new(Seed(6)),
        )
        .unwrap();
        let mut seen = BTreeSet::new();
        for sc in &subs {
            assert!(sc.len() * 4 > target && sc.len() <= target);
            for (k, &i) in sc.indices.iter().enumerate() {
                assert!(seen.insert(i), "point {i} in two subclouds");
                assert_eq!(sc.points[k], cloud.records()[i].position);
                assert_eq!(
                    sc.categories[k],
                    CategoryMap::default().map(cloud.records()[i].label)
                );
            }
        }
    }

    #[test]
    fn exact_target_is_one_subcloud() {
        let cloud = grid_cloud(300);
        let subs = make_subclouds(
            &cloud,
            300,
            &CategoryMap::default(),
            &KMeansParams::default(),
            &RngStream::new(Seed(1)),
        )
        .unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].len(), 300);
    }

    #[test]
    fn normalization_round_trip() {
        let cloud = grid_cloud(100);
        let sc = make_subclouds(
            &cloud,
            100,
            &CategoryMap::default(),
            &KMeansParams::default(),
            &RngStream::new(Seed(1)),
        )
        .unwrap()
        .remove(0);
        let n = normalize_subcloud(&sc).unwrap();
        let max = n.points.iter().map(|p| p.length()).fold(0.0, f64::max);
        assert!((max - 1.0).abs() <= 1e-9);
        let back = denormalize(&n);
        for (a, b) in back.points.iter().zip(&sc.points) {
            assert!(a.distance(*b) <= 1e-9);
        }
        let again = normalize_subcloud(&n).unwrap();
        assert_eq!(again.scale, n.scale);
        for (a, b) in again.points.iter().zip(&n.points) {
            assert!(a.distance(*b) <= 1e-12);
        }
    }

    #[test]
    fn split_keeps_a_training_scene() {
        let s = RngStream::new(Seed(1));
        let one = split_scenes(&["a".into()], 0.9, &s);
        assert_eq!(one["a"], Split::Train);
        let names: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let m = split_scenes(&names, 0.2, &s);
        assert_eq!(m.values().filter(|&&v| v == Split::Val).count(), 2);
        assert_eq!(m, split_scenes(&names, 0.2, &s));
    }
}
