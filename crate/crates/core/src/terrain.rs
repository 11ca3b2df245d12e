//! Terrain heightmaps from multi-octave gradient noise.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{Label, LabeledPointCloud, PointRecord, TERRAIN_INSTANCE};
use crate::error::{Error, Result};
use crate::geom::{Rect, Vec2, Vec3};
use crate::rng::{mix64, RngStream, Seed};

/// Fractal noise parameters shared by terrain and noise textures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FbmParams {
    pub octaves: u32,
    /// Frequency multiplier per octave.
    pub lacunarity: f64,
    /// Amplitude multiplier per octave.
    pub persistence: f64,
    /// Cycles per meter of the first octave.
    pub base_frequency: f64,
    /// Meters.
    pub amplitude: f64,
    pub seed_label: String,
}

impl Default for FbmParams {
    fn default() -> Self {
        FbmParams {
            octaves: 5,
            lacunarity: 2.0,
            persistence: 0.5,
            base_frequency: 0.01,
            amplitude: 8.0,
            seed_label: "terrain".to_string(),
        }
    }
}

impl FbmParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(format!("noise params: {m}")));
        if self.octaves < 1 {
            return bad("octaves must be >= 1");
        }
        if !(self.lacunarity.is_finite() && self.lacunarity > 1.0) {
            return bad("lacunarity must be finite and > 1");
        }
        if !(self.persistence > 0.0 && self.persistence <= 1.0) {
            return bad("persistence must lie in (0, 1]");
        }
        if !(self.base_frequency.is_finite() && self.base_frequency > 0.0) {
            return bad("base_frequency must be finite and > 0");
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return bad("amplitude must be finite and >= 0");
        }
        if self.seed_label.is_empty() {
            return bad("seed_label must be non-empty");
        }
        Ok(())
    }

    /// Analytic bound `amplitude * sum(persistence^i)` on `|fbm|`.
    pub fn amplitude_bound(&self) -> f64 {
        let mut sum = 0.0;
        let mut a = 1.0;
        for _ in 0..self.octaves {
            sum += a;
            a *= self.persistence;
        }
        self.amplitude * sum
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainParams {
    /// Extent along x, meters.
    pub width: f64,
    /// Extent along y, meters.
    pub depth: f64,
    /// Vertices per side.
    pub grid_resolution: u32,
    pub noise: FbmParams,
}

impl Default for TerrainParams {
    fn default() -> Self {
        TerrainParams {
            width: 64.0,
            depth: 64.0,
            grid_resolution: 65,
            noise: FbmParams::default(),
        }
    }
}

impl TerrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.width.is_finite()
            && self.width > 0.0
            && self.depth.is_finite()
            && self.depth > 0.0)
        {
            return Err(Error::Argument(
                "terrain width and depth must be finite and > 0".into(),
            ));
        }
        if self.grid_resolution < 2 {
            return Err(Error::Argument("grid_resolution must be >= 2".into()));
        }
        self.noise.validate()
    }
}

fn gradient(ix: i64, iy: i64, seed: u64) -> (f64, f64) {
    let h = mix64(
        seed ^ mix64(
            (ix as u64).wrapping_mul(0x9E37_79B1_85EB_CA87)
                ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F),
        ),
    );
    let angle = (h >> 11) as f64 * (std::f64::consts::TAU / (1u64 << 53) as f64);
    let (s, c) = angle.sin_cos();
    (c, s)
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Classic 2D gradient noise with unit gradients hashed from the lattice
/// coordinates and `seed`. Zero on integer lattice points; `|value| <= 1`.
pub fn perlin2(x: f64, y: f64, seed: Seed) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (ix, iy) = (x0 as i64, y0 as i64);
    let (fx, fy) = (x - x0, y - y0);
    let corner = |dx: i64, dy: i64| {
        let (gx, gy) = gradient(ix + dx, iy + dy, seed.0);
        gx * (fx - dx as f64) + gy * (fy - dy as f64)
    };
    let (n00, n10, n01, n11) = (corner(0, 0), corner(1, 0), corner(0, 1), corner(1, 1));
    let (u, v) = (fade(fx), fade(fy));
    lerp(lerp(n00, n10, u), lerp(n01, n11, u), v)
}

/// Per-octave noise seeds, derived from `seed` and the params' seed label.
pub fn octave_seeds(p: &FbmParams, seed: Seed) -> Vec<Seed> {
    let base = RngStream::new(seed).derive(&p.seed_label);
    (0..p.octaves)
        .map(|i| base.derive_index(u64::from(i)).seed())
        .collect()
}

/// Fractal sum evaluator with octave seeds resolved once.
#[derive(Debug, Clone)]
pub struct Fbm {
    params: FbmParams,
    seeds: Vec<Seed>,
}

impl Fbm {
    pub fn new(params: &FbmParams, seed: Seed) -> Self {
        Fbm {
            params: params.clone(),
            seeds: octave_seeds(params, seed),
        }
    }

    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let p = &self.params;
        let mut freq = p.base_frequency;
        let mut amp = 1.0;
        let mut sum = 0.0;
        for s in &self.seeds {
            sum += amp * perlin2(x * freq, y * freq, *s);
            freq *= p.lacunarity;
            amp *= p.persistence;
        }
        p.amplitude * sum
    }
}

/// Fractal Brownian motion in meters at world position `(x, y)`.
pub fn fbm(x: f64, y: f64, p: &FbmParams, seed: Seed) -> f64 {
    Fbm::new(p, seed).sample(x, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heightmap {
    width: f64,
    depth: f64,
    resolution: usize,
    /// Row-major; row index runs along +y, column index along +x.
    heights: Vec<f64>,
}

impl Heightmap {
    pub fn from_heights(
        width: f64,
        depth: f64,
        resolution: usize,
        heights: Vec<f64>,
    ) -> Result<Self> {
        if resolution < 2 || heights.len() != resolution * resolution {
            return Err(Error::Argument(format!(
                "heightmap needs resolution >= 2 and resolution^2 heights (got {resolution}, {})",
                heights.len()
            )));
        }
        if !(width > 0.0 && depth > 0.0 && width.is_finite() && depth.is_finite()) {
            return Err(Error::Argument("heightmap extent must be positive".into()));
        }
        Ok(Heightmap {
            width,
            depth,
            resolution,
            heights,
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn extent(&self) -> Rect {
        Rect::from_size(self.width, self.depth)
    }

    pub fn height(&self, row: usize, col: usize) -> f64 {
        self.heights[row * self.resolution + col]
    }

    /// World XY of grid vertex `(row, col)`.
    pub fn vertex_position(&self, row: usize, col: usize) -> Vec2 {
        let n = (self.resolution - 1) as f64;
        Vec2::new(col as f64 * self.width / n, row as f64 * self.depth / n)
    }

    pub fn max_height(&self) -> f64 {
        self.heights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear height at `(x, y)`. Vertical ray casts against the
    /// heightfield reduce to this lookup.
    pub fn height_at(&self, x: f64, y: f64) -> Result<f64> {
        if !(x >= 0.0 && x <= self.width && y >= 0.0 && y <= self.depth) {
            return Err(Error::Domain(format!(
                "({x}, {y}) lies outside terrain extent {} x {}",
                self.width, self.depth
            )));
        }
        let n = self.resolution - 1;
        let fx = x / self.width * n as f64;
        let fy = y / self.depth * n as f64;
        let c0 = (fx.floor() as usize).min(n - 1);
        let r0 = (fy.floor() as usize).min(n - 1);
        let tx = fx - c0 as f64;
        let ty = fy - r0 as f64;
        let h00 = self.height(r0, c0);
        let h01 = self.height(r0, c0 + 1);
        let h10 = self.height(r0 + 1, c0);
        let h11 = self.height(r0 + 1, c0 + 1);
        Ok(lerp(lerp(h00, h01, tx), lerp(h10, h11, tx), ty))
    }

    /// Binary encoding: magic `SYLVHM01`, u32 resolution, f64 width, f64
    /// depth, then f32 heights row-major, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + 4 * self.heights.len());
        out.extend_from_slice(HEIGHTMAP_MAGIC);
        out.extend_from_slice(&(self.resolution as u32).to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.depth.to_le_bytes());
        for h in &self.heights {
            out.extend_from_slice(&(*h as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Argument(format!("heightmap file: {m}"));
        if bytes.len() < 28 || &bytes[..8] != HEIGHTMAP_MAGIC {
            return Err(bad("missing SYLVHM01 header"));
        }
        let res = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let width = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let depth = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        let body = &bytes[28..];
        if res.checked_mul(res).and_then(|n| n.checked_mul(4)) != Some(body.len()) {
            return Err(bad("height payload length does not match resolution"));
        }
        let heights = body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Heightmap::from_heights(width, depth, res, heights)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Heightmap::from_bytes(&bytes)
    }
}

pub const HEIGHTMAP_MAGIC: &[u8; 8] = b"SYLVHM01";

/// Heights at every grid vertex, evaluated row-parallel.
pub fn generate_heightmap(p: &TerrainParams, seed: Seed) -> Result<Heightmap> {
    p.validate()?;
    let res = p.grid_resolution as usize;
    let noise = Fbm::new(&p.noise, seed);
    let n = (res - 1) as f64;
    let mut heights = vec![0.0; res * res];
    heights
        .par_chunks_mut(res)
        .enumerate()
        .for_each(|(row, out)| {
            let y = row as f64 * p.depth / n;
            for (col, h) in out.iter_mut().enumerate() {
                *h = noise.sample(col as f64 * p.width / n, y);
            }
        });
    Heightmap::from_heights(p.width, p.depth, res, heights)
}

fn axis_samples(extent: f64, spacing: f64) -> Vec<f64> {
    let steps = (extent / spacing + 1e-9).floor() as usize;
    if steps == 0 {
        vec![0.0, extent]
    } else {
        (0..=steps).map(|i| i as f64 * spacing).collect()
    }
}

/// Jittered regular grid of terrain surface samples, labeled terrain.
///
/// Each sample moves by up to `spacing / 4` per axis (clamped to the extent)
/// and takes the heightmap's bilinear height at its final XY.
pub fn terrain_points(hm: &Heightmap, spacing: f64, seed: Seed) -> Result<LabeledPointCloud> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::Argument(format!(
            "terrain spacing {spacing} must be > 0"
        )));
    }
    let xs = axis_samples(hm.width, spacing);
    let ys = axis_samples(hm.depth, spacing);
    let jitter = spacing / 4.0;
    let stream = RngStream::new(seed).derive("terrain-points");
    let extent = hm.extent();
    let rows: Vec<Vec<PointRecord>> = ys
        .par_iter()
        .enumerate()
        .map(|(r, &y)| {
            let mut s = stream.derive_index(r as u64);
            xs.iter()
                .map(|&x| {
                    let dx = s.range(-jitter, jitter);
                    let dy = s.range(-jitter, jitter);
                    let p = extent.clamp(Vec2::new(x + dx, y + dy));
                    let z = hm.height_at(p.x, p.y).expect("clamped into extent");
                    PointRecord::new(Vec3::new(p.x, p.y, z), Label::Terrain, TERRAIN_INSTANCE)
                })
                .collect()
        })
        .collect();
    Ok(LabeledPointCloud::from_records(
        rows.into_iter().flatten().collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(octaves: u32, amplitude: f64) -> TerrainParams {
        TerrainParams {
            width: 10.0,
            depth: 10.0,
            grid_resolution: 11,
            noise: FbmParams {
                octaves,
                amplitude,
                base_frequency: 0.3,
                ..FbmParams::default()
            },
        }
    }

    #[test]
    fn perlin_zero_on_lattice() {
        for s in 0..5 {
            assert_eq!(perlin2(3.0, 7.0, Seed(s)), 0.0);
            assert_eq!(perlin2(-4.0, 0.0, Seed(s)), 0.0);
        }
    }

    #[test]
    fn perlin_bounded() {
        let mut r = RngStream::new(Seed(11));
        for _ in 0..100_000 {
            let x = r.range(-500.0, 500.0);
            let y = r.range(-500.0, 500.0);
            let v = perlin2(x, y, Seed(3));
            assert!(v.abs() <= 1.0, "{v}");
        }
    }

    #[test]
    fn single_octave_is_scaled_perlin() {
        let p = params(1, 3.0).noise;
        let s0 = octave_seeds(&p, Seed(4))[0];
        for &(x, y) in &[(0.3, 0.7), (12.5, -3.25), (100.1, 42.0)] {
            let expect = 3.0 * perlin2(x * p.base_frequency, y * p.base_frequency, s0);
            assert_eq!(fbm(x, y, &p, Seed(4)), expect);
        }
    }

    #[test]
    fn fbm_respects_geometric_bound() {
        let p = FbmParams {
            octaves: 4,
            persistence: 0.5,
            amplitude: 1.0,
            base_frequency: 0.7,
            ..FbmParams::default()
        };
        assert_eq!(p.amplitude_bound(), 1.875);
        let f = Fbm::new(&p, Seed(8));
        let mut r = RngStream::new(Seed(12));
        for _ in 0..20_000 {
            let v = f.sample(r.range(-100.0, 100.0), r.range(-100.0, 100.0));
            assert!(v.abs() <= 1.875);
        }
    }

    #[test]
    fn fbm_is_continuous() {
        let p = params(5, 8.0).noise;
        let f = Fbm::new(&p, Seed(1));
        let mut r = RngStream::new(Seed(2));
        for _ in 0..1000 {
            let (x, y) = (r.range(0.0, 50.0), r.range(0.0, 50.0));
            let d = (f.sample(x, y) - f.sample(x + 1e-6, y + 1e-6)).abs();
            assert!(d <= 1e-3 * p.amplitude);
        }
    }

    #[test]
    fn zero_amplitude_is_flat() {
        let mut p = params(3, 0.0);
        p.grid_resolution = 2;
        let hm = generate_heightmap(&p, Seed(5)).unwrap();
        assert!(hm.heights().iter().all(|&h| h == 0.0));
        assert_eq!(fbm(1.2, 3.4, &p.noise, Seed(5)), 0.0);
    }

    #[test]
    fn heightmap_matches_pointwise_fbm() {
        let p = params(4, 5.0);
        let hm = generate_heightmap(&p, Seed(21)).unwrap();
        for row in 0..11 {
            for col in 0..11 {
                let expect = fbm(col as f64, row as f64, &p.noise, Seed(21));
                assert_eq!(hm.height(row, col), expect);
            }
        }
    }

    #[test]
    fn heightmap_worker_count_invariant() {
        let p = params(5, 8.0);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let eight = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap();
        let a = one.install(|| generate_heightmap(&p, Seed(3)).unwrap());
        let b = eight.install(|| generate_heightmap(&p, Seed(3)).unwrap());
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn bilinear_lookup() {
        let hm = Heightmap::from_heights(1.0, 1.0, 2, vec![0.0, 2.0, 0.0, 2.0]).unwrap();
        assert_eq!(hm.height_at(0.5, 0.5).unwrap(), 1.0);
        assert_eq!(hm.height_at(1.0, 1.0).unwrap(), 2.0);
        assert!(matches!(hm.height_at(1.5, 0.5), Err(Error::Domain(_))));
        assert!(hm.height_at(-0.1, 0.5).is_err());

        let g = generate_heightmap(&params(3, 4.0), Seed(9)).unwrap();
        for row in 0..11 {
            for col in 0..11 {
                let v = g.vertex_position(row, col);
                assert!((g.height_at(v.x, v.y).unwrap() - g.height(row, col)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn terrain_point_grid() {
        let hm = generate_heightmap(&params(3, 4.0), Seed(9)).unwrap();
        let cloud = terrain_points(&hm, 1.0, Seed(9)).unwrap();
        assert_eq!(cloud.len(), 121);
        for r in cloud.records() {
            assert_eq!(r.label, Label::Terrain);
            assert_eq!(
                r.position.z,
                hm.height_at(r.position.x, r.position.y).unwrap()
            );
        }
        let sparse = terrain_points(&hm, 50.0, Seed(9)).unwrap();
        assert_eq!(sparse.len(), 4);
        assert!(terrain_points(&hm, 0.0, Seed(9)).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let hm = generate_heightmap(&params(3, 4.0), Seed(9)).unwrap();
        let bytes = hm.to_bytes();
        assert_eq!(&bytes[..8], b"SYLVHM01");
        assert_eq!(bytes.len(), 28 + 4 * 121);
        let back = Heightmap::from_bytes(&bytes).unwrap();
        assert_eq!(back.resolution(), 11);
        for (a, b) in hm.heights().iter().zip(back.heights()) {
            assert_eq!(*a as f32 as f64, *b);
        }
        assert!(Heightmap::from_bytes(&bytes[..30]).is_err());
    }
}
