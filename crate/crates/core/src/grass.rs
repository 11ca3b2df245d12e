//! Grass: tile-parallel anchor placement driven by a density texture, and
//! per-blade geometry.
//!
//! The texture is cut into `tile_size`-pixel square tiles (edge tiles may be
//! smaller). A tile whose mean density is `d` receives `floor(d * P + 0.5)`
//! anchors laid on a `ceil(sqrt(p))` square grid, first `p` cells in row-major
//! order. Each anchor then gets its own stream keyed by (tile, index), so the
//! output never depends on how tiles are scheduled.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{Label, LabeledPointCloud, PointRecord, GRASS_INSTANCE};
use crate::error::{Error, Result};
use crate::geom::{Vec2, Vec3};
use crate::rng::RngStream;
use crate::terrain::Heightmap;
use crate::texture::Texture;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrassParams {
    /// Tile edge in texture pixels.
    pub tile_size: usize,
    /// Anchor budget of a fully white tile.
    pub max_per_tile: usize,
    pub segments: usize,
    /// Meters, `[lo, hi]`.
    pub blade_height: [f64; 2],
    /// Base width in meters, `[lo, hi]`.
    pub blade_width: [f64; 2],
    /// Per-axis anchor jitter amplitude, meters.
    pub jitter: f64,
    /// Radians.
    pub max_bend: f64,
    pub scale_range: [f64; 2],
}

impl Default for GrassParams {
    fn default() -> Self {
        GrassParams {
            tile_size: 4,
            max_per_tile: 16,
            segments: 4,
            blade_height: [0.25, 0.5],
            blade_width: [0.01, 0.03],
            jitter: 0.05,
            max_bend: 0.6,
            scale_range: [0.8, 1.2],
        }
    }
}

impl GrassParams {
    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, [lo, hi]: [f64; 2], min: f64| {
            if lo.is_finite() && hi.is_finite() && lo >= min && lo <= hi {
                Ok(())
            } else {
                Err(Error::Argument(format!(
                    "grass {name} [{lo}, {hi}] must satisfy {min} <= lo <= hi"
                )))
            }
        };
        if self.tile_size == 0 {
            return Err(Error::Argument("grass tile_size must be >= 1".into()));
        }
        if self.segments == 0 {
            return Err(Error::Argument("grass segments must be >= 1".into()));
        }
        range("blade_height", self.blade_height, 0.0)?;
        range("blade_width", self.blade_width, 0.0)?;
        range("scale_range", self.scale_range, 0.0)?;
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::Argument(format!(
                "grass jitter {} must be >= 0",
                self.jitter
            )));
        }
        if !(self.max_bend.is_finite() && self.max_bend >= 0.0) {
            return Err(Error::Argument(format!(
                "grass max_bend {} must be >= 0",
                self.max_bend
            )));
        }
        Ok(())
    }

    pub fn vertices_per_blade(&self) -> usize {
        2 * self.segments + 1
    }
}

/// One grass anchor in texture pixel space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub tile: u32,
    /// Position within the tile's row-major grid.
    pub index: u32,
    /// Continuous pixel coordinates.
    pub pixel: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blade {
    pub anchor: Vec3,
    /// World space; pairs bottom to top, then the tip.
    pub vertices: Vec<Vec3>,
}

fn tile_grid(t: &Texture, ts: usize) -> (usize, usize) {
    (t.width().div_ceil(ts), t.height().div_ceil(ts))
}

/// Anchor budget per tile, row-major over tiles. Edge tiles average over the
/// pixels they actually cover.
pub fn tile_budgets(t: &Texture, tile_size: usize, max_per_tile: usize) -> Result<Vec<usize>> {
    if tile_size == 0 {
        return Err(Error::Argument("tile size must be >= 1".into()));
    }
    let (tx, ty) = tile_grid(t, tile_size);
    Ok((0..tx * ty)
        .into_par_iter()
        .map(|tile| {
            let (x0, y0) = ((tile % tx) * tile_size, (tile / tx) * tile_size);
            let (x1, y1) = (
                (x0 + tile_size).min(t.width()),
                (y0 + tile_size).min(t.height()),
            );
            let mut sum = 0.0;
            for py in y0..y1 {
                for px in x0..x1 {
                    sum += t.get(px, py);
                }
            }
            let mean = sum / ((x1 - x0) * (y1 - y0)) as f64;
            (mean * max_per_tile as f64 + 0.5).floor() as usize
        })
        .collect())
}

/// Anchors of every tile, ordered by (tile, index).
pub fn sample_anchors(t: &Texture, tile_size: usize, max_per_tile: usize) -> Result<Vec<Anchor>> {
    let budgets = tile_budgets(t, tile_size, max_per_tile)?;
    let (tx, _) = tile_grid(t, tile_size);
    let per_tile: Vec<Vec<Anchor>> = budgets
        .par_iter()
        .enumerate()
        .map(|(tile, &p)| {
            let (x0, y0) = ((tile % tx) * tile_size, (tile / tx) * tile_size);
            let w = ((x0 + tile_size).min(t.width()) - x0) as f64;
            let h = ((y0 + tile_size).min(t.height()) - y0) as f64;
            let g = (p as f64).sqrt().ceil() as usize;
            (0..p)
                .map(|i| {
                    let (row, col) = (i / g, i % g);
                    Anchor {
                        tile: tile as u32,
                        index: i as u32,
                        pixel: Vec2::new(
                            x0 as f64 + (col as f64 + 0.5) / g as f64 * w,
                            y0 as f64 + (row as f64 + 0.5) / g as f64 * h,
                        ),
                    }
                })
                .collect()
        })
        .collect();
    Ok(per_tile.into_iter().flatten().collect())
}

/// Local-frame blade: `2S + 1` vertices, scaled, bent about local x with
/// angle weighted by the squared height fraction, then spun about +z.
pub fn blade_geometry(params: &GrassParams, stream: &mut RngStream) -> Vec<Vec3> {
    let s = params.segments;
    let h = stream
        .range(params.blade_height[0], params.blade_height[1])
        .max(params.blade_height[0]);
    let w = stream
        .range(params.blade_width[0], params.blade_width[1])
        .max(params.blade_width[0]);
    let scale = if params.scale_range[0] == params.scale_range[1] {
        params.scale_range[0]
    } else {
        stream.range(params.scale_range[0], params.scale_range[1])
    };
    let bend = stream.range(0.0, params.max_bend);
    let spin = stream.range(0.0, TAU);

    let mut v = Vec::with_capacity(2 * s + 1);
    for i in 0..s {
        let f = i as f64 / s as f64;
        let half = w * (1.0 - f) / 2.0;
        v.push(Vec3::new(-half, 0.0, h * f));
        v.push(Vec3::new(half, 0.0, h * f));
    }
    v.push(Vec3::new(0.0, 0.0, h));
    if scale == 1.0 && bend == 0.0 {
        if spin != 0.0 {
            for p in &mut v {
                *p = p.rotate_z(spin);
            }
        }
        return v;
    }
    let (ss, cs) = spin.sin_cos();
    for p in &mut v {
        let q = *p * scale;
        let f = if h * scale > 0.0 {
            q.z / (h * scale)
        } else {
            0.0
        };
        let (sb, cb) = (bend * f * f).sin_cos();
        let bent = Vec3::new(q.x, q.y * cb - q.z * sb, q.y * sb + q.z * cb);
        *p = Vec3::new(cs * bent.x - ss * bent.y, ss * bent.x + cs * bent.y, bent.z);
    }
    v
}

/// Anchor stream for (tile, index).
pub fn anchor_stream(grass: &RngStream, a: &Anchor) -> RngStream {
    grass
        .derive_index(a.tile as u64)
        .derive_index(a.index as u64)
}

/// Places one blade. `density` supplies the pixel-to-world mapping.
pub fn blade_for(
    a: &Anchor,
    density: &Texture,
    hm: &Heightmap,
    params: &GrassParams,
    grass: &RngStream,
) -> Blade {
    let mut s = anchor_stream(grass, a);
    let base = density.pixel_to_world(a.pixel);
    let jittered = if params.jitter > 0.0 {
        let dx = s.range(-params.jitter, params.jitter);
        let dy = s.range(-params.jitter, params.jitter);
        base + Vec2::new(dx, dy)
    } else {
        base
    };
    let p = hm.extent().clamp(jittered);
    let anchor = p.extend(hm.height_at(p.x, p.y).expect("clamped into extent"));
    let vertices = blade_geometry(params, &mut s)
        .into_iter()
        .map(|v| v + anchor)
        .collect();
    Blade { anchor, vertices }
}

/// One blade per anchor, in anchor order.
pub fn instantiate_grass(
    anchors: &[Anchor],
    density: &Texture,
    hm: &Heightmap,
    params: &GrassParams,
    stream: &RngStream,
) -> Result<Vec<Blade>> {
    params.validate()?;
    Ok(anchors
        .par_iter()
        .map(|a| blade_for(a, density, hm, params, stream))
        .collect())
}

/// Flattens blades into grass-labeled records.
pub fn blades_to_cloud(blades: &[Blade]) -> LabeledPointCloud {
    LabeledPointCloud::from_records(
        blades
            .iter()
            .flat_map(|b| {
                b.vertices
                    .iter()
                    .map(|&v| PointRecord::new(v, Label::Grass, GRASS_INSTANCE))
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use crate::rng::Seed;

    fn flat(size: f64) -> Heightmap {
        Heightmap::from_heights(size, size, 2, vec![1.5; 4]).unwrap()
    }

    #[test]
    fn anchor_counts() {
        let white = Texture::constant(16, 16, 1.0).unwrap();
        assert_eq!(sample_anchors(&white, 4, 10).unwrap().len(), 16 * 10);
        let black = Texture::constant(16, 16, 0.0).unwrap();
        assert!(sample_anchors(&black, 4, 1024).unwrap().is_empty());
        let half = Texture::constant(4, 4, 0.5).unwrap();
        assert_eq!(sample_anchors(&half, 4, 100).unwrap().len(), 50);
    }

    #[test]
    fn edge_tiles_use_own_pixel_count() {
        // 5x5 with t_s = 4: one full tile, two 1x4 strips, one 1x1 corner.
        let t = Texture::constant(5, 5, 1.0).unwrap();
        assert_eq!(tile_budgets(&t, 4, 9).unwrap(), vec![9, 9, 9, 9]);
    }

    #[test]
    fn budget_rounds_half_up() {
        let mut v = vec![0.0; 16];
        v[0] = 0.5; // mean 1/32
        let t = Texture::new(4, 4, v, Rect::from_size(1.0, 1.0)).unwrap();
        assert_eq!(tile_budgets(&t, 4, 16).unwrap(), vec![1]); // 0.5 -> 1
        assert_eq!(tile_budgets(&t, 4, 15).unwrap(), vec![0]); // 0.46875 -> 0
    }

    #[test]
    fn anchors_lie_in_their_tile_grid() {
        let t = Texture::constant(8, 8, 1.0).unwrap();
        let a = sample_anchors(&t, 4, 5).unwrap();
        // ceil(sqrt(5)) = 3: cells at 1/6, 3/6, 5/6 of the tile
        assert_eq!(a[0].pixel, Vec2::new(4.0 / 6.0, 4.0 / 6.0));
        assert_eq!(a[4].pixel, Vec2::new(2.0, 2.0));
        for x in &a {
            let tx = (x.tile % 2) as f64 * 4.0;
            let ty = (x.tile / 2) as f64 * 4.0;
            assert!(x.pixel.x > tx && x.pixel.x < tx + 4.0);
            assert!(x.pixel.y > ty && x.pixel.y < ty + 4.0);
        }
    }

    #[test]
    fn vertex_counts() {
        let mut s = RngStream::new(Seed(1));
        for (segments, n) in [(4, 9), (1, 3), (7, 15)] {
            let p = GrassParams {
                segments,
                ..GrassParams::default()
            };
            assert_eq!(blade_geometry(&p, &mut s).len(), n);
        }
    }

    #[test]
    fn undeformed_tip_is_straight_up() {
        let p = GrassParams {
            blade_height: [0.4, 0.4],
            max_bend: 0.0,
            scale_range: [1.0, 1.0],
            ..GrassParams::default()
        };
        let v = blade_geometry(&p, &mut RngStream::new(Seed(3)));
        assert_eq!(*v.last().unwrap(), Vec3::new(0.0, 0.0, 0.4));
    }

    #[test]
    fn bend_keeps_tip_distance() {
        let p = GrassParams {
            blade_height: [0.4, 0.4],
            max_bend: 1.0,
            scale_range: [2.0, 2.0],
            ..GrassParams::default()
        };
        for seed in 0..50 {
            let v = blade_geometry(&p, &mut RngStream::new(Seed(seed)));
            assert!((v.last().unwrap().length() - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_jitter_anchors_on_grid() {
        let hm = flat(8.0);
        let t = Texture::constant(8, 8, 1.0)
            .unwrap()
            .with_extent(hm.extent());
        let p = GrassParams {
            jitter: 0.0,
            max_per_tile: 4,
            ..GrassParams::default()
        };
        let anchors = sample_anchors(&t, 4, 4).unwrap();
        let blades = instantiate_grass(&anchors, &t, &hm, &p, &RngStream::new(Seed(9))).unwrap();
        for (a, b) in anchors.iter().zip(&blades) {
            let w = t.pixel_to_world(a.pixel);
            assert_eq!(b.anchor, Vec3::new(w.x, w.y, 1.5));
        }
    }

    #[test]
    fn vertices_within_reach() {
        let hm = flat(8.0);
        let t = Texture::constant(16, 16, 0.7)
            .unwrap()
            .with_extent(hm.extent());
        let p = GrassParams::default();
        let anchors = sample_anchors(&t, 4, 20).unwrap();
        let blades = instantiate_grass(&anchors, &t, &hm, &p, &RngStream::new(Seed(2))).unwrap();
        assert_eq!(blades_to_cloud(&blades).len(), anchors.len() * 9);
        let bound = p.blade_height[1] * p.scale_range[1];
        for b in &blades {
            assert_eq!(b.vertices.len(), 9);
            for v in &b.vertices {
                assert!(v.distance(b.anchor) <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn tile_order_independent() {
        let hm = flat(8.0);
        let t = Texture::constant(16, 16, 0.9)
            .unwrap()
            .with_extent(hm.extent());
        let p = GrassParams::default();
        let stream = RngStream::new(Seed(4));
        let anchors = sample_anchors(&t, 4, 8).unwrap();
        let fwd = instantiate_grass(&anchors, &t, &hm, &p, &stream).unwrap();
        let mut rev = anchors.clone();
        rev.reverse();
        let mut back = instantiate_grass(&rev, &t, &hm, &p, &stream).unwrap();
        back.reverse();
        assert_eq!(fwd, back);
    }
}
