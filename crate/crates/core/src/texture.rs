//! Greyscale control textures with values in `[0, 1]`.
//!
//! Textures are mapped affinely onto a world XY rectangle. Pixel `(px, py)`
//! covers `[px, px+1) x [py, py+1)` in pixel space, row `py` running along +y.
//! Values are kept as `f64`; 8-bit quantization only happens in PGM I/O.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Rect, Vec2};
use crate::rng::{RngStream, Seed};
use crate::terrain::{Fbm, FbmParams};

#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    width: usize,
    height: usize,
    values: Vec<f64>,
    extent: Rect,
}

impl Texture {
    pub fn new(width: usize, height: usize, values: Vec<f64>, extent: Rect) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::Argument(format!(
                "texture {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Argument(format!("texture value {v} outside [0, 1]")));
        }
        Ok(Texture {
            width,
            height,
            values,
            extent,
        })
    }

    /// Constant texture, mapped onto the unit square until re-mapped.
    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Texture::new(
            width,
            height,
            vec![value; width * height],
            Rect::from_size(1.0, 1.0),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn extent(&self) -> Rect {
        self.extent
    }

    pub fn with_extent(mut self, extent: Rect) -> Self {
        self.extent = extent;
        self
    }

    pub fn get(&self, px: usize, py: usize) -> f64 {
        self.values[py * self.width + px]
    }

    /// World position of a continuous pixel-space coordinate.
    pub fn pixel_to_world(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            self.extent.min.x + p.x / self.width as f64 * self.extent.width(),
            self.extent.min.y + p.y / self.height as f64 * self.extent.height(),
        )
    }

    pub fn world_to_pixel(&self, w: Vec2) -> Vec2 {
        Vec2::new(
            (w.x - self.extent.min.x) / self.extent.width() * self.width as f64,
            (w.y - self.extent.min.y) / self.extent.height() * self.height as f64,
        )
    }

    /// Bilinear lookup between pixel centers, clamped to the edge outside the
    /// mapped extent.
    pub fn sample(&self, world: Vec2) -> f64 {
        let p = self.world_to_pixel(world);
        let fx = (p.x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (p.y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = (fx.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (fy.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
        let bottom = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
        (top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0)
    }

    /// PGM P5, maxval 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.values.iter().map(|v| (v * 255.0).round() as u8));
        out
    }

    pub fn from_pgm(bytes: &[u8], extent: Rect) -> Result<Self> {
        let bad = |m: &str| Error::Argument(format!("PGM: {m}"));
        let mut pos = 0;
        let mut token = || -> Option<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if token().as_deref() != Some("P5") {
            return Err(bad("expected P5 magic"));
        }
        let mut number = |what: &str| -> Result<usize> {
            token()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(&format!("invalid {what}")))
        };
        let width = number("width")?;
        let height = number("height")?;
        let maxval = number("maxval")?;
        if maxval != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        let start = pos + 1;
        let n = width * height;
        if bytes.len() < start + n {
            return Err(bad("raster is truncated"));
        }
        let values = bytes[start..start + n]
            .iter()
            .map(|&b| f64::from(b) / 255.0)
            .collect();
        Texture::new(width, height, values, extent)
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }

    pub fn read_pgm(path: &Path, extent: Rect) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Texture::from_pgm(&bytes, extent)
    }
}

fn pixel_center(px: usize, py: usize) -> Vec2 {
    Vec2::new(px as f64 + 0.5, py as f64 + 0.5)
}

fn check_dims(w: usize, h: usize) -> Result<()> {
    if w == 0 || h == 0 {
        return Err(Error::Argument(format!(
            "texture size {w}x{h} must be >= 1x1"
        )));
    }
    Ok(())
}

/// Fractal noise sampled at each pixel center's world position, mapped from
/// `[-A, A]` to `[0, 1]` with `A` the analytic amplitude bound.
pub fn texture_from_noise(
    w: usize,
    h: usize,
    p: &FbmParams,
    seed: Seed,
    extent: Rect,
) -> Result<Texture> {
    check_dims(w, h)?;
    p.validate()?;
    let bound = p.amplitude_bound();
    let noise = Fbm::new(p, seed);
    let scale = Vec2::new(extent.width() / w as f64, extent.height() / h as f64);
    let mut values = vec![0.0; w * h];
    values.par_chunks_mut(w).enumerate().for_each(|(py, row)| {
        for (px, v) in row.iter_mut().enumerate() {
            let c = pixel_center(px, py);
            let world = Vec2::new(extent.min.x + c.x * scale.x, extent.min.y + c.y * scale.y);
            *v = if bound > 0.0 {
                ((noise.sample(world.x, world.y) + bound) / (2.0 * bound)).clamp(0.0, 1.0)
            } else {
                0.5
            };
        }
    });
    Texture::new(w, h, values, extent)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoronoiMode {
    /// Distance to the nearest site, normalized by the maximum distance.
    Distance,
    /// Per-site constant random value.
    Cellular,
}

/// Voronoi texture over `sites` random pixel-centered sites.
pub fn texture_from_voronoi(
    w: usize,
    h: usize,
    sites: usize,
    seed: Seed,
    mode: VoronoiMode,
    extent: Rect,
) -> Result<Texture> {
    check_dims(w, h)?;
    if sites == 0 {
        return Err(Error::Argument(
            "voronoi texture needs at least one site".into(),
        ));
    }
    let mut s = RngStream::new(seed).derive("voronoi");
    let site_pos: Vec<Vec2> = (0..sites)
        .map(|_| pixel_center(s.index(w), s.index(h)))
        .collect();
    let site_val: Vec<f64> = (0..sites).map(|_| s.unit()).collect();
    let nearest = |p: Vec2| -> (usize, f64) {
        site_pos
            .iter()
            .enumerate()
            .map(|(i, q)| (i, p.distance(*q)))
            .fold(
                (0, f64::INFINITY),
                |best, c| if c.1 < best.1 { c } else { best },
            )
    };
    let mut values = vec![0.0; w * h];
    values.par_chunks_mut(w).enumerate().for_each(|(py, row)| {
        for (px, v) in row.iter_mut().enumerate() {
            let (i, d) = nearest(pixel_center(px, py));
            *v = match mode {
                VoronoiMode::Distance => d,
                VoronoiMode::Cellular => site_val[i],
            };
        }
    });
    if mode == VoronoiMode::Distance {
        let max = values.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            values.iter_mut().for_each(|v| *v /= max);
        }
    }
    Texture::new(w, h, values, extent)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum LogicOp {
    Invert,
    Multiply,
    Min,
    Max,
    /// 1 where the value is `>= t`, else 0.
    Threshold {
        t: f64,
    },
    AddClamped,
}

impl LogicOp {
    pub fn arity(self) -> usize {
        match self {
            LogicOp::Invert | LogicOp::Threshold { .. } => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LogicOp::Invert => "invert",
            LogicOp::Multiply => "multiply",
            LogicOp::Min => "min",
            LogicOp::Max => "max",
            LogicOp::Threshold { .. } => "threshold",
            LogicOp::AddClamped => "add_clamped",
        }
    }
}

/// Pixelwise logic op. The result keeps `a`'s extent mapping.
pub fn texture_logic(op: LogicOp, a: &Texture, b: Option<&Texture>) -> Result<Texture> {
    let values: Vec<f64> = match (op, b) {
        (LogicOp::Invert, None) => a.values.iter().map(|v| 1.0 - v).collect(),
        (LogicOp::Threshold { t }, None) => a
            .values
            .iter()
            .map(|&v| if v >= t { 1.0 } else { 0.0 })
            .collect(),
        (LogicOp::Invert | LogicOp::Threshold { .. }, Some(_)) => {
            return Err(Error::Argument(format!("{} takes one texture", op.name())))
        }
        (_, None) => return Err(Error::Argument(format!("{} takes two textures", op.name()))),
        (_, Some(b)) => {
            if (a.width, a.height) != (b.width, b.height) {
                return Err(Error::Argument(format!(
                    "{}: texture sizes differ ({}x{} vs {}x{})",
                    op.name(),
                    a.width,
                    a.height,
                    b.width,
                    b.height
                )));
            }
            let f: fn(f64, f64) -> f64 = match op {
                LogicOp::Multiply => |x, y| x * y,
                LogicOp::Min => f64::min,
                LogicOp::Max => f64::max,
                LogicOp::AddClamped => |x, y| x + y,
                LogicOp::Invert | LogicOp::Threshold { .. } => unreachable!(),
            };
            a.values
                .iter()
                .zip(&b.values)
                .map(|(&x, &y)| f(x, y))
                .collect()
        }
    };
    let values = values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Texture::new(a.width, a.height, values, a.extent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> Rect {
        Rect::from_size(1.0, 1.0)
    }

    fn tex(w: usize, h: usize, values: Vec<f64>) -> Texture {
        Texture::new(w, h, values, Rect::from_size(w as f64, h as f64)).unwrap()
    }

    #[test]
    fn noise_zero_amplitude_is_mid_grey() {
        let p = FbmParams {
            amplitude: 0.0,
            ..FbmParams::default()
        };
        let t = texture_from_noise(8, 4, &p, Seed(1), unit()).unwrap();
        assert!(t.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn noise_in_range_and_deterministic() {
        let p = FbmParams {
            base_frequency: 0.2,
            ..FbmParams::default()
        };
        let extent = Rect::from_size(64.0, 64.0);
        for s in 0..10 {
            let t = texture_from_noise(32, 32, &p, Seed(s), extent).unwrap();
            assert!(t.values().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(t, texture_from_noise(32, 32, &p, Seed(s), extent).unwrap());
        }
    }

    #[test]
    fn voronoi_single_site_distance_endpoints() {
        let t = texture_from_voronoi(16, 9, 1, Seed(3), VoronoiMode::Distance, unit()).unwrap();
        let min = t.values().iter().copied().fold(f64::INFINITY, f64::min);
        let max = t.values().iter().copied().fold(0.0, f64::max);
        assert_eq!(min, 0.0);
        assert_eq!(max, 1.0);
        assert_eq!(t.values().iter().filter(|&&v| v == 0.0).count(), 1);
    }

    #[test]
    fn voronoi_distance_is_lipschitz() {
        let w = 40;
        let h = 30;
        let t = texture_from_voronoi(w, h, 7, Seed(5), VoronoiMode::Distance, unit()).unwrap();
        // Recover the normalization constant by brute force over the raster.
        let mut s = RngStream::new(Seed(5)).derive("voronoi");
        let sites: Vec<Vec2> = (0..7)
            .map(|_| pixel_center(s.index(w), s.index(h)))
            .collect();
        let raw = |x: usize, y: usize| {
            sites
                .iter()
                .map(|q| pixel_center(x, y).distance(*q))
                .fold(f64::INFINITY, f64::min)
        };
        let max = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| raw(x, y))
            .fold(0.0, f64::max);
        for y in 0..h {
            for x in 0..w {
                let here = t.get(x, y) * max;
                assert!((here - raw(x, y)).abs() < 1e-9);
                if x + 1 < w {
                    assert!((here - t.get(x + 1, y) * max).abs() <= 1.0 + 1e-9);
                }
                if y + 1 < h {
                    assert!((here - t.get(x, y + 1) * max).abs() <= 1.0 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn voronoi_cellular_single_site_constant() {
        let t = texture_from_voronoi(10, 10, 1, Seed(8), VoronoiMode::Cellular, unit()).unwrap();
        assert!(t.values().iter().all(|&v| v == t.values()[0]));
        assert!(texture_from_voronoi(10, 10, 0, Seed(8), VoronoiMode::Cellular, unit()).is_err());
    }

    #[test]
    fn logic_identities() {
        let t = tex(3, 2, vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.125]);
        let inv = texture_logic(LogicOp::Invert, &t, None).unwrap();
        assert_eq!(texture_logic(LogicOp::Invert, &inv, None).unwrap(), t);
        let ones = tex(3, 2, vec![1.0; 6]);
        assert_eq!(
            texture_logic(LogicOp::Multiply, &t, Some(&ones)).unwrap(),
            t
        );
        let c = tex(2, 2, vec![0.7; 4]);
        let th = texture_logic(LogicOp::Threshold { t: 0.5 }, &c, None).unwrap();
        assert!(th.values().iter().all(|&v| v == 1.0));
        let add = texture_logic(LogicOp::AddClamped, &ones, Some(&t)).unwrap();
        assert!(add.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn logic_arity_and_size_errors() {
        let a = tex(2, 2, vec![0.5; 4]);
        let b = tex(3, 2, vec![0.5; 6]);
        assert!(texture_logic(LogicOp::Min, &a, Some(&b)).is_err());
        assert!(texture_logic(LogicOp::Min, &a, None).is_err());
        assert!(texture_logic(LogicOp::Invert, &a, Some(&a)).is_err());
    }

    #[test]
    fn sampling_lookups() {
        let c = Texture::constant(5, 5, 0.3).unwrap();
        assert_eq!(c.sample(Vec2::new(0.2, 0.9)), 0.3);
        assert_eq!(c.sample(Vec2::new(-10.0, 10.0)), 0.3);

        let t = tex(2, 1, vec![0.0, 1.0]);
        // Pixel centers sit at x = 0.5 and 1.5 in a 2 m wide mapping.
        assert_eq!(t.sample(Vec2::new(0.5, 0.5)), 0.0);
        assert_eq!(t.sample(Vec2::new(1.5, 0.5)), 1.0);
        assert_eq!(t.sample(Vec2::new(1.0, 0.5)), 0.5);
        // Clamped to edge.
        assert_eq!(t.sample(Vec2::new(-3.0, 0.5)), 0.0);
        assert_eq!(t.sample(Vec2::new(9.0, 0.5)), 1.0);
    }

    #[test]
    fn pgm_round_trip() {
        let t = tex(3, 2, vec![0.0, 1.0, 0.5, 0.2, 0.8, 1.0]);
        let bytes = t.to_pgm();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        let back = Texture::from_pgm(&bytes, t.extent()).unwrap();
        for (a, b) in t.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        let commented = b"P5\n# made by hand\n2 1\n255\n\x00\xff";
        let c = Texture::from_pgm(commented, unit()).unwrap();
        assert_eq!(c.values(), &[0.0, 1.0]);
        assert!(Texture::from_pgm(b"P2\n1 1\n255\n0", unit()).is_err());
        assert!(Texture::from_pgm(b"P5\n4 4\n255\n\x00", unit()).is_err());
    }

    fn arb_pair() -> impl Strategy<Value = (Texture, Texture)> {
        (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
            (
                prop::collection::vec(0.0f64..=1.0, w * h),
                prop::collection::vec(0.0f64..=1.0, w * h),
            )
                .prop_map(move |(a, b)| (tex(w, h, a), tex(w, h, b)))
        })
    }

    proptest! {
        #[test]
        fn logic_closure((a, b) in arb_pair(), t in 0.0f64..=1.0) {
            for op in [LogicOp::Multiply, LogicOp::Min, LogicOp::Max, LogicOp::AddClamped] {
                let r = texture_logic(op, &a, Some(&b)).unwrap();
                prop_assert!(r.values().iter().all(|v| (0.0..=1.0).contains(v)));
            }
            for op in [LogicOp::Invert, LogicOp::Threshold { t }] {
                let r = texture_logic(op, &a, None).unwrap();
                prop_assert!(r.values().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn min_max_lattice_laws((a, b) in arb_pair()) {
            let c = texture_logic(LogicOp::Invert, &a, None).unwrap();
            for op in [LogicOp::Min, LogicOp::Max] {
                let ab = texture_logic(op, &a, Some(&b)).unwrap();
                let ba = texture_logic(op, &b, Some(&a)).unwrap();
                prop_assert_eq!(&ab, &ba);
                prop_assert_eq!(&texture_logic(op, &a, Some(&a)).unwrap(), &a);
                let left = texture_logic(op, &ab, Some(&c)).unwrap();
                let bc = texture_logic(op, &b, Some(&c)).unwrap();
                let right = texture_logic(op, &a, Some(&bc)).unwrap();
                prop_assert_eq!(left, right);
            }
        }
    }
}
