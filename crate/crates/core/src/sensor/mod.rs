//! Camera-like post-processing: hidden-point removal from top-down
//! viewpoints, survey grids, and Gaussian measurement noise.

mod hull;

pub use hull::convex_hull_3d;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::LabeledPointCloud;
use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};
use crate::rng::RngStream;

pub const DEFAULT_GAMMA: f64 = 2.0;
/// Camera height above the highest point of the scene.
pub const DEFAULT_ALTITUDE: f64 = 30.0;
const NOISE_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionParams {
    pub gamma: f64,
    pub viewpoints: Vec<Vec3>,
}

impl OcclusionParams {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() {
            return Err(Error::Argument(format!(
                "gamma {} must be finite",
                self.gamma
            )));
        }
        if self.viewpoints.is_empty() {
            return Err(Error::Argument(
                "occlusion needs at least one viewpoint".into(),
            ));
        }
        if let Some(v) = self.viewpoints.iter().find(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("viewpoint {v:?} is not finite")));
        }
        Ok(())
    }
}

/// Indices of points visible from `viewpoint` under the spherical-flip
/// operator with flip radius `d_max * 10^gamma`, ascending.
pub fn hpr_visible(points: &[Vec3], viewpoint: Vec3, gamma: f64) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let rel: Vec<Vec3> = points.iter().map(|&p| p - viewpoint).collect();
    let norms: Vec<f64> = rel.iter().map(|p| p.length()).collect();
    if let Some(i) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::Argument(format!(
            "point {i} coincides with the viewpoint"
        )));
    }
    let d_max = norms.iter().copied().fold(0.0, f64::max);
    let r = d_max * 10f64.powf(gamma);
    let mut flipped: Vec<Vec3> = rel
        .iter()
        .zip(&norms)
        .map(|(&p, &n)| p + p * (2.0 * (r - n) / n))
        .collect();
    flipped.push(Vec3::ZERO);
    let origin = points.len();
    Ok(convex_hull_3d(&flipped)
        .into_iter()
        .filter(|&i| i != origin)
        .collect())
}

/// Lawnmower grid at `altitude` above `extent.max.z`. Rows run along x and
/// alternate direction.
pub fn survey_viewpoints(
    extent: &Aabb,
    altitude: f64,
    spacing_x: f64,
    spacing_y: f64,
) -> Result<Vec<Vec3>> {
    for s in [spacing_x, spacing_y] {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Argument(format!("survey spacing {s} must be > 0")));
        }
    }
    let size = extent.size();
    let nx = (size.x / spacing_x + 1e-9).floor() as usize + 1;
    let ny = (size.y / spacing_y + 1e-9).floor() as usize + 1;
    let z = extent.max.z + altitude;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = extent.min.y + j as f64 * spacing_y;
        for k in 0..nx {
            let i = if j % 2 == 0 { k } else { nx - 1 - k };
            out.push(Vec3::new(extent.min.x + i as f64 * spacing_x, y, z));
        }
    }
    Ok(out)
}

/// One viewpoint centered over the cloud at `altitude` above its top.
pub fn centered_viewpoint(cloud: &LabeledPointCloud, altitude: f64) -> Option<Vec3> {
    let b = Aabb::from_points(cloud.records().iter().map(|r| r.position))?;
    let c = b.center();
    Some(Vec3::new(c.x, c.y, b.max.z + altitude))
}

/// Union of the per-viewpoint visible sets, ascending.
pub fn occlude_indices(cloud: &LabeledPointCloud, params: &OcclusionParams) -> Result<Vec<usize>> {
    params.validate()?;
    let pts = cloud.positions();
    let sets = params
        .viewpoints
        .par_iter()
        .map(|&v| hpr_visible(&pts, v, params.gamma))
        .collect::<Result<Vec<_>>>()?;
    let mut keep = vec![false; pts.len()];
    for i in sets.into_iter().flatten() {
        keep[i] = true;
    }
    Ok((0..pts.len()).filter(|&i| keep[i]).collect())
}

/// Visible subset, original order and labels preserved.
pub fn occlude(cloud: &LabeledPointCloud, params: &OcclusionParams) -> Result<LabeledPointCloud> {
    Ok(cloud.select(&occlude_indices(cloud, params)?))
}

/// Zero-mean isotropic Gaussian noise on every coordinate. Chunks of records
/// draw from their own derived streams.
pub fn add_noise(
    cloud: &LabeledPointCloud,
    sigma: f64,
    stream: &RngStream,
) -> Result<LabeledPointCloud> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Argument(format!("noise sigma {sigma} must be >= 0")));
    }
    let mut out = cloud.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    out.records_mut()
        .par_chunks_mut(NOISE_CHUNK)
        .enumerate()
        .for_each(|(c, chunk)| {
            let mut s = stream.derive_index(c as u64);
            for r in chunk {
                let p = r.position;
                let mut n = || s.normal(0.0, sigma).expect("sigma checked");
                r.position = Vec3::new(p.x + n(), p.y + n(), p.z + n());
            }
        });
    Ok(out)
}
