//! Blue-noise placement: Bridson's Poisson-disk sampler and a variable-radius
//! variant whose local radius is read from a greyscale texture.
//!
//! In the variable-radius sampler the local radius is
//! `radius_at(q) = r_min + texture(q) * (r_max - r_min)`. Candidates around an
//! active sample `a` are drawn from the annulus `[radius_at(a), 2 radius_at(a)]`
//! and a candidate `q` is accepted iff no existing sample lies closer than
//! `radius_at(q)`. Two samples therefore always satisfy
//! `|p - q| >= min(radius_at(p), radius_at(q))`. This is one consistent reading
//! of "acceptable distance" for samples sitting on different texture values.

use std::f64::consts::{SQRT_2, TAU};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Rect, Vec2};
use crate::rng::RngStream;
use crate::texture::Texture;

pub const DEFAULT_ATTEMPTS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Radius {
    Fixed(f64),
    Modulated { r_min: f64, r_max: f64 },
}

impl Radius {
    fn min(self) -> f64 {
        match self {
            Radius::Fixed(r) => r,
            Radius::Modulated { r_min, .. } => r_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiskParams {
    pub radius: Radius,
    /// Candidate attempts per active sample.
    pub k: usize,
    pub region: Rect,
    pub max_count: Option<usize>,
}

impl DiskParams {
    pub fn fixed(r: f64, region: Rect) -> Self {
        DiskParams {
            radius: Radius::Fixed(r),
            k: DEFAULT_ATTEMPTS,
            region,
            max_count: None,
        }
    }

    pub fn modulated(r_min: f64, r_max: f64, region: Rect) -> Self {
        DiskParams {
            radius: Radius::Modulated { r_min, r_max },
            k: DEFAULT_ATTEMPTS,
            region,
            max_count: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.radius {
            Radius::Fixed(r) => r.is_finite() && r > 0.0,
            Radius::Modulated { r_min, r_max } => {
                r_min.is_finite() && r_max.is_finite() && r_min > 0.0 && r_min <= r_max
            }
        };
        if !ok {
            return Err(Error::Argument(format!(
                "invalid disk radius {:?}",
                self.radius
            )));
        }
        if self.k == 0 {
            return Err(Error::Argument("k must be >= 1".into()));
        }
        let r = self.region;
        if !(r.min.is_finite() && r.max.is_finite() && r.width() >= 0.0 && r.height() >= 0.0) {
            return Err(Error::Argument(format!("invalid sampling region {r:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    pub points: Vec<Vec2>,
    /// Index of the sample that spawned each point; `None` for the root.
    pub parent: Vec<Option<usize>>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Debug CSV `x,y,parent_index`, with -1 marking the root.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("x,y,parent_index\n");
        for (p, parent) in self.points.iter().zip(&self.parent) {
            let parent = parent.map_or(-1, |i| i as i64);
            let _ = writeln!(s, "{:.6},{:.6},{}", p.x, p.y, parent);
        }
        s
    }
}

/// Background grid whose cells hold lists of sample indices.
struct CellGrid {
    origin: Vec2,
    cell: f64,
    cols: usize,
    rows: usize,
    cells: Vec<Vec<usize>>,
}

impl CellGrid {
    fn new(region: Rect, cell: f64) -> Self {
        let cols = ((region.width() / cell).ceil() as usize).max(1);
        let rows = ((region.height() / cell).ceil() as usize).max(1);
        CellGrid {
            origin: region.min,
            cell,
            cols,
            rows,
            cells: vec![Vec::new(); cols * rows],
        }
    }

    fn coords(&self, p: Vec2) -> (usize, usize) {
        let cx = ((p.x - self.origin.x) / self.cell).floor().max(0.0) as usize;
        let cy = ((p.y - self.origin.y) / self.cell).floor().max(0.0) as usize;
        (cx.min(self.cols - 1), cy.min(self.rows - 1))
    }

    fn insert(&mut self, p: Vec2, index: usize) {
        let (cx, cy) = self.coords(p);
        self.cells[cy * self.cols + cx].push(index);
    }

    /// Indices stored within `reach` cells of `p`'s cell.
    fn around(&self, p: Vec2, reach: usize) -> impl Iterator<Item = usize> + '_ {
        let (cx, cy) = self.coords(p);
        let x0 = cx.saturating_sub(reach);
        let x1 = (cx + reach).min(self.cols - 1);
        let y0 = cy.saturating_sub(reach);
        let y1 = (cy + reach).min(self.rows - 1);
        (y0..=y1).flat_map(move |y| {
            (x0..=x1).flat_map(move |x| self.cells[y * self.cols + x].iter().copied())
        })
    }
}

fn poisson_disk<F>(p: &DiskParams, radius_at: F, stream: &mut RngStream) -> Result<SampleSet>
where
    F: Fn(Vec2) -> f64,
{
    p.validate()?;
    let mut out = SampleSet::default();
    let cap = p.max_count.unwrap_or(usize::MAX);
    if cap == 0 {
        return Ok(out);
    }
    let region = p.region;
    if region.width() == 0.0 || region.height() == 0.0 {
        out.points.push(region.center());
        out.parent.push(None);
        return Ok(out);
    }

    // Every accepted pair is at least r_min apart, so a cell of side
    // r_min / sqrt(2) never holds more than one sample.
    let cell = p.radius.min() / SQRT_2;
    let mut grid = CellGrid::new(region, cell);

    let first = Vec2::new(
        stream.range(region.min.x, region.max.x),
        stream.range(region.min.y, region.max.y),
    );
    out.points.push(first);
    out.parent.push(None);
    grid.insert(first, 0);
    let mut active = vec![0usize];

    while !active.is_empty() && out.points.len() < cap {
        let slot = stream.index(active.len());
        let a_idx = active[slot];
        let a = out.points[a_idx];
        let ra = radius_at(a);
        let mut placed = false;
        for _ in 0..p.k {
            let theta = stream.range(0.0, TAU);
            let rho = (ra * ra + stream.unit() * 3.0 * ra * ra).sqrt();
            let q = Vec2::new(a.x + rho * theta.cos(), a.y + rho * theta.sin());
            if !region.contains(q) {
                continue;
            }
            let rq = radius_at(q);
            let reach = (rq / cell).ceil() as usize;
            let blocked = grid
                .around(q, reach)
                .any(|i| out.points[i].distance(q) < rq);
            if blocked {
                continue;
            }
            let idx = out.points.len();
            out.points.push(q);
            out.parent.push(Some(a_idx));
            grid.insert(q, idx);
            active.push(idx);
            placed = true;
            break;
        }
        if !placed {
            active.swap_remove(slot);
        }
    }
    Ok(out)
}

/// Bridson's fixed-radius sampler with cell size `r / sqrt(2)`.
pub fn bridson(p: &DiskParams, stream: &mut RngStream) -> Result<SampleSet> {
    let Radius::Fixed(r) = p.radius else {
        return Err(Error::Argument("bridson needs a fixed radius".into()));
    };
    poisson_disk(p, |_| r, stream)
}

/// Local radius of the variable-radius sampler at `q`.
pub fn radius_at(r_min: f64, r_max: f64, modulation: &Texture, q: Vec2) -> f64 {
    r_min + modulation.sample(q) * (r_max - r_min)
}

/// Variable-radius sampler driven by `modulation`, with list-holding cells
/// of size `r_min / sqrt(2)`. Neighbor search scans
/// `ceil(radius_at(q) / cell)` cells around a candidate, so the cost grows
/// quadratically with `r_max / r_min`.
pub fn modulated_bridson(
    p: &DiskParams,
    modulation: &Texture,
    stream: &mut RngStream,
) -> Result<SampleSet> {
    let Radius::Modulated { r_min, r_max } = p.radius else {
        return Err(Error::Argument(
            "modulated_bridson needs r_min/r_max".into(),
        ));
    };
    if !(r_min > 0.0 && r_min <= r_max && r_max.is_finite()) {
        return Err(Error::Argument(format!(
            "radii [{r_min}, {r_max}] must satisfy 0 < r_min <= r_max"
        )));
    }
    poisson_disk(p, |q| radius_at(r_min, r_max, modulation, q), stream)
}

/// Keeps each sample independently with probability `probability(point)`.
/// Parents that are dropped turn their children into roots.
pub fn spawn_filter(
    samples: &SampleSet,
    probability: &Texture,
    stream: &mut RngStream,
) -> SampleSet {
    let mut remap = vec![None; samples.len()];
    let mut out = SampleSet::default();
    for (i, p) in samples.points.iter().enumerate() {
        let keep = stream.unit() < probability.sample(*p);
        if keep {
            remap[i] = Some(out.points.len());
            out.points.push(*p);
            out.parent.push(samples.parent[i].and_then(|j| remap[j]));
        }
    }
    out
}
