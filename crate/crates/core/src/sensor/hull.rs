//! 3D convex hull (quickhull) returning hull vertex indices.
//!
//! Points within `eps` of a face plane count as inside, so points lying on a
//! hull facet or edge (but not at a corner) are not reported. Degenerate
//! inputs fall back to lower-dimensional hulls: coplanar sets use a 2D
//! monotone chain in their plane, collinear sets return the two extremes,
//! coincident sets return one index.

use std::collections::HashMap;

use crate::geom::Vec3;

#[derive(Debug, Clone)]
struct Face {
    v: [usize; 3],
    normal: Vec3,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl Face {
    fn new(v: [usize; 3], pts: &[Vec3]) -> Face {
        let (a, b, c) = (pts[v[0]], pts[v[1]], pts[v[2]]);
        let n = (b - a).cross(c - a);
        let len = n.length();
        let normal = if len > 0.0 { n / len } else { Vec3::ZERO };
        let centroid = (a + b + c) / 3.0;
        Face {
            v,
            normal,
            offset: normal.dot(centroid),
            outside: Vec::new(),
            alive: true,
        }
    }

    fn distance(&self, p: Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    fn edges(&self) -> [(usize, usize); 3] {
        let [a, b, c] = self.v;
        [(a, b), (b, c), (c, a)]
    }
}

/// Tolerance scaled by the coordinate magnitude of the input.
fn tolerance(pts: &[Vec3]) -> f64 {
    let (mut mx, mut my, mut mz) = (0.0f64, 0.0f64, 0.0f64);
    for p in pts {
        mx = mx.max(p.x.abs());
        my = my.max(p.y.abs());
        mz = mz.max(p.z.abs());
    }
    3.0 * f64::EPSILON * (mx + my + mz)
}

/// Indices of the vertices of the convex hull of `pts`, ascending.
pub fn convex_hull_3d(pts: &[Vec3]) -> Vec<usize> {
    if pts.len() < 4 {
        return (0..pts.len()).collect();
    }
    let eps = tolerance(pts);

    // Extremes along each axis seed the simplex.
    let mut ext = [0usize; 6];
    for (i, p) in pts.iter().enumerate() {
        let c = [p.x, p.y, p.z];
        for a in 0..3 {
            let lo = [pts[ext[2 * a]].x, pts[ext[2 * a]].y, pts[ext[2 * a]].z][a];
            let hi = [
                pts[ext[2 * a + 1]].x,
                pts[ext[2 * a + 1]].y,
                pts[ext[2 * a + 1]].z,
            ][a];
            if c[a] < lo {
                ext[2 * a] = i;
            }
            if c[a] > hi {
                ext[2 * a + 1] = i;
            }
        }
    }
    let (mut i0, mut i1, mut best) = (0, 0, -1.0);
    for a in 0..6 {
        for b in a + 1..6 {
            let d = pts[ext[a]].distance(pts[ext[b]]);
            if d > best {
                (i0, i1, best) = (ext[a], ext[b], d);
            }
        }
    }
    if best <= eps {
        return vec![0];
    }
    let dir = (pts[i1] - pts[i0]) / best;
    let (mut i2, mut best) = (0, -1.0);
    for (i, p) in pts.iter().enumerate() {
        let d = dir.cross(*p - pts[i0]).length();
        if d > best {
            (i2, best) = (i, d);
        }
    }
    if best <= eps {
        return collinear_hull(pts, pts[i0], dir);
    }
    let plane_n = (pts[i1] - pts[i0]).cross(pts[i2] - pts[i0]).normalized();
    let (mut i3, mut best) = (0, -1.0);
    for (i, p) in pts.iter().enumerate() {
        let d = plane_n.dot(*p - pts[i0]).abs();
        if d > best {
            (i3, best) = (i, d);
        }
    }
    if best <= eps {
        return coplanar_hull(pts, pts[i0], plane_n);
    }

    let mut faces: Vec<Face> = Vec::new();
    let interior = (pts[i0] + pts[i1] + pts[i2] + pts[i3]) / 4.0;
    for v in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
        let mut f = Face::new(v, pts);
        if f.distance(interior) > 0.0 {
            f = Face::new([v[0], v[2], v[1]], pts);
        }
        faces.push(f);
    }
    let mut edge_face: HashMap<(usize, usize), usize> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for e in f.edges() {
            edge_face.insert(e, fi);
        }
    }
    let simplex = [i0, i1, i2, i3];
    for (i, p) in pts.iter().enumerate() {
        if simplex.contains(&i) {
            continue;
        }
        assign(i, *p, &mut faces, &[0, 1, 2, 3], eps);
    }

    let mut pending: Vec<usize> = (0..faces.len())
        .filter(|&f| !faces[f].outside.is_empty())
        .collect();
    let mut visible_mark: Vec<bool> = vec![false; faces.len()];
    while let Some(fi) = pending.pop() {
        if !faces[fi].alive || faces[fi].outside.is_empty() {
            continue;
        }
        let face = &faces[fi];
        let eye = *face
            .outside
            .iter()
            .max_by(|&&a, &&b| {
                face.distance(pts[a])
                    .total_cmp(&face.distance(pts[b]))
                    .then(b.cmp(&a))
            })
            .unwrap();
        let ep = pts[eye];

        // Flood the faces the eye can see.
        let mut visible = vec![fi];
        visible_mark.resize(faces.len(), false);
        visible_mark[fi] = true;
        let mut k = 0;
        while k < visible.len() {
            let f = visible[k];
            k += 1;
            for (a, b) in faces[f].edges() {
                if let Some(&n) = edge_face.get(&(b, a)) {
                    if !visible_mark[n] && faces[n].alive && faces[n].distance(ep) > eps {
                        visible_mark[n] = true;
                        visible.push(n);
                    }
                }
            }
        }
        let mut horizon = Vec::new();
        for &f in &visible {
            for (a, b) in faces[f].edges() {
                match edge_face.get(&(b, a)) {
                    Some(&n) if visible_mark[n] => {}
                    _ => horizon.push((a, b)),
                }
            }
        }
        let mut orphans = Vec::new();
        for &f in &visible {
            visible_mark[f] = false;
            faces[f].alive = false;
            for e in faces[f].edges() {
                if edge_face.get(&e) == Some(&f) {
                    edge_face.remove(&e);
                }
            }
            orphans.append(&mut faces[f].outside);
        }
        let first_new = faces.len();
        for (a, b) in horizon {
            let f = Face::new([a, b, eye], pts);
            let id = faces.len();
            for e in f.edges() {
                edge_face.insert(e, id);
            }
            faces.push(f);
        }
        let new_ids: Vec<usize> = (first_new..faces.len()).collect();
        for i in orphans {
            if i != eye {
                assign(i, pts[i], &mut faces, &new_ids, eps);
            }
        }
        for &f in &new_ids {
            if !faces[f].outside.is_empty() {
                pending.push(f);
            }
        }
    }

    let mut is_vertex = vec![false; pts.len()];
    for f in faces.iter().filter(|f| f.alive) {
        for &v in &f.v {
            is_vertex[v] = true;
        }
    }
    (0..pts.len()).filter(|&i| is_vertex[i]).collect()
}

fn assign(i: usize, p: Vec3, faces: &mut [Face], candidates: &[usize], eps: f64) {
    let mut best = (eps, None);
    for &f in candidates {
        let d = faces[f].distance(p);
        if d > best.0 {
            best = (d, Some(f));
        }
    }
    if let Some(f) = best.1 {
        faces[f].outside.push(i);
    }
}

fn collinear_hull(pts: &[Vec3], origin: Vec3, dir: Vec3) -> Vec<usize> {
    let t = |i: usize| dir.dot(pts[i] - origin);
    let lo = (0..pts.len())
        .min_by(|&a, &b| t(a).total_cmp(&t(b)))
        .unwrap();
    let hi = (0..pts.len())
        .max_by(|&a, &b| t(a).total_cmp(&t(b)).then(b.cmp(&a)))
        .unwrap();
    let mut v = vec![lo, hi];
    v.sort_unstable();
    v.dedup();
    v
}

fn coplanar_hull(pts: &[Vec3], origin: Vec3, n: Vec3) -> Vec<usize> {
    let helper = if n.x.abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    let u = n.cross(helper).normalized();
    let w = n.cross(u);
    let proj: Vec<(f64, f64)> = pts
        .iter()
        .map(|p| (u.dot(*p - origin), w.dot(*p - origin)))
        .collect();
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| {
        proj[a]
            .0
            .total_cmp(&proj[b].0)
            .then(proj[a].1.total_cmp(&proj[b].1))
            .then(a.cmp(&b))
    });
    order.dedup_by(|a, b| proj[*a] == proj[*b]);
    let cross = |o: usize, a: usize, b: usize| {
        (proj[a].0 - proj[o].0) * (proj[b].1 - proj[o].1)
            - (proj[a].1 - proj[o].1) * (proj[b].0 - proj[o].0)
    };
    let mut hull: Vec<usize> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(order.iter())
        } else {
            Box::new(order.iter().rev())
        };
        for &i in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0
            {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    hull.sort_unstable();
    hull.dedup();
    hull
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStream, Seed};

    /// Hull vertices by facet enumeration: a triple spans a facet when every
    /// other point lies on one side of its plane.
    pub(crate) fn brute_force_hull(pts: &[Vec3]) -> Vec<usize> {
        let n = pts.len();
        let mut on = vec![false; n];
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    let normal = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
                    if normal.length() < 1e-12 {
                        continue;
                    }
                    let (mut pos, mut neg) = (false, false);
                    for (i, p) in pts.iter().enumerate() {
                        if i == a || i == b || i == c {
                            continue;
                        }
                        let d = normal.dot(*p - pts[a]);
                        pos |= d > 0.0;
                        neg |= d < 0.0;
                        if pos && neg {
                            break;
                        }
                    }
                    if !(pos && neg) {
                        on[a] = true;
                        on[b] = true;
                        on[c] = true;
                    }
                }
            }
        }
        (0..n).filter(|&i| on[i]).collect()
    }

    fn random_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut s = RngStream::new(Seed(seed));
        (0..n)
            .map(|_| Vec3::new(s.range(-1.0, 1.0), s.range(-1.0, 1.0), s.range(-1.0, 1.0)))
            .collect()
    }

    #[test]
    fn simplex_and_small_inputs() {
        let t = [
            Vec3::ZERO,
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        assert_eq!(convex_hull_3d(&t), vec![0, 1, 2, 3]);
        assert_eq!(convex_hull_3d(&t[..3]), vec![0, 1, 2]);
        assert!(convex_hull_3d(&[]).is_empty());
    }

    #[test]
    fn cube_with_center() {
        let mut pts = vec![Vec3::new(0.5, 0.5, 0.5)];
        for i in 0..8 {
            pts.push(Vec3::new(
                (i & 1) as f64,
                ((i >> 1) & 1) as f64,
                ((i >> 2) & 1) as f64,
            ));
        }
        assert_eq!(convex_hull_3d(&pts), (1..9).collect::<Vec<_>>());
    }

    #[test]
    fn matches_brute_force() {
        for seed in 0..5 {
            let pts = random_points(60, seed);
            assert_eq!(convex_hull_3d(&pts), brute_force_hull(&pts), "seed {seed}");
        }
    }

    #[test]
    fn sphere_points_all_on_hull() {
        let mut s = RngStream::new(Seed(8));
        let pts: Vec<Vec3> = (0..400)
            .map(|_| {
                let z = s.range(-1.0, 1.0);
                let a = s.range(0.0, std::f64::consts::TAU);
                let r = (1.0 - z * z).sqrt();
                Vec3::new(r * a.cos(), r * a.sin(), z)
            })
            .collect();
        assert_eq!(convex_hull_3d(&pts).len(), 400);
    }

    #[test]
    fn degenerate_inputs() {
        let same = vec![Vec3::new(1.0, 2.0, 3.0); 6];
        assert_eq!(convex_hull_3d(&same), vec![0]);
        let line: Vec<Vec3> = [3.0, -1.0, 0.5, 2.0, 7.0]
            .iter()
            .map(|&t| Vec3::new(t, 2.0 * t, -t))
            .collect();
        assert_eq!(convex_hull_3d(&line), vec![1, 4]);
        // square with centre and edge midpoint, tilted out of the axis planes
        let flat: Vec<Vec3> = [
            (0.0, 0.0),
            (2.0, 0.0),
            (2.0, 2.0),
            (0.0, 2.0),
            (1.0, 1.0),
            (1.0, 0.0),
        ]
        .iter()
        .map(|&(x, y)| Vec3::new(x, y, 0.5 * x + 0.25 * y))
        .collect();
        assert_eq!(convex_hull_3d(&flat), vec![0, 1, 2, 3]);
    }

    #[test]
    fn duplicates_do_not_break_hull() {
        let mut pts = random_points(80, 11);
        let copies: Vec<Vec3> = pts[..20].to_vec();
        pts.extend(copies);
        let hull = convex_hull_3d(&pts);
        let unique = brute_force_hull(&pts[..80]);
        // each hull corner is reported once, from either copy
        let mut seen: Vec<usize> = hull
            .iter()
            .map(|&i| if i >= 80 { i - 80 } else { i })
            .collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, unique);
    }
}
