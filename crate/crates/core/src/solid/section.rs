//! Planar cross-sections of solid models.
//!
//! Each step's prism is cut on its own: exactly when the plane is parallel
//! or perpendicular to the step's sketch plane, otherwise by contouring the
//! step's membership predicate with marching squares. The per-step regions
//! are then combined with polygon clipping in step order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::clip::{clip, point_in_loops, ClipOp};
use super::{BooleanOp, SolidError, SolidModel, Step};
use crate::geom::{Bounds2, Vec2, Vec3};
use crate::par::Exec;
use crate::render::{bresenham, Canvas, RasterImage, MIN_SIZE};

/// A cutting plane through `origin` with normal `normal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPlane {
    pub origin: Vec3,
    pub normal: Vec3,
}

/// Orthonormal in-plane axes. `x` is the global axis least aligned with the
/// normal, projected into the plane; `y = n × x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneBasis {
    pub origin: Vec3,
    pub n: Vec3,
    pub x: Vec3,
    pub y: Vec3,
}

impl SectionPlane {
    pub fn new(origin: Vec3, normal: Vec3) -> Self {
        Self { origin, normal }
    }

    /// Plane `axis = value` for axis 0/1/2 = x/y/z.
    pub fn axis(axis: usize, value: f64) -> Self {
        let mut o = Vec3::default();
        let mut n = Vec3::default();
        match axis {
            0 => (o.x, n.x) = (value, 1.0),
            1 => (o.y, n.y) = (value, 1.0),
            _ => (o.z, n.z) = (value, 1.0),
        }
        Self { origin: o, normal: n }
    }

    pub fn basis(&self) -> Result<PlaneBasis, SolidError> {
        if !self.origin.is_finite() {
            return Err(SolidError::DegeneratePlane);
        }
        let n = self.normal.normalized().ok_or(SolidError::DegeneratePlane)?;
        let axes = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
        let mut best = axes[0];
        for a in &axes[1..] {
            if a.dot(n).abs() < best.dot(n).abs() {
                best = *a;
            }
        }
        let x = (best - n * best.dot(n)).normalized().ok_or(SolidError::DegeneratePlane)?;
        let y = n.cross(x);
        Ok(PlaneBasis { origin: self.origin, n, x, y })
    }
}

impl PlaneBasis {
    pub fn to_plane(&self, p: Vec3) -> Vec2 {
        let d = p - self.origin;
        Vec2::new(d.dot(self.x), d.dot(self.y))
    }

    pub fn to_world(&self, q: Vec2) -> Vec3 {
        self.origin + self.x * q.x + self.y * q.y
    }
}

/// Closed loops in plane coordinates: outer boundaries counter-clockwise,
/// holes clockwise.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SectionPolygon {
    pub loops: Vec<Vec<Vec2>>,
}

pub fn signed_area(lp: &[Vec2]) -> f64 {
    let n = lp.len();
    (0..n).map(|i| lp[i].cross(lp[(i + 1) % n])).sum::<f64>() * 0.5
}

impl SectionPolygon {
    /// Cleans raw loops (drops repeated vertices and degenerate loops) and
    /// orients them by nesting depth.
    pub fn from_loops(raw: Vec<Vec<Vec2>>) -> Self {
        let mut loops: Vec<Vec<Vec2>> = raw
            .into_iter()
            .map(|mut lp| {
                lp.dedup_by(|a, b| a.distance(*b) <= 1e-13);
                while lp.len() > 1 && lp[0].distance(lp[lp.len() - 1]) <= 1e-13 {
                    lp.pop();
                }
                lp
            })
            .filter(|lp| lp.len() >= 3 && signed_area(lp).abs() > 1e-18)
            .collect();
        let depths: Vec<usize> = (0..loops.len())
            .map(|i| {
                let probe = interior_probe(&loops[i]);
                (0..loops.len()).filter(|&j| j != i && point_in_loops(std::slice::from_ref(&loops[j]), probe)).count()
            })
            .collect();
        for (lp, depth) in loops.iter_mut().zip(depths) {
            let ccw = signed_area(lp) > 0.0;
            if ccw != (depth % 2 == 0) {
                lp.reverse();
            }
        }
        Self { loops }
    }

    /// Even-odd area (outer loops minus holes).
    pub fn area(&self) -> f64 {
        self.loops.iter().map(|lp| signed_area(lp)).sum()
    }

    pub fn perimeter(&self) -> f64 {
        self.loops
            .iter()
            .map(|lp| (0..lp.len()).map(|i| lp[i].distance(lp[(i + 1) % lp.len()])).sum::<f64>())
            .sum()
    }

    pub fn contains(&self, p: Vec2) -> bool {
        point_in_loops(&self.loops, p)
    }

    pub fn is_empty(&self) -> bool {
        self.loops.is_empty()
    }

    pub fn bounds(&self) -> Bounds2 {
        let mut b = Bounds2::empty();
        for p in self.loops.iter().flatten() {
            b.include(*p);
        }
        b
    }
}

/// A point just beside the first edge, used to decide nesting without
/// landing on a vertex shared with another loop.
fn interior_probe(lp: &[Vec2]) -> Vec2 {
    let (a, b) = (lp[0], lp[1]);
    let side = if signed_area(lp) > 0.0 { 1.0 } else { -1.0 };
    a.lerp(b, 0.5) + (b - a).perp() * (side * 1e-6)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionMethod {
    /// Exact cuts where the plane is parallel or perpendicular to a step's
    /// sketch plane, contouring elsewhere.
    #[default]
    Auto,
    /// Contour every step.
    Contour,
}

/// Lattice points per side of the contouring domain.
pub const CONTOUR_RESOLUTION: usize = 1024;
const BLOCK: usize = 16;
const ALIGN_EPS: f64 = 1e-12;

pub fn cross_section_solid(model: &SolidModel, plane: &SectionPlane) -> Result<SectionPolygon, SolidError> {
    cross_section_solid_with(model, plane, SectionMethod::Auto, Exec::default())
}

pub fn cross_section_solid_with(
    model: &SolidModel,
    plane: &SectionPlane,
    method: SectionMethod,
    exec: Exec,
) -> Result<SectionPolygon, SolidError> {
    let basis = plane.basis()?;
    if model.is_empty() {
        return Err(SolidError::EmptyModel);
    }
    let mut acc: Vec<Vec<Vec2>> = Vec::new();
    for (k, step) in model.steps().iter().enumerate() {
        let region = step_region(step, &basis, method, exec);
        acc = if k == 0 {
            region
        } else {
            let op = match step.op.beta {
                BooleanOp::New | BooleanOp::Join => ClipOp::Union,
                BooleanOp::Cut => ClipOp::Difference,
                BooleanOp::Intersect => ClipOp::Intersection,
            };
            clip(&acc, &region, op)
        };
    }
    Ok(SectionPolygon::from_loops(acc))
}

/// Raw loops (even-odd) of one step's prism on the plane.
fn step_region(step: &Step, basis: &PlaneBasis, method: SectionMethod, exec: Exec) -> Vec<Vec<Vec2>> {
    let f = step.frame();
    let cos = basis.n.dot(f.n).abs();
    if method == SectionMethod::Auto && cos >= 1.0 - ALIGN_EPS {
        let h0 = (basis.origin - f.origin).dot(f.n);
        if h0 < -step.op.d_minus || h0 > step.op.d_plus {
            return Vec::new();
        }
        let b = step.profile().bounds();
        let tol = 1e-6 * b.diagonal().max(1e-12);
        return step
            .profile()
            .polylines(tol)
            .into_iter()
            .map(|lp| lp.into_iter().map(|q| basis.to_plane(f.to_world(q, h0))).collect())
            .collect();
    }
    if method == SectionMethod::Auto && cos <= ALIGN_EPS {
        // the plane meets the sketch plane in the line a x + b y = c
        let a = f.sigma * f.u.dot(basis.n);
        let b = f.sigma * f.v.dot(basis.n);
        let c = (basis.origin - f.origin).dot(basis.n);
        let g = Vec2::new(a, b);
        let q0 = g * (c / g.norm_sq());
        let d = g.perp().normalized().expect("perpendicular plane has an in-plane trace");
        let ts = step.profile().line_crossings(q0, d);
        return ts
            .chunks_exact(2)
            .map(|w| {
                let (p0, p1) = (q0 + d * w[0], q0 + d * w[1]);
                [(p0, -step.op.d_minus), (p1, -step.op.d_minus), (p1, step.op.d_plus), (p0, step.op.d_plus)]
                    .iter()
                    .map(|&(q, h)| basis.to_plane(f.to_world(q, h)))
                    .collect()
            })
            .collect();
    }
    let mut bounds = Bounds2::empty();
    let b = step.profile().bounds();
    for h in [-step.op.d_minus, step.op.d_plus] {
        for q in [b.min, Vec2::new(b.max.x, b.min.y), b.max, Vec2::new(b.min.x, b.max.y)] {
            bounds.include(basis.to_plane(f.to_world(q, h)));
        }
    }
    contour(&|q: Vec2| step.contains(basis.to_world(q)), bounds, CONTOUR_RESOLUTION, exec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum EdgeKey {
    /// Between lattice points (i, j) and (i + 1, j).
    H(usize, usize),
    /// Between lattice points (i, j) and (i, j + 1).
    V(usize, usize),
}

/// Marching-squares boundary of `{q : inside(q)}` inside `bounds`, on a
/// lattice with `resolution` points along the longer side. Only 16×16
/// blocks whose boundary samples disagree (plus their neighbors) are
/// evaluated in full; crossings are refined by bisection.
pub fn contour(
    inside: &(dyn Fn(Vec2) -> bool + Sync),
    bounds: Bounds2,
    resolution: usize,
    exec: Exec,
) -> Vec<Vec<Vec2>> {
    if bounds.is_empty() {
        return Vec::new();
    }
    let extent = bounds.width().max(bounds.height()).max(1e-12);
    let pad = 0.02 * extent;
    let min = bounds.min - Vec2::new(pad, pad);
    let cell = (extent + 2.0 * pad) / resolution as f64;
    let nx = (((bounds.width() + 2.0 * pad) / cell).ceil() as usize).max(1);
    let ny = (((bounds.height() + 2.0 * pad) / cell).ceil() as usize).max(1);
    let at = |i: usize, j: usize| min + Vec2::new(i as f64 * cell, j as f64 * cell);
    let stride = nx + 1;
    // 0 = not evaluated, 1 = outside, 2 = inside
    let mut grid = vec![0u8; stride * (ny + 1)];
    let code = |b: bool| if b { 2u8 } else { 1u8 };

    let line_rows: Vec<usize> = (0..=ny).filter(|j| j % BLOCK == 0 || *j == ny).collect();
    let line_cols: Vec<usize> = (0..=nx).filter(|i| i % BLOCK == 0 || *i == nx).collect();
    let rows = exec.map(&line_rows, |&j| (0..=nx).map(|i| code(inside(at(i, j)))).collect::<Vec<u8>>());
    for (&j, row) in line_rows.iter().zip(rows) {
        grid[j * stride..(j + 1) * stride].copy_from_slice(&row);
    }
    let cols = exec.map(&line_cols, |&i| (0..=ny).map(|j| code(inside(at(i, j)))).collect::<Vec<u8>>());
    for (&i, col) in line_cols.iter().zip(cols) {
        for (j, v) in col.into_iter().enumerate() {
            grid[j * stride + i] = v;
        }
    }

    let nbx = nx.div_ceil(BLOCK);
    let nby = ny.div_ceil(BLOCK);
    let block_range = |b: usize, n: usize| (b * BLOCK, ((b + 1) * BLOCK).min(n));
    let mut mixed = vec![false; nbx * nby];
    for by in 0..nby {
        for bx in 0..nbx {
            let (i0, i1) = block_range(bx, nx);
            let (j0, j1) = block_range(by, ny);
            let mut seen = 0u8;
            for i in i0..=i1 {
                seen |= grid[j0 * stride + i] | grid[j1 * stride + i];
            }
            for j in j0..=j1 {
                seen |= grid[j * stride + i0] | grid[j * stride + i1];
            }
            mixed[by * nbx + bx] = seen == 3;
        }
    }
    let mut marked = vec![false; nbx * nby];
    for by in 0..nby {
        for bx in 0..nbx {
            if !mixed[by * nbx + bx] {
                continue;
            }
            for y in by.saturating_sub(1)..=(by + 1).min(nby - 1) {
                for x in bx.saturating_sub(1)..=(bx + 1).min(nbx - 1) {
                    marked[y * nbx + x] = true;
                }
            }
        }
    }
    let blocks: Vec<(usize, usize)> =
        (0..nby).flat_map(|by| (0..nbx).map(move |bx| (bx, by))).filter(|&(bx, by)| marked[by * nbx + bx]).collect();
    let filled = exec.map(&blocks, |&(bx, by)| {
        let (i0, i1) = block_range(bx, nx);
        let (j0, j1) = block_range(by, ny);
        let mut vals = Vec::with_capacity((i1 - i0 + 1) * (j1 - j0 + 1));
        for j in j0..=j1 {
            for i in i0..=i1 {
                vals.push(code(inside(at(i, j))));
            }
        }
        vals
    });
    for (&(bx, by), vals) in blocks.iter().zip(filled) {
        let (i0, i1) = block_range(bx, nx);
        let (j0, j1) = block_range(by, ny);
        let w = i1 - i0 + 1;
        for j in j0..=j1 {
            for i in i0..=i1 {
                grid[j * stride + i] = vals[(j - j0) * w + (i - i0)];
            }
        }
    }

    // marching squares over the marked blocks
    let is_in = |i: usize, j: usize| grid[j * stride + i] == 2;
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for &(bx, by) in &blocks {
        let (i0, i1) = block_range(bx, nx);
        let (j0, j1) = block_range(by, ny);
        for j in j0..j1 {
            for i in i0..i1 {
                let (v00, v10, v11, v01) = (is_in(i, j), is_in(i + 1, j), is_in(i + 1, j + 1), is_in(i, j + 1));
                let bottom = EdgeKey::H(i, j);
                let right = EdgeKey::V(i + 1, j);
                let top = EdgeKey::H(i, j + 1);
                let left = EdgeKey::V(i, j);
                let mut crossing = Vec::with_capacity(4);
                if v00 != v10 {
                    crossing.push(bottom);
                }
                if v10 != v11 {
                    crossing.push(right);
                }
                if v11 != v01 {
                    crossing.push(top);
                }
                if v01 != v00 {
                    crossing.push(left);
                }
                match crossing.len() {
                    2 => segments.push((crossing[0], crossing[1])),
                    4 => {
                        let center = inside(at(i, j) + Vec2::new(0.5 * cell, 0.5 * cell));
                        if center == v00 {
                            segments.push((bottom, right));
                            segments.push((top, left));
                        } else {
                            segments.push((left, bottom));
                            segments.push((right, top));
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    let refine = |key: EdgeKey| -> Vec2 {
        let (a, b) = match key {
            EdgeKey::H(i, j) => ((i, j), (i + 1, j)),
            EdgeKey::V(i, j) => ((i, j), (i, j + 1)),
        };
        let (mut pin, mut pout) =
            if is_in(a.0, a.1) { (at(a.0, a.1), at(b.0, b.1)) } else { (at(b.0, b.1), at(a.0, a.1)) };
        for _ in 0..40 {
            let mid = pin.lerp(pout, 0.5);
            if inside(mid) {
                pin = mid;
            } else {
                pout = mid;
            }
        }
        pin.lerp(pout, 0.5)
    };
    let mut keys: Vec<EdgeKey> = segments.iter().flat_map(|&(a, b)| [a, b]).collect();
    keys.sort_by_key(|k| match *k {
        EdgeKey::H(i, j) => (0, j, i),
        EdgeKey::V(i, j) => (1, j, i),
    });
    keys.dedup();
    let points: HashMap<EdgeKey, Vec2> = keys.iter().copied().zip(exec.map(&keys, |&k| refine(k))).collect();
    chain_segments(&segments, |k| points[k])
}

/// Joins segments sharing endpoint keys into closed loops. Chains that do
/// not close are returned as-is (open).
pub(crate) fn chain_segments<K, F>(segments: &[(K, K)], point: F) -> Vec<Vec<Vec2>>
where
    K: Copy + Eq + std::hash::Hash,
    F: Fn(&K) -> Vec2,
{
    chain_segments_with_open(segments, point).0
}

/// Like [`chain_segments`], also returning the number of open chains.
pub(crate) fn chain_segments_with_open<K, F>(segments: &[(K, K)], point: F) -> (Vec<Vec<Vec2>>, usize)
where
    K: Copy + Eq + std::hash::Hash,
    F: Fn(&K) -> Vec2,
{
    let mut incident: HashMap<K, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        incident.entry(a).or_default().push(s);
        incident.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut loops = Vec::new();
    let mut open = 0;
    let next_from = |key: &K, used: &[bool]| incident.get(key).and_then(|v| v.iter().copied().find(|&s| !used[s]));
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (first, mut cursor) = segments[start];
        let mut keys = vec![first, cursor];
        let mut closed = false;
        loop {
            if cursor == first {
                keys.pop();
                closed = true;
                break;
            }
            let Some(s) = next_from(&cursor, &used) else { break };
            used[s] = true;
            let (a, b) = segments[s];
            cursor = if a == cursor { b } else { a };
            keys.push(cursor);
        }
        if !closed {
            // extend backwards from the first key to collect the whole chain
            let mut back = Vec::new();
            let mut cur = first;
            while let Some(s) = next_from(&cur, &used) {
                used[s] = true;
                let (a, b) = segments[s];
                cur = if a == cur { b } else { a };
                back.push(cur);
            }
            back.reverse();
            back.extend(keys);
            keys = back;
            open += 1;
        }
        loops.push(keys.iter().map(&point).collect());
    }
    (loops, open)
}

/// Rasterizes section loops as 1-pixel strokes.
pub fn section_image(section: &SectionPolygon, width: u32, height: u32) -> RasterImage {
    let width = width.max(MIN_SIZE);
    let height = height.max(MIN_SIZE);
    let mut img = RasterImage::new(width, height);
    let bounds = section.bounds();
    if bounds.is_empty() {
        return img;
    }
    let canvas = Canvas::fit(bounds, width, height);
    for lp in &section.loops {
        for i in 0..lp.len() {
            bresenham(&mut img, canvas.pixel(lp[i]), canvas.pixel(lp[(i + 1) % lp.len()]));
        }
    }
    img
}
