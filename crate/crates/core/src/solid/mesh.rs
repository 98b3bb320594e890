//! Triangle meshes: OBJ/STL input and planar slicing.

use std::collections::HashMap;

use super::section::{chain_segments_with_open, SectionPlane, SectionPolygon};
use super::SolidError;
use crate::geom::Vec3;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn diagonal(&self) -> f64 {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
            hi = Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
        }
        if self.vertices.is_empty() {
            0.0
        } else {
            (hi - lo).norm()
        }
    }

    /// Merges vertices closer than `tol` (grid hashing, first vertex wins)
    /// and drops triangles that collapse.
    pub fn welded(&self, tol: f64) -> Mesh {
        if tol <= 0.0 {
            return self.clone();
        }
        let cell = |v: Vec3| ((v.x / tol).floor() as i64, (v.y / tol).floor() as i64, (v.z / tol).floor() as i64);
        let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        let mut remap = Vec::with_capacity(self.vertices.len());
        let mut vertices: Vec<Vec3> = Vec::new();
        for &v in &self.vertices {
            let (cx, cy, cz) = cell(v);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(list) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                            if let Some(&k) = list.iter().find(|&&k| (vertices[k] - v).norm() <= tol) {
                                found = Some(k);
                                break 'search;
                            }
                        }
                    }
                }
            }
            let k = found.unwrap_or_else(|| {
                vertices.push(v);
                grid.entry((cx, cy, cz)).or_default().push(vertices.len() - 1);
                vertices.len() - 1
            });
            remap.push(k);
        }
        let triangles = self
            .triangles
            .iter()
            .map(|t| [remap[t[0]], remap[t[1]], remap[t[2]]])
            .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2])
            .collect();
        Mesh { vertices, triangles }
    }

    /// Axis-aligned unit cube `[0, 1]^3`, two triangles per face.
    pub fn unit_cube() -> Mesh {
        let vertices = (0..8)
            .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
        let triangles = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
        Mesh { vertices, triangles }
    }

    /// Unit icosphere with `subdivisions` rounds of 4-way splitting.
    pub fn icosphere(subdivisions: usize) -> Mesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let raw = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ];
        let mut vertices: Vec<Vec3> =
            raw.iter().map(|&(x, y, z)| Vec3::new(x, y, z).normalized().expect("nonzero")).collect();
        let mut triangles: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
            let mut next = Vec::with_capacity(triangles.len() * 4);
            let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    vertices.push(vertices[a].lerp(vertices[b], 0.5).normalized().expect("nonzero"));
                    vertices.len() - 1
                })
            };
            for [a, b, c] in triangles {
                let ab = midpoint(a, b, &mut vertices);
                let bc = midpoint(b, c, &mut vertices);
                let ca = midpoint(c, a, &mut vertices);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            triangles = next;
        }
        Mesh { vertices, triangles }
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {:?} {:?} {:?}\n", v.x, v.y, v.z));
        }
        for t in &self.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        out
    }

    pub fn to_stl_binary(&self) -> Vec<u8> {
        let mut out = vec![0u8; 80];
        out.extend_from_slice(&(self.triangles.len() as u32).to_le_bytes());
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.vertices[i]);
            let n = (b - a).cross(c - a).normalized().unwrap_or_default();
            for v in [n, a, b, c] {
                for x in [v.x, v.y, v.z] {
                    out.extend_from_slice(&(x as f32).to_le_bytes());
                }
            }
            out.extend_from_slice(&[0, 0]);
        }
        out
    }
}

/// ASCII OBJ: `v x y z` and `f a b c ...` records (polygons are fanned,
/// `a/b/c` index forms and negative indices accepted).
pub fn parse_obj(text: &str) -> Result<Mesh, SolidError> {
    let mut mesh = Mesh::default();
    for (lineno, line) in text.lines().enumerate() {
        let err = |m: &str| SolidError::MeshParse(format!("line {}: {m}", lineno + 1));
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let xs: Vec<f64> = it.take(3).map(str::parse).collect::<Result<_, _>>().map_err(|_| err("bad vertex"))?;
                if xs.len() != 3 {
                    return Err(err("vertex needs three coordinates"));
                }
                mesh.vertices.push(Vec3::new(xs[0], xs[1], xs[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|tok| {
                        let first = tok.split('/').next().unwrap_or("");
                        let i: i64 = first.parse().map_err(|_| err("bad face index"))?;
                        let n = mesh.vertices.len() as i64;
                        let k = if i < 0 { n + i } else { i - 1 };
                        if k < 0 || k >= n {
                            return Err(err("face index out of range"));
                        }
                        Ok(k as usize)
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(err("face needs at least three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(mesh)
}

/// Binary or ASCII STL.
pub fn parse_stl(bytes: &[u8]) -> Result<Mesh, SolidError> {
    if bytes.len() >= 84 {
        let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        if bytes.len() == 84 + 50 * n {
            return parse_stl_binary(bytes, n);
        }
    }
    let text = std::str::from_utf8(bytes).map_err(|_| SolidError::MeshParse("not a binary or ASCII STL".into()))?;
    let mut mesh = Mesh::default();
    let mut corner = Vec::with_capacity(3);
    for (lineno, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        if it.next() == Some("vertex") {
            let xs: Vec<f64> = it
                .take(3)
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| SolidError::MeshParse(format!("line {}: bad vertex", lineno + 1)))?;
            if xs.len() != 3 {
                return Err(SolidError::MeshParse(format!("line {}: vertex needs three coordinates", lineno + 1)));
            }
            mesh.vertices.push(Vec3::new(xs[0], xs[1], xs[2]));
            corner.push(mesh.vertices.len() - 1);
            if corner.len() == 3 {
                mesh.triangles.push([corner[0], corner[1], corner[2]]);
                corner.clear();
            }
        }
    }
    if !corner.is_empty() {
        return Err(SolidError::MeshParse("facet with fewer than three vertices".into()));
    }
    Ok(mesh)
}

fn parse_stl_binary(bytes: &[u8], n: usize) -> Result<Mesh, SolidError> {
    let mut mesh = Mesh::default();
    let f = |o: usize| f64::from(f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]));
    for t in 0..n {
        let base = 84 + 50 * t + 12;
        let mut tri = [0usize; 3];
        for (k, slot) in tri.iter_mut().enumerate() {
            let o = base + 12 * k;
            mesh.vertices.push(Vec3::new(f(o), f(o + 4), f(o + 8)));
            *slot = mesh.vertices.len() - 1;
        }
        mesh.triangles.push(tri);
    }
    Ok(mesh)
}

/// Slices a mesh with a plane. Vertices are welded within 1e-6 of the mesh
/// diagonal; each vertex is classified as on the positive side when its
/// signed distance is `>= 0`, and every triangle with mixed sides yields one
/// segment between points keyed by the crossing mesh edges. Open chains
/// are reported through [`SolidError::UnclosableLoops`] together with the
/// closed loops that were found.
pub fn cross_section_mesh(mesh: &Mesh, plane: &SectionPlane) -> Result<SectionPolygon, SolidError> {
    if mesh.triangles.is_empty() {
        return Err(SolidError::EmptyMesh);
    }
    let basis = plane.basis()?;
    let mesh = mesh.welded(1e-6 * mesh.diagonal());
    let dist: Vec<f64> = mesh.vertices.iter().map(|&v| (v - basis.origin).dot(basis.n)).collect();
    let above = |i: usize| dist[i] >= 0.0;
    let mut segments: Vec<((usize, usize), (usize, usize))> = Vec::new();
    for t in &mesh.triangles {
        let mut keys = Vec::with_capacity(2);
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            if above(a) != above(b) {
                keys.push((a.min(b), a.max(b)));
            }
        }
        if keys.len() == 2 {
            segments.push((keys[0], keys[1]));
        }
    }
    // every crossing edge must be shared by two triangles for the chain to
    // close; with triangle soups that is only true after welding
    let point = |&(a, b): &(usize, usize)| {
        let (da, db) = (dist[a], dist[b]);
        let p = mesh.vertices[a].lerp(mesh.vertices[b], da / (da - db));
        basis.to_plane(p)
    };
    let (raw, open) = chain_segments_with_open(&segments, point);
    if open > 0 {
        let closed: Vec<_> = raw.into_iter().filter(|lp| lp.len() >= 3).collect();
        return Err(SolidError::UnclosableLoops { open_chains: open, partial: SectionPolygon::from_loops(closed) });
    }
    Ok(SectionPolygon::from_loops(raw))
}
