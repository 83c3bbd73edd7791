//! Marching-cubes surface extraction for binary masks.
//!
//! The case table is derived from the cube faces rather than hand-written:
//! on every face the iso-contour is a set of segments whose pairing depends
//! only on the four corner values of that face, with ambiguous faces always
//! separating the inside corners. Adjacent cells therefore agree on every
//! shared face, the inside is treated as 6-connected, and the surface is
//! watertight. Segments are chained into closed loops per cell; loops with
//! more than three vertices are triangulated as a star around their
//! centroid, so no two cells can produce the same interior edge and every
//! mesh edge has exactly two incident triangles.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::volume::BinaryMask;

/// Default minimum component size accepted for meshing.
pub const DEFAULT_MIN_VOXELS: usize = 100;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OrientedPointCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

impl OrientedPointCloud {
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::InvalidConfig("points and normals differ in length".into()));
        }
        Ok(OrientedPointCloud { points, normals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        if self.points.is_empty() {
            return Vec3::ZERO;
        }
        let sum = self.points.iter().fold(Vec3::ZERO, |acc, &p| acc + p);
        sum / self.points.len() as f64
    }
}

impl TriangleMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Sorted undirected edges with their incidence count.
    pub fn edge_incidence(&self) -> Vec<((u32, u32), u32)> {
        let mut edges: Vec<(u32, u32)> = Vec::with_capacity(self.triangles.len() * 3);
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                edges.push(if a < b { (a, b) } else { (b, a) });
            }
        }
        edges.sort_unstable();
        let mut out: Vec<((u32, u32), u32)> = Vec::new();
        for e in edges {
            match out.last_mut() {
                Some((last, n)) if *last == e => *n += 1,
                _ => out.push((e, 1)),
            }
        }
        out
    }

    /// Every edge shared by exactly two triangles, and every directed edge
    /// used once (consistent winding).
    pub fn is_closed_manifold(&self) -> bool {
        if self.triangles.is_empty() {
            return false;
        }
        if !self.edge_incidence().iter().all(|&(_, n)| n == 2) {
            return false;
        }
        let mut directed: Vec<(u32, u32)> =
            self.triangles.iter().flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]).collect();
        directed.sort_unstable();
        directed.windows(2).all(|w| w[0] != w[1])
    }

    /// `V − E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        let e = self.edge_incidence().len() as i64;
        self.vertices.len() as i64 - e + self.triangles.len() as i64
    }

    /// Signed enclosed volume by the divergence theorem; positive for
    /// outward winding.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                a.dot(b.cross(c)) / 6.0
            })
            .sum()
    }

    pub fn surface_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                (b - a).cross(c - a).norm() / 2.0
            })
            .sum()
    }

    /// Reverses winding and normals.
    pub fn flipped(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|t| [t[0], t[2], t[1]]).collect(),
            normals: self.normals.iter().map(|&n| -n).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        if self.normals.len() != self.vertices.len() {
            return Err(Error::DegenerateGeometry("normals/vertices length mismatch".into()));
        }
        if self.triangles.iter().any(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::DegenerateGeometry("triangle references missing vertex".into()));
        }
        Ok(())
    }
}

/// One point per mesh vertex carrying its normal.
pub fn to_point_cloud(mesh: &TriangleMesh) -> OrientedPointCloud {
    OrientedPointCloud { points: mesh.vertices.clone(), normals: mesh.normals.clone() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshOptions {
    pub min_voxels: usize,
    /// One pass of 3×3×3 majority smoothing before extraction.
    pub smooth: bool,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions { min_voxels: DEFAULT_MIN_VOXELS, smooth: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshOutput {
    pub mesh: TriangleMesh,
    /// Number of smaller 6-connected components that were discarded.
    pub dropped_components: usize,
    pub smoothed: bool,
}

// Corner c of a cell has offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// Cell edges as (start corner, axis); the end corner is `start | 1 << axis`.
const EDGES: [(usize, usize); 12] =
    [(0, 0), (2, 0), (4, 0), (6, 0), (0, 1), (1, 1), (4, 1), (5, 1), (0, 2), (1, 2), (2, 2), (3, 2)];

fn edge_between(a: usize, b: usize) -> usize {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let axis = (hi ^ lo).trailing_zeros() as usize;
    EDGES.iter().position(|&(s, ax)| s == lo && ax == axis).expect("corners are not adjacent")
}

fn edge_midpoint(e: usize) -> Vec3 {
    let (s, axis) = EDGES[e];
    let o = corner_offset(s);
    let mut p = [o[0] as f64, o[1] as f64, o[2] as f64];
    p[axis] += 0.5;
    Vec3::from_array(p)
}

fn corner_pos(c: usize) -> Vec3 {
    let o = corner_offset(c);
    Vec3::new(o[0] as f64, o[1] as f64, o[2] as f64)
}

/// Corners of each face in cyclic order, with the outward face normal.
fn faces() -> [([usize; 4], Vec3); 6] {
    let mut out = [([0usize; 4], Vec3::ZERO); 6];
    let mut n = 0;
    for axis in 0..3 {
        let (b, c) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for side in 0..2 {
            let base = side << axis;
            let ring = [base, base | (1 << b), base | (1 << b) | (1 << c), base | (1 << c)];
            let mut normal = [0.0; 3];
            normal[axis] = if side == 0 { -1.0 } else { 1.0 };
            out[n] = (ring, Vec3::from_array(normal));
            n += 1;
        }
    }
    out
}

/// For one corner configuration, the closed loops of cell-edge indices,
/// ordered counter-clockwise around the outward surface normal.
fn case_loops(config: u8) -> Vec<Vec<u8>> {
    let inside = |c: usize| config & (1 << c) != 0;
    let mut next = [u8::MAX; 12];
    for (ring, nf) in faces() {
        let crossing: Vec<usize> = (0..4).filter(|&i| inside(ring[i]) != inside(ring[(i + 1) % 4])).collect();
        // Segments as (face-edge slot a, face-edge slot b); slot i joins ring[i], ring[i + 1].
        let mut segments: Vec<(usize, usize)> = Vec::new();
        match crossing.len() {
            0 => {}
            2 => segments.push((crossing[0], crossing[1])),
            4 => {
                // Ambiguous face: cut off each inside corner separately.
                for i in 0..4 {
                    if inside(ring[i]) {
                        segments.push(((i + 3) % 4, i));
                    }
                }
            }
            _ => unreachable!("a face has an even number of crossings"),
        }
        for (sa, sb) in segments {
            let ea = edge_between(ring[sa], ring[(sa + 1) % 4]);
            let eb = edge_between(ring[sb], ring[(sb + 1) % 4]);
            // Corner shared by the two face edges, if adjacent.
            let shared = if (sa + 1) % 4 == sb {
                Some(ring[sb])
            } else if (sb + 1) % 4 == sa {
                Some(ring[sa])
            } else {
                None
            };
            let (reference, sign) = match shared {
                Some(c) => (c, if inside(c) { 1.0 } else { -1.0 }),
                None => (*ring.iter().find(|&&c| inside(c)).expect("face has an inside corner"), 1.0),
            };
            let p = edge_midpoint(ea);
            let q = edge_midpoint(eb);
            let s = sign * (q - p).cross(nf).dot(corner_pos(reference) - p);
            let (from, to) = if s > 0.0 { (ea, eb) } else { (eb, ea) };
            debug_assert_eq!(next[from], u8::MAX);
            next[from] = to as u8;
        }
    }
    let mut used = [false; 12];
    let mut loops = Vec::new();
    for start in 0..12 {
        if next[start] == u8::MAX || used[start] {
            continue;
        }
        let mut lp = Vec::new();
        let mut e = start;
        while !used[e] {
            used[e] = true;
            lp.push(e as u8);
            e = next[e] as usize;
        }
        debug_assert_eq!(e, start);
        loops.push(lp);
    }
    loops
}

fn case_table() -> Vec<Vec<Vec<u8>>> {
    (0..=255u8).map(case_loops).collect()
}

/// Extracts the 0.5 iso-surface of `mask` with vertices at edge midpoints
/// and area-weighted unit vertex normals, in patient-frame millimetres.
pub fn marching_cubes(mask: &BinaryMask, opts: &MeshOptions) -> Result<MeshOutput> {
    if mask.count() == 0 {
        return Err(Error::EmptyInput);
    }
    let (largest, dropped) = mask.largest_component();
    if largest.count() < opts.min_voxels {
        return Err(Error::TooSmall { voxels: largest.count(), min: opts.min_voxels });
    }
    let mut work = largest.cropped(1)?;
    if opts.smooth {
        work = work.box_smoothed();
        if work.count() == 0 {
            return Err(Error::EmptyInput);
        }
        work = work.largest_component().0.cropped(1)?;
    }
    let mesh = extract(&work);
    Ok(MeshOutput { mesh, dropped_components: dropped, smoothed: opts.smooth })
}

fn extract(mask: &BinaryMask) -> TriangleMesh {
    let table = case_table();
    let geo = *mask.geometry();
    let [nx, ny, nz] = geo.dims;
    let flip = geo.direction.determinant() < 0.0;
    let mut edge_vertex = vec![u32::MAX; geo.len() * 3];
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    for k in 0..nz.saturating_sub(1) {
        for j in 0..ny.saturating_sub(1) {
            for i in 0..nx.saturating_sub(1) {
                let mut config = 0u8;
                for c in 0..8 {
                    let o = corner_offset(c);
                    if mask.get(i + o[0], j + o[1], k + o[2]) {
                        config |= 1 << c;
                    }
                }
                if config == 0 || config == 255 {
                    continue;
                }
                for lp in &table[config as usize] {
                    let mut ids: Vec<u32> = Vec::with_capacity(lp.len());
                    let mut local_sum = Vec3::ZERO;
                    for &e in lp {
                        let (s, axis) = EDGES[e as usize];
                        let o = corner_offset(s);
                        let key = 3 * geo.index(i + o[0], j + o[1], k + o[2]) + axis;
                        let local = edge_midpoint(e as usize);
                        local_sum += local;
                        if edge_vertex[key] == u32::MAX {
                            let ijk = Vec3::new(i as f64, j as f64, k as f64) + local;
                            edge_vertex[key] = vertices.len() as u32;
                            vertices.push(geo.to_world(ijk));
                        }
                        ids.push(edge_vertex[key]);
                    }
                    let mut emit = |a: u32, b: u32, c: u32| {
                        triangles.push(if flip { [a, c, b] } else { [a, b, c] });
                    };
                    if ids.len() == 3 {
                        emit(ids[0], ids[1], ids[2]);
                    } else {
                        let centre = Vec3::new(i as f64, j as f64, k as f64) + local_sum / ids.len() as f64;
                        let cid = vertices.len() as u32;
                        vertices.push(geo.to_world(centre));
                        for n in 0..ids.len() {
                            emit(cid, ids[n], ids[(n + 1) % ids.len()]);
                        }
                    }
                }
            }
        }
    }

    let mut acc = vec![Vec3::ZERO; vertices.len()];
    for t in &triangles {
        let [a, b, c] = t.map(|i| vertices[i as usize]);
        // |cross| is twice the area, so this weights by area.
        let n = (b - a).cross(c - a);
        for &i in t {
            acc[i as usize] += n;
        }
    }
    let normals = acc.into_iter().map(|n| n.normalized().unwrap_or(Vec3::Z)).collect();
    TriangleMesh { vertices, triangles, normals }
}
