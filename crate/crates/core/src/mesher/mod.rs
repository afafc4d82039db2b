//! Zero-isosurface extraction from a [`TsdfVolume`] and face adjacency.
//!
//! Marching cubes over the dual grid of voxel centers. Each block meshes the
//! cells whose minimum corner it owns, reading a one-voxel apron from its
//! +x/+y/+z neighbours, so neighbouring blocks agree on shared cells. Vertices
//! are welded by the global id of the grid edge (or grid corner) they lie on,
//! which makes the output crack-free without any spatial tolerance.

mod tables;

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use crate::error::MeshError;
use crate::geometry::{Aabb, Vec3};
use crate::scalar::Real;
use crate::volume::{BlockCoord, TsdfVolume, BLOCK_SIDE};
use tables::{CORNERS, EDGES, EDGE_TABLE, TRI_TABLE};

/// Faces with an area below this (m²) are dropped.
pub const MIN_FACE_AREA: f64 = 1e-12;
/// Default minimum accumulated weight for a voxel to take part in meshing.
pub const DEFAULT_ISO_WEIGHT_MIN: f64 = 1.0;

/// Indexed triangle mesh with per-face unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh<T> {
    vertices: Vec<Vec3<T>>,
    faces: Vec<[u32; 3]>,
    normals: Vec<Vec3<T>>,
}

impl<T: Real> Default for TriangleMesh<T> {
    fn default() -> Self {
        Self { vertices: Vec::new(), faces: Vec::new(), normals: Vec::new() }
    }
}

impl<T: Real> TriangleMesh<T> {
    /// Validates indices and drops faces whose area is below [`MIN_FACE_AREA`].
    pub fn new(vertices: Vec<Vec3<T>>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        let count = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&v| v as usize >= count) {
                return Err(MeshError::IndexOutOfRange { face: fi, vertex: bad as usize, count });
            }
        }
        let min_area = T::lit(MIN_FACE_AREA);
        let mut kept = Vec::with_capacity(faces.len());
        let mut normals = Vec::with_capacity(faces.len());
        for f in faces {
            let [a, b, c] = f.map(|i| vertices[i as usize]);
            let cross = (b - a).cross(c - a);
            let area = cross.norm() * T::lit(0.5);
            if area >= min_area {
                kept.push(f);
                normals.push(cross / (area + area));
            }
        }
        Ok(Self { vertices, faces: kept, normals })
    }

    #[inline]
    pub fn vertices(&self) -> &[Vec3<T>] {
        &self.vertices
    }

    #[inline]
    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    #[inline]
    pub fn normals(&self) -> &[Vec3<T>] {
        &self.normals
    }

    #[inline]
    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    #[inline]
    pub fn triangle(&self, f: usize) -> [Vec3<T>; 3] {
        self.faces[f].map(|i| self.vertices[i as usize])
    }

    #[inline]
    pub fn centroid(&self, f: usize) -> Vec3<T> {
        let [a, b, c] = self.triangle(f);
        (a + b + c) / T::lit(3.0)
    }

    pub fn face_area(&self, f: usize) -> T {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(c - a).norm() * T::lit(0.5)
    }

    pub fn surface_area(&self) -> T {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn bounds(&self) -> Aabb<T> {
        Aabb::from_points(&self.vertices)
    }

    /// Keeps only the listed faces; vertices are left untouched.
    pub fn retain_faces(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut faces = Vec::new();
        let mut normals = Vec::new();
        for f in 0..self.faces.len() {
            if keep(f) {
                faces.push(self.faces[f]);
                normals.push(self.normals[f]);
            }
        }
        Self { vertices: self.vertices.clone(), faces, normals }
    }

    pub fn cast<U: Real>(&self) -> TriangleMesh<U> {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v.cast()).collect(),
            faces: self.faces.clone(),
            normals: self.normals.iter().map(|v| v.cast()).collect(),
        }
    }
}

/// Unordered pairs of faces sharing an edge, stored as `(i, j)` with `i < j`
/// in ascending order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FaceAdjacency {
    pub edges: Vec<(u32, u32)>,
}

impl FaceAdjacency {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Per-face neighbour lists.
    pub fn neighbours(&self, face_count: usize) -> Vec<Vec<u32>> {
        let mut n = vec![Vec::new(); face_count];
        for &(a, b) in &self.edges {
            n[a as usize].push(b);
            n[b as usize].push(a);
        }
        n
    }
}

/// Pairs of faces sharing exactly two vertex indices.
pub fn build_adjacency<T: Real>(mesh: &TriangleMesh<T>) -> FaceAdjacency {
    let mut by_edge: HashMap<(u32, u32), Vec<u32>> = HashMap::with_capacity(mesh.faces.len() * 3 / 2);
    for (fi, f) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            by_edge.entry((a.min(b), a.max(b))).or_default().push(fi as u32);
        }
    }
    let mut pairs = BTreeSet::new();
    for faces in by_edge.values() {
        for (i, &a) in faces.iter().enumerate() {
            for &b in &faces[i + 1..] {
                if a != b {
                    pairs.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    let shared = |a: u32, b: u32| {
        let fa = mesh.faces[a as usize];
        let fb = mesh.faces[b as usize];
        let mut s: Vec<u32> = fa.iter().copied().filter(|v| fb.contains(v)).collect();
        s.dedup();
        s.len()
    };
    FaceAdjacency { edges: pairs.into_iter().filter(|&(a, b)| shared(a, b) == 2).collect() }
}

/// Weld key: a grid corner (`axis == 3`) or the grid edge leaving corner
/// `voxel` along `axis`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct VertexKey {
    voxel: [i64; 3],
    axis: u8,
}

struct BlockMesh<T> {
    vertices: Vec<(VertexKey, Vec3<T>)>,
    triangles: Vec<[u32; 3]>,
}

const APRON: usize = BLOCK_SIDE + 1;

/// Extracts the `tsdf = 0` surface. Only cells whose eight corners all carry
/// weight ≥ `iso_weight_min` and change sign are meshed.
pub fn extract_mesh<T: Real>(volume: &TsdfVolume<T>, iso_weight_min: T) -> Result<TriangleMesh<T>, MeshError> {
    let any_observed = volume.blocks().iter().any(|b| b.voxels.iter().any(|v| v.is_observed()));
    if !any_observed {
        return Err(MeshError::EmptyVolume);
    }
    let coords = volume.sorted_coords();
    let parts: Vec<BlockMesh<T>> =
        coords.par_iter().map(|&c| mesh_block(volume, c, iso_weight_min)).collect();

    let mut index: HashMap<VertexKey, u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for part in parts {
        let remap: Vec<u32> = part
            .vertices
            .iter()
            .map(|(key, pos)| {
                *index.entry(*key).or_insert_with(|| {
                    vertices.push(*pos);
                    (vertices.len() - 1) as u32
                })
            })
            .collect();
        for t in part.triangles {
            let f = t.map(|i| remap[i as usize]);
            if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
                faces.push(f);
            }
        }
    }
    TriangleMesh::new(vertices, faces)
}

fn mesh_block<T: Real>(volume: &TsdfVolume<T>, coord: BlockCoord, iso_weight_min: T) -> BlockMesh<T> {
    // 9³ samples: this block plus a one-voxel apron on the + sides
    let mut samples: Vec<Option<T>> = vec![None; APRON * APRON * APRON];
    let origin = coord.origin_voxel();
    let side = BLOCK_SIDE as i32;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let Some(block) = volume.block(BlockCoord::new(coord.x + dx, coord.y + dy, coord.z + dz)) else {
                    continue;
                };
                let range = |d: i32| if d == 0 { 0..BLOCK_SIDE } else { 0..1 };
                for z in range(dz) {
                    for y in range(dy) {
                        for x in range(dx) {
                            let v = block.voxel(x, y, z);
                            if v.is_observed() && v.weight >= iso_weight_min {
                                let (sx, sy, sz) =
                                    (x + (dx * side) as usize, y + (dy * side) as usize, z + (dz * side) as usize);
                                samples[(sz * APRON + sy) * APRON + sx] = Some(v.tsdf);
                            }
                        }
                    }
                }
            }
        }
    }

    let vs = volume.voxel_size();
    let mut local: HashMap<VertexKey, u32> = HashMap::new();
    let mut out = BlockMesh { vertices: Vec::new(), triangles: Vec::new() };
    let mut values = [T::zero(); 8];
    for z in 0..BLOCK_SIDE {
        for y in 0..BLOCK_SIDE {
            'cell: for x in 0..BLOCK_SIDE {
                let mut case = 0usize;
                for (i, c) in CORNERS.iter().enumerate() {
                    match samples[((z + c[2]) * APRON + y + c[1]) * APRON + x + c[0]] {
                        Some(v) => {
                            values[i] = v;
                            if v < T::zero() {
                                case |= 1 << i;
                            }
                        }
                        None => continue 'cell,
                    }
                }
                if EDGE_TABLE[case] == 0 {
                    continue;
                }
                let base = [origin[0] + x as i64, origin[1] + y as i64, origin[2] + z as i64];
                let mut edge_vertex = [u32::MAX; 12];
                for (e, &(ca, cb)) in EDGES.iter().enumerate() {
                    if EDGE_TABLE[case] & (1 << e) == 0 {
                        continue;
                    }
                    let (va, vb) = (values[ca], values[cb]);
                    let t = va / (va - vb);
                    let corner = |c: usize| [base[0] + CORNERS[c][0] as i64, base[1] + CORNERS[c][1] as i64, base[2] + CORNERS[c][2] as i64];
                    let (ga, gb) = (corner(ca), corner(cb));
                    let axis = (0..3).find(|&k| ga[k] != gb[k]).expect("cell edge");
                    let key = if t <= T::zero() {
                        VertexKey { voxel: ga, axis: 3 }
                    } else if t >= T::one() {
                        VertexKey { voxel: gb, axis: 3 }
                    } else {
                        VertexKey { voxel: ga, axis: axis as u8 }
                    };
                    let id = *local.entry(key).or_insert_with(|| {
                        let pa = volume.voxel_center(ga);
                        let pos = if key.axis == 3 {
                            volume.voxel_center(key.voxel)
                        } else {
                            let mut p = pa.to_array();
                            p[axis] = p[axis] + t * vs;
                            Vec3::from_array(p)
                        };
                        out.vertices.push((key, pos));
                        (out.vertices.len() - 1) as u32
                    });
                    edge_vertex[e] = id;
                }
                for tri in TRI_TABLE[case].chunks_exact(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    out.triangles.push([
                        edge_vertex[tri[0] as usize],
                        edge_vertex[tri[2] as usize],
                        edge_vertex[tri[1] as usize],
                    ]);
                }
            }
        }
    }
    out
}

/// Trilinear interpolation of the TSDF at `p`, if all eight surrounding
/// voxels are allocated.
pub fn interpolate_tsdf<T: Real>(volume: &TsdfVolume<T>, p: Vec3<T>) -> Option<T> {
    let vs = volume.voxel_size();
    let h = T::lit(0.5);
    let g = [p.x / vs - h, p.y / vs - h, p.z / vs - h];
    let base = g.map(|c| c.floor());
    let f = [g[0] - base[0], g[1] - base[1], g[2] - base[2]];
    let b = base.map(|c| c.to_i64().unwrap());
    let mut acc = T::zero();
    for c in CORNERS {
        let v = volume.voxel([b[0] + c[0] as i64, b[1] + c[1] as i64, b[2] + c[2] as i64])?;
        let w = (0..3).fold(T::one(), |w, k| w * if c[k] == 1 { f[k] } else { T::one() - f[k] });
        acc = acc + w * v.tsdf;
    }
    Some(acc)
}

#[cfg(test)]
mod tests;
