//! Median-split bounding volume hierarchy over mesh faces.

use crate::geometry::{Aabb, Vec3};
use crate::mesher::TriangleMesh;
use crate::scalar::Real;

const LEAF_SIZE: usize = 4;
pub const MAX_DEPTH: usize = 64;

#[derive(Clone, Copy, Debug)]
pub struct Ray<T> {
    pub origin: Vec3<T>,
    pub dir: Vec3<T>,
}

impl<T: Real> Ray<T> {
    pub fn new(origin: Vec3<T>, dir: Vec3<T>) -> Self {
        Self { origin, dir }
    }

    #[inline]
    pub fn at(&self, t: T) -> Vec3<T> {
        self.origin + self.dir * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit<T> {
    pub face: u32,
    pub t: T,
}

/// Möller–Trumbore ray/triangle test without back-face culling. Returns the
/// ray parameter of the hit when it lies strictly inside `(t_min, t_max)`.
#[inline]
pub fn intersect_triangle<T: Real>(ray: &Ray<T>, tri: &[Vec3<T>; 3], t_min: T, t_max: T) -> Option<T> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = ray.dir.cross(e2);
    let det = e1.dot(p);
    if det == T::zero() || !det.is_finite() {
        return None;
    }
    let inv = T::one() / det;
    let s = ray.origin - tri[0];
    let u = s.dot(p) * inv;
    if u < T::zero() || u > T::one() {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.dir.dot(q) * inv;
    if v < T::zero() || u + v > T::one() {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > t_min && t < t_max).then_some(t)
}

#[derive(Clone, Copy, Debug)]
enum NodeKind {
    Interior { left: u32, right: u32 },
    Leaf { start: u32, count: u32 },
}

#[derive(Clone, Copy, Debug)]
struct Node<T> {
    bounds: Aabb<T>,
    kind: NodeKind,
}

/// Immutable after construction; safe to query from many threads.
#[derive(Clone, Debug)]
pub struct Bvh<T> {
    nodes: Vec<Node<T>>,
    order: Vec<u32>,
    triangles: Vec<[Vec3<T>; 3]>,
    depth: usize,
}

impl<T: Real> Bvh<T> {
    pub fn build(mesh: &TriangleMesh<T>) -> Self {
        let triangles: Vec<_> = (0..mesh.face_count()).map(|f| mesh.triangle(f)).collect();
        let boxes: Vec<Aabb<T>> = triangles.iter().map(|t| Aabb::from_points(t)).collect();
        let scale = boxes.iter().fold(Aabb::empty(), |a, b| a.union(*b));
        let magnitude = if triangles.is_empty() {
            T::one()
        } else {
            scale.min.to_array().iter().chain(scale.max.to_array().iter()).fold(T::one(), |m, v| m.max(v.abs()))
        };
        // boxes are padded so that box rejection is never stricter than the triangle test
        let pad = Vec3::splat(magnitude * T::epsilon().sqrt());
        let centroids: Vec<Vec3<T>> = triangles.iter().map(|t| (t[0] + t[1] + t[2]) / T::lit(3.0)).collect();
        let mut order: Vec<u32> = (0..triangles.len() as u32).collect();
        let mut bvh = Self { nodes: Vec::new(), order: Vec::new(), triangles: Vec::new(), depth: 0 };
        if !order.is_empty() {
            bvh.build_node(&mut order, 0, &boxes, &centroids, pad, 1);
        }
        bvh.triangles = order.iter().map(|&f| triangles[f as usize]).collect();
        bvh.order = order;
        assert!(bvh.depth <= MAX_DEPTH, "BVH depth {} exceeds {}", bvh.depth, MAX_DEPTH);
        bvh
    }

    fn build_node(
        &mut self,
        faces: &mut [u32],
        start: usize,
        boxes: &[Aabb<T>],
        centroids: &[Vec3<T>],
        pad: Vec3<T>,
        depth: usize,
    ) -> u32 {
        self.depth = self.depth.max(depth);
        let b = faces.iter().fold(Aabb::empty(), |a, &f| a.union(boxes[f as usize]));
        let bounds = Aabb { min: b.min - pad, max: b.max + pad };
        let id = self.nodes.len() as u32;
        self.nodes.push(Node { bounds, kind: NodeKind::Leaf { start: start as u32, count: faces.len() as u32 } });
        if faces.len() <= LEAF_SIZE {
            return id;
        }
        let cb = faces.iter().fold(Aabb::empty(), |a, &f| a.grow(centroids[f as usize]));
        let axis = cb.largest_axis();
        let mid = faces.len() / 2;
        faces.select_nth_unstable_by(mid, |&a, &b| {
            centroids[a as usize][axis]
                .partial_cmp(&centroids[b as usize][axis])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let (lo, hi) = faces.split_at_mut(mid);
        let left = self.build_node(lo, start, boxes, centroids, pad, depth + 1);
        let right = self.build_node(hi, start + mid, boxes, centroids, pad, depth + 1);
        self.nodes[id as usize].kind = NodeKind::Interior { left, right };
        id
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root_bounds(&self) -> Option<Aabb<T>> {
        self.nodes.first().map(|n| n.bounds)
    }

    /// Checks structural invariants: every face in exactly one leaf and parent
    /// boxes containing their children.
    pub fn validate(&self) -> bool {
        let mut seen = vec![0u32; self.order.len()];
        for n in &self.nodes {
            match n.kind {
                NodeKind::Leaf { start, count } => {
                    for &f in &self.order[start as usize..(start + count) as usize] {
                        seen[f as usize] += 1;
                    }
                }
                NodeKind::Interior { left, right } => {
                    let (l, r) = (&self.nodes[left as usize], &self.nodes[right as usize]);
                    if !n.bounds.contains_box(&l.bounds) || !n.bounds.contains_box(&r.bounds) {
                        return false;
                    }
                }
            }
        }
        seen.iter().all(|&c| c == 1)
    }

    #[inline]
    fn hits_box(bounds: &Aabb<T>, ray: &Ray<T>, inv: &Vec3<T>, t_min: T, t_max: T) -> bool {
        let mut lo = t_min;
        let mut hi = t_max;
        for k in 0..3 {
            let t1 = (bounds.min[k] - ray.origin[k]) * inv[k];
            let t2 = (bounds.max[k] - ray.origin[k]) * inv[k];
            if t1.is_nan() || t2.is_nan() {
                // ray parallel to and on a slab plane: treat as inside the slab
                continue;
            }
            let (a, b) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            lo = lo.max(a);
            hi = hi.min(b);
            if lo > hi {
                return false;
            }
        }
        true
    }

    /// Visits every leaf whose box the ray enters; `visit` returns `false` to stop.
    fn traverse(&self, ray: &Ray<T>, t_min: T, t_max: T, mut visit: impl FnMut(u32, &[Vec3<T>; 3]) -> bool) {
        if self.nodes.is_empty() {
            return;
        }
        let inv = Vec3::new(T::one() / ray.dir.x, T::one() / ray.dir.y, T::one() / ray.dir.z);
        let mut stack = [0u32; MAX_DEPTH + 2];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if !Self::hits_box(&node.bounds, ray, &inv, t_min, t_max) {
                continue;
            }
            match node.kind {
                NodeKind::Interior { left, right } => {
                    stack[sp] = right;
                    stack[sp + 1] = left;
                    sp += 2;
                }
                NodeKind::Leaf { start, count } => {
                    for i in start as usize..(start + count) as usize {
                        if !visit(self.order[i], &self.triangles[i]) {
                            return;
                        }
                    }
                }
            }
        }
    }

    /// All faces hit within `(t_min, t_max)`, sorted by face index.
    pub fn intersect_all(&self, ray: &Ray<T>, t_min: T, t_max: T) -> Vec<Hit<T>> {
        let mut hits = Vec::new();
        self.traverse(ray, t_min, t_max, |face, tri| {
            if let Some(t) = intersect_triangle(ray, tri, t_min, t_max) {
                hits.push(Hit { face, t });
            }
            true
        });
        hits.sort_by_key(|h| h.face);
        hits
    }

    /// Nearest hit; ties go to the lower face index.
    pub fn closest_hit(&self, ray: &Ray<T>, t_min: T, t_max: T) -> Option<Hit<T>> {
        let mut best: Option<Hit<T>> = None;
        self.traverse(ray, t_min, t_max, |face, tri| {
            let limit = best.map_or(t_max, |b| b.t.min(t_max));
            let upper = limit + limit.abs() * T::epsilon();
            if let Some(t) = intersect_triangle(ray, tri, t_min, upper) {
                let better = match best {
                    None => true,
                    Some(b) => t < b.t || (t == b.t && face < b.face),
                };
                if better && t < t_max {
                    best = Some(Hit { face, t });
                }
            }
            true
        });
        best
    }

    /// Whether any face other than `exclude` is hit within `(t_min, t_max)`.
    pub fn any_hit(&self, ray: &Ray<T>, t_min: T, t_max: T, exclude: Option<u32>) -> bool {
        let mut found = false;
        self.traverse(ray, t_min, t_max, |face, tri| {
            if Some(face) != exclude && intersect_triangle(ray, tri, t_min, t_max).is_some() {
                found = true;
                return false;
            }
            true
        });
        found
    }
}
