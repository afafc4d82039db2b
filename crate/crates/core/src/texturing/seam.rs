//! Global additive color leveling across chart seams.
//!
//! Every vertex gets one unknown correction per chart it belongs to. For a
//! vertex shared by charts `l` and `r`, the leveled colors `f_l + g_l` and
//! `f_r + g_r` should agree; within a chart, neighbouring corrections should
//! be similar. Per channel this is the least-squares problem
//!
//! ```text
//! min  sum_seam (f_l + g_l - f_r - g_r)^2 + lambda * sum_chart_edges (g_i - g_j)^2
//! ```
//!
//! solved by conjugate gradients on the normal equations, started at zero so
//! the iterate stays in the row space and converges to the minimum-norm
//! solution.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::Serialize;

use super::selection::FaceViewAssignment;
use crate::camera::CameraFrame;
use crate::error::TextureError;
use crate::mesher::{FaceAdjacency, TriangleMesh};

/// Maximal groups of adjacent faces sharing a source frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Charts {
    pub face_chart: Vec<Option<u32>>,
    pub chart_frame: Vec<u32>,
    pub chart_faces: Vec<Vec<u32>>,
}

impl Charts {
    pub fn len(&self) -> usize {
        self.chart_frame.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chart_frame.is_empty()
    }
}

/// Flood fill over face adjacency; charts are numbered by their lowest face.
pub fn build_charts(assignment: &FaceViewAssignment, adjacency: &FaceAdjacency) -> Charts {
    let n = assignment.faces.len();
    let nbrs = adjacency.neighbours(n);
    let mut face_chart = vec![None; n];
    let mut chart_frame = Vec::new();
    let mut chart_faces = Vec::new();
    for start in 0..n {
        let Some(frame) = assignment.faces[start] else { continue };
        if face_chart[start].is_some() {
            continue;
        }
        let id = chart_frame.len() as u32;
        let mut members = Vec::new();
        let mut queue = VecDeque::from([start as u32]);
        face_chart[start] = Some(id);
        while let Some(f) = queue.pop_front() {
            members.push(f);
            for &g in &nbrs[f as usize] {
                if face_chart[g as usize].is_none() && assignment.faces[g as usize] == Some(frame) {
                    face_chart[g as usize] = Some(id);
                    queue.push_back(g);
                }
            }
        }
        members.sort_unstable();
        chart_frame.push(frame);
        chart_faces.push(members);
    }
    Charts { face_chart, chart_frame, chart_faces }
}

/// One seam observation: instances `left` and `right` should end up with
/// the same leveled color.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeamTerm {
    pub left: u32,
    pub right: u32,
    pub f_left: [f64; 3],
    pub f_right: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeamSystem {
    pub instance_count: usize,
    pub seam_terms: Vec<SeamTerm>,
    pub regularization_edges: Vec<(u32, u32)>,
    pub lambda_seam: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeamSolution {
    pub corrections: Vec<[f64; 3]>,
    /// Largest per-channel Euclidean norm of the normal-equation residual.
    pub residual: f64,
    pub iterations: usize,
}

/// Symmetric sparse matrix in compressed rows.
struct Csr {
    row_start: Vec<usize>,
    col: Vec<u32>,
    val: Vec<f64>,
}

impl Csr {
    fn from_triplets(n: usize, mut t: Vec<(u32, u32, f64)>) -> Self {
        t.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_start = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(t.len());
        let mut val: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(u32, u32)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(j);
                val.push(v);
                row_start[i as usize + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_start[i + 1] += row_start[i];
        }
        Self { row_start, col, val }
    }

    fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_start[i]..self.row_start[i + 1] {
                s += self.val[k] * x[self.col[k] as usize];
            }
            *yi = s;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl SeamSystem {
    fn check(&self) -> Result<(), TextureError> {
        if !(self.lambda_seam.is_finite() && self.lambda_seam >= 0.0) {
            return Err(TextureError::SingularSystem(format!("lambda_seam must be finite and >= 0, got {}", self.lambda_seam)));
        }
        let n = self.instance_count as u32;
        let bad_term = self.seam_terms.iter().any(|t| t.left >= n || t.right >= n || t.left == t.right);
        let bad_edge = self.regularization_edges.iter().any(|&(i, j)| i >= n || j >= n);
        let non_finite = self.seam_terms.iter().any(|t| t.f_left.iter().chain(&t.f_right).any(|v| !v.is_finite()));
        if bad_term || bad_edge || non_finite {
            return Err(TextureError::SingularSystem("malformed seam system".into()));
        }
        Ok(())
    }

    /// Objective value at corrections `g`, summed over channels.
    pub fn objective(&self, g: &[[f64; 3]]) -> f64 {
        let mut e = 0.0;
        for t in &self.seam_terms {
            for c in 0..3 {
                e += (t.f_left[c] + g[t.left as usize][c] - t.f_right[c] - g[t.right as usize][c]).powi(2);
            }
        }
        for &(i, j) in &self.regularization_edges {
            for c in 0..3 {
                e += self.lambda_seam * (g[i as usize][c] - g[j as usize][c]).powi(2);
            }
        }
        e
    }

    fn normal_equations(&self) -> (Csr, [Vec<f64>; 3]) {
        let n = self.instance_count;
        let mut trip = Vec::with_capacity(4 * (self.seam_terms.len() + self.regularization_edges.len()));
        let mut rhs = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut pair = |i: u32, j: u32, w: f64| {
            trip.push((i, i, w));
            trip.push((j, j, w));
            trip.push((i, j, -w));
            trip.push((j, i, -w));
        };
        for t in &self.seam_terms {
            pair(t.left, t.right, 1.0);
        }
        if self.lambda_seam > 0.0 {
            for &(i, j) in &self.regularization_edges {
                if i != j {
                    pair(i, j, self.lambda_seam);
                }
            }
        }
        for t in &self.seam_terms {
            for (c, r) in rhs.iter_mut().enumerate() {
                let d = t.f_right[c] - t.f_left[c];
                r[t.left as usize] += d;
                r[t.right as usize] -= d;
            }
        }
        (Csr::from_triplets(n, trip), rhs)
    }

    /// Largest per-channel norm of `A^T A g - A^T b`.
    pub fn normal_residual(&self, g: &[[f64; 3]]) -> f64 {
        let (m, rhs) = self.normal_equations();
        let mut worst: f64 = 0.0;
        let mut y = vec![0.0; self.instance_count];
        for (c, b) in rhs.iter().enumerate() {
            let x: Vec<f64> = g.iter().map(|v| v[c]).collect();
            m.mul(&x, &mut y);
            let r: Vec<f64> = y.iter().zip(b).map(|(a, b)| a - b).collect();
            worst = worst.max(norm(&r));
        }
        worst
    }

    /// Connected components of the coupling graph.
    fn components(&self) -> Vec<u32> {
        let n = self.instance_count;
        let mut parent: Vec<u32> = (0..n as u32).collect();
        fn find(p: &mut [u32], mut x: u32) -> u32 {
            while p[x as usize] != x {
                p[x as usize] = p[p[x as usize] as usize];
                x = p[x as usize];
            }
            x
        }
        let mut unite = |a: u32, b: u32| {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb) as usize] = ra.min(rb);
            }
        };
        for t in &self.seam_terms {
            unite(t.left, t.right);
        }
        if self.lambda_seam > 0.0 {
            for &(i, j) in &self.regularization_edges {
                unite(i, j);
            }
        }
        (0..n as u32).map(|i| find(&mut parent, i)).collect()
    }

    pub fn solve(&self) -> Result<SeamSolution, TextureError> {
        self.check()?;
        let n = self.instance_count;
        if n == 0 {
            return Ok(SeamSolution { corrections: Vec::new(), residual: 0.0, iterations: 0 });
        }
        let (m, rhs) = self.normal_equations();
        let comp = self.components();
        let mut comp_size: HashMap<u32, f64> = HashMap::new();
        for &c in &comp {
            *comp_size.entry(c).or_default() += 1.0;
        }
        let mut g = vec![[0.0; 3]; n];
        let mut iterations = 0;
        let max_iter = (10 * n).max(200);
        // Jacobi-preconditioned CG; isolated instances have a zero diagonal
        // and a zero right-hand side, so they stay at zero.
        let inv_diag: Vec<f64> = (0..n)
            .map(|i| {
                let d: f64 = (m.row_start[i]..m.row_start[i + 1]).filter(|&k| m.col[k] as usize == i).map(|k| m.val[k]).sum();
                if d > 0.0 { 1.0 / d } else { 0.0 }
            })
            .collect();
        for (c, b) in rhs.iter().enumerate() {
            let target = (1e-15 * norm(b)).max(5e-10);
            let mut x = vec![0.0; n];
            let mut r = b.clone();
            let mut it = 0;
            // The recursively updated residual drifts from b - Mx, so restart
            // from the true residual until it meets the target.
            for _restart in 0..4 {
                if norm(&r) <= target {
                    break;
                }
                let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
                let mut p = z.clone();
                let mut ap = vec![0.0; n];
                let mut rz = dot(&r, &z);
                while norm(&r) > 0.1 * target && it < max_iter {
                    m.mul(&p, &mut ap);
                    let pap = dot(&p, &ap);
                    if pap <= 0.0 {
                        break;
                    }
                    let alpha = rz / pap;
                    for k in 0..n {
                        x[k] += alpha * p[k];
                        r[k] -= alpha * ap[k];
                        z[k] = r[k] * inv_diag[k];
                    }
                    let rz_new = dot(&r, &z);
                    let beta = rz_new / rz;
                    for k in 0..n {
                        p[k] = z[k] + beta * p[k];
                    }
                    rz = rz_new;
                    it += 1;
                }
                m.mul(&x, &mut r);
                for k in 0..n {
                    r[k] = b[k] - r[k];
                }
            }
            iterations = iterations.max(it);
            let mut mean: HashMap<u32, f64> = HashMap::new();
            for k in 0..n {
                *mean.entry(comp[k]).or_default() += x[k];
            }
            for k in 0..n {
                g[k][c] = x[k] - mean[&comp[k]] / comp_size[&comp[k]];
            }
        }
        let residual = self.normal_residual(&g);
        Ok(SeamSolution { corrections: g, residual, iterations })
    }
}

/// Result of leveling a textured mesh: the charts, the `(vertex, chart)`
/// instance numbering, the linear system and its solution.
#[derive(Debug, Clone)]
pub struct SeamLeveling {
    pub charts: Charts,
    pub instances: HashMap<(u32, u32), u32>,
    pub system: SeamSystem,
    pub solution: SeamSolution,
}

impl SeamLeveling {
    pub fn correction(&self, vertex: u32, chart: u32) -> [f64; 3] {
        self.instances.get(&(vertex, chart)).map(|&i| self.solution.corrections[i as usize]).unwrap_or([0.0; 3])
    }

    /// Leveling that applies no correction.
    pub fn identity(charts: Charts) -> Self {
        Self {
            charts,
            instances: HashMap::new(),
            system: SeamSystem { instance_count: 0, seam_terms: Vec::new(), regularization_edges: Vec::new(), lambda_seam: 0.0 },
            solution: SeamSolution { corrections: Vec::new(), residual: 0.0, iterations: 0 },
        }
    }
}

fn edge_key(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

/// Builds and solves the leveling system for `assignment`. Seam colors are
/// bilinear samples of each chart's source frame along the seam edges, with
/// each sample weighted toward the nearer endpoint.
pub fn seam_level(
    mesh: &TriangleMesh<f64>,
    adjacency: &FaceAdjacency,
    assignment: &FaceViewAssignment,
    frames: &[CameraFrame<f64>],
    lambda_seam: f64,
) -> Result<SeamLeveling, TextureError> {
    let charts = build_charts(assignment, adjacency);
    for &f in &charts.chart_frame {
        if f as usize >= frames.len() {
            return Err(TextureError::MissingFrame(f as usize));
        }
    }
    let faces = mesh.faces();

    let mut instances: HashMap<(u32, u32), u32> = HashMap::new();
    let mut edge_set: Vec<(u32, u32)> = Vec::new();
    for (chart, members) in charts.chart_faces.iter().enumerate() {
        let chart = chart as u32;
        for &f in members {
            let tri = faces[f as usize];
            for &v in &tri {
                let next = instances.len() as u32;
                instances.entry((v, chart)).or_insert(next);
            }
            for k in 0..3 {
                let (a, b) = edge_key(tri[k], tri[(k + 1) % 3]);
                edge_set.push((instances[&(a, chart)], instances[&(b, chart)]));
            }
        }
    }
    edge_set.sort_unstable();
    edge_set.dedup();

    // mesh edge -> charts of the faces using it
    let mut edge_charts: BTreeMap<(u32, u32), Vec<u32>> = BTreeMap::new();
    for (f, tri) in faces.iter().enumerate() {
        if let Some(c) = charts.face_chart[f] {
            for k in 0..3 {
                let list = edge_charts.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default();
                if !list.contains(&c) {
                    list.push(c);
                }
            }
        }
    }

    // (vertex, chart a, chart b) with a < b -> weighted color sums in a and b
    let mut acc: BTreeMap<(u32, u32, u32), ([f64; 3], [f64; 3], f64)> = BTreeMap::new();
    let verts = mesh.vertices();
    for (&(va, vb), list) in &edge_charts {
        if list.len() < 2 {
            continue;
        }
        let mut list = list.clone();
        list.sort_unstable();
        let (pa, pb) = (verts[va as usize], verts[vb as usize]);
        for i in 0..list.len() {
            for j in i + 1..list.len() {
                let (ca, cb) = (list[i], list[j]);
                let fa = &frames[charts.chart_frame[ca as usize] as usize];
                let fb = &frames[charts.chart_frame[cb as usize] as usize];
                let len_px = match (fa.project(pa), fa.project(pb)) {
                    (Some(x), Some(y)) => ((x.0 - y.0).powi(2) + (x.1 - y.1).powi(2)).sqrt(),
                    _ => 0.0,
                };
                let samples = (len_px.ceil() as usize).clamp(2, 32);
                for s in 0..samples {
                    let t = (s as f64 + 0.5) / samples as f64;
                    let p = pa + (pb - pa) * t;
                    let (Some(ua), Some(ub)) = (fa.project(p), fb.project(p)) else { continue };
                    let col_a: [f64; 3] = std::array::from_fn(|c| fa.image.sample_bilinear(ua.0, ua.1, c));
                    let col_b: [f64; 3] = std::array::from_fn(|c| fb.image.sample_bilinear(ub.0, ub.1, c));
                    for (v, w) in [(va, 1.0 - t), (vb, t)] {
                        let e = acc.entry((v, ca, cb)).or_insert(([0.0; 3], [0.0; 3], 0.0));
                        for c in 0..3 {
                            e.0[c] += w * col_a[c];
                            e.1[c] += w * col_b[c];
                        }
                        e.2 += w;
                    }
                }
            }
        }
    }
    let seam_terms = acc
        .into_iter()
        .filter(|(_, (_, _, w))| *w > 0.0)
        .map(|((v, ca, cb), (sa, sb, w))| SeamTerm {
            left: instances[&(v, ca)],
            right: instances[&(v, cb)],
            f_left: sa.map(|x| x / w),
            f_right: sb.map(|x| x / w),
        })
        .collect();

    let system = SeamSystem { instance_count: instances.len(), seam_terms, regularization_edges: edge_set, lambda_seam };
    let solution = system.solve()?;
    Ok(SeamLeveling { charts, instances, system, solution })
}
