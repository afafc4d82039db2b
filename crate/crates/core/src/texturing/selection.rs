use rayon::prelude::*;
use serde::Serialize;

use super::quality::{face_quality, sobel_magnitude};
use crate::camera::CameraFrame;
use crate::error::MrfError;
use crate::mesher::{FaceAdjacency, TriangleMesh};
use crate::mrf::{solve, MrfProblem, SolverConfig};

/// Chosen source frame per face, as an index into the frame list; `None` for
/// faces no frame can texture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FaceViewAssignment {
    pub faces: Vec<Option<u32>>,
}

impl FaceViewAssignment {
    pub fn none_faces(&self) -> Vec<u32> {
        self.faces.iter().enumerate().filter(|(_, f)| f.is_none()).map(|(i, _)| i as u32).collect()
    }

    pub fn distinct_frames(&self) -> usize {
        let mut f: Vec<u32> = self.faces.iter().flatten().copied().collect();
        f.sort_unstable();
        f.dedup();
        f.len()
    }
}

/// Gradient-magnitude quality of every candidate `(face, frame)`.
///
/// Frames are visited one at a time so only one gradient image is alive.
pub fn face_qualities(mesh: &TriangleMesh<f64>, candidates: &[Vec<u32>], frames: &[CameraFrame<f64>]) -> Vec<Vec<(u32, f64)>> {
    let mut by_frame: Vec<Vec<(usize, usize)>> = vec![Vec::new(); frames.len()];
    for (face, cands) in candidates.iter().enumerate() {
        for (slot, &fr) in cands.iter().enumerate() {
            by_frame[fr as usize].push((face, slot));
        }
    }
    let mut out: Vec<Vec<(u32, f64)>> = candidates.iter().map(|c| c.iter().map(|&f| (f, 0.0)).collect()).collect();
    for (fi, jobs) in by_frame.iter().enumerate() {
        if jobs.is_empty() {
            continue;
        }
        let frame = &frames[fi];
        let grad = sobel_magnitude(&frame.image);
        let q: Vec<f64> = jobs
            .par_iter()
            .map(|&(face, _)| face_quality(&grad, &frame.camera, &mesh.triangle(face)).unwrap_or(0.0))
            .collect();
        for (&(face, slot), q) in jobs.iter().zip(q) {
            out[face][slot].1 = q;
        }
    }
    out
}

/// Solves the view-selection MRF: unary `-quality`, Potts weight `lambda_view`
/// on adjacent faces. Faces without candidates are left out of the problem
/// and come back as `None`.
pub fn select_views_from_quality(
    qualities: &[Vec<(u32, f64)>],
    adjacency: &FaceAdjacency,
    lambda_view: f64,
) -> Result<FaceViewAssignment, MrfError> {
    let mut problem = MrfProblem::new(lambda_view)?;
    let mut node_of = vec![usize::MAX; qualities.len()];
    for (face, q) in qualities.iter().enumerate() {
        if !q.is_empty() {
            node_of[face] = problem.add_node(q.iter().map(|&(f, e)| (f, -e)).collect())?;
        }
    }
    for &(a, b) in &adjacency.edges {
        let (na, nb) = (node_of[a as usize], node_of[b as usize]);
        if na != usize::MAX && nb != usize::MAX {
            problem.add_edge(na, nb)?;
        }
    }
    let solution = solve(&problem, &SolverConfig::default())?;
    let faces = node_of.iter().map(|&n| (n != usize::MAX).then(|| solution.labels[n])).collect();
    Ok(FaceViewAssignment { faces })
}

pub fn select_views(
    mesh: &TriangleMesh<f64>,
    adjacency: &FaceAdjacency,
    candidates: &[Vec<u32>],
    frames: &[CameraFrame<f64>],
    lambda_view: f64,
) -> Result<FaceViewAssignment, MrfError> {
    select_views_from_quality(&face_qualities(mesh, candidates, frames), adjacency, lambda_view)
}
