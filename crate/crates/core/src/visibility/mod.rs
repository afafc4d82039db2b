//! Occlusion-aware face/frame visibility.
//!
//! A face is visible in a camera when all three vertices project into the
//! image, it faces the camera with incidence cosine ≥ `min_cos`, and the ray
//! from the camera center to the face centroid meets no other face before
//! reaching it (minus a small bias).

mod bvh;

use std::io::{BufRead, Write};

use rayon::prelude::*;

pub use bvh::{intersect_triangle, Bvh, Hit, Ray, MAX_DEPTH};

use crate::camera::PinholeCamera;
use crate::error::FormatError;
use crate::mesher::TriangleMesh;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisibilityConfig<T> {
    pub min_cos: T,
    /// Distance (m) before the centroid inside which hits are ignored.
    pub occlusion_bias: T,
}

impl<T: Real> Default for VisibilityConfig<T> {
    fn default() -> Self {
        Self { min_cos: T::lit(0.05), occlusion_bias: T::lit(1e-4) }
    }
}

/// One visible (face, frame) combination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceView<T> {
    /// Index into the camera list passed to [`compute_visibility`].
    pub frame: u32,
    pub area_px: T,
    pub cos: T,
}

/// Visible frames per face, in camera order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VisibilityTable<T> {
    pub faces: Vec<Vec<FaceView<T>>>,
}

impl<T: Real> VisibilityTable<T> {
    pub fn views(&self, face: usize) -> &[FaceView<T>] {
        &self.faces[face]
    }

    pub fn visible_pairs(&self) -> usize {
        self.faces.iter().map(Vec::len).sum()
    }

    pub fn is_visible(&self, face: usize, frame: u32) -> bool {
        self.faces[face].iter().any(|v| v.frame == frame)
    }

    /// CSV dump: `face_id,frame_id,area_px2,cos`. `frame_ids` maps camera list
    /// positions to frame ids.
    pub fn write_csv<W: Write>(&self, mut w: W, frame_ids: &[u32]) -> std::io::Result<()> {
        writeln!(w, "face_id,frame_id,area_px2,cos")?;
        for (f, views) in self.faces.iter().enumerate() {
            for v in views {
                writeln!(w, "{},{},{},{}", f, frame_ids[v.frame as usize], v.area_px, v.cos)?;
            }
        }
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv). Rows must be grouped by face
    /// in ascending order with frames in camera order, as written.
    pub fn read_csv<R: BufRead>(r: R, face_count: usize, frame_ids: &[u32]) -> Result<Self, FormatError> {
        let mut faces = vec![Vec::new(); face_count];
        let mut lines = r.lines();
        match lines.next().transpose()? {
            Some(h) if h.trim() == "face_id,frame_id,area_px2,cos" => {}
            other => return Err(FormatError::BadHeader(format!("visibility header {other:?}"))),
        }
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| FormatError::Parse { line: i + 2, msg };
            let cols: Vec<&str> = line.trim().split(',').collect();
            if cols.len() != 4 {
                return Err(err(format!("expected 4 columns, got {}", cols.len())));
            }
            let face: usize = cols[0].parse().map_err(|e| err(format!("face id: {e}")))?;
            let id: u32 = cols[1].parse().map_err(|e| err(format!("frame id: {e}")))?;
            let area: f64 = cols[2].parse().map_err(|e| err(format!("area: {e}")))?;
            let cos: f64 = cols[3].parse().map_err(|e| err(format!("cos: {e}")))?;
            if face >= face_count {
                return Err(err(format!("face {face} out of range")));
            }
            let frame = frame_ids.iter().position(|&f| f == id).ok_or_else(|| err(format!("unknown frame id {id}")))?;
            faces[face].push(FaceView { frame: frame as u32, area_px: T::lit(area), cos: T::lit(cos) });
        }
        Ok(Self { faces })
    }
}

/// Visibility test for a single (face, camera) pair.
pub fn face_view<T: Real>(
    mesh: &TriangleMesh<T>,
    bvh: &Bvh<T>,
    face: usize,
    camera: &PinholeCamera<T>,
    cfg: &VisibilityConfig<T>,
) -> Option<(T, T)> {
    let tri = mesh.triangle(face);
    let area = camera.triangle_area_px(&tri).ok()?;
    if !(area > T::zero()) {
        return None;
    }
    let centroid = mesh.centroid(face);
    let to_cam = camera.center() - centroid;
    let dist = to_cam.norm();
    if !(dist > cfg.occlusion_bias) {
        return None;
    }
    let cos = mesh.normals()[face].dot(to_cam / dist);
    if cos < cfg.min_cos {
        return None;
    }
    let ray = Ray::new(camera.center(), centroid - camera.center());
    let t_max = T::one() - cfg.occlusion_bias / dist;
    if bvh.any_hit(&ray, T::zero(), t_max, Some(face as u32)) {
        return None;
    }
    Some((area, cos))
}

pub fn compute_visibility<T: Real>(
    mesh: &TriangleMesh<T>,
    bvh: &Bvh<T>,
    cameras: &[PinholeCamera<T>],
    cfg: &VisibilityConfig<T>,
) -> VisibilityTable<T> {
    let faces = (0..mesh.face_count())
        .into_par_iter()
        .map(|f| {
            cameras
                .iter()
                .enumerate()
                .filter_map(|(ci, cam)| {
                    face_view(mesh, bvh, f, cam, cfg).map(|(area_px, cos)| FaceView { frame: ci as u32, area_px, cos })
                })
                .collect()
        })
        .collect();
    VisibilityTable { faces }
}

#[cfg(test)]
mod tests;
