//! Mesh texturing from posed camera frames: vignetting correction, per-face
//! view selection, photo-consistency filtering, seam leveling and atlas
//! baking.

mod atlas;
mod consistency;
mod quality;
mod raster;
mod seam;
mod selection;
mod vignetting;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use atlas::{bake_atlas, page_file_name, write_mtl, write_obj, AtlasConfig, ChartRect, TextureAtlas};
pub use consistency::{hsv_cone, photo_consistency_filter, ConsistencyConfig};
pub use quality::{face_color, face_quality, sobel_magnitude};
pub use raster::{barycentric, rasterize_triangle};
pub use seam::{build_charts, seam_level, Charts, SeamLeveling, SeamSolution, SeamSystem, SeamTerm};
pub use selection::{face_qualities, select_views, select_views_from_quality, FaceViewAssignment};
pub use vignetting::{apply_vignette, vignetting_correct, VignettingModel};

use crate::camera::CameraFrame;
use crate::error::{MrfError, TextureError};
use crate::mesher::{FaceAdjacency, TriangleMesh};
use crate::visibility::VisibilityTable;

pub const DEFAULT_LAMBDA_VIEW: f64 = 10.0;
pub const DEFAULT_LAMBDA_SEAM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TexturingConfig {
    pub lambda_view: f64,
    pub lambda_seam: f64,
    pub vignetting: VignettingModel,
    pub consistency: ConsistencyConfig,
    pub atlas: AtlasConfig,
}

impl Default for TexturingConfig {
    fn default() -> Self {
        Self {
            lambda_view: DEFAULT_LAMBDA_VIEW,
            lambda_seam: DEFAULT_LAMBDA_SEAM,
            vignetting: VignettingModel::default(),
            consistency: ConsistencyConfig::default(),
            atlas: AtlasConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TexturedMesh {
    /// Per face, the frames surviving the photo-consistency filter.
    pub candidates: Vec<Vec<u32>>,
    pub assignment: FaceViewAssignment,
    pub leveling: SeamLeveling,
    pub atlas: TextureAtlas,
    /// Views removed by the consistency filter, summed over faces.
    pub rejected_views: usize,
}

/// Applies the vignetting model to every frame image.
pub fn correct_frames(frames: &[CameraFrame<f64>], model: &VignettingModel) -> Result<Vec<CameraFrame<f64>>, TextureError> {
    frames
        .par_iter()
        .map(|f| {
            Ok(CameraFrame { camera: f.camera.clone(), image: vignetting_correct(&f.image, model)?, frame_id: f.frame_id })
        })
        .collect()
}

/// Per face, the visible frames whose mean face colors pass the consistency
/// filter.
pub fn filter_candidates(
    mesh: &TriangleMesh<f64>,
    visibility: &VisibilityTable<f64>,
    frames: &[CameraFrame<f64>],
    cfg: &ConsistencyConfig,
) -> Vec<Vec<u32>> {
    (0..mesh.face_count())
        .into_par_iter()
        .map(|f| {
            let tri = mesh.triangle(f);
            let views: Vec<(u32, [f64; 3])> = visibility
                .views(f)
                .iter()
                .filter_map(|v| face_color(&frames[v.frame as usize].image, &frames[v.frame as usize].camera, &tri).map(|c| (v.frame, c)))
                .collect();
            let colors: Vec<[f64; 3]> = views.iter().map(|v| v.1).collect();
            photo_consistency_filter(&colors, cfg).into_iter().map(|i| views[i].0).collect()
        })
        .collect()
}

/// Runs filtering, view selection, seam leveling and baking on frames that
/// are already vignetting-corrected.
pub fn texture_mesh(
    mesh: &TriangleMesh<f64>,
    adjacency: &FaceAdjacency,
    visibility: &VisibilityTable<f64>,
    corrected_frames: &[CameraFrame<f64>],
    cfg: &TexturingConfig,
) -> Result<TexturedMesh, TextureError> {
    let candidates = filter_candidates(mesh, visibility, corrected_frames, &cfg.consistency);
    let rejected_views = visibility.visible_pairs() - candidates.iter().map(Vec::len).sum::<usize>();
    let assignment = select_views(mesh, adjacency, &candidates, corrected_frames, cfg.lambda_view).map_err(|e| match e {
        MrfError::InvalidWeight(w) => TextureError::SingularSystem(format!("invalid lambda_view {w}")),
        other => TextureError::SingularSystem(other.to_string()),
    })?;
    let leveling = seam_level(mesh, adjacency, &assignment, corrected_frames, cfg.lambda_seam)?;
    let atlas = bake_atlas(mesh, corrected_frames, &leveling, &cfg.atlas)?;
    Ok(TexturedMesh { candidates, assignment, leveling, atlas, rejected_views })
}

#[derive(Debug, Clone, Serialize)]
struct FaceViewRecord {
    face: u32,
    frame_id: Option<u32>,
    chart: Option<u32>,
}

/// JSON sidecar mapping each face to the id of the frame that textures it.
pub fn face_views_json(textured: &TexturedMesh, frames: &[CameraFrame<f64>]) -> serde_json::Value {
    let faces: Vec<FaceViewRecord> = textured
        .assignment
        .faces
        .iter()
        .enumerate()
        .map(|(f, a)| FaceViewRecord {
            face: f as u32,
            frame_id: a.map(|i| frames[i as usize].frame_id),
            chart: textured.leveling.charts.face_chart[f],
        })
        .collect();
    serde_json::json!({
        "faces": faces,
        "none_faces": textured.atlas.none_faces,
        "charts": textured.leveling.charts.len(),
        "pages": textured.atlas.pages.len(),
    })
}

#[cfg(test)]
mod tests;
