//! Input formats: the scan trajectory, per-scan point clouds and camera
//! frame manifests.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use atsdf::io::{read_label_image, read_points_ply, read_rgb_image};
use atsdf::synthbench::PoseSpec;
use atsdf::{Frame, Intrinsics, Pose, Vec3d};
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;

/// Sensor-to-world pose of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEntry {
    pub timestamp: f64,
    pub pose: Pose,
}

/// Parses `timestamp tx ty tz qx qy qz qw` lines. Blank lines and lines
/// starting with `#` are ignored.
pub fn read_trajectory<R: BufRead>(r: R) -> Result<Vec<TrajectoryEntry>, String> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 1)))
            .collect::<Result<_, _>>()?;
        if v.len() != 8 {
            return Err(format!("line {}: expected 8 values, got {}", i + 1, v.len()));
        }
        let pose = Pose::from_quaternion(Vec3d::new(v[1], v[2], v[3]), [v[4], v[5], v[6], v[7]])
            .map_err(|e| format!("line {}: {e}", i + 1))?;
        out.push(TrajectoryEntry { timestamp: v[0], pose });
    }
    Ok(out)
}

pub fn write_trajectory<W: Write>(mut w: W, entries: &[TrajectoryEntry]) -> std::io::Result<()> {
    for e in entries {
        let t = e.pose.translation();
        let [qx, qy, qz, qw] = e.pose.rotation().to_quaternion();
        writeln!(w, "{} {} {} {} {qx} {qy} {qz} {qw}", e.timestamp, t.x, t.y, t.z)?;
    }
    Ok(())
}

/// Scan point clouds in `dir`, sorted by file name.
pub fn scan_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| PipelineError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn read_scan(path: &Path) -> Result<Vec<Vec3d>, PipelineError> {
    let f = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    read_points_ply(BufReader::new(f)).map_err(|e| PipelineError::format(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub id: u32,
    /// Image path, relative to the manifest's directory.
    pub image: PathBuf,
    pub intrinsics: Intrinsics<f64>,
    /// Camera-to-world pose; the camera looks along +z with +y down.
    pub pose: PoseSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    pub frames: Vec<FrameEntry>,
}

impl FrameManifest {
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::input(path, e.to_string()))
    }

    /// Loads every frame. Label images must be single-channel class ids;
    /// color images are converted to RGB.
    pub fn load(&self, manifest_path: &Path, labels: bool) -> Result<Vec<Frame>, PipelineError> {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let mut seen = std::collections::BTreeSet::new();
        self.frames
            .iter()
            .map(|e| {
                if !seen.insert(e.id) {
                    return Err(PipelineError::input(manifest_path, format!("duplicate frame id {}", e.id)));
                }
                let path = base.join(&e.image);
                let image = if labels { read_label_image(&path) } else { read_rgb_image(&path) }
                    .map_err(|err| PipelineError::format(&path, err))?;
                let pose = e.pose.to_pose().map_err(|err| PipelineError::input(manifest_path, format!("frame {}: {err}", e.id)))?;
                Frame::new(e.intrinsics, pose, image, e.id)
                    .map_err(|err| PipelineError::input(manifest_path, format!("frame {}: {err}", e.id)))
            })
            .collect()
    }
}

pub fn pose_spec(pose: &Pose) -> PoseSpec {
    PoseSpec { translation: pose.translation().to_array(), rotation: pose.rotation().to_quaternion() }
}
