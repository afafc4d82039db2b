//! The simulate stage: scans, trajectory, rendered frames and ground truth
//! for the synthetic benchmark, written in the pipeline's input formats.

use std::path::Path;

use atsdf::io::{encode_png, write_points_ply};
use atsdf::semantic::{ClassInfo, ClassPalette};
use atsdf::synthbench::{benchmark_palette, render, simulate_scan, OrbitProtocol, SceneSpec};
use atsdf::texturing::apply_vignette;
use atsdf::{Intrinsics, Vec3d};
use serde_json::json;

use crate::artifacts::{write_atomic, write_bytes, write_json};
use crate::config::PipelineConfig;
use crate::error::PipelineError;
use crate::manifest::{pose_spec, write_trajectory, FrameEntry, FrameManifest, TrajectoryEntry};

pub const SCANS_DIR: &str = "scans";
pub const TRAJECTORY: &str = "trajectory.txt";
pub const FRAMES: &str = "frames.json";
pub const LABEL_FRAMES: &str = "label_frames.json";
pub const PALETTE: &str = "palette.json";
pub const SCENE: &str = "scene.json";
pub const IMAGES_DIR: &str = "images";

/// Palette covering every class in `scene`. Names come from the benchmark
/// palette where the ids overlap.
pub fn scene_palette(scene: &SceneSpec) -> ClassPalette {
    let bench = benchmark_palette();
    let top = scene.primitives.iter().map(|p| p.class).chain([scene.sky_class, 1]).max().unwrap_or(1);
    let classes = (0..=top)
        .map(|id| {
            let color = if id == scene.sky_class {
                scene.sky_color
            } else {
                scene.primitives.iter().find(|p| p.class == id).map(|p| p.color).unwrap_or([0, 0, 0])
            };
            let name = bench.classes.get(id as usize).map(|c| c.name.clone()).unwrap_or_else(|| format!("class_{id}"));
            ClassInfo { id, name, color }
        })
        .collect();
    ClassPalette { classes }
}

/// Writes everything under `dir` and returns the stage metrics.
pub fn run_simulation(cfg: &PipelineConfig, dir: &Path) -> Result<serde_json::Value, PipelineError> {
    let s = &cfg.simulate;
    let pattern = cfg.beam_pattern()?;
    let poses = s.orbit.sensor_poses()?;
    let scans_dir = dir.join(SCANS_DIR);
    let mut trajectory = Vec::new();
    let mut total_points = 0usize;
    for (k, (timestamp, pose)) in poses.iter().enumerate().step_by(s.scan_stride) {
        let world = simulate_scan(&s.scene, pose, &pattern, cfg.seed.wrapping_add(k as u64))?;
        let to_sensor = pose.inverse();
        let local: Vec<Vec3d> = world.iter().map(|&p| to_sensor.transform_point(p)).collect();
        total_points += local.len();
        let path = scans_dir.join(format!("scan_{k:05}.ply"));
        write_atomic(&path, |w| write_points_ply(w, &local).map_err(|e| PipelineError::io(&path, e)))?;
        trajectory.push(TrajectoryEntry { timestamp: *timestamp, pose: pose.clone() });
    }
    let traj_path = dir.join(TRAJECTORY);
    write_atomic(&traj_path, |w| write_trajectory(w, &trajectory).map_err(|e| PipelineError::io(&traj_path, e)))?;

    let c = &s.cameras;
    let ring = OrbitProtocol {
        radius: c.radius.unwrap_or(s.orbit.radius),
        height: c.height_above_ground.unwrap_or(s.orbit.height),
        ..s.orbit
    };
    let intrinsics = Intrinsics { fx: c.focal, fy: c.focal, cx: (c.width as f64 - 1.0) / 2.0, cy: (c.height as f64 - 1.0) / 2.0 };
    let cameras = ring.cameras(c.count, intrinsics, c.width, c.height, Vec3d::from_array(c.target))?;
    let mut frames = FrameManifest::default();
    let mut labels = FrameManifest::default();
    for (i, cam) in cameras.iter().enumerate() {
        let (color, label) = render(&s.scene, cam)?;
        let color = apply_vignette(&color, &cfg.texturing.vignetting)?;
        let color_name = format!("{IMAGES_DIR}/color_{i:04}.png");
        let label_name = format!("{IMAGES_DIR}/label_{i:04}.png");
        for (name, img) in [(&color_name, &color), (&label_name, &label)] {
            let path = dir.join(name);
            write_bytes(&path, &encode_png(img).map_err(|e| PipelineError::format(&path, e))?)?;
        }
        let entry = |image: &str| FrameEntry { id: i as u32, image: image.into(), intrinsics, pose: pose_spec(cam.pose()) };
        frames.frames.push(entry(&color_name));
        labels.frames.push(entry(&label_name));
    }
    write_json(&dir.join(FRAMES), &frames)?;
    write_json(&dir.join(LABEL_FRAMES), &labels)?;
    write_json(&dir.join(SCENE), &s.scene)?;
    write_json(&dir.join(PALETTE), &scene_palette(&s.scene))?;
    Ok(json!({
        "scans": trajectory.len(),
        "points": total_points,
        "beams": s.beams,
        "azimuth_count": pattern.azimuth_count(),
        "frames": cameras.len(),
    }))
}
