//! Stage orchestration.

use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use atsdf::io::{read_mesh_ply, write_mesh_ply, FaceLabels};
use atsdf::semantic::{accumulate_votes, fuse_labels, labels_json, ClassPalette};
use atsdf::synthbench::{mesh_error_with_bins, SceneSpec};
use atsdf::texturing::{correct_frames, face_views_json, page_file_name, texture_mesh, write_mtl, write_obj};
use atsdf::volume::{read_volume, write_volume};
use atsdf::{
    build_adjacency, compute_visibility, extract_mesh, Bvh, Camera, Frame, IntegrationConfig, Mesh, TruncationConfig,
    VisibilityConfig, VisibilityTable, Volume,
};
use log::info;
use serde_json::{json, Value};

use crate::artifacts::{self, write_atomic, write_bytes, write_json};
use crate::config::{InputPaths, PipelineConfig};
use crate::error::PipelineError;
use crate::manifest::{read_scan, read_trajectory, scan_files, FrameManifest};
use crate::simulate::run_simulation;

/// Stages in execution order.
pub const STAGES: [&str; 7] = ["simulate", "reconstruct", "mesh", "visibility", "texture", "semantic", "evaluate"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub stages: Vec<&'static str>,
    /// Stage name and its metrics record, in execution order.
    pub metrics: Vec<(&'static str, Value)>,
}

/// Validates `cfg` and runs every enabled stage. On failure `error.json` is
/// written to the output directory before the error is returned.
pub fn run(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    let result = cfg.validate().and_then(|()| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
        pool.install(|| Runner::new(cfg).execute())
    });
    if let Err(e) = &result {
        let path = cfg.output_path(artifacts::FAILURE);
        // The original error matters more than a failure to report it.
        let _ = write_json(&path, &e.report());
    }
    result
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    inputs: InputPaths,
    volume: Option<Volume>,
    mesh: Option<Mesh>,
    /// Table together with the cameras it was computed for.
    visibility: Option<(Vec<Camera>, VisibilityTable<f64>)>,
    fused_classes: Option<Vec<u32>>,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a PipelineConfig) -> Self {
        Self { cfg, inputs: cfg.resolved_inputs(), volume: None, mesh: None, visibility: None, fused_classes: None }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_path(name)
    }

    fn execute(mut self) -> Result<RunSummary, PipelineError> {
        let dir = &self.cfg.output_dir;
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let _ = std::fs::remove_file(self.out(artifacts::FAILURE));
        let st = self.cfg.stages;
        let enabled = [st.simulate, st.reconstruct, st.mesh, st.visibility, st.texture, st.semantic, st.evaluate];
        let mut summary = RunSummary::default();
        for (stage, on) in STAGES.into_iter().zip(enabled) {
            if !on {
                continue;
            }
            let start = Instant::now();
            let metrics = match stage {
                "simulate" => run_simulation(self.cfg, &self.out(artifacts::SIM_DIR)),
                "reconstruct" => self.reconstruct(),
                "mesh" => self.extract(),
                "visibility" => self.visibility_stage(),
                "texture" => self.texture(),
                "semantic" => self.semantic(),
                _ => self.evaluate(),
            }
            .map_err(|e| PipelineError::Stage { stage, source: Box::new(e) })?;
            write_json(&self.out(&format!("{}/{stage}.json", artifacts::METRICS_DIR)), &metrics)?;
            info!("{stage} finished in {:.2} s", start.elapsed().as_secs_f64());
            summary.stages.push(stage);
            summary.metrics.push((stage, metrics));
        }
        Ok(summary)
    }

    fn input(&self, field: &str, p: &Option<PathBuf>) -> Result<PathBuf, PipelineError> {
        p.clone().ok_or_else(|| PipelineError::Config(format!("inputs.{field} is not set")))
    }

    fn reconstruct(&mut self) -> Result<Value, PipelineError> {
        let v = &self.cfg.volume;
        let traj_path = self.input("trajectory", &self.inputs.trajectory)?;
        let file = std::fs::File::open(&traj_path).map_err(|e| PipelineError::io(&traj_path, e))?;
        let trajectory = read_trajectory(BufReader::new(file)).map_err(|m| PipelineError::input(&traj_path, m))?;
        let scans_dir = self.input("scans", &self.inputs.scans)?;
        let scans = scan_files(&scans_dir)?;
        if scans.len() != trajectory.len() {
            return Err(PipelineError::input(
                &scans_dir,
                format!("{} scans but {} trajectory entries", scans.len(), trajectory.len()),
            ));
        }
        let config = IntegrationConfig { footprint: v.footprint, min_weight: v.min_weight, max_blocks: v.max_blocks, ..Default::default() };
        let mut volume = Volume::with_config(v.voxel_size, TruncationConfig::new(v.eps_min, v.eps_max, v.k)?, config)?;
        let (mut read, mut fused, mut degenerate, mut eps_sum) = (0usize, 0usize, 0usize, 0.0);
        for (path, entry) in scans.iter().zip(&trajectory) {
            let points: Vec<_> = read_scan(path)?.into_iter().map(|p| entry.pose.transform_point(p)).collect();
            read += points.len();
            let kept: Vec<_> = match v.crop {
                Some(c) => points.into_iter().filter(|p| c.contains(p.to_array())).collect(),
                None => points,
            };
            let report = volume.integrate_scan(&kept, entry.pose.translation())?;
            fused += report.points;
            degenerate += report.degenerate_blocks;
            eps_sum += report.mean_truncation * report.points as f64;
        }
        let path = self.out(artifacts::VOLUME);
        write_atomic(&path, |w| write_volume(&volume, w).map_err(|e| PipelineError::format(&path, e)))?;
        let metrics = json!({
            "scans": scans.len(),
            "points_read": read,
            "points_fused": fused,
            "blocks": volume.block_count(),
            "observed_voxels": volume.observed_voxels(),
            "degenerate_block_updates": degenerate,
            "mean_truncation": if fused > 0 { eps_sum / fused as f64 } else { 0.0 },
        });
        self.volume = Some(volume);
        Ok(metrics)
    }

    fn extract(&mut self) -> Result<Value, PipelineError> {
        if self.volume.is_none() {
            let path = self.out(artifacts::VOLUME);
            let file = std::fs::File::open(&path).map_err(|e| PipelineError::io(&path, e))?;
            self.volume = Some(read_volume(BufReader::new(file)).map_err(|e| PipelineError::format(&path, e))?);
        }
        let volume = self.volume.as_ref().expect("volume loaded above");
        let mesh = extract_mesh(volume, self.cfg.mesh.iso_weight_min)?;
        let path = self.out(artifacts::MESH);
        write_atomic(&path, |w| write_mesh_ply(w, &mesh, None).map_err(|e| PipelineError::io(&path, e)))?;
        let metrics = json!({
            "vertices": mesh.vertices().len(),
            "faces": mesh.face_count(),
            "surface_area": mesh.surface_area(),
        });
        self.mesh = Some(mesh);
        Ok(metrics)
    }

    fn load_mesh(&mut self) -> Result<&Mesh, PipelineError> {
        if self.mesh.is_none() {
            let path = self.out(artifacts::MESH);
            let file = std::fs::File::open(&path).map_err(|e| PipelineError::io(&path, e))?;
            self.mesh = Some(read_mesh_ply(BufReader::new(file)).map_err(|e| PipelineError::format(&path, e))?);
        }
        Ok(self.mesh.as_ref().expect("mesh loaded above"))
    }

    fn frames(&self, labels: bool) -> Result<Vec<Frame>, PipelineError> {
        let path = if labels { self.input("labels", &self.inputs.labels)? } else { self.input("frames", &self.inputs.frames)? };
        FrameManifest::read(&path)?.load(&path, labels)
    }

    fn visibility_config(&self) -> VisibilityConfig<f64> {
        VisibilityConfig { min_cos: self.cfg.visibility.min_cos, occlusion_bias: self.cfg.visibility.occlusion_bias }
    }

    /// Visibility for `cameras`, reusing the stored table when it was built
    /// for the same cameras.
    fn table_for(&mut self, cameras: &[Camera]) -> Result<VisibilityTable<f64>, PipelineError> {
        if let Some((cams, table)) = &self.visibility {
            if cams.as_slice() == cameras {
                return Ok(table.clone());
            }
        }
        let vis_cfg = self.visibility_config();
        self.load_mesh()?;
        let mesh = self.mesh.as_ref().expect("mesh loaded above");
        let bvh = Bvh::build(mesh);
        Ok(compute_visibility(mesh, &bvh, cameras, &vis_cfg))
    }

    fn visibility_stage(&mut self) -> Result<Value, PipelineError> {
        let frames = self.frames(false)?;
        let cameras: Vec<Camera> = frames.iter().map(|f| f.camera.clone()).collect();
        let table = self.table_for(&cameras)?;
        let ids: Vec<u32> = frames.iter().map(|f| f.frame_id).collect();
        let path = self.out(artifacts::VISIBILITY);
        write_atomic(&path, |w| table.write_csv(w, &ids).map_err(|e| PipelineError::io(&path, e)))?;
        let metrics = json!({
            "frames": frames.len(),
            "faces": table.faces.len(),
            "visible_pairs": table.visible_pairs(),
            "faces_seen": table.faces.iter().filter(|v| !v.is_empty()).count(),
        });
        self.visibility = Some((cameras, table));
        Ok(metrics)
    }

    fn texture(&mut self) -> Result<Value, PipelineError> {
        let frames = self.frames(false)?;
        let cameras: Vec<Camera> = frames.iter().map(|f| f.camera.clone()).collect();
        let face_count = self.load_mesh()?.face_count();
        let table = match &self.visibility {
            Some((cams, table)) if *cams == cameras => table.clone(),
            _ => {
                let path = self.out(artifacts::VISIBILITY);
                let file = std::fs::File::open(&path).map_err(|e| PipelineError::io(&path, e))?;
                let ids: Vec<u32> = frames.iter().map(|f| f.frame_id).collect();
                VisibilityTable::read_csv(BufReader::new(file), face_count, &ids).map_err(|e| PipelineError::format(&path, e))?
            }
        };
        let tcfg = self.cfg.texturing;
        self.load_mesh()?;
        let mesh = self.mesh.as_ref().expect("mesh loaded above");
        let adjacency = build_adjacency(mesh);
        let corrected = correct_frames(&frames, &tcfg.vignetting)?;
        let textured = texture_mesh(mesh, &adjacency, &table, &corrected, &tcfg)?;

        let stem = artifacts::TEXTURED_STEM;
        let mtl_name = format!("{stem}.mtl");
        let obj_path = self.out(&format!("{stem}.obj"));
        write_atomic(&obj_path, |w| write_obj(w, mesh, &textured.atlas, &mtl_name).map_err(|e| PipelineError::io(&obj_path, e)))?;
        let mtl_path = self.out(&mtl_name);
        write_atomic(&mtl_path, |w| write_mtl(w, &textured.atlas, stem).map_err(|e| PipelineError::io(&mtl_path, e)))?;
        for (k, page) in textured.atlas.pages.iter().enumerate() {
            let path = self.out(&page_file_name(stem, k));
            write_bytes(&path, &atsdf::io::encode_png(page).map_err(|e| PipelineError::format(&path, e))?)?;
        }
        write_json(&self.out(artifacts::FACE_VIEWS), &face_views_json(&textured, &frames))?;
        let metrics = json!({
            "faces": mesh.face_count(),
            "charts": textured.leveling.charts.len(),
            "atlas_pages": textured.atlas.pages.len(),
            "untextured_faces": textured.atlas.none_faces.len(),
            "frames_used": textured.assignment.distinct_frames(),
            "rejected_views": textured.rejected_views,
        });
        self.visibility = Some((cameras, table));
        Ok(metrics)
    }

    fn semantic(&mut self) -> Result<Value, PipelineError> {
        let palette_path = self.input("palette", &self.inputs.palette)?;
        let text = std::fs::read_to_string(&palette_path).map_err(|e| PipelineError::io(&palette_path, e))?;
        let palette = ClassPalette::from_json(&text)?;
        let frames = self.frames(true)?;
        let cameras: Vec<Camera> = frames.iter().map(|f| f.camera.clone()).collect();
        let table = self.table_for(&cameras)?;
        self.load_mesh()?;
        let mesh = self.mesh.as_ref().expect("mesh loaded above");
        let votes = accumulate_votes(mesh, &table, &frames, &palette)?;
        let fused = fuse_labels(&votes, &build_adjacency(mesh), self.cfg.semantic.lambda_sem)?;
        let colors: Vec<[u8; 3]> = fused.classes.iter().map(|&c| palette.color(c)).collect();
        let path = self.out(artifacts::LABELED_MESH);
        let labels = FaceLabels { class: &fused.classes, color: &colors };
        write_atomic(&path, |w| write_mesh_ply(w, mesh, Some(labels)).map_err(|e| PipelineError::io(&path, e)))?;
        write_json(&self.out(artifacts::LABELS), &labels_json(&fused, &palette))?;
        let mut per_class = vec![0usize; palette.len()];
        for &c in &fused.classes {
            per_class[c as usize] += 1;
        }
        let metrics = json!({
            "faces": fused.classes.len(),
            "observed_faces": fused.observed.iter().filter(|&&o| o).count(),
            "faces_per_class": per_class,
            "energy": fused.energy,
        });
        self.fused_classes = Some(fused.classes);
        Ok(metrics)
    }

    fn evaluate(&mut self) -> Result<Value, PipelineError> {
        let scene_path = self.input("scene", &self.inputs.scene)?;
        let text = std::fs::read_to_string(&scene_path).map_err(|e| PipelineError::io(&scene_path, e))?;
        let scene: SceneSpec = serde_json::from_str(&text).map_err(|e| PipelineError::input(&scene_path, e.to_string()))?;
        let bin_width = self.cfg.evaluate.bin_width;
        let classes = match self.fused_classes.take() {
            Some(c) => Some(c),
            None => read_label_classes(&self.out(artifacts::LABELS))?,
        };
        self.load_mesh()?;
        let mesh = self.mesh.as_ref().expect("mesh loaded above");
        let report = mesh_error_with_bins(mesh, &scene, bin_width)?;
        let path = self.out(artifacts::ERROR_REPORT);
        write_atomic(&path, |w| report.write_json(&mut *w).map_err(|e| PipelineError::io(&path, e.into())))?;
        let hist = self.out(artifacts::ERROR_HISTOGRAM);
        write_atomic(&hist, |w| report.write_histogram_csv(w).map_err(|e| PipelineError::io(&hist, e)))?;
        let mut metrics = json!({
            "vertices": report.vertex_count,
            "max_error": report.max,
            "mean_error": report.mean,
            "rms_error": report.rms,
        });
        if let Some(classes) = classes.filter(|c| c.len() == mesh.face_count()) {
            let truth = ground_truth_classes(mesh, &scene)?;
            let correct = classes.iter().zip(&truth).filter(|(a, b)| a == b).count();
            metrics["label_accuracy"] = json!(correct as f64 / classes.len().max(1) as f64);
        }
        Ok(metrics)
    }
}

fn read_label_classes(path: &Path) -> Result<Option<Vec<u32>>, PipelineError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| PipelineError::input(path, e.to_string()))?;
    let faces = v["faces"].as_array().ok_or_else(|| PipelineError::input(path, "missing faces array"))?;
    faces
        .iter()
        .map(|f| f["class"].as_u64().map(|c| c as u32).ok_or_else(|| PipelineError::input(path, "face without class")))
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

/// Class of the primitive nearest to each face centroid.
pub fn ground_truth_classes(mesh: &Mesh, scene: &SceneSpec) -> Result<Vec<u32>, PipelineError> {
    (0..mesh.face_count())
        .map(|f| {
            let c = mesh.centroid(f);
            let mut best = (f64::INFINITY, scene.sky_class);
            for p in &scene.primitives {
                let d = p.signed_distance(c).map_err(atsdf::SynthError::from)?.abs();
                if d < best.0 {
                    best = (d, p.class);
                }
            }
            Ok(best.1)
        })
        .collect()
}
