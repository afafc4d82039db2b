//! Pipeline configuration: presets, file loading, environment overrides and
//! validation.

use std::path::{Path, PathBuf};

use atsdf::semantic::DEFAULT_LAMBDA_SEM;
use atsdf::synthbench::{OrbitProtocol, SceneSpec, DEFAULT_BIN_WIDTH};
use atsdf::texturing::TexturingConfig;
use atsdf::volume::{DEFAULT_FLATNESS_WEIGHT, DEFAULT_MAX_BLOCKS, DEFAULT_MIN_WEIGHT};
use atsdf::mesher::DEFAULT_ISO_WEIGHT_MIN;
use atsdf::Footprint;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::PipelineError;

/// Prefix of environment variables that override config keys. Nested keys
/// are joined with a double underscore: `ATSDF_VOLUME__VOXEL_SIZE=0.05`.
pub const ENV_PREFIX: &str = "ATSDF_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Voxel 10 cm, ε in [40, 80] cm.
    Street,
    /// Voxel 2.5 cm, ε in [10, 30] cm, synthetic sphere and box.
    ObjectBenchmark,
    /// Voxel 5 cm, ε in [10, 30] cm; the voxel size recommended for labeling.
    Semantic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageToggles {
    pub simulate: bool,
    pub reconstruct: bool,
    pub mesh: bool,
    pub visibility: bool,
    pub texture: bool,
    pub semantic: bool,
    pub evaluate: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self { simulate: false, reconstruct: true, mesh: true, visibility: true, texture: true, semantic: true, evaluate: true }
    }
}

impl StageToggles {
    pub fn none() -> Self {
        Self { simulate: false, reconstruct: false, mesh: false, visibility: false, texture: false, semantic: false, evaluate: false }
    }
}

/// Input files. When the simulate stage is enabled, unset entries point at
/// its outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputPaths {
    /// Directory of per-scan PLY point clouds in the sensor frame, taken in
    /// file name order.
    pub scans: Option<PathBuf>,
    /// One line per scan: `timestamp tx ty tz qx qy qz qw`.
    pub trajectory: Option<PathBuf>,
    /// Color frame manifest.
    pub frames: Option<PathBuf>,
    /// Label frame manifest.
    pub labels: Option<PathBuf>,
    /// Class palette JSON.
    pub palette: Option<PathBuf>,
    /// Ground-truth scene JSON for evaluation.
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl CropBox {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VolumeSettings {
    pub voxel_size: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    pub k: f64,
    pub footprint: Footprint,
    pub min_weight: f64,
    pub max_blocks: usize,
    /// World-frame box; scan points outside it are dropped before fusion.
    pub crop: Option<CropBox>,
}

impl Default for VolumeSettings {
    fn default() -> Self {
        Self {
            voxel_size: 0.1,
            eps_min: 0.4,
            eps_max: 0.8,
            k: DEFAULT_FLATNESS_WEIGHT,
            footprint: Footprint::Ray,
            min_weight: DEFAULT_MIN_WEIGHT,
            max_blocks: DEFAULT_MAX_BLOCKS,
            crop: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeshSettings {
    pub iso_weight_min: f64,
}

impl Default for MeshSettings {
    fn default() -> Self {
        Self { iso_weight_min: DEFAULT_ISO_WEIGHT_MIN }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisibilitySettings {
    pub min_cos: f64,
    pub occlusion_bias: f64,
}

impl Default for VisibilitySettings {
    fn default() -> Self {
        Self { min_cos: 0.05, occlusion_bias: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemanticSettings {
    pub lambda_sem: f64,
}

impl Default for SemanticSettings {
    fn default() -> Self {
        Self { lambda_sem: DEFAULT_LAMBDA_SEM }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateSettings {
    pub bin_width: f64,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        Self { bin_width: DEFAULT_BIN_WIDTH }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraSettings {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels; the principal point is the image center.
    pub focal: f64,
    pub target: [f64; 3],
    /// Radius of the camera circle; the scan orbit radius when unset.
    pub radius: Option<f64>,
    pub height_above_ground: Option<f64>,
}

impl Default for CameraSettings {
    fn default() -> Self {
        Self { count: 12, width: 320, height: 240, focal: 240.0, target: [0.0, 0.0, 1.0], radius: None, height_above_ground: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSettings {
    pub scene: SceneSpec,
    pub orbit: OrbitProtocol,
    pub beams: usize,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    pub azimuth_step_deg: f64,
    pub sigma: f64,
    pub max_range: f64,
    /// Keep every n-th scan of the orbit.
    pub scan_stride: usize,
    pub cameras: CameraSettings,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            scene: SceneSpec::benchmark(),
            orbit: OrbitProtocol::default(),
            beams: 128,
            min_elevation_deg: -25.0,
            max_elevation_deg: 15.0,
            azimuth_step_deg: 0.2,
            sigma: 0.01,
            max_range: 120.0,
            scan_stride: 1,
            cameras: CameraSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub output_dir: PathBuf,
    pub stages: StageToggles,
    pub inputs: InputPaths,
    pub volume: VolumeSettings,
    pub mesh: MeshSettings,
    pub visibility: VisibilitySettings,
    pub texturing: TexturingConfig,
    pub semantic: SemanticSettings,
    pub evaluate: EvaluateSettings,
    pub simulate: SimulateSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::preset(Preset::Street)
    }
}

impl PipelineConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = Self {
            seed: 0,
            threads: 0,
            output_dir: PathBuf::from("atsdf_out"),
            stages: StageToggles::default(),
            inputs: InputPaths::default(),
            volume: VolumeSettings::default(),
            mesh: MeshSettings::default(),
            visibility: VisibilitySettings::default(),
            texturing: TexturingConfig::default(),
            semantic: SemanticSettings::default(),
            evaluate: EvaluateSettings::default(),
            simulate: SimulateSettings::default(),
        };
        match preset {
            Preset::Street => base,
            Preset::ObjectBenchmark => Self {
                seed: 42,
                stages: StageToggles { simulate: true, ..StageToggles::default() },
                volume: VolumeSettings {
                    voxel_size: 0.025,
                    eps_min: 0.1,
                    eps_max: 0.3,
                    k: 16.0,
                    crop: Some(CropBox { min: [-6.5, -6.5, -1.0], max: [6.5, 6.5, 10.0] }),
                    ..VolumeSettings::default()
                },
                ..base
            },
            Preset::Semantic => Self {
                seed: 42,
                stages: StageToggles { simulate: true, ..StageToggles::default() },
                volume: VolumeSettings {
                    voxel_size: 0.05,
                    eps_min: 0.1,
                    eps_max: 0.3,
                    k: 16.0,
                    crop: Some(CropBox { min: [-6.5, -6.5, -1.0], max: [6.5, 6.5, 10.0] }),
                    ..VolumeSettings::default()
                },
                ..base
            },
        }
    }

    /// Parses TOML or JSON (chosen by extension, `.json` or anything else)
    /// and layers it over `base`. Keys absent from the file keep the base
    /// value.
    pub fn load_file(path: &Path, base: &Self) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let layer: Value = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
        } else {
            let t: toml::Value = toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
            serde_json::to_value(t).map_err(|e| PipelineError::Config(e.to_string()))?
        };
        base.layered(layer)
    }

    /// Applies `ATSDF_*` overrides from `vars`. Values are parsed as JSON
    /// when possible and taken as strings otherwise.
    pub fn with_env<I: IntoIterator<Item = (String, String)>>(&self, vars: I) -> Result<Self, PipelineError> {
        let mut layer = Value::Object(Default::default());
        for (key, raw) in vars {
            let Some(rest) = key.strip_prefix(ENV_PREFIX) else { continue };
            let path: Vec<String> = rest.split("__").map(str::to_ascii_lowercase).collect();
            if path.iter().any(String::is_empty) {
                return Err(PipelineError::Config(format!("malformed override variable {key}")));
            }
            let mut value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
            for part in path.into_iter().rev() {
                value = Value::Object([(part, value)].into_iter().collect());
            }
            merge(&mut layer, value);
        }
        self.layered(layer)
    }

    fn layered(&self, layer: Value) -> Result<Self, PipelineError> {
        let mut merged = serde_json::to_value(self).map_err(|e| PipelineError::Config(e.to_string()))?;
        merge(&mut merged, layer);
        serde_json::from_value(merged).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    /// Checks numeric ranges and that every input a stage reads either
    /// exists or is produced by an earlier enabled stage.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let v = &self.volume;
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(v.voxel_size) {
            return bad(format!("volume.voxel_size must be positive, got {}", v.voxel_size));
        }
        if !(pos(v.eps_min) && pos(v.eps_max)) {
            return bad(format!("truncation bounds must be positive, got [{}, {}]", v.eps_min, v.eps_max));
        }
        if v.eps_min > v.eps_max {
            return bad(format!("volume.eps_min ({}) exceeds volume.eps_max ({})", v.eps_min, v.eps_max));
        }
        if !(v.k.is_finite() && v.k >= 0.0) {
            return bad(format!("volume.k must be non-negative, got {}", v.k));
        }
        if !(v.min_weight > 0.0 && v.min_weight <= 1.0) {
            return bad(format!("volume.min_weight must be in (0, 1], got {}", v.min_weight));
        }
        if v.max_blocks == 0 {
            return bad("volume.max_blocks must be positive".into());
        }
        if let Some(c) = v.crop {
            if (0..3).any(|i| !(c.min[i] <= c.max[i])) {
                return bad(format!("volume.crop min {:?} exceeds max {:?}", c.min, c.max));
            }
        }
        if !(self.mesh.iso_weight_min.is_finite() && self.mesh.iso_weight_min >= 0.0) {
            return bad(format!("mesh.iso_weight_min must be non-negative, got {}", self.mesh.iso_weight_min));
        }
        let vis = &self.visibility;
        if !(vis.min_cos >= 0.0 && vis.min_cos < 1.0) || !(vis.occlusion_bias >= 0.0) {
            return bad(format!("visibility.min_cos must be in [0, 1) and occlusion_bias non-negative, got {vis:?}"));
        }
        let t = &self.texturing;
        if !(t.lambda_view.is_finite() && t.lambda_view >= 0.0) || !(t.lambda_seam.is_finite() && t.lambda_seam >= 0.0) {
            return bad(format!("texturing lambdas must be non-negative, got {} and {}", t.lambda_view, t.lambda_seam));
        }
        t.vignetting.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if t.atlas.page_size == 0 || t.atlas.max_pages == 0 {
            return bad("texturing.atlas page_size and max_pages must be positive".into());
        }
        if !(self.semantic.lambda_sem.is_finite() && self.semantic.lambda_sem >= 0.0) {
            return bad(format!("semantic.lambda_sem must be non-negative, got {}", self.semantic.lambda_sem));
        }
        if !pos(self.evaluate.bin_width) {
            return bad(format!("evaluate.bin_width must be positive, got {}", self.evaluate.bin_width));
        }
        if self.stages.simulate {
            self.validate_simulation()?;
        }
        self.validate_inputs()
    }

    fn validate_simulation(&self) -> Result<(), PipelineError> {
        let s = &self.simulate;
        s.scene.validate(None).map_err(|e| PipelineError::Config(e.to_string()))?;
        s.orbit.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if s.scan_stride == 0 {
            return Err(PipelineError::Config("simulate.scan_stride must be positive".into()));
        }
        let c = &s.cameras;
        if c.width == 0 || c.height == 0 || !(c.focal > 0.0) {
            return Err(PipelineError::Config(format!("invalid simulated camera {c:?}")));
        }
        self.beam_pattern().map(|_| ())
    }

    pub fn beam_pattern(&self) -> Result<atsdf::synthbench::BeamPattern, PipelineError> {
        let s = &self.simulate;
        atsdf::synthbench::BeamPattern::uniform(
            s.beams,
            s.min_elevation_deg.to_radians(),
            s.max_elevation_deg.to_radians(),
            s.azimuth_step_deg.to_radians(),
            s.sigma,
            s.max_range,
        )
        .map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Input paths with unset entries filled from the simulation output
    /// directory, when the simulate stage is enabled or has run before.
    pub fn resolved_inputs(&self) -> InputPaths {
        let sim = self.output_path(crate::artifacts::SIM_DIR);
        let pick = |p: &Option<PathBuf>, name: &str| {
            p.clone().or_else(|| {
                let d = sim.join(name);
                (self.stages.simulate || d.exists()).then_some(d)
            })
        };
        let i = &self.inputs;
        InputPaths {
            scans: pick(&i.scans, crate::simulate::SCANS_DIR),
            trajectory: pick(&i.trajectory, crate::simulate::TRAJECTORY),
            frames: pick(&i.frames, crate::simulate::FRAMES),
            labels: pick(&i.labels, crate::simulate::LABEL_FRAMES),
            palette: pick(&i.palette, crate::simulate::PALETTE),
            scene: pick(&i.scene, crate::simulate::SCENE),
        }
    }

    fn validate_inputs(&self) -> Result<(), PipelineError> {
        let st = &self.stages;
        let sim_dir = self.output_path(crate::artifacts::SIM_DIR);
        let need = |field: &str, path: &Option<PathBuf>| -> Result<(), PipelineError> {
            match path {
                Some(p) if p.exists() || (st.simulate && p.starts_with(&sim_dir)) => Ok(()),
                Some(p) => Err(PipelineError::Config(format!("inputs.{field}: {} does not exist", p.display()))),
                None => Err(PipelineError::Config(format!("inputs.{field} is required by the enabled stages"))),
            }
        };
        let i = self.resolved_inputs();
        if st.reconstruct {
            need("scans", &i.scans)?;
            need("trajectory", &i.trajectory)?;
        }
        // Intermediates of disabled stages are read back from the output directory.
        let resumable = |stage_on: bool, name: &str| -> Result<(), PipelineError> {
            let p = self.output_path(name);
            if !stage_on && !p.exists() {
                return Err(PipelineError::Config(format!("{} is missing and the stage producing it is disabled", p.display())));
            }
            Ok(())
        };
        if st.mesh {
            resumable(st.reconstruct, crate::artifacts::VOLUME)?;
        }
        if st.visibility || st.texture || st.semantic || st.evaluate {
            resumable(st.mesh, crate::artifacts::MESH)?;
        }
        if st.visibility || st.texture {
            need("frames", &i.frames)?;
        }
        if st.texture {
            resumable(st.visibility, crate::artifacts::VISIBILITY)?;
        }
        if st.semantic {
            need("labels", &i.labels)?;
            need("palette", &i.palette)?;
        }
        if st.evaluate {
            need("scene", &i.scene)?;
        }
        Ok(())
    }
}

/// Recursive object merge; non-object values in `layer` replace those in
/// `base`.
fn merge(base: &mut Value, layer: Value) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_documented_scales() {
        let street = PipelineConfig::preset(Preset::Street);
        assert_eq!((street.volume.voxel_size, street.volume.eps_min, street.volume.eps_max), (0.1, 0.4, 0.8));
        let bench = PipelineConfig::preset(Preset::ObjectBenchmark);
        assert_eq!((bench.volume.voxel_size, bench.volume.eps_min, bench.volume.eps_max), (0.025, 0.1, 0.3));
        assert_eq!(PipelineConfig::preset(Preset::Semantic).volume.voxel_size, 0.05);
    }

    #[test]
    fn env_overrides_nested_and_top_level_keys() {
        let base = PipelineConfig::default();
        let cfg = base
            .with_env([
                ("ATSDF_VOLUME__VOXEL_SIZE".to_string(), "0.05".to_string()),
                ("ATSDF_SEED".to_string(), "7".to_string()),
                ("ATSDF_VOLUME__FOOTPRINT".to_string(), "ball".to_string()),
                ("ATSDF_OUTPUT_DIR".to_string(), "/tmp/x".to_string()),
                ("HOME".to_string(), "/root".to_string()),
            ])
            .unwrap();
        assert_eq!(cfg.volume.voxel_size, 0.05);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.volume.footprint, Footprint::Ball);
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.volume.eps_max, base.volume.eps_max);
    }

    #[test]
    fn unknown_values_are_reported() {
        let err = PipelineConfig::default().with_env([("ATSDF_VOLUME__VOXEL_SIZE".to_string(), "big".to_string())]);
        assert!(matches!(err, Err(PipelineError::Config(_))));
    }

    #[test]
    fn toml_and_json_files_layer_over_the_base() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("c.toml");
        std::fs::write(&toml_path, "seed = 3\n[volume]\neps_max = 0.9\n[texturing]\nlambda_seam = 0.5\n").unwrap();
        let base = PipelineConfig::preset(Preset::ObjectBenchmark);
        let cfg = PipelineConfig::load_file(&toml_path, &base).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.volume.eps_max, 0.9);
        assert_eq!(cfg.volume.eps_min, 0.1);
        assert_eq!(cfg.texturing.lambda_seam, 0.5);
        assert_eq!(cfg.texturing.lambda_view, base.texturing.lambda_view);

        let json_path = dir.path().join("c.json");
        std::fs::write(&json_path, serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(PipelineConfig::load_file(&json_path, &PipelineConfig::default()).unwrap(), cfg);
    }

    #[test]
    fn inverted_truncation_is_rejected() {
        let mut cfg = PipelineConfig::preset(Preset::ObjectBenchmark);
        cfg.volume.eps_min = 0.5;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("eps_min"), "{err}");
    }

    #[test]
    fn missing_inputs_are_rejected_unless_simulated() {
        let mut cfg = PipelineConfig::default();
        cfg.output_dir = tempfile::tempdir().unwrap().path().join("out");
        assert!(cfg.validate().unwrap_err().to_string().contains("inputs.scans"));
        cfg.inputs.scans = Some(PathBuf::from("/definitely/not/here"));
        assert!(cfg.validate().unwrap_err().to_string().contains("does not exist"));
        cfg.inputs.scans = None;
        cfg.stages.simulate = true;
        cfg.validate().unwrap();
    }

    #[test]
    fn disabled_producer_requires_an_existing_intermediate() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.output_dir = dir.path().to_path_buf();
        cfg.stages = StageToggles { mesh: true, ..StageToggles::none() };
        assert!(cfg.validate().unwrap_err().to_string().contains("volume.atsf"));
        std::fs::write(dir.path().join("volume.atsf"), b"").unwrap();
        cfg.validate().unwrap();
    }
}
