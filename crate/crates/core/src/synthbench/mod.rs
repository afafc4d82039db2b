//! Synthetic scenes, simulated LiDAR scans, rendered camera frames and
//! mesh-accuracy evaluation.

mod scene;

use std::f64::consts::PI;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraFrame, Image8, Intrinsics, PinholeCamera};
use crate::error::SynthError;
use crate::geometry::{Mat3, RigidPose, Vec3};
use crate::mesher::TriangleMesh;
use crate::scalar::Real;

pub use scene::{benchmark_palette, PoseSpec, Primitive, SceneHit, SceneSpec, Shape};
use scene::{intersect_placed, signed_distance_placed};

pub const MAX_BEAMS: usize = 256;

/// Elevation angles of a spinning multi-beam scanner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamPattern {
    /// Beam elevations, radians above the sensor's horizontal plane.
    pub elevations: Vec<f64>,
    /// Radians between consecutive firings.
    pub azimuth_step: f64,
    /// Standard deviation of the range noise, meters.
    pub sigma: f64,
    pub max_range: f64,
}

impl BeamPattern {
    /// `beams` elevations spaced evenly over `[min_elevation, max_elevation]`.
    pub fn uniform(
        beams: usize,
        min_elevation: f64,
        max_elevation: f64,
        azimuth_step: f64,
        sigma: f64,
        max_range: f64,
    ) -> Result<Self, SynthError> {
        let elevations = match beams {
            0 => Vec::new(),
            1 => vec![0.5 * (min_elevation + max_elevation)],
            _ => (0..beams)
                .map(|i| min_elevation + (max_elevation - min_elevation) * i as f64 / (beams - 1) as f64)
                .collect(),
        };
        let p = Self { elevations, azimuth_step, sigma, max_range };
        p.validate()?;
        Ok(p)
    }

    /// 128 beams over -25..15 degrees, 0.2 degree azimuth step, 1 cm noise.
    pub fn vls128() -> Self {
        Self::uniform(128, (-25.0f64).to_radians(), 15.0f64.to_radians(), 0.2f64.to_radians(), 0.01, 120.0)
            .expect("default pattern is valid")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let n = self.elevations.len();
        if !(1..=MAX_BEAMS).contains(&n) {
            return Err(SynthError::InvalidPattern(format!("beam count {n} outside 1..={MAX_BEAMS}")));
        }
        if self.elevations.iter().any(|e| !e.is_finite() || e.abs() > PI / 2.0) {
            return Err(SynthError::InvalidPattern("elevations must be finite and within ±90°".into()));
        }
        if !(self.azimuth_step > 0.0 && self.azimuth_step <= 2.0 * PI) {
            return Err(SynthError::InvalidPattern(format!("azimuth step {} outside (0, 2π]", self.azimuth_step)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(SynthError::InvalidPattern(format!("noise sigma must be ≥ 0, got {}", self.sigma)));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(SynthError::InvalidPattern(format!("max range must be positive, got {}", self.max_range)));
        }
        Ok(())
    }

    pub fn azimuth_count(&self) -> usize {
        ((2.0 * PI / self.azimuth_step) - 1e-9).ceil().max(1.0) as usize
    }

    /// Unit ray directions in the sensor frame (x forward, z up), azimuth-major.
    pub fn directions(&self) -> Vec<Vec3<f64>> {
        let mut out = Vec::with_capacity(self.azimuth_count() * self.elevations.len());
        for a in 0..self.azimuth_count() {
            let (sa, ca) = (a as f64 * self.azimuth_step).sin_cos();
            for &e in &self.elevations {
                let (se, ce) = e.sin_cos();
                out.push(Vec3::new(ce * ca, ce * sa, se));
            }
        }
        out
    }
}

/// One simulated return: the world point and the noise-free range it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanReturn {
    pub point: Vec3<f64>,
    pub direction: Vec3<f64>,
    pub true_range: f64,
    pub range: f64,
    pub primitive: usize,
}

/// Casts every (azimuth, beam) ray from `sensor_pose` and perturbs each hit
/// range with Gaussian noise. Returns world-frame points.
pub fn simulate_scan(
    scene: &SceneSpec,
    sensor_pose: &RigidPose<f64>,
    pattern: &BeamPattern,
    seed: u64,
) -> Result<Vec<Vec3<f64>>, SynthError> {
    Ok(simulate_scan_detailed(scene, sensor_pose, pattern, seed)?.into_iter().map(|r| r.point).collect())
}

pub fn simulate_scan_detailed(
    scene: &SceneSpec,
    sensor_pose: &RigidPose<f64>,
    pattern: &BeamPattern,
    seed: u64,
) -> Result<Vec<ScanReturn>, SynthError> {
    scene.validate(None)?;
    pattern.validate()?;
    let placed = scene.placed()?;
    let origin = sensor_pose.translation();
    let dirs = pattern.directions();
    let hits: Vec<Option<(Vec3<f64>, f64, usize)>> = dirs
        .par_iter()
        .map(|d| {
            let dw = sensor_pose.transform_vector(*d);
            intersect_placed(&placed, origin, dw)
                .filter(|h| h.t <= pattern.max_range)
                .map(|h| (dw, h.t, h.primitive))
        })
        .collect();

    // noise is drawn sequentially in ray order so the output is independent of
    // thread scheduling
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, pattern.sigma).expect("sigma validated");
    let mut out = Vec::new();
    for (direction, t, primitive) in hits.into_iter().flatten() {
        let range = if pattern.sigma > 0.0 { t + normal.sample(&mut rng) } else { t };
        out.push(ScanReturn { point: origin + direction * range, direction, true_range: t, range, primitive });
    }
    Ok(out)
}

/// Constant-speed circular drive around a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitProtocol {
    pub radius: f64,
    /// m/s along the circle.
    pub speed: f64,
    /// Scans per second.
    pub rate: f64,
    /// Sensor height above the ground plane.
    pub height: f64,
    pub center: [f64; 2],
}

impl Default for OrbitProtocol {
    fn default() -> Self {
        Self { radius: 10.0, speed: 5.0, rate: 10.0, height: 2.3, center: [0.0, 0.0] }
    }
}

impl OrbitProtocol {
    pub fn validate(&self) -> Result<(), SynthError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.radius) && ok(self.speed) && ok(self.rate) && self.height.is_finite()) {
            return Err(SynthError::InvalidScene(format!("invalid orbit {self:?}")));
        }
        Ok(())
    }

    /// Scans in one full revolution.
    pub fn scan_count(&self) -> usize {
        (2.0 * PI * self.radius * self.rate / self.speed).round().max(1.0) as usize
    }

    fn angle(&self, k: usize) -> f64 {
        k as f64 * self.speed / (self.rate * self.radius)
    }

    /// `(timestamp, sensor-to-world pose)` for one revolution. The sensor x
    /// axis points along the direction of travel and z points up.
    pub fn sensor_poses(&self) -> Result<Vec<(f64, RigidPose<f64>)>, SynthError> {
        self.validate()?;
        (0..self.scan_count())
            .map(|k| {
                let th = self.angle(k);
                let (s, c) = th.sin_cos();
                let pos = Vec3::new(self.center[0] + self.radius * c, self.center[1] + self.radius * s, self.height);
                let fwd = Vec3::new(-s, c, 0.0);
                let up = Vec3::new(0.0, 0.0, 1.0);
                let pose = RigidPose::new(Mat3::from_cols(fwd, up.cross(fwd), up), pos)?;
                Ok((k as f64 / self.rate, pose))
            })
            .collect()
    }

    /// `count` cameras evenly spaced on the orbit, looking at `target`.
    pub fn cameras(
        &self,
        count: usize,
        intrinsics: Intrinsics<f64>,
        width: usize,
        height: usize,
        target: Vec3<f64>,
    ) -> Result<Vec<PinholeCamera<f64>>, SynthError> {
        self.validate()?;
        (0..count)
            .map(|k| {
                let (s, c) = (2.0 * PI * k as f64 / count as f64).sin_cos();
                let eye = Vec3::new(self.center[0] + self.radius * c, self.center[1] + self.radius * s, self.height);
                let pose = RigidPose::look_at(eye, target, Vec3::new(0.0, 0.0, 1.0))?;
                Ok(PinholeCamera::new(intrinsics, pose, width, height)?)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    Color,
    Label,
}

const AMBIENT: f64 = 0.35;

/// Lambert-shaded color of `color` for a surface with normal `n` seen along `view_dir`.
pub fn shade(color: [u8; 3], normal: Vec3<f64>, view_dir: Vec3<f64>, light_dir: Vec3<f64>) -> [u8; 3] {
    let n = if normal.dot(view_dir) > 0.0 { -normal } else { normal };
    let k = AMBIENT + (1.0 - AMBIENT) * n.dot(light_dir).max(0.0);
    color.map(|c| (c as f64 * k).round().clamp(0.0, 255.0) as u8)
}

/// Color and label image of one camera; both come from the same ray cast.
pub fn render(scene: &SceneSpec, camera: &PinholeCamera<f64>) -> Result<(Image8, Image8), SynthError> {
    scene.validate(None)?;
    let placed = scene.placed()?;
    let light = Vec3::from_array(scene.light_dir)
        .try_normalize()
        .ok_or_else(|| SynthError::InvalidScene("zero light direction".into()))?;
    let sky_class = u8::try_from(scene.sky_class)
        .map_err(|_| SynthError::InvalidScene(format!("sky class {} does not fit a label image", scene.sky_class)))?;
    if let Some(p) = scene.primitives.iter().find(|p| p.class > u8::MAX as u32) {
        return Err(SynthError::InvalidScene(format!("class {} does not fit a label image", p.class)));
    }
    let (w, h) = (camera.width(), camera.height());
    let origin = camera.center();
    let rows: Vec<(Vec<u8>, Vec<u8>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut color = Vec::with_capacity(3 * w);
            let mut label = Vec::with_capacity(w);
            for x in 0..w {
                let d = camera.ray_direction(x as f64 + 0.5, y as f64 + 0.5);
                match intersect_placed(&placed, origin, d) {
                    Some(hit) => {
                        let p = &scene.primitives[hit.primitive];
                        color.extend_from_slice(&shade(p.color, hit.normal, d, light));
                        label.push(p.class as u8);
                    }
                    None => {
                        color.extend_from_slice(&scene.sky_color);
                        label.push(sky_class);
                    }
                }
            }
            (color, label)
        })
        .collect();
    let mut color = Vec::with_capacity(3 * w * h);
    let mut label = Vec::with_capacity(w * h);
    for (c, l) in rows {
        color.extend(c);
        label.extend(l);
    }
    Ok((Image8::from_vec(w, h, 3, color)?, Image8::from_vec(w, h, 1, label)?))
}

/// Renders one frame per camera; frame ids are the camera indices.
pub fn render_frames(
    scene: &SceneSpec,
    cameras: &[PinholeCamera<f64>],
    mode: RenderMode,
) -> Result<Vec<CameraFrame<f64>>, SynthError> {
    cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let (color, label) = render(scene, cam)?;
            let image = match mode {
                RenderMode::Color => color,
                RenderMode::Label => label,
            };
            Ok(CameraFrame { camera: cam.clone(), image, frame_id: i as u32 })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Distance of every mesh vertex to the ground-truth surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    #[serde(skip)]
    pub distances: Vec<f64>,
    pub vertex_count: usize,
    pub max: f64,
    pub mean: f64,
    pub rms: f64,
    pub bin_width: f64,
    pub histogram: Vec<HistogramBin>,
}

pub const DEFAULT_BIN_WIDTH: f64 = 0.005;

impl ErrorReport {
    pub fn from_distances(distances: Vec<f64>, bin_width: f64) -> Self {
        let n = distances.len();
        let max = distances.iter().copied().fold(0.0, f64::max);
        let (sum, sum_sq) = distances.iter().fold((0.0, 0.0), |(s, q), d| (s + d, q + d * d));
        let (mean, rms) = if n == 0 { (0.0, 0.0) } else { (sum / n as f64, (sum_sq / n as f64).sqrt()) };
        let bins = ((max / bin_width).floor() as usize + 1).max(1);
        let mut histogram: Vec<HistogramBin> = (0..bins)
            .map(|i| HistogramBin { lo: i as f64 * bin_width, hi: (i + 1) as f64 * bin_width, count: 0 })
            .collect();
        for d in &distances {
            let i = ((d / bin_width).floor() as usize).min(bins - 1);
            histogram[i].count += 1;
        }
        Self { distances, vertex_count: n, max, mean, rms, bin_width, histogram }
    }

    pub fn write_json<W: Write>(&self, w: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(w, self)
    }

    pub fn write_histogram_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_lo,bin_hi,count")?;
        for b in &self.histogram {
            writeln!(w, "{},{},{}", b.lo, b.hi, b.count)?;
        }
        Ok(())
    }
}

/// `|signed distance|` to the scene at every vertex.
pub fn mesh_error<T: Real>(mesh: &TriangleMesh<T>, scene: &SceneSpec) -> Result<ErrorReport, SynthError> {
    mesh_error_with_bins(mesh, scene, DEFAULT_BIN_WIDTH)
}

pub fn mesh_error_with_bins<T: Real>(
    mesh: &TriangleMesh<T>,
    scene: &SceneSpec,
    bin_width: f64,
) -> Result<ErrorReport, SynthError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(SynthError::InvalidScene(format!("histogram bin width must be positive, got {bin_width}")));
    }
    if scene.primitives.is_empty() {
        return Err(SynthError::InvalidScene("no ground-truth surface".into()));
    }
    scene.validate(None)?;
    let placed = scene.placed()?;
    let distances: Vec<f64> =
        mesh.vertices().par_iter().map(|v| signed_distance_placed(&placed, v.cast::<f64>()).abs()).collect();
    Ok(ErrorReport::from_distances(distances, bin_width))
}
