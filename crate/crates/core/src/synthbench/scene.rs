use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, SynthError};
use crate::geometry::{RigidPose, Vec3};
use crate::semantic::{ClassInfo, ClassPalette};

/// Primitive shape in its local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Centered at the local origin.
    Sphere { radius: f64 },
    /// Axis-aligned, centered at the local origin; full edge lengths.
    Box { size: [f64; 3] },
    /// The local `z = 0` plane, normal `+z`; unbounded when `size` is `None`,
    /// otherwise an `x` by `y` rectangle centered at the origin. An unbounded
    /// plane is a half-space (solid below); a rectangle has no interior and
    /// its distance is unsigned.
    Plane {
        #[serde(default)]
        size: Option<[f64; 2]>,
    },
    /// Axis along local `z`, centered at the origin, capped.
    Cylinder { radius: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub translation: [f64; 3],
    /// Unit quaternion `[x, y, z, w]`.
    #[serde(default = "identity_quaternion")]
    pub rotation: [f64; 4],
}

fn identity_quaternion() -> [f64; 4] {
    [0.0, 0.0, 0.0, 1.0]
}

impl PoseSpec {
    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self { translation: [x, y, z], rotation: identity_quaternion() }
    }

    pub fn to_pose(&self) -> Result<RigidPose<f64>, GeometryError> {
        RigidPose::from_quaternion(Vec3::from_array(self.translation), self.rotation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub pose: PoseSpec,
    pub color: [u8; 3],
    pub class: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneHit {
    pub t: f64,
    pub primitive: usize,
    /// Unit outward normal in world coordinates.
    pub normal: Vec3<f64>,
}

impl Shape {
    fn sdf(&self, p: Vec3<f64>) -> f64 {
        match *self {
            Shape::Sphere { radius } => p.norm() - radius,
            Shape::Box { size } => {
                let q = Vec3::new(p.x.abs() - size[0] / 2.0, p.y.abs() - size[1] / 2.0, p.z.abs() - size[2] / 2.0);
                let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                outside + q.x.max(q.y).max(q.z).min(0.0)
            }
            Shape::Plane { size: None } => p.z,
            Shape::Plane { size: Some([sx, sy]) } => {
                let dx = (p.x.abs() - sx / 2.0).max(0.0);
                let dy = (p.y.abs() - sy / 2.0).max(0.0);
                (dx * dx + dy * dy + p.z * p.z).sqrt()
            }
            Shape::Cylinder { radius, height } => {
                let dr = (p.x * p.x + p.y * p.y).sqrt() - radius;
                let dz = p.z.abs() - height / 2.0;
                let outside = (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt();
                outside + dr.max(dz).min(0.0)
            }
        }
    }

    /// Nearest entering intersection `t > t_min` of `o + t d` in local coordinates.
    fn intersect(&self, o: Vec3<f64>, d: Vec3<f64>, t_min: f64) -> Option<(f64, Vec3<f64>)> {
        match *self {
            Shape::Sphere { radius } => {
                let a = d.dot(d);
                let b = o.dot(d);
                let c = o.dot(o) - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                [(-b - sq) / a, (-b + sq) / a]
                    .into_iter()
                    .find(|&t| t > t_min)
                    .map(|t| (t, (o + d * t) / radius))
            }
            Shape::Box { size } => {
                let h = [size[0] / 2.0, size[1] / 2.0, size[2] / 2.0];
                let (o, d) = (o.to_array(), d.to_array());
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                let (mut n0, mut n1) = (0usize, 0usize);
                for k in 0..3 {
                    if d[k] == 0.0 {
                        if o[k].abs() > h[k] {
                            return None;
                        }
                        continue;
                    }
                    let a = (-h[k] - o[k]) / d[k];
                    let b = (h[k] - o[k]) / d[k];
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    if lo > t0 {
                        t0 = lo;
                        n0 = k;
                    }
                    if hi < t1 {
                        t1 = hi;
                        n1 = k;
                    }
                }
                if t0 > t1 {
                    return None;
                }
                let normal = |k: usize, t: f64| {
                    let mut n = [0.0; 3];
                    let p = o[k] + t * d[k];
                    n[k] = if p > 0.0 { 1.0 } else { -1.0 };
                    Vec3::from_array(n)
                };
                if t0 > t_min {
                    Some((t0, normal(n0, t0)))
                } else if t1 > t_min {
                    Some((t1, normal(n1, t1)))
                } else {
                    None
                }
            }
            Shape::Plane { size } => {
                if d.z == 0.0 {
                    return None;
                }
                let t = -o.z / d.z;
                if t <= t_min {
                    return None;
                }
                let p = o + d * t;
                if let Some([sx, sy]) = size {
                    if p.x.abs() > sx / 2.0 || p.y.abs() > sy / 2.0 {
                        return None;
                    }
                }
                let n = if o.z >= 0.0 { 1.0 } else { -1.0 };
                Some((t, Vec3::new(0.0, 0.0, n)))
            }
            Shape::Cylinder { radius, height } => {
                let hz = height / 2.0;
                let mut best: Option<(f64, Vec3<f64>)> = None;
                let mut consider = |t: f64, n: Vec3<f64>| {
                    if t > t_min && best.is_none_or(|b| t < b.0) {
                        best = Some((t, n));
                    }
                };
                let a = d.x * d.x + d.y * d.y;
                if a > 0.0 {
                    let b = o.x * d.x + o.y * d.y;
                    let c = o.x * o.x + o.y * o.y - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for t in [(-b - sq) / a, (-b + sq) / a] {
                            let p = o + d * t;
                            if p.z.abs() <= hz {
                                consider(t, Vec3::new(p.x / radius, p.y / radius, 0.0));
                            }
                        }
                    }
                }
                if d.z != 0.0 {
                    for (zc, nz) in [(hz, 1.0), (-hz, -1.0)] {
                        let t = (zc - o.z) / d.z;
                        let p = o + d * t;
                        if p.x * p.x + p.y * p.y <= radius * radius {
                            consider(t, Vec3::new(0.0, 0.0, nz));
                        }
                    }
                }
                best
            }
        }
    }
}

impl Primitive {
    pub fn signed_distance(&self, p: Vec3<f64>) -> Result<f64, GeometryError> {
        let pose = self.pose.to_pose()?;
        Ok(self.shape.sdf(pose.inverse().transform_point(p)))
    }
}

/// Collection of primitives plus the reserved background class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    pub sky_class: u32,
    pub sky_color: [u8; 3],
    /// Direction toward the light, world frame.
    pub light_dir: [f64; 3],
}

/// Primitive with its pose resolved once for repeated queries.
#[derive(Debug, Clone)]
pub(crate) struct Placed {
    shape: Shape,
    world_from_local: RigidPose<f64>,
    local_from_world: RigidPose<f64>,
}

impl SceneSpec {
    pub fn empty() -> Self {
        Self { primitives: Vec::new(), sky_class: 0, sky_color: [135, 190, 235], light_dir: [0.3, 0.2, 1.0] }
    }

    /// Ground plane, a 2 m sphere resting on it and a 4 x 2 x 1 m box.
    /// Classes follow [`benchmark_palette`].
    pub fn benchmark() -> Self {
        Self {
            primitives: vec![
                Primitive { shape: Shape::Plane { size: None }, pose: PoseSpec::at(0.0, 0.0, 0.0), color: [110, 110, 100], class: 1 },
                Primitive { shape: Shape::Sphere { radius: 2.0 }, pose: PoseSpec::at(-2.5, 0.0, 2.0), color: [200, 40, 40], class: 2 },
                Primitive { shape: Shape::Box { size: [4.0, 2.0, 1.0] }, pose: PoseSpec::at(2.5, 0.0, 0.5), color: [40, 70, 200], class: 3 },
            ],
            ..Self::empty()
        }
    }

    pub fn validate(&self, palette: Option<&ClassPalette>) -> Result<(), SynthError> {
        for (i, p) in self.primitives.iter().enumerate() {
            let dims: Vec<f64> = match p.shape {
                Shape::Sphere { radius } => vec![radius],
                Shape::Box { size } => size.to_vec(),
                Shape::Plane { size } => size.map(|s| s.to_vec()).unwrap_or_default(),
                Shape::Cylinder { radius, height } => vec![radius, height],
            };
            if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                return Err(SynthError::InvalidScene(format!("primitive {i} has invalid dimensions")));
            }
            if p.pose.translation.iter().chain(&p.pose.rotation).any(|v| !v.is_finite()) {
                return Err(SynthError::InvalidScene(format!("primitive {i} has a non-finite pose")));
            }
            if p.pose.to_pose().is_err() {
                return Err(SynthError::InvalidScene(format!("primitive {i} has an invalid rotation")));
            }
            if let Some(pal) = palette {
                if p.class as usize >= pal.len() {
                    return Err(SynthError::InvalidScene(format!("primitive {i} has class {} outside the palette", p.class)));
                }
            }
        }
        if let Some(pal) = palette {
            if self.sky_class as usize >= pal.len() {
                return Err(SynthError::InvalidScene("sky class outside the palette".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn placed(&self) -> Result<Vec<Placed>, GeometryError> {
        self.primitives
            .iter()
            .map(|p| {
                let pose = p.pose.to_pose()?;
                Ok(Placed { shape: p.shape, local_from_world: pose.inverse(), world_from_local: pose })
            })
            .collect()
    }

    /// Signed distance of the union of all primitives (`+inf` if empty).
    pub fn signed_distance(&self, p: Vec3<f64>) -> Result<f64, GeometryError> {
        Ok(signed_distance_placed(&self.placed()?, p))
    }

    pub fn intersect(&self, origin: Vec3<f64>, dir: Vec3<f64>) -> Result<Option<SceneHit>, GeometryError> {
        Ok(intersect_placed(&self.placed()?, origin, dir))
    }
}

pub(crate) fn signed_distance_placed(placed: &[Placed], p: Vec3<f64>) -> f64 {
    placed.iter().map(|q| q.shape.sdf(q.local_from_world.transform_point(p))).fold(f64::INFINITY, f64::min)
}

/// Nearest hit with `t > 0`; ties go to the lower primitive index.
pub(crate) fn intersect_placed(placed: &[Placed], origin: Vec3<f64>, dir: Vec3<f64>) -> Option<SceneHit> {
    let mut best: Option<SceneHit> = None;
    for (i, q) in placed.iter().enumerate() {
        let o = q.local_from_world.transform_point(origin);
        let d = q.local_from_world.transform_vector(dir);
        if let Some((t, n)) = q.shape.intersect(o, d, 1e-9) {
            if best.is_none_or(|b| t < b.t) {
                best = Some(SceneHit { t, primitive: i, normal: q.world_from_local.transform_vector(n).normalize() });
            }
        }
    }
    best
}

/// Sky, ground, sphere, box.
pub fn benchmark_palette() -> ClassPalette {
    let c = |id: u32, name: &str, color: [u8; 3]| ClassInfo { id, name: name.into(), color };
    ClassPalette::new(vec![c(0, "sky", [135, 190, 235]), c(1, "ground", [110, 110, 100]), c(2, "sphere", [200, 40, 40]), c(3, "box", [40, 70, 200])])
        .expect("benchmark palette is valid")
}
