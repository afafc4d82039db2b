//! Pinhole camera model and image buffers.
//!
//! Camera convention: +z forward, +x right, +y down. Pixel `(i, j)` covers the
//! continuous square `[i, i+1) × [j, j+1)` with its center at `(i + ½, j + ½)`;
//! the image rectangle is `[0, width) × [0, height)`. Images are assumed
//! rectified, so no lens distortion is modelled.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::geometry::{RigidPose, Vec3};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
}

/// Row-major, channel-interleaved image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer<P> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<P>,
}

pub type Image8 = ImageBuffer<u8>;
pub type ImageF = ImageBuffer<f32>;

impl<P: Copy + Default> ImageBuffer<P> {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![P::default(); width * height * channels] }
    }

    pub fn filled(width: usize, height: usize, value: &[P]) -> Self {
        let channels = value.len();
        let mut data = Vec::with_capacity(width * height * channels);
        for _ in 0..width * height {
            data.extend_from_slice(value);
        }
        Self { width, height, channels, data }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<P>) -> Result<Self, GeometryError> {
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(GeometryError::ImageSize { expected, actual: data.len() });
        }
        Ok(Self { width, height, channels, data })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[P] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [P] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<P> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[P] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [P] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> P {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: P) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn map<Q: Copy + Default>(&self, f: impl Fn(P) -> Q) -> ImageBuffer<Q> {
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&p| f(p)).collect(),
        }
    }
}

impl Image8 {
    /// Bilinear sample of channel `c` at continuous pixel coordinate `(u, v)`,
    /// clamped to the border.
    pub fn sample_bilinear(&self, u: f64, v: f64, c: usize) -> f64 {
        let x = (u - 0.5).clamp(0.0, (self.width - 1) as f64);
        let y = (v - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p = |xx, yy| self.get(xx, yy, c) as f64;
        let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
        let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Luma of a 3-channel pixel (Rec. 601 weights); single-channel images
    /// return the sample itself.
    pub fn gray(&self, x: usize, y: usize) -> f32 {
        if self.channels == 1 {
            return self.get(x, y, 0) as f32;
        }
        let p = self.pixel(x, y);
        0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32
    }
}

/// Intrinsics, extrinsics and image size: everything needed to project.
#[derive(Clone, Debug, PartialEq)]
pub struct PinholeCamera<T> {
    intrinsics: Intrinsics<T>,
    camera_to_world: RigidPose<T>,
    world_to_camera: RigidPose<T>,
    width: usize,
    height: usize,
}

impl<T: Real> PinholeCamera<T> {
    pub fn new(
        intrinsics: Intrinsics<T>,
        camera_to_world: RigidPose<T>,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let Intrinsics { fx, fy, cx, cy } = intrinsics;
        if !(fx > T::zero() && fy > T::zero()) {
            return Err(GeometryError::InvalidIntrinsics(format!("focal lengths must be positive, got {fx}, {fy}")));
        }
        if !(cx >= T::zero() && cx < T::from_usize(width).unwrap() && cy >= T::zero() && cy < T::from_usize(height).unwrap())
        {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self { intrinsics, camera_to_world, world_to_camera: camera_to_world.inverse(), width, height })
    }

    #[inline]
    pub fn intrinsics(&self) -> &Intrinsics<T> {
        &self.intrinsics
    }

    #[inline]
    pub fn pose(&self) -> &RigidPose<T> {
        &self.camera_to_world
    }

    #[inline]
    pub fn center(&self) -> Vec3<T> {
        self.camera_to_world.translation()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn to_camera(&self, world: Vec3<T>) -> Vec3<T> {
        self.world_to_camera.transform_point(world)
    }

    /// Projects a point in camera coordinates without the image-bounds check.
    #[inline]
    pub fn project_camera_unbounded(&self, p: Vec3<T>) -> Option<(T, T)> {
        if !(p.z > T::zero()) {
            return None;
        }
        let k = &self.intrinsics;
        Some((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
    }

    #[inline]
    pub fn in_image(&self, u: T, v: T) -> bool {
        u >= T::zero()
            && v >= T::zero()
            && u < T::from_usize(self.width).unwrap()
            && v < T::from_usize(self.height).unwrap()
    }

    /// Pixel coordinate of a world point, or `None` when the point is behind
    /// the camera or outside the image rectangle.
    #[inline]
    pub fn project(&self, point: Vec3<T>) -> Option<(T, T)> {
        let (u, v) = self.project_camera_unbounded(self.to_camera(point))?;
        self.in_image(u, v).then_some((u, v))
    }

    /// World point at camera-frame depth `depth` along the ray through `(u, v)`.
    pub fn unproject(&self, u: T, v: T, depth: T) -> Vec3<T> {
        let k = &self.intrinsics;
        let pc = Vec3::new((u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth);
        self.camera_to_world.transform_point(pc)
    }

    /// Unit world-space direction of the ray through `(u, v)`.
    pub fn ray_direction(&self, u: T, v: T) -> Vec3<T> {
        let k = &self.intrinsics;
        let d = Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, T::one());
        self.camera_to_world.transform_vector(d).normalize()
    }

    /// Area in pixels² of the projected triangle. Fails when a vertex does not
    /// project into the image.
    pub fn triangle_area_px(&self, tri: &[Vec3<T>; 3]) -> Result<T, GeometryError> {
        let mut px = [(T::zero(), T::zero()); 3];
        for (i, v) in tri.iter().enumerate() {
            px[i] = self.project(*v).ok_or(GeometryError::DegenerateProjection(i))?;
        }
        Ok(shoelace_area(px))
    }
}

/// Unsigned area of a 2D triangle.
#[inline]
pub fn shoelace_area<T: Real>(p: [(T, T); 3]) -> T {
    let (a, b, c) = (p[0], p[1], p[2]);
    ((b.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (b.1 - a.1)).abs() * T::lit(0.5)
}

/// A posed camera together with its image (color or class ids).
#[derive(Clone, Debug)]
pub struct CameraFrame<T> {
    pub camera: PinholeCamera<T>,
    pub image: Image8,
    pub frame_id: u32,
}

impl<T: Real> CameraFrame<T> {
    pub fn new(
        intrinsics: Intrinsics<T>,
        camera_to_world: RigidPose<T>,
        image: Image8,
        frame_id: u32,
    ) -> Result<Self, GeometryError> {
        let camera = PinholeCamera::new(intrinsics, camera_to_world, image.width(), image.height())?;
        Ok(Self { camera, image, frame_id })
    }

    #[inline]
    pub fn project(&self, point: Vec3<T>) -> Option<(T, T)> {
        self.camera.project(point)
    }

    pub fn triangle_area_px(&self, tri: &[Vec3<T>; 3]) -> Result<T, GeometryError> {
        self.camera.triangle_area_px(tri)
    }
}
