use rayon::prelude::*;

use super::raster::rasterize_triangle;
use crate::camera::{Image8, ImageF, PinholeCamera};
use crate::geometry::Vec3;

/// Sobel gradient magnitude of the Rec.601 luma, with edge replication.
pub fn sobel_magnitude(image: &Image8) -> ImageF {
    let (w, h) = (image.width(), image.height());
    let mut gray = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            gray[y * w + x] = image.gray(x, y);
        }
    }
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        gray[y * w + x]
    };
    let mut out = vec![0f32; w * h];
    out.par_chunks_mut(w.max(1)).enumerate().for_each(|(y, row)| {
        let y = y as isize;
        for (x, o) in row.iter_mut().enumerate() {
            let x = x as isize;
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            *o = (gx * gx + gy * gy).sqrt();
        }
    });
    ImageF::from_vec(w, h, 1, out).expect("gradient buffer has image size")
}

/// Pixel footprint of a face: its projected corners and the pixels whose
/// centers it covers. Faces smaller than a pixel fall back to the single pixel
/// containing the projected centroid.
pub(crate) fn face_pixels(camera: &PinholeCamera<f64>, tri: &[Vec3<f64>; 3]) -> Option<([(f64, f64); 3], Vec<(usize, usize)>)> {
    let p = [camera.project(tri[0])?, camera.project(tri[1])?, camera.project(tri[2])?];
    let mut px = Vec::new();
    rasterize_triangle(p, camera.width(), camera.height(), |x, y| px.push((x, y)));
    if px.is_empty() {
        let cu = (p[0].0 + p[1].0 + p[2].0) / 3.0;
        let cv = (p[0].1 + p[1].1 + p[2].1) / 3.0;
        let x = (cu.floor().max(0.0) as usize).min(camera.width() - 1);
        let y = (cv.floor().max(0.0) as usize).min(camera.height() - 1);
        px.push((x, y));
    }
    Some((p, px))
}

/// Sum of gradient magnitudes over the face footprint; `None` if a corner
/// does not project into the image.
pub fn face_quality(gradient: &ImageF, camera: &PinholeCamera<f64>, tri: &[Vec3<f64>; 3]) -> Option<f64> {
    let (_, px) = face_pixels(camera, tri)?;
    Some(px.iter().map(|&(x, y)| gradient.get(x, y, 0) as f64).sum())
}

/// Mean RGB over the face footprint.
pub fn face_color(image: &Image8, camera: &PinholeCamera<f64>, tri: &[Vec3<f64>; 3]) -> Option<[f64; 3]> {
    let (_, px) = face_pixels(camera, tri)?;
    let mut sum = [0.0; 3];
    for &(x, y) in &px {
        for (c, s) in sum.iter_mut().enumerate() {
            *s += image.get(x, y, c) as f64;
        }
    }
    let n = px.len() as f64;
    Some(sum.map(|s| s / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Intrinsics;
    use crate::geometry::RigidPose;

    #[test]
    fn constant_image_has_zero_gradient() {
        let g = sobel_magnitude(&Image8::filled(9, 7, &[80, 80, 80]));
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_edge() {
        let mut img = Image8::filled(6, 4, &[0, 0, 0]);
        for y in 0..4 {
            for x in 3..6 {
                img.pixel_mut(x, y).copy_from_slice(&[100, 100, 100]);
            }
        }
        let g = sobel_magnitude(&img);
        // kernel sum 4 times a step of 100 on either side of the edge
        assert!((g.get(2, 1, 0) - 400.0).abs() < 1e-3);
        assert!((g.get(3, 1, 0) - 400.0).abs() < 1e-3);
        assert_eq!(g.get(0, 1, 0), 0.0);
        assert_eq!(g.get(5, 1, 0), 0.0);
    }

    #[test]
    fn tiny_face_uses_nearest_pixel() {
        let cam = PinholeCamera::new(Intrinsics { fx: 10.0, fy: 10.0, cx: 5.0, cy: 5.0 }, RigidPose::identity(), 10, 10).unwrap();
        let mut grad = ImageF::new(10, 10, 1);
        grad.set(5, 5, 0, 7.0);
        let tri = [Vec3::new(0.001, 0.001, 1.0), Vec3::new(0.002, 0.001, 1.0), Vec3::new(0.001, 0.002, 1.0)];
        assert_eq!(face_quality(&grad, &cam, &tri), Some(7.0));
    }
}
