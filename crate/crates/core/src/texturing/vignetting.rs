use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Image8;
use crate::error::TextureError;

/// Even radial gain `g(r) = 1 + a r^2 + b r^4 + c r^6`, with `r` the pixel
/// distance to the image center normalized so the farthest corner pixel sits
/// at `r = 1`. Pixel distances use integer pixel indices; the default center
/// is `((w - 1) / 2, (h - 1) / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VignettingModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    #[serde(default)]
    pub center: Option<(f64, f64)>,
}

impl Default for VignettingModel {
    fn default() -> Self {
        Self { a: -0.3, b: 0.0, c: 0.0, center: None }
    }
}

impl VignettingModel {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, TextureError> {
        let m = Self { a, b, c, center: None };
        m.validate()?;
        Ok(m)
    }

    pub fn identity() -> Self {
        Self { a: 0.0, b: 0.0, c: 0.0, center: None }
    }

    pub fn gain(&self, r: f64) -> f64 {
        let s = r * r;
        1.0 + s * (self.a + s * (self.b + s * self.c))
    }

    /// Checks `g > 0` on `[0, 1]`. As a cubic in `s = r^2`, the minimum over
    /// `[0, 1]` is attained at an endpoint or a stationary point.
    pub fn validate(&self) -> Result<(), TextureError> {
        if ![self.a, self.b, self.c].iter().all(|x| x.is_finite()) {
            return Err(TextureError::InvalidVignetting(f64::NAN));
        }
        let mut candidates = vec![0.0, 1.0];
        // d/ds (a s + b s^2 + c s^3) = a + 2 b s + 3 c s^2
        let (qa, qb, qc) = (3.0 * self.c, 2.0 * self.b, self.a);
        if qa.abs() > 1e-300 {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                candidates.push((-qb + sq) / (2.0 * qa));
                candidates.push((-qb - sq) / (2.0 * qa));
            }
        } else if qb.abs() > 1e-300 {
            candidates.push(-qc / qb);
        }
        for s in candidates.into_iter().filter(|s| (0.0..=1.0).contains(s)) {
            let r = s.sqrt();
            if !(self.gain(r) > 0.0) {
                return Err(TextureError::InvalidVignetting(r));
            }
        }
        Ok(())
    }

    fn center_for(&self, width: usize, height: usize) -> (f64, f64) {
        self.center.unwrap_or(((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0))
    }

    fn max_radius(&self, width: usize, height: usize) -> f64 {
        let (cu, cv) = self.center_for(width, height);
        let (w, h) = (width as f64 - 1.0, height as f64 - 1.0);
        [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
            .iter()
            .map(|&(x, y)| ((x - cu).powi(2) + (y - cv).powi(2)).sqrt())
            .fold(0.0, f64::max)
    }

    /// Normalized radius of pixel `(x, y)`.
    pub fn radius(&self, x: usize, y: usize, width: usize, height: usize) -> f64 {
        let (cu, cv) = self.center_for(width, height);
        let rmax = self.max_radius(width, height);
        if rmax == 0.0 {
            return 0.0;
        }
        ((x as f64 - cu).powi(2) + (y as f64 - cv).powi(2)).sqrt() / rmax
    }
}

fn apply(image: &Image8, model: &VignettingModel, gain: impl Fn(f64) -> f64 + Sync) -> Result<Image8, TextureError> {
    if image.channels() != 3 {
        return Err(TextureError::Channels { expected: 3, actual: image.channels() });
    }
    model.validate()?;
    let (w, h) = (image.width(), image.height());
    let mut out = image.clone();
    out.data_mut().par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let g = gain(model.gain(model.radius(x, y, w, h)));
            for c in 0..3 {
                let v = row[3 * x + c] as f64 * g;
                row[3 * x + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    });
    Ok(out)
}

/// `out = g(r) * in` per channel, rounded and saturated to `[0, 255]`.
pub fn vignetting_correct(image: &Image8, model: &VignettingModel) -> Result<Image8, TextureError> {
    apply(image, model, |g| g)
}

/// Synthetic vignette with gain `1 / g(r)`: the inverse of [`vignetting_correct`].
pub fn apply_vignette(image: &Image8, model: &VignettingModel) -> Result<Image8, TextureError> {
    apply(image, model, |g| 1.0 / g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn center_unchanged_and_corner_scaled() {
        let m = VignettingModel::new(-0.2, 0.05, -0.01).unwrap();
        let img = Image8::filled(5, 5, &[100, 150, 200]);
        let out = vignetting_correct(&img, &m).unwrap();
        assert_eq!(out.pixel(2, 2), &[100, 150, 200]);
        assert!((m.radius(0, 0, 5, 5) - 1.0).abs() < 1e-15);
        let g: f64 = 1.0 - 0.2 + 0.05 - 0.01;
        assert_eq!(out.pixel(0, 0), &[(100.0 * g).round() as u8, (150.0 * g).round() as u8, (200.0 * g).round() as u8]);
        assert_eq!(out.pixel(4, 4), out.pixel(0, 0));
    }

    #[test]
    fn identity_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<u8> = (0..32 * 20 * 3).map(|_| rng.random()).collect();
        let img = Image8::from_vec(32, 20, 3, data).unwrap();
        let once = vignetting_correct(&img, &VignettingModel::identity()).unwrap();
        assert_eq!(once, img);
        assert_eq!(vignetting_correct(&once, &VignettingModel::identity()).unwrap(), img);
    }

    #[test]
    fn round_trip_within_one_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (w, h) = (64, 48);
        let data: Vec<u8> = (0..w * h * 3).map(|_| rng.random_range(0..=170)).collect();
        let img = Image8::from_vec(w, h, 3, data).unwrap();
        let m = VignettingModel::default();
        let back = vignetting_correct(&apply_vignette(&img, &m).unwrap(), &m).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
    }

    #[test]
    fn saturates_instead_of_wrapping() {
        let m = VignettingModel::new(0.5, 0.0, 0.0).unwrap();
        let out = vignetting_correct(&Image8::filled(3, 3, &[250, 250, 250]), &m).unwrap();
        assert_eq!(out.pixel(0, 0), &[255, 255, 255]);
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(VignettingModel::new(-1.0, 0.0, 0.0).is_err());
        assert!(VignettingModel::new(-1.5, 0.4, 0.0).is_err());
        // interior minimum: g(s) = 1 - 3s + 3s^2 has its minimum 0.25 at s = 0.5
        assert!(VignettingModel::new(-3.0, 3.0, 0.0).is_ok());
        // dips below zero between the endpoints only
        assert!(VignettingModel::new(-4.2, 4.2, 0.0).is_err());
        assert!(VignettingModel::new(f64::NAN, 0.0, 0.0).is_err());
        let gray = Image8::filled(2, 2, &[1]);
        assert!(matches!(vignetting_correct(&gray, &VignettingModel::default()), Err(TextureError::Channels { .. })));
    }
}
