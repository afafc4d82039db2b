//! Incremental point statistics, PCA plane estimation, adaptive truncation
//! and per-measurement weighting.

use serde::{Deserialize, Serialize};

use crate::error::VolumeError;
use crate::geometry::{Mat3, Vec3};
use crate::linalg::symmetric_eigen3;
use crate::scalar::Real;

/// Count, mean and sample covariance (n − 1 denominator) of a point set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockStatistics<T> {
    pub n: u64,
    pub mean: Vec3<T>,
    pub covariance: Mat3<T>,
}

impl<T: Real> Default for BlockStatistics<T> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<T: Real> BlockStatistics<T> {
    pub fn empty() -> Self {
        Self { n: 0, mean: Vec3::zero(), covariance: Mat3::zero() }
    }

    /// Statistics of a single point: the point itself and a zero covariance.
    pub fn from_point(p: Vec3<T>) -> Self {
        Self { n: 1, mean: p, covariance: Mat3::zero() }
    }

    /// Accumulates `points` one at a time through [`merge_statistics`].
    pub fn from_points(points: &[Vec3<T>]) -> Self {
        points.iter().fold(Self::empty(), |acc, &p| acc.merged_with_point(p))
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn merged_with_point(&self, p: Vec3<T>) -> Self {
        merge_statistics(self, &Self::from_point(p)).expect("non-empty merge")
    }
}

/// Combines the statistics of two disjoint point sets.
///
/// The result equals the statistics of the union computed in one batch.
pub fn merge_statistics<T: Real>(
    a: &BlockStatistics<T>,
    b: &BlockStatistics<T>,
) -> Result<BlockStatistics<T>, VolumeError> {
    let n = a.n + b.n;
    if n == 0 {
        return Err(VolumeError::EmptyMerge);
    }
    if a.n == 0 {
        return Ok(*b);
    }
    if b.n == 0 {
        return Ok(*a);
    }
    let na = T::from_count(a.n);
    let nb = T::from_count(b.n);
    let nt = T::from_count(n);
    let mean = (a.mean * na + b.mean * nb) / nt;
    let da = mean - a.mean;
    let db = mean - b.mean;
    let one = T::one();
    let scatter = a
        .covariance
        .scale(na - one)
        .add(&b.covariance.scale(nb - one))
        .add(&Mat3::outer(da, da).scale(na))
        .add(&Mat3::outer(db, db).scale(nb));
    let mut covariance = scatter.scale(one / (nt - one));
    for i in 0..3 {
        for j in 0..i {
            covariance.m[i][j] = covariance.m[j][i];
        }
    }
    Ok(BlockStatistics { n, mean, covariance })
}

/// Local surface estimate from block statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneEstimate<T> {
    /// Unit normal oriented toward the sensor.
    pub normal: Vec3<T>,
    /// `1 − λ3/λ2`, in `[0, 1]`.
    pub flatness: T,
    /// Eigenvalues, descending.
    pub eigenvalues: [T; 3],
}

/// Default threshold on λ2 (m²) below which statistics are treated as degenerate.
pub const DEFAULT_PLANE_TOLERANCE: f64 = 1e-12;

/// PCA plane fit. The normal is the least-dominant eigenvector, flipped so
/// that it points toward `sensor_pos`.
pub fn estimate_plane<T: Real>(
    stats: &BlockStatistics<T>,
    sensor_pos: Vec3<T>,
    tolerance: T,
) -> Result<PlaneEstimate<T>, VolumeError> {
    if stats.n < 3 {
        return Err(VolumeError::DegenerateStatistics { n: stats.n, lambda2: 0.0 });
    }
    let (values, vectors) = symmetric_eigen3(&stats.covariance);
    let eigenvalues = values.map(|v| v.max(T::zero()));
    if !(eigenvalues[1] > tolerance) {
        return Err(VolumeError::DegenerateStatistics { n: stats.n, lambda2: eigenvalues[1].as_f64() });
    }
    let v3 = vectors[2];
    let normal = if v3.dot(sensor_pos - stats.mean) > T::zero() { v3 } else { -v3 };
    let flatness = (T::one() - eigenvalues[2] / eigenvalues[1]).max(T::zero()).min(T::one());
    Ok(PlaneEstimate { normal, flatness, eigenvalues })
}

/// Bounds and flatness weight of the adaptive truncation distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationConfig<T> {
    pub eps_min: T,
    pub eps_max: T,
    pub k: T,
}

/// Default flatness weight: a perfectly flat block reaches `eps_max` at 64 points.
pub const DEFAULT_FLATNESS_WEIGHT: f64 = 64.0;

impl<T: Real> TruncationConfig<T> {
    pub fn new(eps_min: T, eps_max: T, k: T) -> Result<Self, VolumeError> {
        let cfg = Self { eps_min, eps_max, k };
        cfg.validate()?;
        Ok(cfg)
    }

    /// A fixed truncation distance (`eps_min = eps_max`).
    pub fn fixed(eps: T) -> Result<Self, VolumeError> {
        Self::new(eps, eps, T::lit(DEFAULT_FLATNESS_WEIGHT))
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        if !(self.eps_min > T::zero()) || !self.eps_min.is_finite() || !self.eps_max.is_finite() {
            return Err(VolumeError::InvalidConfig(format!("eps_min must be positive, got {}", self.eps_min)));
        }
        if self.eps_min > self.eps_max {
            return Err(VolumeError::InvalidConfig(format!(
                "eps_min {} exceeds eps_max {}",
                self.eps_min, self.eps_max
            )));
        }
        if !(self.k > T::zero()) || !self.k.is_finite() {
            return Err(VolumeError::InvalidConfig(format!("flatness weight k must be positive, got {}", self.k)));
        }
        Ok(())
    }
}

/// `clamp(k · flatness / n · eps_max, eps_min, eps_max)`; `eps_max` for `n = 0`.
pub fn adaptive_truncation<T: Real>(flatness: T, n: u64, cfg: &TruncationConfig<T>) -> T {
    if n == 0 {
        return cfg.eps_max;
    }
    let raw = cfg.k * flatness / T::from_count(n) * cfg.eps_max;
    raw.max(cfg.eps_min).min(cfg.eps_max)
}

/// Default floor of the measurement weight.
pub const DEFAULT_MIN_WEIGHT: f64 = 0.05;

/// Incidence cosine between the surface normal and the direction back to the
/// sensor, clamped to `[w_min, 1]`.
pub fn measurement_weight<T: Real>(normal: Vec3<T>, sensor_pos: Vec3<T>, point: Vec3<T>, w_min: T) -> T {
    match (sensor_pos - point).try_normalize() {
        Some(dir) => normal.dot(dir).max(w_min).min(T::one()),
        None => w_min,
    }
}
