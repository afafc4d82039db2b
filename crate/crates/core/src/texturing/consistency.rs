use serde::{Deserialize, Serialize};

use crate::geometry::{Mat3, Vec3};
use crate::linalg::symmetric_eigen3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsistencyConfig {
    /// Squared Mahalanobis threshold.
    pub tau_sq: f64,
    /// Fraction of the views that always survives.
    pub min_fraction: f64,
    /// Added to the covariance diagonal, in squared cone units.
    pub regularization: f64,
    pub max_iterations: usize,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self { tau_sq: 9.0, min_fraction: 0.3, regularization: 1e-4, max_iterations: 10 }
    }
}

/// RGB in `[0, 255]` to the HSV cone `(S V cos H, S V sin H, V)`, where the
/// hue angle is continuous and black collapses to the apex.
pub fn hsv_cone(rgb: [f64; 3]) -> Vec3<f64> {
    let [r, g, b] = rgb.map(|c| (c / 255.0).clamp(0.0, 1.0));
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    if chroma <= 0.0 {
        return Vec3::new(0.0, 0.0, max);
    }
    let sector = if max == r {
        ((g - b) / chroma).rem_euclid(6.0)
    } else if max == g {
        (b - r) / chroma + 2.0
    } else {
        (r - g) / chroma + 4.0
    };
    let h = sector * std::f64::consts::FRAC_PI_3;
    // S * V == chroma
    Vec3::new(chroma * h.cos(), chroma * h.sin(), max)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mahalanobis_sq(x: Vec3<f64>, mu: Vec3<f64>, cov: &Mat3<f64>) -> f64 {
    let (vals, vecs) = symmetric_eigen3(cov);
    let d = x - mu;
    (0..3).map(|k| d.dot(vecs[k]).powi(2) / vals[k]).sum()
}

/// Indices (ascending) of the views whose colors are consistent with the
/// majority.
///
/// The first estimate of center and spread is robust (per-axis median and
/// scaled MAD), so a single outlier cannot inflate the covariance it is tested
/// against. Later rounds use the mean and covariance of the current inliers.
/// Every round re-tests all views against `tau_sq`; if fewer than
/// `max(2, ceil(min_fraction * n))` pass, the closest ones are kept instead.
/// One or two views are returned unfiltered.
pub fn photo_consistency_filter(colors: &[[f64; 3]], cfg: &ConsistencyConfig) -> Vec<usize> {
    let n = colors.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let floor = ((cfg.min_fraction * n as f64).ceil() as usize).max(2).min(n);
    let x: Vec<Vec3<f64>> = colors.iter().map(|&c| hsv_cone(c)).collect();
    let delta = Mat3::identity().scale(cfg.regularization);

    let mut center = [0.0; 3];
    let mut cov = Mat3::zero();
    for k in 0..3 {
        let med = median(x.iter().map(|p| p[k]).collect());
        let mad = median(x.iter().map(|p| (p[k] - med).abs()).collect());
        center[k] = med;
        cov.m[k][k] = (1.4826 * mad).powi(2);
    }
    let mut mu = Vec3::new(center[0], center[1], center[2]);
    let mut cov = cov.add(&delta);
    let mut kept: Vec<usize> = Vec::new();
    for _ in 0..cfg.max_iterations.max(1) {
        let d2: Vec<f64> = x.iter().map(|&p| mahalanobis_sq(p, mu, &cov)).collect();
        let mut next: Vec<usize> = (0..n).filter(|&i| d2[i] <= cfg.tau_sq).collect();
        if next.len() < floor {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| d2[a].total_cmp(&d2[b]).then(a.cmp(&b)));
            next = order[..floor].to_vec();
            next.sort_unstable();
        }
        if next == kept {
            break;
        }
        kept = next;
        let m = kept.len() as f64;
        mu = kept.iter().fold(Vec3::new(0.0, 0.0, 0.0), |acc, &i| acc + x[i]) / m;
        let mut c = Mat3::zero();
        for &i in &kept {
            c = c.add(&Mat3::outer(x[i] - mu, x[i] - mu));
        }
        cov = c.scale(1.0 / (m - 1.0).max(1.0)).add(&delta);
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_embedding_values() {
        let red = hsv_cone([255.0, 0.0, 0.0]);
        assert!((red - Vec3::new(1.0, 0.0, 1.0)).norm() < 1e-12);
        let green = hsv_cone([0.0, 255.0, 0.0]);
        let h = 2.0 * std::f64::consts::FRAC_PI_3;
        assert!((green - Vec3::new(h.cos(), h.sin(), 1.0)).norm() < 1e-12);
        assert_eq!(hsv_cone([0.0, 0.0, 0.0]), Vec3::new(0.0, 0.0, 0.0));
        assert_eq!(hsv_cone([51.0, 51.0, 51.0]), Vec3::new(0.0, 0.0, 0.2));
    }

    #[test]
    fn identical_colors_all_kept() {
        let c = vec![[10.0, 200.0, 30.0]; 7];
        assert_eq!(photo_consistency_filter(&c, &ConsistencyConfig::default()), (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn green_outlier_among_reds_is_dropped() {
        let mut c = vec![[200.0, 20.0, 20.0]; 9];
        c.insert(4, [20.0, 200.0, 20.0]);
        let kept = photo_consistency_filter(&c, &ConsistencyConfig::default());
        assert_eq!(kept, vec![0, 1, 2, 3, 5, 6, 7, 8, 9]);
    }

    #[test]
    fn noisy_reds_with_outlier() {
        let mut c: Vec<[f64; 3]> = (0..9).map(|i| [190.0 + 2.0 * i as f64, 18.0 + (i % 3) as f64, 22.0 - (i % 4) as f64]).collect();
        c.push([30.0, 180.0, 40.0]);
        let kept = photo_consistency_filter(&c, &ConsistencyConfig::default());
        assert!(!kept.contains(&9));
        assert!(kept.len() >= 3);
    }

    #[test]
    fn two_views_pass_unfiltered() {
        let c = [[0.0, 0.0, 255.0], [255.0, 255.0, 0.0]];
        assert_eq!(photo_consistency_filter(&c, &ConsistencyConfig::default()), vec![0, 1]);
        assert_eq!(photo_consistency_filter(&c[..1], &ConsistencyConfig::default()), vec![0]);
    }

    #[test]
    fn never_below_floor() {
        let c: Vec<[f64; 3]> = (0..10).map(|i| [25.0 * i as f64, 255.0 - 25.0 * i as f64, (i * 37 % 255) as f64]).collect();
        let kept = photo_consistency_filter(&c, &ConsistencyConfig::default());
        assert!(kept.len() >= 3);
    }
}
