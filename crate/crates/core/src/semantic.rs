//! Per-face semantic classes fused from posed label images.
//!
//! Each visible (face, frame) pair casts one vote: the class under the
//! projected face centroid, weighted by the face's projected area. Row
//! normalized votes become the data term of a Potts MRF over face adjacency;
//! faces nobody sees get a uniform row and are decided by their neighbours.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraFrame;
use crate::error::SemanticError;
use crate::mesher::{FaceAdjacency, TriangleMesh};
use crate::mrf::{solve, MrfProblem, SolverConfig};
use crate::visibility::VisibilityTable;

pub const DEFAULT_LAMBDA_SEM: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub id: u32,
    pub name: String,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPalette {
    pub classes: Vec<ClassInfo>,
}

impl ClassPalette {
    pub fn new(classes: Vec<ClassInfo>) -> Result<Self, SemanticError> {
        let p = Self { classes };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SemanticError> {
        if self.classes.len() < 2 {
            return Err(SemanticError::InvalidPalette(format!("need at least 2 classes, got {}", self.classes.len())));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.id as usize != i {
                return Err(SemanticError::InvalidPalette(format!("class at position {i} has id {}; ids must be 0..N-1 in order", c.id)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SemanticError> {
        let p: Self = serde_json::from_str(text).map_err(|e| SemanticError::InvalidPalette(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn color(&self, class: u32) -> [u8; 3] {
        self.classes[class as usize].color
    }
}

/// Accumulated projected area (pixels²) per face and class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVotes {
    classes: usize,
    sums: Vec<f64>,
}

impl LabelVotes {
    pub fn new(faces: usize, classes: usize) -> Self {
        Self { classes, sums: vec![0.0; faces * classes] }
    }

    pub fn face_count(&self) -> usize {
        self.sums.len() / self.classes.max(1)
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn add(&mut self, face: usize, class: u32, area: f64) -> Result<(), SemanticError> {
        if class as usize >= self.classes {
            return Err(SemanticError::UnknownClass { id: class, classes: self.classes });
        }
        self.sums[face * self.classes + class as usize] += area;
        Ok(())
    }

    pub fn raw(&self, face: usize) -> &[f64] {
        &self.sums[face * self.classes..(face + 1) * self.classes]
    }

    pub fn is_observed(&self, face: usize) -> bool {
        self.raw(face).iter().any(|&s| s > 0.0)
    }

    /// Row-normalized votes, or the uniform distribution for unobserved faces.
    pub fn distribution(&self, face: usize) -> Vec<f64> {
        let row = self.raw(face);
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter().map(|s| s / total).collect()
        } else {
            vec![1.0 / self.classes as f64; self.classes]
        }
    }
}

/// Centroid-pixel, area-weighted votes. `visibility` frame indices refer to
/// `label_frames`, whose images hold one class id per pixel.
pub fn accumulate_votes(
    mesh: &TriangleMesh<f64>,
    visibility: &VisibilityTable<f64>,
    label_frames: &[CameraFrame<f64>],
    palette: &ClassPalette,
) -> Result<LabelVotes, SemanticError> {
    if let Some(f) = label_frames.iter().find(|f| f.image.channels() != 1) {
        return Err(SemanticError::NotALabelImage(f.image.channels()));
    }
    let n = palette.len();
    let rows: Vec<Result<Vec<f64>, SemanticError>> = (0..mesh.face_count())
        .into_par_iter()
        .map(|face| {
            let mut row = vec![0.0; n];
            let centroid = mesh.centroid(face);
            for view in visibility.views(face) {
                let frame = &label_frames[view.frame as usize];
                let Some((u, v)) = frame.camera.project(centroid) else { continue };
                let x = (u.floor() as usize).min(frame.image.width() - 1);
                let y = (v.floor() as usize).min(frame.image.height() - 1);
                let id = frame.image.get(x, y, 0) as u32;
                if id as usize >= n {
                    return Err(SemanticError::UnknownClass { id, classes: n });
                }
                row[id as usize] += view.area_px;
            }
            Ok(row)
        })
        .collect();
    let mut votes = LabelVotes::new(mesh.face_count(), n);
    for (face, row) in rows.into_iter().enumerate() {
        votes.sums[face * n..(face + 1) * n].copy_from_slice(&row?);
    }
    Ok(votes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusedLabels {
    pub classes: Vec<u32>,
    /// Normalized vote share of the chosen class (`1/N` for unobserved faces).
    pub confidence: Vec<f64>,
    pub observed: Vec<bool>,
    pub energy: f64,
}

/// Potts MRF over all faces with unary `-E_D` and weight `lambda_sem`.
pub fn fuse_labels(votes: &LabelVotes, adjacency: &FaceAdjacency, lambda_sem: f64) -> Result<FusedLabels, SemanticError> {
    let mut problem = MrfProblem::new(lambda_sem)?;
    let dists: Vec<Vec<f64>> = (0..votes.face_count()).map(|f| votes.distribution(f)).collect();
    for d in &dists {
        problem.add_node(d.iter().enumerate().map(|(c, &p)| (c as u32, -p)).collect())?;
    }
    for &(a, b) in &adjacency.edges {
        problem.add_edge(a as usize, b as usize)?;
    }
    let sol = solve(&problem, &SolverConfig::default())?;
    let confidence = sol.labels.iter().zip(&dists).map(|(&c, d)| d[c as usize]).collect();
    let observed = (0..votes.face_count()).map(|f| votes.is_observed(f)).collect();
    Ok(FusedLabels { classes: sol.labels, confidence, observed, energy: sol.energy })
}

#[derive(Serialize)]
struct FaceRecord<'a> {
    face: usize,
    class: u32,
    name: &'a str,
    confidence: f64,
    observed: bool,
}

/// Per-face `(class, confidence)` report.
pub fn labels_json(fused: &FusedLabels, palette: &ClassPalette) -> serde_json::Value {
    let faces: Vec<FaceRecord> = fused
        .classes
        .iter()
        .enumerate()
        .map(|(f, &c)| FaceRecord {
            face: f,
            class: c,
            name: &palette.classes[c as usize].name,
            confidence: fused.confidence[f],
            observed: fused.observed[f],
        })
        .collect();
    let mut counts = vec![0usize; palette.len()];
    for &c in &fused.classes {
        counts[c as usize] += 1;
    }
    serde_json::json!({
        "palette": palette.classes,
        "class_face_counts": counts,
        "unobserved_faces": fused.observed.iter().filter(|o| !**o).count(),
        "energy": fused.energy,
        "faces": faces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Image8, Intrinsics, PinholeCamera};
    use crate::geometry::{RigidPose, Vec3};
    use crate::visibility::{compute_visibility, Bvh, VisibilityConfig};

    fn palette(n: usize) -> ClassPalette {
        ClassPalette::new((0..n as u32).map(|i| ClassInfo { id: i, name: format!("c{i}"), color: [i as u8; 3] }).collect()).unwrap()
    }

    fn strip(n: usize) -> FaceAdjacency {
        FaceAdjacency { edges: (0..n as u32 - 1).map(|i| (i, i + 1)).collect() }
    }

    #[test]
    fn area_weighted_vote_shares() {
        // road = 0, car = 1
        let mut v = LabelVotes::new(1, 3);
        v.add(0, 0, 5.0).unwrap();
        v.add(0, 0, 3.0).unwrap();
        v.add(0, 1, 2.0).unwrap();
        let d = v.distribution(0);
        assert!((d[0] - 0.8).abs() < 1e-12 && (d[1] - 0.2).abs() < 1e-12 && d[2] == 0.0);
    }

    #[test]
    fn unobserved_face_is_uniform() {
        let v = LabelVotes::new(1, 4);
        assert_eq!(v.distribution(0), vec![0.25; 4]);
        assert!(!v.is_observed(0));
    }

    #[test]
    fn single_vote_is_one_hot() {
        let mut v = LabelVotes::new(1, 3);
        v.add(0, 2, 17.5).unwrap();
        assert_eq!(v.distribution(0), vec![0.0, 0.0, 1.0]);
        assert!(matches!(v.add(0, 3, 1.0), Err(SemanticError::UnknownClass { id: 3, classes: 3 })));
    }

    #[test]
    fn palette_validation() {
        assert!(ClassPalette::new(vec![ClassInfo { id: 0, name: "a".into(), color: [0; 3] }]).is_err());
        assert!(ClassPalette::from_json(r#"{"classes":[{"id":0,"name":"a","color":[0,0,0]},{"id":2,"name":"b","color":[1,1,1]}]}"#).is_err());
        let p = ClassPalette::from_json(r#"{"classes":[{"id":0,"name":"a","color":[0,0,0]},{"id":1,"name":"b","color":[1,2,3]}]}"#).unwrap();
        assert_eq!(p.color(1), [1, 2, 3]);
    }

    #[test]
    fn zero_lambda_is_argmax_with_low_ties() {
        let mut v = LabelVotes::new(3, 3);
        v.add(0, 2, 1.0).unwrap();
        v.add(1, 1, 1.0).unwrap();
        v.add(1, 2, 1.0).unwrap();
        let f = fuse_labels(&v, &strip(3), 0.0).unwrap();
        assert_eq!(f.classes, vec![2, 1, 0]);
        assert_eq!(f.confidence, vec![1.0, 0.5, 1.0 / 3.0]);
        assert_eq!(f.observed, vec![true, true, false]);
    }

    #[test]
    fn invisible_face_takes_neighbour_class() {
        // face 2 is unobserved, everything around it says class 1
        let mut v = LabelVotes::new(5, 4);
        for f in [0, 1, 3, 4] {
            v.add(f, 1, 3.0).unwrap();
        }
        let f = fuse_labels(&v, &strip(5), 0.5).unwrap();
        assert_eq!(f.classes, vec![1; 5]);
        assert_eq!(f.confidence[2], 0.25);
    }

    #[test]
    fn six_face_strip_matches_enumeration() {
        let raw = [[5.0, 1.0, 0.0], [1.0, 1.5, 0.0], [4.0, 0.0, 1.0], [0.0, 0.5, 3.0], [0.0, 0.0, 0.0], [0.0, 1.0, 3.0]];
        let mut v = LabelVotes::new(6, 3);
        for (f, row) in raw.iter().enumerate() {
            for (c, &a) in row.iter().enumerate() {
                if a > 0.0 {
                    v.add(f, c as u32, a).unwrap();
                }
            }
        }
        for &lambda in &[0.0, 0.2, 0.5, 1.0] {
            let got = fuse_labels(&v, &strip(6), lambda).unwrap();
            let mut best = (f64::INFINITY, vec![]);
            let mut energies = Vec::new();
            for code in 0..3usize.pow(6) {
                let labels: Vec<u32> = (0..6).map(|i| ((code / 3usize.pow(i)) % 3) as u32).collect();
                let mut e = 0.0;
                for f in 0..6 {
                    e -= v.distribution(f)[labels[f] as usize];
                    if f + 1 < 6 && labels[f] != labels[f + 1] {
                        e += lambda;
                    }
                }
                energies.push(e);
                if e < best.0 - 1e-12 {
                    best = (e, labels);
                }
            }
            assert!((got.energy - best.0).abs() < 1e-12, "lambda {lambda}: {:?} {} vs {:?} {}", got.classes, got.energy, best.1, best.0);
            if energies.iter().filter(|&&e| e < best.0 + 1e-12).count() == 1 {
                assert_eq!(got.classes, best.1, "lambda {lambda}");
            }
        }
    }

    #[test]
    fn expansion_local_minimum_stays_within_bound() {
        // optimum [0, 0, 2, 2, 2, 2] needs faces 1 and 2 to move to different
        // labels at once, which no single expansion move allows
        let raw = [[5.0, 1.0, 0.0], [1.0, 1.2, 0.0], [0.0, 2.0, 1.9], [0.5, 0.0, 0.6], [0.0, 0.0, 0.0], [3.0, 0.0, 3.1]];
        let mut v = LabelVotes::new(6, 3);
        for (f, row) in raw.iter().enumerate() {
            for (c, &a) in row.iter().enumerate() {
                if a > 0.0 {
                    v.add(f, c as u32, a).unwrap();
                }
            }
        }
        let got = fuse_labels(&v, &strip(6), 0.2).unwrap();
        let optimum = -2.9620428751576293;
        assert!(got.energy >= optimum - 1e-12);
        // energies are negative here, so compare the shifted non-negative form
        let shift = 6.0;
        assert!(got.energy + shift <= 2.0 * (optimum + shift));
    }

    #[test]
    fn class_permutation_is_equivariant() {
        let perm = [2u32, 0, 1];
        let mut v = LabelVotes::new(4, 3);
        let mut w = LabelVotes::new(4, 3);
        let obs = [(0, 0, 4.0), (0, 1, 1.0), (1, 1, 2.0), (2, 2, 5.0), (3, 0, 1.0), (3, 2, 0.7)];
        for &(f, c, a) in &obs {
            v.add(f, c, a).unwrap();
            w.add(f, perm[c as usize], a).unwrap();
        }
        let a = fuse_labels(&v, &strip(4), 0.3).unwrap();
        let b = fuse_labels(&w, &strip(4), 0.3).unwrap();
        assert_eq!(b.classes, a.classes.iter().map(|&c| perm[c as usize]).collect::<Vec<_>>());
    }

    #[test]
    fn votes_from_label_images() {
        let mesh = TriangleMesh::new(
            vec![Vec3::new(-0.5, -0.5, 0.0), Vec3::new(0.5, -0.5, 0.0), Vec3::new(0.0, 0.5, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let cams: Vec<PinholeCamera<f64>> = [0.0, 0.3, -0.3]
            .iter()
            .map(|&x| {
                PinholeCamera::new(
                    Intrinsics { fx: 32.0, fy: 32.0, cx: 16.0, cy: 16.0 },
                    RigidPose::look_at(Vec3::new(x, 0.0, 3.0), Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)).unwrap(),
                    32,
                    32,
                )
                .unwrap()
            })
            .collect();
        let vis = compute_visibility(&mesh, &Bvh::build(&mesh), &cams, &VisibilityConfig::default());
        let frames: Vec<CameraFrame<f64>> = cams
            .iter()
            .enumerate()
            .map(|(i, c)| CameraFrame { camera: c.clone(), image: Image8::filled(32, 32, &[if i == 2 { 1 } else { 0 }]), frame_id: i as u32 })
            .collect();
        let votes = accumulate_votes(&mesh, &vis, &frames, &palette(2)).unwrap();
        let areas: Vec<f64> = vis.views(0).iter().map(|v| v.area_px).collect();
        let d = votes.distribution(0);
        assert!((d[0] - (areas[0] + areas[1]) / areas.iter().sum::<f64>()).abs() < 1e-12);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let bad: Vec<CameraFrame<f64>> = frames.iter().map(|f| CameraFrame { image: Image8::filled(32, 32, &[9]), ..f.clone() }).collect();
        assert!(matches!(accumulate_votes(&mesh, &vis, &bad, &palette(2)), Err(SemanticError::UnknownClass { id: 9, .. })));
        let rgb: Vec<CameraFrame<f64>> = frames.iter().map(|f| CameraFrame { image: Image8::filled(32, 32, &[0, 0, 0]), ..f.clone() }).collect();
        assert!(matches!(accumulate_votes(&mesh, &vis, &rgb, &palette(2)), Err(SemanticError::NotALabelImage(3))));
    }

    #[test]
    fn report_lists_every_face() {
        let mut v = LabelVotes::new(2, 2);
        v.add(0, 1, 1.0).unwrap();
        let fused = fuse_labels(&v, &strip(2), 0.5).unwrap();
        let j = labels_json(&fused, &palette(2));
        assert_eq!(j["faces"].as_array().unwrap().len(), 2);
        assert_eq!(j["unobserved_faces"], 1);
    }
}
