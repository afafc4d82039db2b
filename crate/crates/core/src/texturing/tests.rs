use super::*;
use crate::camera::{Image8, Intrinsics, PinholeCamera};
use crate::geometry::{RigidPose, Vec3};
use crate::mesher::build_adjacency;
use crate::visibility::{compute_visibility, Bvh, VisibilityConfig};

fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
    Vec3::new(x, y, z)
}

fn camera_at(eye: Vec3<f64>, target: Vec3<f64>, size: usize) -> PinholeCamera<f64> {
    let f = size as f64;
    PinholeCamera::new(
        Intrinsics { fx: f, fy: f, cx: f / 2.0, cy: f / 2.0 },
        RigidPose::look_at(eye, target, v(0.0, 1.0, 0.0)).unwrap(),
        size,
        size,
    )
    .unwrap()
}

fn frame(camera: PinholeCamera<f64>, image: Image8, id: u32) -> CameraFrame<f64> {
    CameraFrame { camera, image, frame_id: id }
}

fn checkerboard(size: usize, cell: usize) -> Image8 {
    let mut img = Image8::new(size, size, 3);
    for y in 0..size {
        for x in 0..size {
            let on = ((x / cell) + (y / cell)) % 2 == 0;
            img.pixel_mut(x, y).copy_from_slice(if on { &[230, 230, 230] } else { &[20, 20, 20] });
        }
    }
    img
}

/// Single triangle in the z = 0 plane facing +z.
fn single_face() -> TriangleMesh<f64> {
    TriangleMesh::new(vec![v(-0.5, -0.5, 0.0), v(0.5, -0.5, 0.0), v(0.0, 0.5, 0.0)], vec![[0, 1, 2]]).unwrap()
}

/// Unit quad in z = 0 split along its diagonal, facing +z.
fn quad() -> TriangleMesh<f64> {
    TriangleMesh::new(
        vec![v(-0.5, -0.5, 0.0), v(0.5, -0.5, 0.0), v(0.5, 0.5, 0.0), v(-0.5, 0.5, 0.0)],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .unwrap()
}

fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut num = 0.0;
    let (mut da, mut db) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        da += (x - ma).powi(2);
        db += (y - mb).powi(2);
    }
    num / (da * db).sqrt()
}

#[test]
fn one_face_one_frame() {
    let q = vec![vec![(3, 12.0)]];
    let a = select_views_from_quality(&q, &FaceAdjacency::default(), 10.0).unwrap();
    assert_eq!(a.faces, vec![Some(3)]);
}

#[test]
fn sharp_frame_beats_uniform_frame() {
    let mesh = single_face();
    let cam = camera_at(v(0.0, 0.0, 3.0), v(0.0, 0.0, 0.0), 64);
    let frames = vec![frame(cam.clone(), Image8::filled(64, 64, &[128, 128, 128]), 0), frame(cam, checkerboard(64, 4), 1)];
    let q = face_qualities(&mesh, &[vec![0, 1]], &frames);
    assert_eq!(q[0][0].1, 0.0);
    assert!(q[0][1].1 > 0.0);
    let a = select_views(&mesh, &FaceAdjacency::default(), &[vec![0, 1]], &frames, 0.0).unwrap();
    assert_eq!(a.faces, vec![Some(1)]);
}

fn strip_oracle(q: &[Vec<(u32, f64)>], lambda: f64) -> (f64, Vec<u32>) {
    let n = q.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0..(1u32 << n) {
        let labels: Vec<u32> = (0..n).map(|i| (mask >> i) & 1).collect();
        let mut e = 0.0;
        for i in 0..n {
            e -= q[i].iter().find(|c| c.0 == labels[i]).unwrap().1;
            if i + 1 < n && labels[i] != labels[i + 1] {
                e += lambda;
            }
        }
        if e < best.0 {
            best = (e, labels);
        }
    }
    best
}

#[test]
fn strip_with_strong_smoothness_matches_enumeration() {
    let q = vec![
        vec![(0, 5.0), (1, 1.0)],
        vec![(0, 2.0), (1, 6.0)],
        vec![(0, 3.0), (1, 4.0)],
        vec![(0, 1.0), (1, 7.0)],
    ];
    let adj = FaceAdjacency { edges: vec![(0, 1), (1, 2), (2, 3)] };
    let lambda = 100.0;
    let a = select_views_from_quality(&q, &adj, lambda).unwrap();
    let (_, want) = strip_oracle(&q, lambda);
    assert_eq!(a.faces, want.iter().map(|&l| Some(l)).collect::<Vec<_>>());
    // sums: frame 0 -> 11, frame 1 -> 18
    assert!(a.faces.iter().all(|&f| f == Some(1)));
}

#[test]
fn zero_smoothness_is_per_face_argmax() {
    let q = vec![vec![(0, 5.0), (1, 1.0)], vec![(0, 2.0), (1, 6.0)], vec![(2, 3.0), (4, 3.0)]];
    let adj = FaceAdjacency { edges: vec![(0, 1), (1, 2)] };
    let a = select_views_from_quality(&q, &adj, 0.0).unwrap();
    assert_eq!(a.faces, vec![Some(0), Some(1), Some(2)]);
}

#[test]
fn larger_smoothness_never_adds_seams() {
    for seed in 0..20u64 {
        let q: Vec<Vec<(u32, f64)>> = (0..8)
            .map(|i| {
                let h = (seed * 31 + i * 17) % 23;
                vec![(0, h as f64), (1, ((h * 7) % 19) as f64)]
            })
            .collect();
        let mut prev_cuts = usize::MAX;
        let mut prev_distinct = usize::MAX;
        for &lambda in &[0.0, 1.0, 3.0, 10.0, 100.0] {
            let (_, labels) = strip_oracle(&q, lambda);
            let cuts = labels.windows(2).filter(|w| w[0] != w[1]).count();
            let mut d = labels.clone();
            d.sort_unstable();
            d.dedup();
            assert!(cuts <= prev_cuts);
            assert!(d.len() <= prev_distinct);
            prev_cuts = cuts;
            prev_distinct = d.len();

            let adj = FaceAdjacency { edges: (0..7).map(|i| (i, i + 1)).collect() };
            let a = select_views_from_quality(&q, &adj, lambda).unwrap();
            let got: Vec<u32> = a.faces.iter().map(|f| f.unwrap()).collect();
            let (want_e, _) = strip_oracle(&q, lambda);
            let e: f64 = (0..8).map(|i| -q[i][got[i] as usize].1).sum::<f64>()
                + lambda * got.windows(2).filter(|w| w[0] != w[1]).count() as f64;
            assert!((e - want_e).abs() < 1e-9, "seed {seed} lambda {lambda}");
        }
    }
}

#[test]
fn faces_without_candidates_are_none() {
    let q = vec![vec![(0, 1.0)], vec![], vec![(0, 2.0)]];
    let adj = FaceAdjacency { edges: vec![(0, 1), (1, 2)] };
    let a = select_views_from_quality(&q, &adj, 1.0).unwrap();
    assert_eq!(a.faces, vec![Some(0), None, Some(0)]);
    assert_eq!(a.none_faces(), vec![1]);
}

fn bake_single(mesh: &TriangleMesh<f64>, frames: &[CameraFrame<f64>], assignment: FaceViewAssignment) -> TextureAtlas {
    let adj = build_adjacency(mesh);
    let lev = seam_level(mesh, &adj, &assignment, frames, DEFAULT_LAMBDA_SEAM).unwrap();
    bake_atlas(mesh, frames, &lev, &AtlasConfig::default()).unwrap()
}

#[test]
fn constant_frame_bakes_constant_chart() {
    let mesh = single_face();
    let frames = vec![frame(camera_at(v(0.0, 0.0, 3.0), v(0.0, 0.0, 0.0), 64), Image8::filled(64, 64, &[40, 90, 200]), 0)];
    let atlas = bake_single(&mesh, &frames, FaceViewAssignment { faces: vec![Some(0)] });
    assert_eq!(atlas.pages.len(), 1);
    assert!(atlas.none_faces.is_empty());
    for px in atlas.pages[0].data().chunks(3) {
        assert!((px[0] as i32 - 40).abs() <= 1 && (px[1] as i32 - 90).abs() <= 1 && (px[2] as i32 - 200).abs() <= 1);
    }
    for uv in atlas.face_uvs[0] {
        assert!((0.0..=1.0).contains(&uv[0]) && (0.0..=1.0).contains(&uv[1]));
    }
}

#[test]
fn checkerboard_is_reproduced() {
    let mesh = quad();
    let cam = camera_at(v(0.0, 0.0, 2.0), v(0.0, 0.0, 0.0), 128);
    let src = checkerboard(128, 6);
    let frames = vec![frame(cam.clone(), src.clone(), 0)];
    let atlas = bake_single(&mesh, &frames, FaceViewAssignment { faces: vec![Some(0), Some(0)] });
    assert_eq!(atlas.rects.len(), 1);
    let r = atlas.rects[0];
    let page = &atlas.pages[0];
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for ty in 0..r.height {
        for tx in 0..r.width {
            let (sx, sy) = (r.source_x + tx as i64, r.source_y + ty as i64);
            if sx < 0 || sy < 0 || sx >= 128 || sy >= 128 {
                continue;
            }
            a.push(page.get(r.x + tx, r.y + ty, 0) as f64);
            b.push(src.get(sx as usize, sy as usize, 0) as f64);
        }
    }
    assert!(a.len() > 1000);
    assert!(ncc(&a, &b) >= 0.99);
    // the uv of a corner maps back to its projected pixel
    let p = cam.project(mesh.vertices()[0]).unwrap();
    let uv = atlas.face_uvs[0][0];
    let tx = uv[0] * page.width() as f64 - r.x as f64 + r.source_x as f64;
    let ty = (1.0 - uv[1]) * page.height() as f64 - r.y as f64 + r.source_y as f64;
    assert!((tx - p.0).abs() < 1e-9 && (ty - p.1).abs() < 1e-9);
}

#[test]
fn all_none_gives_empty_atlas() {
    let mesh = quad();
    let frames = vec![frame(camera_at(v(0.0, 0.0, 2.0), v(0.0, 0.0, 0.0), 32), Image8::filled(32, 32, &[1, 2, 3]), 0)];
    let atlas = bake_single(&mesh, &frames, FaceViewAssignment { faces: vec![None, None] });
    assert!(atlas.pages.is_empty());
    assert_eq!(atlas.none_faces, vec![0, 1]);
    let mut obj = Vec::new();
    write_obj(&mut obj, &mesh, &atlas, "m.mtl").unwrap();
    let text = String::from_utf8(obj).unwrap();
    assert!(text.contains("usemtl untextured"));
    assert!(!text.contains("atlas_0"));
}

#[test]
fn seam_between_two_frames_is_leveled() {
    let mesh = quad();
    let cam = camera_at(v(0.0, 0.0, 2.0), v(0.0, 0.0, 0.0), 64);
    let frames = vec![
        frame(cam.clone(), Image8::filled(64, 64, &[100, 100, 100]), 0),
        frame(cam, Image8::filled(64, 64, &[120, 120, 120]), 1),
    ];
    let assignment = FaceViewAssignment { faces: vec![Some(0), Some(1)] };
    let adj = build_adjacency(&mesh);
    let lev = seam_level(&mesh, &adj, &assignment, &frames, 1e-9).unwrap();
    assert_eq!(lev.charts.len(), 2);
    // the diagonal 0-2 is the seam
    assert_eq!(lev.system.seam_terms.len(), 2);
    assert!(lev.solution.residual <= 1e-8);
    for vtx in [0u32, 2] {
        let d = lev.correction(vtx, 0)[0] - lev.correction(vtx, 1)[0];
        assert!((d - 20.0).abs() < 1e-6, "difference {d}");
    }
    let zero = vec![[0.0; 3]; lev.system.instance_count];
    assert!(lev.system.objective(&lev.solution.corrections) < lev.system.objective(&zero));
    let atlas = bake_atlas(&mesh, &frames, &lev, &AtlasConfig::default()).unwrap();
    assert_eq!(atlas.rects.len(), 2);
}

#[test]
fn occluded_green_view_is_filtered_and_face_stays_red() {
    let mesh = single_face();
    let bvh = Bvh::build(&mesh);
    let red = [200u8, 30, 30];
    let frames: Vec<CameraFrame<f64>> = (0..10)
        .map(|i| {
            let a = i as f64 * 0.08 - 0.36;
            let cam = camera_at(v(3.0 * a.sin(), 0.2, 3.0 * a.cos()), v(0.0, 0.0, 0.0), 64);
            let color = if i == 6 { [30u8, 200, 30] } else { red };
            frame(cam, Image8::filled(64, 64, &color), i)
        })
        .collect();
    let cams: Vec<_> = frames.iter().map(|f| f.camera.clone()).collect();
    let vis = compute_visibility(&mesh, &bvh, &cams, &VisibilityConfig::default());
    assert_eq!(vis.views(0).len(), 10);
    let adj = build_adjacency(&mesh);
    let out = texture_mesh(&mesh, &adj, &vis, &frames, &TexturingConfig::default()).unwrap();
    assert_eq!(out.candidates[0].len(), 9);
    assert!(!out.candidates[0].contains(&6));
    assert_eq!(out.rejected_views, 1);
    let chosen = out.assignment.faces[0].unwrap();
    assert_ne!(chosen, 6);
    let page = &out.atlas.pages[0];
    let r = out.atlas.rects[0];
    let px = page.pixel(r.x + r.width / 2, r.y + r.height / 2);
    for c in 0..3 {
        assert!((px[c] as i32 - red[c] as i32).abs() <= 2);
    }
    let json = face_views_json(&out, &frames);
    assert_eq!(json["faces"][0]["frame_id"], serde_json::json!(chosen));
}

#[test]
fn correct_frames_keeps_ids_and_cameras() {
    let cam = camera_at(v(0.0, 0.0, 2.0), v(0.0, 0.0, 0.0), 16);
    let frames = vec![frame(cam, Image8::filled(16, 16, &[100, 100, 100]), 7)];
    let out = correct_frames(&frames, &VignettingModel::default()).unwrap();
    assert_eq!(out[0].frame_id, 7);
    assert_eq!(out[0].camera, frames[0].camera);
    assert!(out[0].image.get(0, 0, 0) < 100);
}

#[test]
fn mtl_lists_pages_and_fallback() {
    let mesh = single_face();
    let frames = vec![frame(camera_at(v(0.0, 0.0, 3.0), v(0.0, 0.0, 0.0), 32), Image8::filled(32, 32, &[9, 9, 9]), 0)];
    let atlas = bake_single(&mesh, &frames, FaceViewAssignment { faces: vec![Some(0)] });
    let mut mtl = Vec::new();
    write_mtl(&mut mtl, &atlas, "scene").unwrap();
    let text = String::from_utf8(mtl).unwrap();
    assert!(text.contains("map_Kd scene_atlas_0.png"));
    assert!(text.contains("newmtl untextured"));
}
