use super::*;
use crate::camera::Intrinsics;
use crate::geometry::{RigidPose, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
    Vec3::new(x, y, z)
}

fn brute_force(mesh: &TriangleMesh<f64>, ray: &Ray<f64>) -> Vec<Hit<f64>> {
    (0..mesh.face_count())
        .filter_map(|f| intersect_triangle(ray, &mesh.triangle(f), 0.0, f64::INFINITY).map(|t| Hit { face: f as u32, t }))
        .collect()
}

fn tetrahedron() -> TriangleMesh<f64> {
    TriangleMesh::new(
        vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(0.0, 0.0, 1.0)],
        vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
    )
    .unwrap()
}

fn random_soup(n: usize, seed: u64) -> TriangleMesh<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for i in 0..n {
        let c = v(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        for _ in 0..3 {
            verts.push(c + v(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)));
        }
        faces.push([3 * i as u32, 3 * i as u32 + 1, 3 * i as u32 + 2]);
    }
    TriangleMesh::new(verts, faces).unwrap()
}

#[test]
fn single_face_single_leaf() {
    let mesh = TriangleMesh::new(vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 2.0, 0.5)], vec![[0, 1, 2]]).unwrap();
    let bvh = Bvh::build(&mesh);
    assert_eq!(bvh.node_count(), 1);
    let root = bvh.root_bounds().unwrap();
    let b = mesh.bounds();
    assert!((root.min - b.min).norm() < 1e-6 && (root.max - b.max).norm() < 1e-6);
    assert!(bvh.validate());
}

#[test]
fn ray_through_tetrahedron_hits_two_faces() {
    let mesh = tetrahedron();
    let bvh = Bvh::build(&mesh);
    let center = v(0.25, 0.25, 0.25);
    let ray = Ray::new(v(-1.0, 0.3, 0.2), center - v(-1.0, 0.3, 0.2));
    let hits = bvh.intersect_all(&ray, 0.0, f64::INFINITY);
    assert_eq!(hits.len(), 2);
    assert_eq!(hits, brute_force(&mesh, &ray));
}

#[test]
fn random_rays_match_linear_scan() {
    let mesh = random_soup(5000, 11);
    let bvh = Bvh::build(&mesh);
    assert!(bvh.validate());
    assert!(bvh.depth() <= MAX_DEPTH);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut total = 0;
    for _ in 0..10_000 {
        let o = v(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
        let target = v(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let ray = Ray::new(o, target - o);
        let got = bvh.intersect_all(&ray, 0.0, f64::INFINITY);
        let want = brute_force(&mesh, &ray);
        assert_eq!(got, want);
        total += got.len();
        let closest = want.iter().min_by(|a, b| a.t.partial_cmp(&b.t).unwrap().then(a.face.cmp(&b.face))).copied();
        assert_eq!(bvh.closest_hit(&ray, 0.0, f64::INFINITY), closest);
    }
    assert!(total > 1000);
}

#[test]
fn axis_parallel_rays_match_linear_scan() {
    let mesh = random_soup(500, 13);
    let bvh = Bvh::build(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..2000 {
        let o = v(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), -20.0);
        let ray = Ray::new(o, v(0.0, 0.0, 1.0));
        assert_eq!(bvh.intersect_all(&ray, 0.0, f64::INFINITY), brute_force(&mesh, &ray));
    }
}

fn camera_at(eye: Vec3<f64>, target: Vec3<f64>) -> PinholeCamera<f64> {
    PinholeCamera::new(
        Intrinsics { fx: 200.0, fy: 200.0, cx: 100.0, cy: 100.0 },
        RigidPose::look_at(eye, target, v(0.0, 1.0, 0.0)).unwrap(),
        200,
        200,
    )
    .unwrap()
}

fn quad(z: f64, size: f64, base: u32) -> (Vec<Vec3<f64>>, Vec<[u32; 3]>) {
    (
        vec![v(-size, -size, z), v(size, -size, z), v(size, size, z), v(-size, size, z)],
        vec![[base, base + 1, base + 2], [base, base + 2, base + 3]],
    )
}

#[test]
fn head_on_face_is_visible_with_unit_cosine() {
    let mesh = TriangleMesh::new(vec![v(-1.0, -1.0, 0.0), v(1.0, -1.0, 0.0), v(0.0, 1.0, 0.0)], vec![[0, 1, 2]]).unwrap();
    let bvh = Bvh::build(&mesh);
    let centroid = mesh.centroid(0);
    let cam = camera_at(centroid + v(0.0, 0.0, 5.0), centroid);
    let table = compute_visibility(&mesh, &bvh, &[cam], &VisibilityConfig::default());
    assert_eq!(table.faces[0].len(), 1);
    assert!((table.faces[0][0].cos - 1.0).abs() < 1e-12);
    // from behind: back-facing
    let back = camera_at(centroid - v(0.0, 0.0, 5.0), centroid);
    let table = compute_visibility(&mesh, &bvh, &[back], &VisibilityConfig::default());
    assert!(table.faces[0].is_empty());
}

#[test]
fn occluded_face_is_not_visible() {
    let (mut verts, mut faces) = quad(0.0, 0.5, 0);
    let (v2, f2) = quad(1.0, 1.0, 4);
    verts.extend(v2);
    faces.extend(f2);
    let mesh = TriangleMesh::new(verts, faces).unwrap();
    let bvh = Bvh::build(&mesh);
    let cam = camera_at(v(0.0, 0.0, 5.0), v(0.0, 0.0, 0.0));
    let table = compute_visibility(&mesh, &bvh, &[cam], &VisibilityConfig::default());
    assert!(table.faces[0].is_empty() && table.faces[1].is_empty());
    assert_eq!(table.faces[2].len(), 1);
    assert_eq!(table.faces[3].len(), 1);
    // deleting the occluder never hides anything
    let without = mesh.retain_faces(|f| f < 2);
    let t2 = compute_visibility(&without, &Bvh::build(&without), &[camera_at(v(0.0, 0.0, 5.0), v(0.0, 0.0, 0.0))], &VisibilityConfig::default());
    assert_eq!(t2.faces[0].len(), 1);
}

#[test]
fn deleting_faces_is_monotone_and_deterministic() {
    let mesh = random_soup(400, 21);
    let cams: Vec<_> = (0..4)
        .map(|i| {
            let a = i as f64 * std::f64::consts::FRAC_PI_2;
            camera_at(v(12.0 * a.cos(), 1.0, 12.0 * a.sin()), v(0.0, 0.0, 0.0))
        })
        .collect();
    let cfg = VisibilityConfig::default();
    let full = compute_visibility(&mesh, &Bvh::build(&mesh), &cams, &cfg);
    assert_eq!(full, compute_visibility(&mesh, &Bvh::build(&mesh), &cams, &cfg));
    assert!(full.visible_pairs() > 0);
    let keep = |f: usize| f % 3 != 0;
    let reduced = mesh.retain_faces(keep);
    let part = compute_visibility(&reduced, &Bvh::build(&reduced), &cams, &cfg);
    let kept: Vec<usize> = (0..mesh.face_count()).filter(|&f| keep(f)).collect();
    for (new_f, &old_f) in kept.iter().enumerate() {
        for view in &full.faces[old_f] {
            assert!(part.is_visible(new_f, view.frame));
        }
    }
}

#[test]
fn csv_dump_has_header_and_rows() {
    let mesh = TriangleMesh::new(vec![v(-1.0, -1.0, 0.0), v(1.0, -1.0, 0.0), v(0.0, 1.0, 0.0)], vec![[0, 1, 2]]).unwrap();
    let bvh = Bvh::build(&mesh);
    let cam = camera_at(v(0.0, 0.0, 5.0), v(0.0, 0.0, 0.0));
    let table = compute_visibility(&mesh, &bvh, &[cam], &VisibilityConfig::default());
    let mut out = Vec::new();
    table.write_csv(&mut out, &[42]).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "face_id,frame_id,area_px2,cos");
    assert!(lines[1].starts_with("0,42,"));
}

#[test]
fn csv_round_trip_is_exact() {
    let soup = random_soup(300, 3);
    let bvh = Bvh::build(&soup);
    let cams = [camera_at(v(0.0, 0.0, 30.0), v(0.0, 0.0, 0.0)), camera_at(v(25.0, 5.0, 10.0), v(0.0, 0.0, 0.0))];
    let table = compute_visibility(&soup, &bvh, &cams, &VisibilityConfig::default());
    assert!(table.visible_pairs() > 0);
    let mut out = Vec::new();
    table.write_csv(&mut out, &[7, 3]).unwrap();
    let back = VisibilityTable::<f64>::read_csv(&out[..], soup.face_count(), &[7, 3]).unwrap();
    assert_eq!(back, table);
    assert!(VisibilityTable::<f64>::read_csv(&out[..], soup.face_count(), &[7]).is_err());
    assert!(VisibilityTable::<f64>::read_csv(&b"face,frame\n"[..], 1, &[0]).is_err());
}
