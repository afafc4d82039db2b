use super::*;
use crate::volume::{TruncationConfig, TsdfVolume};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
    Vec3::new(x, y, z)
}

fn sphere_volume(radius: f64, vs: f64, center: Vec3<f64>) -> TsdfVolume<f64> {
    let eps = 4.0 * vs;
    let pad = Vec3::splat(radius + eps + vs);
    TsdfVolume::from_sdf(
        vs,
        TruncationConfig::fixed(eps).unwrap(),
        Aabb { min: center - pad, max: center + pad },
        1.0,
        |p| (p - center).norm() - radius,
    )
    .unwrap()
}

#[test]
fn sphere_is_watertight_and_close() {
    let vs = 0.025;
    let r = 2.0;
    let c = v(0.013, -0.007, 0.02);
    let vol = sphere_volume(r, vs, c);
    let mesh = extract_mesh(&vol, 1.0).unwrap();
    assert!(mesh.face_count() > 10_000);
    // Hausdorff (mesh → sphere) over vertices
    let worst = mesh.vertices().iter().map(|&p| ((p - c).norm() - r).abs()).fold(0.0, f64::max);
    assert!(worst <= vs, "max deviation {worst}");
    // every edge shared by exactly two faces: closed 2-manifold
    let mut count: HashMap<(u32, u32), u32> = HashMap::new();
    for f in mesh.faces() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    assert!(count.values().all(|&n| n == 2), "open or non-manifold edges");
    // normals point outward (toward positive tsdf)
    for f in 0..mesh.face_count() {
        assert!(mesh.normals()[f].dot(mesh.centroid(f) - c) > 0.0);
    }
    // dense sampling of the sphere (sphere → mesh direction) is covered: surface area matches
    let area = mesh.surface_area();
    let expected = 4.0 * std::f64::consts::PI * r * r;
    assert!((area - expected).abs() / expected < 0.01, "area {area} vs {expected}");
}

#[test]
fn vertices_lie_on_zero_crossing() {
    let vs = 0.05;
    let vol = sphere_volume(0.7, vs, v(0.1, 0.2, -0.05));
    let mesh = extract_mesh(&vol, 1.0).unwrap();
    for &p in mesh.vertices() {
        let d = interpolate_tsdf(&vol, p).unwrap();
        assert!(d.abs() <= 1e-6 * vs, "tsdf {d} at vertex");
    }
}

#[test]
fn plane_band_normals_match_plane() {
    let vs = 0.05;
    let n = v(0.3, -0.2, 1.0).normalize();
    let vol = TsdfVolume::from_sdf(
        vs,
        TruncationConfig::fixed(0.2).unwrap(),
        Aabb { min: v(-1.0, -1.0, -1.0), max: v(1.0, 1.0, 1.0) },
        1.0,
        |p| p.dot(n) - 0.01,
    )
    .unwrap();
    let mesh = extract_mesh(&vol, 1.0).unwrap();
    assert!(!mesh.is_empty());
    let cos5 = 5f64.to_radians().cos();
    for nf in mesh.normals() {
        assert!(nf.dot(n) >= cos5, "normal {nf:?}");
    }
}

#[test]
fn empty_volume_errors() {
    let vol = TsdfVolume::<f64>::new(0.05, TruncationConfig::fixed(0.2).unwrap()).unwrap();
    assert_eq!(extract_mesh(&vol, 1.0), Err(MeshError::EmptyVolume));
}

#[test]
fn low_weight_cells_are_skipped() {
    let vol = TsdfVolume::from_sdf(
        0.05,
        TruncationConfig::fixed(0.2).unwrap(),
        Aabb { min: v(-0.5, -0.5, -0.5), max: v(0.5, 0.5, 0.5) },
        0.5,
        |p| p.z,
    )
    .unwrap();
    assert!(extract_mesh(&vol, 1.0).unwrap().is_empty());
    assert!(!extract_mesh(&vol, 0.5).unwrap().is_empty());
}

#[test]
fn extraction_is_deterministic() {
    let vol = sphere_volume(0.5, 0.05, v(0.0, 0.0, 0.0));
    let a = extract_mesh(&vol, 1.0).unwrap();
    let b = extract_mesh(&vol.clone(), 1.0).unwrap();
    assert_eq!(a.vertices().len(), b.vertices().len());
    for (x, y) in a.vertices().iter().zip(b.vertices()) {
        assert_eq!(x.to_array().map(f64::to_bits), y.to_array().map(f64::to_bits));
    }
    assert_eq!(a.faces(), b.faces());
}

#[test]
fn exact_zero_corners_do_not_duplicate_vertices() {
    // plane through voxel centers: many samples are exactly zero
    let vs = 0.0625;
    let vol = TsdfVolume::from_sdf(
        vs,
        TruncationConfig::fixed(0.25).unwrap(),
        Aabb { min: v(-0.5, -0.5, -0.5), max: v(0.5, 0.5, 0.5) },
        1.0,
        |p| p.z - 0.03125,
    )
    .unwrap();
    let mesh = extract_mesh(&vol, 1.0).unwrap();
    let mut seen = std::collections::HashSet::new();
    for p in mesh.vertices() {
        assert!(seen.insert(p.to_array().map(f64::to_bits)), "duplicate vertex {p:?}");
    }
}

#[test]
fn two_triangles_share_one_edge() {
    let m = TriangleMesh::new(
        vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(1.0, 1.0, 0.0)],
        vec![[0, 1, 2], [1, 3, 2]],
    )
    .unwrap();
    assert_eq!(build_adjacency(&m).edges, vec![(0, 1)]);
}

#[test]
fn tetrahedron_has_six_pairs() {
    let m = TriangleMesh::new(
        vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(0.0, 0.0, 1.0)],
        vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
    )
    .unwrap();
    let adj = build_adjacency(&m);
    assert_eq!(adj.len(), 6);
    assert!(adj.neighbours(4).iter().all(|n| n.len() == 3));
}

#[test]
fn index_out_of_range_rejected() {
    let err = TriangleMesh::new(vec![v(0.0, 0.0, 0.0)], vec![[0, 1, 2]]).unwrap_err();
    assert!(matches!(err, MeshError::IndexOutOfRange { face: 0, .. }));
}

#[test]
fn zero_area_faces_dropped() {
    let m = TriangleMesh::new(
        vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(2.0, 0.0, 0.0), v(0.0, 1.0, 0.0)],
        vec![[0, 1, 2], [0, 1, 3]],
    )
    .unwrap();
    assert_eq!(m.faces(), &[[0, 1, 3]]);
}

fn brute_force_adjacency(m: &TriangleMesh<f64>) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for i in 0..m.face_count() {
        for j in i + 1..m.face_count() {
            let shared = m.faces()[i].iter().filter(|v| m.faces()[j].contains(v)).count();
            if shared == 2 {
                out.push((i as u32, j as u32));
            }
        }
    }
    out
}

#[test]
fn adjacency_matches_brute_force_on_extracted_mesh() {
    let mesh = extract_mesh(&sphere_volume(0.3, 0.05, v(0.0, 0.0, 0.0)), 1.0).unwrap();
    let adj = build_adjacency(&mesh);
    assert_eq!(adj.edges, brute_force_adjacency(&mesh));
    assert!(adj.neighbours(mesh.face_count()).iter().all(|n| n.len() <= 3));
}

proptest! {
    #[test]
    fn adjacency_matches_brute_force(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nv = rng.random_range(4..12usize);
        let verts: Vec<_> = (0..nv).map(|_| v(rng.random(), rng.random(), rng.random())).collect();
        let faces: Vec<[u32; 3]> = (0..rng.random_range(1..30))
            .filter_map(|_| {
                let f = [rng.random_range(0..nv as u32), rng.random_range(0..nv as u32), rng.random_range(0..nv as u32)];
                (f[0] != f[1] && f[1] != f[2] && f[0] != f[2]).then_some(f)
            })
            .collect();
        let m = TriangleMesh::new(verts, faces).unwrap();
        prop_assert_eq!(build_adjacency(&m).edges, brute_force_adjacency(&m));
    }
}
