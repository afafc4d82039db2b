use atsdf::io::{read_mesh_ply, write_mesh_ply};
use atsdf::mesher::DEFAULT_ISO_WEIGHT_MIN;
use atsdf::synthbench::{simulate_scan, BeamPattern, OrbitProtocol, SceneSpec};
use atsdf::volume::{read_volume, write_volume};
use atsdf::{extract_mesh, Aabb, TruncationConfig, TsdfVolume, Vec3, Vec3d, Volume};

fn sphere_volume<T: atsdf::Real>(voxel: f64) -> TsdfVolume<T> {
    let c = |x: f64| T::from(x).unwrap();
    let bounds = Aabb { min: Vec3::splat(c(-1.5)), max: Vec3::splat(c(1.5)) };
    TsdfVolume::from_sdf(c(voxel), TruncationConfig::fixed(c(4.0 * voxel)).unwrap(), bounds, c(1.0), |p: Vec3<T>| p.norm() - c(1.0))
        .unwrap()
}

#[test]
fn sphere_surface_is_recovered_in_both_precisions() {
    let single = extract_mesh(&sphere_volume::<f32>(0.05), 1.0).unwrap();
    let double = extract_mesh(&sphere_volume::<f64>(0.05), 1.0).unwrap();
    assert_eq!(single.face_count(), double.face_count());
    for p in double.vertices() {
        assert!((p.norm() - 1.0).abs() < 0.01, "vertex {p:?}");
    }
    for p in single.vertices() {
        assert!((p.norm() - 1.0).abs() < 0.01);
    }
    let area = double.surface_area();
    assert!((area - 4.0 * std::f64::consts::PI).abs() < 0.05 * 4.0 * std::f64::consts::PI, "area {area}");
}

#[test]
fn volume_and_mesh_files_round_trip() {
    let volume = sphere_volume::<f64>(0.1);
    let mut bytes = Vec::new();
    write_volume(&volume, &mut bytes).unwrap();
    let back: Volume = read_volume(bytes.as_slice()).unwrap();
    assert_eq!(back.block_count(), volume.block_count());
    assert_eq!(back.voxel_size(), volume.voxel_size());

    // stored tsdf values are single precision, so meshes agree to float accuracy
    let a = extract_mesh(&volume, 1.0).unwrap();
    let b = extract_mesh(&back, 1.0).unwrap();
    assert_eq!(a.faces(), b.faces());
    for (p, q) in a.vertices().iter().zip(b.vertices()) {
        assert!(p.distance(*q) < 1e-6);
    }

    let mut ply = Vec::new();
    write_mesh_ply(&mut ply, &a, None).unwrap();
    let c = read_mesh_ply(ply.as_slice()).unwrap();
    assert_eq!(c.vertices(), a.vertices());
    assert_eq!(c.faces(), a.faces());
}

#[test]
fn scanned_ground_and_objects_are_reconstructed() {
    let scene = SceneSpec::benchmark();
    let pattern = BeamPattern::uniform(16, (-25f64).to_radians(), 15f64.to_radians(), 1f64.to_radians(), 0.0, 40.0).unwrap();
    let mut volume = Volume::new(0.1, TruncationConfig::new(0.2, 0.4, 16.0).unwrap()).unwrap();
    for (i, (_, pose)) in OrbitProtocol::default().sensor_poses().unwrap().iter().enumerate().step_by(8) {
        let pts: Vec<Vec3d> = simulate_scan(&scene, pose, &pattern, i as u64)
            .unwrap()
            .into_iter()
            .filter(|p| p.x.abs() < 6.0 && p.y.abs() < 6.0)
            .collect();
        volume.integrate_scan(&pts, pose.translation()).unwrap();
    }
    let mesh = extract_mesh(&volume, DEFAULT_ISO_WEIGHT_MIN).unwrap();
    assert!(mesh.face_count() > 1000);

    let sphere = Vec3d::new(-2.5, 0.0, 2.0);
    let distance = |p: Vec3d| {
        let q = [(p.x - 2.5).abs() - 2.0, p.y.abs() - 1.0, (p.z - 0.5).abs() - 0.5];
        let outside = q.iter().map(|x| x.max(0.0).powi(2)).sum::<f64>().sqrt();
        let boxd = outside + q[0].max(q[1]).max(q[2]).min(0.0);
        p.z.min(p.distance(sphere) - 2.0).min(boxd).abs()
    };
    let rms = (mesh.vertices().iter().map(|&p| distance(p).powi(2)).sum::<f64>() / mesh.vertices().len() as f64).sqrt();
    assert!(rms < 0.03, "rms {rms}");
}
