use std::path::{Path, PathBuf};
use std::process::Command;

use atsdf_pipeline::{run, ErrorReport, PipelineConfig, PipelineError, Preset, StageToggles};

fn tiny(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::preset(Preset::ObjectBenchmark);
    cfg.output_dir = out.to_path_buf();
    cfg.volume.voxel_size = 0.1;
    cfg.volume.eps_min = 0.2;
    cfg.volume.eps_max = 0.4;
    cfg.simulate.beams = 16;
    cfg.simulate.azimuth_step_deg = 1.0;
    cfg.simulate.scan_stride = 4;
    cfg.simulate.cameras.count = 4;
    cfg.simulate.cameras.width = 96;
    cfg.simulate.cameras.height = 72;
    cfg.simulate.cameras.focal = 72.0;
    cfg
}

fn listing(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn read_report(dir: &Path) -> ErrorReport {
    serde_json::from_str(&std::fs::read_to_string(dir.join("error.json")).unwrap()).unwrap()
}

#[test]
fn reconstruct_stages_write_volume_mesh_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.stages = StageToggles { simulate: true, reconstruct: true, mesh: true, ..StageToggles::none() };
    let summary = run(&cfg).unwrap();
    assert_eq!(summary.stages, ["simulate", "reconstruct", "mesh"]);

    let files = listing(tmp.path());
    for name in ["volume.atsf", "mesh.ply", "metrics/reconstruct.json", "metrics/mesh.json", "sim/trajectory.txt"] {
        assert!(files.contains(&PathBuf::from(name)), "missing {name}");
    }
    assert!(!files.iter().any(|f| f.to_string_lossy().ends_with(".partial")));
    assert!(!files.contains(&PathBuf::from("textured.obj")));

    let mesh: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("metrics/mesh.json")).unwrap()).unwrap();
    assert!(mesh["faces"].as_u64().unwrap() > 1000);
}

#[test]
fn invalid_truncation_fails_before_any_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.volume.eps_min = 0.5;
    let err = run(&cfg).unwrap_err();
    assert!(matches!(err, PipelineError::Config(_)));
    assert_eq!(err.exit_code(), 2);
    assert_eq!(listing(tmp.path()), [PathBuf::from("error.json")]);
    let report = read_report(tmp.path());
    assert_eq!(report.kind, "config");
    assert_eq!(report.stage, None);
}

#[test]
fn stage_failure_names_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.texturing.atlas.page_size = 16;
    cfg.texturing.atlas.max_pages = 1;
    let err = run(&cfg).unwrap_err();
    assert_eq!(err.stage(), Some("texture"));
    assert_eq!(err.exit_code(), 1);
    let report = read_report(tmp.path());
    assert_eq!(report.stage.as_deref(), Some("texture"));
    // earlier stages completed and their artifacts stay in place
    assert!(tmp.path().join("visibility.csv").exists());
    assert!(!tmp.path().join("textured.obj").exists());
}

#[test]
fn resuming_from_intermediates_matches_a_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    run(&tiny(&full)).unwrap();

    let resumed = tmp.path().join("resumed");
    let mut first = tiny(&resumed);
    first.stages = StageToggles { simulate: true, reconstruct: true, mesh: true, visibility: true, ..StageToggles::none() };
    run(&first).unwrap();
    let mut second = tiny(&resumed);
    second.stages = StageToggles { texture: true, semantic: true, evaluate: true, ..StageToggles::none() };
    run(&second).unwrap();

    let names = listing(&full);
    assert_eq!(names, listing(&resumed));
    for name in names.iter().filter(|n| !n.starts_with("metrics")) {
        assert!(std::fs::read(full.join(name)).unwrap() == std::fs::read(resumed.join(name)).unwrap(), "{} differs", name.display());
    }
}

#[test]
fn cli_reports_bad_environment_override_as_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_atsdf"))
        .args(["--preset", "object-benchmark", "--output-dir"])
        .arg(tmp.path())
        .arg("reconstruct")
        .env("ATSDF_VOLUME__EPS_MIN", "0.9")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let report: ErrorReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.kind, "config");
    assert_eq!(read_report(tmp.path()), report);
}

#[test]
fn cli_flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("run.toml");
    std::fs::write(&file, "seed = 3\n[volume]\nvoxel_size = 0.1\neps_min = 0.2\neps_max = 0.4\n[simulate]\nbeams = 8\nazimuth_step_deg = 2.0\nscan_stride = 8\n")
        .unwrap();
    let out_dir = tmp.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_atsdf"))
        .args(["--preset", "object-benchmark", "--seed", "9", "--config"])
        .arg(&file)
        .arg("--output-dir")
        .arg(&out_dir)
        .arg("reconstruct")
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_dir.join("mesh.ply").exists());
    let sim: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("metrics/simulate.json")).unwrap()).unwrap();
    assert_eq!(sim["beams"], 8);
}
