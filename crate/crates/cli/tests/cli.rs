use std::path::Path;
use std::process::{Command, Output};

fn loco(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loco")).args(args).current_dir(dir).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn scene_list_names_every_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let out = loco(&["scene", "list"], dir.path());
    assert!(out.status.success());
    let names = text(&out.stdout);
    for n in ["single-tet-on-plane", "bar-hop", "caterpillar-lite", "basket-push"] {
        assert!(names.lines().any(|l| l == n), "{names}");
    }
}

#[test]
fn missing_config_exits_with_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = loco(&["simulate", "--config", "nowhere/scene.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("nowhere/scene.json"));
}

#[test]
fn missing_mesh_exits_with_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = loco(&["scene", "dump", "single-tet-on-plane", "--out", "scene.json"], dir.path());
    assert!(out.status.success());
    let json = std::fs::read_to_string(dir.path().join("scene.json")).unwrap();
    let start = json.find("\"mesh\"").unwrap();
    let end = start + json[start..].find('}').unwrap() + 1;
    let edited = format!("{}\"mesh\": {{ \"kind\": \"file\", \"path\": \"gone.mesh\" }}{}", &json[..start], &json[end..]);
    std::fs::write(dir.path().join("scene.json"), edited).unwrap();
    let out = loco(&["simulate", "--config", "scene.json", "--frames", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("gone.mesh"));
}

#[test]
fn unknown_builtin_and_bad_schema_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(loco(&["solve", "--config", "builtin:nope"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.json"), "{\"schema\": 1, \"name\": 3}").unwrap();
    let out = loco(&["solve", "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("bad.json"));
}

#[test]
fn solve_simulate_and_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = loco(&["solve", "--config", "builtin:single-tet-on-plane", "--frames", "3", "--out", "run"], d);
    assert!(out.status.success(), "{}", text(&out.stderr));
    for f in ["positions.csv", "velocities.csv", "activations.csv", "reports.csv", "convergence.csv", "scenario.json"] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }
    let out = loco(
        &["simulate", "--config", "run/scenario.json", "--activations", "run/activations.csv", "--out", "replay"],
        d,
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let a = std::fs::read_to_string(d.join("run/positions.csv")).unwrap();
    let b = std::fs::read_to_string(d.join("replay/positions.csv")).unwrap();
    assert_eq!(a, b);
    let out = loco(&["export", "--config", "run/scenario.json", "--trajectory", "run", "--out", "obj"], d);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(std::fs::read_dir(d.join("obj")).unwrap().count(), 4);
}

#[test]
fn check_derivatives_reports_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = loco(&["check-derivatives", "--config", "builtin:single-tet-on-plane", "--mode", "both"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let report = text(&out.stdout);
    assert_eq!(report.matches("PASS").count(), 3, "{report}");
    assert!(!report.contains("FAIL"));
}
