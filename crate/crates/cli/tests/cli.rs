use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tirs(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tirs"))
        .args(args)
        .env("TIRS_OUT_DIR", root)
        .output()
        .expect("binary runs")
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn rollout_then_plot_under_default_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = tirs(dir.path(), &["rollout", arg(&scenarios().join("push_juice.json"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let log = dir.path().join("rollout/log.csv");
    let first = std::fs::read(&log).unwrap();
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 2001);

    // same seed, same bytes
    let again = dir.path().join("again");
    let out = tirs(dir.path(), &["rollout", arg(&scenarios().join("push_juice.json")), "--out", arg(&again)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(again.join("log.csv")).unwrap(), first);

    let out = tirs(dir.path(), &["plot", arg(&log)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["velocity.svg", "target_accel.svg"] {
        let svg = std::fs::read_to_string(dir.path().join("plots").join(f)).unwrap();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }
}

#[test]
fn gen_impact_map_writes_requested_grid() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("maps/grab.txt");
    let out = tirs(
        dir.path(),
        &["gen-impact-map", arg(&scenarios().join("grab_catfood.json")), "--samples", "9", "--out", arg(&file)],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let d = tirs_core::impact_map::parse_dataset(&std::fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!(d.len(), 9);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = tirs(dir.path(), &["rollout", arg(&dir.path().join("missing.json"))]);
    assert_eq!(out.status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"kind": "hit_and_push", "object": "juice", "init": "A", "duration_s": 0.5}"#).unwrap();
    assert_eq!(tirs(dir.path(), &["rollout", arg(&bad)]).status.code(), Some(1));

    std::fs::write(&bad, r#"{"kind": "hit_and_push", "seeds": []}"#).unwrap();
    assert_eq!(tirs(dir.path(), &["ablation", arg(&bad)]).status.code(), Some(1));

    std::fs::write(&bad, "step,t_s\n").unwrap();
    assert_eq!(tirs(dir.path(), &["plot", arg(&bad)]).status.code(), Some(1));

    // a dual-arm grid must be a perfect square
    let out = tirs(dir.path(), &["gen-impact-map", arg(&scenarios().join("grab_catfood.json")), "--samples", "10"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ablation_tables_and_check_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("m.json");
    std::fs::write(
        &matrix,
        r#"{"kind": "hit_and_push", "variants": ["no_rs", "proposed"], "objects": ["parcel"], "inits": ["C"], "displacements_m": [0.0], "seeds": [1, 2]}"#,
    )
    .unwrap();
    let out = tirs(dir.path(), &["ablation", arg(&matrix), "--jobs", "2", "--check"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(dir.path().join("ablation/rollouts.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 4);
    let overall = std::fs::read_to_string(dir.path().join("ablation/summary_overall.csv")).unwrap();
    assert!(overall.starts_with("variant,group_key,mean_max_target_accel,n,std\nno_rs,all,"));

    let out = tirs(dir.path(), &["plot", arg(&dir.path().join("ablation"))]);
    assert_eq!(out.status.code(), Some(0));
    let svg = std::fs::read_to_string(dir.path().join("plots/summary_object.svg")).unwrap();
    assert!(svg.contains(">proposed<"));

    // with one arm and a rigid plant both variants peak during the
    // detection delay, so they tie and the strict check fails
    std::fs::write(
        &matrix,
        r#"{"kind": "hit_and_push", "variants": ["no_interim", "proposed"], "objects": ["juice"], "inits": ["C"], "displacements_m": [0.0], "seeds": [1]}"#,
    )
    .unwrap();
    let out = tirs(dir.path(), &["ablation", arg(&matrix), "--check", "--out", arg(&dir.path().join("tie"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
