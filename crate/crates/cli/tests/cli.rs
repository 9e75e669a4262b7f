use std::fs;
use std::process::Command;

fn evostefan() -> Command {
    Command::new(env!("CARGO_BIN_EXE_evostefan"))
}

#[test]
fn lists_every_preset() {
    let out = evostefan().arg("list-presets").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["one_phase_sphere", "freezing_sphere", "contraction_pair", "expanding_sphere", "rough_data"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
}

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(
        &cfg,
        "name = \"s\"\nmesh = { kind = \"icosphere\", level = 2 }\ntime = { t_final = 0.1, steps = 4 }\n\
         regularization = { epsilon = 0.1 }\ndata = { u0 = \"-0.5 + z\" }\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = evostefan()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("conservation"));
    for f in ["ledger.csv", "reports.csv", "summary.txt", "u.stfield", "e.stfield", "manifest.toml"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn bad_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "name = \"b\"\nmesh = { kind = \"cube\" }\n").unwrap();
    let out = evostefan().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let out = evostefan().args(["run", "--preset", "no_such_preset"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_prints_a_rate_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = evostefan()
        .args(["sweep", "--preset", "one_phase_sphere", "--axis", "tau", "--values", "4,8,16", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("value,error_or_distance,rate"), "{text}");
    assert_eq!(text.lines().count(), 4);
    assert!(dir.path().join("sweep.csv").exists());
}
