use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], config: Option<(&Path, &str)>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wgflow"));
    cmd.args(args);
    if let Some((path, text)) = config {
        std::fs::write(path, text).unwrap();
        cmd.arg(path);
    }
    cmd.env_remove("WGFLOW_THREADS").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn schema_errors_exit_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let o = run(&["step", "--out", out], Some((&cfg, "[jko]\ntau = 0.0\n")));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("jko.tau"), "{}", stderr(&o));

    let o = run(&["step", "--out", out], Some((&cfg, "[sde]\npathz = 3\n")));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sde.pathz"), "{}", stderr(&o));

    let o = run(&["dirichlet", "--out", out], Some((&cfg, "[dirichlet]\nu = \"sin\"\n")));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dirichlet.u"), "{}", stderr(&o));

    let o = run(&["dirichlet", "--out", out, "--tol-scale=0"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--tol-scale"));
}

#[test]
fn fokker_planck_refuses_a_kinked_potential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let out = dir.path().join("out");
    let o = run(
        &["fp", "--out", out.to_str().unwrap()],
        Some((&cfg, "[potential]\nkind = \"abs\"\na = 1.0\n")),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("potential"));
}

#[test]
fn failing_check_exits_1_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let out = dir.path().join("out");
    let o = run(
        &["dirichlet", "--out", out.to_str().unwrap()],
        Some((&cfg, "[dirichlet]\nsharpness_min = 0.99999\n")),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dirichlet.sharpness"));
    // the manifest is still written and records the failure
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["passed"], false);
}

#[test]
fn manifests_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&["dirichlet", "--seed", "7", "--out", out.to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let ma = std::fs::read(a.join("manifest.json")).unwrap();
    let mb = std::fs::read(b.join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
    let m: serde_json::Value = serde_json::from_slice(&ma).unwrap();
    assert_eq!(m["seed"], 7);
    for art in m["artifacts"].as_array().unwrap() {
        assert!(a.join(art.as_str().unwrap()).exists());
    }
}

#[test]
fn a_short_flow_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let out = dir.path().join("out");
    let text = "[grid]\nn = 100\n[jko]\ntau = 0.01\nmass_cells = 100\n[flow]\nt_end = 0.2\noutput_times = [0.1, 0.2]\nprobes = 4\n";
    let o = run(&["flow", "--out", out.to_str().unwrap()], Some((&cfg, text)));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,entropy,w2_increment,evi_max_residual\n"));
    assert_eq!(csv.lines().count(), 1 + 21);
    assert!(out.join("measure_t0.2.json").exists());
}

#[test]
fn unused_stability_defaults_do_not_reject_other_potentials() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let out = dir.path().join("out");
    let text = "[potential]\nkind = \"quartic\"\na = 1.0\nb = 1.0\n[grid]\nn = 100\n[jko]\ntau = 0.02\nmass_cells = 100\n[flow]\nt_end = 0.1\noutput_times = [0.1]\nprobes = 2\n";
    let o = run(&["flow", "--out", out.to_str().unwrap()], Some((&cfg, text)));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = run(&["stability", "--out", out.to_str().unwrap()], Some((&cfg, text)));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stability.base"), "{}", stderr(&o));
}
