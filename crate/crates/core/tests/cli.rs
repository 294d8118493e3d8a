use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[lattice]
a = 250e-9
r_over_a = 0.34
n_eff = 2.8
rows_per_side = 3
resolution = 32

[solver]
cutoff = 3
n_bands = 6
k_list = [0.35, 0.4]
k_mode = 0.4
h_eff = 0.56

[dipole]
site = "c_point"
orientation = "sigma_plus"
d0_debye = 30.0
gamma0 = { kind = "fraction_of_hom", value = 0.1 }

[scattering]
points = 801
half_span_linewidths = 20.0

[quantum]
spin = [1.0, 0.0, 1.0, 0.0]
detuning_rads = 0.0
input = "forward"

[output]
dir = "unused"
"#;

fn run(dir: &Path, stage: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    if !cfg.exists() {
        fs::write(&cfg, SMALL).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_chiralpcw"))
        .arg(stage)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_all(dir: &Path) {
    for stage in ["bands", "mode", "polmap", "singularities", "emission", "spectrum", "qstate"] {
        let out = ok(&run(dir, stage, &[]));
        assert!(out.starts_with(stage), "{out}");
        assert_eq!(out.lines().count(), 1);
    }
}

/// File contents with the `#` metadata line of CSV outputs removed.
fn stable(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("# chiralpcw"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn pipeline_runs_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all(a.path());
    run_all(b.path());
    let mut names: Vec<_> = fs::read_dir(a.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 13, "{names:?}");
    for n in &names {
        let pa = a.path().join("out").join(n);
        let pb = b.path().join("out").join(n);
        assert_eq!(stable(&pa), stable(&pb), "{n:?} differs");
    }

    let out = a.path().join("out");
    let c_points = fs::read_to_string(out.join("c_points.csv")).unwrap();
    let hands: Vec<i32> = c_points
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(hands.len() >= 2);
    assert!(hands.contains(&1) && hands.contains(&-1));

    let emission: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("emission.json")).unwrap()).unwrap();
    assert_eq!(emission["config"]["dipole"]["d0_debye"], 30.0);
    let checks = emission["identities"]["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["pass"] == true));
    let gf = emission["rates"]["gamma_f"].as_f64().unwrap();
    let gb = emission["rates"]["gamma_b"].as_f64().unwrap();
    assert!(gb < 1e-6 * gf);

    let header = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert_eq!(
        header.lines().nth(1).unwrap(),
        "omega_rads,detuning_rads,re_t,im_t,abs_t2,phase_t,re_r,im_r,abs_r2"
    );
    let q: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("qstate.json")).unwrap()).unwrap();
    let conc = q["emission"]["state"]["concurrence"].as_f64().unwrap();
    assert!((conc - 1.0).abs() < 1e-9);
    assert!(q["config"]["quantum"].is_object());
}

#[test]
fn decoupled_dipole_gives_flat_spectrum() {
    let d = tempfile::tempdir().unwrap();
    ok(&run(d.path(), "mode", &[]));
    let o = run(
        d.path(),
        "spectrum",
        &["--set", "dipole.d0_debye=0.0", "--set", "scattering.half_span_rads=1e11", "--set", "scattering.half_span_linewidths=1.0"],
    );
    // Both span settings at once is rejected.
    assert_eq!(o.status.code(), Some(2));
    fs::write(
        d.path().join("run.toml"),
        SMALL.replace("half_span_linewidths = 20.0", "half_span_rads = 1e11"),
    )
    .unwrap();
    let o = run(d.path(), "spectrum", &["--set", "dipole.d0_debye=0.0"]);
    let stdout = ok(&o);
    assert!(stdout.contains("flat"), "{stdout}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("decoupled"));
    let csv = fs::read_to_string(d.path().join("out/spectrum.csv")).unwrap();
    for line in csv.lines().skip(2) {
        let t2: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert_eq!(t2, 1.0);
    }
}

#[test]
fn configuration_errors_exit_with_2() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), "bands", &["--set", "lattice.n_ef=3.0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_ef"));

    let o = run(d.path(), "emission", &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("missing upstream artifact") && err.contains("mode.pcwf"), "{err}");

    let o = Command::new(env!("CARGO_BIN_EXE_chiralpcw"))
        .args(["mode", "--config", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_3() {
    let d = tempfile::tempdir().unwrap();
    // A weak index contrast leaves no confined band in the narrow gap.
    let o = run(d.path(), "mode", &["--set", "lattice.n_eff=1.05"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn shipped_example_config_parses() {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/w1.toml")).unwrap();
    let cfg = chiralpcw::cli::load_config(&text, &[]).unwrap();
    for block in [
        cfg.lattice.is_some(),
        cfg.solver.is_some(),
        cfg.dipole.is_some(),
        cfg.scattering.is_some(),
        cfg.quantum.is_some(),
    ] {
        assert!(block);
    }
}
