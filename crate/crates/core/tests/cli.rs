mod common;

use std::path::Path;
use std::process::Command as Process;

use neumann_curvature::cli::*;

const BAND_Z: &str = r#"
[domain]
kind = "band"
theta1 = 0.7853981633974483
theta2 = 2.356194490192345
h = 0.1

[curvature]
preset = "affine-z"
a = 0.0
b = 1.0
"#;

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn minimal_config_gets_defaults() {
    let c = parse_config(
        r#"
[domain]
kind = "cap"
theta = 1.0
h = 0.1

[curvature]
preset = "const"
c = 1.0
"#,
    )
    .unwrap();
    assert_eq!(c.seed, 0);
    assert_eq!(c.out, Path::new("out"));
    assert!(matches!(c.rho, RhoConfig::Geometric));
    assert!(matches!(c.solver.method, Method::Auto));
}

#[test]
fn misspelled_key_is_named() {
    let text = format!("{BAND_Z}\n[bubble]\ncenter = {{ theta = 0.7853981633974483 }}\nlamda = [8.0]\n");
    let err = parse_config(&text).unwrap_err().to_string();
    assert!(err.contains("lamda"), "{err}");
    assert!(err.contains("line"), "{err}");
}

#[test]
fn affine_preset_is_height() {
    let c = parse_config(BAND_Z).unwrap();
    let x = [0.3, 0.4, (1.0f64 - 0.25).sqrt()];
    assert_eq!(c.curvature.value_at(x), x[2]);
}

#[test]
fn bad_grid_is_rejected() {
    let text = format!("{BAND_Z}\n[rho]\nmode = \"grid\"\nvalues = [14.0, 13.0]\n");
    assert!(parse_config(&text).is_err());
}

#[test]
fn classify_finds_the_top_loop() {
    let dir = tempfile::tempdir().unwrap();
    let out = execute(Command::Classify, &parse_config(BAND_Z).unwrap(), dir.path());
    assert_eq!(out.exit_code, EXIT_OK);
    let j = read_json(&dir.path().join("classification.json"));
    assert_eq!(j["omega_plus"].as_array().unwrap().len(), 1);
    assert_eq!(j["h2"], true);
    let top = j["omega_plus"][0].as_u64().unwrap() as usize;
    assert_eq!(j["loop_signs"][top], "positive");
}

#[test]
fn negative_curvature_exits_with_two() {
    let text = "[domain]\nkind = \"cap\"\ntheta = 1.0\nh = 0.1\n\n[curvature]\npreset = \"const\"\nc = -1.0\n";
    let dir = tempfile::tempdir().unwrap();
    let out = execute(Command::Solve, &parse_config(text).unwrap(), dir.path());
    assert_eq!(out.exit_code, EXIT_INVALID);
    let j = read_json(&dir.path().join("errors.json"));
    assert_eq!(j["exit_code"], 2);
    assert_eq!(j["command"], "solve");
    let kind = j["kind"].as_str().unwrap();
    assert!(kind == "h1-violation" || kind == "not-in-admissible-set", "{kind}");
}

#[test]
fn zero_on_boundary_exits_with_two() {
    let text = "[domain]\nkind = \"band\"\ntheta1 = 1.0471975511965976\ntheta2 = 2.0943951023931957\nh = 0.1\n\n\
                [curvature]\npreset = \"affine-z\"\na = -0.5\nb = 1.0\n";
    let dir = tempfile::tempdir().unwrap();
    let out = execute(Command::Classify, &parse_config(text).unwrap(), dir.path());
    assert_eq!(out.exit_code, EXIT_INVALID);
    assert_eq!(read_json(&dir.path().join("errors.json"))["kind"], "h2-violation");
}

#[test]
fn sweep_writes_a_monotone_curve() {
    let text = "[domain]\nkind = \"band\"\ntheta1 = 0.7853981633974483\ntheta2 = 2.356194490192345\nh = 0.1\n\n\
                [curvature]\npreset = \"const\"\nc = 1.0\n\n\
                [rho]\nmode = \"grid\"\nfactors = [0.99, 1.0, 1.01]\n\n\
                [solver.path]\nsamples_per_loop = 2\n";
    let dir = tempfile::tempdir().unwrap();
    let out = execute(Command::Sweep, &parse_config(text).unwrap(), dir.path());
    assert_eq!(out.exit_code, EXIT_OK);
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let ratios: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(ratios.len(), 3);
    assert!(ratios.windows(2).all(|w| w[1] <= w[0] + 1e-6));
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "json" || e == "obj"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let text = "seed = 11\n\n[domain]\nkind = \"cap\"\ntheta = 1.0471975511965976\nh = 0.1\n\n\
                [curvature]\npreset = \"affine-z\"\na = 1.0\nb = 0.5\n\n\
                [solver]\nmethod = \"minimize\"\nnoise = 0.2\n";
    let config = parse_config(text).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(execute(Command::Solve, &config, a.path()).exit_code, EXIT_OK);
    assert_eq!(execute(Command::Solve, &config, b.path()).exit_code, EXIT_OK);
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert!(sa.len() >= 4);
    assert_eq!(sa, sb);
}

#[test]
fn binary_reports_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("neg.toml");
    std::fs::write(
        &cfg,
        "[domain]\nkind = \"cap\"\ntheta = 1.0\nh = 0.1\n\n[curvature]\npreset = \"const\"\nc = -1.0\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = Process::new(env!("CARGO_BIN_EXE_ncurv"))
        .args(["classify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(out.join("errors.json").exists());

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[domain]\nkind = \"cap\"\ntheta = 1.0\nh = 0.1\nlamda = 3\n").unwrap();
    let status = Process::new(env!("CARGO_BIN_EXE_ncurv"))
        .args(["mesh", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(std::fs::read_to_string(out.join("errors.json")).unwrap().contains("lamda"));
}
