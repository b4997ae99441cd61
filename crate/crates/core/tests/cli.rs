use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const LATTICE: &str = r#"
[[timescale]]
kind = "points"
times = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
"#;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(mode: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impulse-ts"))
        .arg(mode)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("problem.toml");
    fs::write(&path, body).unwrap();
    path
}

fn report_value(out: &Path, key: &str) -> String {
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in report:\n{report}"))
        .to_string()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn eigen_reports_lattice_eigenvalue() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run("eigen", &configs().join("eigen_lattice.toml"), &out, &[]);
    assert_eq!(o.status.code(), Some(0));
    let l1: f64 = report_value(&out, "lambda1").parse().unwrap();
    assert!((l1 - 9.78869).abs() < 1e-5);
    for f in ["solution.csv", "trace.csv", "plot.gp", "report.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn solve_linear_reproduces_parabola() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("{LATTICE}\n[problem]\nlambda = 0.0\nh = \"1\"\n"),
    );
    let out = tmp.path().join("out");
    assert_eq!(run("solve-linear", &cfg, &out, &[]).status.code(), Some(0));
    let rows = csv_rows(&out.join("solution.csv"));
    assert_eq!(rows.len(), 11);
    for r in &rows {
        let (t, u): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        assert!((u - t * (1.0 - t) / 2.0).abs() < 1e-10);
    }
    assert_eq!(rows.last().unwrap()[2], "");
    let header = fs::read_to_string(out.join("solution.csv")).unwrap();
    assert!(header.starts_with("t,u,u_delta\n"));
    assert!(!header.contains('\r'));
}

#[test]
fn mountain_pass_lists_two_solutions() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run("mountain-pass", &configs().join("example.toml"), &out, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(report_value(&out, "solutions"), "2");
    let n0: f64 = report_value(&out, "u0_norm").parse().unwrap();
    let ns: f64 = report_value(&out, "ustar_norm").parse().unwrap();
    assert_eq!(n0, 0.0);
    assert!(ns > 1e-3);
    for f in ["u0.csv", "u1.csv", "ustar.csv", "path.csv", "trace.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let path = csv_rows(&out.join("path.csv"));
    assert_eq!(path.len(), 41);
}

#[test]
fn check_conditions_writes_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(
        run(
            "check-conditions",
            &configs().join("example.toml"),
            &out,
            &[]
        )
        .status
        .code(),
        Some(0)
    );
    let rows = csv_rows(&out.join("conditions.csv"));
    let h1 = rows.iter().find(|r| r[0] == "H1_f_margin").unwrap();
    assert!(h1[2].parse::<f64>().unwrap().abs() < 1e-12);
    assert!(rows.iter().any(|r| r[1] == "heuristic"));
}

#[test]
fn impulse_off_the_mesh_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("{LATTICE}\n[problem]\nh = \"0\"\n[[impulses]]\nt = 0.55\nd = 1.0\n"),
    );
    assert_eq!(
        run("solve-linear", &cfg, &tmp.path().join("o"), &[])
            .status
            .code(),
        Some(2)
    );
    // within the tolerance it resolves
    let cfg = write_config(
        tmp.path(),
        &format!(
            "{LATTICE}\n[problem]\nh = \"0\"\n[[impulses]]\nt = 0.5000000000000004\nd = 1.0\n"
        ),
    );
    assert_eq!(
        run("solve-linear", &cfg, &tmp.path().join("o"), &[])
            .status
            .code(),
        Some(0)
    );
}

#[test]
fn non_coercive_linear_problem_needs_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("{LATTICE}\n[problem]\nlambda = -15.0\nh = \"1\"\n"),
    );
    let out = tmp.path().join("o");
    assert_eq!(run("solve-linear", &cfg, &out, &[]).status.code(), Some(2));
    assert_eq!(
        run("solve-linear", &cfg, &out, &["--allow-noncoercive"])
            .status
            .code(),
        Some(0)
    );
    assert!(fs::read_to_string(out.join("report.txt"))
        .unwrap()
        .contains("warning"));
}

#[test]
fn malformed_configs_are_validation_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cases = [
        format!("{LATTICE}\n[problem]\nh = \"1\"\nf = \"u\"\n"),
        format!("{LATTICE}\n[problem]\nh = \"1 +\"\n"),
        format!("{LATTICE}\n[problem]\nh = \"1\"\nbogus = 3\n"),
        format!("{LATTICE}\n[problem]\nh = \"u\"\n"),
        "[[timescale]]\nkind = \"points\"\ntimes = [0.0, 1.0]\n[problem]\nh = \"1\"\n".to_string(),
    ];
    for body in cases {
        let cfg = write_config(tmp.path(), &body);
        assert_eq!(
            run("solve-linear", &cfg, &out, &[]).status.code(),
            Some(2),
            "{body}"
        );
    }
    assert_eq!(
        run("eigen", &tmp.path().join("missing.toml"), &out, &[])
            .status
            .code(),
        Some(2)
    );
    let cfg = write_config(tmp.path(), &format!("{LATTICE}\n[problem]\nf = \"u^3\"\n"));
    assert_eq!(
        run("check-conditions", &cfg, &out, &[]).status.code(),
        Some(2)
    );
}

#[test]
fn missing_mountain_geometry_is_a_solver_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{LATTICE}\n[problem]\nf = \"u\"\n"));
    assert_eq!(
        run("mountain-pass", &cfg, &tmp.path().join("o"), &[])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn weighted_lambda_bound_is_warned() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("{LATTICE}\n[problem]\nlambda = -5.0\nf = \"sin(u)\"\ng = \"1\"\n"),
    );
    let out = tmp.path().join("o");
    assert_eq!(run("minimize", &cfg, &out, &[]).status.code(), Some(0));
    assert!(report_value(&out, "warning").contains("lambda"));
}

#[test]
fn command_line_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = configs().join("mixed_cos.toml");
    assert_eq!(
        run("minimize", &cfg, &out, &["--tol", "1e-3"])
            .status
            .code(),
        Some(0)
    );
    let loose = csv_rows(&out.join("trace.csv")).len();
    assert_eq!(
        run("minimize", &cfg, &out, &["--tol", "1e-12", "--newton"])
            .status
            .code(),
        Some(0)
    );
    let tight = csv_rows(&out.join("trace.csv")).len();
    assert!(tight > loose);
    assert_eq!(
        run("minimize", &cfg, &out, &["--max-iters", "0"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn seeds_change_nothing_but_seeded_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("example.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(
        run("mountain-pass", &cfg, &a, &["--seed", "3"])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        run("mountain-pass", &cfg, &b, &["--seed", "3"])
            .status
            .code(),
        Some(0)
    );
    for f in [
        "u0.csv",
        "u1.csv",
        "ustar.csv",
        "path.csv",
        "trace.csv",
        "solution.csv",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}
