use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ulsph(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ulsph"));
    for (k, _) in std::env::vars() {
        if k.starts_with("ULSPH_") {
            cmd.env_remove(k);
        }
    }
    cmd.env("RUST_LOG", "warn").args(args).output().expect("spawn ulsph")
}

fn ulsph_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ulsph"));
    cmd.env("RUST_LOG", "warn").args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn ulsph")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Data rows of a CSV with `#` header lines, split into fields.
fn rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let cols = lines.next().expect("column line").split(',').map(String::from).collect();
    let data = lines.map(|l| l.split(',').map(|x| x.parse().expect("number")).collect()).collect();
    (cols, data)
}

fn column(cols: &[String], name: &str) -> usize {
    cols.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn plate_run_writes_series_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = ulsph(&["run", "--scene", "oscillating_plate", "--ratio", "10", "--method", "gnog", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));

    let (cols, data) = rows(&dir.path().join("series.csv"));
    assert!(data.len() >= 100, "{} samples", data.len());
    let t = column(&cols, "time");
    assert!((data.last().unwrap()[t] - 0.67).abs() < 1e-12);
    let header = fs::read_to_string(dir.path().join("series.csv")).unwrap();
    for key in ["# scene = oscillating_plate", "# method = gnog", "# ratio = 10", "# material.0 = rho0=1000"] {
        assert!(header.contains(key), "missing {key}");
    }

    let (cols, first) = rows(&dir.path().join("snapshots/snapshot_00000.csv"));
    let vm = column(&cols, "vm_stress");
    assert!(!first.is_empty());
    assert!(first.iter().all(|r| r[vm] == 0.0));
    assert!(dir.path().join("snapshots/final.csv").exists());
    assert!(dir.path().join("checkpoint.txt").exists());
}

#[test]
fn absurd_penalty_aborts_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = ulsph(&["run", "--scene", "oscillating_plate", "--ratio", "4", "--xi", "1e9", "--out", out]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("particle") && err.contains("t = "), "{err}");
    assert!(dir.path().join("snapshots/abort.csv").exists());
}

#[test]
fn rerun_is_byte_identical() {
    let run = |dir: &Path| {
        let o = ulsph(&[
            "run", "--scene", "oscillating_plate", "--ratio", "4", "--end-time", "0.02", "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(a.path());
    run(b.path());
    for name in ["series.csv", "checkpoint.txt", "snapshots/final.csv", "snapshots/snapshot_00005.csv"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
}

#[test]
fn resume_matches_straight_run() {
    let straight = tempfile::tempdir().unwrap();
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let common = ["run", "--scene", "oscillating_plate", "--ratio", "4", "--snapshot-every", "0.01"];
    let mut args = common.to_vec();
    args.extend(["--end-time", "0.04", "--out", straight.path().to_str().unwrap()]);
    assert!(ulsph(&args).status.success());
    let mut args = common.to_vec();
    args.extend(["--end-time", "0.02", "--out", first.path().to_str().unwrap()]);
    assert!(ulsph(&args).status.success());

    let ckpt = first.path().join("checkpoint.txt");
    let o = ulsph(&[
        "run", "--resume", ckpt.to_str().unwrap(), "--end-time", "0.04", "--out", second.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let (cols, a) = rows(&straight.path().join("snapshots/final.csv"));
    let (_, b) = rows(&second.path().join("snapshots/final.csv"));
    assert_eq!(a.len(), b.len());
    let (x, y) = (column(&cols, "x"), column(&cols, "y"));
    for (ra, rb) in a.iter().zip(&b) {
        for c in [x, y] {
            assert!((ra[c] - rb[c]).abs() <= 1e-8 * ra[c].abs().max(1e-3), "{} vs {}", ra[c], rb[c]);
        }
    }
    let resumed = fs::read_to_string(second.path().join("series.csv")).unwrap();
    assert!(resumed.contains("# resumed_from = 0.02"));
}

#[test]
fn resume_rejects_physics_flags() {
    let o = ulsph(&["run", "--resume", "nowhere.txt", "--method", "og"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--method"));
}

#[test]
fn usage_errors_exit_with_one() {
    let o = ulsph(&["run", "--foo"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("--foo") && err.contains("--scene") && err.contains("--resume"), "{err}");

    let o = ulsph(&["run", "--scene", "oscillating_plate", "--method", "oas"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("og, gnog"));

    let o = ulsph(&["run", "--scene", "teapot"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("oscillating_plate"));

    let o = ulsph(&["run"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("scene"));

    let o = ulsph(&["run", "--scene", "hvi", "--vf", "0.1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[run]\nscene = \"hvi\"\nsped = 3.0\n").unwrap();
    let o = ulsph(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sped"), "{}", stderr(&o));

    let typed = dir.path().join("typed.toml");
    fs::write(&typed, "[material]\nE = \"stiff\"\n").unwrap();
    let o = ulsph(&["run", "--scene", "hvi", "--config", typed.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("E"), "{}", stderr(&o));

    let good = dir.path().join("good.toml");
    let out = dir.path().join("out");
    fs::write(
        &good,
        format!(
            "[run]\nscene = \"oscillating_plate\"\nratio = 4\nend_time = 0.01\nformat = \"vtk\"\nout = {:?}\n\n[material]\nE = 4.0e6\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = ulsph(&["run", "--config", good.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("snapshots/final.vtk").exists());
    let header = fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(header.contains("E=4000000"), "{header}");
}

#[test]
fn environment_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let o = ulsph_env(
        &["run", "--ratio", "4"],
        &[
            ("ULSPH_SCENE", "oscillating_plate"),
            ("ULSPH_END_TIME", "0.01"),
            ("ULSPH_OUT", dir.path().to_str().unwrap()),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let (cols, data) = rows(&dir.path().join("series.csv"));
    assert_eq!(data.last().unwrap()[column(&cols, "time")], 0.01);
}
