use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sle4lab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sle4lab"))
        .args(args)
        .current_dir(dir)
        .env_remove("SLE4LAB_OUT")
        .env_remove("SLE4LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("exp.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
name = "small"
[domain]
side_n = 12
[zipper]
t_max = 0.2
t_min = 0.05
"#;

fn without_header(p: &Path) -> String {
    let s = fs::read_to_string(p).unwrap();
    assert!(s.starts_with("# sle4lab "));
    s.split_once('\n').unwrap().1.to_string()
}

#[test]
fn sample_is_reproducible_across_directories_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = sle4lab(
        &["--config", &cfg, "--seed", "9", "--out", "a", "sample"],
        tmp.path(),
    );
    let b = sle4lab(
        &[
            "--config",
            &cfg,
            "--seed",
            "9",
            "--out",
            "b",
            "--threads",
            "1",
            "sample",
        ],
        tmp.path(),
    );
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    assert_eq!(b.status.code(), Some(0));
    let fa = without_header(&tmp.path().join("a/runs/field_9.csv"));
    assert_eq!(fa, without_header(&tmp.path().join("b/runs/field_9.csv")));
    assert!(fa.starts_with("id,x,y,value\n"));
    assert_eq!(fa.lines().count(), 1 + 13 * 13);
    assert!(tmp.path().join("a/config.snapshot").exists());
    assert!(tmp.path().join("a/domain.json").exists());
}

#[test]
fn single_seed_commands_write_their_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    for (cmd, file, head) in [
        ("trace", "path_4.csv", "k,x,y"),
        ("map", "image_4.csv", "k,x,y"),
        ("extract", "driving_4.csv", "t,w"),
    ] {
        let out = sle4lab(
            &["--config", &cfg, "--seed", "4", "--out", cmd, cmd],
            tmp.path(),
        );
        assert_eq!(
            out.status.code(),
            Some(0),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let body = without_header(&tmp.path().join(cmd).join("runs").join(file));
        assert_eq!(body.lines().next(), Some(head));
        let report: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(tmp.path().join(cmd).join("report.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(report["kind"], cmd);
    }
    let w = without_header(&tmp.path().join("extract/runs/driving_4.csv"));
    let first = w.lines().nth(1).unwrap();
    assert_eq!(first, "0,0");
}

#[test]
fn single_run_pipeline_has_no_aggregate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("{SMALL}\n[ensemble]\nsize = 1\nseed = 2\n"),
    );
    let out = sle4lab(&["--config", &cfg, "--out", "p", "pipeline"], tmp.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let runs: Vec<_> = fs::read_dir(tmp.path().join("p/runs")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("p/report.json")).unwrap())
            .unwrap();
    assert!(report["report"]["aggregate"].is_null());
    assert!(report["pass"].is_null());
}

#[test]
fn non_local_rule_fails_and_expected_fail_flips_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[verify.locality]\nrules = [\"negative\"]\nunions = []\nharmonicity = []\nsamples = 50000\n",
    );
    let out = sle4lab(
        &["--config", &cfg, "--out", "l", "verify", "locality"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("l/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], false);
    let out = sle4lab(
        &[
            "--config",
            &cfg,
            "--out",
            "l",
            "--expected-fail",
            "verify",
            "locality",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn passing_verifier_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[verify.martingale]\nruns = 2000\ndt = 1e-3\n");
    let out = sle4lab(
        &["--config", &cfg, "--out", "m", "verify", "martingale"],
        tmp.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = sle4lab(
        &[
            "--config",
            &cfg,
            "--out",
            "m",
            "--expected-fail",
            "verify",
            "martingale",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_and_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sle4lab(&["verify", "telepathy"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let cfg = write_config(tmp.path(), "[domain]\nsides = 4\n");
    let out = sle4lab(&["--config", &cfg, "sample"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("sle4lab: "));
    let out = sle4lab(&["--add-bump", "1,2,3", "sample"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = Command::new(env!("CARGO_BIN_EXE_sle4lab"))
        .args(["--config", &cfg, "sample"])
        .current_dir(tmp.path())
        .env("SLE4LAB_OUT", "from-env")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("from-env/runs/field_1.csv").exists());
    let out = sle4lab(&["--config", &cfg, "sample"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("out/small/runs/field_1.csv").exists());
}

#[test]
fn bump_flag_changes_the_field_inside_its_disc_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    sle4lab(&["--config", &cfg, "--out", "plain", "sample"], tmp.path());
    let out = sle4lab(
        &[
            "--config",
            &cfg,
            "--out",
            "bumped",
            "--add-bump",
            "7.5,5.0,2.0,1.0",
            "sample",
        ],
        tmp.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = |d: &str| -> Vec<(f64, f64, f64)> {
        without_header(&tmp.path().join(d).join("runs/field_1.csv"))
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
                (f[1], f[2], f[3])
            })
            .collect()
    };
    let (a, b) = (rows("plain"), rows("bumped"));
    let mut changed = 0;
    for (p, q) in a.iter().zip(&b) {
        let inside = ((p.0 - 7.5).powi(2) + (p.1 - 5.0).powi(2)).sqrt() < 2.0;
        if inside {
            changed += usize::from(q.2 > p.2);
        } else {
            assert_eq!(p.2, q.2);
        }
    }
    assert!(changed > 0);
}
