use std::fs;
use std::path::Path;
use std::process::Command;

fn euler_cert(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_euler-cert")).args(args).output().expect("spawn euler-cert")
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        "seed = 11\n\n[verify]\ninstances = 6\nmax_steps = 6\nwellposedness = false\n\n\
         [bv]\nshift_cases = 40\nproperty_cases = 10\nc1_samples = 1000\n",
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn verify_is_bit_stable_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let mut reports = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("jobs{jobs}"));
        let o = euler_cert(&["verify", "--config", &config, "--jobs", jobs, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        reports.push((fs::read(out.join("report.json")).unwrap(), fs::read(out.join("verify_slacks.csv")).unwrap()));
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("bv");
    let o = euler_cert(&["bv", "--config", &config, "--seed", "99", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let report: String = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"seed\": 99"));
    assert!(out.join("bv_shift.csv").exists());
}

#[test]
fn bad_config_exits_with_error_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[verify]\nno_such_key = 1\n").unwrap();
    let o = euler_cert(&["verify", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
