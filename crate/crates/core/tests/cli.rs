use std::path::Path;
use std::process::{Command, Output};

fn clustersim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clustersim")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
[scenario]
num_cells = 4
ms_speed_kmh = 3.0

[experiment]
master_seed = 3
num_drops = 2
num_fading = 1
methods = ["formation-aos", "oracle"]
precoders = ["iia"]
"#;

#[test]
fn simulate_then_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("res.csv");
    let out_s = out.to_string_lossy().into_owned();
    let run = clustersim(&["simulate", "--config", &config, "--out", &out_s, "--sweep", "snr_db=10,30"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("ratio to oracle"));

    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    assert!(dir.path().join("res.meta.json").exists());
    assert!(dir.path().join("res.timing.csv").exists());

    let sum = clustersim(&["summarize", "--in", &out_s]);
    assert!(sum.status.success());
    let report = String::from_utf8_lossy(&sum.stdout);
    assert_eq!(report.lines().count(), 1 + 2 * 2);
    assert!(report.contains("formation-aos") && report.contains("1.0000"));
}

#[test]
fn overrides_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let a = dir.path().join("a.csv").to_string_lossy().into_owned();
    let b = dir.path().join("b.csv").to_string_lossy().into_owned();
    let args = ["--drops", "1", "--methods", "singletons", "--precoders", "iia,naive-wmmse"];
    let mut first = vec!["simulate", "--config", &config, "--out", &a, "--seed", "1"];
    first.extend(args);
    let mut second = vec!["simulate", "--config", &config, "--out", &b, "--seed", "2"];
    second.extend(args);
    assert!(clustersim(&first).status.success());
    assert!(clustersim(&second).status.success());
    let (a, b) = (std::fs::read_to_string(a).unwrap(), std::fs::read_to_string(b).unwrap());
    assert_eq!(a.lines().count(), 1 + 2);
    assert!(a.contains("naive-wmmse"));
    assert_ne!(a, b);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv").to_string_lossy().into_owned();

    let bad_key = write_config(dir.path(), "[scenario]\nnum_cels = 4\n");
    let r = clustersim(&["simulate", "--config", &bad_key, "--out", &out]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("num_cels"));

    let big_oracle = write_config(dir.path(), "[scenario]\nnum_cells = 14\n[experiment]\nmethods = [\"oracle\"]\n");
    let r = clustersim(&["simulate", "--config", &big_oracle, "--out", &out]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!Path::new(&out).exists());

    let malformed = dir.path().join("bad.csv");
    std::fs::write(&malformed, "sweep_value,drop\n1,2\n").unwrap();
    let r = clustersim(&["summarize", "--in", &malformed.to_string_lossy()]);
    assert_eq!(r.status.code(), Some(2));

    let missing = dir.path().join("missing.csv");
    let r = clustersim(&["summarize", "--in", &missing.to_string_lossy()]);
    assert_eq!(r.status.code(), Some(1));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let r = clustersim(&["summarize", "--in", &empty.to_string_lossy()]);
    assert!(r.status.success());
    assert!(r.stdout.is_empty());
}
