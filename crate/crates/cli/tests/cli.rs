use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
[env]
render_height = 56
render_width = 84

[backbone]
feature_dim = 16

[encoder]
d_what = 8
mlp_hidden = 16
decoder_hidden = 8
decoder_layers = 1

[training]
epochs = 1
max_clips = 2
frames_per_clip = 2

[bc]
hidden = 16
epochs = 2

[iql]
steps = 20
batch = 16
hidden = 16

[eval]
n_agents = 2
n_rollouts = 3
"#;

fn actslot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_actslot")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.toml");
    fs::write(&p, SMALL).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&actslot(&["--help"])), 0);
    let v = actslot(&["--version"]);
    assert_eq!(code(&v), 0);
    assert!(stdout(&v).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let o = actslot(&["data", "stats", "--bogus"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).to_lowercase().contains("usage"));
}

#[test]
fn missing_config_names_the_path() {
    let o = actslot(&["--config", "/nonexistent/cfg.toml", "data", "stats"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("/nonexistent/cfg.toml"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "[encoder]\nn_slotz = 3\n").unwrap();
    assert_eq!(code(&actslot(&["--config", s(&p), "data", "stats"])), 1);
}

#[test]
fn unknown_ablation_kind_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = actslot(&["--config", s(&cfg), "eval", "ablate", "colors", "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn dataset_generate_stats_validate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let ds = dir.path().join("ds");
    let o = actslot(&["--config", s(&cfg), "data", "generate", "--out", s(&ds)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(ds.join("stamp.json").exists());
    let o = actslot(&["data", "stats", "--dataset", s(&ds)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("103 trajectories, 82 successful\n"), "{}", stdout(&o));
    assert_eq!(code(&actslot(&["data", "validate", "--dataset", s(&ds)])), 0);

    let bin = ds.join("trajectories/0000.bin");
    let mut bytes = fs::read(&bin).unwrap();
    let n = bytes.len();
    bytes[n - 1] ^= 1;
    fs::write(&bin, bytes).unwrap();
    let o = actslot(&["data", "validate", "--dataset", s(&ds)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("checksum"));
}

#[test]
fn stats_without_dataset_is_a_validation_error() {
    assert_eq!(code(&actslot(&["data", "stats"])), 1);
}

#[test]
fn train_evaluate_and_reemit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = s(&cfg);
    let d = |n: &str| dir.path().join(n);

    let o = actslot(&["--config", c, "data", "generate", "--n-traj", "6", "--out", s(&d("ds"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = actslot(&["--config", c, "encoder", "train", "--dataset", s(&d("ds")), "--out", s(&d("enc"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["encoder.aslt", "training_log.json", "stamp.json"] {
        assert!(d("enc").join(f).exists(), "{f}");
    }
    let o = actslot(&[
        "--config", c, "encoder", "inspect",
        "--checkpoint", s(&d("enc/encoder.aslt")),
        "--dataset", s(&d("ds")),
        "--frame", "0001/0003",
        "--out", s(&d("rep.bin")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("representation length 432"), "{}", stdout(&o));
    assert!(d("rep.bin").exists());

    let full = format!(
        "{SMALL}dataset = \"{}\"\nencoder_checkpoint = \"{}\"\n",
        s(&d("ds")),
        s(&d("enc/encoder.aslt"))
    );
    let cfg2 = d("with_data.toml");
    fs::write(&cfg2, full).unwrap();
    let c2 = s(&cfg2);

    let o = actslot(&["--config", c2, "--seed", "1", "policy", "train-bc", "--out", s(&d("bc"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = actslot(&["--config", c2, "policy", "train-iql", "--out", s(&d("iql"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = actslot(&["--config", c2, "eval", "run", "--policy", s(&d("bc/policy.aslt")), "--out", s(&d("run"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = d("run/report.json");
    assert!(report.exists() && d("run/report.csv").exists());

    let o = actslot(&["report", "emit", "--report", s(&report), "--out", s(&d("re"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(&report).unwrap(), fs::read(d("re/report.json")).unwrap());

    // A report whose stored aggregate disagrees with its records is rejected.
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    v["aggregate"]["success_rate"]["mean"] = serde_json::json!(0.123);
    fs::write(d("tampered.json"), serde_json::to_string(&v).unwrap()).unwrap();
    let o = actslot(&["report", "emit", "--report", s(&d("tampered.json")), "--out", s(&d("re2"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn policy_from_another_encoder_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = s(&cfg);
    let d = |n: &str| dir.path().join(n);
    let o = actslot(&["--config", c, "policy", "train-bc", "--out", s(&d("bc"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let other = d("other.toml");
    fs::write(&other, SMALL.replace("d_what = 8", "d_what = 6")).unwrap();
    let o = actslot(&["--config", s(&other), "eval", "run", "--policy", s(&d("bc/policy.aslt")), "--out", s(&d("run"))]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn protocol_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = s(&cfg);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&actslot(&["--config", c, "--seed", "0", "eval", "protocol", "--out", s(&a)])), 0);
    assert_eq!(code(&actslot(&["--config", c, "--seed", "0", "eval", "protocol", "--out", s(&b)])), 0);
    for f in ["report.json", "report.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let v: serde_json::Value = serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(v["stamp"]["command"], "eval protocol");
    assert_eq!(v["agents"].as_array().unwrap().len(), 2);
}
