use std::path::Path;
use std::process::{Command, Output};

fn rfadv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfadv")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn config(extra: &str) -> String {
    format!(
        r#"{{
  "version": 1,
  "scenario": "autoencoder",
  "system": {{ "autoencoder": {{ "steps": 300 }} }},
  "attack_options": {{ "epochs": 2, "batches_per_epoch": 5 }},
  "sweep": {{ "axis": "level", "values": [2.0, 6.0] }},
  "trials": 500{extra}
}}"#
    )
}

#[test]
fn help_lists_every_verb() {
    let out = String::from_utf8(rfadv(&["--help"]).stdout).unwrap();
    for verb in [
        "train-system",
        "train-pgm",
        "train-uap",
        "train-substitute",
        "gan-train",
        "attack-eval",
        "defense-eval",
        "compare",
    ] {
        assert!(out.contains(verb), "{verb} missing from help");
    }
}

#[test]
fn missing_config_file_is_a_config_error() {
    assert_eq!(code(&rfadv(&["attack-eval", "--config", "/nonexistent/cfg.json"])), 2);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &config(r#", "bogus": 1"#));
    let out = rfadv(&["attack-eval", "--config", &cfg]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn missing_system_artifact_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &config(r#", "artifacts": { "system": "/nonexistent/sys" }"#));
    assert_eq!(code(&rfadv(&["attack-eval", "--config", &cfg])), 3);
}

#[test]
fn defense_eval_without_defense_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &config(r#", "attack": "jammer""#));
    assert_eq!(code(&rfadv(&["defense-eval", "--config", &cfg])), 2);
}

#[test]
fn gan_train_needs_positive_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &config(""));
    let out = dir.path().join("gan");
    assert_eq!(code(&rfadv(&["gan-train", "--config", &cfg, "--out", out.to_str().unwrap()])), 2);
}

#[test]
fn train_then_evaluate_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let base = write(dir.path(), "base.json", &config(""));
    let sys = dir.path().join("sys");
    let sys_s = sys.to_str().unwrap();
    let out = rfadv(&["train-system", "--config", &base, "--seed", "3", "--out", sys_s]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(sys.join("system.json").exists());

    let art = format!(r#", "artifacts": {{ "system": "{sys_s}" }}"#);
    let pgm_cfg = write(dir.path(), "pgm.json", &config(&format!(r#"{art}, "attack": "pgm""#)));
    let atk = dir.path().join("atk");
    let out = rfadv(&["train-pgm", "--config", &pgm_cfg, "--seed", "3", "--out", atk.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(atk.join("pgm.bin").exists());

    let jam_cfg = write(dir.path(), "jam.json", &config(&format!(r#"{art}, "attack": "jammer""#)));
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    for r in [&r1, &r2] {
        let out = rfadv(&["attack-eval", "--config", &jam_cfg, "--seed", "9", "--out", r.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(r1.join("results.csv")).unwrap();
    assert!(a.starts_with(b"sweep,metric,estimate,ci_low,ci_high,n,seed\n"));
    assert_eq!(a, std::fs::read(r2.join("results.csv")).unwrap());

    let out = rfadv(&[
        "compare",
        r1.join("results.csv").to_str().unwrap(),
        r2.join("results.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.lines().skip(1).all(|l| l.ends_with(",~")), "{report}");
}

#[test]
fn compare_rejects_mismatched_axes() {
    let dir = tempfile::tempdir().unwrap();
    let head = "sweep,metric,estimate,ci_low,ci_high,n,seed\n";
    let a = write(dir.path(), "a.csv", &format!("{head}1,bler/clean,0.1,0.05,0.15,100,0\n"));
    let b = write(dir.path(), "b.csv", &format!("{head}2,bler/clean,0.1,0.05,0.15,100,0\n"));
    assert_eq!(code(&rfadv(&["compare", &a, &b])), 2);
}
