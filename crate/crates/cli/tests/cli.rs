use std::path::Path;
use std::process::{Command, Output};

fn pairdrop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pairdrop")).args(args).output().unwrap()
}

fn tiny_config(dir: &Path, iterations: usize) -> String {
    let path = dir.join("tiny.json");
    let cfg = serde_json::json!({
        "scene": { "seed": 2, "count": 12 },
        "views": { "n": 4, "train": 2 },
        "image": { "size": 12 },
        "train": { "iterations": iterations, "branches": 2 },
        "loss": { "t_warm": iterations / 2 }
    });
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn gen_scene_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let o = pairdrop(&["gen-scene", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = dir.path().join("c.json");
    pairdrop(&["gen-scene", "--seed", "8", "--out", c.to_str().unwrap()]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn serial_training_reproduces_and_embeds_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), 30);
    let runs: Vec<_> = ["r1", "r2"].iter().map(|r| dir.path().join(r)).collect();
    for out in &runs {
        let o = pairdrop(&["train", "--config", &cfg, "--serial", "--seed", "4", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ck = |d: &Path| std::fs::read(d.join("checkpoint.json")).unwrap();
    assert_eq!(ck(&runs[0]), ck(&runs[1]));
    for f in ["curve.csv", "records.json", "records.csv", "summary.json", "config.resolved.json"] {
        assert!(runs[0].join(f).exists(), "{f}");
    }
    let heldout: Vec<_> = std::fs::read_dir(runs[0].join("heldout")).unwrap().collect();
    assert_eq!(heldout.len(), 2);

    // The embedded config alone reproduces the run.
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(runs[0].join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["rng"]["seed"], 4);
    let embedded = dir.path().join("embedded.json");
    std::fs::write(&embedded, summary["config"].to_string()).unwrap();
    let r3 = dir.path().join("r3");
    let o = pairdrop(&["train", "--config", embedded.to_str().unwrap(), "--out", r3.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(ck(&runs[0]), ck(&r3));
}

#[test]
fn resume_continues_to_the_same_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), 30);
    let full = dir.path().join("full");
    assert_eq!(code(&pairdrop(&["train", "--config", &cfg, "--out", full.to_str().unwrap()])), 0);

    let part = dir.path().join("part");
    let o = pairdrop(&["train", "--config", &cfg, "--checkpoint-every", "10", "--out", part.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(full.join("checkpoint.json")).unwrap(), std::fs::read(part.join("checkpoint.json")).unwrap());

    // Resuming a finished checkpoint is a no-op that rewrites the same state.
    let again = dir.path().join("again");
    let ck = full.join("checkpoint.json");
    let o = pairdrop(&["train", "--config", &cfg, "--resume", ck.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&ck).unwrap(), std::fs::read(again.join("checkpoint.json")).unwrap());

    let o = pairdrop(&["train", "--config", &cfg, "--seed", "99", "--resume", ck.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn short_preset_warms_up_over_4000_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("micro.json");
    let cfg = serde_json::json!({
        "scene": { "count": 3 },
        "views": { "n": 3, "train": 2 },
        "image": { "size": 4 }
    });
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = dir.path().join("run");
    let o = pairdrop(&["train", "--config", path.to_str().unwrap(), "--preset", "short", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(out.join("curve.csv")).unwrap();
    let lambda: Vec<f64> = rd.records().map(|r| r.unwrap()[5].parse().unwrap()).collect();
    assert_eq!(lambda.len(), 5000);
    assert_eq!(lambda[0], 0.0);
    assert_eq!(lambda[2000], 0.025);
    assert!(lambda[3999] < 0.05);
    assert_eq!(lambda[4000], 0.05);
    assert_eq!(lambda[4999], 0.05);
}

#[test]
fn usage_and_config_errors_exit_1_without_output() {
    assert_eq!(code(&pairdrop(&["frobnicate"])), 1);
    assert_eq!(code(&pairdrop(&["train", "--bogus"])), 1);
    assert_eq!(code(&pairdrop(&["train", "--out", "x", "--preset", "medium"])), 1);
    assert_eq!(code(&pairdrop(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"dropout": {"rate": 1.5}}"#).unwrap();
    let out = dir.path().join("never");
    let o = pairdrop(&["train", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dropout.rate"));
    assert!(!out.exists());

    std::fs::write(&bad, r#"{"train": {"iterationz": 5}}"#).unwrap();
    let o = pairdrop(&["stability", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(!out.exists());

    let cfg = tiny_config(dir.path(), 4);
    let o = pairdrop(&["stability", "--config", &cfg, "--seeds", "1,1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(!out.exists());
}

#[test]
fn runtime_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), 4);
    let missing = dir.path().join("missing.json");
    let o = pairdrop(&["eval", "--config", &cfg, "--model", missing.to_str().unwrap(), "--out", dir.path().join("e").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn eval_and_render_of_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), 4);
    let scene = dir.path().join("scene.json");
    let o = pairdrop(&["gen-scene", "--config", &cfg, "--out", scene.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let out = dir.path().join("eval");
    let o = pairdrop(&["eval", "--config", &cfg, "--model", scene.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let recs: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("records.json")).unwrap()).unwrap();
    assert_eq!(recs[0]["psnr_mean"], 99.0);

    let ppm = dir.path().join("v1.ppm");
    let o = pairdrop(&["render", "--config", &cfg, "--model", scene.to_str().unwrap(), "--view", "1", "--out", ppm.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let bytes = std::fs::read(&ppm).unwrap();
    assert!(bytes.starts_with(b"P6\n12 12\n255\n"));
    assert_eq!(code(&pairdrop(&["render", "--config", &cfg, "--model", scene.to_str().unwrap(), "--view", "9", "--out", ppm.to_str().unwrap()])), 1);
}

#[test]
fn experiment_commands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), 6);
    let st = dir.path().join("st");
    let o = pairdrop(&["stability", "--config", &cfg, "--seeds", "1,2", "--out", st.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(st.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["stability"].as_array().unwrap().len(), 2);
    assert_eq!(summary["records"].as_array().unwrap().len(), 4);
    assert!(summary["config"].is_object());
    assert_eq!(st.join("pairdropgs").join("2").read_dir().unwrap().count(), 2);
    let csv_rows = std::fs::read_to_string(st.join("records.csv")).unwrap().lines().count();
    assert_eq!(csv_rows, 5);

    let sw = dir.path().join("sw");
    let o = pairdrop(&["sweep", "--config", &cfg, "--branches", "2,3", "--seeds", "1", "--out", sw.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(sw.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["sweep"][0]["consistency_pairs"], 1);
    assert_eq!(summary["sweep"][1]["consistency_pairs"], 3);

    let ab = dir.path().join("ab");
    let o = pairdrop(&["ablate", "--config", &cfg, "--seeds", "1", "--out", ab.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let recs: serde_json::Value = serde_json::from_slice(&std::fs::read(ab.join("records.json")).unwrap()).unwrap();
    assert_eq!(recs.as_array().unwrap().len(), 4);
}
