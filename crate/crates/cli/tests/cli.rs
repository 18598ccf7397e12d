use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 3
train_workspaces = 2
val_workspaces = 1

[harvest]
pairs_per_workspace = 3
refine_iters = 100

[harvest.expert]
step_size = 0.5
max_iters = 4000

[train]
max_epochs = 2
batch_size = 16

[train.model]
d_hidden = 8
max_obstacles = 8
max_seq_len = 32

[train.model.attention]
d_model = 8
n_heads = 2
n_layers = 1
d_ffn = 8

[temp.planner]
step_size = 0.5
max_iters = 1500

[baseline]
step_size = 0.5
max_iters = 3000

[bench]
workspaces = 1
pairs_per_workspace = 2
"#;

fn temp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_temp"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("cfg.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let cfg = cfg.to_str().unwrap();

    let gen = ok(&temp(d, &["gen-data", "--config", cfg]));
    assert!(gen["examples"].as_u64().unwrap() > 0);
    assert!(d.join("dataset.ndjson").exists() && d.join("workspaces.json").exists());

    let trained = ok(&temp(d, &["train", "--config", cfg]));
    assert!(trained["best_val_loss"].as_f64().unwrap().is_finite());
    let log = std::fs::read_to_string(d.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);

    let task = d.join("task.json");
    std::fs::write(
        &task,
        r#"{"id": "open", "workspace": {"dim": 2, "bounds": [[0, 10], [0, 10]], "obstacles": []},
            "x_init": [1, 1], "goal_center": [3, 1], "goal_radius": 0.5}"#,
    )
    .unwrap();
    let task = task.to_str().unwrap();
    let rrt = ok(&temp(d, &["plan", "--config", cfg, "--planner", "rrt*", "--task", task]));
    assert_eq!(rrt["planner"], "RRT*");
    assert!(rrt["cost"].as_f64().unwrap() >= 1.5);

    let out = temp(d, &["plan", "--config", cfg, "--task", task]);
    if out.status.success() {
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["task_id"], "open");
        assert!(v["phase_reached"].is_string());
    } else {
        assert_eq!(out.status.code(), Some(1));
    }

    let attn = temp(d, &["attn", "--config", cfg, "--task", task]);
    assert!(matches!(attn.status.code(), Some(0 | 1)));
    let csv = std::fs::read_to_string(d.join("attention.csv")).unwrap();
    assert!(csv.starts_with("node_index,category,omega_raw,omega_norm,degenerate_flag"));

    let bench_dir = d.join("bench");
    let ws = d.join("workspaces.json");
    let b = ok(&temp(&bench_dir, &["bench", "--config", cfg, "--model", d.join("model.ckpt").to_str().unwrap(), "--exclude", ws.to_str().unwrap()]));
    assert!(b["runs"].as_u64().unwrap() > 0);
    for f in ["summary.csv", "records.json", "success_rate.svg", "cost_vs_nodes.svg"] {
        assert!(bench_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bad = d.join("bad.toml");
    std::fs::write(&bad, "train_workspaces = \"many\"\n").unwrap();
    assert_eq!(temp(d, &["gen-data", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let task = d.join("t.json");
    std::fs::write(&task, "{}").unwrap();
    let out = temp(d, &["plan", "--planner", "bogus", "--task", task.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(temp(d, &["no-such-command"]).status.code(), Some(2));
    let invalid = d.join("invalid.json");
    std::fs::write(&invalid, r#"{"harvest": {"scene": {"obstacles": [5, 2]}}}"#).unwrap();
    assert_eq!(temp(d, &["gen-data", "--config", invalid.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn unsolvable_plan_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let task = d.join("walled.json");
    std::fs::write(
        &task,
        r#"{"id": "walled", "workspace": {"dim": 2, "bounds": [[0, 10], [0, 10]],
              "obstacles": [{"center": [5, 5], "half_extent": [0.5, 5]}]},
            "x_init": [1, 5], "goal_center": [9, 5], "goal_radius": 0.5}"#,
    )
    .unwrap();
    let cfg = d.join("c.toml");
    std::fs::write(&cfg, "[baseline]\nmax_iters = 300\n").unwrap();
    let out = temp(d, &["plan", "--planner", "rrt*", "--config", cfg.to_str().unwrap(), "--task", task.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["cost"].is_null());
}
