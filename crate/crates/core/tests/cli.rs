use std::fs;
use std::path::Path;
use std::process::Command;

use dynsyn::cli::{Provenance, CONFIG_FILE, PROVENANCE_FILE};
use dynsyn::digest::sha256_file;
use dynsyn::sac::read_curve;

fn dynsyn(args: &[&str], out_root: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dynsyn"))
        .args(args)
        .env("DYNSYN_OUT", out_root)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SMALL: &str = r#"
seeds = [0, 1]

[model]
builtin = "arm2x6"

[perturbation]
total_steps = 5000

[grouping]
segments = 20

[convergence]
sample_sizes = [1000, 2000, 5000]

[task]
episode_length = 20
target_low = [0.5, 0.1]
target_high = [0.58, 0.2]

[sac]
batch_size = 16
hidden = [8]
n_envs = 2
total_steps = 400
eval_interval = 200
eval_episodes = 2

[eval]
episodes = 3
traces = 2
"#;

fn provenance(dir: &Path) -> Provenance {
    assert!(dir.join(CONFIG_FILE).exists());
    serde_json::from_str(&fs::read_to_string(dir.join(PROVENANCE_FILE)).unwrap()).unwrap()
}

#[test]
fn extract_train_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = write(root, "run.toml", SMALL);

    let o = dynsyn(&["extract", "--config", &cfg], root);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ex = root.join("extract");
    for f in ["grouping.json", "probability.csv", "correlation_mean.csv", "trajectory_seed1.bin", "trajectory_seed1.bin.json", "grouping_seed0.json"] {
        assert!(ex.join(f).exists(), "{f}");
    }
    let p = provenance(&ex);
    assert_eq!(p.command, "extract");
    assert_eq!(p.seeds, vec![0, 1]);
    assert_eq!(p.version, env!("CARGO_PKG_VERSION"));

    let grouping = ex.join("grouping.json");
    let cfg2 = write(
        root,
        "train.toml",
        &format!("{SMALL}\n[train]\nactor = \"dynsyn\"\ngrouping = \"{}\"\n", grouping.display()),
    );
    let out = root.join("t");
    let o = dynsyn(&["train", "--config", &cfg2, "--out", out.to_str().unwrap(), "--jobs", "1"], root);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = provenance(&out);
    assert_eq!(p.inputs[&grouping.display().to_string()], sha256_file(&grouping).unwrap());
    let agg = read_curve(&out.join("curve.csv")).unwrap();
    assert_eq!(agg.iter().map(|r| r.step).collect::<Vec<_>>(), vec![200, 400]);
    let seed_curves: Vec<_> = [0, 1].iter().map(|s| read_curve(&out.join(format!("seed_{s}/curve.csv"))).unwrap()).collect();
    let mean = (seed_curves[0][1].mean_return + seed_curves[1][1].mean_return) / 2.0;
    assert!((agg[1].mean_return - mean).abs() < 1e-12);
    assert_eq!(provenance(&out.join("seed_1")).seeds, vec![1]);

    let ckpt = out.join("seed_0/policy.ckpt");
    let eval_out = root.join("e");
    let o = dynsyn(
        &["eval", "--config", &cfg2, "--checkpoint", ckpt.to_str().unwrap(), "--out", eval_out.to_str().unwrap()],
        root,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(eval_out.join("trace_1.csv").exists());
    let summary = fs::read_to_string(eval_out.join("summary.json")).unwrap();
    // same seed and deterministic policy: identical summary on a second run
    let eval2 = root.join("e2");
    dynsyn(
        &["eval", "--config", &cfg2, "--checkpoint", ckpt.to_str().unwrap(), "--out", eval2.to_str().unwrap()],
        root,
    );
    assert_eq!(
        fs::read_to_string(eval2.join("returns.csv")).unwrap(),
        fs::read_to_string(eval_out.join("returns.csv")).unwrap()
    );
    assert!(summary.contains("\"episodes\": 3"));

    // resume to a longer horizon keeps counting from the checkpoint
    let cfg3 = write(
        root,
        "resume.toml",
        &format!(
            "{}\n[train]\nactor = \"dynsyn\"\nresume = true\ngrouping = \"{}\"\n",
            SMALL.replace("total_steps = 400", "total_steps = 800"),
            grouping.display()
        ),
    );
    let o = dynsyn(&["train", "--config", &cfg3, "--seed", "0", "--out", out.to_str().unwrap()], root);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let steps: Vec<u64> = read_curve(&out.join("seed_0/curve.csv")).unwrap().iter().map(|r| r.step).collect();
    assert_eq!(steps, vec![200, 400, 600, 800]);
}

#[test]
fn convergence_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", &format!("{SMALL}\n"));
    let o = dynsyn(&["convergence", "--config", &cfg, "--seed", "3"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(tmp.path().join("convergence/convergence.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "samples,distance");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("5000,0"));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let missing = write(root, "missing.toml", "[model]\npath = \"nope.toml\"\n");
    assert_eq!(dynsyn(&["extract", "--config", &missing], root).status.code(), Some(2));

    let no_grouping = write(root, "ng.toml", SMALL);
    let o = dynsyn(&["train", "--config", &no_grouping, "--actor", "dynsyn"], root);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grouping"));

    let unknown = write(root, "u.toml", &format!("{SMALL}\n[extra]\nx = 1\n"));
    assert_eq!(dynsyn(&["extract", "--config", &unknown], root).status.code(), Some(2));
    assert_eq!(dynsyn(&["eval", "--config", &no_grouping, "--episodes", "0", "--checkpoint", "x"], root).status.code(), Some(2));
    assert_eq!(dynsyn(&["frobnicate"], root).status.code(), Some(2));
    assert_eq!(dynsyn(&["train", "--config", &no_grouping, "--actor", "wide"], root).status.code(), Some(2));
}

#[test]
fn inspect_and_flat_training_under_env_root() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = write(root, "run.toml", SMALL);
    let o = dynsyn(&["inspect", "--config", &cfg], root);
    assert!(o.status.success());
    assert!(root.join("inspect/model.toml").exists());

    let o = dynsyn(&["train", "--config", &cfg, "--actor", "flat", "--seed", "5"], root);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(root.join("train/seed_5/policy.ckpt").exists());
    assert!(root.join("train/seed_5").join(PROVENANCE_FILE).exists());
}
