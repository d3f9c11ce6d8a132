use std::path::Path;
use std::process::Command;

fn mfg(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mfg")).args(args).current_dir(cwd).output().unwrap();
    let text = format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    (out.status.code().unwrap(), text)
}

fn example2_config(dir: &Path, output: &str) -> String {
    let config = serde_json::json!({
        "model": {"name": "example2", "params": {"x0": 0.5}},
        "grid": {"horizon": 0.5, "n_time": 20, "state_box": [[-1.0, 2.0]], "n_state": [121], "actions": [[-1.0], [1.0]]},
        "solver": {"damping": 1.0, "tol": 1e-12, "n_restarts": 3, "seed": 7},
        "output_dir": output
    });
    let path = dir.join(format!("{output}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path.display().to_string()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_verify_and_reject_corrupted_certificate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let config = example2_config(dir, "run");

    let (code, text) = mfg(&["solve", "-c", &config], dir);
    assert_eq!(code, 0, "{text}");
    let candidates = read_json(&dir.join("run/candidates.json"));
    let list = candidates["candidates"].as_array().unwrap();
    assert_eq!(list.len(), 1);
    assert!((list[0]["primal_value"].as_f64().unwrap() + 0.5).abs() < 1e-9);
    assert_eq!(list[0]["report"]["verdict"], true);

    let (code, text) = mfg(&["verify", "-c", &config], dir);
    assert_eq!(code, 0, "{text}");

    // raise the terminal row of psi by one
    let psi_path = dir.join("run/candidate_0/psi.csv");
    let psi = std::fs::read_to_string(&psi_path).unwrap();
    let corrupted: Vec<String> = psi
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if i > 0 && f[0] == "20" {
                let v: f64 = f[2].parse().unwrap();
                format!("{},{},{}", f[0], f[1], v + 1.0)
            } else {
                line.to_string()
            }
        })
        .collect();
    std::fs::write(&psi_path, corrupted.join("\n") + "\n").unwrap();
    let (code, text) = mfg(&["verify", "-c", &config], dir);
    assert_eq!(code, 1, "{text}");
    let report = read_json(&dir.join("run/report.json"));
    assert!(report["r_terminal_feas"].as_f64().unwrap() > 0.0);
    assert_eq!(report["verdict"], false);
}

#[test]
fn reruns_reproduce_artifacts_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let a = example2_config(dir, "a");
    let b = example2_config(dir, "b");
    assert_eq!(mfg(&["solve", "-c", &a], dir).0, 0);
    assert_eq!(mfg(&["solve", "-c", &b], dir).0, 0);
    for file in ["candidates.json", "candidate_0/flow.csv", "candidate_0/occupation.csv", "candidate_0/psi.csv", "candidate_0/policy.csv"] {
        let x = std::fs::read(dir.join("a").join(file)).unwrap();
        let y = std::fs::read(dir.join("b").join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(mfg(&["solve", "-c", "missing.json"], dir).0, 2);
    std::fs::write(dir.join("bad.json"), r#"{"model": {"name": "example2"}, "grid": {"horizon": 1.0}}"#).unwrap();
    let (code, text) = mfg(&["solve", "-c", "bad.json"], dir);
    assert_eq!(code, 2);
    assert!(text.contains("line 1"), "{text}");
    assert_eq!(mfg(&["no-such-command"], dir).0, 2);
}

#[test]
fn best_response_and_list_models_succeed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let config = example2_config(dir, "br");
    let (code, text) = mfg(&["best-response", "-c", &config], dir);
    assert_eq!(code, 0, "{text}");
    let br = read_json(&dir.join("br/best_response.json"));
    assert!(br["duality_gap"].as_f64().unwrap() < 1e-9);
    let (code, text) = mfg(&["list-models"], dir);
    assert_eq!(code, 0);
    for name in ["example1", "example2", "lq_crowd"] {
        assert!(text.contains(name));
    }
}
