use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mini() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini")
}

fn prodrel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prodrel"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn empty_corpus_stats_are_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("train.csv"),
        "id,product_uid,product_title,search_term,relevance\n",
    )
    .unwrap();
    std::fs::write(
        d.join("product_descriptions.csv"),
        "product_uid,product_description\n",
    )
    .unwrap();
    std::fs::write(d.join("attributes.csv"), "product_uid,name,value\n").unwrap();
    let out = prodrel(&["stats", "--data-dir", s(d)]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["num_products"], 0);
    assert_eq!(v["fields"]["title"]["total_tokens"], 0);
}

#[test]
fn exit_codes() {
    let data = mini();
    let bad_model = prodrel(&["evaluate", "--data-dir", s(&data), "--model", "svm"]);
    assert_eq!(bad_model.status.code(), Some(1));
    assert_eq!(
        prodrel(&["evaluate", "--no-such-flag"]).status.code(),
        Some(1)
    );
    let missing = prodrel(&[
        "predict",
        "--data-dir",
        s(&data),
        "--model-file",
        "/nonexistent/model.json",
        "--test",
        s(&data.join("test.csv")),
        "--out",
        "/dev/null",
    ]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(!missing.stderr.is_empty());
    assert!(prodrel(&["--help"]).status.success());
}

#[test]
fn train_then_predict_single_row() {
    let data = mini();
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let test = dir.path().join("one.csv");
    let preds = dir.path().join("preds.csv");
    std::fs::write(
        &test,
        "id,product_uid,product_title,search_term\n501,100004,Whirlpool Microwave,microwave\n",
    )
    .unwrap();
    let args = ["--data-dir", s(&data), "--deterministic"];
    let trained = prodrel(
        &[
            &["train", "--model", "boolean6", "--out", s(&model)],
            &args[..],
        ]
        .concat(),
    );
    assert!(
        trained.status.success(),
        "{}",
        String::from_utf8_lossy(&trained.stderr)
    );
    let predicted = prodrel(
        &[
            &[
                "predict",
                "--model-file",
                s(&model),
                "--test",
                s(&test),
                "--out",
                s(&preds),
            ],
            &args[..],
        ]
        .concat(),
    );
    assert!(
        predicted.status.success(),
        "{}",
        String::from_utf8_lossy(&predicted.stderr)
    );
    let text = std::fs::read_to_string(&preds).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "id,relevance");
    assert_eq!(lines.len(), 2);
    let (id, value) = lines[1].split_once(',').unwrap();
    assert_eq!(id, "501");
    let value: f64 = value.parse().unwrap();
    assert!((1.0..=3.0).contains(&value));
}

#[test]
fn default_gamma_grid_has_eleven_reports() {
    let out = prodrel(&[
        "grid-gamma",
        "--data-dir",
        s(&mini()),
        "--model",
        "boolean6",
        "--k",
        "3",
        "--deterministic",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let entries = v["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 11);
    let best = v["best_rmse"].as_f64().unwrap();
    assert!(entries
        .iter()
        .all(|e| e["report"]["rmse"].as_f64().unwrap() >= best));
}
