use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stancebench"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "one error line expected: {text}");
    serde_json::from_str(&text).unwrap()
}

/// 40 favor, 40 against, 24 neutral, plus one split-vote row.
fn small_corpus(dir: &Path) -> PathBuf {
    let mut csv = String::from("post_id,text,ann1,ann2,ann3\n");
    let labels = [("in favor", 40), ("against", 40), ("neutral or unclear", 24)];
    let mut i = 0;
    for (label, n) in labels {
        for _ in 0..n {
            csv.push_str(&format!(
                "p{i:03},\"post number {i} on the hpv shot\",{label},{label},{label}\n"
            ));
            i += 1;
        }
    }
    csv.push_str("x001,split vote,in favor,against,in favor\n");
    let path = dir.join("corpus.csv");
    std::fs::write(&path, csv).unwrap();
    path
}

struct Prepared {
    _dir: tempfile::TempDir,
    root: PathBuf,
    split: PathBuf,
    prompts: PathBuf,
}

fn prepare() -> Prepared {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let corpus = small_corpus(&root);
    let split = root.join("split.jsonl");
    let prompts = root.join("prompts.jsonl");
    stdout_json(&bin(&[
        "split",
        "--corpus",
        s(&corpus),
        "--seed",
        "3",
        "--out",
        s(&split),
    ]));
    stdout_json(&bin(&[
        "gen-prompts",
        "--split",
        s(&split),
        "--seed",
        "3",
        "--out",
        s(&prompts),
    ]));
    Prepared {
        _dir: dir,
        root,
        split,
        prompts,
    }
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    let out = bin(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "UsageError");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = bin(&["split", "--corpus", "x.csv", "--seed", "1", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "UsageError");
}

#[test]
fn help_goes_to_stdout() {
    let out = bin(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("gen-prompts"));
}

#[test]
fn missing_corpus_is_a_stage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&[
        "split",
        "--corpus",
        s(&dir.path().join("nope.csv")),
        "--seed",
        "1",
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "Io");
    assert!(err["message"].as_str().unwrap().contains("nope.csv"));
}

#[test]
fn run_without_model_or_replay_leaves_no_store() {
    let p = prepare();
    let store = p.root.join("store");
    let out = bin(&["run", "--prompts", s(&p.prompts), "--store", s(&store)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "UsageError");
    assert!(!store.exists());
}

#[test]
fn replay_conflicts_with_base_url() {
    let out = bin(&[
        "run",
        "--prompts",
        "p",
        "--store",
        "s",
        "--replay",
        "r",
        "--base-url",
        "http://x",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn split_summary_counts_unanimous_rows() {
    let p = prepare();
    let out = bin(&[
        "split",
        "--corpus",
        s(&small_corpus(&p.root)),
        "--seed",
        "3",
        "--out",
        s(&p.split),
    ]);
    let summary = stdout_json(&out);
    assert_eq!(summary["rows"], 105);
    assert_eq!(summary["unanimous"], 104);
    assert_eq!(summary["test"], 52);
}

#[test]
fn gen_prompts_is_byte_identical_across_runs() {
    let p = prepare();
    let again = p.root.join("again.jsonl");
    stdout_json(&bin(&[
        "gen-prompts",
        "--split",
        s(&p.split),
        "--seed",
        "3",
        "--out",
        s(&again),
    ]));
    assert_eq!(std::fs::read(&p.prompts).unwrap(), std::fs::read(&again).unwrap());
    assert!(p.root.join("prompts.templates.json").exists());
}

#[test]
fn gen_prompts_depends_on_seed() {
    let p = prepare();
    let other = p.root.join("other.jsonl");
    stdout_json(&bin(&[
        "gen-prompts",
        "--split",
        s(&p.split),
        "--seed",
        "4",
        "--out",
        s(&other),
    ]));
    assert_ne!(std::fs::read(&p.prompts).unwrap(), std::fs::read(&other).unwrap());
}

#[test]
fn budget_partitions_the_prompt_set() {
    let p = prepare();
    let kept = p.root.join("kept.jsonl");
    let excl = p.root.join("excluded.jsonl");
    let summary = stdout_json(&bin(&[
        "budget",
        "--prompts",
        s(&p.prompts),
        "--model",
        "flan-ul2",
        "--out",
        s(&kept),
        "--exclusions",
        s(&excl),
    ]));
    let total = std::fs::read_to_string(&p.prompts).unwrap().lines().count() as u64;
    let k = std::fs::read_to_string(&kept).unwrap().lines().count() as u64;
    let x = std::fs::read_to_string(&excl).unwrap().lines().count() as u64;
    assert_eq!(summary["kept"], k);
    assert_eq!(summary["excluded"], x);
    assert_eq!(k + x, total);
}

#[test]
fn budget_rejects_unknown_model() {
    let p = prepare();
    let out = bin(&[
        "budget",
        "--prompts",
        s(&p.prompts),
        "--model",
        "gpt-9",
        "--out",
        "k",
        "--exclusions",
        "x",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("flan-ul2"));
}

fn test_posts(split: &Path) -> Vec<(String, String, String)> {
    std::fs::read_to_string(split)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .map(|v| {
            (
                v["post_id"].as_str().unwrap().to_string(),
                v["gold"].as_str().unwrap().to_string(),
                v["side"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

fn write_predictions(path: &Path, rows: &[(String, String)]) {
    let text: String = rows
        .iter()
        .map(|(id, label)| format!("{}\n", serde_json::json!({ "post_id": id, "predicted": label })))
        .collect();
    std::fs::write(path, text).unwrap();
}

#[test]
fn import_predictions_renders_four_decimals() {
    let p = prepare();
    let posts = test_posts(&p.split);
    let mut rows: Vec<(String, String)> = posts
        .iter()
        .filter(|r| r.2 == "test")
        .map(|(id, gold, _)| (id.clone(), gold.clone()))
        .collect();
    // one neutral post predicted against
    let i = rows.iter().position(|r| r.1 == "neutral or unclear").unwrap();
    rows[i].1 = "against".into();
    let preds = p.root.join("preds.jsonl");
    write_predictions(&preds, &rows);
    let out = bin(&[
        "import-predictions",
        "--predictions",
        s(&preds),
        "--split",
        s(&p.split),
        "--reference-model",
        "flan-ul2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("micro_f1,0.9808\n"), "{text}");
    assert!(text.contains("n,52\n"));
    assert!(text.contains("# reference flan-ul2: micro_f1"));
}

#[test]
fn import_predictions_rejects_train_posts() {
    let p = prepare();
    let train = test_posts(&p.split).into_iter().find(|r| r.2 == "train").unwrap();
    let preds = p.root.join("preds.jsonl");
    write_predictions(&preds, &[(train.0, "against".into())]);
    let out = bin(&["import-predictions", "--predictions", s(&preds), "--split", s(&p.split)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "NotInTestSplit");
}

#[test]
fn import_predictions_rejects_unknown_labels() {
    let p = prepare();
    let preds = p.root.join("preds.jsonl");
    std::fs::write(&preds, "{\"post_id\":\"p000\",\"predicted\":\"maybe\"}\n").unwrap();
    let out = bin(&["import-predictions", "--predictions", s(&preds), "--split", s(&p.split)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn replay_run_status_parse_and_eval() {
    let p = prepare();
    let fixture = p.root.join("fixture.jsonl");
    let text: String = std::fs::read_to_string(&p.prompts)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .enumerate()
        .map(|(i, v)| {
            let raw = if i % 50 == 0 { "" } else { "In favor" };
            format!(
                "{}\n",
                serde_json::json!({ "prompt_id": v["prompt_id"], "raw_text": raw })
            )
        })
        .collect();
    std::fs::write(&fixture, text).unwrap();
    let store = p.root.join("store");
    let run = stdout_json(&bin(&[
        "run",
        "--prompts",
        s(&p.prompts),
        "--store",
        s(&store),
        "--replay",
        s(&fixture),
        "--model",
        "m",
    ]));
    assert_eq!(run["failed"], 0);
    assert_eq!(run["pending"], 0);
    let status = stdout_json(&bin(&["status", "--store", s(&store)]));
    assert_eq!(status["model"], "m");
    assert_eq!(status["completed"], run["completed"]);

    let parse = stdout_json(&bin(&["parse", "--store", s(&store)]));
    assert!(parse["queued"].as_u64().unwrap() > 0);
    let out = bin(&["eval", "--store", s(&store), "--split", s(&p.split)]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "UnresolvedReview");
    assert_eq!(
        err["prompt_ids"].as_array().unwrap().len() as u64,
        parse["queued"].as_u64().unwrap()
    );

    // a second run without --resume refuses the existing store
    let again = bin(&[
        "run",
        "--prompts",
        s(&p.prompts),
        "--store",
        s(&store),
        "--replay",
        s(&fixture),
    ]);
    assert_eq!(again.status.code(), Some(1));
}

#[test]
fn report_diffs_a_table_against_the_reference() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/replay/expected_table.csv");
    let out = bin(&["report", "--table", s(&fixture), "--model", "flan-ul2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success());
    // no 30-shot reference rows for a 2048-token model
    assert!(
        text.lines()
            .any(|l| l.starts_with("random,30,basic,") && l.contains(",,")),
        "{text}"
    );
}
