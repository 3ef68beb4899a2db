use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::mpsc;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use stancebench::corpus::{self, InputFormat};
use stancebench::gateway::ExperimentConfig;
use stancebench::promptlab;
use stancebench_cli::service::{self, AppState, SECRET_HEADER};

const QUEUED: usize = 5;

fn bin(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_stancebench"))
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success() || args[0] == "eval",
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct World {
    _dir: tempfile::TempDir,
    root: PathBuf,
    split: PathBuf,
    config: ExperimentConfig,
}

/// A corpus, its split, one parsed run with `QUEUED` open review items and
/// one unparsed run.
fn world() -> World {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let mut csv = String::from("post_id,text,ann1,ann2,ann3\n");
    for i in 0..90 {
        let label = ["in favor", "against", "neutral or unclear"][i % 3];
        csv.push_str(&format!("p{i:03},post {i},{label},{label},{label}\n"));
    }
    let corpus_path = root.join("corpus.csv");
    std::fs::write(&corpus_path, csv).unwrap();

    let rows = corpus::ingest(&corpus_path, InputFormat::Delimited).unwrap();
    let split = corpus::stratified_split(&corpus::filter_unanimous(&rows), 5).unwrap();
    let split_path = root.join("split.jsonl");
    corpus::write_split_manifest(&split, &split_path).unwrap();
    let prompts: Vec<_> = promptlab::build_prompt_set(&split, 5)
        .unwrap()
        .into_iter()
        .take(60)
        .collect();
    let prompts_path = root.join("prompts.jsonl");
    promptlab::write_prompt_set(&prompts, &prompts_path).unwrap();

    let fixture = root.join("replay.jsonl");
    let lines: String = prompts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let raw = if i < QUEUED {
                "I'm sorry, I cannot help."
            } else {
                "Against"
            };
            format!("{}\n", json!({ "prompt_id": p.prompt_id, "raw_text": raw }))
        })
        .collect();
    std::fs::write(&fixture, lines).unwrap();

    let stores = root.join("runs");
    for (name, parse) in [("alpha", true), ("beta", false)] {
        let store = stores.join(name);
        bin(&[
            "run",
            "--prompts",
            s(&prompts_path),
            "--store",
            s(&store),
            "--replay",
            s(&fixture),
            "--model",
            "m",
            "--run-id",
            name,
        ]);
        if parse {
            bin(&["parse", "--store", s(&store)]);
        }
    }
    let config = ExperimentConfig::from_json(
        &json!({
            "corpus_path": corpus_path,
            "seed": 5,
            "models": [],
            "store_root": stores,
        })
        .to_string(),
        "test config",
    )
    .unwrap();
    World {
        _dir: dir,
        root,
        split: split_path,
        config,
    }
}

/// Starts the service on an ephemeral port and returns its base URL.
fn serve(config: ExperimentConfig, secret: Option<&str>) -> String {
    let (tx, rx) = mpsc::channel();
    let secret = secret.map(str::to_string);
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let app = service::router(AppState::new(config, secret), None);
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{}/api", rx.recv().unwrap())
}

fn get(client: &Client, url: &str) -> (StatusCode, Value) {
    let r = client.get(url).send().unwrap();
    (r.status(), r.json().unwrap())
}

fn post(client: &Client, url: &str, body: Value) -> (StatusCode, Value) {
    let r = client.post(url).json(&body).send().unwrap();
    (r.status(), r.json().unwrap())
}

#[test]
fn review_lifecycle() {
    let w = world();
    let base = serve(w.config.clone(), None);
    let c = Client::new();

    let (status, queue) = get(&c, &format!("{base}/review/queue"));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(queue["total"], QUEUED);
    let items = queue["items"].as_array().unwrap();
    assert_eq!(items[0]["run_id"], "alpha");
    assert_eq!(items[0]["suggested"], "apology_or_hallucination");
    assert!(items[0]["test_post_text"].as_str().unwrap().starts_with("post "));
    let first = items[0]["prompt_id"].as_str().unwrap().to_string();

    let (status, page) = get(&c, &format!("{base}/review/queue?offset=3&limit=10"));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(page["items"].as_array().unwrap().len(), QUEUED - 3);
    let (_, filtered) = get(&c, &format!("{base}/review/queue?category=empty_response"));
    assert_eq!(filtered["total"], 0);

    let url = format!("{base}/review/{first}");
    let (status, item) = post(&c, &url, json!({ "label": "neutral or unclear", "reviewer": "ana" }));
    assert_eq!(status, StatusCode::OK, "{item}");
    assert_eq!(item["assigned"], "neutral or unclear");
    assert_eq!(item["final_category"], "apology_or_hallucination");
    let (_, queue) = get(&c, &format!("{base}/review/queue"));
    assert_eq!(queue["total"], QUEUED - 1);
    assert!(queue["items"]
        .as_array()
        .unwrap()
        .iter()
        .all(|i| i["prompt_id"] != first.as_str()));

    // same decision again is accepted, a different one conflicts
    let (status, _) = post(&c, &url, json!({ "label": "neutral or unclear", "reviewer": "ana" }));
    assert_eq!(status, StatusCode::OK);
    let (status, conflict) = post(&c, &url, json!({ "label": "against", "reviewer": "bo" }));
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(conflict["error"], "AlreadyResolved");
    assert_eq!(conflict["item"]["assigned"], "neutral or unclear");

    let (status, _) = post(&c, &url, json!({ "label": "maybe", "reviewer": "ana" }));
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(
        &c,
        &url,
        json!({ "label": "against", "category": "bogus", "reviewer": "ana" }),
    );
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(&c, &url, json!({ "label": "against" }));
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(
        &c,
        &format!("{base}/review/ffffffffffffffff"),
        json!({ "label": "against", "reviewer": "ana" }),
    );
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, prompt) = get(&c, &format!("{base}/prompts/{first}"));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(prompt["run_id"], "alpha");
    assert!(prompt["text"].as_str().unwrap().len() > 100);
}

#[test]
fn reports_and_run_listing() {
    let w = world();
    let base = serve(w.config.clone(), None);
    let c = Client::new();

    let (status, runs) = get(&c, &format!("{base}/runs"));
    assert_eq!(status, StatusCode::OK);
    let runs = runs.as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0]["reviews_open"], QUEUED);
    assert_eq!(runs[1]["reviews_total"], 0);

    let (status, body) = get(&c, &format!("{base}/runs/alpha/report"));
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["prompt_ids"].as_array().unwrap().len(), QUEUED);

    let (status, table) = get(&c, &format!("{base}/runs/beta/report"));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(table["rows"].as_array().unwrap().len(), 0);

    let (status, _) = get(&c, &format!("{base}/runs/nope/report"));
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[test]
fn http_resolutions_reach_the_command_line() {
    let w = world();
    let base = serve(w.config.clone(), None);
    let c = Client::new();
    let store = w.root.join("runs/alpha");
    let eval = || bin(&["eval", "--store", s(&store), "--split", s(&w.split)]);
    assert_eq!(eval().status.code(), Some(1));

    let (_, queue) = get(&c, &format!("{base}/review/queue"));
    for item in queue["items"].as_array().unwrap() {
        let id = item["prompt_id"].as_str().unwrap();
        let (status, _) = post(
            &c,
            &format!("{base}/review/{id}"),
            json!({ "label": "against", "reviewer": "ana" }),
        );
        assert_eq!(status, StatusCode::OK);
    }
    let out = eval();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("sampling,shots,template,weighted_f1"));
    let (status, table) = get(&c, &format!("{base}/runs/alpha/report"));
    assert_eq!(status, StatusCode::OK);
    assert!(!table["rows"].as_array().unwrap().is_empty());
}

#[test]
fn secret_is_required_when_configured() {
    let w = world();
    let base = serve(w.config.clone(), Some("hunter2"));
    let c = Client::new();
    let r = c.get(format!("{base}/runs")).send().unwrap();
    assert_eq!(r.status(), StatusCode::UNAUTHORIZED);
    let r = c
        .get(format!("{base}/runs"))
        .header(SECRET_HEADER, "wrong")
        .send()
        .unwrap();
    assert_eq!(r.status(), StatusCode::UNAUTHORIZED);
    let r = c
        .get(format!("{base}/runs"))
        .header(SECRET_HEADER, "hunter2")
        .send()
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
}

#[test]
fn concurrent_conflicting_resolutions_admit_one() {
    let w = world();
    let base = serve(w.config.clone(), None);
    let c = Client::new();
    let (_, queue) = get(&c, &format!("{base}/review/queue"));
    let id = queue["items"][1]["prompt_id"].as_str().unwrap().to_string();
    let url = format!("{base}/review/{id}");
    let barrier = std::sync::Barrier::new(2);
    let statuses: Vec<StatusCode> = std::thread::scope(|scope| {
        let handles: Vec<_> = ["in favor", "against"]
            .into_iter()
            .map(|label| {
                let (c, url, barrier) = (c.clone(), url.clone(), &barrier);
                scope.spawn(move || {
                    barrier.wait();
                    post(&c, &url, json!({ "label": label, "reviewer": label })).0
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut sorted = statuses.clone();
    sorted.sort();
    assert_eq!(sorted, vec![StatusCode::OK, StatusCode::CONFLICT], "{statuses:?}");

    let reviews = std::fs::read_to_string(w.root.join("runs/alpha/reviews.jsonl")).unwrap();
    let resolves = reviews
        .lines()
        .filter(|l| l.contains("\"resolve\"") && l.contains(&id))
        .count();
    assert_eq!(resolves, 1);
}
