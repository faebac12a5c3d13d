use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tabal_core::acquisition::AcquisitionKind;
use tabal_core::corpus::{corpus_to_records, generate_corpus, split, GeneratorConfig, TableRecord};
use tabal_core::experiment::{run_simulated, ExperimentConfig, ExperimentData};
use tabal_core::talm::TrainConfig;
use tabal_service::{router, AppState};
use tower::ServiceExt;

fn config() -> ExperimentConfig {
    ExperimentConfig {
        seed_size: 20,
        batch_budget: 5,
        n_iterations: 2,
        n_repeats: 1,
        train: TrainConfig {
            max_epochs: 3,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn records() -> (Vec<TableRecord>, Vec<TableRecord>) {
    let full = generate_corpus(&GeneratorConfig {
        n_tables: 12,
        ..Default::default()
    })
    .unwrap();
    let (train, test) = split(&full, 0.34, 0).unwrap();
    (corpus_to_records(&train), corpus_to_records(&test))
}

fn unlabeled(mut records: Vec<TableRecord>) -> Vec<TableRecord> {
    for r in &mut records {
        r.annotations = None;
    }
    records
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

fn create_body(train: &[TableRecord], test: &[TableRecord], kind: &str, oracle: &str) -> Value {
    json!({
        "train": train,
        "test": test,
        "config": config(),
        "acquisition": kind,
        "repeat": 0,
        "oracle": oracle,
    })
}

async fn create(app: &Router, body: Value) -> String {
    let (status, v) = call(app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

fn label_uri(id: &str, item: &Value) -> String {
    let row = match &item["row"] {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    format!("/sessions/{id}/cells/{}/{row}/{}/labels", item["table_id"].as_str().unwrap(), item["col"])
}

#[tokio::test]
async fn healthz_answers() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::open(dir.path()).unwrap());
    let (status, v) = call(&app, "GET", "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
}

#[tokio::test]
async fn simulated_session_matches_the_headless_run() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::open(dir.path()).unwrap());
    let (train, test) = records();
    let id = create(&app, create_body(&train, &test, "MNLP+", "simulated")).await;

    let (status, curve) = call(&app, "GET", &format!("/sessions/{id}/curve"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(curve["summary"].as_array().unwrap().len(), 1);
    assert!(curve["summary"][0]["f1_mean"].is_number());

    loop {
        let (status, batch) = call(&app, "GET", &format!("/sessions/{id}/batch"), None).await;
        if status == StatusCode::CONFLICT {
            break;
        }
        assert_eq!(status, StatusCode::OK, "{batch}");
        assert_eq!(batch["labeled"], batch["total"]);
        let tables: std::collections::BTreeSet<_> =
            batch["items"].as_array().unwrap().iter().map(|i| i["table_id"].as_str().unwrap()).collect();
        assert_eq!(tables.len(), 5, "MNLP+ spreads a batch over distinct tables");
        let (status, record) = call(&app, "POST", &format!("/sessions/{id}/train?wait=true"), None).await;
        assert_eq!(status, StatusCode::OK, "{record}");
    }

    let (_, curve) = call(&app, "GET", &format!("/sessions/{id}/curve"), None).await;
    let train_c = tabal_core::corpus::corpus_from_records(train).unwrap();
    let test_c = tabal_core::corpus::corpus_from_records(test).unwrap();
    let cfg = config();
    let data = ExperimentData::new(train_c, test_c, cfg.validation_fraction, cfg.rng_seed).unwrap();
    let headless = run_simulated(&cfg, AcquisitionKind::MnlpPlus, 0, &data).unwrap();
    assert_eq!(curve, serde_json::to_value(headless.curve().unwrap()).unwrap());
}

#[tokio::test]
async fn human_session_labels_and_trains() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::open(dir.path()).unwrap());
    let (train, test) = records();
    let id = create(&app, create_body(&unlabeled(train), &test, "MNLP", "human")).await;

    let (status, summary) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(summary["status"], "batch_open");
    assert_eq!(summary["iterations"], 0);

    let (_, batch) = call(&app, "GET", &format!("/sessions/{id}/batch"), None).await;
    let items = batch["items"].as_array().unwrap().clone();
    assert_eq!(items.len(), 20);
    assert!(batch["seed"].as_bool().unwrap());
    let first = &items[0];
    let n = first["tokens"].as_array().unwrap().len();
    assert!(n > 0);
    assert_eq!(first["suggestion"], json!([]), "no model yet");

    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/train"), None).await;
    assert_eq!(status, StatusCode::CONFLICT, "{v}");

    let bad = json!({"spans": [{"start": 0, "end": n + 1, "label": "TAG"}]});
    let (status, v) = call(&app, "POST", &label_uri(&id, first), Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains(&format!("{n} tokens")), "{v}");

    let overlap = json!({"spans": [{"start": 0, "end": 1, "label": "TAG"}, {"start": 0, "end": 1, "label": "EQ"}]});
    let (status, _) = call(&app, "POST", &label_uri(&id, first), Some(overlap)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, v) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/cells/nope/0/0/labels"),
        Some(json!({"spans": []})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT, "{v}");

    for item in &items[..12] {
        let body = json!({"spans": [{"start": 0, "end": 1, "label": "QUANT"}]});
        let (status, v) = call(&app, "POST", &label_uri(&id, item), Some(body)).await;
        assert_eq!(status, StatusCode::OK, "{v}");
    }
    // Resubmission overwrites.
    let body = json!({"spans": []});
    let (_, ack) = call(&app, "POST", &label_uri(&id, first), Some(body)).await;
    assert_eq!(ack["labeled"], 12);

    let (status, record) = call(&app, "POST", &format!("/sessions/{id}/train?force=true&wait=true"), None).await;
    assert_eq!(status, StatusCode::OK, "{record}");
    assert_eq!(record["labels"], 12);
    assert_eq!(record["iteration"], 0);

    let (_, summary) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(summary["status"], "idle");
    assert_eq!(summary["labels"], 12);

    let (status, batch) = call(&app, "GET", &format!("/sessions/{id}/batch"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(!batch["seed"].as_bool().unwrap());
    assert_eq!(batch["items"].as_array().unwrap().len(), 5);
    // A second request returns the same open batch.
    let (_, again) = call(&app, "GET", &format!("/sessions/{id}/batch"), None).await;
    assert_eq!(batch, again);
    for item in batch["items"].as_array().unwrap() {
        assert!(item["score"].is_number());
        assert!(item["table"]["rows"].as_array().unwrap().len() >= 1);
        let tokens = item["tokens"].as_array().unwrap().len();
        for s in item["suggestion"].as_array().unwrap() {
            assert!(s["end"].as_u64().unwrap() as usize <= tokens);
        }
    }
}

#[tokio::test]
async fn unknown_sessions_and_bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::open(dir.path()).unwrap());
    let (status, _) = call(&app, "GET", "/sessions/missing/curve", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/sessions/missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (train, test) = records();
    let (status, v) = call(&app, "POST", "/sessions", Some(create_body(&unlabeled(train.clone()), &test, "BADGE", "simulated"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");

    let mut body = create_body(&train, &test, "BADGE", "simulated");
    body["config"]["seed_size"] = json!(0);
    let (status, _) = call(&app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn background_training_rejects_a_second_call() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::open(dir.path()).unwrap());
    let (train, test) = records();
    let id = create(&app, create_body(&train, &test, "Rand", "simulated")).await;
    let (status, _) = call(&app, "GET", &format!("/sessions/{id}/batch"), None).await;
    assert_eq!(status, StatusCode::OK);

    let (status, summary) = call(&app, "POST", &format!("/sessions/{id}/train"), None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(summary["status"], "training");
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/train"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, "GET", &format!("/sessions/{id}/batch"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let summary = loop {
        let (_, s) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
        if s["status"] != "training" {
            break s;
        }
        tokio::time::sleep(std::time::Duration::from_millis(20)).await;
    };
    assert_eq!(summary["status"], "idle");
    assert_eq!(summary["iterations"], 2);
    assert_eq!(summary["labels"], 25);
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = records();
    let (id, batch, curve) = {
        let app = router(AppState::open(dir.path()).unwrap());
        let id = create(&app, create_body(&train, &test, "BADGE", "simulated")).await;
        let (_, batch) = call(&app, "GET", &format!("/sessions/{id}/batch"), None).await;
        let (_, curve) = call(&app, "GET", &format!("/sessions/{id}/curve"), None).await;
        (id, batch, curve)
    };
    let app = router(AppState::open(dir.path()).unwrap());
    let (status, again) = call(&app, "GET", &format!("/sessions/{id}/batch"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(batch, again, "pending batch and model suggestions reload unchanged");
    let (_, curve_again) = call(&app, "GET", &format!("/sessions/{id}/curve"), None).await;
    assert_eq!(curve, curve_again);
    let models: Vec<_> = std::fs::read_dir(dir.path().join(&id))
        .unwrap()
        .flatten()
        .filter(|e| e.file_name().to_string_lossy().starts_with("model-"))
        .collect();
    assert_eq!(models.len(), 1);
}
