mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use xwacoda::{router, AppState};
use xwacoda_core::store::load_warehouse;

use common::*;

fn app() -> axum::Router {
    let store = load_warehouse(&mini().join("dw-model.xml")).unwrap();
    router(Arc::new(AppState::new(store)), None)
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let request = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn base_spec() -> Value {
    json!({
        "fact_class": "Suspicious_region",
        "axes": [{"dimension": "Patient", "level": "Patient"}, {"dimension": "Digitizer", "level": "Digitizer"}],
        "measure": "Number_of_regions",
        "aggregate": "sum"
    })
}

#[tokio::test]
async fn model_names_dimensions_and_fact_class() {
    let (status, body) = call(&app(), "GET", "/api/model", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    let dims: Vec<&str> = body["dimensions"].as_array().unwrap().iter().map(|d| d["id"].as_str().unwrap()).collect();
    assert_eq!(dims, vec!["Patient", "Digitizer"]);
    assert_eq!(body["fact_classes"].as_array().unwrap().len(), 1);
    assert_eq!(body["fact_classes"][0]["id"], "Suspicious_region");
    assert_eq!(body["fact_count"], 4);
    assert_eq!(body["member_count"], 7);
}

#[tokio::test]
async fn query_returns_nine() {
    let (status, body) = call(&app(), "POST", "/api/query", AGE_58_REGIONS).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["rows"], json!([[9]]));
    assert_eq!(body["columns"][0]["name"], "sum(Number_of_regions)");
    assert_eq!(body["columns"][0]["kind"], "aggregate");
}

#[tokio::test]
async fn query_errors_have_codes() {
    let app = app();
    let (status, body) = call(&app, "POST", "/api/query", "FROM Suspicious_region SELECT sum(Weight)").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["code"], "VALIDATION_ERROR");
    let (status, body) = call(&app, "POST", "/api/query", "FROM Suspicious_region WHERE SELECT").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "SYNTAX_ERROR");
    assert_eq!(body["error"]["position"], 29);
}

#[tokio::test]
async fn unknown_paths_are_404() {
    let app = app();
    for uri in ["/api/nothing", "/index.html", "/api/cube/op/extra"] {
        let (status, body) = call(&app, "GET", uri, Body::empty()).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["error"]["code"], "NOT_FOUND");
    }
}

#[tokio::test]
async fn cube_and_stateless_operators() {
    let app = app();
    let (status, cube) = call(&app, "POST", "/api/cube", base_spec().to_string()).await;
    assert_eq!(status, StatusCode::OK);
    let values: Vec<i64> = cube["cells"].as_array().unwrap().iter().map(|c| c["value"].as_i64().unwrap()).collect();
    assert_eq!(values, vec![3, 5, 2, 1]);

    let op = |op: Value| json!({"spec": base_spec(), "op": op["op"], "dimension": op["dimension"], "member": op["member"]});
    let (status, up) = call(&app, "POST", "/api/cube/op", op(json!({"op": "roll_up", "dimension": "Patient"})).to_string()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(up["axes"][0]["level"], "AgeGroup");
    assert_eq!(up["axes"][0]["members"], json!(["g50", "g60"]));

    // the returned cube is itself a spec for the next request
    let back = json!({"spec": up, "op": "drill_down", "dimension": "Patient"});
    let (status, down) = call(&app, "POST", "/api/cube/op", back.to_string()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(down, cube);

    let (_, sliced) = call(&app, "POST", "/api/cube/op", op(json!({"op": "slice", "dimension": "Digitizer", "member": "d1"})).to_string()).await;
    assert_eq!(sliced["axes"].as_array().unwrap().len(), 1);
    let dice = json!({"spec": base_spec(), "op": "dice", "members": {"Patient": ["p1"]}});
    let (_, diced) = call(&app, "POST", "/api/cube/op", dice.to_string()).await;
    assert_eq!(diced["cells"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn cube_errors() {
    let app = app();
    let (status, body) = call(&app, "POST", "/api/cube", "{not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "BAD_REQUEST");
    let (status, body) = call(&app, "POST", "/api/cube", r#"{"fact_class": 3}"#).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["code"], "VALIDATION_ERROR");
    let coarsest = json!({"spec": base_spec(), "op": "drill_down", "dimension": "Patient"});
    let (status, body) = call(&app, "POST", "/api/cube/op", coarsest.to_string()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["code"], "ALREADY_FINEST");
    let missing = json!({"spec": base_spec(), "op": "slice", "dimension": "Digitizer"});
    let (status, _) = call(&app, "POST", "/api/cube/op", missing.to_string()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn http_and_cli_answers_agree() {
    let app = app();
    for q in [
        AGE_58_REGIONS,
        "FROM Suspicious_region GROUP BY Patient.AgeGroup SELECT sum(Number_of_regions), avg(Region_length)",
        "FROM Suspicious_region GROUP BY Digitizer.Digitizer SELECT count(*), min(Region_length), max(Number_of_regions)",
    ] {
        let (_, body) = call(&app, "POST", "/api/query", q).await;
        let out = xwacoda(&["query", mini().to_str().unwrap(), "--query", q, "--format", "delimited"]);
        let cli: Vec<Vec<String>> = stdout(&out).lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
        let http: Vec<Vec<String>> = body["rows"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| {
                r.as_array()
                    .unwrap()
                    .iter()
                    .map(|c| match c {
                        Value::String(s) => s.clone(),
                        Value::Null => String::new(),
                        Value::Number(n) => n.as_f64().unwrap().to_string(),
                        other => other.to_string(),
                    })
                    .collect()
            })
            .collect();
        assert_eq!(cli, http, "{q}");
    }
}

#[tokio::test]
async fn requests_never_touch_warehouse_files() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&mini(), dir.path());
    let before = snapshot(dir.path());
    let log = dir.path().join("../requests.log");
    let store = load_warehouse(&dir.path().join("dw-model.xml")).unwrap();
    let state = AppState::new(store).with_request_log(std::fs::File::create(&log).unwrap());
    let app = router(Arc::new(state), None);
    let mut handles = Vec::new();
    for i in 0..200 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            match i % 4 {
                0 => call(&app, "POST", "/api/query", AGE_58_REGIONS).await.0,
                1 => call(&app, "GET", "/api/model", Body::empty()).await.0,
                2 => call(&app, "POST", "/api/cube", base_spec().to_string()).await.0,
                _ => call(&app, "DELETE", "/api/model", Body::empty()).await.0,
            }
        }));
    }
    for h in handles {
        h.await.unwrap();
    }
    assert_eq!(snapshot(dir.path()), before);
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 200);
}

#[tokio::test]
async fn static_assets_are_served_under_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>explorer</h1>").unwrap();
    let store = load_warehouse(&mini().join("dw-model.xml")).unwrap();
    let app = router(Arc::new(AppState::new(store)), Some(dir.path().to_path_buf()));
    let response = app
        .clone()
        .oneshot(Request::builder().uri("/index.html").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    let (status, _) = call(&app, "GET", "/api/unknown", Body::empty()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
