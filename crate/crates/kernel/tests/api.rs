use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use cellguard_kernel::{router, Kernel};
use futures::StreamExt;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const C1: &str = "def custom_agg(col):\n    return len(col) * 2\n\
def aggregate(df, fns):\n    out = {}\n    for k in list(fns):\n        out[k] = fns[k](df[k])\n    return out\n\
df_x = {\"A\": [1, 2], \"B\": [3, 4, 5]}\ndf_y = {\"A\": [6], \"B\": [7, 8]}\n";
const C2: &str = "agg_by_col = {\"A\": lambda col: len(col), \"B\": custom_agg}\n";
const C3: &str = "df_agg_x = aggregate(df_x, agg_by_col)\ndf_agg_y = aggregate(df_y, agg_by_col)\n";

fn app() -> Router {
    router(Arc::new(Kernel::default()))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn new_session(app: &Router) -> String {
    let (st, v) = call(app, Method::POST, "/sessions", None).await;
    assert_eq!(st, StatusCode::CREATED);
    v["session_id"].as_str().unwrap().to_string()
}

async fn put_cell(app: &Router, sid: &str, cid: &str, source: &str) {
    let (st, v) = call(app, Method::PUT, &format!("/sessions/{sid}/cells/{cid}"), Some(json!({ "source": source }))).await;
    assert_eq!(st, StatusCode::OK, "{v}");
}

async fn run(app: &Router, sid: &str, cid: &str, confirm: bool) -> (StatusCode, Value) {
    call(app, Method::POST, &format!("/sessions/{sid}/cells/{cid}/run?confirm={confirm}"), None).await
}

fn ids(v: &Value) -> Vec<&str> {
    v.as_array().unwrap().iter().map(|x| x.as_str().unwrap()).collect()
}

async fn agg_at_counter_4(app: &Router) -> String {
    let sid = new_session(app).await;
    for (cid, src) in [("c1", C1), ("c2", C2), ("c3", C3)] {
        put_cell(app, &sid, cid, src).await;
        let (st, v) = run(app, &sid, cid, false).await;
        assert_eq!(st, StatusCode::OK, "{v}");
    }
    put_cell(app, &sid, "c1", &C1.replace("* 2", "* 3")).await;
    let (st, _) = run(app, &sid, "c1", false).await;
    assert_eq!(st, StatusCode::OK);
    sid
}

#[tokio::test]
async fn sessions_are_distinct_and_start_empty() {
    let app = app();
    let a = new_session(&app).await;
    let b = new_session(&app).await;
    assert_ne!(a, b);
    let (st, report) = call(&app, Method::GET, &format!("/sessions/{a}/highlights"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(
        report,
        json!({"counter": 0, "stale": [], "fresh": [], "refresher": [], "new_fresh": [], "new_refresher": []})
    );
    let (_, info) = call(&app, Method::GET, &format!("/sessions/{a}"), None).await;
    assert_eq!(info["counter"], 0);
}

#[tokio::test]
async fn agg_gate_and_confirm() {
    let app = app();
    let sid = agg_at_counter_4(&app).await;

    let (_, report) = call(&app, Method::GET, &format!("/sessions/{sid}/highlights"), None).await;
    assert_eq!(report["counter"], 4);
    assert_eq!(ids(&report["stale"]), ["c3"]);
    assert_eq!(ids(&report["refresher"]), ["c2"]);

    let (_, before) = call(&app, Method::GET, &format!("/sessions/{sid}/lineage"), None).await;
    let (st, err) = run(&app, &sid, "c3", false).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(err["error"], "stale_warning");
    assert_eq!(ids(&err["stale_symbols"]), ["agg_by_col"]);
    assert!(err["detail"].as_str().unwrap().contains("agg_by_col"));
    let (_, after) = call(&app, Method::GET, &format!("/sessions/{sid}/lineage"), None).await;
    assert_eq!(before, after);
    let (_, info) = call(&app, Method::GET, &format!("/sessions/{sid}"), None).await;
    assert_eq!(info["counter"], 4);

    let (st, resp) = run(&app, &sid, "c3", true).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(resp["result"]["counter"], 5);
    assert_eq!(resp["result"]["status"], "ok");
    assert_eq!(resp["report"]["counter"], 5);
    let (_, audit) = call(&app, Method::GET, &format!("/sessions/{sid}/audit"), None).await;
    assert_eq!(audit.as_array().unwrap().len(), 1);
    assert_eq!(audit[0]["cell_id"], "c3");
}

#[tokio::test]
async fn non_stale_cell_runs_without_confirmation() {
    let app = app();
    let sid = agg_at_counter_4(&app).await;
    let (st, resp) = run(&app, &sid, "c2", false).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(resp["result"]["counter"], 5);
    assert!(resp["report"]["stale"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn cell_edits_and_positions() {
    let app = app();
    let sid = new_session(&app).await;
    put_cell(&app, &sid, "a", "x = 1").await;
    put_cell(&app, &sid, "b", "y = 2").await;
    let (st, v) =
        call(&app, Method::POST, &format!("/sessions/{sid}/cells"), Some(json!({"source": "z = 3", "position": 0}))).await;
    assert_eq!(st, StatusCode::CREATED);
    let minted = v["cell_id"].as_str().unwrap().to_string();
    put_cell(&app, &sid, "a", "x = 10").await;
    let (_, info) = call(&app, Method::GET, &format!("/sessions/{sid}"), None).await;
    let order: Vec<&str> = info["cells"].as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap()).collect();
    assert_eq!(order, [minted.as_str(), "a", "b"]);
    assert_eq!(info["cells"][1]["source"], "x = 10");
    assert_eq!(info["counter"], 0);

    let (st, _) = call(&app, Method::DELETE, &format!("/sessions/{sid}/cells/a"), None).await;
    assert_eq!(st, StatusCode::NO_CONTENT);
    let (st, err) = call(&app, Method::DELETE, &format!("/sessions/{sid}/cells/a"), None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "unknown_cell");
}

#[tokio::test]
async fn error_envelopes() {
    let app = app();
    let (st, err) = call(&app, Method::GET, "/sessions/nope/highlights", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "unknown_session");
    assert!(err["detail"].is_string());

    let (st, err) = call(&app, Method::PUT, "/sessions/nope/cells/c1", Some(json!({"source": "x = 1"}))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "unknown_session");

    let sid = new_session(&app).await;
    let (st, err) = run(&app, &sid, "missing", false).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "unknown_cell");

    let (st, err) = call(&app, Method::PUT, &format!("/sessions/{sid}/cells/c1"), Some(json!({"text": 1}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "bad_request");

    put_cell(&app, &sid, "c1", "x = 1").await;
    let (st, err) = call(&app, Method::POST, &format!("/sessions/{sid}/cells/c1/run?confirm=maybe"), None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "bad_request");

    let (st, err) = call(&app, Method::GET, "/elsewhere", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "not_found");
}

#[tokio::test]
async fn runtime_errors_pass_through() {
    let app = app();
    let sid = new_session(&app).await;
    put_cell(&app, &sid, "c1", "x = 1\nfail()\ny = 2").await;
    let (st, resp) = run(&app, &sid, "c1", false).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(resp["result"]["status"], "error");
    assert_eq!(resp["result"]["statement_index"], 2);
    assert_eq!(resp["report"]["counter"], 1);
}

#[tokio::test]
async fn deleted_sessions_are_gone() {
    let app = app();
    let sid = new_session(&app).await;
    let (st, _) = call(&app, Method::DELETE, &format!("/sessions/{sid}"), None).await;
    assert_eq!(st, StatusCode::NO_CONTENT);
    let (st, _) = call(&app, Method::GET, &format!("/sessions/{sid}"), None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn websocket_pushes_runs_in_counter_order() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = app();
    let served = app.clone();
    tokio::spawn(async move { axum::serve(listener, served).await.unwrap() });

    let sid = new_session(&app).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{sid}/ws")).await.unwrap();
    let next = |m: Option<Result<tokio_tungstenite::tungstenite::Message, _>>| -> Value {
        serde_json::from_str(m.unwrap().unwrap().to_text().unwrap()).unwrap()
    };
    let snap = next(ws.next().await);
    assert_eq!(snap["type"], "snapshot");
    assert_eq!(snap["report"]["counter"], 0);

    // The served copy shares the kernel with `app`.
    for (cid, src) in [("c1", "a = 4"), ("c2", "b = a"), ("c3", "c = a + b")] {
        put_cell(&app, &sid, cid, src).await;
        let (st, _) = run(&app, &sid, cid, false).await;
        assert_eq!(st, StatusCode::OK);
    }
    let mut last = 0;
    for _ in 0..3 {
        let push = next(ws.next().await);
        assert_eq!(push["type"], "run");
        let c = push["result"]["counter"].as_u64().unwrap();
        assert_eq!(push["report"]["counter"].as_u64().unwrap(), c);
        assert!(c > last);
        last = c;
    }
    assert_eq!(last, 3);
}
