use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use bibrecon_core::matching::MatchConfig;
use bibrecon_core::source::{FixtureSource, SourceHandle, SourceRegistry};
use bibrecon_service::{router, RouterOptions, ServiceState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Harness {
    app: Router,
    _dir: tempfile::TempDir,
    session: std::path::PathBuf,
}

fn harness_at(dir: tempfile::TempDir) -> Harness {
    let mut registry = SourceRegistry::new();
    registry.insert(SourceHandle::new(Arc::new(FixtureSource::bundled())));
    let session = dir.path().join("session.json");
    let state = ServiceState::new(registry, MatchConfig::default(), true, &session).unwrap();
    let app = router(Arc::new(state), &RouterOptions::default()).unwrap();
    Harness { app, _dir: dir, session }
}

fn harness() -> Harness {
    harness_at(tempfile::tempdir().unwrap())
}

fn form(pairs: &[(&str, &str)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{k}={}", encode(v)))
        .collect::<Vec<_>>()
        .join("&")
}

fn encode(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

async fn send(app: &Router, request: Request<Body>) -> (StatusCode, String, Vec<u8>) {
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let content_type = response
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_owned())
        .unwrap_or_default();
    let body = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, content_type, body)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, _, body) = send(app, Request::get(uri).header(header::HOST, "test.local").body(Body::empty()).unwrap()).await;
    (status, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

async fn post_form(app: &Router, uri: &str, body: String) -> (StatusCode, Vec<u8>) {
    let request = Request::post(uri)
        .header(header::CONTENT_TYPE, "application/x-www-form-urlencoded")
        .body(Body::from(body))
        .unwrap();
    let (status, _, body) = send(app, request).await;
    (status, body)
}

async fn post_json(app: &Router, uri: &str, body: &str) -> (StatusCode, Value) {
    let request = Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_owned()))
        .unwrap();
    let (status, _, body) = send(app, request).await;
    (status, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

fn salt_queries() -> String {
    json!({"q0": {"query": "The Book of Salt", "properties": [{"pid": "contributor", "v": "Monique Truong"}]}})
        .to_string()
}

#[tokio::test]
async fn manifest_has_required_fields() {
    let h = harness();
    for uri in ["/api/fixture/", "/api/fixture"] {
        let (status, m) = get(&h.app, uri).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(m["versions"], json!(["0.2"]));
        for key in ["name", "identifierSpace", "schemaSpace"] {
            assert!(m[key].as_str().is_some_and(|s| !s.is_empty()), "{key}");
        }
        let types: BTreeSet<&str> = m["defaultTypes"].as_array().unwrap().iter().map(|t| t["id"].as_str().unwrap()).collect();
        assert_eq!(types, BTreeSet::from(["work", "manifestation"]));
        assert_eq!(m["preview"]["url"], "http://test.local/api/fixture/preview?id={{id}}");
        assert!(m["preview"]["width"].as_u64().unwrap() > 0);
        assert!(m["preview"]["height"].as_u64().unwrap() > 0);
        assert!(m["extend"]["propose_properties"]["service_path"].is_string());
        assert_eq!(m["extend"]["property_settings"][0]["name"], "mode");
    }
    let (status, _) = get(&h.app, "/api/loc/").await;
    assert_eq!(status, StatusCode::NOT_FOUND, "loc is not enabled here");
    let (status, _) = get(&h.app, "/api/nosuch/").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn reconcile_salt_via_get_and_post() {
    let h = harness();
    let uri = format!("/api/fixture/reconcile?{}", form(&[("queries", &salt_queries())]));
    let (status, by_get) = get(&h.app, &uri).await;
    assert_eq!(status, StatusCode::OK);
    let top = &by_get["q0"]["result"][0];
    assert_eq!(top["match"], true);
    assert!(top["score"].as_u64().unwrap() >= 80);
    assert!(top["id"].as_str().unwrap().starts_with("fixture:"));
    assert_eq!(top["type"][0]["id"], "work");

    let (status, body) = post_form(&h.app, "/api/fixture/", form(&[("queries", &salt_queries())])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&body).unwrap(), by_get);
}

#[tokio::test]
async fn result_shapes_match_the_protocol() {
    let h = harness();
    let queries = json!({
        "a": {"query": "Salt", "limit": 2},
        "b": {"query": "Gilead", "properties": [{"pid": "contributor", "v": "Marilynne Robinson"}]},
    });
    let (_, body) = post_form(&h.app, "/api/fixture/reconcile", form(&[("queries", &queries.to_string())])).await;
    let response: Value = serde_json::from_slice(&body).unwrap();
    assert!(response["a"]["result"].as_array().unwrap().len() <= 2);
    for (_, list) in response.as_object().unwrap() {
        let results = list["result"].as_array().unwrap();
        let matches = results.iter().filter(|r| r["match"] == true).count();
        assert!(matches <= 1);
        for r in results {
            let obj = r.as_object().unwrap();
            assert_eq!(obj.keys().map(String::as_str).collect::<BTreeSet<_>>(), BTreeSet::from(["id", "name", "type", "score", "match"]));
            assert!(r["score"].as_u64().unwrap() <= 100);
            assert!(r["id"].as_str().unwrap().parse::<bibrecon_core::record::GlobalId>().is_ok());
        }
    }
}

#[tokio::test]
async fn hundred_query_batch_keeps_keys_and_bytes() {
    let h = harness();
    let titles = ["The Book of Salt", "Gilead", "Salt", "Beloved", "zzzz unknown title"];
    let queries: serde_json::Map<String, Value> = (0..100)
        .map(|i| (format!("k{i}"), json!({"query": titles[i % titles.len()]})))
        .collect();
    let body = form(&[("queries", &Value::Object(queries.clone()).to_string())]);
    let started = std::time::Instant::now();
    let (status, first) = post_form(&h.app, "/api/fixture/reconcile", body.clone()).await;
    assert!(started.elapsed().as_secs_f64() < 5.0);
    assert_eq!(status, StatusCode::OK);
    let response: Value = serde_json::from_slice(&first).unwrap();
    let keys: BTreeSet<&String> = response.as_object().unwrap().keys().collect();
    assert_eq!(keys, queries.keys().collect());
    let (_, second) = post_form(&h.app, "/api/fixture/reconcile", body).await;
    assert_eq!(first, second, "identical batches give byte-identical bodies");
}

#[tokio::test]
async fn malformed_batches_are_rejected() {
    let h = harness();
    for raw in ["{", r#"{"a": {"query": ""}}"#, r#"{"a": {"query": "x", "limit": 0}}"#] {
        let (status, _) = post_form(&h.app, "/api/fixture/reconcile", form(&[("queries", raw)])).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{raw}");
    }
    let (status, _) = post_form(&h.app, "/api/fixture/reconcile", String::new()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn preview_fragment() {
    let h = harness();
    let (status, content_type, body) =
        send(&h.app, Request::get("/api/fixture/preview?id=fixture:fx-001").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert!(content_type.starts_with("text/html"));
    let html = String::from_utf8(body).unwrap();
    let record = FixtureSource::bundled().records().iter().find(|r| r.native_id == "fx-001").unwrap().clone();
    assert!(html.contains(&record.title));
    assert!(html.contains(&format!("href=\"{}\"", record.provenance_url)));
    assert!(!html.contains("<script"));

    let (status, _, body) =
        send(&h.app, Request::get("/api/fixture/preview?id=fixture:zz-missing").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("record unavailable"));

    for bad in ["nosuch:zz", "nocolon", "loc:123"] {
        let uri = format!("/api/fixture/preview?id={bad}");
        let (status, _, _) = send(&h.app, Request::get(uri).body(Body::empty()).unwrap()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
    }
}

#[tokio::test]
async fn extend_join_and_explode() {
    let h = harness();
    let record = FixtureSource::bundled().records().iter().find(|r| r.native_id == "fx-001").unwrap().clone();
    let isbns = record.identifiers[&bibrecon_core::record::IdentifierKind::Isbn].clone();
    assert!(isbns.len() >= 2, "fixture record should carry several ISBNs");

    let request = json!({
        "ids": ["fixture:fx-001", "fixture:nope", "loc:1"],
        "properties": [
            {"id": "isbn", "settings": {"mode": "join", "delimiter": "|"}},
            {"id": "isbn", "settings": {"mode": "explode"}},
            {"id": "ht_volume_id"},
        ],
    });
    let (status, body) = post_form(&h.app, "/api/fixture/extend", form(&[("extend", &request.to_string())])).await;
    assert_eq!(status, StatusCode::OK);
    let response: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(response["meta"][0], json!({"id": "isbn", "name": "ISBN"}));
    assert_eq!(response["meta"].as_array().unwrap().len(), 3);
    // A repeated property id keeps the last settings for the row cell.
    let cells = &response["rows"]["fixture:fx-001"]["isbn"];
    let exploded: Vec<&str> = cells.as_array().unwrap().iter().map(|c| c["str"].as_str().unwrap()).collect();
    assert_eq!(exploded, isbns.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(response["rows"]["fixture:nope"]["isbn"], json!([]));
    assert_eq!(response["rows"]["loc:1"]["isbn"], json!([]));

    let join = json!({"ids": ["fixture:fx-001"], "properties": [{"id": "isbn"}]});
    let (_, body) = post_form(&h.app, "/api/fixture/", form(&[("extend", &join.to_string())])).await;
    let response: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(response["rows"]["fixture:fx-001"]["isbn"], json!([{"str": isbns.join("|")}]));

    for bad in [
        json!({"ids": ["fixture:fx-001"], "properties": [{"id": "publisher"}]}),
        json!({"ids": ["fixture:fx-001"], "properties": [{"id": "isbn", "settings": {"mode": "join", "delimiter": ""}}]}),
        json!({"ids": ["fixture:fx-001"], "properties": [{"id": "isbn", "settings": {"mode": "sideways"}}]}),
    ] {
        let (status, _) = post_form(&h.app, "/api/fixture/extend", form(&[("extend", &bad.to_string())])).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
    }
}

#[tokio::test]
async fn propose_lists_extendable_fields() {
    let h = harness();
    let (status, body) = get(&h.app, "/api/fixture/extend/propose?type=work").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["type"], "work");
    let ids: Vec<&str> = body["properties"].as_array().unwrap().iter().map(|p| p["id"].as_str().unwrap()).collect();
    assert!(ids.contains(&"isbn") && ids.contains(&"subjects"));
}

#[tokio::test]
async fn curation_round_trip() {
    let h = harness();
    let (status, _) = get(&h.app, "/curation/clusters/fixture:W-salt").await;
    assert_eq!(status, StatusCode::NOT_FOUND, "nothing reconciled yet");

    post_form(&h.app, "/api/fixture/reconcile", form(&[("queries", &salt_queries())])).await;
    let (status, cluster) = get(&h.app, "/curation/clusters/fixture:W-salt").await;
    assert_eq!(status, StatusCode::OK);
    let members: BTreeSet<&str> = cluster["members"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["candidate"]["native_id"].as_str().unwrap())
        .collect();
    let corpus = FixtureSource::bundled();
    let expected: BTreeSet<&str> = corpus
        .records()
        .iter()
        .filter(|r| r.work_id.as_deref() == Some("W-salt"))
        .map(|r| r.native_id.as_str())
        .collect();
    assert_eq!(members, expected);
    assert!(cluster["members"].as_array().unwrap().iter().all(|m| m["selected"] == true));

    let (status, after) = post_json(&h.app, "/curation/clusters/fixture:W-salt/members/fx-002", r#"{"selected": false}"#).await;
    assert_eq!(status, StatusCode::OK);
    let member = |c: &Value, id: &str| c["members"].as_array().unwrap().iter().find(|m| m["candidate"]["native_id"] == id).unwrap()["selected"].clone();
    assert_eq!(member(&after, "fx-002"), false);
    let (_, reread) = get(&h.app, "/curation/clusters/fixture:W-salt").await;
    assert_eq!(member(&reread, "fx-002"), false);
    assert!(h.session.exists());

    let (status, _) = post_json(&h.app, "/curation/clusters/fixture:W-salt/members/fx-999", r#"{"selected": false}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = post_json(&h.app, "/curation/clusters/nope/members/fx-002", r#"{"selected": false}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    for bad in ["", "{}", r#"{"selected": "no"}"#, r#"{"selected": true, "x": 1}"#] {
        let (status, _) = post_json(&h.app, "/curation/clusters/fixture:W-salt/members/fx-002", bad).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
    }

    let (status, list) = get(&h.app, "/curation/clusters").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list[0]["cluster_id"], "fixture:W-salt");
}

#[tokio::test]
async fn decisions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_owned();
    {
        let h = harness_at(tempfile::TempDir::new_in(&path).unwrap());
        post_form(&h.app, "/api/fixture/reconcile", form(&[("queries", &salt_queries())])).await;
        post_json(&h.app, "/curation/clusters/fixture:W-salt/members/fx-003", r#"{"selected": false}"#).await;
        post_json(&h.app, "/curation/clusters/fixture:W-salt/members/fx-003", r#"{"selected": true}"#).await;
        post_json(&h.app, "/curation/clusters/fixture:W-salt/members/fx-004", r#"{"selected": false}"#).await;

        let mut registry = SourceRegistry::new();
        registry.insert(SourceHandle::new(Arc::new(FixtureSource::bundled())));
        let state = ServiceState::new(registry, MatchConfig::default(), true, &h.session).unwrap();
        let app = router(Arc::new(state), &RouterOptions::default()).unwrap();
        post_form(&app, "/api/fixture/reconcile", form(&[("queries", &salt_queries())])).await;
        let (_, cluster) = get(&app, "/curation/clusters/fixture:W-salt").await;
        let selected: BTreeSet<&str> = cluster["members"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|m| m["selected"] == true)
            .map(|m| m["candidate"]["native_id"].as_str().unwrap())
            .collect();
        assert_eq!(selected, BTreeSet::from(["fx-001", "fx-002", "fx-003"]));
    }
}

#[tokio::test]
async fn records_by_global_id() {
    let h = harness();
    let (status, record) = get(&h.app, "/curation/records/fixture:fx-001").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(record["native_id"], "fx-001");
    assert!(record["identifiers"].is_object());
    let (status, _) = get(&h.app, "/curation/records/fixture:missing").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = get(&h.app, "/curation/records/loc:123").await;
    assert_eq!(status, StatusCode::NOT_FOUND, "source not enabled");
    let (status, _) = get(&h.app, "/curation/records/garbage").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn cors_and_ui() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<!doctype html><title>review</title>").unwrap();
    let mut registry = SourceRegistry::new();
    registry.insert(SourceHandle::new(Arc::new(FixtureSource::bundled())));
    let state = ServiceState::new(registry, MatchConfig::default(), true, dir.path().join("s.json")).unwrap();
    let options = RouterOptions {
        cors_origin: "http://localhost:5173".into(),
        ui_dir: Some(dir.path().to_owned()),
    };
    let app = router(Arc::new(state), &options).unwrap();

    let request = Request::get("/curation/clusters")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    assert_eq!(
        response.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(),
        "http://localhost:5173"
    );

    for uri in ["/ui/", "/ui/clusters/fixture:W-salt"] {
        let (status, _, body) = send(&app, Request::get(uri).body(Body::empty()).unwrap()).await;
        assert_eq!(status, StatusCode::OK, "{uri}");
        assert!(String::from_utf8(body).unwrap().contains("review"));
    }

    let bad = RouterOptions {
        cors_origin: "bad\norigin".into(),
        ui_dir: None,
    };
    let mut registry = SourceRegistry::new();
    registry.insert(SourceHandle::new(Arc::new(FixtureSource::bundled())));
    let state = ServiceState::new(registry, MatchConfig::default(), true, dir.path().join("t.json")).unwrap();
    assert!(router(Arc::new(state), &bad).is_err());
}

/// Fails every query whose title contains "boom"; otherwise defers to the
/// bundled fixture corpus.
struct Flaky(FixtureSource);

#[async_trait::async_trait]
impl bibrecon_core::source::Source for Flaky {
    fn id(&self) -> bibrecon_core::record::SourceId {
        bibrecon_core::record::SourceId::Fixture
    }

    async fn search(
        &self,
        query: &bibrecon_core::record::AdapterQuery,
    ) -> Result<Vec<bibrecon_core::record::CandidateRecord>, bibrecon_core::source::SourceError> {
        if query.title.contains("boom") {
            return Err(bibrecon_core::source::SourceError::Network("connection reset".into()));
        }
        self.0.search(query).await
    }

    async fn fetch_by_id(
        &self,
        native_id: &str,
    ) -> Result<bibrecon_core::record::CandidateRecord, bibrecon_core::source::SourceError> {
        self.0.fetch_by_id(native_id).await
    }
}

#[tokio::test]
async fn failing_query_yields_empty_list() {
    let dir = tempfile::tempdir().unwrap();
    let mut registry = SourceRegistry::new();
    registry.insert(SourceHandle::new(Arc::new(Flaky(FixtureSource::bundled()))));
    let state = ServiceState::new(registry, MatchConfig::default(), true, dir.path().join("s.json")).unwrap();
    let app = router(Arc::new(state), &RouterOptions::default()).unwrap();
    let queries = json!({"ok": {"query": "Gilead"}, "bad": {"query": "boom"}});
    let (status, body) = post_form(&app, "/api/fixture/reconcile", form(&[("queries", &queries.to_string())])).await;
    assert_eq!(status, StatusCode::OK);
    let response: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(response["bad"], json!({"result": []}));
    assert!(!response["ok"]["result"].as_array().unwrap().is_empty());
}
