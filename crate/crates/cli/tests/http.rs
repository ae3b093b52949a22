use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use scenedeck::synth::{generate_synthetic, SynthSpec};
use scenedeck::TextFallback;
use scenedeck_cli::api::Snapshot;
use scenedeck_cli::service::{router, AppState, SCHEMA};

const SAMPLE: &str = "INT. BEDROOM - NIGHT\n\nHANNA\nYou kept the letters.\n\nVIKTOR\n(quietly)\nEvery one.\n\nHANNA\nWhy?";

struct Fixture {
    _dir: tempfile::TempDir,
    app: Router,
    state: AppState,
}

fn fixture(vocab: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        seed: 17,
        n_movies: 4,
        scenes_per_movie: 15,
        location_vocab_size: vocab,
        embedding_dim: 64,
        ..Default::default()
    };
    generate_synthetic(&spec, dir.path()).unwrap();
    let (snapshot, report) = Snapshot::load(dir.path(), TextFallback::Hash, true).unwrap();
    assert!(report.missing_images.is_empty());
    let state = AppState::loaded(snapshot);
    Fixture {
        app: router(state.clone(), None),
        state,
        _dir: dir,
    }
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>, axum::http::HeaderMap) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes, headers)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, bytes, _) = send(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn post(app: &Router, body: Value) -> (StatusCode, Value, Vec<u8>) {
    let req = Request::post("/api/v1/visualize")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, bytes, _) = send(app, req).await;
    (status, serde_json::from_slice(&bytes).unwrap(), bytes)
}

fn assert_valid(def: &str, instance: &Value) {
    let mut schema: Value = serde_json::from_str(SCHEMA).unwrap();
    schema["$ref"] = json!(format!("#/$defs/{def}"));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{def}: {errors:?}\n{instance:#}");
}

#[tokio::test]
async fn health_and_locations() {
    let f = fixture(90);
    let (status, body) = get(&f.app, "/api/v1/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_valid("HealthResponse", &body);
    let snapshot = f.state.snapshot().unwrap();
    assert_eq!(body["scenes"], snapshot.catalog.scenes().len());
    assert_eq!(body["frames"], snapshot.catalog.frames().len());
    assert_eq!(body["embedding_dim"], 64);

    let (status, body) = get(&f.app, "/api/v1/locations").await;
    assert_eq!(status, StatusCode::OK);
    assert_valid("LocationsResponse", &body);
    assert_eq!(body["vocabulary"].as_array().unwrap().len(), 90);
}

#[tokio::test]
async fn visualize_sample_script() {
    let f = fixture(4);
    let (status, body, _) = post(
        &f.app,
        json!({ "script": SAMPLE, "query": "select Place=Bedroom", "max_results": 3 }),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_valid("VisualizeResponse", &body);
    let rows = body["results"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let snapshot = f.state.snapshot().unwrap();
    for row in rows {
        let scene = snapshot.catalog.scene(row["scene_id"].as_str().unwrap()).unwrap();
        assert_eq!(scene.location_tag, "Bedroom");
        assert_eq!(row["lines"].as_array().unwrap().len(), 3);
        assert!(row["establishing"]["frame_id"].is_string());
        let assignment = row["assignment"].as_object().unwrap();
        assert_eq!(assignment.keys().collect::<Vec<_>>(), ["HANNA", "VIKTOR"]);
        for cast in assignment.values() {
            let member = scene.cast(cast["cast_id"].as_str().unwrap()).unwrap();
            assert_eq!(cast["name"], member.name.as_str());
        }
    }
}

#[tokio::test]
async fn empty_query_diversifies_over_every_axis() {
    let f = fixture(6);
    let (status, body, first) = post(&f.app, json!({ "script": SAMPLE, "query": "" })).await;
    assert_eq!(status, StatusCode::OK);
    assert_valid("VisualizeResponse", &body);
    let rows = body["results"].as_array().unwrap();
    assert_eq!(rows.len(), 20);
    let places: std::collections::BTreeSet<&str> = rows
        .iter()
        .map(|r| r["variation"]["Place"].as_str().unwrap())
        .collect();
    assert!(places.len() > 1);

    let (_, _, second) = post(&f.app, json!({ "script": SAMPLE, "query": "" })).await;
    assert_eq!(first, second, "identical requests must yield identical bodies");
}

#[tokio::test]
async fn query_errors_are_structured() {
    let f = fixture(4);
    let (status, body, _) =
        post(&f.app, json!({ "script": SAMPLE, "query": "select Plaze=Bedroom" })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_valid("ErrorBody", &body);
    assert_eq!(body["error_kind"], "UnknownAttribute");
    assert_eq!(body["position"], 7);

    let (status, body, _) = post(
        &f.app,
        json!({ "script": SAMPLE, "query": "select Time-of-day=Day, Time-of-day=Variable" }),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error_kind"], "ConflictingConstraint");

    let (status, body, _) = post(&f.app, json!({ "script": SAMPLE, "query": "select Place=" })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error_kind"], "ParseError");
}

#[tokio::test]
async fn invalid_requests() {
    let f = fixture(4);
    let (status, body, _) = post(&f.app, json!({ "script": "  \n", "query": "" })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error_kind"], "InvalidRequest");

    let (status, body, _) = post(&f.app, json!({ "script": SAMPLE, "max_results": 0 })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error_kind"], "InvalidRequest");

    let req = Request::post("/api/v1/visualize")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let (status, bytes, _) = send(&f.app, req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let body: Value = serde_json::from_slice(&bytes).unwrap();
    assert_valid("ErrorBody", &body);
    assert_eq!(body["error_kind"], "InvalidRequest");

    let (status, body) = get(&f.app, "/api/v1/nothing-here").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error_kind"], "NotFound");
}

#[tokio::test]
async fn no_matching_scene_is_an_empty_success() {
    let f = fixture(4);
    let (status, body, _) =
        post(&f.app, json!({ "script": SAMPLE, "query": "select MovieYear<1800" })).await;
    assert_eq!(status, StatusCode::OK);
    assert_valid("VisualizeResponse", &body);
    assert!(body["results"].as_array().unwrap().is_empty());
    assert!(!body["warnings"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn free_text_location_warns() {
    let f = fixture(4);
    let (status, body, _) =
        post(&f.app, json!({ "script": SAMPLE, "query": "select Place=\"snowy pier\"" })).await;
    assert_eq!(status, StatusCode::OK);
    let warnings = body["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("snowy pier")));
    assert!(!body["results"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn alternatives_match_annotations() {
    let f = fixture(4);
    let (_, body, _) = post(&f.app, json!({ "script": SAMPLE, "max_results": 5 })).await;
    let snapshot = f.state.snapshot().unwrap();
    for row in body["results"].as_array().unwrap() {
        let scene_id = row["scene_id"].as_str().unwrap();
        for cast in row["assignment"].as_object().unwrap().values() {
            let cast_id = cast["cast_id"].as_str().unwrap();
            let (status, alts) =
                get(&f.app, &format!("/api/v1/scenes/{scene_id}/alternatives?cast_id={cast_id}")).await;
            assert_eq!(status, StatusCode::OK);
            assert_valid("AlternativesResponse", &alts);
            let ids: Vec<&str> = alts["frame_ids"]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_str().unwrap())
                .collect();
            let want = snapshot.annotations.get(scene_id).unwrap().recognizable(cast_id);
            assert_eq!(ids, want);
            assert_eq!(alts["image_urls"].as_array().unwrap().len(), ids.len());
        }
        for line in row["lines"].as_array().unwrap() {
            let character = line["character"].as_str().unwrap();
            let cast_id = row["assignment"][character]["cast_id"].as_str().unwrap();
            let (_, alts) =
                get(&f.app, &format!("/api/v1/scenes/{scene_id}/alternatives?cast_id={cast_id}")).await;
            assert!(alts["frame_ids"].as_array().unwrap().contains(&line["frame_id"]));
        }
    }

    let scene_id = &snapshot.catalog.scenes()[0].scene_id;
    let (status, body) = get(&f.app, &format!("/api/v1/scenes/{scene_id}/alternatives?cast_id=nobody")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error_kind"], "NotFound");
    let (status, _) = get(&f.app, "/api/v1/scenes/nope/alternatives?cast_id=x").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = get(&f.app, &format!("/api/v1/scenes/{scene_id}/alternatives")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error_kind"], "InvalidRequest");
}

#[tokio::test]
async fn frame_images_are_served_verbatim() {
    let f = fixture(4);
    let snapshot = f.state.snapshot().unwrap();
    let frame = &snapshot.catalog.frames()[0];
    let req = Request::get(format!("/api/v1/frames/{}/image", frame.frame_id))
        .body(Body::empty())
        .unwrap();
    let (status, bytes, headers) = send(&f.app, req).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "image/png");
    assert!(headers[header::CACHE_CONTROL].to_str().unwrap().contains("immutable"));
    let on_disk = std::fs::read(snapshot.image_path(&frame.frame_id).unwrap()).unwrap();
    assert_eq!(bytes, on_disk);

    let (status, body) = get(&f.app, "/api/v1/frames/unknown/image").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error_kind"], "NotFound");
}

#[tokio::test]
async fn every_route_waits_for_the_snapshot() {
    let app = router(AppState::new(), None);
    for uri in [
        "/api/v1/health",
        "/api/v1/locations",
        "/api/v1/schema",
        "/api/v1/frames/f/image",
        "/api/v1/scenes/s/alternatives?cast_id=c",
    ] {
        let (status, body) = get(&app, uri).await;
        assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
        assert_eq!(body["error_kind"], "NotReady");
        assert_valid("ErrorBody", &body);
    }
    let (status, body, _) = post(&app, json!({ "script": SAMPLE })).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["error_kind"], "NotReady");
}

#[tokio::test]
async fn schema_document_is_published() {
    let f = fixture(4);
    let (status, body) = get(&f.app, "/api/v1/schema").await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["$defs"]["VisualizeResponse"].is_object());
    assert!(jsonschema::validator_for(&body).is_ok());
    assert_valid("VisualizeRequest", &json!({ "script": SAMPLE, "query": "", "max_results": 4 }));
}

#[tokio::test]
async fn cors_and_static_ui() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>deck</html>").unwrap();
    let f = fixture(4);
    let app = router(f.state.clone(), Some(ui.path().to_path_buf()));

    let req = Request::get("/").body(Body::empty()).unwrap();
    let (status, bytes, _) = send(&app, req).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bytes, b"<html>deck</html>");

    let req = Request::get("/api/v1/health")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let (_, _, headers) = send(&app, req).await;
    assert!(headers.contains_key(header::ACCESS_CONTROL_ALLOW_ORIGIN));
}

#[test]
fn error_kind_enumeration_matches_schema() {
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    let listed: Vec<String> = schema["$defs"]["ErrorBody"]["properties"]["error_kind"]["enum"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let ours: Vec<String> = scenedeck_cli::api::ErrorKind::ALL
        .iter()
        .map(|k| format!("{k:?}"))
        .collect();
    assert_eq!(listed, ours);
}
