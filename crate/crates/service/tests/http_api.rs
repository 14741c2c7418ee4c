use std::path::Path;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use meshannot_core::fixture::{cross_stroke, Fixture, FixtureSpec, IdBuffer, FACADE, ROOF, TERRAIN, WINDOW};
use meshannot_core::segmentation::oversegment;
use meshannot_core::texture::build_canvas;
use meshannot_core::Vec3;
use meshannot_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, v)
}

fn faces(v: &Value) -> Vec<usize> {
    serde_json::from_value(v.clone()).unwrap()
}

fn app(root: &Path) -> Router {
    router(AppState::new(ServiceConfig::new(root)))
}

fn write_fixture(root: &Path, name: &str, spec: &FixtureSpec) -> Fixture {
    let f = Fixture::generate(spec).unwrap();
    f.write(&root.join(name)).unwrap();
    f
}

/// create → gesture → extract → match → label (faces and pixels) → export.
async fn scripted_session(app: &Router, f: &Fixture, out: &str) -> String {
    let (st, s) = call(app, "POST", "/sessions", Some(json!({"mesh": "village/scene.obj"}))).await;
    assert_eq!(st, StatusCode::CREATED, "{s}");
    let id = s["id"].as_str().unwrap().to_string();
    let base = format!("/sessions/{id}");

    let top = IdBuffer::render(&f.mesh, -Vec3::z(), 768, 768);
    let stroke = cross_stroke(&top, &f.spec.boxes[0], 1.0);
    let hits = top.pick_polyline(&stroke);
    let (st, g) = call(app, "POST", &format!("{base}/gesture"), Some(json!({"polyline": stroke, "hit_faces": hits}))).await;
    assert_eq!(st, StatusCode::OK, "{g}");
    assert_eq!(g["kind"], "stroke");

    let (st, p) =
        call(app, "POST", &format!("{base}/protrusions"), Some(json!({"candidate_faces": g["candidate_faces"]}))).await;
    assert_eq!(st, StatusCode::OK, "{p}");
    let house = faces(&p["faces"]);
    let mut expect = f.truth.boxes[0].visible_faces.clone();
    expect.sort_unstable();
    assert_eq!(house, expect);

    let (st, m) = call(app, "POST", &format!("{base}/match/protrusions"), Some(json!({"template_faces": house}))).await;
    assert_eq!(st, StatusCode::OK, "{m}");
    let matches: Vec<Vec<usize>> = serde_json::from_value(m["matches"].clone()).unwrap();
    assert_eq!(matches.len(), 4);

    let (_, segs) = call(app, "GET", &format!("{base}/segments"), None).await;
    let segs = segs.as_array().unwrap().clone();
    let seg_of = |face: usize| {
        segs.iter().find(|s| faces(&s["faces"]).binary_search(&face).is_ok()).map(|s| s["id"].as_u64().unwrap()).unwrap()
    };

    let mut all: Vec<usize> = house.iter().chain(matches.iter().flatten()).copied().collect();
    all.sort_unstable();
    let (st, v) = call(app, "POST", &format!("{base}/actions"), Some(json!({"kind": "label_faces", "faces": all, "class": FACADE}))).await;
    assert_eq!((st, v["version"].as_u64()), (StatusCode::OK, Some(1)));
    let roof = seg_of(f.truth.boxes[0].roof_faces[0]);
    let (_, sm) = call(app, "POST", &format!("{base}/match/segments"), Some(json!({"template_segment": roof}))).await;
    let mut roof_faces = faces(&segs[roof as usize]["faces"]);
    for m in sm["matches"].as_array().unwrap() {
        roof_faces.extend(faces(&segs[m["segment"].as_u64().unwrap() as usize]["faces"]));
    }
    let (st, _) = call(app, "POST", &format!("{base}/actions"), Some(json!({"kind": "label_faces", "faces": roof_faces, "class": ROOF}))).await;
    assert_eq!(st, StatusCode::OK);
    let ground = f.truth.ground_faces[0].clone();
    call(app, "POST", &format!("{base}/actions"), Some(json!({"kind": "label_faces", "faces": ground, "class": TERRAIN}))).await;

    // texture track on the wall carrying window 0
    let w = &f.truth.windows[0];
    let wall = seg_of(f.truth.boxes[w.box_index].wall_faces[w.side][0]);
    let segmentation = oversegment(&f.mesh, &Default::default()).unwrap();
    let canvas = build_canvas(&f.mesh, &segmentation.segments[wall as usize]).unwrap();
    let mid = w.texels[w.texels.len() / 2];
    let click = canvas.from_page(w.page, mid.0, mid.1).unwrap();
    let seg_base = format!("{base}/segments/{wall}");
    let (st, c) = call(app, "GET", &format!("{seg_base}/canvas"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!((c["width"].as_u64(), c["height"].as_u64()), (Some(canvas.width() as u64), Some(canvas.height() as u64)));
    let (st, r) = call(app, "POST", &format!("{seg_base}/expand"), Some(json!({"texel": [click.0, click.1]}))).await;
    assert_eq!(st, StatusCode::OK, "{r}");
    let (st, fine) = call(app, "POST", &format!("{seg_base}/refine"), Some(json!({"region": r["region"]}))).await;
    assert_eq!(st, StatusCode::OK, "{fine}");
    assert!(fine["mask_png_base64"].as_str().unwrap().len() > 10);
    let (st, rm) = call(app, "POST", &format!("{seg_base}/match/regions"), Some(json!({"template_region": fine["region"]}))).await;
    assert_eq!(st, StatusCode::OK, "{rm}");
    let mut texels: Vec<Value> = fine["region"].as_array().unwrap().clone();
    for reg in rm["regions"].as_array().unwrap() {
        texels.extend(reg["texels"].as_array().unwrap().iter().cloned());
    }
    let (st, v) = call(
        app,
        "POST",
        &format!("{base}/actions"),
        Some(json!({"kind": "label_pixels", "segment": wall, "texels": texels, "class": WINDOW})),
    )
    .await;
    assert_eq!((st, v["version"].as_u64()), (StatusCode::OK, Some(4)), "{v}");

    let (st, e) = call(app, "POST", &format!("{base}/export"), Some(json!({"dir": out}))).await;
    assert_eq!(st, StatusCode::OK, "{e}");
    id
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[tokio::test(flavor = "multi_thread")]
async fn scripted_session_is_deterministic_and_reloads() {
    let root = tempfile::tempdir().unwrap();
    let f = write_fixture(root.path(), "village", &FixtureSpec::box_village());
    let mut exports = Vec::new();
    let mut last = None;
    for k in 0..3 {
        let a = app(root.path());
        let out = format!("run{k}");
        let id = scripted_session(&a, &f, &out).await;
        exports.push(dir_bytes(&root.path().join(&out)));
        last = Some((a, id));
    }
    assert!(exports[0].len() >= 3);
    assert_eq!(exports[0], exports[1]);
    assert_eq!(exports[0], exports[2]);

    // import the export into a fresh session and compare read-backs
    let (a, id) = last.unwrap();
    let (st, s) = call(&a, "POST", "/sessions", Some(json!({"mesh": "village/scene.obj", "import": "run2"}))).await;
    assert_eq!(st, StatusCode::CREATED, "{s}");
    let back = s["id"].as_str().unwrap();
    let (_, l0) = call(&a, "GET", &format!("/sessions/{id}/labels"), None).await;
    let (_, l1) = call(&a, "GET", &format!("/sessions/{back}/labels"), None).await;
    assert_eq!(l0["faces"], l1["faces"]);
    let (_, m0) = call(&a, "GET", &format!("/sessions/{id}/masks/0"), None).await;
    let (_, m1) = call(&a, "GET", &format!("/sessions/{back}/masks/0"), None).await;
    assert_eq!(m0["png_base64"], m1["png_base64"]);
    let (_, s0) = call(&a, "GET", &format!("/sessions/{id}/segments"), None).await;
    let (_, s1) = call(&a, "GET", &format!("/sessions/{back}/segments"), None).await;
    assert_eq!(s0, s1);
    // re-exporting the imported session reproduces the files
    call(&a, "POST", &format!("/sessions/{back}/export"), Some(json!({"dir": "again"}))).await;
    assert_eq!(dir_bytes(&root.path().join("again")), exports[0]);
}

#[tokio::test]
async fn undo_redo_and_versions() {
    let root = tempfile::tempdir().unwrap();
    write_fixture(root.path(), "cube", &FixtureSpec::cube_on_plane());
    let a = app(root.path());
    let (st, s) = call(&a, "POST", "/sessions", Some(json!({"mesh": "cube/scene.obj"}))).await;
    assert_eq!(st, StatusCode::CREATED);
    assert_eq!((s["segments"].as_u64(), s["version"].as_u64()), (Some(7), Some(0)));
    let id = s["id"].as_str().unwrap();

    let (st, e) = call(&a, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!((st, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("empty_stack")));

    let (_, before) = call(&a, "GET", &format!("/sessions/{id}/labels"), None).await;
    let (_, v) = call(&a, "POST", &format!("/sessions/{id}/actions"), Some(json!({"kind": "label_faces", "faces": [0, 1, 2, 3, 4], "class": 4}))).await;
    assert_eq!(v["version"], 1);
    let (_, l) = call(&a, "GET", &format!("/sessions/{id}/labels"), None).await;
    assert_eq!(faces(&l["faces"])[..6], [4, 4, 4, 4, 4, 0]);
    // reads never bump the version
    call(&a, "GET", &format!("/sessions/{id}/segments"), None).await;
    call(&a, "GET", &format!("/sessions/{id}/segments/0/canvas"), None).await;
    let (_, s) = call(&a, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s["version"], 1);

    let (_, v) = call(&a, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!(v["version"], 2);
    let (_, l) = call(&a, "GET", &format!("/sessions/{id}/labels"), None).await;
    assert_eq!(l["faces"], before["faces"]);
    let (_, v) = call(&a, "POST", &format!("/sessions/{id}/redo"), None).await;
    assert_eq!(v["version"], 3);

    let params = json!({"kind": "set_params", "params": {"protrusion": {"lambda": 0.6}}});
    call(&a, "POST", &format!("/sessions/{id}/actions"), Some(params)).await;
    let (_, s) = call(&a, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s["params"]["protrusion"]["lambda"], 0.6);
    assert_eq!(s["params"]["protrusion"]["eta"], 1.0);

    // a second session on the same mesh is independent
    let (_, other) = call(&a, "POST", "/sessions", Some(json!({"mesh": "cube/scene.obj"}))).await;
    assert_ne!(other["id"], s["id"]);
    assert_eq!(other["version"], 0);
    let (_, l) = call(&a, "GET", &format!("/sessions/{}/labels", other["id"].as_str().unwrap()), None).await;
    assert_eq!(l["faces"], before["faces"]);
}

#[tokio::test]
async fn errors_are_json() {
    let root = tempfile::tempdir().unwrap();
    write_fixture(root.path(), "cube", &FixtureSpec::cube_on_plane());
    let a = app(root.path());
    let (st, e) = call(&a, "GET", "/sessions/nope", None).await;
    assert_eq!((st, e["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_session")));
    let (st, e) = call(&a, "POST", "/sessions", Some(json!({"mesh": "missing.obj"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST, "{e}");
    let (st, e) = call(&a, "POST", "/sessions", Some(json!({"mesh": "../etc/passwd"}))).await;
    assert_eq!((st, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_path")));
    let (st, e) = call(&a, "POST", "/sessions", Some(json!({"wrong": 1}))).await;
    assert_eq!((st, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_json")));

    let (_, s) = call(&a, "POST", "/sessions", Some(json!({"mesh": "cube/scene.obj"}))).await;
    let id = s["id"].as_str().unwrap();
    let (st, e) = call(&a, "POST", &format!("/sessions/{id}/actions"), Some(json!({"kind": "label_faces", "faces": [0], "class": 77}))).await;
    assert_eq!((st, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_class")));
    let (st, e) = call(&a, "POST", &format!("/sessions/{id}/actions"), Some(json!({"kind": "paint", "faces": [0]}))).await;
    assert_eq!((st, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_json")));
    let (st, e) = call(&a, "GET", &format!("/sessions/{id}/segments/99/canvas"), None).await;
    assert_eq!((st, e["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_segment")));
    let (st, _) = call(&a, "GET", &format!("/sessions/{id}/segments/x/canvas"), None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, e) = call(&a, "POST", &format!("/sessions/{id}/segments/0/expand"), Some(json!({"texel": [100000, 0]}))).await;
    assert_eq!((st, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("texture")));
    let (st, _) = call(&a, "POST", &format!("/sessions/{id}/gesture"), Some(json!({"polyline": [[0, 0]], "hit_faces": []}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (_, s) = call(&a, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s["version"], 0);

    // empty labels export fine; an unwritable target fails
    let (st, e) = call(&a, "POST", &format!("/sessions/{id}/export"), Some(json!({"dir": "empty"}))).await;
    assert_eq!(st, StatusCode::OK, "{e}");
    assert!(root.path().join("empty/manifest.json").exists());
    std::fs::write(root.path().join("blocker"), b"x").unwrap();
    let (st, e) = call(&a, "POST", &format!("/sessions/{id}/export"), Some(json!({"dir": "blocker/sub"}))).await;
    assert!(st.is_server_error() && e["code"].is_string(), "{st} {e}");
}

#[tokio::test]
async fn solver_timeout_is_504() {
    let root = tempfile::tempdir().unwrap();
    let f = write_fixture(root.path(), "cube", &FixtureSpec::cube_on_plane());
    let a = router(AppState::new(ServiceConfig { timeout: Duration::ZERO, ..ServiceConfig::new(root.path()) }));
    let (_, s) = call(&a, "POST", "/sessions", Some(json!({"mesh": "cube/scene.obj"}))).await;
    let id = s["id"].as_str().unwrap();
    let mut cand = f.truth.ground_faces[0].clone();
    cand.extend(&f.truth.boxes[0].visible_faces);
    let (st, e) = call(&a, "POST", &format!("/sessions/{id}/protrusions"), Some(json!({"candidate_faces": cand}))).await;
    assert_eq!((st, e["code"].as_str()), (StatusCode::GATEWAY_TIMEOUT, Some("timeout")));
}

#[tokio::test]
async fn taxonomy_and_health() {
    let root = tempfile::tempdir().unwrap();
    let a = app(root.path());
    let (st, t) = call(&a, "GET", "/taxonomy", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(t.as_array().unwrap().len(), 21);
    let (st, h) = call(&a, "GET", "/health", None).await;
    assert_eq!((st, h.as_str()), (StatusCode::OK, Some("ok")));
}
