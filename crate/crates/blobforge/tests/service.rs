mod common;

use axum::http::{Method, StatusCode};
use axum::Router;
use base64::Engine;
use blobforge::fixtures::{ellipse_mask, textured_image};
use blobforge::formats::{decode_raw_field, mask_to_png, png_to_raster, raster_to_png};
use blobforge::schema::{schema, SCHEMA_NAMES};
use blobforge::server::{router, AppState, REVISION_HEADER, VMAX_HEADER};
use blobforge_core::field::FieldKind;
use blobforge_core::BlobEllipse;
use common::{call, call_json};
use serde_json::{json, Value};

fn app() -> (tempfile::TempDir, Router) {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::open(dir.path()).unwrap());
    (dir, app)
}

fn scene_json() -> Value {
    json!({
        "width": 48, "height": 32,
        "blobs": [
            {"id": "sky", "label": "sky", "ellipse": {"cx": 0.5, "cy": 0.3, "a": 0.4, "b": 0.2, "theta": 0.0}, "feature": [0.1, 0.2]},
            {"id": "dog", "ellipse": {"cx": 0.4, "cy": 0.6, "a": 0.2, "b": 0.1, "theta": 1.0}, "feature": [1.0, 0.0]}
        ]
    })
}

fn validate(name: &str, doc: &Value) {
    let validator = jsonschema::validator_for(&schema(name).unwrap()).unwrap();
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{doc:#}");
}

#[tokio::test]
async fn scene_crud_and_status_codes() {
    let (_dir, app) = app();
    let created = call_json(&app, Method::POST, "/scenes/s1", &scene_json()).await;
    assert_eq!(created.status, StatusCode::CREATED);
    validate("stored_scene", &created.json());
    assert_eq!(created.json()["revision"], 1);

    assert_eq!(call_json(&app, Method::POST, "/scenes/s1", &scene_json()).await.status, StatusCode::CONFLICT);
    assert_eq!(call(&app, Method::GET, "/scenes/nope", None).await.status, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, Method::GET, "/scenes/bad.id", None).await.status, StatusCode::BAD_REQUEST);

    let edit = json!({"op": {"kind": "translate", "target_id": "dog", "dx": 0.1, "dy": 0.0}, "expected_revision": 1});
    let edited = call_json(&app, Method::POST, "/scenes/s1/edit", &edit).await;
    assert_eq!(edited.status, StatusCode::OK);
    assert_eq!(edited.json()["revision"], 2);
    assert_eq!(edited.json()["scene"]["blobs"][1]["ellipse"]["cx"], 0.5);
    assert_eq!(edited.json()["scene"]["blobs"][0], created.json()["scene"]["blobs"][0]);

    let stale = call_json(&app, Method::POST, "/scenes/s1/edit", &edit).await;
    assert_eq!(stale.status, StatusCode::CONFLICT);
    assert_eq!(stale.json()["current_revision"], 2);
    validate("error", &stale.json());

    let unknown = json!({"op": {"kind": "remove", "target_id": "cat"}});
    assert_eq!(call_json(&app, Method::POST, "/scenes/s1/edit", &unknown).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    let bad_kind = json!({"op": {"kind": "explode", "target_id": "dog"}});
    assert_eq!(call_json(&app, Method::POST, "/scenes/s1/edit", &bad_kind).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    let bad_scale = json!({"op": {"kind": "scale", "target_id": "dog", "s_a": 0.0, "s_b": 1.0}});
    assert_eq!(call_json(&app, Method::POST, "/scenes/s1/edit", &bad_scale).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    let malformed = call(&app, Method::POST, "/scenes/s1/edit", Some(b"{not json".to_vec())).await;
    assert_eq!(malformed.status, StatusCode::BAD_REQUEST);
    validate("error", &malformed.json());

    let put = json!({"scene": scene_json(), "expected_revision": 2});
    assert_eq!(call_json(&app, Method::PUT, "/scenes/s1", &put).await.json()["revision"], 3);
    assert_eq!(call(&app, Method::GET, "/scenes", None).await.json()["ids"], json!(["s1"]));

    assert_eq!(call(&app, Method::DELETE, "/scenes/s1?expected_revision=1", None).await.status, StatusCode::CONFLICT);
    assert_eq!(call(&app, Method::DELETE, "/scenes/s1?expected_revision=3", None).await.status, StatusCode::NO_CONTENT);
    assert_eq!(call(&app, Method::GET, "/scenes/s1", None).await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_scene_is_unprocessable() {
    let (_dir, app) = app();
    let mut s = scene_json();
    s["blobs"][1]["id"] = json!("sky");
    assert_eq!(call_json(&app, Method::POST, "/scenes/dup", &s).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    s = scene_json();
    s["blobs"][0]["ellipse"]["a"] = json!(-1.0);
    assert_eq!(call_json(&app, Method::POST, "/scenes/neg", &s).await.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn renders_carry_revision_and_scale() {
    let (_dir, app) = app();
    call_json(&app, Method::POST, "/scenes/r", &scene_json()).await;

    let png = call(&app, Method::GET, "/scenes/r/render?kind=opacity", None).await;
    assert_eq!(png.status, StatusCode::OK);
    assert_eq!(png.header("content-type"), Some("image/png"));
    assert_eq!(png.header(REVISION_HEADER), Some("1"));
    assert!(png.header(VMAX_HEADER).unwrap().parse::<f64>().unwrap() > 0.0);
    let img = png_to_raster(&png.body).unwrap();
    assert_eq!((img.width, img.height), (48, 32));

    let raw = call(&app, Method::GET, "/scenes/r/render?kind=composed&format=raw&w=24&h=16", None).await;
    let field = decode_raw_field(&raw.body).unwrap();
    assert_eq!((field.width, field.height, field.kind), (24, 16, FieldKind::ComposedOpacity));
    assert!(field.values.iter().all(|&v| (0.0..=1.0).contains(&v)));

    for q in ["kind=opacity&w=0", "kind=opacity&w=99999", "kind=nope", "kind=mask&format=gif", "w=3"] {
        let r = call(&app, Method::GET, &format!("/scenes/r/render?{q}"), None).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "{q}");
    }
    let r = call(&app, Method::GET, "/scenes/r/render?kind=opacity&blob=cat", None).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let r = call(&app, Method::GET, "/scenes/none/render?kind=opacity", None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn reorder_to_front_makes_composed_equal_raw() {
    let (_dir, app) = app();
    call_json(&app, Method::POST, "/scenes/z", &scene_json()).await;
    let op = json!({"op": {"kind": "reorder", "target_id": "sky", "index": 1}});
    assert_eq!(call_json(&app, Method::POST, "/scenes/z/edit", &op).await.status, StatusCode::OK);
    let raw = call(&app, Method::GET, "/scenes/z/render?kind=opacity&blob=sky&format=raw", None).await;
    let composed = call(&app, Method::GET, "/scenes/z/render?kind=composed&blob=sky&format=raw", None).await;
    assert_eq!(decode_raw_field(&raw.body).unwrap().values, decode_raw_field(&composed.body).unwrap().values);
}

fn b64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn sample_request(perturb_seed: u64) -> Value {
    let image = textured_image(500, 490, 3);
    let mask = ellipse_mask(&BlobEllipse::new(0.5, 0.5, 0.25, 0.15, 0.6).unwrap(), 500, 490);
    json!({
        "image_png": b64(&raster_to_png(&image).unwrap()),
        "mask_png": b64(&mask_to_png(&mask).unwrap()),
        "perturb_seed": perturb_seed,
        "augment_seed": 9,
        "caption": "a blob"
    })
}

#[tokio::test]
async fn sample_archives_are_reproducible() {
    let (_dir, app) = app();
    let a = call_json(&app, Method::POST, "/samples", &sample_request(4)).await;
    assert_eq!(a.status, StatusCode::OK, "{:?}", String::from_utf8_lossy(&a.body));
    assert_eq!(a.header("content-type"), Some("application/x-tar"));
    let b = call_json(&app, Method::POST, "/samples", &sample_request(4)).await;
    assert_eq!(a.body, b.body);
    let c = call_json(&app, Method::POST, "/samples", &sample_request(5)).await;
    assert_ne!(a.body, c.body);

    let mut archive = tar::Archive::new(a.body.as_slice());
    let names: Vec<String> = archive
        .entries()
        .unwrap()
        .map(|e| e.unwrap().path().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        [
            "sample/augmentation_log.json",
            "sample/bg.png",
            "sample/blobs.json",
            "sample/caption.txt",
            "sample/config.json",
            "sample/dual_mask.bf",
            "sample/fg.png",
            "sample/fg_mask.bf",
        ]
    );
}

#[tokio::test]
async fn sample_rejection_reports_reason() {
    let (_dir, app) = app();
    let image = textured_image(400, 400, 1);
    let mask = ellipse_mask(&BlobEllipse::new(0.5, 0.5, 0.2, 0.2, 0.0).unwrap(), 400, 400);
    let req = json!({
        "image_png": b64(&raster_to_png(&image).unwrap()),
        "mask_png": b64(&mask_to_png(&mask).unwrap()),
        "perturb_seed": 0, "augment_seed": 0
    });
    let r = call_json(&app, Method::POST, "/samples", &req).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["reason"], "short_side");
    validate("error", &r.json());

    let missing_seed = json!({"image_png": "", "mask_png": ""});
    assert_eq!(call_json(&app, Method::POST, "/samples", &missing_seed).await.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn curate_endpoint_matches_rules() {
    let (_dir, app) = app();
    let good_img = raster_to_png(&textured_image(520, 500, 2)).unwrap();
    let good_mask = mask_to_png(&ellipse_mask(&BlobEllipse::new(0.5, 0.5, 0.3, 0.2, 0.3).unwrap(), 520, 500)).unwrap();
    let small_img = raster_to_png(&textured_image(300, 500, 2)).unwrap();
    let small_mask = mask_to_png(&ellipse_mask(&BlobEllipse::new(0.5, 0.5, 0.3, 0.2, 0.3).unwrap(), 300, 500)).unwrap();
    let req = json!({"items": [
        {"name": "good", "image_png": b64(&good_img), "mask_png": b64(&good_mask), "caption": "fine"},
        {"name": "small", "image_png": b64(&small_img), "mask_png": b64(&small_mask)},
        {"name": "mismatch", "image_png": b64(&small_img), "mask_png": b64(&good_mask)},
        {"name": "broken", "image_png": "@@", "mask_png": b64(&good_mask)}
    ]});
    let r = call_json(&app, Method::POST, "/curate", &req).await;
    assert_eq!(r.status, StatusCode::OK);
    let body = r.json();
    validate("curate_summary", &body["summary"]);
    for rec in body["records"].as_array().unwrap() {
        validate("blob_record", rec);
    }
    assert_eq!(body["summary"]["accepted"], 1, "{body:#}");
    assert_eq!(body["summary"]["rejected"]["short_side"], 1);
    assert_eq!(body["summary"]["rejected"]["mask_shape"], 1);
    assert_eq!(body["summary"]["io_errors"][0]["name"], "broken");
    assert_eq!(body["records"][0]["caption"], "fine");
}

#[tokio::test]
async fn schemas_are_served_and_compile() {
    let (_dir, app) = app();
    let all = call(&app, Method::GET, "/schema", None).await.json();
    for name in SCHEMA_NAMES {
        assert!(jsonschema::validator_for(&all[name]).is_ok(), "{name}");
        let one = call(&app, Method::GET, &format!("/schema/{name}"), None).await;
        assert_eq!(one.json(), all[name]);
    }
    assert_eq!(call(&app, Method::GET, "/schema/nope", None).await.status, StatusCode::NOT_FOUND);
    let health = call(&app, Method::GET, "/healthz", None).await.json();
    assert_eq!(health["status"], "ok");

    validate("scene", &scene_json());
    let ops = [
        json!({"kind": "add", "blob": {"id": "x", "label": "", "ellipse": {"cx": 0.5, "cy": 0.5, "a": 0.1, "b": 0.1, "theta": 0.0}, "feature": [1.0]}}),
        json!({"kind": "remove", "target_id": "x"}),
        json!({"kind": "translate", "target_id": "x", "dx": 0.1, "dy": -0.1}),
        json!({"kind": "scale", "target_id": "x", "s_a": 1.2, "s_b": 0.9}),
        json!({"kind": "rotate", "target_id": "x", "dtheta": 0.3}),
        json!({"kind": "replace", "target_id": "x", "label": "cat"}),
        json!({"kind": "reorder", "target_id": "x", "index": 0}),
    ];
    for op in &ops {
        validate("edit_op", op);
        let parsed: blobforge_core::edit::EditOp = serde_json::from_value(op.clone()).unwrap();
        assert_eq!(&serde_json::to_value(&parsed).unwrap(), op);
    }
    let validator = jsonschema::validator_for(&schema("edit_op").unwrap()).unwrap();
    assert!(!validator.is_valid(&json!({"kind": "translate", "target_id": "x", "dx": 0.1})));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn scenes_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    {
        let app = router(AppState::open(dir.path()).unwrap());
        call_json(&app, Method::POST, "/scenes/keep", &scene_json()).await;
        let op = json!({"op": {"kind": "rotate", "target_id": "dog", "dtheta": 0.5}});
        call_json(&app, Method::POST, "/scenes/keep/edit", &op).await;
    }
    let app = router(AppState::open(dir.path()).unwrap());
    let got = call(&app, Method::GET, "/scenes/keep", None).await.json();
    assert_eq!(got["revision"], 2);
    assert_eq!(got["scene"]["blobs"][1]["ellipse"]["theta"], 1.5);
}
