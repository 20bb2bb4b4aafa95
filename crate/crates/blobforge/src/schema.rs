//! JSON Schemas (draft 2020-12) for every wire document.

use serde_json::{json, Value};

pub const SCHEMA_NAMES: [&str; 9] = [
    "ellipse",
    "gaussian",
    "scene",
    "stored_scene",
    "edit_op",
    "blob_record",
    "curate_summary",
    "render_meta",
    "error",
];

fn num() -> Value {
    json!({"type": "number"})
}

fn ellipse() -> Value {
    json!({
        "type": "object",
        "required": ["cx", "cy", "a", "b", "theta"],
        "properties": {
            "cx": num(), "cy": num(),
            "a": {"type": "number", "exclusiveMinimum": 0},
            "b": {"type": "number", "exclusiveMinimum": 0},
            "theta": {"type": "number", "minimum": 0, "exclusiveMaximum": std::f64::consts::PI}
        },
        "additionalProperties": false
    })
}

fn gaussian() -> Value {
    let pair = json!({"type": "array", "items": num(), "minItems": 2, "maxItems": 2});
    json!({
        "type": "object",
        "required": ["mu", "sigma"],
        "properties": {
            "mu": pair,
            "sigma": {"type": "array", "items": pair, "minItems": 2, "maxItems": 2}
        },
        "additionalProperties": false
    })
}

fn confidence() -> Value {
    json!({"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1})
}

fn scene() -> Value {
    json!({
        "type": "object",
        "required": ["width", "height"],
        "properties": {
            "width": {"type": "integer", "minimum": 1},
            "height": {"type": "integer", "minimum": 1},
            "confidence": confidence(),
            "blobs": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["id", "ellipse"],
                    "properties": {
                        "id": {"type": "string", "minLength": 1},
                        "label": {"type": "string"},
                        "ellipse": ellipse(),
                        // derived; ignored on input
                        "gaussian": gaussian(),
                        "feature": {"type": "array", "items": num()}
                    }
                }
            }
        }
    })
}

fn variant(kind: &str, required: &[&str], props: Value) -> Value {
    let mut properties = props.as_object().cloned().unwrap_or_default();
    properties.insert("kind".into(), json!({"const": kind}));
    let mut req: Vec<&str> = vec!["kind"];
    req.extend_from_slice(required);
    json!({
        "type": "object",
        "required": req,
        "properties": properties,
        "additionalProperties": false
    })
}

fn edit_op() -> Value {
    let id = json!({"type": "string"});
    let index = json!({"type": "integer", "minimum": 0});
    let new_blob = json!({
        "type": "object",
        "required": ["id", "ellipse"],
        "properties": {
            "id": {"type": "string", "minLength": 1},
            "label": {"type": "string"},
            "ellipse": ellipse(),
            "feature": {"type": "array", "items": num()}
        },
        "additionalProperties": false
    });
    json!({
        "oneOf": [
            variant("add", &["blob"], json!({"blob": new_blob, "index": index})),
            variant("remove", &["target_id"], json!({"target_id": id})),
            variant("translate", &["target_id", "dx", "dy"], json!({"target_id": id, "dx": num(), "dy": num()})),
            variant("scale", &["target_id", "s_a", "s_b"], json!({
                "target_id": id,
                "s_a": {"type": "number", "exclusiveMinimum": 0},
                "s_b": {"type": "number", "exclusiveMinimum": 0}
            })),
            variant("rotate", &["target_id", "dtheta"], json!({"target_id": id, "dtheta": num()})),
            variant("replace", &["target_id"], json!({
                "target_id": id,
                "feature": {"type": "array", "items": num()},
                "ellipse": ellipse(),
                "label": {"type": "string"}
            })),
            variant("reorder", &["target_id", "index"], json!({"target_id": id, "index": index}))
        ]
    })
}

fn stored_scene() -> Value {
    json!({
        "type": "object",
        "required": ["id", "revision", "scene"],
        "properties": {
            "id": {"type": "string", "pattern": "^[A-Za-z0-9_-]{1,128}$"},
            "revision": {"type": "integer", "minimum": 1},
            "scene": scene()
        },
        "additionalProperties": false
    })
}

fn reasons() -> Value {
    json!({"enum": [
        "short_side", "mask_shape", "empty", "area", "boundary",
        "fit_failed", "ill-conditioned", "asymmetric", "non-finite"
    ]})
}

fn blob_record() -> Value {
    json!({
        "type": "object",
        "required": ["image_ref", "mask_ref", "ellipse", "gaussian", "confidence", "provenance"],
        "properties": {
            "image_ref": {"type": "string"},
            "mask_ref": {"type": "string"},
            "ellipse": ellipse(),
            "gaussian": gaussian(),
            "caption": {"type": "string"},
            "confidence": confidence(),
            "provenance": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["rule", "value"],
                    "properties": {
                        "rule": {"enum": ["short_side", "area", "boundary", "covariance"]},
                        "value": num()
                    },
                    "additionalProperties": false
                }
            }
        },
        "additionalProperties": false
    })
}

fn curate_summary() -> Value {
    let named = |extra: Value| {
        json!({
            "type": "array",
            "items": {"type": "object", "required": ["name"], "properties": extra}
        })
    };
    json!({
        "type": "object",
        "required": ["total", "accepted", "rejected", "rejections", "io_errors"],
        "properties": {
            "total": {"type": "integer", "minimum": 0},
            "accepted": {"type": "integer", "minimum": 0},
            "rejected": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
            "rejections": named(json!({"name": {"type": "string"}, "reason": reasons()})),
            "io_errors": named(json!({"name": {"type": "string"}, "message": {"type": "string"}}))
        }
    })
}

fn render_meta() -> Value {
    json!({
        "type": "object",
        "required": ["kind", "width", "height", "v_max"],
        "properties": {
            "kind": {"enum": ["distance", "opacity", "composed-opacity", "mask", "feature-norm"]},
            "width": {"type": "integer", "minimum": 1},
            "height": {"type": "integer", "minimum": 1},
            "v_max": {"type": "number", "minimum": 0}
        }
    })
}

fn error() -> Value {
    json!({
        "type": "object",
        "required": ["error", "message"],
        "properties": {
            "error": {"type": "string"},
            "message": {"type": "string"},
            "current_revision": {"type": "integer"},
            "reason": reasons()
        }
    })
}

/// Schema by name, or `None` if unknown.
pub fn schema(name: &str) -> Option<Value> {
    let body = match name {
        "ellipse" => ellipse(),
        "gaussian" => gaussian(),
        "scene" => scene(),
        "stored_scene" => stored_scene(),
        "edit_op" => edit_op(),
        "blob_record" => blob_record(),
        "curate_summary" => curate_summary(),
        "render_meta" => render_meta(),
        "error" => error(),
        _ => return None,
    };
    let mut doc = json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": name
    });
    doc.as_object_mut()?.extend(body.as_object()?.clone());
    Some(doc)
}

/// `{name: schema}` for every known schema.
pub fn all_schemas() -> Value {
    Value::Object(
        SCHEMA_NAMES
            .iter()
            .filter_map(|n| Some((n.to_string(), schema(n)?)))
            .collect(),
    )
}
