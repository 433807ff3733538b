//! Files under `configs/` and `schemas/` stay in step with the code.

use depthmine_core::RunConfig;
use serde_json::Value;

const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.json");
const CONFIG_SCHEMA: &str = include_str!("../../../schemas/run_config.schema.json");
const BOX_SCHEMA: &str = include_str!("../../../schemas/box.schema.json");
const DETECTION_SCHEMA: &str = include_str!("../../../schemas/detection.schema.json");

#[test]
fn frozen_config_equals_defaults() {
    assert_eq!(RunConfig::from_json(DEFAULT_CONFIG).unwrap(), RunConfig::default());
}

fn keys(v: &Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    k.sort();
    k
}

/// Walks the schema alongside a serialized value and checks that every object
/// level documents exactly the fields the code emits. Config objects must also
/// reject unknown fields; records tolerate them.
fn check(schema: &Value, value: &Value, root: &Value, strict: bool, path: &str) {
    let schema = match schema.get("$ref").and_then(Value::as_str) {
        Some(r) => {
            let name = r.trim_start_matches("#/$defs/");
            &root["$defs"][name]
        }
        None => schema,
    };
    if let Some(items) = value.as_array() {
        for (i, v) in items.iter().enumerate() {
            check(&schema["items"], v, root, strict, &format!("{path}[{i}]"));
        }
    }
    if let Some(obj) = value.as_object() {
        let props = &schema["properties"];
        assert!(props.is_object(), "{path}: schema lacks properties");
        assert_eq!(keys(props), keys(value), "{path}: schema and code disagree on fields");
        assert_eq!(schema["additionalProperties"], !strict, "{path}: additionalProperties");
        for (k, v) in obj {
            check(&props[k], v, root, strict, &format!("{path}.{k}"));
        }
    }
}

#[test]
fn config_schema_matches_fields() {
    let schema: Value = serde_json::from_str(CONFIG_SCHEMA).unwrap();
    let value = serde_json::to_value(RunConfig::default()).unwrap();
    check(&schema, &value, &schema, true, "$");
}

#[test]
fn record_schemas_match_fields() {
    let b = depthmine_core::Box3D::new([1.0, 2.0, 0.5], [1.8, 4.2, 1.5], 0.3, [0.5, -0.1], 2, 1).unwrap();
    let d = depthmine_core::Detection::new(b, 0.9, 0.8, 0.7).unwrap();
    let box_schema: Value = serde_json::from_str(BOX_SCHEMA).unwrap();
    let det_schema: Value = serde_json::from_str(DETECTION_SCHEMA).unwrap();
    let mut bv = serde_json::to_value(b).unwrap();
    let mut dv = serde_json::to_value(d).unwrap();
    // The optional frame key is part of the record format.
    bv["frame"] = 0.into();
    dv["frame"] = 0.into();
    check(&box_schema, &bv, &box_schema, false, "box");
    check(&det_schema, &dv, &det_schema, false, "detection");
}
