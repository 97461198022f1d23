//! Keeps docs/region-suite.schema.json in step with the region-suite loader.

mod common;

use std::path::Path;

use serde_json::{Map, Value};

use priming::dataset::parse_region_suite;

fn schema() -> Value {
    let text =
        std::fs::read_to_string(common::repo_root().join("docs/region-suite.schema.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn fixture() -> Value {
    let text =
        std::fs::read_to_string(common::fixtures().join("regions/filler_gap_object.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn loads(doc: &Value) -> bool {
    parse_region_suite(&doc.to_string(), Path::new("doc.json")).is_ok()
}

/// Each schema object level paired with a path to one instance of it.
fn levels(
    schema: &Value,
) -> Vec<(
    &Map<String, Value>,
    fn(&mut Value) -> &mut Map<String, Value>,
)> {
    vec![
        (schema.as_object().unwrap(), |d| d.as_object_mut().unwrap()),
        (schema["$defs"]["item"].as_object().unwrap(), |d| {
            d["items"][0].as_object_mut().unwrap()
        }),
        (schema["$defs"]["condition"].as_object().unwrap(), |d| {
            d["items"][0]["conditions"][0].as_object_mut().unwrap()
        }),
        (schema["$defs"]["region"].as_object().unwrap(), |d| {
            d["items"][0]["conditions"][0]["regions"][0]
                .as_object_mut()
                .unwrap()
        }),
    ]
}

#[test]
fn fixture_loads() {
    assert!(loads(&fixture()));
}

#[test]
fn required_fields_are_required_by_the_loader() {
    let schema = schema();
    for (level, at) in levels(&schema) {
        let props: Vec<&String> = level["properties"].as_object().unwrap().keys().collect();
        let required: Vec<&str> = level["required"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap())
            .collect();
        for key in props {
            let mut doc = fixture();
            at(&mut doc).remove(key.as_str());
            assert_eq!(
                loads(&doc),
                !required.contains(&key.as_str()),
                "dropping {key}"
            );
        }
    }
}

#[test]
fn unknown_fields_are_rejected_at_every_level() {
    let schema = schema();
    for (level, at) in levels(&schema) {
        assert_eq!(level["additionalProperties"], Value::Bool(false));
        let mut doc = fixture();
        at(&mut doc).insert("extra".into(), Value::from(1));
        assert!(!loads(&doc));
    }
}

#[test]
fn minimum_counts_match() {
    let mut doc = fixture();
    doc["items"][0]["conditions"]
        .as_array_mut()
        .unwrap()
        .truncate(1);
    assert!(!loads(&doc), "one condition");
    let mut doc = fixture();
    doc["items"].as_array_mut().unwrap().clear();
    assert!(!loads(&doc), "no items");
}
