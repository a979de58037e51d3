use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thinker_ddm::config::ProjectConfig;
use thinker_ddm::{PromptError, PromptLibrary};

const TEMPLATES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/templates");

#[test]
fn on_disk_templates_match_builtin() {
    let loaded = PromptLibrary::load(Path::new(TEMPLATES)).unwrap();
    let builtin = PromptLibrary::builtin();
    assert_eq!(loaded.ids().collect::<Vec<_>>(), builtin.ids().collect::<Vec<_>>());
    for t in builtin.templates() {
        assert_eq!(loaded.get(&t.template_id).unwrap().body, t.body);
    }
}

#[test]
fn custom_library_with_escapes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("manifest.toml"),
        "[[template]]\nid = \"greet\"\nfile = \"greet.txt\"\ntheory = \"none\"\nplaceholders = [\"name\"]\n",
    )
    .unwrap();
    fs::write(dir.path().join("greet.txt"), "Hello {name}, braces {{kept}}.").unwrap();
    let lib = PromptLibrary::load(dir.path()).unwrap();
    assert!(lib.list_strategies().is_empty());
    let vars = HashMap::from([("name".to_string(), "Ada".to_string())]);
    assert_eq!(lib.render("greet", &vars).unwrap(), "Hello Ada, braces {kept}.");
}

#[test]
fn declared_placeholders_must_match_body() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("manifest.toml"),
        "[[template]]\nid = \"t\"\nfile = \"t.txt\"\ntheory = \"none\"\nplaceholders = [\"a\"]\n",
    )
    .unwrap();
    fs::write(dir.path().join("t.txt"), "{a} and {b}").unwrap();
    assert!(matches!(PromptLibrary::load(dir.path()), Err(PromptError::PlaceholderMismatch { .. })));
}

#[test]
fn missing_template_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("manifest.toml"),
        "[[template]]\nid = \"t\"\nfile = \"gone.txt\"\ntheory = \"none\"\nplaceholders = []\n",
    )
    .unwrap();
    assert!(matches!(PromptLibrary::load(dir.path()), Err(PromptError::Io { .. })));
}

#[test]
fn config_resolves_relative_templates_dir() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    fs::write(
        &config,
        r#"{
            "schema_version": 1,
            "routing": {"prompt_ids": ["intent"]},
            "providers": {
                "baseline_a": {"producer_id": "a", "kind": "offline"},
                "baseline_b": {"producer_id": "b", "kind": "offline"},
                "prompt_default": {"kind": "offline"}
            },
            "templates_dir": "tpl"
        }"#,
    )
    .unwrap();
    let cfg = ProjectConfig::load(&config).unwrap();
    assert_eq!(cfg.templates_dir.unwrap(), dir.path().join("tpl"));
    assert!(ProjectConfig::load(&dir.path().join("absent.json")).is_err());
}
