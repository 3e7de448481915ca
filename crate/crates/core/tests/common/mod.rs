#![allow(dead_code)]

use std::path::PathBuf;

use exoar_core::domain::EditAction;
use exoar_core::gateway::{FixtureBackend, GenerationConfig};
use exoar_core::session::{edits_by_step, run_scripted, Dataset, Engine, PriceTable, Review, Session, SessionStore};

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub struct Fixture {
    pub profession: &'static str,
    pub awt: Vec<u8>,
    pub backend: FixtureBackend,
    pub edits: [Vec<EditAction>; 4],
    pub prices: PriceTable,
}

pub fn profession(name: &str) -> &'static str {
    match name {
        "bookkeeper" => "Bookkeeper",
        "business_advisor" => "Self-employed business advisor",
        _ => "Academic staff",
    }
}

pub fn load(name: &str) -> Fixture {
    let dir = fixture_dir(name);
    Fixture {
        profession: profession(name),
        awt: std::fs::read(dir.join("awt.csv")).unwrap(),
        backend: FixtureBackend::open(dir.join("llm")).unwrap(),
        edits: edits_by_step(&std::fs::read_to_string(dir.join("edits.txt")).unwrap()).unwrap(),
        prices: PriceTable::from_toml(&std::fs::read_to_string(dir.join("prices.toml")).unwrap()).unwrap(),
    }
}

/// Runs a fixture through an engine backed by a fresh store.
pub fn run(name: &str) -> (tempfile::TempDir, Engine, Session, Vec<Review>) {
    let fx = load(name);
    let dir = tempfile::tempdir().unwrap();
    let engine = Engine::new(SessionStore::open(dir.path()).unwrap());
    let (session, _) = engine
        .create_session(fx.profession, &fx.awt, "awt.csv", GenerationConfig::default(), Some(fx.prices.clone()))
        .unwrap();
    let reviews = run_scripted(&engine, &session.id, &fx.backend, fx.edits).unwrap();
    let session = engine.session(&session.id).unwrap();
    (dir, engine, session, reviews)
}

pub fn dataset(name: &str) -> Dataset {
    Dataset::from_bytes(&load(name).awt).unwrap()
}
