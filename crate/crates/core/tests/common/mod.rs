#![allow(dead_code)]

use std::path::PathBuf;

use care_ca::corpus::{load_dataset, CausalItem, DatasetDescriptor, DatasetName};
use care_ca::counterfactual::TemplateRegistry;
use care_ca::evaluation::{Pipeline, PipelineConfig};
use care_ca::knowledge::SnapshotStore;
use care_ca::prompting::AblationFlags;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn descriptor(name: DatasetName) -> DatasetDescriptor {
    DatasetDescriptor {
        name,
        path: care_ca::corpus::dataset_path_hint(name, &fixture("")),
    }
}

pub fn items(name: DatasetName) -> Vec<CausalItem> {
    load_dataset(&descriptor(name)).expect("fixture loads")
}

pub fn store() -> SnapshotStore {
    SnapshotStore::open(fixture("snapshot.tsv")).expect("snapshot loads")
}

pub fn templates() -> TemplateRegistry {
    TemplateRegistry::load(fixture("templates.tsv")).expect("templates load")
}

pub fn pipeline<'a>(
    store: &'a SnapshotStore,
    templates: &'a TemplateRegistry,
    flags: AblationFlags,
) -> Pipeline<'a> {
    Pipeline {
        store: Some(store),
        templates,
        rewriter: None,
        config: PipelineConfig {
            flags,
            ..Default::default()
        },
    }
}

/// Compares `actual` with a committed golden file. Set `CARE_CA_BLESS=1`
/// to rewrite the file instead.
pub fn assert_golden(name: &str, actual: &str) {
    let path = fixture("golden").join(name);
    if std::env::var_os("CARE_CA_BLESS").is_some() {
        std::fs::write(&path, actual).expect("write golden");
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e} (run with CARE_CA_BLESS=1 to create)", path.display()));
    assert_eq!(actual, expected, "golden mismatch for {name}");
}
