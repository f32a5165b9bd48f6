//! Sequential vs. parallel item execution over the COPA fixture.
//!
//! `overlap` is pure CPU work (prompt assembly plus the overlap mock);
//! `latency` adds a fixed sleep per call to stand in for a remote model.

use std::hint::black_box;
use std::path::PathBuf;
use std::time::Duration;

use care_ca::corpus::{dataset_path_hint, load_dataset, DatasetDescriptor, DatasetName};
use care_ca::counterfactual::TemplateRegistry;
use care_ca::evaluation::{evaluate_items, EvalOptions, Pipeline, PipelineConfig};
use care_ca::exec::ExecMode;
use care_ca::knowledge::SnapshotStore;
use care_ca::provider::{MockOverlap, Provider, ProviderError};
use care_ca::PromptPackage;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

struct Slow(Duration);

impl Provider for Slow {
    fn id(&self) -> &str {
        "slow-overlap"
    }

    fn respond(&self, pkg: &PromptPackage) -> Result<String, ProviderError> {
        std::thread::sleep(self.0);
        MockOverlap.respond(pkg)
    }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn bench(c: &mut Criterion) {
    let desc = DatasetDescriptor::new(DatasetName::Copa, dataset_path_hint(DatasetName::Copa, &fixture("")));
    let items = load_dataset(&desc).unwrap();
    let store = SnapshotStore::open(fixture("snapshot.tsv")).unwrap();
    let templates = TemplateRegistry::load(fixture("templates.tsv")).unwrap();
    let pipeline = Pipeline {
        store: Some(&store),
        templates: &templates,
        rewriter: None,
        config: PipelineConfig::default(),
    };
    let slow = Slow(Duration::from_millis(2));
    let providers: [(&str, &dyn Provider); 2] = [("overlap", &MockOverlap), ("latency", &slow)];

    let mut group = c.benchmark_group("evaluate_items");
    group.sample_size(10);
    for (name, provider) in providers {
        for mode in [ExecMode::Sequential, ExecMode::Parallel] {
            let opts = EvalOptions {
                runs: 1,
                mode,
                max_concurrency: 8,
                ..Default::default()
            };
            group.bench_with_input(BenchmarkId::new(name, format!("{mode:?}")), &opts, |b, opts| {
                b.iter(|| black_box(evaluate_items(DatasetName::Copa, &items, provider, &pipeline, opts).unwrap()))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
