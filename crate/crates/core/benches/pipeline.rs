//! Sequential vs rayon execution for the data-parallel stages: reranking,
//! per-step evidence bundles and dataset export.

#[path = "../tests/support/mod.rs"]
mod support;

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use stepverify_core::evidence::{
    rerank, DocumentChunk, EvidencePipeline, FixtureSearchProvider, HashedBagOfWords, SearchFixtureStore, SearchHit,
};
use stepverify_core::exec::Execution;
use stepverify_core::export::{render_kind, ExportKind, ExportOptions};
use stepverify_core::parser::Explanation;
use stepverify_core::prompt::PromptLibrary;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];
const VOCAB: &[&str] = &["harbor", "seal", "coast", "ocean", "river", "city", "water", "atlantic", "pacific", "rock"];

fn words(rng: &mut StdRng, n: usize) -> String {
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn bench_rerank(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(1);
    let embedder = HashedBagOfWords::default();
    let mut group = c.benchmark_group("rerank");
    for n in [16usize, 128, 1024] {
        let chunks: Vec<DocumentChunk> = (0..n)
            .map(|i| DocumentChunk {
                parent_url: format!("https://e.org/{i}"),
                parent_title: String::new(),
                retrieval_rank: (i % 10) as u32 + 1,
                chunk_index: i / 10,
                text: words(&mut rng, 512),
                token_count: 512,
            })
            .collect();
        group.throughput(Throughput::Elements(n as u64));
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &chunks, |b, chunks| {
                b.iter(|| rerank("harbor seal coast", black_box(chunks.clone()), &embedder, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_bundle(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(2);
    let store = SearchFixtureStore::in_memory();
    let steps: Vec<(String, String)> = (0..6).map(|i| (format!("q{i} {}", words(&mut rng, 6)), "a".into())).collect();
    for (q, _) in &steps {
        let hits: Vec<SearchHit> = (0..10)
            .map(|k| {
                let len = rng.gen_range(200..1500);
                SearchHit { url: format!("https://e.org/{q}/{k}"), title: String::new(), body: words(&mut rng, len) }
            })
            .collect();
        store.record(q, &hits).unwrap();
    }
    let explanation = Explanation::from_pairs(steps, Some("So the answer is yes."));
    let search = Arc::new(FixtureSearchProvider::new(Arc::new(store)));
    let mut group = c.benchmark_group("evidence_bundle");
    for (name, exec) in MODES {
        let pipeline =
            EvidencePipeline::new(search.clone(), Arc::new(HashedBagOfWords::default())).with_execution(exec);
        group.bench_function(name, |b| b.iter(|| pipeline.build_evidence_bundle(black_box(&explanation))));
    }
    group.finish();
}

fn bench_export(c: &mut Criterion) {
    let lib = PromptLibrary::builtin();
    let mut rng = StdRng::seed_from_u64(3);
    let items: Vec<_> = (0..5000).map(|id| support::random_item(&mut rng, id)).collect();
    let mut group = c.benchmark_group("export");
    group.throughput(Throughput::Elements(items.len() as u64));
    for kind in ExportKind::ALL {
        for (name, execution) in MODES {
            let opts = ExportOptions { execution, ..ExportOptions::default() };
            group.bench_function(BenchmarkId::new(name, kind.as_str()), |b| {
                b.iter(|| render_kind(kind, black_box(&items), &lib, &opts))
            });
        }
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_rerank, bench_bundle, bench_export
}
criterion_main!(benches);
